"""Compile multivariate polynomials into RePU networks that evaluate them
exactly, via two architectures: a Horner-style product ladder (deep, narrow)
and a powered-affine-forms expansion (shallow, wide).

Everything rests on one-hidden-layer building blocks made of mirrored node
pairs ``sigma_p(u + t), sigma_p(-u - t)``: since
``sigma_p(v) + (-1)^p sigma_p(-v) = v**p`` for every real v, a linear
combination of p such pairs reproduces any polynomial of degree <= p in u on
all of R, by solving a small Vandermonde system in the knots t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .network import ArchitectureStats, Layer, MixedRepuNetwork, architecture_stats, forward
from .polynomials import MultiPoly, eval_poly

__all__ = [
    "CompileReport",
    "CompileSizeError",
    "IllConditionedBasisError",
    "compile_shallow_univariate",
    "compile_mul_gadget",
    "compile_horner",
    "compile_mhaskar",
    "compile_poly",
    "horner_predicted_stats",
    "mhaskar_predicted_stats",
]

_NODE_BUDGET = 500_000
_VERIFY_POINTS = 200
_VERIFY_SEED = 20240901
_COND_LIMIT = 1e10
_MAX_RESAMPLE = 20
# compiled nets are exact in real arithmetic on all of R^d; roundoff is
# engineered to stay near machine level for inputs up to this magnitude
_COMPILE_BOX = 10.0


class CompileSizeError(RuntimeError):
    """Predicted construction size exceeds the allocation budget."""


class IllConditionedBasisError(RuntimeError):
    """Direction sampling kept producing near-singular basis systems."""


@dataclass(frozen=True)
class CompileReport:
    architecture: str
    stats: ArchitectureStats
    predicted: ArchitectureStats | None
    max_abs_residual: float
    max_rel_residual: float
    verify_seed: int = _VERIFY_SEED
    verify_points: int = _VERIFY_POINTS
    details: dict = field(default_factory=dict)


def horner_predicted_stats(d: int, N: int, p: int) -> ArchitectureStats | None:
    """Size formulas of the deep architecture; undefined for N <= 1."""
    if N <= 1:
        return None
    grow = 2 * N**d - N ** (d - 1) - N
    width = 12 * p * N ** (d - 1) + 6 * p * (N ** (d - 1) - N) // (N - 1)
    neurons = (6 * p + 2) * grow + 2 * p * grow // (N - 1)
    size = (30 * p + 2) * grow + (2 * p + 1) * grow // (N - 1)
    return ArchitectureStats(depth=2 * N - 1, width=width, neurons=neurons, size=size)


def mhaskar_predicted_stats(d: int, N: int, p: int) -> ArchitectureStats | None:
    if N <= 1:
        return None
    L = math.ceil(math.log(N, p))
    binom = math.comb(N + d, d)
    return ArchitectureStats(
        depth=L, width=2 * binom, neurons=2 * L * binom, size=2 * (L + d + 1) * binom
    )


# ---------------------------------------------------------------------------
# one-hidden-layer blocks
# ---------------------------------------------------------------------------


def _pair_block_coeffs(coeffs: np.ndarray, p: int):
    """Knot weights (u_1..u_p) and constant u_0 so that
    ``sum_i u_i (x + t_i)**p + u_0`` equals the polynomial with the given
    coefficients (degree <= p), using knots t = 1..p."""
    a = np.zeros(p + 1)
    a[: len(coeffs)] = coeffs
    t = np.arange(1, p + 1, dtype=float)
    # row for degree m: sum_i u_i t_i^(p-m) = a_m / C(p, m),  m = p..1
    M = np.empty((p, p))
    rhs = np.empty(p)
    for r, m in enumerate(range(p, 0, -1)):
        M[r] = t ** (p - m)
        rhs[r] = a[m] / math.comb(p, m)
    u = np.linalg.solve(M, rhs)
    u0 = a[0] - float(u @ t**p)
    return u, u0


class _LayerBuilder:
    """Accumulates node rows for one hidden layer over a known input width."""

    def __init__(self, d_in: int):
        self.d_in = d_in
        self.rows: list = []
        self.biases: list = []
        self.powers: list = []

    def add_node(self, row, bias: float, power: int) -> int:
        self.rows.append(np.asarray(row, dtype=float))
        self.biases.append(float(bias))
        self.powers.append(int(power))
        return len(self.rows) - 1

    @property
    def width(self) -> int:
        return len(self.rows)

    def poly_block(self, u_row, u_bias: float, coeffs, p: int):
        """Nodes for a degree <= p polynomial of the affine input u; returns
        (node indices, node weights, constant) such that the affine combo of
        this layer's outputs reproduces the polynomial everywhere."""
        coeffs = np.asarray(coeffs, dtype=float)
        deg = int(np.max(np.nonzero(coeffs)[0])) if np.any(coeffs) else 0
        if deg > p:
            raise ValueError(f"block degree {deg} exceeds activation power {p}")
        u_row = np.asarray(u_row, dtype=float)
        if deg == 0:
            idx = self.add_node(np.zeros(self.d_in), 1.0, p)
            return [idx], np.array([float(coeffs[0]) if coeffs.size else 0.0]), 0.0
        if deg == p and not np.any(coeffs[:p]):
            i1 = self.add_node(u_row, u_bias, p)
            i2 = self.add_node(-u_row, -u_bias, p)
            c = float(coeffs[p])
            return [i1, i2], np.array([c, c * (-1.0) ** p]), 0.0
        u, u0 = _pair_block_coeffs(coeffs, p)
        idx, w = [], []
        for i in range(p):
            t = float(i + 1)
            idx.append(self.add_node(u_row, u_bias + t, p))
            idx.append(self.add_node(-u_row, -(u_bias + t), p))
            w.extend([u[i], u[i] * (-1.0) ** p])
        return idx, np.array(w), u0

    def transport(self, u_row, u_bias: float, p: int, bound: float = 1.0):
        """Identity block; ``bound`` (a magnitude estimate for u) picks a
        power-of-two pre-scaling that keeps the powered nodes O(1), turning
        the quadratic roundoff of the mirrored pairs into linear roundoff."""
        nu = 2.0 ** -max(0, math.ceil(math.log2(max(bound, 1.0))))
        idx, w, c = self.poly_block(
            nu * np.asarray(u_row, float), nu * u_bias, [0.0, 1.0 / nu], p
        )
        return idx, w, c

    def square_block(self, u_row, u_bias: float, p: int):
        return self.poly_block(u_row, u_bias, [0.0, 0.0, 1.0], p)

    def mult_block(self, a_row, a_bias, b_row, b_bias, p: int):
        """Product a*b via the quartering identity (a+b)^2 - (a-b)^2 = 4ab."""
        a_row = np.asarray(a_row, float)
        b_row = np.asarray(b_row, float)
        i_s, w_s, c_s = self.square_block(a_row + b_row, a_bias + b_bias, p)
        i_t, w_t, c_t = self.square_block(a_row - b_row, a_bias - b_bias, p)
        return i_s + i_t, np.concatenate([0.25 * w_s, -0.25 * w_t]), 0.25 * (c_s - c_t)

    def finish(self) -> Layer:
        if not self.rows:
            raise ValueError("empty hidden layer")
        return Layer(np.vstack(self.rows), np.array(self.biases), np.array(self.powers))


def _combo_to_full(width: int, idx, w, bias: float):
    row = np.zeros(width)
    row[np.asarray(idx, int)] = w
    return row, float(bias)


def _verify(net: MixedRepuNetwork, poly: MultiPoly, lo: float = -2.0, hi: float = 2.0):
    rng = np.random.default_rng(_VERIFY_SEED)
    X = rng.uniform(lo, hi, size=(_VERIFY_POINTS, poly.dim))
    abs_res = 0.0
    rel_res = 0.0
    for x in X:
        want = eval_poly(poly, x)
        got = float(forward(net, x)[0])
        abs_res = max(abs_res, abs(got - want))
        rel_res = max(rel_res, abs(got - want) / (1.0 + abs(want)))
    return abs_res, rel_res


# ---------------------------------------------------------------------------
# shallow compilers (degree <= p, and the N <= 1 degenerate route)
# ---------------------------------------------------------------------------


def compile_shallow_univariate(coeffs, p: int) -> MixedRepuNetwork:
    """One-hidden-layer net computing ``sum_k coeffs[k] x**k`` for degree <= p.

    Node counts follow the one-layer monomial lemma: 1 node for a constant,
    2 nodes for the pure power x**p, at most 2p nodes otherwise.
    """
    if p < 2:
        raise ValueError("shallow compilation needs p >= 2")
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.size == 0:
        coeffs = np.zeros(1)
    deg = int(np.max(np.nonzero(coeffs)[0])) if np.any(coeffs) else 0
    if deg > p:
        raise ValueError(f"degree {deg} exceeds p={p}; use a deep compiler")
    lb = _LayerBuilder(1)
    idx, w, c = lb.poly_block(np.ones(1), 0.0, coeffs, p)
    hidden = lb.finish()
    out_row, out_bias = _combo_to_full(lb.width, idx, w, c)
    out = Layer(out_row.reshape(1, -1), np.array([out_bias]), np.array([0]))
    return MixedRepuNetwork((hidden, out))


def compile_mul_gadget(p: int) -> MixedRepuNetwork:
    """One-hidden-layer net mapping (x, y) to x*y, exact on all of R^2."""
    if p < 2:
        raise ValueError("multiplication gadget needs p >= 2")
    lb = _LayerBuilder(2)
    idx, w, c = lb.mult_block(np.array([1.0, 0.0]), 0.0, np.array([0.0, 1.0]), 0.0, p)
    hidden = lb.finish()
    out_row, out_bias = _combo_to_full(lb.width, idx, w, c)
    out = Layer(out_row.reshape(1, -1), np.array([out_bias]), np.array([0]))
    return MixedRepuNetwork((hidden, out))


def _compile_shallow_multipoly(poly: MultiPoly, p: int) -> MixedRepuNetwork:
    """Degenerate N <= 1 route: transport the affine function through one
    hidden layer (constants get the single fixed node)."""
    d = poly.dim
    a0 = poly.terms.get(tuple([0] * d), 0.0)
    lin = np.zeros(d)
    for alpha, coef in poly.terms.items():
        s = sum(alpha)
        if s == 1:
            lin[alpha.index(1)] = coef
        elif s > 1:
            raise ValueError("shallow multivariate route is for total degree <= 1")
    lb = _LayerBuilder(d)
    if np.any(lin):
        idx, w, c = lb.poly_block(lin, 0.0, [a0, 1.0], p)
    else:
        idx, w, c = lb.poly_block(np.zeros(d), 0.0, [a0], p)
    hidden = lb.finish()
    out_row, out_bias = _combo_to_full(lb.width, idx, w, c)
    out = Layer(out_row.reshape(1, -1), np.array([out_bias]), np.array([0]))
    return MixedRepuNetwork((hidden, out))


# ---------------------------------------------------------------------------
# deep architecture: Horner-style product ladder
# ---------------------------------------------------------------------------


def _needed_monomials(poly: MultiPoly):
    """Monomials per degree that must be materialised: the support plus the
    ancestor chain alpha -> alpha - e_{first nonzero} down to degree 2."""
    N = poly.total_degree
    needed = {m: set() for m in range(2, N + 1)}
    for alpha in poly.terms:
        if sum(alpha) >= 2:
            needed[sum(alpha)].add(alpha)
    for m in range(N, 2, -1):
        for alpha in needed[m]:
            j = next(i for i, a in enumerate(alpha) if a)
            parent = tuple(a - (1 if i == j else 0) for i, a in enumerate(alpha))
            needed[m - 1].add(parent)
    return {m: sorted(s) for m, s in needed.items()}


def compile_horner(poly: MultiPoly, p: int):
    """Deep exact compilation: one multiplication rung per polynomial degree,
    with carry rungs in between, 2N-1 hidden layers in total.

    Rung 2m-3 multiplies each needed degree-m monomial out of a variable and
    its degree-(m-1) ancestor; carry rungs transport the variables, the
    pending monomials and the running sum.  All blocks are globally exact,
    so the compiled net agrees with the polynomial on all of R^d.
    """
    if p < 2:
        raise ValueError("compilation needs p >= 2")
    d = poly.dim
    N = poly.total_degree
    predicted = horner_predicted_stats(d, N, p)
    if N <= 1:
        net = (
            compile_shallow_univariate(poly.univariate_coeffs(), p)
            if d == 1
            else _compile_shallow_multipoly(poly, p)
        )
        abs_res, rel_res = _verify(net, poly)
        return net, CompileReport(
            "horner", architecture_stats(net), None, abs_res, rel_res,
            details={"note": "total degree <= 1 routed to shallow block"},
        )
    if predicted.neurons > _NODE_BUDGET:
        raise CompileSizeError(
            f"predicted {predicted.neurons} neurons exceeds budget {_NODE_BUDGET}"
        )

    needed = _needed_monomials(poly)
    # variables are carried pre-scaled by 1/sigma so every gadget works on
    # O(1) quantities; the scale re-enters through the running-sum weights
    sigma = 2.0 ** math.ceil(math.log2(_COMPILE_BOX))
    p_bound = sum(abs(c) * _COMPILE_BOX ** sum(a) for a, c in poly.terms.items()) + 1.0
    # running-sum seed: constant and linear terms are affine in the input
    P_row = np.zeros(d)
    P_bias = poly.terms.get(tuple([0] * d), 0.0)
    for alpha, coef in poly.terms.items():
        if sum(alpha) == 1:
            P_row[alpha.index(1)] += coef

    avail = {("x", j): (np.eye(d)[j] / sigma, 0.0) for j in range(d)}
    avail[("P",)] = (P_row, P_bias)

    layers = []
    width_in = d
    for hidden_idx in range(1, 2 * N):
        lb = _LayerBuilder(width_in)
        emits = {}
        if hidden_idx % 2 == 1 and hidden_idx <= 2 * N - 3:
            m_new = (hidden_idx + 3) // 2  # monomial degree produced here
            last_mult = hidden_idx == 2 * N - 3
            for alpha in needed[m_new]:
                j = next(i for i, a in enumerate(alpha) if a)
                parent = tuple(a - (1 if i == j else 0) for i, a in enumerate(alpha))
                prow, pbias = (
                    avail[("x", parent.index(1))] if m_new == 2 else avail[("mono", parent)]
                )
                xrow, xbias = avail[("x", j)]
                if m_new == 2 and parent == tuple(
                    1 if i == j else 0 for i in range(d)
                ):
                    idx, w, c = lb.square_block(xrow, xbias, p)
                else:
                    idx, w, c = lb.mult_block(xrow, xbias, prow, pbias, p)
                emits[("mono", alpha)] = (idx, w, c)
            if not last_mult:
                for j in range(d):
                    xrow, xbias = avail[("x", j)]
                    emits[("x", j)] = lb.transport(xrow, xbias, p)
            emits[("P",)] = lb.transport(*avail[("P",)], p, bound=p_bound)
        else:
            # carry rung: absorb freshly made monomials into the running sum
            prow, pbias = avail[("P",)]
            prow = prow.copy()
            m_prev = (hidden_idx + 2) // 2
            if hidden_idx % 2 == 0 and m_prev in needed:
                for alpha in needed[m_prev]:
                    coef = poly.terms.get(alpha, 0.0)
                    if coef:
                        mrow, mbias = avail[("mono", alpha)]
                        prow = prow + coef * sigma**m_prev * mrow
                        pbias = pbias + coef * sigma**m_prev * mbias
            emits[("P",)] = lb.transport(prow, pbias, p, bound=p_bound)
            if hidden_idx <= 2 * N - 4:
                for j in range(d):
                    emits[("x", j)] = lb.transport(*avail[("x", j)], p)
                if hidden_idx % 2 == 0 and m_prev in needed:
                    for alpha in needed[m_prev]:
                        emits[("mono", alpha)] = lb.transport(*avail[("mono", alpha)], p)
        layers.append(lb.finish())
        width_in = lb.width
        avail = {
            name: _combo_to_full(lb.width, idx, w, c) for name, (idx, w, c) in emits.items()
        }

    out_row, out_bias = avail[("P",)]
    layers.append(Layer(out_row.reshape(1, -1), np.array([out_bias]), np.array([0])))
    net = MixedRepuNetwork(tuple(layers))
    abs_res, rel_res = _verify(net, poly)
    return net, CompileReport("horner", architecture_stats(net), predicted, abs_res, rel_res)


# ---------------------------------------------------------------------------
# wide architecture: combination of powered affine forms
# ---------------------------------------------------------------------------


def _multi_indices_upto(dim: int, max_degree: int):
    if dim == 0:
        yield ()
        return
    for head in range(max_degree + 1):
        for tail in _multi_indices_upto(dim - 1, max_degree - head):
            yield (head,) + tail


def _form_coefficients(w: np.ndarray, b: float, M: int, alphas) -> np.ndarray:
    """Monomial coefficients of (w'x + b)**M listed along ``alphas``."""
    d = w.shape[0]
    col = np.empty(len(alphas))
    for r, alpha in enumerate(alphas):
        k = sum(alpha)
        coef = math.factorial(M) / (
            math.prod(math.factorial(a) for a in alpha) * math.factorial(M - k)
        )
        val = coef * b ** (M - k)
        for j in range(d):
            if alpha[j]:
                val *= w[j] ** alpha[j]
        col[r] = val
    return col


def compile_mhaskar(poly: MultiPoly, p: int, seed: int = 0):
    """Wide exact compilation as ``sum_k c_k (w_k' x + b_k)**M``.

    The power chains repeatedly take pure p-th powers in 2-node mirrored
    pairs, so the realised exponent is M = p**ceil(log_p N) rather than N
    and the basis needs binom(M+d, d) forms; depth matches the formula,
    neuron count matches it only at order level.  Directions are sampled
    uniformly on the unit sphere; the coefficient solve runs in the monomial
    basis with row/column equilibration, pivoted LU and two refinement steps,
    and resamples when the condition number exceeds 1e10.
    """
    if p < 2:
        raise ValueError("compilation needs p >= 2")
    d = poly.dim
    N = poly.total_degree
    predicted = mhaskar_predicted_stats(d, N, p)
    if N <= 1:
        net = (
            compile_shallow_univariate(poly.univariate_coeffs(), p)
            if d == 1
            else _compile_shallow_multipoly(poly, p)
        )
        abs_res, rel_res = _verify(net, poly)
        return net, CompileReport(
            "mhaskar", architecture_stats(net), None, abs_res, rel_res,
            details={"note": "total degree <= 1 routed to shallow block"},
        )

    L = math.ceil(math.log(N, p))
    # guard against float fuzz in log: smallest L with p**L >= N
    while p**L < N:
        L += 1
    while L > 1 and p ** (L - 1) >= N:
        L -= 1
    M = p**L
    alphas = sorted(_multi_indices_upto(d, M))
    K = len(alphas)  # = binom(M + d, d)
    if 2 * K * L > _NODE_BUDGET:
        raise CompileSizeError(f"predicted {2 * K * L} neurons exceeds budget {_NODE_BUDGET}")
    target = np.zeros(K)
    index_of = {alpha: r for r, alpha in enumerate(alphas)}
    for alpha, coef in poly.terms.items():
        target[index_of[alpha]] = coef

    rng = np.random.default_rng(seed)
    kappa = 2.0 ** math.ceil(math.log2(_COMPILE_BOX))
    cond = np.inf
    for attempt in range(_MAX_RESAMPLE + 1):
        wb = rng.standard_normal((K, d + 1))
        wb /= np.linalg.norm(wb, axis=1, keepdims=True)
        wb[:, :d] /= kappa  # keep |w'x + b| = O(1) over the compile box
        A = np.column_stack(
            [_form_coefficients(wb[k, :d], wb[k, d], M, alphas) for k in range(K)]
        )
        row_scale = 1.0 / np.maximum(np.max(np.abs(A), axis=1), 1e-300)
        As = A * row_scale[:, None]
        col_scale = 1.0 / np.maximum(np.max(np.abs(As), axis=0), 1e-300)
        As = As * col_scale[None, :]
        cond = np.linalg.cond(As)
        if cond <= _COND_LIMIT:
            break
    else:
        raise IllConditionedBasisError(
            f"no well-conditioned basis after {_MAX_RESAMPLE} resamples (cond={cond:.3e})"
        )
    ts = target * row_scale
    cs = np.linalg.solve(As, ts)
    for _ in range(2):  # iterative refinement in the equilibrated system
        cs += np.linalg.solve(As, ts - As @ cs)
    c = cs * col_scale

    layers = []
    width_in = d
    pair_sign = (-1.0) ** p
    for level in range(L):
        rows, biases = [], []
        for k in range(K):
            if level == 0:
                u_row = np.zeros(d)
                u_row[:] = wb[k, :d]
                u_bias = wb[k, d]
            else:
                u_row = np.zeros(width_in)
                u_row[2 * k] = 1.0
                u_row[2 * k + 1] = pair_sign
                u_bias = 0.0
            rows.extend([u_row, -u_row])
            biases.extend([u_bias, -u_bias])
        powers = np.full(2 * K, p, dtype=int)
        layers.append(Layer(np.vstack(rows), np.array(biases), powers))
        width_in = 2 * K
    out_row = np.zeros(2 * K)
    out_row[0::2] = c
    out_row[1::2] = c * pair_sign
    layers.append(Layer(out_row.reshape(1, -1), np.zeros(1), np.array([0])))
    net = MixedRepuNetwork(tuple(layers))
    abs_res, rel_res = _verify(net, poly)
    return net, CompileReport(
        "mhaskar",
        architecture_stats(net),
        predicted,
        abs_res,
        rel_res,
        details={"condition_number": float(cond), "resamples": attempt, "forms": K, "power": M},
    )


def compile_poly(poly: MultiPoly, p: int, architecture: str = "horner", seed: int = 0):
    if architecture == "horner":
        return compile_horner(poly, p)
    if architecture == "mhaskar":
        return compile_mhaskar(poly, p, seed=seed)
    raise ValueError(f"unknown architecture {architecture!r}")
