"""Sparse multivariate polynomials: the compile targets and the evaluation
oracle the compilers are verified against."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["MultiPoly", "eval_poly", "parse_poly_file", "format_poly_file", "random_poly"]


@dataclass(frozen=True)
class MultiPoly:
    """Multi-index -> coefficient map over d variables.

    Zero coefficients are dropped on construction; total_degree is the max
    1-norm of stored multi-indices (0 for the empty/zero polynomial).
    """

    dim: int
    terms: dict

    def __post_init__(self):
        clean = {}
        for alpha, coef in self.terms.items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != self.dim:
                raise ValueError(f"multi-index {alpha} has length != dim {self.dim}")
            if any(a < 0 for a in alpha):
                raise ValueError(f"negative exponent in multi-index {alpha}")
            coef = float(coef)
            if coef != 0.0:
                clean[alpha] = clean.get(alpha, 0.0) + coef
        object.__setattr__(self, "terms", {a: c for a, c in clean.items() if c != 0.0})

    @property
    def total_degree(self) -> int:
        if not self.terms:
            return 0
        return max(sum(a) for a in self.terms)

    def __add__(self, other: "MultiPoly") -> "MultiPoly":
        if self.dim != other.dim:
            raise ValueError("dimension mismatch in polynomial addition")
        merged = dict(self.terms)
        for a, c in other.terms.items():
            merged[a] = merged.get(a, 0.0) + c
        return MultiPoly(self.dim, merged)

    def scale(self, c: float) -> "MultiPoly":
        return MultiPoly(self.dim, {a: c * v for a, v in self.terms.items()})

    @staticmethod
    def univariate(coeffs) -> "MultiPoly":
        """Build a d=1 polynomial from coefficients ``a_0, a_1, ..., a_k``."""
        return MultiPoly(1, {(k,): c for k, c in enumerate(coeffs)})

    def univariate_coeffs(self) -> np.ndarray:
        if self.dim != 1:
            raise ValueError("not a univariate polynomial")
        out = np.zeros(self.total_degree + 1)
        for (k,), c in self.terms.items():
            out[k] = c
        return out


def eval_poly(poly: MultiPoly, x) -> float:
    """Direct term-by-term evaluation sum a_alpha prod x_j**alpha_j.

    Deliberately Horner-free so it can serve as an independent oracle for
    the network compilers.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != poly.dim:
        raise ValueError(f"point has dim {x.shape[0]}, polynomial has dim {poly.dim}")
    total = 0.0
    for alpha, coef in poly.terms.items():
        term = coef
        for xj, aj in zip(x, alpha):
            if aj:
                term *= xj ** aj
        total += term
    return total


def random_poly(rng, dim: int, degree: int, density: float = 1.0) -> MultiPoly:
    """Random polynomial of exact total degree ``degree`` with N(0,1)
    coefficients; ``density < 1`` drops that fraction of lower terms."""
    terms = {}
    for alpha in _multi_indices(dim, degree):
        if sum(alpha) < degree and rng.uniform() > density:
            continue
        terms[alpha] = rng.standard_normal()
    top = [a for a in terms if sum(a) == degree]
    if not top:
        alpha = tuple(degree if j == 0 else 0 for j in range(dim))
        terms[alpha] = rng.standard_normal()
    for a in top:
        while terms[a] == 0.0:
            terms[a] = rng.standard_normal()
    return MultiPoly(dim, terms)


def _multi_indices(dim: int, max_degree: int):
    """All alpha in N_0^dim with |alpha|_1 <= max_degree, lexicographic."""
    if dim == 0:
        yield ()
        return
    for head in range(max_degree + 1):
        for tail in _multi_indices(dim - 1, max_degree - head):
            yield (head,) + tail


def parse_poly_file(text: str) -> MultiPoly:
    """Polynomial text format: one term per line, ``alpha_1 ... alpha_d coef``;
    blank lines and lines starting with '#' are skipped."""
    rows = []
    for ln_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 2:
            raise ValueError(f"line {ln_no}: need at least one exponent and a coefficient")
        try:
            alpha = tuple(int(v) for v in parts[:-1])
            coef = float(parts[-1])
        except ValueError as exc:
            raise ValueError(f"line {ln_no}: {exc}") from exc
        rows.append((alpha, coef))
    if not rows:
        raise ValueError("empty polynomial file")
    dim = len(rows[0][0])
    if any(len(a) != dim for a, _ in rows):
        raise ValueError("inconsistent number of exponents across lines")
    terms = {}
    for alpha, coef in rows:
        terms[alpha] = terms.get(alpha, 0.0) + coef
    return MultiPoly(dim, terms)


def format_poly_file(poly: MultiPoly) -> str:
    lines = [
        " ".join(str(a) for a in alpha) + f" {repr(coef)}"
        for alpha, coef in sorted(poly.terms.items())
    ]
    return "\n".join(lines) + "\n"
