"""Moving least-squares over flat d-dimensional domains.

A fit is the weighted least-squares polynomial of degree ``degree`` in the
scaled coordinates ``u = (x - center) / h``, with all D output coordinates
sharing one design matrix.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np

from .cloud import as_point, as_points
from .errors import EmptySupportError, UnisolvencyError, ValidationError
from .weights import WeightProfile

RANK_CUTOFF = 1e-10


@lru_cache(maxsize=None)
def monomial_exponents(d: int, degree: int) -> np.ndarray:
    """Exponents of all monomials of total degree <= ``degree`` in ``d`` variables.

    Graded lexicographic order: by total degree, then lexicographically
    with x_1 the most significant variable, e.g. for d=2, degree=2:
    1, x, y, x^2, xy, y^2.
    """
    rows = []
    for total in range(degree + 1):
        block = [a for a in itertools.product(range(total, -1, -1), repeat=d) if sum(a) == total]
        block.sort(reverse=True)
        rows.extend(block)
    out = np.array(rows, dtype=int).reshape(len(rows), d)
    out.setflags(write=False)
    return out


def basis_size(d: int, degree: int) -> int:
    return comb(d + degree, degree)


def vandermonde(u: np.ndarray, exponents: np.ndarray) -> np.ndarray:
    """Monomials evaluated at the points ``u`` (..., d) -> (..., M)."""
    out = np.ones(u.shape[:-1] + (exponents.shape[0],))
    for j in range(exponents.shape[1]):
        e = exponents[:, j]
        if e.max(initial=0) == 0:
            continue
        powers = u[..., j, None] ** np.arange(e.max() + 1)
        out *= powers[..., e]
    return out


@dataclass(frozen=True)
class VectorPolynomial:
    """Polynomial map R^d -> R^D stored in monomial basis over scaled inputs.

    ``coefficients[a, l]`` multiplies monomial ``exponents[a]`` of
    ``u = x / scale`` in output coordinate ``l``.
    """

    d: int
    D: int
    degree: int
    coefficients: np.ndarray
    scale: float

    @property
    def exponents(self) -> np.ndarray:
        return monomial_exponents(self.d, self.degree)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        u = np.atleast_2d(x).reshape(-1, self.d) / self.scale
        out = vandermonde(u, self.exponents) @ self.coefficients
        return out[0] if single else out

    def gradient(self, x) -> np.ndarray:
        """Jacobian (D, d) at a single point ``x``, per unit of unscaled input."""
        x = as_point(x, dim=self.d)
        u = x / self.scale
        exps = self.exponents
        jac = np.zeros((self.D, self.d))
        for j in range(self.d):
            e = exps[:, j]
            lowered = exps.copy()
            lowered[:, j] = np.maximum(e - 1, 0)
            dcol = e * np.prod(u[None, :] ** lowered, axis=1)
            jac[:, j] = dcol @ self.coefficients
        return jac / self.scale


@dataclass(frozen=True)
class MLSFit:
    polynomial: VectorPolynomial
    center: np.ndarray
    neighbor_indices: np.ndarray
    condition_estimate: float
    effective_weight_sum: float


def weighted_polyfit_batch(u, values, w, degree, cutoff=RANK_CUTOFF):
    """Batched weighted least-squares polynomial fits.

    ``u`` is (Q, m, d), ``values`` (Q, m, D), ``w`` (Q, m) with zeros for
    padding.  Each problem is solved through an SVD of its
    square-root-weighted design matrix.  Returns ``(coef, cond, ok)`` with
    ``coef`` (Q, M, D); ``ok`` is False where the smallest singular value
    falls below ``cutoff`` times the largest (those coefficients are NaN).
    """
    exps = monomial_exponents(u.shape[-1], degree)
    M = exps.shape[0]
    Q, m = w.shape
    if m < M:
        return (np.full((Q, M, values.shape[-1]), np.nan), np.full(Q, np.inf), np.zeros(Q, dtype=bool))
    sw = np.sqrt(w)[..., None]
    A = vandermonde(u, exps) * sw
    b = values * sw
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    top = s[:, 0]
    ok = (s[:, -1] > cutoff * top) & (top > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(ok, top / s[:, -1], np.inf)
        inv = np.where(ok[:, None], 1.0 / s, 0.0)
    coef = np.einsum("qji,qj,qjk->qik", Vt, inv, np.einsum("qlj,qlk->qjk", U, b))
    coef[~ok] = np.nan
    return coef, cond, ok


def weighted_polyfit(u, values, w, degree, cutoff=RANK_CUTOFF):
    """Solve min sum_i w_i |p(u_i) - values_i|^2 over degree-``degree`` polynomials.

    Returns ``(coefficients, condition)``; raises :class:`UnisolvencyError`
    when the weighted design matrix is numerically rank deficient.
    """
    M = basis_size(u.shape[1], degree)
    if u.shape[0] < M:
        raise UnisolvencyError(f"unisolvency failure: {u.shape[0]} weighted sites for {M} monomials")
    coef, cond, ok = weighted_polyfit_batch(u[None], values[None], w[None], degree, cutoff)
    if not ok[0]:
        raise UnisolvencyError(f"unisolvency failure: singular value ratio below cutoff {cutoff:g}")
    return coef[0], float(cond[0])


def mls_fit(sites, values, center, degree: int, profile: WeightProfile, h: float) -> MLSFit:
    """Weighted least-squares fit about ``center`` with weights theta_h(|x_i - center|)."""
    if degree < 0:
        raise ValidationError("degree must be nonnegative")
    if not h > 0:
        raise ValidationError("h must be positive")
    X = as_points(sites)
    F = np.asarray(values, dtype=float)
    F = F.reshape(len(X), -1)
    c = as_point(center, dim=X.shape[1])
    w = profile(np.sqrt(((X - c) ** 2).sum(axis=1)), h)
    active = np.flatnonzero(w > 0)
    if active.size == 0:
        raise EmptySupportError("empty support: no site carries positive weight")
    wsum = float(w[active].sum())
    coef, cond = weighted_polyfit((X[active] - c) / h, F[active], w[active] / wsum, degree)
    poly = VectorPolynomial(d=X.shape[1], D=F.shape[1], degree=degree, coefficients=coef, scale=float(h))
    return MLSFit(poly, c, active, cond, wsum)


def mls_eval(fit: MLSFit, offset=None) -> np.ndarray:
    """Value of the local polynomial at ``center + offset`` (offset in input units)."""
    if offset is None:
        return fit.polynomial.coefficients[0].copy()
    return fit.polynomial(offset)


def mls_directional_derivative(fit: MLSFit, direction, offset=None) -> np.ndarray:
    """Derivative of the local polynomial along ``direction`` at ``center + offset``."""
    v = as_point(direction, dim=fit.polynomial.d)
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ValidationError("zero direction")
    if offset is None:
        offset = np.zeros(fit.polynomial.d)
    return fit.polynomial.gradient(offset) @ (v / norm)


def mls_approximant(sites, values, degree: int, profile: WeightProfile, h: float):
    """Return callables ``(value, derivative)`` of the global MLS approximant s(x) = pi*(0 | x)."""

    def value(x):
        return mls_eval(mls_fit(sites, values, x, degree, profile, h))

    def derivative(x, direction):
        return mls_directional_derivative(mls_fit(sites, values, x, degree, profile, h), direction)

    return value, derivative
