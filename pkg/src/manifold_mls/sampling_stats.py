"""Sampling-quality measures for point sets: separation radius, fill
distance, quasi-uniformity ratio and the packing (density) bound."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .cloud import as_point, as_points
from .errors import ValidationError

COINCIDENT_TOL = 1e-12


@dataclass(frozen=True)
class SamplingStats:
    fill_distance_estimate: float
    separation_radius: float
    quasi_uniform_constant: float
    sample_count: int


def _pairwise_min_brute(pts):
    best = np.inf
    for i in range(len(pts) - 1):
        dist = np.sqrt(((pts[i + 1:] - pts[i]) ** 2).sum(axis=1))
        best = min(best, dist.min())
    return best


def separation_radius(cloud, brute_force: bool = False) -> float:
    """Half the smallest pairwise distance of ``cloud``."""
    pts = as_points(cloud)
    if len(pts) < 2:
        raise ValidationError("insufficient points: separation radius needs at least 2")
    if brute_force:
        dmin = _pairwise_min_brute(pts)
    else:
        dist, _ = cKDTree(pts).query(pts, k=2)
        dmin = dist[:, 1].min()
    if dmin <= COINCIDENT_TOL:
        raise ValidationError(f"coincident samples (min pairwise distance {dmin:.3g})")
    return 0.5 * float(dmin)


def fill_distance_estimate(cloud, reference, brute_force: bool = False) -> float:
    """Largest distance from a ``reference`` point to its nearest ``cloud`` point.

    ``reference`` should densely sample the domain; the result is then a
    lower bound on the true fill distance that tightens as the reference
    gets denser.
    """
    pts = as_points(cloud)
    ref = as_points(reference, dim=pts.shape[1])
    if len(pts) == 0 or len(ref) == 0:
        raise ValidationError("fill distance needs a nonempty cloud and reference")
    if brute_force:
        worst = 0.0
        for x in ref:
            worst = max(worst, np.sqrt(((pts - x) ** 2).sum(axis=1)).min())
        return float(worst)
    dist, _ = cKDTree(pts).query(ref, k=1)
    return float(dist.max())


def density_rho(delta: float, d: int) -> float:
    """Density constant from the packing argument: (3/delta)^d, or 3^d once delta >= 2."""
    if delta <= 0:
        raise ValidationError("normalized separation delta must be positive")
    return (3.0 / delta) ** d if delta < 2 else 3.0 ** d


def density_bound_check(cloud, center, q: float, h: float, delta: float, d: int) -> bool:
    """Check #(cloud within closed ball of radius q*h about center) <= rho * q^d.

    ``delta`` is the normalized separation (min pairwise distance / h) and
    ``d`` the intrinsic dimension of the sampled domain.
    """
    if q < 1:
        raise ValidationError("density bound is only stated for q >= 1")
    if h <= 0:
        raise ValidationError("h must be positive")
    pts = as_points(cloud)
    c = as_point(center, dim=pts.shape[1])
    count = int((np.sqrt(((pts - c) ** 2).sum(axis=1)) <= q * h).sum())
    return count <= density_rho(delta, d) * q ** d


def sampling_stats(cloud, reference) -> SamplingStats:
    fill = fill_distance_estimate(cloud, reference)
    sep = separation_radius(cloud)
    return SamplingStats(
        fill_distance_estimate=fill,
        separation_radius=sep,
        quasi_uniform_constant=fill / sep,
        sample_count=len(as_points(cloud)),
    )
