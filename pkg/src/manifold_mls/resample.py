"""Densification of the reconstructed manifold.

Every input sample contributes a K^d grid laid out on the tangent frame
found for it; each grid node is projected back onto the manifold.  The
grid half-width sigma defaults to the heuristic of :func:`estimate_sigma`.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy.spatial import cKDTree

from .cloud import PointCloud, as_points
from .errors import ManifoldMLSError, ValidationError
from .mmls import OK, ManifoldMLS, MMLSConfig, status_error

log = logging.getLogger(__name__)

SIGMA_DRAWS = 100


@dataclass(frozen=True)
class ResampleConfig:
    mmls: MMLSConfig
    K: int = 3
    sigma: float | None = None
    seed: int = 0
    skip_failures: bool = False

    def __post_init__(self):
        if self.K < 1:
            raise ValidationError("enlarging factor K must be >= 1")
        if self.sigma is not None and not self.sigma > 0:
            raise ValidationError("sigma must be positive")

    @property
    def d(self) -> int:
        return self.mmls.d

    @property
    def k(self) -> int:
        return self.mmls.k


class ResampleError(ManifoldMLSError):
    def __init__(self, source: int, node: int, cause: Exception):
        super().__init__(f"projection failed for sample {source}, grid node {node}: {cause}")
        self.source, self.node, self.cause = source, node, cause


def estimate_sigma(cloud, d: int, k: int, seed: int, draws: int = SIGMA_DRAWS) -> float:
    """Grid half-width heuristic.

    For ``draws`` random samples (with replacement) take the radius of the
    smallest closed ball about the sample holding C(k + d, k) samples, the
    center included; return the largest such radius.
    """
    pts = as_points(cloud)
    target = comb(k + d, k)
    if len(pts) < target:
        raise ValidationError(f"need at least C({k}+{d},{k}) = {target} samples, got {len(pts)}")
    rng = np.random.default_rng(seed)
    picks = rng.integers(len(pts), size=draws)
    dist, _ = cKDTree(pts).query(pts[picks], k=target)
    dist = dist.reshape(draws, target)
    return float(dist[:, -1].max())


def grid_nodes(K: int, d: int, sigma: float) -> np.ndarray:
    """K^d nodes of a uniform grid on [-sigma, sigma]^d, endpoints included.

    Row-major over axes (last axis fastest); K = 1 gives the origin.
    """
    axis = np.zeros(1) if K == 1 else np.linspace(-sigma, sigma, K)
    return np.array(list(itertools.product(axis, repeat=d)), dtype=float).reshape(K ** d, d)


def resample(cloud, config: ResampleConfig, operator: ManifoldMLS | None = None) -> PointCloud:
    """Project a K^d tangent grid around every sample onto the manifold.

    Output point ``i * K**d + j`` comes from grid node ``j`` of sample ``i``.
    With ``skip_failures`` unprojectable nodes are dropped (their count is
    in ``meta["dropped"]``); otherwise the first failure raises
    :class:`ResampleError` naming the sample and node.
    """
    pts = as_points(cloud)
    op = operator if operator is not None else ManifoldMLS(pts, config.mmls)
    d, K = config.d, config.K
    sigma = config.sigma
    if sigma is None:
        sigma = estimate_sigma(pts, d, config.k, config.seed)
    nodes = grid_nodes(K, d, sigma)
    m = len(nodes)

    frames = op.frames(pts)
    bad = np.flatnonzero(frames.status != OK)
    if bad.size and not config.skip_failures:
        raise ResampleError(int(bad[0]), -1, status_error(int(frames.status[bad[0]])))
    # lifted[i, j] = q_i + nodes[j] @ H_i
    lifted = frames.origins[:, None, :] + np.einsum("jt,itk->ijk", nodes, frames.bases)
    lifted = lifted.reshape(-1, pts.shape[1])
    has_frame = np.repeat(frames.status == OK, m)
    out = np.full_like(lifted, np.nan)
    status = np.full(len(lifted), -1)
    proj, st, _ = op.project_batch(lifted[has_frame])
    out[has_frame] = proj
    status[has_frame] = st
    ok = status == OK
    if not config.skip_failures and not ok.all():
        first = int(np.flatnonzero(~ok)[0])
        raise ResampleError(first // m, first % m, status_error(int(status[first])))

    dropped = int((~ok).sum())
    if dropped:
        log.warning("resample dropped %d of %d grid nodes", dropped, len(out))
    src = np.repeat(np.arange(len(pts)), m)
    grid = np.tile(np.arange(m), len(pts))
    meta = {"K": K, "d": d, "k": config.k, "sigma": sigma, "seed": config.seed,
            "h": config.mmls.h, "mu": config.mmls.mu, "dropped": dropped}
    return PointCloud(out[ok], source_index=src[ok], grid_index=grid[ok], meta=meta)
