"""Synthetic manifolds with analytic ground truth: randomly embedded
d-spheres, Gaussian noise, great-circle distances and greedy
farthest-point subsampling."""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .cloud import as_point, as_points
from .errors import ValidationError


@dataclass(frozen=True)
class SphereEmbedding:
    """Sphere of radius ``radius`` about ``center`` in the span of ``frame``'s rows."""

    d: int
    D: int
    radius: float
    center: np.ndarray
    frame: np.ndarray  # (d + 1, D) orthonormal rows
    seed: int | None = None

    def embed(self, unit):
        """Map unit vectors of R^(d+1) onto the embedded sphere."""
        return self.center + self.radius * np.asarray(unit, dtype=float) @ self.frame

    def intrinsic(self, points):
        """Inverse of :meth:`embed` up to the radial component."""
        return (as_points(points) - self.center) @ self.frame.T / self.radius

    def radial_error(self, points):
        return np.abs(np.linalg.norm(as_points(points) - self.center, axis=1) - self.radius)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"# sphere embedding d={self.d} D={self.D} seed={self.seed}\n")
            fh.write(f"radius {self.radius:.17g}\n")
            fh.write("center " + " ".join(f"{v:.17g}" for v in self.center) + "\n")
            for row in self.frame:
                fh.write("frame " + " ".join(f"{v:.17g}" for v in row) + "\n")

    @classmethod
    def load(cls, path) -> "SphereEmbedding":
        radius, center, rows, seed = None, None, [], None
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line.startswith("#"):
                    for tok in line.split():
                        if tok.startswith("seed=") and tok[5:] != "None":
                            seed = int(tok[5:])
                    continue
                if not line:
                    continue
                key, *vals = line.split()
                if key == "radius":
                    radius = float(vals[0])
                elif key == "center":
                    center = np.array([float(v) for v in vals])
                elif key == "frame":
                    rows.append([float(v) for v in vals])
                else:
                    raise ValidationError(f"unknown sidecar key {key!r}")
        if radius is None or center is None or not rows:
            raise ValidationError(f"incomplete sphere sidecar {os.fspath(path)!r}")
        frame = np.array(rows)
        return cls(d=frame.shape[0] - 1, D=frame.shape[1], radius=radius, center=center, frame=frame, seed=seed)


def random_frame(d: int, D: int, rng) -> np.ndarray:
    """(d + 1, D) matrix with orthonormal rows from a QR of a Gaussian draw."""
    Q, R = np.linalg.qr(rng.standard_normal((D, d + 1)))
    # fix column signs so the map is a deterministic function of the draw
    Q = Q * np.sign(np.diag(R))
    return Q.T.copy()


def uniform_sphere_directions(n: int, dim: int, rng) -> np.ndarray:
    g = rng.standard_normal((n, dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def sample_sphere(d: int, D: int, R: float, n: int, seed: int, center=None, frame=None):
    """``n`` i.i.d. uniform samples of a randomly embedded d-sphere in R^D.

    The sphere is centered at (0.5, ..., 0.5) unless ``center`` is given;
    ``frame`` overrides the random orientation.  Returns the points and the
    :class:`SphereEmbedding` needed to evaluate ground truth.
    """
    if D < d + 1:
        raise ValidationError(f"a {d}-sphere needs ambient dimension >= {d + 1}, got {D}")
    if not R > 0:
        raise ValidationError("radius must be positive")
    if n < 1:
        raise ValidationError("need at least one sample")
    rng = np.random.default_rng(seed)
    if frame is None:
        frame = random_frame(d, D, rng)
    else:
        frame = np.asarray(frame, dtype=float).reshape(d + 1, D)
    c = np.full(D, 0.5) if center is None else as_point(center, dim=D)
    emb = SphereEmbedding(d=d, D=D, radius=float(R), center=c, frame=frame, seed=seed)
    return emb.embed(uniform_sphere_directions(n, d + 1, rng)), emb


def sphere_geodesic_oracle(embedding: SphereEmbedding, p1, p2, tol: float = 1e-6) -> float:
    """Great-circle distance between two points on the embedded sphere."""
    R, c = embedding.radius, embedding.center
    a = as_point(p1, dim=embedding.D) - c
    b = as_point(p2, dim=embedding.D) - c
    for name, v in (("p1", a), ("p2", b)):
        if abs(np.linalg.norm(v) - R) > tol * R:
            raise ValidationError(f"{name} is off the sphere by {abs(np.linalg.norm(v) - R):.3g}")
    cos = np.clip(a @ b / (R * R), -1.0, 1.0)
    return float(R * np.arccos(cos))


def sphere_geodesic_matrix(embedding: SphereEmbedding, A, B) -> np.ndarray:
    """Vectorized oracle for rows of ``A`` against rows of ``B`` paired elementwise."""
    R, c = embedding.radius, embedding.center
    a = as_points(A) - c
    b = as_points(B) - c
    cos = np.clip((a * b).sum(axis=1) / (R * R), -1.0, 1.0)
    return R * np.arccos(cos)


def add_noise(cloud, sigma: float, seed: int) -> np.ndarray:
    """Add i.i.d. N(0, sigma^2) noise to every coordinate."""
    pts = as_points(cloud)
    if sigma < 0:
        raise ValidationError("noise level must be nonnegative")
    if sigma == 0:
        return pts.copy()
    rng = np.random.default_rng(seed)
    return pts + rng.normal(0.0, sigma, size=pts.shape)


def farthest_point_order(cloud, m: int, seed: int):
    """Greedy farthest-point selection; returns (indices, covering radius).

    The covering radius is the largest distance from any input point to
    the selected subset, i.e. the fill distance of the subset measured
    against the input cloud.
    """
    pts = as_points(cloud)
    n = len(pts)
    if m > n:
        raise ValidationError(f"cannot select {m} points from {n}")
    if m < 1:
        raise ValidationError("need m >= 1")
    rng = np.random.default_rng(seed)
    chosen = np.empty(m, dtype=int)
    chosen[0] = rng.integers(n)
    dist = np.linalg.norm(pts - pts[chosen[0]], axis=1)
    for j in range(1, m):
        nxt = int(np.argmax(dist))
        chosen[j] = nxt
        np.minimum(dist, np.linalg.norm(pts - pts[nxt], axis=1), out=dist)
    return chosen, float(dist.max())


def farthest_point_subsample(cloud, m: int, seed: int) -> np.ndarray:
    """Quasi-uniform subset of ``m`` points chosen by greedy farthest-point sampling.

    The greedy rule guarantees separation radius >= fill / 2 against the
    input cloud; this is checked before returning.
    """
    pts = as_points(cloud)
    chosen, fill = farthest_point_order(pts, m, seed)
    sub = pts[chosen]
    if m >= 2:
        dist, _ = cKDTree(sub).query(sub, k=2)
        sep = 0.5 * dist[:, 1].min()
        assert sep >= 0.5 * fill * (1 - 1e-12), (sep, fill)
    return sub


def sample_circle(n: int, R: float = 1.0, center=(0.0, 0.0), seed: int | None = None, jitter: float = 0.0):
    """``n`` points on a circle in R^2; equispaced angles, optionally jittered.

    ``jitter`` is a fraction of the angular spacing.
    """
    rng = np.random.default_rng(seed)
    t = 2 * np.pi * (np.arange(n) + jitter * rng.uniform(-0.5, 0.5, n)) / n
    return np.asarray(center, dtype=float) + R * np.column_stack([np.cos(t), np.sin(t)])
