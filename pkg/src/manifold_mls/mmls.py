"""Manifold moving least-squares projection.

Projecting a query ``r`` takes two steps:

1. find a local frame ``(q, H)``: an origin ``q`` with ``r - q`` orthogonal
   to a d-dimensional subspace ``H`` that minimizes the weighted sum of
   squared distances of the samples from the affine plane ``q + H``;
2. fit a degree ``k - 1`` vector polynomial ``H -> R^D`` to the samples
   expressed in frame coordinates and evaluate it at the origin.

Step 1 is solved by a fixed-point iteration.  Each sweep freezes the
weights at the current origin, takes ``H`` from a weighted PCA about the
weighted mean ``c`` and moves the origin to ``c + P_H(r - c)``, which keeps
``r - q`` orthogonal to ``H``.  With frozen weights this pair is an exact
minimizer, so every sweep is checked for descent of the frozen-weight
objective.  Minimizing with the weights left free is degenerate (moving
``q`` away from the data zeroes every weight), so the objective evaluated
at successive origins is only recorded, in ``LocalFrame.j1_history``.

All queries of a batch are iterated together on padded neighbor arrays.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from .cloud import as_point, as_points
from .errors import (
    EmptySupportError,
    FrameError,
    ManifoldMLSError,
    NonConvergenceError,
    SparseNeighborhoodError,
    UnisolvencyError,
    ValidationError,
)
from .mls_flat import VectorPolynomial, basis_size, weighted_polyfit_batch
from .sampling_stats import separation_radius
from .weights import WeightProfile

log = logging.getLogger(__name__)

EIGEN_GAP_TOL = 1e-6
ORTHONORMAL_TOL = 1e-10
PERP_TOL = 1e-8
# round-off slack on the per-sweep descent check, relative to the weighted scatter
DESCENT_SLACK = 1e-9
CHUNK = 256
GATHER_MARGIN = 0.25  # slack of the step-1 candidate ball, in units of h

# per-query status codes of the batch engine
OK, SPARSE, AMBIGUOUS, DRIFT, NO_CONVERGENCE, ASCENT, OUTSIDE_ROI, EMPTY, UNISOLVENT, UNSUPPORTED = range(10)
_ERRORS = {
    SPARSE: (SparseNeighborhoodError, "sparse neighborhood: fewer than d + 1 weighted samples"),
    AMBIGUOUS: (FrameError, "ambiguous tangent dimension: no spectral gap after the d-th eigenvalue"),
    DRIFT: (FrameError, "frame drifted from samples: no sample within h of the origin"),
    NO_CONVERGENCE: (NonConvergenceError, "step-1 non-convergence"),
    ASCENT: (NonConvergenceError, "step-1 sweep increased the frozen-weight objective"),
    OUTSIDE_ROI: (FrameError, "frame origin left the region of interest (|r - q| > mu)"),
    EMPTY: (EmptySupportError, "empty support: no sample weighted in step 2"),
    UNISOLVENT: (UnisolvencyError, "unisolvency failure in the step-2 fit"),
    UNSUPPORTED: (UnisolvencyError, "step-2 fit unsupported at the origin: value lies farther than h from q"),
}


def status_error(code: int) -> ManifoldMLSError:
    cls, msg = _ERRORS[code]
    return cls(msg)


@dataclass(frozen=True)
class MMLSConfig:
    """Parameters of the projection.

    ``k`` is the approximation order: local polynomials have degree
    ``k - 1``.  ``h`` is the fill distance of the input sample, ``mu`` the
    radius of the region of interest about the query (default ``10 h``).
    """

    d: int
    k: int
    h: float
    mu: float | None = None
    step1_profile: WeightProfile = field(default_factory=WeightProfile)
    step2_profile: WeightProfile = field(default_factory=WeightProfile)
    step1_max_iters: int = 100
    step1_tol: float | None = None

    def __post_init__(self):
        if self.d < 1:
            raise ValidationError("intrinsic dimension must be >= 1")
        if self.k < 1:
            raise ValidationError("approximation order k must be >= 1")
        if not self.h > 0:
            raise ValidationError("h must be positive")
        if self.mu is None:
            object.__setattr__(self, "mu", 10.0 * self.h)
        if not self.mu > 0:
            raise ValidationError("mu must be positive")
        if self.step1_tol is None:
            object.__setattr__(self, "step1_tol", 1e-10 * self.h)
        if self.step1_max_iters < 1:
            raise ValidationError("step1_max_iters must be >= 1")
        self.step1_profile.check_injectivity()
        self.step2_profile.check_injectivity()

    @property
    def degree(self) -> int:
        return self.k - 1

    def with_(self, **changes) -> "MMLSConfig":
        return replace(self, **changes)


def default_h(cloud) -> float:
    """Fallback fill distance when none is supplied: twice the separation radius."""
    return 2.0 * separation_radius(cloud)


@dataclass(frozen=True)
class LocalFrame:
    origin: np.ndarray
    basis: np.ndarray  # (d, D), orthonormal rows spanning H
    anchor: np.ndarray
    j1_value: float
    iterations_used: int
    j1_history: tuple = ()

    @property
    def d(self) -> int:
        return self.basis.shape[0]

    def to_local(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=float) - self.origin) @ self.basis.T

    def to_ambient(self, coords) -> np.ndarray:
        return self.origin + np.asarray(coords, dtype=float) @ self.basis

    def constraint_violations(self, cloud, config: MMLSConfig, tree: cKDTree | None = None) -> list[str]:
        """Names of the frame invariants that fail (empty list when valid)."""
        bad = []
        B = self.basis
        if np.abs(B @ B.T - np.eye(B.shape[0])).max() > ORTHONORMAL_TOL:
            bad.append("orthonormality")
        gap = self.anchor - self.origin
        ng = np.linalg.norm(gap)
        if ng > 0 and np.abs(B @ gap).max() > PERP_TOL * ng:
            bad.append("perpendicularity")
        if ng > config.mu:
            bad.append("region of interest")
        if tree is None:
            tree = cKDTree(as_points(cloud))
        if tree.query(self.origin, k=1)[0] > config.h:
            bad.append("proximity")
        return bad


@dataclass
class FrameBatch:
    """Step-1 results for a batch of queries; rows with ``status != OK`` are NaN."""

    anchors: np.ndarray
    origins: np.ndarray
    bases: np.ndarray  # (Q, d, D)
    j1: np.ndarray
    iterations: np.ndarray
    status: np.ndarray
    history: np.ndarray  # (Q, max_iters), NaN past the last sweep

    def frame(self, i: int) -> LocalFrame:
        if self.status[i] != OK:
            raise status_error(int(self.status[i]))
        hist = self.history[i]
        return LocalFrame(origin=self.origins[i].copy(), basis=self.bases[i].copy(), anchor=self.anchors[i].copy(),
                          j1_value=float(self.j1[i]), iterations_used=int(self.iterations[i]),
                          j1_history=tuple(hist[np.isfinite(hist)].tolist()))


def _top_eigenpairs(C, V, exact, p):
    """Leading ``p`` eigenpairs of each symmetric ``C``, largest first.

    Rows flagged ``exact`` get a full eigendecomposition; the others one
    subspace-iteration sweep from ``V`` followed by Rayleigh-Ritz.
    """
    n, D = C.shape[0], C.shape[1]
    vals = np.empty((n, p))
    vecs = np.empty((n, D, p))
    if exact.any():
        lam, vec = np.linalg.eigh(C[exact])
        vals[exact] = lam[:, ::-1][:, :p]
        vecs[exact] = vec[:, :, ::-1][:, :, :p]
    cheap = ~exact
    if cheap.any():
        Cc = C[cheap]
        Qm = np.linalg.qr(np.matmul(Cc, V[cheap]))[0]
        lam, y = np.linalg.eigh(np.matmul(np.swapaxes(Qm, 1, 2), np.matmul(Cc, Qm)))
        vals[cheap] = lam[:, ::-1]
        vecs[cheap] = np.matmul(Qm, y[:, :, ::-1])
    return np.maximum(vals, 0.0), vecs


def _padded(index_lists):
    """Object array of index lists -> (indices, mask) padded with index 0."""
    lengths = np.fromiter((len(ix) for ix in index_lists), dtype=int, count=len(index_lists))
    width = max(int(lengths.max(initial=0)), 1)
    idx = np.zeros((len(index_lists), width), dtype=int)
    mask = np.arange(width)[None, :] < lengths[:, None]
    if lengths.sum():
        idx[mask] = np.concatenate([np.asarray(ix, dtype=int) for ix in index_lists if len(ix)])
    return idx, mask


class ManifoldMLS:
    """Projection operator bound to one sample cloud.

    The KD-tree over the samples is built once and only read afterwards.
    """

    def __init__(self, cloud, config: MMLSConfig):
        self.points = as_points(cloud)
        self.config = config
        if config.d > self.points.shape[1]:
            raise ValidationError(f"intrinsic dimension {config.d} exceeds ambient {self.points.shape[1]}")
        self.tree = cKDTree(self.points)

    @property
    def D(self) -> int:
        return self.points.shape[1]

    # ------------------------------------------------------------------ step 1
    def frames(self, queries) -> FrameBatch:
        R = as_points(queries, dim=self.D)
        Q = len(R)
        cfg = self.config
        out = FrameBatch(
            anchors=R,
            origins=np.full((Q, self.D), np.nan),
            bases=np.full((Q, cfg.d, self.D), np.nan),
            j1=np.full(Q, np.nan),
            iterations=np.zeros(Q, dtype=int),
            status=np.full(Q, OK),
            history=np.full((Q, cfg.step1_max_iters), np.nan),
        )
        for lo in range(0, Q, CHUNK):
            self._frames_chunk(R[lo:lo + CHUNK], out, lo)
        return out

    def _gather(self, centers, radii):
        idx, mask = _padded(self.tree.query_ball_point(centers, radii))
        return self.points[idx], mask

    def _frames_chunk(self, R, out, offset):
        cfg = self.config
        d, h = cfg.d, cfg.h
        theta = cfg.step1_profile
        support = theta.support(h)
        Q = len(R)
        rows = np.arange(offset, offset + Q)
        tiny = np.finfo(float).tiny

        # initial origin: weighted mean about the query itself
        P, mask = self._gather(R, support)
        w = theta(np.linalg.norm(P - R[:, None, :], axis=2), h) * mask
        wsum = w.sum(axis=1)
        status = np.where((w > 0).sum(axis=1) < d + 1, SPARSE, OK)
        with np.errstate(invalid="ignore", divide="ignore"):
            q = np.matmul(w[:, None, :], P)[:, 0] / wsum[:, None]

        B = np.full((Q, d, self.D), np.nan)
        j1 = np.full(Q, np.nan)
        iters = np.zeros(Q, dtype=int)
        prev_g = np.full((Q, self.D), np.nan)
        # warm-started subspace for the leading eigenvectors; the first sweep is exact
        p = min(d + 2, self.D)
        V = np.zeros((Q, self.D, p))
        exact = np.ones(Q, dtype=bool)
        prev_f = np.full((Q, self.D), np.nan)

        # candidates cover the support while q stays within the margin of the gather center;
        # the working arrays hold only the queries still iterating
        live = np.flatnonzero(status == OK)
        center = q.copy()
        # candidates are stored relative to their gather center
        margin = GATHER_MARGIN * h
        P, mask = self._gather(center[live], support + margin)
        P -= center[live][:, None, :]
        sq = np.einsum("qlk,qlk->ql", P, P)
        for it in range(1, cfg.step1_max_iters + 1):
            if live.size == 0:
                break
            qa, ra = q[live], R[live]
            wander = np.flatnonzero(np.linalg.norm(qa - center[live], axis=1) > margin)
            if wander.size:
                center[live[wander]] = qa[wander]
                Pn, mn = self._gather(qa[wander], support + margin)
                Pn -= qa[wander][:, None, :]
                if Pn.shape[1] > P.shape[1]:
                    grow = Pn.shape[1] - P.shape[1]
                    P = np.pad(P, ((0, 0), (0, grow), (0, 0)))
                    mask = np.pad(mask, ((0, 0), (0, grow)))
                    sq = np.pad(sq, ((0, 0), (0, grow)))
                P[wander] = 0.0
                mask[wander] = False
                P[wander, :Pn.shape[1]] = Pn
                mask[wander, :Pn.shape[1]] = mn
                sq[wander] = np.einsum("qlk,qlk->ql", P[wander], P[wander])

            u = qa - center[live]
            d2 = sq - 2.0 * np.matmul(P, u[:, :, None])[:, :, 0] + (u * u).sum(axis=1)[:, None]
            wa = theta(np.sqrt(np.maximum(d2, 0.0)), h) * mask
            sparse = (wa > 0).sum(axis=1) < d + 1
            W = wa.sum(axis=1)
            W[sparse] = 1.0
            mc = np.matmul(wa[:, None, :], P)[:, 0] / W[:, None]   # weighted mean, relative to the center
            m = mc - u   # weighted mean, relative to q
            ex = exact[live]
            C = np.matmul(np.swapaxes(P * wa[:, :, None], 1, 2), P) - W[:, None, None] * mc[:, :, None] * mc[:, None, :]
            vals, vecs = _top_eigenpairs(C, V[live], ex, p)
            V[live] = vecs
            Ba = np.swapaxes(vecs[:, :, :d], 1, 2)
            trace = np.maximum(np.trace(C, axis1=1, axis2=2), tiny)
            lam_next = vals[:, d] if p > d else np.zeros(live.size)
            # the gap is judged on exact spectra only
            ambiguous = ex & ((vals[:, d - 1] - lam_next) < EIGEN_GAP_TOL * np.maximum(vals[:, 0], tiny))

            # frozen-weight objective sum_i w_i dist(r_i - o, H)^2 splits into the
            # scatter off H plus W |P_perp(c - o)|^2
            c = qa + m
            off_plane = np.maximum(trace - vals[:, :d].sum(axis=1), 0.0)

            def normal_part(v):
                return v - np.einsum("qj,qjk->qk", np.einsum("qk,qjk->qj", v, Ba), Ba)

            j_now = off_plane + W * (normal_part(m) ** 2).sum(axis=1)
            target = c + np.einsum("qj,qjk->qk", np.einsum("qk,qjk->qj", ra - c, Ba), Ba)
            resid = target - qa
            step = np.linalg.norm(resid, axis=1)
            # Anderson mixing over the last two iterates: same fixed points, but it
            # escapes the slow linear modes and 2-cycles of the plain update
            dg, df = target - prev_g[live], resid - prev_f[live]
            den = np.einsum("qk,qk->q", df, df)
            ok = np.isfinite(den) & (den > 0)
            gamma = np.where(ok, np.einsum("qk,qk->q", resid, df) / np.where(ok, den, 1.0), 0.0)
            mixed = target - np.where(ok, gamma, 0.0)[:, None] * np.nan_to_num(dg)
            prev_g[live], prev_f[live] = target, resid
            j_target = off_plane + W * (normal_part(c - target) ** 2).sum(axis=1)
            j_mixed = off_plane + W * (normal_part(c - mixed) ** 2).sum(axis=1)
            use_mixed = j_mixed <= j_now
            q_new = np.where(use_mixed[:, None], mixed, target)
            j_moved = np.where(use_mixed, j_mixed, j_target)
            ascent = j_moved > j_now + DESCENT_SLACK * trace
            drift = self.tree.query(q_new, k=1)[0] > h

            code = np.full(live.size, OK)
            code[drift] = DRIFT
            code[ascent] = ASCENT
            code[ambiguous] = AMBIGUOUS
            code[sparse] = SPARSE
            out.history[rows[live], it - 1] = np.where(sparse, np.nan, j_now)
            B[live], j1[live], iters[live] = Ba, j_now, it
            q[live] = np.where((code == OK)[:, None], q_new, qa)
            status[live] = code
            # an apparent fixed point is confirmed by one more sweep with a full eigensolve
            converged = step < cfg.step1_tol
            exact[live] = converged & ~ex
            keep = (code == OK) & ~(converged & ex)
            if not keep.all():
                live, P, mask, sq = live[keep], P[keep], mask[keep], sq[keep]
        status[live] = NO_CONVERGENCE
        outside = (status == OK) & (np.linalg.norm(R - q, axis=1) > cfg.mu)
        status[outside] = OUTSIDE_ROI

        good = status == OK
        out.status[rows] = status
        out.iterations[rows] = iters
        out.origins[rows[good]] = q[good]
        out.bases[rows[good]] = B[good]
        out.j1[rows[good]] = j1[good]

    def find_local_frame(self, r) -> LocalFrame:
        return self.frames(as_point(r, dim=self.D)[None]).frame(0)

    # ------------------------------------------------------------------ step 2
    def _local_samples(self, origins, bases):
        cfg = self.config
        theta = cfg.step2_profile
        idx, mask = _padded(self.tree.query_ball_point(origins, theta.support(cfg.h)))
        Y = self.points[idx] - origins[:, None, :]
        x = np.einsum("qlk,qjk->qlj", Y, bases)
        in_plane = np.linalg.norm(x, axis=2)
        normal = np.sqrt(np.maximum((Y * Y).sum(axis=2) - in_plane ** 2, 0.0))
        w = theta(in_plane, cfg.h) * mask
        # samples much farther off the plane than along it sit on another sheet
        w[normal > in_plane + cfg.h] = 0.0
        return idx, x, w

    def local_samples(self, frame: LocalFrame):
        """Indices, frame coordinates and weights of the step-2 neighborhood.

        Weights are radial in the frame coordinates.  Samples whose offset
        normal to ``H`` exceeds their in-plane distance by more than ``h``
        belong to another sheet of the manifold (possible once the support
        is comparable to the reach) and get zero weight.
        """
        idx, x, w = self._local_samples(frame.origin[None], frame.basis[None])
        live = w[0] > 0
        return idx[0][live], x[0][live], w[0][live]

    def fit_polynomials(self, frames: FrameBatch):
        """Step-2 coefficients (Q, M, D) and per-query status for a frame batch."""
        cfg = self.config
        Q = len(frames.status)
        coef = np.full((Q, basis_size(cfg.d, cfg.degree), self.D), np.nan)
        status = frames.status.copy()
        good = np.flatnonzero(status == OK)
        for lo in range(0, good.size, CHUNK):
            g = good[lo:lo + CHUNK]
            idx, x, w = self._local_samples(frames.origins[g], frames.bases[g])
            wsum = w.sum(axis=1)
            empty = wsum == 0
            wsum[empty] = 1.0
            c, _, ok = weighted_polyfit_batch(x / cfg.h, self.points[idx], w / wsum[:, None], cfg.degree)
            code = np.where(empty, EMPTY, np.where(ok, OK, UNISOLVENT))
            # a sample lies within h of q, so a value farther out is extrapolation
            shift = np.linalg.norm(c[:, 0, :] - frames.origins[g], axis=1)
            code[(code == OK) & ~(shift <= cfg.h)] = UNSUPPORTED
            status[g] = code
            coef[g[code == OK]] = c[code == OK]
        return coef, status

    def fit_local_polynomial(self, frame: LocalFrame) -> VectorPolynomial:
        batch = FrameBatch(anchors=frame.anchor[None], origins=frame.origin[None], bases=frame.basis[None],
                           j1=np.array([frame.j1_value]), iterations=np.array([frame.iterations_used]),
                           status=np.array([OK]), history=np.full((1, 1), np.nan))
        coef, status = self.fit_polynomials(batch)
        if status[0] != OK:
            raise status_error(int(status[0]))
        cfg = self.config
        return VectorPolynomial(d=cfg.d, D=self.D, degree=cfg.degree, coefficients=coef[0], scale=cfg.h)

    # ------------------------------------------------------------ projection
    def project_batch(self, queries):
        """Project every row; returns ``(points, status, frames)``.

        Rows that failed carry NaN and a nonzero status code (see
        :func:`status_error`).
        """
        frames = self.frames(queries)
        coef, status = self.fit_polynomials(frames)
        return coef[:, 0, :], status, frames

    def project_many(self, queries) -> np.ndarray:
        """Project every row of ``queries``; raises on the first failure."""
        pts, status, _ = self.project_batch(queries)
        bad = np.flatnonzero(status != OK)
        if bad.size:
            exc = status_error(int(status[bad[0]]))
            raise type(exc)(f"query {bad[0]}: {exc}")
        return pts

    def project(self, r) -> np.ndarray:
        return self.project_many(as_point(r, dim=self.D)[None])[0]

    def project_with_frame(self, r):
        pts, status, frames = self.project_batch(as_point(r, dim=self.D)[None])
        if status[0] != OK:
            raise status_error(int(status[0]))
        return pts[0], frames.frame(0)


def find_local_frame(cloud, r, config: MMLSConfig) -> LocalFrame:
    return ManifoldMLS(cloud, config).find_local_frame(r)


def fit_local_polynomial(cloud, frame: LocalFrame, config: MMLSConfig) -> VectorPolynomial:
    return ManifoldMLS(cloud, config).fit_local_polynomial(frame)


def project(cloud, r, config: MMLSConfig) -> np.ndarray:
    return ManifoldMLS(cloud, config).project(r)
