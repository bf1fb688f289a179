"""Experiment drivers.

Geodesic-accuracy tables on randomly embedded spheres (clean and noisy)
and convergence-order studies on circles, spheres and a flat plane.
Every driver is a pure function of its parameters and seed and returns
an :class:`ExperimentReport` that carries the raw per-pair records.
"""
from __future__ import annotations

import csv
import io
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ._version import __version__
from .errors import ManifoldMLSError, ValidationError
from .geodesic import RadiusRule, build_graph, densified_distances, rmse_percent, shortest_path_lengths
from .mmls import OK, ManifoldMLS, MMLSConfig
from .resample import ResampleConfig
from .sampling_stats import fill_distance_estimate
from .synthetic import (add_noise, farthest_point_subsample, sample_circle, sample_sphere,
                        sphere_geodesic_matrix, uniform_sphere_directions)
from .weights import WeightProfile

log = logging.getLogger(__name__)

TABLE_METHODS = ("R", "X1", "X3", "euclidean")
EXACT_FLOOR = 1e-9


@dataclass
class ExperimentReport:
    """Configuration echo, aggregate rows, raw records and timings of one run."""

    name: str
    config: dict
    summary: list[dict]
    records: list[dict]
    details: list[dict] = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)
    version: str = __version__

    @property
    def partial(self) -> bool:
        return any(f.startswith("partial") for f in self.flags)

    def value(self, column: str, **match):
        """The ``column`` entry of the single summary row matching ``match``."""
        rows = [r for r in self.summary if all(r.get(k) == v for k, v in match.items())]
        if len(rows) != 1:
            raise KeyError(f"{len(rows)} summary rows match {match}")
        return rows[0][column]

    def write_csv(self, fh, timings: bool = True) -> None:
        fh.write(f"# experiment: {self.name}\n")
        fh.write(f"# version: {self.version}\n")
        for key, val in self.config.items():
            fh.write(f"# {key}: {val}\n")
        for flag in self.flags:
            fh.write(f"# flag: {flag}\n")
        if timings:
            for key, val in self.timings.items():
                fh.write(f"# time {key}: {val:.3f} s\n")
        for title, rows in (("summary", self.summary), ("details", self.details), ("records", self.records)):
            if not rows:
                continue
            fh.write(f"# table: {title}\n")
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: _fmt(v) for k, v in row.items()})

    def to_csv(self, timings: bool = True) -> str:
        buf = io.StringIO()
        self.write_csv(buf, timings=timings)
        return buf.getvalue()

    def slope_data(self) -> str:
        """Two-column ``h error`` blocks, one per (k, metric), for gnuplot."""
        out = []
        for row in self.summary:
            if "slope" not in row:
                continue
            k, metric = row["k"], row["metric"]
            out.append(f"# k={k} metric={metric} slope={_fmt(row['slope'])}")
            for rec in self.records:
                if rec["k"] == k and np.isfinite(rec.get(metric, np.nan)):
                    out.append(f"{rec['h']:.10g} {rec[metric]:.10g}")
            out.append("\n")
        return "\n".join(out)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.10g}"
    return v


def _realization_seeds(seed: int, count: int) -> list[int]:
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(c.generate_state(1)[0]) for c in children]


def draw_pairs(n: int, count: int, rng) -> np.ndarray:
    """``count`` index pairs, each pair drawn without replacement from ``range(n)``."""
    if n < 2:
        raise ValidationError("need at least two samples to draw pairs")
    return np.array([rng.choice(n, size=2, replace=False) for _ in range(count)], dtype=int).reshape(count, 2)


# ---------------------------------------------------------------- tables

@dataclass(frozen=True)
class TableSettings:
    """Parameters of one sphere-geodesic table.

    ``bandwidth`` scales the weight profile of both MMLS steps (1 is the
    plain profile), ``graph_factor`` sets the connection radius as a
    multiple of h, and h itself is the fill distance of the sample measured
    against ``reference_factor * n`` extra points on the sphere.
    """

    d: int = 2
    n: int = 100
    D: int = 20
    radius: float = 0.5
    K: int = 3
    pairs: int = 100
    realizations: int = 100
    seed: int = 0
    noise: float = 0.0
    degrees: tuple = (1, 3)
    bandwidth: float = 0.6
    graph_factor: float = 1.0
    reference_factor: int = 50

    def validate(self):
        if min(self.d, self.n, self.D, self.K, self.pairs, self.realizations, self.reference_factor) < 1:
            raise ValidationError("table parameters must be positive")
        if not self.radius > 0 or not self.bandwidth > 0 or not self.graph_factor > 0:
            raise ValidationError("radius, bandwidth and graph factor must be positive")
        if self.noise < 0:
            raise ValidationError("noise level must be nonnegative")


def table_realization(settings: TableSettings, index: int, seed: int):
    """One realization: per-pair records and a row of per-realization details."""
    s = settings
    rng = np.random.default_rng(seed)
    s_sample, s_ref, s_noise, s_grid = (int(v) for v in rng.integers(2 ** 31, size=4))
    clean, emb = sample_sphere(s.d, s.D, s.radius, s.n, s_sample)
    ref, _ = sample_sphere(s.d, s.D, s.radius, s.reference_factor * s.n, s_ref,
                           center=emb.center, frame=emb.frame)
    pts = add_noise(clean, s.noise, s_noise)
    h = fill_distance_estimate(pts, ref)
    pairs = draw_pairs(s.n, s.pairs, rng)
    ia, ib = pairs[:, 0], pairs[:, 1]
    truth = sphere_geodesic_matrix(emb, clean[ia], clean[ib])
    rule = RadiusRule(radius=s.graph_factor * h)

    est = {"euclidean": np.linalg.norm(pts[ia] - pts[ib], axis=1)}
    graph = build_graph(pts, rule)
    sources, inverse = np.unique(ia, return_inverse=True)
    est["R"] = shortest_path_lengths(graph, sources)[inverse, ib]
    detail = {"realization": index, "seed": seed, "h": h, "radius_R": graph.radius}

    profile = WeightProfile(bandwidth=s.bandwidth)
    for k in s.degrees:
        cfg = MMLSConfig(d=s.d, k=k, h=h, step1_profile=profile, step2_profile=profile)
        rcfg = ResampleConfig(mmls=cfg, K=s.K, seed=s_grid, skip_failures=True)
        lengths, info = densified_distances(pts, pts[ia], pts[ib], rcfg, rule)
        est[f"X{k}"] = lengths
        dense = info["dense"]
        detail[f"sigma_X{k}"] = dense.meta["sigma"]
        detail[f"nodes_X{k}"] = len(dense.points)
        detail[f"dropped_X{k}"] = dense.meta["dropped"]
        detail[f"radius_X{k}"] = info["graph"].radius

    records = []
    for p in range(s.pairs):
        rec = {"realization": index, "pair": p, "i": int(ia[p]), "j": int(ib[p]), "truth": float(truth[p])}
        for name, vals in est.items():
            rec[name] = float(vals[p])
        records.append(rec)
    return records, detail


def _run_one(args):
    settings, index, seed = args
    try:
        return table_realization(settings, index, seed), None
    except ManifoldMLSError as exc:
        return None, f"realization {index} failed: {exc}"


def run_table(settings: TableSettings, name: str = "table", workers: int = 1) -> ExperimentReport:
    """Run all realizations of a sphere-geodesic table and aggregate RMSE%."""
    settings.validate()
    t0 = time.perf_counter()
    seeds = _realization_seeds(settings.seed, settings.realizations)
    jobs = [(settings, i, sd) for i, sd in enumerate(seeds)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(job) for job in jobs]

    records, details, flags = [], [], []
    for out, err in results:
        if err is not None:
            log.error(err)
            flags.append(f"partial: {err}")
            continue
        recs, detail = out
        records.extend(recs)
        details.append(detail)

    methods = [m for m in ("R", *(f"X{k}" for k in settings.degrees), "euclidean")]
    summary = []
    if records:
        truth = np.array([r["truth"] for r in records])
        for m in methods:
            vals = np.array([r[m] for r in records])
            summary.append({"noise": settings.noise, "method": m, "rmse_percent": rmse_percent(vals, truth),
                            "pairs": len(vals), "realizations": len(details)})
    config = {"name": name, **{k: v for k, v in asdict(settings).items()}}
    timings = {"total": time.perf_counter() - t0}
    return ExperimentReport(name=name, config=config, summary=summary, records=records,
                            details=details, timings=timings, flags=flags)


def run_table1(d: int = 2, n: int = 100, D: int = 20, radius: float = 0.5, K: int = 3, pairs: int = 100,
               realizations: int = 100, seed: int = 0, workers: int = 1, **options) -> ExperimentReport:
    """Geodesic accuracy of R, X1, X3 and Euclidean distances on random d-spheres."""
    settings = TableSettings(d=d, n=n, D=D, radius=radius, K=K, pairs=pairs,
                             realizations=realizations, seed=seed, **options)
    return run_table(settings, name="table1", workers=workers)


TABLE2_DEFAULTS = {"bandwidth": 1.0, "graph_factor": 0.7}


def run_table2(noise_levels=(1e-5, 1e-3, 1e-2), n: int = 400, d: int = 2, D: int = 20, K: int = 5,
               seed: int = 0, realizations: int = 100, pairs: int = 100, workers: int = 1,
               **options) -> ExperimentReport:
    """The table-1 pipeline repeated with Gaussian noise added to the samples."""
    if not len(noise_levels):
        raise ValidationError("need at least one noise level")
    opts = {**TABLE2_DEFAULTS, **options}
    t0 = time.perf_counter()
    parts = []
    for sigma in noise_levels:
        settings = TableSettings(d=d, n=n, D=D, K=K, pairs=pairs, realizations=realizations,
                                 seed=seed, noise=float(sigma), **opts)
        parts.append(run_table(settings, name="table2", workers=workers))
    config = dict(parts[0].config)
    config["noise"] = list(map(float, noise_levels))
    report = ExperimentReport(
        name="table2", config=config,
        summary=[row for p in parts for row in p.summary],
        records=[{"noise": p.config["noise"], **r} for p in parts for r in p.records],
        details=[{"noise": p.config["noise"], **r} for p in parts for r in p.details],
        flags=[f for p in parts for f in p.flags],
    )
    for p in parts:
        report.timings[f"noise={p.config['noise']:g}"] = p.timings["total"]
    report.timings["total"] = time.perf_counter() - t0
    return report


# ------------------------------------------------------------ convergence

def fit_slope(h, err) -> float:
    """Least-squares slope of log(err) against log(h)."""
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    if h.size < 3:
        raise ValidationError(f"cannot fit slope: {h.size} resolution levels, need at least 3")
    if np.any(h <= 0) or np.any(~np.isfinite(err)) or np.any(err <= 0):
        raise ValidationError("cannot fit slope: nonpositive or non-finite values")
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


CONVERGENCE_DEFAULTS = {
    "circle": {"ns": (32, 64, 128, 256), "metrics": ("radial", "geodesic")},
    "sphere": {"ns": (50, 200, 800, 3200), "metrics": ("radial",)},
    "plane": {"ns": (50, 200, 800, 3200), "metrics": ("radial",)},
}


@dataclass(frozen=True)
class ConvergenceSettings:
    manifold: str = "circle"
    ks: tuple = (2, 3)
    ns: tuple | None = None
    seed: int = 0
    metrics: tuple | None = None
    K: int = 4
    graph_factor: float = 1.0
    pairs: int = 20
    queries: int = 2000
    query_offset: float = 0.1
    pool_factor: int = 20
    bandwidth: float = 1.0

    def resolved(self) -> "ConvergenceSettings":
        if self.manifold not in CONVERGENCE_DEFAULTS:
            raise ValidationError(f"unknown manifold {self.manifold!r}; choose circle, sphere or plane")
        base = CONVERGENCE_DEFAULTS[self.manifold]
        out = replace(self, ns=tuple(self.ns or base["ns"]), metrics=tuple(self.metrics or base["metrics"]),
                      ks=tuple(self.ks))
        if len(out.ns) < 3:
            raise ValidationError(f"cannot fit slope: {len(out.ns)} resolution levels, need at least 3")
        if list(out.ns) != sorted(out.ns):
            raise ValidationError("resolution levels must increase")
        if min(out.ks) < 1:
            raise ValidationError("approximation orders must be >= 1")
        return out


class _Manifold:
    """Analytic test manifold: sampling pool, query points, truths."""

    def __init__(self, kind: str, n_pool: int, rng):
        self.kind = kind
        if kind == "circle":
            self.d, self.D = 1, 2
            self.pool = sample_circle(n_pool, 1.0, seed=int(rng.integers(2 ** 31)), jitter=1.0)
        elif kind == "sphere":
            self.d, self.D = 2, 3
            self.pool, _ = sample_sphere(2, 3, 1.0, n_pool, int(rng.integers(2 ** 31)),
                                         center=np.zeros(3), frame=np.eye(3))
        else:
            self.d, self.D = 2, 3
            side = int(np.ceil(np.sqrt(n_pool)))
            u = rng.uniform(0.0, 1.0, (side * side, 2))
            self.normal = np.array([-0.3, 0.4, 1.0]) / np.linalg.norm([-0.3, 0.4, 1.0])
            self.pool = self.lift(u)

    def lift(self, u):
        # the plane z = 0.3 x - 0.4 y + 0.2, as an affine image of the unit square
        return np.column_stack([u[:, 0], u[:, 1], 0.3 * u[:, 0] - 0.4 * u[:, 1] + 0.2])

    def surface_error(self, X):
        if self.kind == "plane":
            return np.abs((X - np.array([0.0, 0.0, 0.2])) @ self.normal)
        return np.abs(np.linalg.norm(X, axis=1) - 1.0)

    def queries(self, count: int, offset: float, rng):
        if self.kind == "plane":
            u = rng.uniform(0.2, 0.8, (count, 2))
            return self.lift(u) + offset * rng.uniform(-1, 1, (count, 1)) * self.normal
        dirs = uniform_sphere_directions(count, self.D, rng)
        return dirs * (1.0 + offset * rng.uniform(-1, 1, (count, 1)))

    def geodesic(self, A, B):
        if self.kind == "plane":
            return np.linalg.norm(A - B, axis=1)
        cos = np.clip((A * B).sum(axis=1) / (np.linalg.norm(A, axis=1) * np.linalg.norm(B, axis=1)), -1, 1)
        return np.arccos(cos)


def run_convergence(manifold: str = "circle", ks=(2, 3), ns=None, seed: int = 0, **options) -> ExperimentReport:
    """Error of the projection and of geodesic estimates across dyadic resolutions.

    ``radial`` is the largest distance from a projected point to the true
    manifold (queries are scattered within ``query_offset * h`` of it);
    ``geodesic`` is the mean relative error of graph distances over a
    K-dense resampling.  Slopes are least-squares fits in log-log scale; a
    study whose errors all sit below 1e-9 is flagged as exact and gets no
    slope.
    """
    s = ConvergenceSettings(manifold=manifold, ks=tuple(ks), ns=ns, seed=seed, **options).resolved()
    t0 = time.perf_counter()
    rng = np.random.default_rng(s.seed)
    geo = _Manifold(s.manifold, s.pool_factor * max(s.ns), rng)
    fps_seed = int(rng.integers(2 ** 31))
    query_seed = int(rng.integers(2 ** 31))
    pair_seed = int(rng.integers(2 ** 31))
    profile = WeightProfile(bandwidth=s.bandwidth)

    records, flags = [], []
    for n in s.ns:
        P = farthest_point_subsample(geo.pool, n, fps_seed)
        h = fill_distance_estimate(P, geo.pool)
        Q = geo.queries(s.queries, s.query_offset * h, np.random.default_rng(query_seed))
        pairs = draw_pairs(n, s.pairs, np.random.default_rng(pair_seed))
        for k in s.ks:
            cfg = MMLSConfig(d=geo.d, k=k, h=h, step1_profile=profile, step2_profile=profile)
            op = ManifoldMLS(P, cfg)
            rec = {"manifold": s.manifold, "k": k, "n": n, "h": h}
            if "radial" in s.metrics:
                X, status, _ = op.project_batch(Q)
                good = status == OK
                err = geo.surface_error(X[good])
                rec["radial"] = float(err.max()) if err.size else np.nan
                rec["radial_mean"] = float(err.mean()) if err.size else np.nan
                rec["failed_queries"] = int((~good).sum())
                if (~good).any():
                    flags.append(f"n={n} k={k}: {int((~good).sum())} of {len(Q)} queries failed to project")
            if "geodesic" in s.metrics:
                A, B = P[pairs[:, 0]], P[pairs[:, 1]]
                truth = geo.geodesic(A, B)
                rule = RadiusRule(radius=s.graph_factor * h)
                rcfg = ResampleConfig(mmls=cfg, K=s.K, seed=fps_seed, skip_failures=True)
                lengths, info = densified_distances(P, A, B, rcfg, rule, operator=op)
                rel = np.abs(lengths - truth) / truth
                rec["geodesic"] = float(rel.mean())
                rec["geodesic_max"] = float(rel.max())
                rec["dropped_nodes"] = info["dense"].meta["dropped"]
            records.append(rec)

    summary = []
    for k in s.ks:
        rows = [r for r in records if r["k"] == k]
        hs = [r["h"] for r in rows]
        for metric in s.metrics:
            errs = np.array([r[metric] for r in rows])
            row = {"k": k, "metric": metric, "levels": len(rows), "max_error": float(np.nanmax(errs))}
            if np.all(errs < EXACT_FLOOR):
                row["slope"] = np.nan
                row["regime"] = "exact"
                flags.append(f"k={k} {metric}: exact regime, errors below {EXACT_FLOOR:g}; slope not fitted")
            else:
                row["slope"] = fit_slope(hs, errs)
                row["regime"] = "asymptotic"
            summary.append(row)
    config = {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(s).items()}
    return ExperimentReport(name="convergence", config=config, summary=summary, records=records,
                            timings={"total": time.perf_counter() - t0}, flags=flags)
