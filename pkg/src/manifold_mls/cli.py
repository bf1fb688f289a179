"""Command-line entry point.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import experiments
from ._version import __version__
from .cloud import read_points, write_points
from .errors import ManifoldMLSError, ValidationError
from .geodesic import densified_distances, parse_rule
from .mmls import OK, ManifoldMLS, MMLSConfig, default_h, status_error
from .resample import ResampleConfig, resample
from .sampling_stats import sampling_stats
from .synthetic import SphereEmbedding, add_noise, sample_sphere
from .weights import WeightProfile

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("manifold_mls")


def _floats(text):
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a list of numbers, got {text!r}") from None


def _ints(text):
    vals = _floats(text)
    if any(v != int(v) for v in vals):
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}")
    return [int(v) for v in vals]


def _mmls_args(p, with_K=False):
    p.add_argument("--input", required=True, help="point cloud file")
    p.add_argument("--d", type=int, required=True, help="intrinsic dimension")
    p.add_argument("--k", type=int, default=3, help="approximation order (degree k-1)")
    p.add_argument("--h", type=float, help="fill distance (default: twice the separation radius)")
    p.add_argument("--mu", type=float, help="region-of-interest radius (default 10 h)")
    p.add_argument("--weight", choices=["bump", "interp"], default="bump")
    p.add_argument("--bandwidth", type=float, default=1.0, help="weight bandwidth relative to h")
    p.add_argument("--c1", type=float, default=3.5, help="weight support as a multiple of h")
    p.add_argument("--eps-w", type=float, default=1e-8, help="singularity guard of interpolatory weights")
    if with_K:
        p.add_argument("--K", type=int, default=3, help="grid nodes per axis")
        p.add_argument("--sigma", type=float, help="grid half-width (default: estimated)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--skip-failures", action="store_true", help="drop grid nodes that fail to project")


def _config(args, cloud) -> MMLSConfig:
    h = args.h if args.h is not None else default_h(cloud)
    profile = WeightProfile(shape=args.weight, bandwidth=args.bandwidth, support_factor=args.c1,
                            guard=args.eps_w)
    return MMLSConfig(d=args.d, k=args.k, h=h, mu=args.mu, step1_profile=profile, step2_profile=profile)


def _rconfig(args, cloud) -> ResampleConfig:
    return ResampleConfig(mmls=_config(args, cloud), K=args.K, sigma=args.sigma, seed=args.seed,
                          skip_failures=args.skip_failures)


def _out(path):
    return sys.stdout if path in (None, "-") else open(path, "w")


def _close(fh):
    if fh is not sys.stdout:
        fh.close()


def cmd_sample_sphere(args):
    pts, emb = sample_sphere(args.d, args.D, args.R, args.n, args.seed)
    # the noise stream is derived from, but distinct from, the sampling seed
    pts = add_noise(pts, args.noise, args.seed + 1)
    header = [f"sphere d={args.d} D={args.D} R={args.R} n={args.n} seed={args.seed} noise={args.noise}"]
    write_points(args.output, pts, header)
    sidecar = args.sidecar or f"{args.output}.sphere"
    emb.save(sidecar)
    print(f"wrote {len(pts)} points to {args.output}, embedding to {sidecar}")


def cmd_project(args):
    cloud = read_points(args.input)
    queries = read_points(args.queries)
    op = ManifoldMLS(cloud, _config(args, cloud))
    pts, status, _ = op.project_batch(queries)
    bad = np.flatnonzero(status != OK)
    if bad.size and not args.keep_going:
        exc = status_error(int(status[bad[0]]))
        raise type(exc)(f"query {bad[0]}: {exc}")
    cfg = op.config
    header = [f"project d={cfg.d} k={cfg.k} h={cfg.h:.10g} mu={cfg.mu:.10g} weight={args.weight}",
              f"failed {bad.size} of {len(queries)}"]
    # failed rows stay NaN, which the point reader refuses, so write them raw
    with open(args.output, "w") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        np.savetxt(fh, pts, fmt="%.17g")
    return EXIT_NUMERIC if bad.size else EXIT_OK


def cmd_resample(args):
    cloud = read_points(args.input)
    rcfg = _rconfig(args, cloud)
    dense = resample(cloud, rcfg)
    m = dense.meta
    header = [f"resample d={m['d']} k={m['k']} K={m['K']} sigma={m['sigma']:.10g} h={m['h']:.10g} "
              f"mu={m['mu']:.10g} seed={m['seed']} dropped={m['dropped']}",
              f"source {args.input} ({len(cloud)} points)"]
    write_points(args.output, dense.points, header)
    print(f"wrote {len(dense)} points to {args.output}")


def _read_pairs(path, cloud):
    """Rows of two sample indices, or of two points written side by side."""
    rows = read_points(path)
    D = cloud.shape[1]
    if rows.shape[1] == 2 and np.all(rows == np.round(rows)):
        idx = rows.astype(int)
        if idx.min() < 0 or idx.max() >= len(cloud):
            raise ValidationError(f"pair index out of range 0..{len(cloud) - 1}")
        return cloud[idx[:, 0]], cloud[idx[:, 1]]
    if rows.shape[1] == 2 * D:
        return rows[:, :D], rows[:, D:]
    raise ValidationError(f"pairs file needs 2 indices or {2 * D} coordinates per row")


def cmd_geodesic(args):
    cloud = read_points(args.input)
    A, B = _read_pairs(args.pairs, cloud)
    rule = parse_rule(args.rule, args.param)
    lengths, info = densified_distances(cloud, A, B, _rconfig(args, cloud), rule)
    oracle = None
    if args.sidecar:
        emb = SphereEmbedding.load(args.sidecar)
        a, b = A - emb.center, B - emb.center
        cos = (a * b).sum(axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        oracle = emb.radius * np.arccos(np.clip(cos, -1.0, 1.0))
    fh = _out(args.output)
    try:
        fh.write(f"# geodesic rule={args.rule} param={args.param} graph_radius={info['graph'].radius} "
                 f"nodes={info['graph'].node_count}\n")
        fh.write("pair_id,estimate,oracle,relative_error\n")
        for i, est in enumerate(lengths):
            if oracle is None:
                fh.write(f"{i},{est:.10g},,\n")
            else:
                rel = abs(est - oracle[i]) / oracle[i] if oracle[i] > 0 else float("nan")
                fh.write(f"{i},{est:.10g},{oracle[i]:.10g},{rel:.10g}\n")
    finally:
        _close(fh)
    if not np.all(np.isfinite(lengths)):
        log.error("%d pairs are disconnected in the densified graph", int((~np.isfinite(lengths)).sum()))
        return EXIT_NUMERIC
    return EXIT_OK


def _emit(report, args):
    fh = _out(args.output)
    try:
        report.write_csv(fh, timings=not args.no_timings)
    finally:
        _close(fh)
    if getattr(args, "slope_data", None):
        with open(args.slope_data, "w") as sd:
            sd.write(report.slope_data())
    if report.partial:
        log.warning("partial run: %d realizations failed", len(report.flags))
    return EXIT_OK


def _table_opts(args):
    opts = {}
    for name in ("bandwidth", "graph_factor", "reference_factor"):
        if getattr(args, name) is not None:
            opts[name] = getattr(args, name)
    return opts


def cmd_table1(args):
    report = experiments.run_table1(d=args.d, n=args.n, D=args.D, radius=args.R, K=args.K, pairs=args.pairs,
                                    realizations=args.realizations, seed=args.seed, workers=args.workers,
                                    **_table_opts(args))
    return _emit(report, args)


def cmd_table2(args):
    report = experiments.run_table2(noise_levels=args.noise, n=args.n, d=args.d, D=args.D, K=args.K,
                                    seed=args.seed, realizations=args.realizations, pairs=args.pairs,
                                    workers=args.workers, **_table_opts(args))
    return _emit(report, args)


def cmd_convergence(args):
    report = experiments.run_convergence(args.manifold, ks=args.k, ns=args.n, seed=args.seed)
    for row in report.summary:
        print(f"# k={row['k']} {row['metric']}: slope={row['slope']:.3f} ({row['regime']})", file=sys.stderr)
    return _emit(report, args)


def cmd_stats(args):
    cloud = read_points(args.input)
    ref = read_points(args.reference) if args.reference else None
    if ref is None and args.sidecar:
        emb = SphereEmbedding.load(args.sidecar)
        ref, _ = sample_sphere(emb.d, emb.D, emb.radius, args.reference_n, args.seed,
                               center=emb.center, frame=emb.frame)
    if ref is None:
        raise ValidationError("stats needs --reference or --sidecar to estimate the fill distance")
    s = sampling_stats(cloud, ref)
    print(f"samples {s.sample_count}")
    print(f"fill_distance {s.fill_distance_estimate:.10g}")
    print(f"separation_radius {s.separation_radius:.10g}")
    print(f"quasi_uniform_constant {s.quasi_uniform_constant:.10g}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="manifold-mls", description="Manifold moving least-squares toolkit")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample-sphere", help="i.i.d. samples of a randomly embedded sphere")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--D", type=int, default=20)
    p.add_argument("--R", type=float, default=0.5)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--noise", type=float, default=0.0, help="standard deviation of additive noise")
    p.add_argument("--output", required=True)
    p.add_argument("--sidecar", help="embedding file (default: OUTPUT.sphere)")
    p.set_defaults(func=cmd_sample_sphere)

    p = sub.add_parser("project", help="project query points onto the approximating manifold")
    _mmls_args(p)
    p.add_argument("--queries", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--keep-going", action="store_true", help="write NaN rows for failed queries")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("resample", help="densify the cloud by K^d per sample")
    _mmls_args(p, with_K=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_resample)

    p = sub.add_parser("geodesic", help="geodesic distances on the densified cloud")
    _mmls_args(p, with_K=True)
    p.add_argument("--pairs", required=True, help="rows 'i j' (sample indices) or two points side by side")
    p.add_argument("--rule", choices=["radius", "knn"], default="radius")
    p.add_argument("--param", type=float, help="connection radius or neighbor count")
    p.add_argument("--sidecar", help="sphere embedding for oracle distances")
    p.add_argument("--output")
    p.set_defaults(func=cmd_geodesic)

    for name, defaults in (("table1", {"n": 100}), ("table2", {"n": 400})):
        p = sub.add_parser(name, help=f"sphere geodesic accuracy ({name})")
        p.add_argument("--d", type=int, default=2)
        p.add_argument("--n", type=int, default=defaults["n"])
        p.add_argument("--D", type=int, default=20)
        p.add_argument("--K", type=int, default=3 if name == "table1" else 5)
        p.add_argument("--pairs", type=int, default=100)
        p.add_argument("--realizations", type=int, default=100)
        p.add_argument("--seed", type=int, required=True)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--bandwidth", type=float)
        p.add_argument("--graph-factor", type=float, help="graph radius as a multiple of h")
        p.add_argument("--reference-factor", type=int, help="reference points per sample for the fill estimate")
        p.add_argument("--output")
        p.add_argument("--no-timings", action="store_true", help="omit timings for byte-stable output")
        if name == "table1":
            p.add_argument("--R", type=float, default=0.5)
            p.set_defaults(func=cmd_table1)
        else:
            p.add_argument("--noise", type=_floats, default=[1e-5, 1e-3, 1e-2])
            p.set_defaults(func=cmd_table2)

    p = sub.add_parser("convergence", help="log-log convergence slopes")
    p.add_argument("--manifold", choices=["circle", "sphere", "plane"], required=True)
    p.add_argument("--k", type=_ints, default=[2, 3])
    p.add_argument("--n", type=_ints, help="resolution levels (sample counts)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--output")
    p.add_argument("--slope-data", help="also write gnuplot two-column data here")
    p.add_argument("--no-timings", action="store_true")
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("stats", help="fill distance, separation and quasi-uniformity")
    p.add_argument("--input", required=True)
    p.add_argument("--reference", help="dense reference sample of the domain")
    p.add_argument("--sidecar", help="sphere embedding to draw a reference from")
    p.add_argument("--reference-n", type=int, default=20000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_stats)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        code = args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ManifoldMLSError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
