"""``sketch3d`` command line.

Exit codes: 0 success, 1 self-test / gradient-check failure, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import lossgrad, oracles
from .harness import MissingPredictions, evaluate_manifest, make_demo_dataset, write_predictions
from .mlsdeform import ControlPairSet, augment, deform_sketch, mls_rigid
from .pipeline import CATEGORIES, REFINERS, DatasetEntry, EvalManifest, StandardizeConfig, plan_batches, standardize
from .pointcloud import chamfer, emd_exact, load_cloud
from .sketchimg import BinaryMask, StructuringElement, components, dilate, read_pgm, rasterize_polyline, thin, write_pgm

log = logging.getLogger("sketch3d")

AUGMENT_LIMIT_PX = 10.0
AUGMENT_LIMIT_DEG = 10.0


class UsageError(Exception):
    pass


def read_config(path) -> dict:
    """``key=value`` lines; ``#`` comments and blank lines ignored.  Dashes in keys become underscores."""
    cfg = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        cfg[key.replace("-", "_")] = value
    return cfg


def _fmt(x: float) -> str:
    return f"{x:#.9g}"


def cmd_metrics(args) -> int:
    a, b = load_cloud(args.cloud_a), load_cloud(args.cloud_b)
    if args.which in ("emd", "both") and len(a) != len(b):
        raise UsageError(f"EMD needs equal sizes, got {len(a)} and {len(b)} points")
    if args.which in ("cd", "both"):
        print(f"cd {_fmt(chamfer(a, b))}")
    if args.which in ("emd", "both"):
        print(f"emd {_fmt(emd_exact(a, b)[0])}")
    return 0


def cmd_eval(args) -> int:
    manifest = EvalManifest.load(args.manifest)
    table, _ = evaluate_manifest(manifest, args.predictions)
    Path(args.output).write_text(table.to_csv())
    print(table.to_text())
    return 0


def _standardize_config(args) -> StandardizeConfig:
    try:
        return StandardizeConfig(args.threshold, args.radius, args.iterations, args.refiner)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_standardize(args) -> int:
    cfg = _standardize_config(args)
    write_pgm(standardize(read_pgm(args.input), cfg), args.output)
    return 0


def cmd_deform(args) -> int:
    try:
        controls = ControlPairSet.read(args.controls)
    except ValueError as exc:
        raise UsageError(f"{args.controls}: {exc}") from None
    write_pgm(deform_sketch(read_pgm(args.input), controls, args.spacing), args.output)
    return 0


def cmd_augment(args) -> int:
    if abs(args.dx) > AUGMENT_LIMIT_PX or abs(args.dy) > AUGMENT_LIMIT_PX:
        log.warning("translation (%g, %g) exceeds the +/-%g px training range", args.dx, args.dy, AUGMENT_LIMIT_PX)
    if abs(args.theta) > AUGMENT_LIMIT_DEG:
        log.warning("rotation %g deg exceeds the +/-%g deg training range", args.theta, AUGMENT_LIMIT_DEG)
    write_pgm(augment(read_pgm(args.input), args.dx, args.dy, args.theta), args.output)
    return 0


def cmd_gradcheck(args) -> int:
    report = lossgrad.gradcheck(args.trials, args.seed)
    text = report.text()
    if args.output:
        Path(args.output).write_text(text)
    sys.stdout.write(text)
    if not report.passed:
        print(f"gradient check failed in trials: {', '.join(map(str, report.failures))}", file=sys.stderr)
        return 1
    return 0


def run_selftest(seed: int = 0) -> list[tuple[str, bool, str]]:
    """Quick cross-module oracle sweeps; returns ``(name, passed, detail)`` per check."""
    rng = np.random.default_rng(seed)
    results = []

    report = lossgrad.gradcheck(20, seed)
    results.append(("gradcheck", report.passed,
                    f"max_rel_err={report.max_rel_err:.3e} failures={report.failures}"))

    worst = 0.0
    for _ in range(30):
        n = int(rng.integers(1, 7))
        P, Q = rng.normal(size=(n, 3)), rng.normal(size=(n, 3))
        worst = max(worst, abs(emd_exact(P, Q)[0] - oracles.emd_bruteforce(P, Q)))
    results.append(("emd_vs_bruteforce", worst <= 1e-12, f"max_abs_diff={worst:.3e}"))

    bad = 0
    for _ in range(30):
        P = rng.normal(size=(int(rng.integers(1, 65)), 3))
        Q = rng.normal(size=(int(rng.integers(1, 65)), 3))
        if chamfer(P, Q, accelerate=True) != oracles.chamfer_bruteforce(P, Q):
            bad += 1
    results.append(("chamfer_vs_bruteforce", bad == 0, f"mismatches={bad}"))

    worst = 0.0
    for _ in range(10):
        t = rng.uniform(-np.pi, np.pi)
        R = np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
        off = rng.uniform(-20, 20, size=2)
        p = rng.uniform(0, 100, size=(int(rng.integers(2, 8)), 2))
        ctl = ControlPairSet(p, p @ R.T + off)
        v = rng.uniform(0, 100, size=(50, 2))
        worst = max(worst, float(np.abs(mls_rigid(ctl, v) - (v @ R.T + off)).max()))
    results.append(("mls_rigid_reproduction", worst < 1e-9, f"max_err={worst:.3e}"))

    ok = True
    for k in range(2, 6):
        m = BinaryMask(rng.random((32, 32)) < 0.02)
        ok &= dilate(m, StructuringElement(1), k) == dilate(m, StructuringElement(k), 1)
    results.append(("dilation_composition", bool(ok), "radius-1 x k == radius-k for k=2..5"))

    ok = True
    for _ in range(5):
        pts = rng.uniform(4, 60, size=(int(rng.integers(2, 5)), 2))
        mask = dilate(BinaryMask(rasterize_polyline(pts, 64, 64).pixels < 0.5), StructuringElement(1), 2)
        t1 = thin(mask)
        ok &= thin(t1) == t1 and components(t1) == components(mask)
    results.append(("thinning_fixpoint", bool(ok), "idempotent and component preserving"))

    entries = [DatasetEntry(f"{c}_{i}", c, "s", "c", 0) for c in CATEGORIES for i in range(3)]
    plan = plan_batches(entries, 26, seed)
    cat_of = {e.id: e.category for e in entries}
    ok = all(sorted(cat_of[i] for i in b) == sorted(CATEGORIES * 2) for b in plan.batches)
    results.append(("sampler_balance", ok, f"{len(plan.batches)} batches"))
    return results


def cmd_selftest(args) -> int:
    results = run_selftest(args.seed)
    for name, passed, detail in results:
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
    failed = [name for name, passed, _ in results if not passed]
    if failed:
        print(f"self-test failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def cmd_make_demo(args) -> int:
    path = make_demo_dataset(args.out_dir, args.shapes, args.points, args.seed, args.canvas)
    manifest = EvalManifest.load(path)
    if args.predictions:
        write_predictions(manifest, args.predictions, (args.offset, 0.0, 0.0))
    print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sketch3d", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="key=value file supplying defaults for the command's flags")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("metrics", help="Chamfer / EMD between two clouds (raw values)")
    p.add_argument("cloud_a")
    p.add_argument("cloud_b")
    p.add_argument("--which", choices=("cd", "emd", "both"), default="both")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("eval", help="per-category metric table for a manifest")
    p.add_argument("manifest")
    p.add_argument("predictions", help="directory holding <id>.xyz predictions")
    p.add_argument("output", help="CSV path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("standardize", help="binarize, dilate and refine a PGM sketch")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--radius", type=int, default=1)
    p.add_argument("--iterations", type=int, default=5)
    p.add_argument("--refiner", default="thinning", help=f"one of {sorted(REFINERS)}")
    p.set_defaults(func=cmd_standardize)

    p = sub.add_parser("deform", help="rigid MLS warp of a PGM sketch")
    p.add_argument("input")
    p.add_argument("controls", help="CSV: 'alpha=<a>' then px,py,qx,qy rows")
    p.add_argument("output")
    p.add_argument("--spacing", type=int, default=4)
    p.set_defaults(func=cmd_deform)

    p = sub.add_parser("augment", help="rotate about the centre then translate")
    p.add_argument("input")
    p.add_argument("dx", type=float)
    p.add_argument("dy", type=float)
    p.add_argument("theta", type=float, help="degrees")
    p.add_argument("output")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("gradcheck", help="finite-difference check of the loss gradients")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", help="also write the report here")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("selftest", help="run the built-in oracle checks")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("make-demo", help="write a synthetic 13-category dataset")
    p.add_argument("out_dir")
    p.add_argument("--shapes", type=int, default=2, help="shapes per category")
    p.add_argument("--points", type=int, default=128)
    p.add_argument("--canvas", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--predictions", help="also write ground-truth copies here as predictions")
    p.add_argument("--offset", type=float, default=0.0, help="x translation applied to the predictions")
    p.set_defaults(func=cmd_make_demo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        pre, _ = parser.parse_known_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        if pre.config:
            defaults = read_config(pre.config)
            subparser = parser._subparsers._group_actions[0].choices[pre.command]
            known = {a.dest for a in subparser._actions}
            unknown = sorted(set(defaults) - known)
            if unknown:
                raise UsageError(f"{pre.config}: unknown keys {unknown} for {pre.command}")
            subparser.set_defaults(**defaults)
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    except (UsageError, OSError) as exc:
        print(f"sketch3d: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except MissingPredictions as exc:
        print(f"sketch3d: {exc}", file=sys.stderr)
        return 2
    except (UsageError, OSError, ValueError) as exc:
        print(f"sketch3d: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
