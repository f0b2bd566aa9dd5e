"""``xvc`` command-line entry point."""
import argparse
import sys
from pathlib import Path

from . import experiments as E
from .config import DEFAULT_CONFIG, load_config, parse_sweep
from .errors import ContractError, DomainError
from .metrics import evaluate_depth, evaluate_split, reports_to_csv
from .tensorio import load_depth

EXPERIMENTS = {
    "gradcheck": E.run_gradcheck,
    "photometric": E.run_photometric_vulnerability,
    "robustness": E.run_robustness_sweep,
    "voxelsweep": E.run_voxel_sweep,
    "totalloss": E.run_total_loss,
}

HELP = {
    "gradcheck": "finite-difference check of every differentiable op",
    "photometric": "photometric loss under static/moving/occlusion/illumination variants",
    "robustness": "point-cloud vs voxel losses under object displacements",
    "voxelsweep": "VDA sensitivity for several voxel grids",
    "totalloss": "weighted total loss and its breakdown on a rendered pair",
    "all": "run every experiment above in order",
    "metrics": "depth metrics on XVT1 prediction/ground-truth pairs",
}


def _common(parser):
    parser.add_argument("--config", type=Path, help="config file layered over the defaults")
    parser.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    parser.add_argument("--seed", type=int, help="override experiment.seed")
    parser.add_argument("--sweep", action="append", default=[], metavar="K=V1,V2",
                        help="sweep list: voxels=20x20x24,..., deltas=0.1:0:0,..., delta_x=0.1,...")
    parser.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a single config value")
    parser.add_argument("--gnuplot", action="store_true", help="also write gnuplot scripts")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="xvc",
        description="Desk-scale cross-view consistency experiments.",
        epilog="default configuration:\n\n" + DEFAULT_CONFIG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--print-config", action="store_true",
                        help="print the default configuration and exit")
    sub = parser.add_subparsers(dest="command")
    for name in list(EXPERIMENTS) + ["all"]:
        p = sub.add_parser(name, help=HELP[name], description=HELP[name])
        _common(p)
        if name in ("gradcheck", "all"):
            p.add_argument("--corrupt", metavar="CASE",
                           help="route CASE through a wrong backward rule (negative control)")
    m = sub.add_parser("metrics", help=HELP["metrics"], description=HELP["metrics"])
    m.add_argument("files", nargs="+", type=Path, help="PRED GT [PRED GT ...] XVT1 depth files")
    m.add_argument("--label", action="append", default=[],
                   help="split label per pair (e.g. motion, static); repeat once per pair")
    m.add_argument("--cap", type=float, default=80.0, help="maximum ground-truth depth (default 80)")
    m.add_argument("--no-median-scale", action="store_true")
    m.add_argument("--log10", action="store_true", help="append the log10 column")
    m.add_argument("--out", type=Path, help="CSV path (default: stdout)")
    return parser


def _config(args):
    overrides = {}
    for spec in args.sweep:
        key, value = parse_sweep(spec)
        overrides[key] = value
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ContractError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value.strip()
    return load_config(args.config, overrides, args.seed)


def _report(res, stream):
    for label, ok, detail in res.checks:
        extra = f"  ({detail})" if detail else ""
        print(f"{'PASS' if ok else 'FAIL'}  {res.name}: {label}{extra}", file=stream)
    for path in res.files:
        print(f"wrote {path}", file=stream)


def run_experiments(args, stream=None):
    stream = stream or sys.stdout
    cfg = _config(args)
    names = list(EXPERIMENTS) if args.command == "all" else [args.command]
    ok = True
    for name in names:
        kwargs = {"gnuplot": args.gnuplot}
        if name == "gradcheck" and getattr(args, "corrupt", None):
            kwargs["corrupt"] = args.corrupt
        res = EXPERIMENTS[name](cfg, args.out, **kwargs)
        _report(res, stream)
        ok &= res.passed
    failed = "" if ok else " with failures"
    print(f"done{failed}", file=stream)
    return 0 if ok else 1


def run_metrics(args, stream=None):
    stream = stream or sys.stdout
    if len(args.files) % 2:
        raise ContractError("metrics expects PRED GT file pairs")
    pairs = []
    for pred_path, gt_path in zip(args.files[::2], args.files[1::2]):
        pred, _ = load_depth(pred_path)
        gt, mask = load_depth(gt_path)
        pairs.append((pred, gt, mask))
    median = not args.no_median_scale
    if args.label:
        if len(args.label) != len(pairs):
            raise ContractError(f"{len(pairs)} pairs but {len(args.label)} labels")
        masked = [(p, _masked(g, m)) for p, g, m in pairs]
        text = reports_to_csv(evaluate_split(masked, args.label, args.cap, median),
                              args.log10, label_column="split")
    else:
        reps = [evaluate_depth(p, g, args.cap, median, mask=m) for p, g, m in pairs]
        text = reports_to_csv(reps, args.log10)
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text, encoding="utf-8")
    else:
        stream.write(text)
    return 0


def _masked(gt, mask):
    # invalid ground truth is encoded as 0, which evaluate_depth excludes
    return gt * mask


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_config:
        sys.stdout.write(DEFAULT_CONFIG)
        return 0
    if args.command is None:
        parser.print_help()
        return 2
    try:
        if args.command == "metrics":
            return run_metrics(args)
        return run_experiments(args)
    except (ContractError, DomainError, KeyError, OSError) as exc:
        print(f"xvc: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
