"""Command-line entry point: ``flowforge {synth,eval,filter,viz,info}``.

Exit codes: 0 success, 1 usage/configuration, 2 I/O, 3 data integrity.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigError, FlowForgeError
from .filtering import SWEEP_THRESHOLDS

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_DATA = 3

log = logging.getLogger("flowforge")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _add_synth(sub):
    p = sub.add_parser("synth", help="synthesize a triplet dataset from frames and depth maps")
    p.add_argument("--config", help="key=value config file; flags override its entries")
    p.add_argument("--frames", help="directory of RGB frames")
    p.add_argument("--depth", help="directory of depth maps named like the frames (.pfm/.npy/.png)")
    p.add_argument("--out", help="output dataset directory")
    p.add_argument("--n-samples", type=int)
    p.add_argument("--resolution", type=int, help="square output size after centre crop")
    p.add_argument("--fovy", type=float, help="vertical field of view in degrees")
    p.add_argument("--max-depth", type=float)
    p.add_argument("--translation-min", type=float)
    p.add_argument("--translation-max", type=float)
    p.add_argument("--axis", help="motion axis: x, y, z or 'ax,ay,az'")
    p.add_argument("--allow-negative", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--identity-motion", action=argparse.BooleanOptionalAction, default=None,
                   help="debug: zero camera motion for every sample")
    p.add_argument("--z-threshold", type=float)
    p.add_argument("--dropout-rate", type=float)
    p.add_argument("--export-kitti", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--export-npy", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--npy-normalized", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--indexing", choices=["source", "target"])
    p.add_argument("--seed", type=int, help="global seed (fallback: $FLOWFORGE_SEED)")
    p.add_argument("--workers", type=int)
    p.add_argument("--depth-png-scale", type=float)
    p.add_argument("--plot", action=argparse.BooleanOptionalAction, default=None,
                   help="also render synth_summary.png")
    p.set_defaults(func=cmd_synth)


def _add_eval(sub):
    p = sub.add_parser("eval", help="EPE/Fl-all (flow) or PSNR/SSIM (images) between two sample sets")
    p.add_argument("pred_dir")
    p.add_argument("gt_dir")
    p.add_argument("--mask", required=True, choices=["gt", "pred", "both", "all"],
                   help="which validity mask restricts flow metrics")
    p.add_argument("--kind", default="flow", choices=["flow", "image"])
    p.add_argument("--out", help="directory for report.txt, report.json and report.png")
    p.add_argument("--json", action="store_true", help="print JSON instead of key=value text")
    p.set_defaults(func=cmd_eval)


def _add_filter(sub):
    p = sub.add_parser("filter", help="recompute consistency masks of stored triplets")
    p.add_argument("triplet_dir")
    p.add_argument("--z", type=float, default=30.0, help="photometric threshold on the 0-255 scale")
    p.add_argument("--sweep", action="store_true",
                   help=f"tabulate valid fractions for Z in {', '.join(f'{z:g}' for z in SWEEP_THRESHOLDS)}")
    p.add_argument("--dry-run", action="store_true", help="report only, leave masks untouched")
    p.add_argument("--report", help="directory for filter_report.txt/.json (and the sweep plot)")
    p.set_defaults(func=cmd_filter)


def _add_viz(sub):
    p = sub.add_parser("viz", help="render flow colour maps, legends and triplet panels")
    p.add_argument("input", help="flow file (.flo/.npy/KITTI png) or triplet directory")
    p.add_argument("--out", required=True)
    p.add_argument("--max-magnitude", type=float, help="flow magnitude mapped to full saturation")
    p.set_defaults(func=cmd_viz)


def _add_info(sub):
    p = sub.add_parser("info", help="describe a flow/image/depth file or triplet")
    p.add_argument("path")
    p.set_defaults(func=cmd_info)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="flowforge", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for add in (_add_synth, _add_eval, _add_filter, _add_viz, _add_info):
        add(sub)
    return parser


SYNTH_KEYS = (
    "frames", "depth", "out", "n_samples", "resolution", "fovy", "max_depth", "translation_min",
    "translation_max", "axis", "allow_negative", "identity_motion", "z_threshold", "dropout_rate",
    "export_kitti", "export_npy", "npy_normalized", "indexing", "seed", "workers", "depth_png_scale", "plot",
)


def cmd_synth(args) -> int:
    from .pipeline import synthesize_dataset

    overrides = {k: getattr(args, k) for k in SYNTH_KEYS}
    cfg = load_config(args.config, overrides).validate()
    for key in ("frames", "depth"):
        if not Path(getattr(cfg, key)).is_dir():
            raise FileNotFoundError(f"{key} directory {getattr(cfg, key)} does not exist")
    lines = synthesize_dataset(cfg)
    ok = sum(" status=ok" in line for line in lines)
    if cfg.plot:
        from .plotting import plot_synth_summary

        stats = [dict(kv.split("=", 1) for kv in line.split()) for line in lines]
        done = [s for s in stats if s["status"] == "ok"]
        plot_synth_summary(
            Path(cfg.out) / "synth_summary.png",
            [float(s["tx"]) for s in done],
            [float(s["valid_fraction"]) for s in done],
        )
    print(f"samples={len(lines)} written={ok} skipped={len(lines) - ok} out={cfg.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .reports import evaluate_flow_dirs, evaluate_image_dirs, report_to_text, write_report, _json_safe

    if args.kind == "flow":
        report = evaluate_flow_dirs(args.pred_dir, args.gt_dir, args.mask)
    else:
        report = evaluate_image_dirs(args.pred_dir, args.gt_dir)
    if report["missing"]:
        log.warning("%d sample(s) missing from predictions: %s", len(report["missing"]), ", ".join(report["missing"]))
    if args.out:
        write_report(report, args.out)
    if args.json:
        print(json.dumps(_json_safe(report), indent=2, sort_keys=True))
    else:
        sys.stdout.write(report_to_text(report))
    return EXIT_OK


def cmd_filter(args) -> int:
    from .reports import filter_dataset, filter_report_text

    if args.z < 0:
        raise ConfigError("z", f"must be >= 0 (got {args.z})")
    result = filter_dataset(args.triplet_dir, args.z, sweep=args.sweep, dry_run=args.dry_run)
    text = filter_report_text(result)
    sys.stdout.write(text)
    if args.report:
        out = Path(args.report)
        out.mkdir(parents=True, exist_ok=True)
        (out / "filter_report.txt").write_text(text)
        (out / "filter_report.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
        if args.sweep and result["sweep"]:
            from .plotting import plot_filter_sweep

            plot_filter_sweep(out / "filter_sweep.png", {float(k): v for k, v in result["sweep"].items()})
    return EXIT_OK


def cmd_viz(args) -> int:
    from .reports import visualize

    info = visualize(args.input, args.out, args.max_magnitude)
    print(f"max_magnitude={info['max_magnitude']!r} files={','.join(info['files'])}")
    return EXIT_OK


def cmd_info(args) -> int:
    from .reports import describe

    for key, value in describe(args.path).items():
        print(f"{key}={value}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"flowforge: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"flowforge: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except FlowForgeError as exc:
        print(f"flowforge: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"flowforge: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
