"""Command-line entry point: ``occucast {binify,fit-forecast,evaluate,synth}``.

Exit codes: 0 success, 2 input error, 3 configuration error, 4 numerical
failure (including cells that failed during fit-forecast).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import PipelineConfig
from .errors import ConfigError, InputError, NumericalError
from . import pipeline

EXIT_OK, EXIT_INPUT, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3, 4


def _ints(text):
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _range(text):
    vals = _floats(text)
    if len(vals) == 1:
        return vals * 2
    if len(vals) != 2:
        raise argparse.ArgumentTypeError(f"expected LOW,HIGH or a single value, got {text!r}")
    return vals


def _common(p):
    p.add_argument("--config", help="JSON or YAML file of pipeline keys")
    p.add_argument("--seed", type=int)
    p.add_argument("-v", "--verbose", action="store_true")


def _binning_opts(p):
    p.add_argument("--level", type=int)
    p.add_argument("--bin-width", type=int, dest="bin_width", help="seconds per bin")
    p.add_argument("--origin", type=int, help="epoch seconds of bin 0")
    p.add_argument("--n-bins", type=int, dest="n_bins")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="occucast", description="Occupancy count forecasting pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("binify", help="bin trajectory records into an occupancy panel")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--format", choices=("delimited", "jsonl"))
    _binning_opts(p)
    _common(p)

    p = sub.add_parser("fit-forecast", help="select, tune, fit and forecast every cell")
    p.add_argument("panel")
    p.add_argument("-o", "--out-dir", required=True)
    p.add_argument("--horizons", type=_ints)
    p.add_argument("--levels", type=_floats, help="interval levels, e.g. 0.8,0.9,0.95")
    p.add_argument("--init-window", type=int, dest="init_window")
    p.add_argument("--workers", type=int)
    p.add_argument("--include-W", action="store_const", const=True, dest="include_W")
    p.add_argument("--resume", action="store_true", help="continue from snapshots in OUT_DIR/models")
    p.add_argument("--checkpoint-every", type=int, default=0, metavar="N",
                   help="snapshot each cell every N bins (0 = only when done)")
    p.add_argument("--no-params", action="store_true", help="omit distribution parameters")
    _common(p)

    p = sub.add_parser("evaluate", help="metric tables for a forecasts file")
    p.add_argument("forecasts")
    p.add_argument("panel")
    p.add_argument("-o", "--out-dir", required=True)
    p.add_argument("--baseline", help="add a baseline column, e.g. seasonal:96")
    p.add_argument("--eval-start", type=int, dest="eval_start",
                   help="score targets after this bin (default: the fit's init window)")
    _common(p)

    p = sub.add_parser("synth", help="generate a synthetic panel or trajectory file")
    p.add_argument("kind", choices=("panel", "trajectories"))
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--truth", help="ground-truth sidecar JSON (panel only)")
    p.add_argument("--cells", type=int, dest="n_cells")
    p.add_argument("--agents", type=int, default=200)
    p.add_argument("--days", type=int)
    p.add_argument("--bin-width", type=int, dest="bin_width")
    p.add_argument("--level", type=int)
    p.add_argument("--base-rate", type=_range, dest="base_rate", metavar="LOW,HIGH")
    p.add_argument("--amplitude", type=_range, metavar="LOW,HIGH")
    p.add_argument("--sparsity", type=_range, metavar="LOW,HIGH")
    p.add_argument("--offset-hours", type=float, dest="offset_hours")
    p.add_argument("--texture", type=float)
    p.add_argument("--jitter-m", type=float, default=0.0, dest="jitter_m")
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--stationary", action="store_true")
    p.add_argument("--sample-interval", type=int, default=60, dest="sample_interval")
    _common(p)
    return parser


def load_config(args, keys) -> PipelineConfig:
    config = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    return config.with_overrides(**{k: getattr(args, k, None) for k in keys})


def _synth(args):
    from .synth import SynthConfig, TrajectoryConfig
    seed = args.seed if args.seed is not None else 0
    if args.kind == "panel":
        keys = ("n_cells", "days", "bin_width", "level", "base_rate", "amplitude", "sparsity",
                "offset_hours", "texture")
        base = SynthConfig()
        if args.config:
            with open(args.config, encoding="utf-8") as fh:
                base = SynthConfig.from_dict(json.load(fh))
        cfg = base.with_overrides(seed=seed, **{k: getattr(args, k) for k in keys})
        return pipeline.run_synth_panel(args.output, cfg, args.truth)
    traj = TrajectoryConfig(sample_interval=args.sample_interval, jitter_m=args.jitter_m,
                            dropout=args.dropout, stationary=args.stationary, seed=seed)
    return pipeline.run_synth_trajectories(args.output, args.agents, args.days or 7, traj)


def run(args) -> dict:
    if args.command == "binify":
        config = load_config(args, ("level", "bin_width", "origin", "n_bins", "seed"))
        return pipeline.run_binify(args.input, args.output, config, args.format)
    if args.command == "fit-forecast":
        config = load_config(args, ("horizons", "levels", "init_window", "workers", "include_W", "seed"))
        if args.checkpoint_every < 0:
            raise ConfigError("--checkpoint-every must be >= 0")
        return pipeline.run_fit_forecast(args.panel, args.out_dir, config, args.resume,
                                         args.checkpoint_every, not args.no_params)
    if args.command == "evaluate":
        config = load_config(args, ("eval_start", "seed"))
        return pipeline.run_evaluate(args.forecasts, args.panel, args.out_dir, config, args.baseline)
    return _synth(args)


def _print_report(report: dict) -> None:
    cmd = report["command"]
    if cmd == "binify":
        print(f"records={report['records']} rejected={report['rejected']} "
              f"cells={report['cells']} T={report['n_bins']} level={report['level']} "
              f"width={report['width']}s")
    elif cmd == "fit-forecast":
        t = report["timing"]
        ms = f"{t['ms_per_step']:.3f}" if t["ms_per_step"] is not None else "n/a"
        print(f"run_id={report['run_id']} cells={report['cells']} failed={len(report['failed'])} "
              f"families={json.dumps(report['families'])} ms_per_step={ms} "
              f"wall={t['wall_seconds']:.1f}s")
    elif cmd == "evaluate":
        table = report["table"]
        if table:
            cols = list(table[0])
            print("\t".join(cols))
            for row in table:
                print("\t".join(str(row[c]) for c in cols))
    else:
        print(json.dumps(report, sort_keys=True))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        report = run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InputError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    _print_report(report)
    if report.get("failed"):
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
