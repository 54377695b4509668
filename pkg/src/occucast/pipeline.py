"""Batch pipeline behind the CLI: binify, fit-forecast, evaluate, synth.

Every artifact embeds the configuration that produced it. Per-cell seeds are
derived from the root seed and the cell token (``cell_seed``), so a cell's
output does not depend on worker count or scheduling order.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .errors import InputError, NumericalError
from .forecasting import HorizonTrace, run_series
from .geo_binning import (CellId, OccupancyPanel, PanelAccumulator, iter_observations,
                          read_panel, write_observations, write_panel)
from .metrics import interval_coverage, point_metrics, seasonal_naive
from .selection import initialize_cell, select_family
from .serialization import atomic_write_json, dump_model, load_model

log = logging.getLogger(__name__)

FORECAST_FORMAT = "occucast-forecasts"
SNAPSHOT_VERSION = 1


def cell_seed(root: int, token: str) -> int:
    digest = hashlib.blake2b(f"{root}:{token}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1


def panel_fingerprint(panel: OccupancyPanel) -> str:
    """Identifies a panel's shape (resolution, window, cell set), not its counts."""
    h = hashlib.sha256()
    h.update(f"{panel.level}|{panel.width}|{panel.origin}|{panel.n_bins}|".encode())
    for cell in panel.cells:
        h.update(cell.token.encode() + b";")
    return h.hexdigest()[:16]


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _safe_name(token: str) -> str:
    return token.replace("/", "_")


# -- binify -----------------------------------------------------------------

def run_binify(input_path, output_path, config: PipelineConfig, fmt: str | None = None) -> dict:
    """Bin an observation file into a panel file; returns the report."""
    input_path = Path(input_path)
    if not input_path.is_file():
        raise InputError(f"cannot read input {input_path}", field="input")
    t0 = time.perf_counter()
    acc = PanelAccumulator(config.level, config.bin_width, config.origin)
    acc.add_all(iter_observations(input_path, acc, fmt))
    panel = acc.to_panel(config.n_bins)
    seconds = time.perf_counter() - t0
    meta = {"config": config.to_dict(), "source": input_path.name, "records": acc.n_records,
            "rejections": dict(sorted(panel.rejections.items()))}
    write_panel(output_path, panel, meta)
    report = {
        "command": "binify", "input": str(input_path), "output": str(output_path),
        "records": acc.n_records, "rejected": sum(panel.rejections.values()),
        "rejections": dict(sorted(panel.rejections.items())), "cells": len(panel),
        "n_bins": panel.n_bins, "level": panel.level, "width": panel.width,
        "origin": panel.origin, "seconds": seconds, "config": config.to_dict(),
    }
    atomic_write_json(Path(str(output_path) + ".report.json"), report)
    return report


# -- fit-forecast -----------------------------------------------------------

@dataclass
class CellResult:
    cell: str
    family: str | None
    decision: dict | None
    traces: dict[int, dict] = field(default_factory=dict)
    init_seconds: float = 0.0
    fit_seconds: float = 0.0
    steps: int = 0
    error: str | None = None
    resumed_from: int | None = None


def _snapshot(path, token, model, decision, traces, steps, seconds, init_seconds, complete):
    atomic_write_json(path, {
        "version": SNAPSHOT_VERSION, "cell": token, "complete": complete, "t": model.t,
        "decision": decision, "model": dump_model(model), "steps": steps,
        "fit_seconds": seconds, "init_seconds": init_seconds,
        "traces": {str(k): tr.to_dict() for k, tr in traces.items()},
    })


def _load_snapshot(path, token):
    try:
        snap = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"corrupt snapshot {path}: {exc}") from None
    if not isinstance(snap, dict) or snap.get("version") != SNAPSHOT_VERSION or snap.get("cell") != token:
        raise InputError(f"corrupt snapshot {path}: wrong version or cell")
    model = load_model(snap["model"])
    try:
        traces = {int(k): HorizonTrace.from_dict(v) for k, v in snap["traces"].items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"corrupt snapshot {path}: {exc}") from None
    if model.t != snap["t"]:
        raise InputError(f"corrupt snapshot {path}: state time {model.t} != {snap['t']}")
    return snap, model, traces


def fit_cell(token: str, counts: np.ndarray, config: PipelineConfig, snapshot_dir: str | None = None,
             resume: bool = False, checkpoint_every: int = 0, record_params: bool = True) -> CellResult:
    """Initialize, then forecast and update one cell through its whole series."""
    path = Path(snapshot_dir) / f"{_safe_name(token)}.json" if snapshot_dir else None
    seed = cell_seed(config.seed, token)
    resumed_from = None
    if resume and path is not None and path.exists():
        snap, model, traces = _load_snapshot(path, token)
        decision, init_seconds = snap["decision"], snap["init_seconds"]
        steps0, seconds0 = snap["steps"], snap["fit_seconds"]
        resumed_from = model.t
        if snap["complete"]:
            return CellResult(token, decision["family"], decision,
                              {k: tr.to_dict() for k, tr in traces.items()}, init_seconds,
                              seconds0, steps0, resumed_from=resumed_from)
    else:
        t0 = time.perf_counter()
        dec = select_family(counts[:config.init_window], config.mean_threshold, config.sparsity_threshold)
        model = initialize_cell(counts, config, seed, dec)
        init_seconds = time.perf_counter() - t0
        decision = dec.to_dict() | {"discounts": model.discounts.to_dict(), "state_dim": model.dim,
                                    "seed": seed}
        traces, steps0, seconds0 = None, 0, 0.0

    hook = None
    if path is not None and checkpoint_every > 0:
        started = time.perf_counter()

        def hook(m, trs):
            if m.t % checkpoint_every == 0 and m.t < counts.size:
                _snapshot(path, token, m, decision, trs, steps0 + m.t - (resumed_from or 0),
                          seconds0 + time.perf_counter() - started, init_seconds, False)

    run = run_series(model, counts, config.horizons, config.levels, emit_after=config.init_window,
                     include_W=config.include_W, record_params=record_params,
                     traces=traces, on_step=hook)
    steps, seconds = steps0 + run.n_steps, seconds0 + run.seconds
    if path is not None:
        _snapshot(path, token, model, decision, run.traces, steps, seconds, init_seconds, True)
    return CellResult(token, decision["family"], decision,
                      {k: tr.to_dict() for k, tr in run.traces.items()}, init_seconds, seconds,
                      steps, resumed_from=resumed_from)


def _fit_cell_task(args):
    token, counts, config_dict, snapshot_dir, resume, checkpoint_every, record_params = args
    config = PipelineConfig.from_dict(config_dict)
    try:
        return fit_cell(token, counts, config, snapshot_dir, resume, checkpoint_every, record_params)
    except NumericalError as exc:
        return CellResult(token, None, None, error=f"{type(exc).__name__}: {exc}")


def fit_panel(panel: OccupancyPanel, config: PipelineConfig, snapshot_dir=None, resume=False,
              checkpoint_every: int = 0, record_params: bool = True):
    """Yield ``CellResult`` in cell order; cells run in a process pool when ``workers > 1``."""
    if panel.n_bins < config.init_window:
        raise InputError(f"panel has {panel.n_bins} bins; initialization needs "
                         f"{config.init_window}", field="n_bins")
    tasks = [(c.token, panel.counts(c), config.to_dict(), snapshot_dir, resume,
              checkpoint_every, record_params) for c in panel.cells]
    if config.workers == 1:
        for task in tasks:
            yield _fit_cell_task(task)
        return
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        yield from pool.map(_fit_cell_task, tasks, chunksize=max(1, len(tasks) // (4 * config.workers)))


def run_fit_forecast(panel_path, out_dir, config: PipelineConfig, resume: bool = False,
                     checkpoint_every: int = 0, record_params: bool = True) -> dict:
    """Fit every cell and write forecasts, decisions, snapshots and a manifest."""
    wall0 = time.perf_counter()
    panel, _ = read_panel(panel_path)
    out = Path(out_dir)
    models = out / "models"
    models.mkdir(parents=True, exist_ok=True)
    fingerprint = panel_fingerprint(panel)
    run_id = hashlib.sha256(json.dumps([fingerprint, file_digest(panel_path), config.to_dict()],
                                       sort_keys=True).encode()).hexdigest()[:16]
    header = {"kind": "header", "format": FORECAST_FORMAT, "version": 1, "run_id": run_id,
              "panel": fingerprint, "panel_digest": file_digest(panel_path),
              "config": config.to_dict(), "level": panel.level, "width": panel.width,
              "origin": panel.origin, "n_bins": panel.n_bins}
    families: dict[str, int] = {}
    failures, resumed = [], 0
    init_s = fit_s = 0.0
    steps = 0
    tmp_fc = out / ".forecasts.jsonl.tmp"
    tmp_dec = out / ".decisions.jsonl.tmp"
    with open(tmp_fc, "w", encoding="utf-8") as fc_fh, open(tmp_dec, "w", encoding="utf-8") as dec_fh:
        fc_fh.write(json.dumps(header, sort_keys=True) + "\n")
        for res in fit_panel(panel, config, str(models), resume, checkpoint_every, record_params):
            if res.error:
                log.error("cell %s failed: %s", res.cell, res.error)
                failures.append({"cell": res.cell, "error": res.error})
                continue
            families[res.family] = families.get(res.family, 0) + 1
            resumed += res.resumed_from is not None
            init_s += res.init_seconds
            fit_s += res.fit_seconds
            steps += res.steps
            dec_fh.write(json.dumps({"cell": res.cell} | res.decision, sort_keys=True) + "\n")
            for k in sorted(res.traces):
                rec = {"kind": "forecast", "cell": res.cell, "family": res.family} | res.traces[k]
                fc_fh.write(json.dumps(rec) + "\n")
    os.replace(tmp_fc, out / "forecasts.jsonl")
    os.replace(tmp_dec, out / "decisions.jsonl")
    manifest = {
        "command": "fit-forecast", "run_id": run_id, "panel": str(panel_path),
        "panel_fingerprint": fingerprint, "cells": len(panel), "failed": failures,
        "families": dict(sorted(families.items())), "resumed_cells": resumed,
        "timing": {"wall_seconds": time.perf_counter() - wall0, "init_seconds": init_s,
                   "fit_seconds": fit_s, "steps": steps,
                   "ms_per_step": 1000.0 * fit_s / steps if steps else None},
        "config": config.to_dict(),
    }
    atomic_write_json(out / "manifest.json", manifest)
    return manifest


# -- evaluate ---------------------------------------------------------------

def read_forecasts(path) -> tuple[dict, list[dict]]:
    with open(path, encoding="utf-8") as fh:
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: unreadable forecast header ({exc})") from None
        if header.get("format") != FORECAST_FORMAT:
            raise InputError(f"{path}: not a forecasts file")
        records = [json.loads(line) for line in fh if line.strip()]
    return header, records


def parse_baseline(spec: str | None) -> int | None:
    if spec is None:
        return None
    kind, _, arg = spec.partition(":")
    if kind != "seasonal":
        raise InputError(f"unknown baseline {spec!r}; expected seasonal:<period>", field="baseline")
    try:
        period = int(arg) if arg else 96
    except ValueError:
        raise InputError(f"bad baseline period in {spec!r}", field="baseline") from None
    if period < 1:
        raise InputError("baseline period must be >= 1", field="baseline")
    return period


def evaluate_record(rec: dict, counts: np.ndarray, start: int, baseline: int | None) -> dict:
    """Metrics for one (cell, horizon) record over targets ``> start``."""
    target = np.asarray(rec["target"], dtype=int)
    lo_bound = max(start, baseline) if baseline else start
    keep = target > lo_bound
    y = counts[target[keep] - 1].astype(float)
    med = np.asarray(rec["median"], dtype=float)[keep]
    rmse, mae, z = point_metrics(y, med)
    lower = np.asarray(rec["lower"], dtype=float).reshape(len(target), -1)[keep]
    upper = np.asarray(rec["upper"], dtype=float).reshape(len(target), -1)[keep]
    out = {"cell": rec["cell"], "family": rec["family"], "horizon": rec["horizon"],
           "n_steps": int(keep.sum()), "rmse": rmse, "mae": mae, "zape": z,
           "coverage": {str(lv): interval_coverage(y, lower[:, i], upper[:, i])
                        for i, lv in enumerate(rec["levels"])}}
    if baseline:
        naive = seasonal_naive(counts, baseline)[target[keep] - 1]
        b = point_metrics(y, naive)
        out["baseline"] = {"name": f"seasonal:{baseline}", "rmse": b[0], "mae": b[1], "zape": b[2]}
    return out


def _fmt(values) -> str:
    v = np.asarray([x for x in values if x is not None and math.isfinite(x)], dtype=float)
    if v.size == 0:
        return "nan"
    return f"{v.mean():.3f} ± {v.std():.3f}"


def aggregate(rows: list[dict], level: int, levels, baseline: bool) -> list[dict]:
    """Mean ± std across cells per (family, horizon), plus an ``all`` family row."""
    groups: dict[tuple[str, int], list[dict]] = {}
    for r in rows:
        groups.setdefault((r["family"], r["horizon"]), []).append(r)
        groups.setdefault(("all", r["horizon"]), []).append(r)
    table = []
    for (fam, k) in sorted(groups, key=lambda g: (g[1], g[0] == "all", g[0])):
        g = groups[(fam, k)]
        row = {"level": level, "family": fam, "horizon": k, "cells": len(g),
               "rmse": _fmt(r["rmse"] for r in g), "mae": _fmt(r["mae"] for r in g),
               "zape": _fmt(r["zape"] for r in g)}
        for lv in levels:
            row[f"coverage_{lv}"] = _fmt(100.0 * r["coverage"][str(lv)] for r in g)
        if baseline:
            for m in ("rmse", "mae", "zape"):
                row[f"baseline_{m}"] = _fmt(r["baseline"][m] for r in g)
        table.append(row)
    return table


def run_evaluate(forecasts_path, panel_path, out_dir, config: PipelineConfig,
                 baseline: str | None = None) -> dict:
    period = parse_baseline(baseline)
    header, records = read_forecasts(forecasts_path)
    panel, _ = read_panel(panel_path)
    if header.get("panel") != panel_fingerprint(panel):
        raise InputError("forecasts and panel come from different runs "
                         f"(panel {header.get('panel')} vs {panel_fingerprint(panel)})", field="panel")
    if header.get("panel_digest") != file_digest(panel_path):
        log.warning("panel counts differ from the fitted panel; evaluating against the given counts")
    start = config.metric_start if config.eval_start is not None else \
        header["config"].get("eval_start") or header["config"]["init_window"]
    rows = []
    for rec in records:
        rows.append(evaluate_record(rec, panel.counts(CellId.from_token(rec["cell"])), start, period))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.jsonl", "w", encoding="utf-8") as fh:
        for r in rows:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    levels = header["config"]["levels"]
    table = aggregate(rows, panel.level, levels, period is not None)
    buf = io.StringIO()
    if table:
        writer = csv.DictWriter(buf, fieldnames=list(table[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(table)
    (out / "summary.csv").write_text(buf.getvalue(), encoding="utf-8")
    summary = {"command": "evaluate", "run_id": header["run_id"], "eval_start": start,
               "baseline": baseline, "records": len(rows), "table": table}
    atomic_write_json(out / "evaluation.json", summary)
    return summary


# -- synth ------------------------------------------------------------------

def run_synth_panel(out_path, synth_config, truth_path=None) -> dict:
    from .synth import generate_panel, write_truth
    t0 = time.perf_counter()
    panel, truth = generate_panel(synth_config)
    write_panel(out_path, panel, {"synth": synth_config.to_dict()})
    if truth_path:
        write_truth(truth_path, truth)
    return {"command": "synth", "kind": "panel", "output": str(out_path), "cells": len(panel),
            "n_bins": panel.n_bins, "seconds": time.perf_counter() - t0}


def run_synth_trajectories(out_path, n_agents: int, days: int, traj_config) -> dict:
    from .synth import generate_trajectories
    t0 = time.perf_counter()
    n = write_observations(out_path, generate_trajectories(n_agents, days, traj_config))
    return {"command": "synth", "kind": "trajectories", "output": str(out_path), "agents": n_agents,
            "days": days, "records": n, "seconds": time.perf_counter() - t0}
