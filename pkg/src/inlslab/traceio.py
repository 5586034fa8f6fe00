"""On-disk layout for evolution traces.

<dir>/trace.json        run metadata (b, grid, dt, termination, config)
<dir>/monitors.csv      t,mass,energy,grad_sq,potential,grad_product,sup_u,boundary_frac
<dir>/lr_monitors.csv   t plus one ||u||_{L^r} column per recorded exponent (optional)
<dir>/snapshots.json    manifest: index, t, file for every snapshot
<dir>/snapshots/*.csv   field files (r,re_u,im_u)
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .dynamics import MONITOR_COLUMNS, EvolutionTrace, EvolveConfig, Termination, lr_monitor_key
from .exponents import format_rational, parse_rational, InlsParams
from .radial import RadialGrid, read_field_csv, write_field_csv


def _fmt(x) -> str:
    return repr(float(x))


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) if isinstance(x, (float, np.floating)) else x for x in row])


def save_trace(trace: EvolutionTrace, directory) -> list[str]:
    """Write ``trace`` under ``directory``; returns the relative paths written."""
    d = Path(directory)
    (d / "snapshots").mkdir(parents=True, exist_ok=True)
    written = []
    meta = trace.metadata()
    meta["b"] = format_rational(trace.params.b)
    write_json(d / "trace.json", meta)
    written.append("trace.json")
    write_csv(d / "monitors.csv", MONITOR_COLUMNS, trace.monitor_rows())
    written.append("monitors.csv")
    lr = list(trace.config.lr_exponents)
    if lr:
        cols = [trace.times] + [trace.monitors[lr_monitor_key(q)] for q in lr]
        write_csv(d / "lr_monitors.csv", ["t"] + [f"L{q!r}" for q in lr], zip(*cols))
        written.append("lr_monitors.csv")
    entries = []
    for i, (t, fld) in enumerate(zip(trace.snapshot_times, trace.fields())):
        name = f"snapshots/snap_{i:05d}.csv"
        write_field_csv(d / name, fld)
        entries.append({"index": i, "t": float(t), "file": name})
        written.append(name)
    write_json(d / "snapshots.json", {"snapshots": entries})
    written.append("snapshots.json")
    return written


def _read_columns(path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def load_trace(directory) -> EvolutionTrace:
    d = Path(directory)
    if not (d / "trace.json").is_file():
        raise FileNotFoundError(f"{d} holds no trace.json")
    meta = json.loads((d / "trace.json").read_text(encoding="utf-8"))
    params = InlsParams(parse_rational(meta["b"]))
    grid = RadialGrid(meta["r_max"], meta["n"], params.b)
    cfg = dict(meta["config"])
    cfg["lr_exponents"] = tuple(cfg.get("lr_exponents", ()))
    config = EvolveConfig(**cfg)
    header, data = _read_columns(d / "monitors.csv")
    if tuple(header) != MONITOR_COLUMNS:
        raise ValueError(f"unexpected monitor columns {header}")
    times = data[:, 0]
    monitors = {name: data[:, j] for j, name in enumerate(header) if j}
    if config.lr_exponents:
        _, lr = _read_columns(d / "lr_monitors.csv")
        for j, q in enumerate(config.lr_exponents, start=1):
            monitors[lr_monitor_key(q)] = lr[:, j]
    manifest = json.loads((d / "snapshots.json").read_text(encoding="utf-8"))["snapshots"]
    snaps = [read_field_csv(d / e["file"], params.b, grid.r_max).v for e in manifest]
    return EvolutionTrace(
        params=params,
        grid=grid,
        dt=meta["dt"],
        times=times,
        monitors=monitors,
        snapshot_times=np.array([e["t"] for e in manifest]),
        snapshots=snaps,
        termination=Termination(meta["termination"]),
        config=config,
        blowup_reason=meta.get("blowup_reason"),
    )
