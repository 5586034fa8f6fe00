"""Command-line front end.

Every subcommand validates its arguments before computing, then writes into a
run directory holding ``config.json`` (the arguments verbatim),
``SCHEMA_VERSION`` and ``manifest.json`` (every file written). Without
``--out`` the directory is ``$INLSLAB_OUTPUT_ROOT/<subcommand>-<digest>``
(root defaults to ``./runs``), where the digest hashes the configuration,
so reruns of one configuration land in the same place.

Exit codes: 0 success, 1 internal error, 2 validation or usage error,
3 outcome differs from ``--expect`` (or the scattering state did not converge).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import (
    remainder_constant,
    scattering_state,
    strichartz_accumulator,
    virial_consistency,
)
from .dynamics import DYNAMICS_GRID, EvolveConfig, Termination, evolve
from .errors import InlsError, NotConverged
from .exponents import (
    as_params,
    check_admissible,
    format_rational,
    parse_rational,
    strichartz_panel,
    theta_range,
    working_exponents,
)
from .ground_state import GROUND_STATE_GRID, gn_constant, ground_state, shooting_oracle
from .invariants import classify, gaussian, h1_norm, outer_fraction, report
from .radial import ComplexRadialField, RadialGrid, read_field_csv, write_field_csv
from .traceio import load_trace, save_trace, write_csv, write_json

log = logging.getLogger("inlslab")

SCHEMA_VERSION = "1"
OUTPUT_ROOT_ENV = "INLSLAB_OUTPUT_ROOT"
BOUNDARY_WARN = 1e-6
SWEEP_COLUMNS = ("b", "amplitude", "me_ratio", "grad_ratio", "verdict", "termination", "t_final")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_MISMATCH = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


# -- argument types ----------------------------------------------------------


def _rational(text: str):
    try:
        return parse_rational(text)
    except (ValueError, TypeError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive(text: str) -> float:
    x = float(text)
    if not (x > 0 and math.isfinite(x)):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return x


def _count(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return n


def _rational_list(text: str) -> list:
    return [_rational(t) for t in text.split(",") if t.strip()]


def _float_list(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


# -- initial data ------------------------------------------------------------


def parse_init(text: str, grid: RadialGrid) -> ComplexRadialField:
    """gaussian:A, gaussian:A:w, groundstate, groundstate:c or file:<path>."""
    kind, _, rest = text.partition(":")
    if kind == "gaussian":
        parts = rest.split(":")
        if not rest or len(parts) > 2:
            raise ValueError(f"bad init value {text!r}; use gaussian:A or gaussian:A:w")
        amp = float(parts[0])
        width = float(parts[1]) if len(parts) == 2 else 1.0
        if not width > 0:
            raise ValueError("gaussian width must be positive")
        return gaussian(grid, amp, width)
    if kind == "groundstate":
        c = float(rest) if rest else 1.0
        # solved on the run grid so the datum is stationary for the discrete flow
        prof = ground_state(grid.b, grid.r_max, grid.n)
        return ComplexRadialField.from_u(grid, c * prof.q)
    if kind == "file":
        fld = read_field_csv(rest, grid.b)
        return fld
    raise ValueError(f"unknown init value {text!r}")


# -- run directory -----------------------------------------------------------


def _jsonable(x):
    if isinstance(x, (list, tuple)):
        return [_jsonable(y) for y in x]
    if hasattr(x, "numerator") and not isinstance(x, (int, bool)):
        return format_rational(x)
    if isinstance(x, Path):
        return str(x)
    return x


class RunDir:
    def __init__(self, sub: str, args: argparse.Namespace, argv: list[str]):
        config = {k: _jsonable(v) for k, v in sorted(vars(args).items()) if k not in ("func", "out")}
        config["subcommand"] = sub
        self.config = {"argv": list(argv), "args": config, "version": __version__}
        if args.out is not None:
            self.path = Path(args.out)
        else:
            digest = hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:12]
            root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
            self.path = root / f"{sub}-{digest}"
        self.path.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []
        self.json("config.json", self.config)
        (self.path / "SCHEMA_VERSION").write_text(SCHEMA_VERSION + "\n", encoding="utf-8")
        self.files.append("SCHEMA_VERSION")

    def json(self, name: str, obj) -> Path:
        write_json(self.path / name, obj)
        self.files.append(name)
        return self.path / name

    def csv(self, name: str, header, rows) -> Path:
        write_csv(self.path / name, header, rows)
        self.files.append(name)
        return self.path / name

    def add(self, names):
        self.files.extend(names)

    def close(self):
        files = sorted(set(self.files) | {"manifest.json"})
        write_json(self.path / "manifest.json", {"schema_version": SCHEMA_VERSION, "files": files})


def _print_json(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def _grid(args, default) -> RadialGrid:
    r_max = args.r_max if args.r_max is not None else default[0]
    n = args.n if args.n is not None else default[1]
    return RadialGrid(r_max, n, args.b)


def _warn_boundary(frac: float, what: str):
    if frac > BOUNDARY_WARN:
        print(f"warning: {what} holds {frac:.3g} of its mass in the outer 10% of the grid", file=sys.stderr)


# -- subcommands -------------------------------------------------------------


def cmd_admissible(args, run: RunDir) -> int:
    params = as_params(args.b)
    rng = theta_range(params)
    theta = args.theta if args.theta is not None else rng.midpoint()
    exps = working_exponents(params, theta)
    rows = []
    names = {"L2": "q_hat/r_hat", "HsDot": "a_hat/r_hat", "HsDotDual": "a_tilde/r_hat"}
    for pair in exps.pairs():
        rows.append(
            {
                "pair": names[pair.cls.value],
                "class": pair.cls.value,
                "q": format_rational(pair.q),
                "r": format_rational(pair.r),
                "admissible": check_admissible(pair, params),
            }
        )
    out = {
        "b": format_rational(params.b),
        "s_c": format_rational(params.s_c),
        "theta": format_rational(exps.theta),
        "theta_range": {
            "lower": format_rational(rng.lower),
            "upper": format_rational(rng.upper),
            "binding": rng.binding,
            "bounds": {k: format_rational(v) for k, v in rng.bounds.items()},
            "contains_theta": exps.theta in rng,
        },
        "pairs": rows,
    }
    run.json("exponents.json", out)
    print(f"# b = {out['b']}, s_c = {out['s_c']}, theta = {out['theta']}, "
          f"theta range ({out['theta_range']['lower']}, {out['theta_range']['upper']}) bound by {rng.binding}")
    print("pair,q,r,class,satisfied")
    for row in rows:
        print(f"{row['pair']},{row['q']},{row['r']},{row['class']},{str(row['admissible']).lower()}")
    return EXIT_OK


def cmd_ground_state(args, run: RunDir) -> int:
    grid = _grid(args, GROUND_STATE_GRID)
    prof = ground_state(args.b, grid.r_max, grid.n)
    rep = prof.report()
    c_direct, c_closed = gn_constant(prof)
    rep["c_gn_direct"] = c_direct
    rep["c_gn_closed"] = c_closed
    rep["grid"] = {"r_max": grid.r_max, "n": grid.n}
    if args.oracle:
        shot = shooting_oracle(args.b, grid=prof.grid)
        rep["oracle"] = {
            "alpha": shot.alpha,
            "r_match": shot.r_match,
            "max_rel_diff": float(np.max(np.abs(shot.q - prof.q)) / np.max(prof.q)),
        }
    run.json("ground_state.json", rep)
    run.csv("profile.csv", ["r", "q"], zip(prof.grid.r, prof.q))
    _print_json(rep)
    return EXIT_OK


def cmd_classify(args, run: RunDir) -> int:
    grid = _grid(args, DYNAMICS_GRID)
    u0 = parse_init(args.init, grid)
    prof = ground_state(args.b)
    verdict = classify(u0, prof, args.boundary_tol)
    out = {
        "verdict": verdict.as_dict(),
        "invariants": report(u0, args.b).as_dict(),
        "threshold_me": prof.threshold_me,
        "threshold_grad": prof.threshold_grad,
    }
    _warn_boundary(outer_fraction(u0), "initial datum")
    run.json("classify.json", out)
    _print_json(out)
    return EXIT_OK


_EXPECT = {
    "reach": {Termination.REACHED_T},
    "scatter": {Termination.REACHED_T},
    "blowup": {Termination.BLOWUP_DETECTED},
}


def _evolve_config(args, params) -> EvolveConfig:
    lr = [p.as_floats()[1] for p in strichartz_panel(params)] if args.lr_panel else []
    return EvolveConfig(
        snap_stride=args.snap_stride,
        blowup_factor=args.blowup_factor,
        boundary_limit=args.boundary_limit,
        lr_exponents=lr,
    )


def _drifts(trace) -> dict:
    m, e = trace.monitors["mass"], trace.monitors["energy"]
    return {
        "mass_drift": float(np.max(np.abs(m - m[0])) / m[0]) if m[0] else 0.0,
        "energy_drift": float(np.max(np.abs(e - e[0])) / abs(e[0])) if e[0] else 0.0,
    }


def cmd_evolve(args, run: RunDir) -> int:
    params = as_params(args.b)
    grid = _grid(args, DYNAMICS_GRID)
    u0 = parse_init(args.init, grid)
    config = _evolve_config(args, params)
    trace = evolve(u0, args.T, args.dt, params, config, backward=args.backward)
    run.add("trace/" + f for f in save_trace(trace, run.path / "trace"))
    prof = ground_state(params.b)
    gp = trace.monitors["grad_product"] / prof.threshold_grad
    summary = {
        **trace.metadata(),
        **_drifts(trace),
        "b": format_rational(params.b),
        "initial_verdict": classify(u0, prof).as_dict(),
        "max_grad_ratio": float(np.max(gp)),
        "final_boundary_frac": float(trace.monitors["boundary_frac"][-1]),
    }
    run.json("summary.json", summary)
    _warn_boundary(float(np.max(trace.monitors["boundary_frac"])), "the evolving field")
    print(f"termination: {trace.termination.value} at t = {trace.t_final:.17g}")
    print(f"trace: {run.path / 'trace'}")
    if args.expect is not None and trace.termination not in _EXPECT[args.expect]:
        print(f"expected {args.expect}, got {trace.termination.value}", file=sys.stderr)
        return EXIT_MISMATCH
    return EXIT_OK


def cmd_virial(args, run: RunDir) -> int:
    trace = load_trace(args.trace)
    vc = virial_consistency(trace, args.R)
    closure = np.abs(vc.z_formula - vc.z_untruncated)
    out = {
        "R": args.R,
        "snapshots": int(vc.times.size),
        "max_residual": vc.max_residual,
        "remainder_constant": remainder_constant(trace.params),
        "max_truncation_effect": float(np.max(closure)),
    }
    run.json("virial.json", out)
    run.csv("virial.csv", ["t", "z", "d2z_fd", "d2z_formula", "d2z_untruncated"], vc.rows())
    _print_json(out)
    return EXIT_OK


def cmd_scatter(args, run: RunDir) -> int:
    trace = load_trace(args.trace)
    t = trace.snapshot_times
    direction = "forward" if t[-1] >= t[0] else "backward"
    try:
        sr = scattering_state(trace, direction, tail_tol=args.T_tail)
    except NotConverged as exc:
        print(f"scattering state not converged: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    sp = sr.strichartz_partials
    labels = [f"S_{format_rational(p.q)}_{format_rational(p.r)}" for p in sp.pairs]
    out = {
        "direction": direction,
        "duhamel_tail": sr.duhamel_tail,
        "phi_norm_h1": sr.phi_norm,
        "u0_norm_h1": sr.u0_norm,
        "final_h1_distance": float(sr.h1_distance[-1]),
        "strichartz_pairs": [[format_rational(p.q), format_rational(p.r)] for p in sp.pairs],
        "strichartz_totals": [float(s[-1]) for s in sp.series],
        "last_decade_fraction": sp.last_decade_fraction(),
    }
    run.json("scatter.json", out)
    run.csv("scatter.csv", ["t", "h1_distance", *labels], sr.rows())
    write_field_csv(run.path / "phi_plus.csv", sr.phi_plus)
    run.add(["phi_plus.csv"])
    _print_json(out)
    return EXIT_OK


# -- sweep -------------------------------------------------------------------


def _decile_values(t: np.ndarray, y: np.ndarray) -> list[float]:
    marks = np.linspace(t[0], t[-1], 11)
    return [float(v) for v in np.interp(np.abs(marks), np.abs(t), y)]


def sweep_point(task: dict) -> tuple[dict, dict]:
    """Classify and evolve one (b, amplitude); never raises."""
    row = {"b": task["b"], "amplitude": task["amplitude"]}
    detail: dict = {}
    try:
        params = as_params(parse_rational(task["b"]))
        grid = RadialGrid(task["r_max"], task["n"], params.b)
        u0 = gaussian(grid, task["amplitude"], task["width"])
        prof = ground_state(params.b)
        verdict = classify(u0, prof)
        row.update(me_ratio=verdict.me_ratio, grad_ratio=verdict.grad_ratio, verdict=verdict.tag.value)
        pairs = strichartz_panel(params)
        config = EvolveConfig(snap_stride=task["snap_stride"], lr_exponents=[p.as_floats()[1] for p in pairs])
        trace = evolve(u0, task["T"], task["dt"], params, config)
        row.update(termination=trace.termination.value, t_final=trace.t_final)
        gp = trace.monitors["grad_product"] / prof.threshold_grad
        detail.update(_drifts(trace))
        detail["max_grad_ratio"] = float(np.max(gp))
        detail["blowup_reason"] = trace.blowup_reason
        detail["max_boundary_frac"] = float(np.max(trace.monitors["boundary_frac"]))
        detail["u0_norm_h1"] = h1_norm(u0)
        if task["diagnose"]:
            if trace.termination is Termination.REACHED_T:
                sr = scattering_state(trace, "forward", tail_tol=None)
                detail["scattering"] = {
                    "duhamel_tail": sr.duhamel_tail,
                    "phi_norm_h1": sr.phi_norm,
                    "h1_distance_deciles": _decile_values(sr.times, sr.h1_distance),
                    "final_h1_distance": float(sr.h1_distance[-1]),
                    "last_decade_fraction": sr.strichartz_partials.last_decade_fraction(),
                }
            elif trace.termination is Termination.BLOWUP_DETECTED:
                g = trace.monitors["grad_sq"][-51:]
                st = strichartz_accumulator(trace, pairs)
                i0 = int(np.searchsorted(np.abs(st.times), 0.9 * abs(st.times[-1])))
                detail["blowup"] = {
                    "terminal_grad_monotone": bool(np.all(np.diff(g) > 0)),
                    "terminal_rate_monotone": [bool(np.all(np.diff(r[i0:]) > 0)) for r in st.rates()],
                }
    except Exception as exc:  # recorded per point, the sweep goes on
        row.setdefault("me_ratio", math.nan)
        row.setdefault("grad_ratio", math.nan)
        row.setdefault("verdict", "Error")
        row.update(termination=f"Error:{type(exc).__name__}", t_final=math.nan)
        detail["error"] = f"{type(exc).__name__}: {exc}"
    return row, detail


def run_sweep(tasks: list[dict], jobs: int = 1) -> list[tuple[dict, dict]]:
    if jobs <= 1 or len(tasks) <= 1:
        return [sweep_point(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(sweep_point, tasks))


def sweep_tasks(bs, amplitudes, *, T, dt, width=1.0, r_max=DYNAMICS_GRID[0], n=DYNAMICS_GRID[1],
                snap_stride=10, diagnose=True) -> list[dict]:
    return [
        {
            "b": format_rational(parse_rational(b)),
            "amplitude": float(a),
            "width": width,
            "T": T,
            "dt": dt,
            "r_max": r_max,
            "n": n,
            "snap_stride": snap_stride,
            "diagnose": diagnose,
        }
        for b in bs
        for a in amplitudes
    ]


def cmd_sweep(args, run: RunDir) -> int:
    tasks = sweep_tasks(
        args.b,
        args.amplitudes,
        T=args.T,
        dt=args.dt,
        width=args.width,
        r_max=args.r_max if args.r_max is not None else DYNAMICS_GRID[0],
        n=args.n if args.n is not None else DYNAMICS_GRID[1],
        snap_stride=args.snap_stride,
        diagnose=not args.no_diagnose,
    )
    for t in tasks:
        RadialGrid(t["r_max"], t["n"], t["b"])  # validate before any point runs
        as_params(parse_rational(t["b"]))
    results = run_sweep(tasks, args.jobs)
    run.csv("sweep.csv", SWEEP_COLUMNS, ([row[c] for c in SWEEP_COLUMNS] for row, _ in results))
    if results:
        (run.path / "points").mkdir(exist_ok=True)
    for i, (row, detail) in enumerate(results):
        run.json(f"points/{i:04d}.json", {"row": row, "detail": detail})
    print(f"{len(results)} points -> {run.path / 'sweep.csv'}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="inlslab", description="Radial 3D focusing INLS laboratory.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    subs = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    subs.required = True

    def common(p, b_required=True, grid=True):
        p.add_argument("--b", type=_rational, required=b_required, help="inhomogeneity exponent as p/q")
        if grid:
            p.add_argument("--r-max", type=_positive, default=None, help="domain radius")
            p.add_argument("--n", type=_count, default=None, help="interior nodes (n + 1 a power of 2 is fastest)")
        p.add_argument("--out", type=Path, default=None, help=f"run directory (default under ${OUTPUT_ROOT_ENV})")
        p.add_argument("--seed", type=int, default=0, help="seed recorded for provenance")

    p = subs.add_parser("admissible", help="working exponents and their admissibility")
    common(p, grid=False)
    p.add_argument("--theta", type=_rational, default=None, help="default: midpoint of the feasible range")
    p.set_defaults(func=cmd_admissible)

    p = subs.add_parser(
        "ground-state",
        help="solve for Q and report thresholds",
        description="Writes ground_state.json and profile.csv (columns r,q).",
    )
    common(p)
    p.add_argument("--oracle", action="store_true", help="also shoot and compare profiles")
    p.set_defaults(func=cmd_ground_state)

    p = subs.add_parser("classify", help="threshold verdict for an initial datum")
    common(p)
    p.add_argument("--init", required=True, help="gaussian:A | gaussian:A:w | groundstate[:c] | file:<path>")
    p.add_argument("--boundary-tol", type=_positive, default=1e-5)
    p.set_defaults(func=cmd_classify)

    p = subs.add_parser(
        "evolve",
        help="split-step evolution",
        description="Writes trace/monitors.csv (t,mass,energy,grad_sq,potential,grad_product,"
        "sup_u,boundary_frac), trace/lr_monitors.csv, trace/snapshots/*.csv (r,re_u,im_u) "
        "indexed by trace/snapshots.json, and summary.json.",
    )
    common(p)
    p.add_argument("--init", required=True, help="gaussian:A | gaussian:A:w | groundstate[:c] | file:<path>")
    p.add_argument("--T", type=_positive, required=True)
    p.add_argument("--dt", type=_positive, required=True)
    p.add_argument("--snap-stride", type=_count, default=100)
    p.add_argument("--blowup-factor", type=_positive, default=20.0)
    p.add_argument("--boundary-limit", type=_positive, default=None, help="stop when the outer mass share exceeds this")
    p.add_argument("--no-lr-panel", dest="lr_panel", action="store_false", help="skip per-step L^r monitors")
    p.add_argument("--backward", action="store_true", help="integrate towards -T")
    p.add_argument("--expect", choices=sorted(_EXPECT), default=None)
    p.set_defaults(func=cmd_evolve)

    p = subs.add_parser(
        "virial",
        help="finite-difference check of the localized virial identity",
        description="Writes virial.json and virial.csv (t,z,d2z_fd,d2z_formula,d2z_untruncated).",
    )
    p.add_argument("--trace", type=Path, required=True, help="trace directory written by evolve")
    p.add_argument("--R", type=_positive, required=True)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_virial)

    p = subs.add_parser(
        "scatter",
        help="Duhamel scattering state and Strichartz panel",
        description="Writes scatter.json, scatter.csv (t,h1_distance,S_<q>_<r>...) and phi_plus.csv.",
    )
    p.add_argument("--trace", type=Path, required=True)
    p.add_argument("--T-tail", dest="T_tail", type=_positive, default=1e-4,
                   help="tolerance on the last Duhamel increment relative to ||phi||_H1")
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_scatter)

    p = subs.add_parser(
        "sweep",
        help="classify and evolve a Gaussian family over (b, amplitude)",
        description="Writes sweep.csv (b,amplitude,me_ratio,grad_ratio,verdict,termination,t_final) "
        "and points/NNNN.json with per-point diagnostics.",
    )
    p.add_argument("--b", type=_rational_list, required=True, help="comma-separated p/q values")
    p.add_argument("--amplitudes", type=_float_list, required=True, help="comma-separated amplitudes")
    p.add_argument("--width", type=_positive, default=1.0)
    p.add_argument("--T", type=_positive, required=True)
    p.add_argument("--dt", type=_positive, required=True)
    p.add_argument("--r-max", type=_positive, default=None)
    p.add_argument("--n", type=_count, default=None)
    p.add_argument("--snap-stride", type=_count, default=10)
    p.add_argument("--jobs", type=_count, default=1)
    p.add_argument("--no-diagnose", action="store_true", help="skip per-point scattering/blowup diagnostics")
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        run = RunDir(args.command, args, argv)
        code = args.func(args, run)
        run.close()
        return code
    except (InlsError, ValueError, FileNotFoundError) as exc:
        if isinstance(exc, InlsError) and not isinstance(exc, ValueError):
            print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
            return EXIT_INTERNAL
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
