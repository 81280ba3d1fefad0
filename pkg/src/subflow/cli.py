"""``subflow`` command-line interface.

Every command takes its parameters from flags, optionally layered over a JSON
file given with ``--config`` (flags win).  Outputs are plain CSV/JSON/text
files whose first lines are ``# key=value`` records of the resolved run
configuration, so a file is enough to repeat the run that produced it.

Exit codes: 0 ok, 2 invalid input, 3 FD domain overflow, 4 fit failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import numpy as np

from . import ek_operator as ek
from . import fd_solver as fd
from . import fitting
from .selfsim import (
    BoundaryCondition,
    SimilarityProblem,
    cumulative_moisture,
    profile,
    profile_derivative_at_zero,
    similarity_exponents,
    solve_similarity,
)

log = logging.getLogger("subflow")

EXIT_OK, EXIT_VALIDATION, EXIT_OVERFLOW, EXIT_FIT = 0, 2, 3, 4

COMMANDS = ("selfsim", "fd", "ek-error", "fit", "collapse")
TEST_FUNCTIONS = {"exp-decay": ek.exp_decay, "sqrt-support": ek.sqrt_support}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    parameters: dict = field(default_factory=dict)
    output_dir: Path = Path(".")

    def meta_lines(self) -> list[str]:
        lines = [f"# command={self.command}"]
        for k in sorted(self.parameters):
            lines.append(f"# {k}={json.dumps(self.parameters[k])}")
        return lines


# ---------------------------------------------------------------------------
# formatting
# ---------------------------------------------------------------------------


def fmt(v) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    return format(v, ".17g")


def write_csv(path: Path, cfg: RunConfig, header: Sequence[str], columns: Sequence[np.ndarray], extra_meta=()) -> None:
    cols = [np.asarray(c, dtype=float).ravel() for c in columns]
    n = len(cols[0])
    if any(len(c) != n for c in cols):
        raise ValueError("columns differ in length")
    out = cfg.meta_lines() + [f"# {line}" for line in extra_meta]
    out.append(",".join(header))
    for i in range(n):
        out.append(",".join(fmt(c[i]) for c in cols))
    _write(path, out)


def _write(path: Path, lines: list[str]) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        return float(v) if math.isfinite(v) else None
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    return v


def write_json(path: Path, cfg: RunConfig, payload: dict) -> None:
    doc = {"config": {"command": cfg.command, **cfg.parameters}, **_jsonable(payload)}
    _write(path, [json.dumps(doc, indent=2, sort_keys=True)])


def read_csv_meta(path: Path) -> tuple[dict, list[str], np.ndarray]:
    """Read a file written by :func:`write_csv`: ``(metadata, header, rows)``."""
    meta: dict[str, Any] = {}
    header: Optional[list[str]] = None
    rows = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        if not raw.strip():
            continue
        if raw.startswith("#"):
            body = raw[1:].strip()
            if "=" in body:
                k, v = body.split("=", 1)
                try:
                    meta[k.strip()] = json.loads(v)
                except json.JSONDecodeError:
                    meta[k.strip()] = v.strip()
            continue
        if header is None:
            header = [c.strip() for c in raw.split(",")]
            continue
        try:
            rows.append([float(c) for c in raw.split(",")])
        except ValueError:
            raise ConfigError(f"{path}: line {lineno}: not numeric: {raw!r}") from None
    if header is None:
        raise ConfigError(f"{path}: no header line")
    return meta, header, np.array(rows, dtype=float).reshape(-1, len(header))


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def _float_list(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    text = str(text).strip()
    if not text:
        return []
    return [float(v) for v in text.split(",")]


def _int_list(text) -> list[int]:
    vals = _float_list(text)
    if any(v != int(v) for v in vals):
        raise ConfigError(f"expected integers, got {text!r}")
    return [int(v) for v in vals]


# name -> (converter, default); a default of ``None`` means required
SCHEMAS: dict[str, dict[str, tuple[Callable, Any]]] = {
    "selfsim": {
        "alpha": (float, None),
        "m": (float, None),
        "bc": (str, "concentration"),
        "N": (int, 3),
        "eta_points": (int, 201),
        "t_min": (float, 0.01),
        "t_max": (float, 1.0),
        "t_points": (int, 50),
    },
    "fd": {
        "alpha": (float, None),
        "m": (float, None),
        "bc": (str, "flux"),
        "nx": (int, 600),
        "dx": (float, 0.3 / 599),
        "dt": (float, 2e-5),
        "t_end": (float, 0.1),
        "theta": (float, 1.0),
        "times": (_float_list, None),
        "collapse_times": (_float_list, None),
        "N": (int, 3),
    },
    "ek-error": {
        "beta": (float, None),
        "gamma": (float, None),
        "delta": (float, None),
        "N": (_int_list, [1, 3]),
        "function": (str, "exp-decay"),
        "eta_max": (float, None),
        "eta_points": (int, 200),
    },
    "fit": {
        "input": (str, None),
        "fix_m": (float, None),
        "N": (int, 3),
        "alpha0": (float, None),
        "D0_0": (float, None),
        "m0": (float, None),
        "time": (float, None),
        "amplitude": (float, None),
    },
    "collapse": {
        "history": (str, None),
        "alpha": (float, None),
        "m": (float, None),
        "bc": (str, None),
        "times": (_float_list, None),
        "N": (int, 3),
    },
}

# keys that may legitimately stay unset
OPTIONAL = {
    "fd": {"times", "collapse_times"},
    "ek-error": {"eta_max"},
    "fit": {"fix_m", "alpha0", "D0_0", "m0", "time", "amplitude"},
    "collapse": {"alpha", "m", "bc", "times"},
}


def resolve_config(command: str, flags: dict, config_file: Optional[str], output_dir: str) -> RunConfig:
    """Merge defaults, the JSON file and explicit flags, then convert types."""
    schema = SCHEMAS[command]
    raw = {k: d for k, (_, d) in schema.items()}
    if config_file:
        path = Path(config_file)
        if not path.is_file():
            raise ConfigError(f"config file not found: {config_file}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {config_file}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(doc) - set(schema) - {"command"}
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {sorted(unknown)}")
        raw.update({k: v for k, v in doc.items() if k in schema})
    raw.update({k: v for k, v in flags.items() if k in schema and v is not None})

    params = {}
    for k, (conv, _) in schema.items():
        v = raw[k]
        if v is None:
            if k in OPTIONAL.get(command, set()):
                params[k] = None
                continue
            raise ConfigError(f"missing required parameter: {k}")
        try:
            params[k] = conv(v)
        except (TypeError, ValueError):
            raise ConfigError(f"bad value for {k}: {v!r}") from None
    return RunConfig(command, params, Path(output_dir))


def _check(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def _bc(text: str) -> BoundaryCondition:
    try:
        return BoundaryCondition(text)
    except ValueError:
        raise ConfigError(f"bc must be 'concentration' or 'flux', got {text!r}") from None


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_selfsim(cfg: RunConfig) -> int:
    p = cfg.parameters
    _check(p["N"] >= 1, f"N must be at least 1, got {p['N']}")
    _check(p["eta_points"] >= 2, "eta_points must be at least 2")
    _check(p["t_points"] >= 1, "t_points must be at least 1")
    _check(0 < p["t_min"] <= p["t_max"], "need 0 < t_min <= t_max")
    try:
        problem = SimilarityProblem(p["alpha"], p["m"], _bc(p["bc"]))
        sol = solve_similarity(problem, p["N"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    eta = np.linspace(0.0, sol.eta_star, p["eta_points"])
    write_csv(cfg.output_dir / "profile.csv", cfg, ["eta", "U"], [eta, profile(sol, eta)])

    if p["t_points"] == 1 or p["t_min"] == p["t_max"]:
        t = np.array([p["t_min"]])
    else:
        t = np.geomspace(p["t_min"], p["t_max"], p["t_points"])
    write_csv(cfg.output_dir / "moisture.csv", cfg, ["t", "I"], [t, cumulative_moisture(sol, t)])

    exps = sol.exponents
    write_json(
        cfg.output_dir / "solution.json",
        cfg,
        {
            "coefficients": sol.coeffs,
            "eta_star": sol.eta_star,
            "A": sol.abc.A,
            "B": sol.abc.B,
            "a": exps.a,
            "b": exps.b,
            "U_prime_0": profile_derivative_at_zero(sol),
        },
    )
    return EXIT_OK


def _approximant(alpha, m, bc, N):
    try:
        return solve_similarity(SimilarityProblem(alpha, m, bc), N)
    except ValueError as exc:
        log.info("no self-similar approximant for this run: %s", exc)
        return None


def _collapse_report(fld: fd.FDField, alpha, m, bc, N, times) -> list[str]:
    problem_ok = m > 0
    lines = [f"times={','.join(fmt(t) for t in times)}"]
    if not problem_ok:
        lines.append("collapse=unavailable (m must be positive for the similarity exponents)")
        return lines
    if len(times) < 2:
        lines.append("collapse=unavailable (needs at least two times)")
        return lines
    exps = similarity_exponents(SimilarityProblem(alpha, m, bc))
    scale = max(float(np.max(fd.rescale(fld, exps, t)[1])) for t in times)
    dist = fd.collapse_diagnostic(fld, exps, times)
    lines += [
        f"a={fmt(exps.a)}",
        f"b={fmt(exps.b)}",
        f"profile_scale={fmt(scale)}",
        f"collapse_sup={fmt(dist)}",
        f"collapse_relative={fmt(dist / scale)}",
    ]
    sol = _approximant(alpha, m, bc, N)
    if sol is not None:
        try:
            d = fd.approximant_distance(fld, sol, times)
            lines += [
                f"eta_star_N={fmt(sol.eta_star)}",
                f"approximant_sup={fmt(d)}",
                f"approximant_relative={fmt(d / scale)}",
            ]
        except ValueError as exc:
            lines.append(f"approximant=unavailable ({exc})")
    return lines


def cmd_fd(cfg: RunConfig) -> int:
    p = cfg.parameters
    _check(p["dt"] > 0, f"dt must be positive, got {p['dt']}")
    _check(p["dx"] > 0, f"dx must be positive, got {p['dx']}")
    _check(p["t_end"] > 0, f"t_end must be positive, got {p['t_end']}")
    _check(p["N"] >= 1, f"N must be at least 1, got {p['N']}")
    bc = _bc(p["bc"])
    try:
        fcfg = fd.FDConfig(p["nx"], p["dx"], p["dt"], p["t_end"], p["alpha"], p["m"], bc, p["theta"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    times = p["times"] if p["times"] is not None else [p["t_end"] * k / 5 for k in range(1, 6)]
    _check(len(times) > 0, "times list is empty")
    _check(all(0 < t <= p["t_end"] * (1 + 1e-12) for t in times), "times must lie in (0, t_end]")
    off_grid = [t for t in list(times) + list(p["collapse_times"] or []) if abs(t / p["dt"] - round(t / p["dt"])) > 1e-6]
    _check(not off_grid, f"times must be multiples of dt: {off_grid}")
    ctimes = p["collapse_times"] if p["collapse_times"] is not None else times

    try:
        fld = fd.simulate(fcfg)
    except fd.DomainOverflowError as exc:
        print(f"subflow fd: {exc}", file=sys.stderr)
        return EXIT_OVERFLOW
    except fd.ClampingError as exc:
        print(f"subflow fd: {exc}", file=sys.stderr)
        return 1

    extra = [f"clamp_count={fld.clamp_count}", f"clamped_mass={fmt(fld.clamped_mass)}"]
    sol = _approximant(p["alpha"], p["m"], bc, p["N"]) if p["m"] > 0 else None

    x = fld.x
    tcol, xcol, ucol, acol = [], [], [], []
    for t in times:
        u = fld.at(t)
        tcol.append(np.full_like(x, t))
        xcol.append(x)
        ucol.append(u)
        if sol is not None:
            a, b = sol.exponents.a, sol.exponents.b
            acol.append(t**a * profile(sol, x / t**b))
        else:
            acol.append(np.full_like(x, np.nan))
    write_csv(
        cfg.output_dir / "history.csv",
        cfg,
        ["t", "x", "u", "u_approx"],
        [np.concatenate(tcol), np.concatenate(xcol), np.concatenate(ucol), np.concatenate(acol)],
        extra,
    )

    tt, xf = fd.wetting_front_numeric(fld)
    _, I = fd.cumulative_moisture_numeric(fld)
    t_pos = np.where(tt > 0, tt, np.nan)
    if sol is not None:
        xf_ap = sol.eta_star * t_pos**sol.exponents.b
        with np.errstate(invalid="ignore"):
            I_ap = np.where(tt > 0, cumulative_moisture(sol, np.where(tt > 0, tt, 1.0)), np.nan)
    else:
        xf_ap = I_ap = np.full_like(tt, np.nan)
    write_csv(cfg.output_dir / "front.csv", cfg, ["t", "x_front", "x_front_approx"], [tt, xf, xf_ap], extra)
    write_csv(cfg.output_dir / "infiltration.csv", cfg, ["t", "I", "I_approx"], [tt, I, I_ap], extra)

    report = _collapse_report(fld, p["alpha"], p["m"], bc, p["N"], ctimes)
    _write(cfg.output_dir / "collapse.txt", cfg.meta_lines() + [f"# {e}" for e in extra] + report)
    return EXIT_OK


def cmd_ek_error(cfg: RunConfig) -> int:
    p = cfg.parameters
    Ns = p["N"]
    _check(len(Ns) > 0, "N list is empty")
    _check(all(n >= 1 for n in Ns), f"every N must be at least 1, got {Ns}")
    _check(p["function"] in TEST_FUNCTIONS, f"unknown test function {p['function']!r}; choose from {sorted(TEST_FUNCTIONS)}")
    _check(p["eta_points"] >= 1, "eta_points must be at least 1")
    try:
        params = ek.EKParams(p["beta"], p["gamma"], p["delta"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    U = TEST_FUNCTIONS[p["function"]]()
    eta_max = p["eta_max"]
    if eta_max is None:
        eta_max = 2.0 if U.support_end is None else 0.99 * U.support_end
    _check(eta_max > 0, "eta_max must be positive")
    eta = np.linspace(eta_max / p["eta_points"], eta_max, p["eta_points"])

    direct = np.array([ek.ek_apply_direct(U, e, params) for e in eta])
    header, cols = ["eta", "direct"], [eta, direct]
    series = {n: np.array([ek.ek_apply_series(U, e, params, n) for e in eta]) for n in Ns}
    for n in Ns:
        header.append(f"series_{n}")
        cols.append(series[n])
    for n in Ns:
        header.append(f"abs_err_{n}")
        cols.append(np.abs(series[n] - direct))
    for n in Ns:
        header.append(f"rel_err_{n}")
        with np.errstate(divide="ignore", invalid="ignore"):
            cols.append(np.where(direct != 0, np.abs(series[n] - direct) / np.abs(direct), np.nan))
    # the derivative bound needs sup |U^(N)|; for exp(-eta) it is 1, otherwise unbounded
    for n in Ns:
        header.append(f"bound_{n}")
        if params.delta > 0 and U.support_end is None:
            cols.append(np.array([ek.ek_series_error_bound(1.0, e, params, n) for e in eta]))
        else:
            cols.append(np.full_like(eta, np.nan))
    write_csv(cfg.output_dir / "ek_error.csv", cfg, header, cols)
    return EXIT_OK


def cmd_fit(cfg: RunConfig) -> int:
    p = cfg.parameters
    path = Path(p["input"])
    _check(path.is_file(), f"input file not found: {p['input']}")
    _check(p["N"] >= 1, f"N must be at least 1, got {p['N']}")
    try:
        prof = fitting.load_profile(path, time=p["time"], amplitude=p["amplitude"])
    except ValueError as exc:
        raise ConfigError(f"{p['input']}: {exc}") from None

    start = None
    if p["alpha0"] is not None:
        start = [p["alpha0"]]
        if p["D0_0"] is not None:
            start.append(p["D0_0"])
            if p["m0"] is not None:
                start.append(p["m0"])
    try:
        res = fitting.fit(prof, fix_m=p["fix_m"], start=start, N=p["N"])
        model = fitting.model_values(prof, res.alpha, res.D0, res.m, p["N"])
    except (fitting.DegenerateFitError, ValueError, ArithmeticError) as exc:
        print(f"subflow fit: {exc}", file=sys.stderr)
        return EXIT_FIT

    write_json(cfg.output_dir / "fit.json", cfg, res.as_dict())
    write_csv(cfg.output_dir / "fit_overlay.csv", cfg, ["x", "u_data", "u_model"], [prof.x, prof.u, model])
    for k, v in res.as_dict().items():
        print(f"{k}={fmt(v) if isinstance(v, float) else v}")
    if not res.converged:
        log.warning("fit did not converge; best point reported")
    return EXIT_OK


def cmd_collapse(cfg: RunConfig) -> int:
    p = cfg.parameters
    path = Path(p["history"])
    _check(path.is_file(), f"history file not found: {p['history']}")
    meta, header, rows = read_csv_meta(path)
    _check(header[:3] == ["t", "x", "u"], f"{path}: expected columns t,x,u")
    for key in ("alpha", "m", "bc"):
        if p[key] is None:
            _check(key in meta, f"{key} neither given nor recorded in {path}")
            p[key] = meta[key]
    alpha, m, bc = float(p["alpha"]), float(p["m"]), _bc(p["bc"])
    _check(m > 0, "collapse needs m > 0")

    snap_t = np.unique(rows[:, 0])
    x = rows[rows[:, 0] == snap_t[0], 1]
    hist = np.array([rows[rows[:, 0] == t, 2] for t in snap_t])
    _check(hist.ndim == 2 and hist.shape[1] == len(x), "snapshots have differing grids")
    fld = fd.FDField(x, hist, snap_t)
    times = p["times"] if p["times"] is not None else list(snap_t)
    missing = [t for t in times if not np.any(np.isclose(snap_t, t, rtol=1e-12, atol=0))]
    _check(not missing, f"times not present in history: {missing}")
    times = [float(snap_t[np.argmin(np.abs(snap_t - t))]) for t in times]
    _check(len(times) >= 2, "need at least two times")
    p.update(alpha=alpha, m=m, bc=bc.value, times=times)
    report = _collapse_report(fld, alpha, m, bc, p["N"], times)
    _write(cfg.output_dir / "collapse.txt", cfg.meta_lines() + report)
    print("\n".join(report))
    return EXIT_OK


DISPATCH = {
    "selfsim": cmd_selfsim,
    "fd": cmd_fd,
    "ek-error": cmd_ek_error,
    "fit": cmd_fit,
    "collapse": cmd_collapse,
}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="subflow", description="Anomalous moisture infiltration toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file with parameters; flags override it")
        sp.add_argument("--out", default=".", help="output directory (default: current)")

    s = sub.add_parser("selfsim", help="self-similar series solution")
    common(s)
    s.add_argument("--alpha", type=float)
    s.add_argument("--m", type=float)
    s.add_argument("--bc", choices=[b.value for b in BoundaryCondition])
    s.add_argument("--N", type=int, help="number of Taylor terms (default 3)")
    s.add_argument("--eta-points", dest="eta_points", type=int)
    s.add_argument("--t-min", dest="t_min", type=float)
    s.add_argument("--t-max", dest="t_max", type=float)
    s.add_argument("--t-points", dest="t_points", type=int)

    f = sub.add_parser("fd", help="finite-difference reference solution")
    common(f)
    f.add_argument("--alpha", type=float)
    f.add_argument("--m", type=float)
    f.add_argument("--bc", choices=[b.value for b in BoundaryCondition])
    f.add_argument("--nx", type=int)
    f.add_argument("--dx", type=float)
    f.add_argument("--dt", type=float)
    f.add_argument("--t-end", dest="t_end", type=float)
    f.add_argument("--theta", type=float)
    f.add_argument("--times", help="comma-separated snapshot times")
    f.add_argument("--collapse-times", dest="collapse_times", help="comma-separated times for the collapse check")
    f.add_argument("--N", type=int, help="terms of the comparison approximant (default 3)")

    e = sub.add_parser("ek-error", help="series vs quadrature error of the fractional operator")
    common(e)
    e.add_argument("--beta", type=float)
    e.add_argument("--gamma", type=float)
    e.add_argument("--delta", type=float)
    e.add_argument("--N", help="comma-separated truncation orders")
    e.add_argument("--function", help=f"test function: {', '.join(sorted(TEST_FUNCTIONS))}")
    e.add_argument("--eta-max", dest="eta_max", type=float)
    e.add_argument("--eta-points", dest="eta_points", type=int)

    t = sub.add_parser("fit", help="fit (alpha, D0[, m]) to a measured profile")
    common(t)
    t.add_argument("--input")
    t.add_argument("--fix-m", dest="fix_m", type=float)
    t.add_argument("--N", type=int)
    t.add_argument("--alpha0", type=float, help="starting alpha")
    t.add_argument("--D0-0", dest="D0_0", type=float, help="starting D0")
    t.add_argument("--m0", type=float, help="starting m")
    t.add_argument("--time", type=float, help="override the acquisition time in the file")
    t.add_argument("--amplitude", type=float, help="override the boundary amplitude in the file")

    c = sub.add_parser("collapse", help="collapse diagnostic of an FD history file")
    common(c)
    c.add_argument("--history")
    c.add_argument("--alpha", type=float)
    c.add_argument("--m", type=float)
    c.add_argument("--bc", choices=[b.value for b in BoundaryCondition])
    c.add_argument("--times")
    c.add_argument("--N", type=int)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on bad usage, which is our validation code too
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "out", "verbose")}
    try:
        cfg = resolve_config(args.command, flags, args.config, args.out)
        out = cfg.output_dir
        out.mkdir(parents=True, exist_ok=True)
        return DISPATCH[args.command](cfg)
    except ConfigError as exc:
        print(f"subflow {args.command}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
