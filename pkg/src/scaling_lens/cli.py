"""Experiment runner: config-driven subcommands with CSV/JSON artifacts.

Each subcommand reads a flat `key = value` config (strict: unknown keys
are rejected with the offending line number), runs one pipeline, and
writes a data file plus a `<out>.meta.json` sidecar recording the fully
resolved parameters, seed, package version, wall time, and any solver
warnings.  Data files are byte-identical for identical (config, seed)
regardless of thread count; the sidecar is not (it carries wall time).

Exit codes: 0 success, 1 validation failure (config or parameters,
nothing written), 2 numeric failure (the offending parameters are
echoed to stderr).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
import warnings as _warnings

import numpy as np

from . import __version__
from .degree import DegreeModel
from .threshold import (
    DegenerateThreshold,
    NonPositiveRadicand,
    bit_erasure_rate,
    find_threshold,
    matching_upper_bound,
)
from .peeling import (
    BudgetExceeded,
    mc_expected_learned,
    mc_parent_graph_erasure,
)
from .optimizer import (
    BudgetSpec,
    EmptyGrid,
    InsufficientPoints,
    interior_maxima,
    isoflop_curve,
    optimize_budget,
    scaling_exponents,
    smooth3,
)
from .loss import APPROX_CONSTANT_DISCREPANCY, frontier_loss_curve
from .emergence import (
    SkillHierarchy,
    TaskSpec,
    TooFewPoints,
    accuracy_vs_compute,
    detect_plateaus,
    level_recursion_detail,
    task_mixture_binomial,
)

THREADS_ENV = "SCALING_LENS_THREADS"

COMMANDS = (
    "threshold",
    "peel-sim",
    "isoflop",
    "frontier",
    "loss",
    "emergence",
    "plateaus",
)

_REQUIRED = object()

# (type, default); _REQUIRED means the config must provide the key.
# Types: int, float, str, bool, floats (comma list), enum:a|b.
_COMMON_KEYS = {
    "seed": ("int", 0),
    "trials": ("int", 1000),
    "out": ("str", None),
    "format": ("enum:csv|json", "csv"),
    "threads": ("int", None),
}

_BUDGET_KEYS = {
    "budgets": ("floats", None),
    "budget_min": ("float", None),
    "budget_max": ("float", None),
    "budget_count": ("int", None),
    "varsigma": ("float", 1.0),
    "tau": ("float", 1.0),
    "d_t": ("float", 6.0),
    "epsilon": ("float", 0.5),
}

_EMERGENCE_KEYS = {
    **_BUDGET_KEYS,
    "levels": ("int", 100),
    "skills_per_level": ("int", 1000),
    "eta_scale": ("float", 7.0),
    "task": ("enum:homogeneous|binomial|binomial-mixture", _REQUIRED),
    "task_level": ("int", None),
    "task_m": ("int", None),
    "task_pi": ("float", None),
    "task_pis": ("floats", None),
    "task_weights": ("floats", None),
    "arity_min": ("int", 2),
    "arity_max": ("int", 7),
}

SCHEMAS: dict[str, dict[str, tuple[str, object]]] = {
    "threshold": {
        "R": ("int", _REQUIRED),
        "T": ("int", _REQUIRED),
        "d_t": ("float", _REQUIRED),
        "epsilon": ("float", 0.5),
        "eval_mode": ("enum:exact_log|poisson_limit", "exact_log"),
        "eps_lo": ("float", 0.0),
        "eps_hi": ("float", 1.0),
        "tol": ("float", 1e-7),
    },
    "peel-sim": {
        "R": ("int", _REQUIRED),
        "T": ("int", _REQUIRED),
        "d_t": ("float", _REQUIRED),
        "epsilon": ("float", 0.5),
        "mode": ("enum:learned|parent-erasure", "learned"),
    },
    "isoflop": {
        **_BUDGET_KEYS,
        "points_per_decade": ("int", 64),
    },
    "frontier": dict(_BUDGET_KEYS),
    "loss": dict(_BUDGET_KEYS),
    "emergence": {
        **_EMERGENCE_KEYS,
        "per_level": ("bool", False),
        "slope_tol": ("float", None),
        "min_width_decades": ("float", None),
    },
    "plateaus": {
        **_EMERGENCE_KEYS,
        "slope_tol": ("float", _REQUIRED),
        "min_width_decades": ("float", _REQUIRED),
    },
}
for _schema in SCHEMAS.values():
    _schema.update(_COMMON_KEYS)


class ConfigError(Exception):
    """Validation failure; line is None when not tied to a config line."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


class NumericFailure(Exception):
    """Computation failed; params carries what was being evaluated."""

    def __init__(self, message: str, params: dict):
        super().__init__(message)
        self.params = params


def _convert(kind: str, raw: str, key: str, line: int):
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "str":
            return raw
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if kind == "floats":
            vals = [float(x) for x in raw.split(",") if x.strip()]
            if not vals:
                raise ValueError(raw)
            return vals
        if kind.startswith("enum:"):
            options = kind[5:].split("|")
            if raw in options:
                return raw
            raise ValueError(f"one of {options}")
    except ValueError:
        raise ConfigError(
            f"invalid value {raw!r} for key '{key}' (expected {kind})", line
        ) from None
    raise AssertionError(f"unhandled schema kind {kind}")


def parse_config(path: str, command: str) -> dict:
    """Read flat key = value lines against the command's schema."""
    schema = SCHEMAS[command]
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None

    params: dict = {}
    seen: dict[str, int] = {}
    for lineno, text in enumerate(lines, start=1):
        stripped = text.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(
                f"expected 'key = value', got {stripped!r}", lineno
            )
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.split("#", 1)[0].strip()
        if key not in schema:
            raise ConfigError(
                f"unknown key '{key}' for command '{command}'", lineno
            )
        if key in seen:
            raise ConfigError(
                f"duplicate key '{key}' (first on line {seen[key]})", lineno
            )
        seen[key] = lineno
        kind, _ = schema[key]
        params[key] = _convert(kind, raw, key, lineno)

    for key, (kind, default) in schema.items():
        if key in params:
            continue
        if default is _REQUIRED:
            raise ConfigError(
                f"missing required key '{key}' for command '{command}'"
            )
        params[key] = default
    return params


def _resolve_budget_specs(params: dict) -> list[BudgetSpec]:
    explicit = params["budgets"]
    range_keys = [params["budget_min"], params["budget_max"], params["budget_count"]]
    have_range = any(v is not None for v in range_keys)
    if explicit is not None and have_range:
        raise ConfigError("give either 'budgets' or budget_min/max/count, not both")
    if explicit is not None:
        cs = [float(c) for c in explicit]
    elif all(v is not None for v in range_keys):
        lo, hi, count = range_keys
        if not (0 < lo < hi) or count < 2:
            raise ConfigError(
                "budget range needs 0 < budget_min < budget_max and budget_count >= 2"
            )
        cs = np.geomspace(lo, hi, int(count)).tolist()
    else:
        raise ConfigError(
            "budgets missing: set 'budgets' or all of budget_min/budget_max/budget_count"
        )
    try:
        return [
            BudgetSpec(
                C=c,
                varsigma=params["varsigma"],
                tau=params["tau"],
                d_t=params["d_t"],
                epsilon=params["epsilon"],
            )
            for c in cs
        ]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _build_hierarchy(params: dict) -> SkillHierarchy:
    try:
        return SkillHierarchy.exponential_thresholds(
            params["levels"], params["skills_per_level"], params["eta_scale"]
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _build_task(params: dict) -> TaskSpec:
    kind = params["task"]
    a_lo, a_hi = params["arity_min"], params["arity_max"]
    if not 1 <= a_lo <= a_hi:
        raise ConfigError("need 1 <= arity_min <= arity_max")
    arity = {m: 1.0 / (a_hi - a_lo + 1) for m in range(a_lo, a_hi + 1)}
    try:
        if kind == "homogeneous":
            if params["task_level"] is None or params["task_m"] is None:
                raise ConfigError(
                    "task = homogeneous needs task_level and task_m"
                )
            return TaskSpec.homogeneous(params["task_level"], params["task_m"])
        if kind == "binomial":
            if params["task_pi"] is None:
                raise ConfigError("task = binomial needs task_pi")
            marginal = task_mixture_binomial(params["levels"], params["task_pi"])
            return marginal.with_arity(arity)
        if params["task_pis"] is None or params["task_weights"] is None:
            raise ConfigError(
                "task = binomial-mixture needs task_pis and task_weights"
            )
        marginal = task_mixture_binomial(
            params["levels"],
            tuple(params["task_pis"]),
            weights=tuple(params["task_weights"]),
        )
        return marginal.with_arity(arity)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _fmt_cell(value) -> str:
    if value is None:
        # undefined quantity (e.g. scaling constants of a no-transition
        # solution): an empty cell, never a NaN
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    f = float(value)
    if not math.isfinite(f):
        raise NumericFailure(
            f"non-finite value {f!r} in output", {"value": repr(value)}
        )
    return "%.17g" % f


def _render_data(columns: list[str], rows: list[list], fmt: str) -> bytes:
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt_cell(v) for v in row])
        return buf.getvalue().encode("utf-8")
    native = []
    for row in rows:
        rec = {}
        for col, val in zip(columns, row):
            if val is None:
                rec[col] = None
            elif isinstance(val, (bool, np.bool_)):
                rec[col] = bool(val)
            elif isinstance(val, (int, np.integer)):
                rec[col] = int(val)
            elif isinstance(val, str):
                rec[col] = val
            else:
                rec[col] = float(val)
        native.append(rec)
    try:
        text = json.dumps({"columns": columns, "rows": native},
                          indent=2, allow_nan=False)
    except ValueError as exc:
        raise NumericFailure(f"non-finite value in output: {exc}", {}) from None
    return (text + "\n").encode("utf-8")


def _threads_arg(params: dict) -> int | None:
    if params["threads"] is not None:
        if params["threads"] < 0:
            raise ConfigError("threads must be >= 0")
        return params["threads"] or None
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}")
        return n or None
    return None


def _run_threshold(params: dict, extras: dict, notes: list[str]):
    try:
        model = DegreeModel(
            R=params["R"], T=params["T"], d_t=params["d_t"],
            epsilon=params["epsilon"], eval_mode=params["eval_mode"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    try:
        sol = find_threshold(
            model, eps_lo=params["eps_lo"], eps_hi=params["eps_hi"],
            tol=params["tol"],
        )
        ub = matching_upper_bound(model)
        p_b = bit_erasure_rate(model, sol)
    except (NonPositiveRadicand, DegenerateThreshold) as exc:
        raise NumericFailure(
            f"{type(exc).__name__}: {exc}",
            {k: params[k] for k in ("R", "T", "d_t", "epsilon")},
        ) from None
    if sol.no_transition:
        notes.append("NoTransition: no decoding transition below eps_hi")
    # the fixed point and scaling constants are undefined for a
    # no-transition sentinel, and alpha alone can be undefined when its
    # radicand is nonpositive: empty cells, never NaN
    x_cell = sol.x_star if math.isfinite(sol.x_star) else None
    nu_cell = sol.nu_star if math.isfinite(sol.nu_star) else None
    alpha_cell = sol.alpha if math.isfinite(sol.alpha) else None
    if alpha_cell is None and not sol.no_transition:
        notes.append("alpha undefined: nonpositive radicand at the threshold")
    columns = [
        "R", "T", "d_t", "epsilon", "eps_star", "x_star", "nu_star",
        "alpha", "no_transition", "matching_upper_bound", "bit_erasure_rate",
    ]
    rows = [[
        model.R, model.T, model.d_t, model.epsilon, sol.eps_star, x_cell,
        nu_cell, alpha_cell, sol.no_transition, ub, p_b,
    ]]
    return columns, rows


def _run_peel_sim(params: dict, extras: dict, notes: list[str]):
    threads = _threads_arg(params)
    if params["trials"] < 1:
        raise ConfigError("trials must be >= 1")
    try:
        if params["mode"] == "learned":
            if params["d_t"] <= 0 or params["R"] < 1 or params["T"] < 1:
                raise ConfigError("peel-sim needs R >= 1, T >= 1, d_t > 0")
            stats = mc_expected_learned(
                params["R"], params["T"], params["d_t"],
                trials=params["trials"], seed=params["seed"], threads=threads,
            )
        else:
            try:
                model = DegreeModel(
                    R=params["R"], T=params["T"], d_t=params["d_t"],
                    epsilon=params["epsilon"],
                )
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            stats = mc_parent_graph_erasure(
                model, trials=params["trials"], seed=params["seed"],
                threads=threads,
            )
    except BudgetExceeded as exc:
        raise NumericFailure(
            str(exc), {k: params[k] for k in ("R", "T", "d_t")}
        ) from None
    extras["mean"] = stats.mean
    extras["stderr"] = stats.stderr
    columns = ["trial", "value"]
    rows = [[i, float(v)] for i, v in enumerate(stats.values)]
    return columns, rows


def _run_isoflop(params: dict, extras: dict, notes: list[str]):
    specs = _resolve_budget_specs(params)
    if params["points_per_decade"] < 2:
        raise ConfigError("points_per_decade must be >= 2")
    columns = ["C", "R", "T", "objective", "eps_star"]
    rows: list[list] = []
    maxima: dict[str, int] = {}
    try:
        for spec in specs:
            curve = isoflop_curve(
                spec, points_per_decade=params["points_per_decade"]
            )
            for r, t, obj, eps in zip(
                curve.R, curve.T, curve.objective, curve.eps_star
            ):
                rows.append([spec.C, int(r), int(t), float(obj), float(eps)])
            smoothed = smooth3(curve.objective)
            maxima["%.6g" % spec.C] = interior_maxima(
                smoothed, tol=1e-6 * float(np.max(smoothed))
            )
    except EmptyGrid as exc:
        raise NumericFailure(str(exc), {"C": spec.C}) from None
    extras["interior_maxima_after_smoothing"] = maxima
    return columns, rows


def _run_frontier(params: dict, extras: dict, notes: list[str]):
    specs = _resolve_budget_specs(params)
    try:
        opts = [optimize_budget(s) for s in specs]
    except (NonPositiveRadicand, EmptyGrid) as exc:
        raise NumericFailure(str(exc), {"budgets": [s.C for s in specs]}) from None
    columns = [
        "C", "R_star", "T_star", "N_star", "D_star", "objective",
        "eps_star_at_opt",
    ]
    rows = [
        [s.C, o.R_star, o.T_star, o.N_star, o.D_star, o.objective,
         o.eps_star_at_opt]
        for s, o in zip(specs, opts)
    ]
    if len(specs) >= 5:
        fit = scaling_exponents(specs, allocations=opts)
        extras["scaling_fit"] = {"a": fit.a, "b": fit.b, "r2": fit.r2}
    else:
        notes.append("fewer than 5 budgets: no scaling-exponent fit")
    return columns, rows


def _run_loss(params: dict, extras: dict, notes: list[str]):
    specs = _resolve_budget_specs(params)
    try:
        frontier = frontier_loss_curve(specs)
    except (NonPositiveRadicand, EmptyGrid) as exc:
        raise NumericFailure(str(exc), {"budgets": [s.C for s in specs]}) from None
    columns = [
        "C", "R_star", "N_star", "P_b", "P_e_train_exact",
        "P_e_train_approx", "excess_entropy_lb",
    ]
    rows = [
        [f.C, f.R_star, f.N_star, f.P_b, f.P_e_train_exact,
         f.P_e_train_approx, f.excess_entropy_lb]
        for f in frontier
    ]
    extras["approx_constant_discrepancy"] = dict(APPROX_CONSTANT_DISCREPANCY)
    return columns, rows


def _emergence_curve(params: dict):
    specs = _resolve_budget_specs(params)
    h = _build_hierarchy(params)
    task = _build_task(params)
    top = task.max_level()
    if top > h.L:
        raise ConfigError(
            f"task references level {top} but hierarchy has {h.L} levels"
        )
    curve = accuracy_vs_compute(specs, h, task)
    return specs, h, curve


def _run_emergence(params: dict, extras: dict, notes: list[str]):
    specs, h, curve = _emergence_curve(params)
    notes.extend(curve.warnings)
    if params["per_level"]:
        columns = ["C", "l", "p_rr", "p_l", "mean_degree", "gamma_l"]
        rows = []
        for spec, r_star, t_star in zip(specs, curve.R_star, curve.T_star):
            _, detail = level_recursion_detail(
                h, int(r_star), int(t_star), spec.d_t
            )
            for row in detail:
                rows.append([
                    spec.C, row.level, row.p_rr, row.p_link,
                    row.mean_degree, row.gamma,
                ])
    else:
        columns = ["C", "N_star", "accuracy_lower_bound"]
        rows = [
            [c, n, a]
            for c, n, a in zip(curve.C, curve.N_star, curve.accuracy)
        ]
    if (
        params["slope_tol"] is not None
        and params["min_width_decades"] is not None
    ):
        try:
            segments = detect_plateaus(
                curve, params["slope_tol"], params["min_width_decades"]
            )
        except TooFewPoints as exc:
            raise NumericFailure(str(exc), {"points": len(specs)}) from None
        extras["plateau_report"] = _segment_report(curve, segments)
    return columns, rows


def _segment_report(curve, segments) -> dict:
    interior = [s for s in segments[1:-1] if s.kind == "plateau"]
    rises = [s for s in segments if s.kind == "rise"]
    return {
        "segments": [
            {
                "kind": s.kind,
                "start_C": float(curve.C[s.start]),
                "end_C": float(curve.C[s.end]),
                "width_decades": s.width_decades,
            }
            for s in segments
        ],
        "interior_plateaus": len(interior),
        "rises": len(rises),
    }


def _run_plateaus(params: dict, extras: dict, notes: list[str]):
    specs, h, curve = _emergence_curve(params)
    notes.extend(curve.warnings)
    try:
        segments = detect_plateaus(
            curve, params["slope_tol"], params["min_width_decades"]
        )
    except TooFewPoints as exc:
        raise NumericFailure(str(exc), {"points": len(specs)}) from None
    extras["plateau_report"] = _segment_report(curve, segments)
    columns = [
        "start_C", "end_C", "kind", "width_decades",
        "start_accuracy", "end_accuracy",
    ]
    rows = [
        [float(curve.C[s.start]), float(curve.C[s.end]), s.kind,
         s.width_decades, float(curve.accuracy[s.start]),
         float(curve.accuracy[s.end])]
        for s in segments
    ]
    return columns, rows


_RUNNERS = {
    "threshold": _run_threshold,
    "peel-sim": _run_peel_sim,
    "isoflop": _run_isoflop,
    "frontier": _run_frontier,
    "loss": _run_loss,
    "emergence": _run_emergence,
    "plateaus": _run_plateaus,
}


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad arguments; 2 is reserved for numeric
    # failures here, so downgrade argument errors to the validation code.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="scaling-lens", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        p = sub.add_parser(command)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--trials", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--format", choices=("csv", "json"), default=None)
        p.add_argument("--threads", type=int, default=None)
    return parser


def run(command: str, params: dict) -> int:
    """Execute one resolved config; returns the process exit code."""
    extras: dict = {}
    notes: list[str] = []
    started = time.time()
    try:
        with _warnings.catch_warnings(record=True) as caught:
            _warnings.simplefilter("always")
            columns, rows = _RUNNERS[command](params, extras, notes)
        notes.extend(str(w.message) for w in caught)
        out_path = params["out"] or f"{command.replace('-', '_')}.{params['format']}"
        data = _render_data(columns, rows, params["format"])
    except ConfigError as exc:
        loc = f" (line {exc.line})" if exc.line else ""
        print(f"scaling-lens {command}: invalid configuration{loc}: {exc}",
              file=sys.stderr)
        return 1
    except NumericFailure as exc:
        print(f"scaling-lens {command}: numeric failure: {exc}; "
              f"parameters: {exc.params}", file=sys.stderr)
        return 2

    meta = {
        "command": command,
        "artifact_version": __version__,
        "resolved_params": {
            k: params[k] for k in sorted(params) if k != "out"
        },
        "seed": params["seed"],
        "trials": params["trials"],
        "out": out_path,
        "rows": len(rows),
        "wall_time_s": round(time.time() - started, 6),
        "warnings": notes,
        **extras,
    }
    with open(out_path, "wb") as fh:
        fh.write(data)
    with open(out_path + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        params = parse_config(args.config, args.command)
    except ConfigError as exc:
        loc = f"{args.config}:{exc.line}: " if exc.line else f"{args.config}: "
        print(f"scaling-lens {args.command}: {loc}{exc}", file=sys.stderr)
        return 1
    for key in ("seed", "trials", "out", "format", "threads"):
        value = getattr(args, key)
        if value is not None:
            params[key] = value
    return run(args.command, params)


if __name__ == "__main__":
    sys.exit(main())
