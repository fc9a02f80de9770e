"""Command-line front end: runs, studies, and partition tables.

Subcommands: solve, band, rate, coverage, partition, cases.  Results go
to stdout as JSON; ``--out PREFIX`` additionally writes ``PREFIX.json``
and, for solve and band, a per-point ``PREFIX.csv``.  Identical
arguments and seed give byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from .deterministic import (
    apriori_error_bound,
    picard_solve,
    volterra_solve,
    volterra_tail_bound,
)
from .errors import IntegralEquationError, InvalidSpecError, UnknownCaseError
from .inference import (
    confidence_band,
    coverage_study,
    estimate_covariance,
    estimate_covariance_volterra,
    gaussian_sup_quantile,
    limit_covariance,
    product_points,
    rate_study,
    tail_log_asymptote,
)
from .mc_fredholm import mc_solve_fredholm
from .mc_volterra import mc_solve_volterra
from .problems import FredholmProblem, list_cases, manufactured_case
from .sampling import (
    PartitionSchedule,
    RandomStream,
    allocation_objective,
    asymptotic_partition,
    budget_consistent_partition,
    uniform_partition,
)

__all__ = ["RunConfig", "parse_config", "run", "main"]

_SCHEDULE_KINDS = ("uniform", "budget-consistent", "asymptotic")

_CONFIG_FIELDS = {
    "case": "a case id string",
    "N": "a positive integer or list of positive integers",
    "m": "a positive integer",
    "schedule": f"one of {', '.join(_SCHEDULE_KINDS)}",
    "seed": "a non-negative integer",
    "level": "a number strictly between 0 and 1",
    "reps": "a positive integer",
    "grid": "an integer of at least 2",
    "tau_grid": "an integer of at least 2",
    "out": "an output path prefix string",
}


@dataclass(frozen=True)
class RunConfig:
    """Validated union of config-file values and command-line flags."""

    case: "str | None" = None
    budgets: "tuple[int, ...]" = (10000,)
    stages: int = 3
    schedule: str = "budget-consistent"
    seed: int = 0
    level: float = 0.95
    reps: int = 1
    grid_n: "int | None" = None
    tau_n: "int | None" = None
    out: "str | None" = None

    @property
    def budget(self) -> int:
        return self.budgets[0]

    def require_case(self) -> str:
        if self.case is None:
            raise InvalidSpecError("config field 'case' is required for this command")
        return self.case


def _field_error(name: str) -> InvalidSpecError:
    return InvalidSpecError(f"config field '{name}' must be {_CONFIG_FIELDS[name]}")


def _coerce_budgets(value) -> "tuple[int, ...]":
    if isinstance(value, bool):
        raise _field_error("N")
    if isinstance(value, int):
        value = [value]
    if isinstance(value, str):
        try:
            value = [int(part) for part in value.split(",")]
        except ValueError:
            raise _field_error("N") from None
    if not isinstance(value, (list, tuple)) or not value:
        raise _field_error("N")
    out = []
    for v in value:
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise _field_error("N")
        out.append(v)
    return tuple(out)


def _validated(raw: dict) -> dict:
    for key in raw:
        if key not in _CONFIG_FIELDS:
            raise InvalidSpecError(f"unknown config field '{key}'")
    out: dict = {}
    if "case" in raw:
        if not isinstance(raw["case"], str):
            raise _field_error("case")
        out["case"] = raw["case"]
    if "N" in raw:
        out["budgets"] = _coerce_budgets(raw["N"])
    if "m" in raw:
        v = raw["m"]
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise _field_error("m")
        out["stages"] = v
    if "schedule" in raw:
        if raw["schedule"] not in _SCHEDULE_KINDS:
            raise _field_error("schedule")
        out["schedule"] = raw["schedule"]
    if "seed" in raw:
        v = raw["seed"]
        if isinstance(v, bool) or not isinstance(v, int) or v < 0:
            raise _field_error("seed")
        out["seed"] = v
    if "level" in raw:
        v = raw["level"]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not 0 < v < 1:
            raise _field_error("level")
        out["level"] = float(v)
    if "reps" in raw:
        v = raw["reps"]
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise _field_error("reps")
        out["reps"] = v
    for key, attr in (("grid", "grid_n"), ("tau_grid", "tau_n")):
        if key in raw:
            v = raw[key]
            if isinstance(v, bool) or not isinstance(v, int) or v < 2:
                raise _field_error(key)
            out[attr] = v
    if "out" in raw:
        if not isinstance(raw["out"], str) or not raw["out"]:
            raise _field_error("out")
        out["out"] = raw["out"]
    return out


def parse_config(path: str, overrides: "dict | None" = None) -> RunConfig:
    """Load a JSON config file; explicit flag values override file values."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise InvalidSpecError(f"cannot read config file {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidSpecError(f"config file {path!r} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise InvalidSpecError("config file must hold a JSON object")
    merged = _validated(raw)
    if overrides:
        merged.update(_validated(overrides))
    return RunConfig(**merged)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: D102 - argparse hook
        raise InvalidSpecError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="mcie", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def add_common(p: _Parser, with_case: bool = True) -> None:
        if with_case:
            p.add_argument("--case", help="registered case id (see 'cases')")
            p.add_argument("--grid", type=int, help="grid resolution override")
            p.add_argument("--tau-grid", dest="tau_grid", type=int,
                           help="check-time resolution override (Volterra cases)")
        p.add_argument("--N", dest="N", help="draw budget (comma list for 'rate')")
        p.add_argument("--m", type=int, help="iteration stage count")
        p.add_argument("--schedule", choices=_SCHEDULE_KINDS, help="stage size rule")
        p.add_argument("--seed", type=int, help="stream seed (echoed into outputs)")
        p.add_argument("--level", type=float, help="confidence level in (0, 1)")
        p.add_argument("--reps", type=int, help="replication count")
        p.add_argument("--out", help="output path prefix")
        p.add_argument("--config", help="JSON config file; flags override it")

    for name, descr in (
        ("solve", "run the staged solver and tabulate the result"),
        ("band", "run the solver with a limit-covariance confidence band"),
        ("rate", "median-error decay against a list of budgets"),
        ("coverage", "empirical band coverage over replications"),
    ):
        add_common(sub.add_parser(name, help=descr, description=descr))
    p_part = sub.add_parser("partition", help="print a stage-size table",
                            description="print a stage-size table")
    add_common(p_part, with_case=False)
    sub.add_parser("cases", help="list registered cases",
                   description="list registered cases")
    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides: dict = {}
    for flag, key in (
        ("case", "case"),
        ("N", "N"),
        ("m", "m"),
        ("schedule", "schedule"),
        ("seed", "seed"),
        ("level", "level"),
        ("reps", "reps"),
        ("grid", "grid"),
        ("tau_grid", "tau_grid"),
        ("out", "out"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    config_path = getattr(args, "config", None)
    if config_path:
        return parse_config(config_path, overrides)
    return RunConfig(**_validated(overrides))


def _check_out_prefix(prefix: "str | None") -> None:
    if prefix is None:
        return
    parent = os.path.dirname(os.path.abspath(prefix))
    if not os.path.isdir(parent) or not os.access(parent, os.W_OK):
        raise InvalidSpecError(f"output path prefix {prefix!r} is not writable")


def _emit(summary: dict, out: "str | None", csv_text: "str | None" = None) -> None:
    text = json.dumps(summary, indent=2) + "\n"
    sys.stdout.write(text)
    if out is not None:
        with open(out + ".json", "w", encoding="utf-8") as fh:
            fh.write(text)
        if csv_text is not None:
            with open(out + ".csv", "w", encoding="utf-8") as fh:
                fh.write(csv_text)


def _make_schedule_cli(config: RunConfig, budget: int):
    """Schedule plus an optional warning for the inexact closed form."""
    if config.schedule == "uniform":
        return uniform_partition(budget, config.stages), None
    if config.schedule == "budget-consistent":
        return budget_consistent_partition(budget, config.stages), None
    part = asymptotic_partition(budget, config.stages)
    if part.matches_budget:
        return PartitionSchedule.from_sizes(part.sizes, budget), None
    schedule = PartitionSchedule.from_sizes(part.sizes, part.total)
    return schedule, (
        f"sum != budget; closed-form sizes total {part.total}, "
        f"running with that effective budget"
    )


def _csv_table(coords: np.ndarray, mc: np.ndarray, det: np.ndarray, halfwidth: float) -> str:
    dim = coords.shape[1]
    header = ["point_index"] + [f"coord_{d}" for d in range(dim)]
    header += ["mc_value", "det_value", "halfwidth"]
    lines = [",".join(header)]
    for i in range(coords.shape[0]):
        row = [str(i)]
        row += [repr(float(c)) for c in coords[i]]
        row += [repr(float(mc[i])), repr(float(det[i])), repr(float(halfwidth))]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _solve_tables(case, config: RunConfig, schedule, stream):
    """Common solve path: MC run, deterministic run, coords, covariance."""
    problem = case.problem
    if case.kind == "fredholm":
        run_rec = mc_solve_fredholm(problem, schedule, stream)
        det = picard_solve(problem, config.stages)
        mc = run_rec[-1].grid_values
        det_last = det[-1].values
        coords = problem.grid.coords
    else:
        run_rec = mc_solve_volterra(problem, schedule, stream)
        det = volterra_solve(problem, config.stages)
        mc = run_rec[-1].grid_table.ravel()
        det_last = det[-1].values.ravel()
        coords = product_points(problem)
    return problem, run_rec, det, mc, det_last, coords


def _cmd_solve(config: RunConfig) -> int:
    case = manufactured_case(config.require_case(), config.grid_n, config.tau_n)
    schedule, warning = _make_schedule_cli(config, config.budget)
    stream = RandomStream(config.seed)
    problem, run_rec, det, mc, det_last, coords = _solve_tables(
        case, config, schedule, stream
    )
    if case.kind == "fredholm":
        cov = estimate_covariance(problem, run_rec)
    else:
        cov = estimate_covariance_volterra(problem, run_rec)
    band = confidence_band(mc, cov, schedule.sizes[-1], config.level, stream)
    summary = {
        "command": "solve",
        "case": case.case_id,
        "kind": case.kind,
        "budget": config.budget,
        "stages": config.stages,
        "schedule": config.schedule,
        "sizes": list(schedule.sizes),
        "effective_budget": schedule.budget,
        "seed": config.seed,
        "level": config.level,
        "cov_source": cov.source,
        "quantile": band.quantile,
        "halfwidth": band.halfwidth,
        "sup_mc_minus_det": float(np.max(np.abs(mc - det_last))),
    }
    if warning:
        summary["warning"] = warning
    csv_text = _csv_table(coords, mc, det_last, band.halfwidth)
    _emit(summary, config.out, csv_text)
    return 0


def _cmd_band(config: RunConfig) -> int:
    case = manufactured_case(config.require_case(), config.grid_n, config.tau_n)
    schedule, warning = _make_schedule_cli(config, config.budget)
    stream = RandomStream(config.seed)
    problem, run_rec, det, mc, det_last, coords = _solve_tables(
        case, config, schedule, stream
    )
    cov = limit_covariance(problem, det[-2] if config.stages >= 1 else det[0])
    band = confidence_band(mc, cov, schedule.sizes[-1], config.level, stream)
    delta0 = det[1].sup_distance(det[0]) if config.stages >= 1 else 0.0
    if isinstance(problem, FredholmProblem):
        widen = apriori_error_bound(problem.rho, delta0, config.stages)
    else:
        widen = volterra_tail_bound(problem.lip, delta0, config.stages)
    try:
        tail = tail_log_asymptote(band.quantile, cov) if band.quantile > 0 else None
    except InvalidSpecError:
        tail = None
    summary = {
        "command": "band",
        "case": case.case_id,
        "kind": case.kind,
        "budget": config.budget,
        "stages": config.stages,
        "schedule": config.schedule,
        "sizes": list(schedule.sizes),
        "effective_budget": schedule.budget,
        "seed": config.seed,
        "level": config.level,
        "cov_source": cov.source,
        "quantile": band.quantile,
        "halfwidth": band.halfwidth,
        "halfwidth_widened": band.halfwidth + widen,
        "iteration_bound": widen,
        "tail_log_asymptote": tail,
        "covers_det_iterate": band.covers(det_last),
    }
    if warning:
        summary["warning"] = warning
    csv_text = _csv_table(coords, mc, det_last, band.halfwidth)
    _emit(summary, config.out, csv_text)
    return 0


def _cmd_rate(config: RunConfig) -> int:
    case = manufactured_case(config.require_case(), config.grid_n, config.tau_n)
    if len(config.budgets) < 2:
        raise InvalidSpecError("rate needs --N with at least two comma-separated budgets")
    if config.schedule == "asymptotic":
        raise InvalidSpecError("rate compares exact budgets; use uniform or budget-consistent")
    stream = RandomStream(config.seed)
    result = rate_study(
        case.problem,
        config.stages,
        list(config.budgets),
        stream,
        replications=config.reps,
        schedule_kind=config.schedule,
    )
    summary = {
        "command": "rate",
        "case": case.case_id,
        "kind": case.kind,
        "budgets": list(result.budgets),
        "stages": config.stages,
        "schedule": config.schedule,
        "seed": config.seed,
        "replications": result.replications,
        "median_errors": list(result.median_errors),
        "slope": result.slope,
        "undefined_reason": result.undefined_reason,
    }
    _emit(summary, config.out)
    return 0


def _cmd_coverage(config: RunConfig) -> int:
    case = manufactured_case(config.require_case(), config.grid_n, config.tau_n)
    if config.schedule == "asymptotic":
        raise InvalidSpecError("coverage needs exact budgets; use uniform or budget-consistent")
    stream = RandomStream(config.seed)
    problem = case.problem
    if case.kind == "fredholm":
        reference = np.asarray(case.reference(problem.grid.points), dtype=float)
    else:
        pp = product_points(problem)
        reference = np.asarray(case.reference(pp[:, 0], pp[:, 1]), dtype=float)
    result = coverage_study(
        problem,
        config.stages,
        config.budget,
        config.level,
        stream,
        replications=config.reps,
        schedule_kind=config.schedule,
        reference=reference,
    )
    summary = {
        "command": "coverage",
        "case": case.case_id,
        "kind": case.kind,
        "budget": config.budget,
        "stages": config.stages,
        "schedule": config.schedule,
        "seed": config.seed,
        "level": result.level,
        "replications": result.replications,
        "coverage": result.coverage,
        "coverage_reference": result.coverage_reference,
        "halfwidth": result.halfwidth,
        "quantile": result.quantile,
        "iteration_bound": result.widen,
    }
    _emit(summary, config.out)
    return 0


def _cmd_partition(config: RunConfig) -> int:
    budget = config.budget
    if config.schedule == "uniform":
        schedule = uniform_partition(budget, config.stages)
        summary = {
            "q": list(schedule.sizes),
            "sum": sum(schedule.sizes),
            "budget": budget,
            "objective": allocation_objective(schedule.sizes),
        }
    elif config.schedule == "budget-consistent":
        schedule = budget_consistent_partition(budget, config.stages)
        summary = {
            "q": list(schedule.sizes),
            "sum": sum(schedule.sizes),
            "budget": budget,
            "objective": allocation_objective(schedule.sizes),
        }
    else:
        part = asymptotic_partition(budget, config.stages)
        summary = {
            "q": list(part.sizes),
            "sum": part.total,
            "budget": budget,
        }
        if not part.matches_budget:
            summary["warning"] = "sum != budget"
    summary["seed"] = config.seed
    _emit(summary, config.out)
    return 0


def _cmd_cases(config: RunConfig) -> int:
    listing = [
        {"case": cid, "kind": kind, "description": descr}
        for cid, kind, descr in list_cases()
    ]
    text = json.dumps(listing, indent=2) + "\n"
    sys.stdout.write(text)
    if config.out is not None:
        with open(config.out + ".json", "w", encoding="utf-8") as fh:
            fh.write(text)
    return 0


_COMMANDS = {
    "solve": _cmd_solve,
    "band": _cmd_band,
    "rate": _cmd_rate,
    "coverage": _cmd_coverage,
    "partition": _cmd_partition,
    "cases": _cmd_cases,
}


def run(argv: "list[str] | None" = None) -> int:
    """Parse arguments, dispatch, and map failures to exit codes.

    Returns 0 on success, 1 for validation problems (bad flags, bad
    config, unknown case, unwritable output), 2 for runtime failures.
    """
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # -h/--help
        return int(exc.code or 0)
    except InvalidSpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        config = _config_from_args(args)
        _check_out_prefix(config.out)
        return _COMMANDS[args.command](config)
    except (InvalidSpecError, UnknownCaseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except IntegralEquationError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - surface anything else as code 2
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


def main(argv: "list[str] | None" = None) -> int:
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())
