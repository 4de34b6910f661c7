"""Command-line front end for the verify, solve, classify and sweep commands.

Exit codes: 0 ok, 1 configuration error, 2 verification mismatch or residual
above tolerance, 3 no case applies.
"""

from __future__ import annotations

import argparse
import itertools
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import grw, kasner
from .closed_forms import MATCH, MISMATCH, NOT_STATED, compare_catalog
from .connection import QscParams, analyze
from .errors import DomainError, QscError
from .models import SpaceSpec
from .ode import Family
from .report import run_metadata, write_csv, write_json

EXIT_OK, EXIT_CONFIG, EXIT_MISMATCH, EXIT_INFEASIBLE = 0, 1, 2, 3
DEFAULT_TOL = 1e-9
DEFAULT_DRAWS = 5
DEFAULT_SAMPLE_COUNT = 3
DEFAULT_MAX_ROWS = 10_000

VERIFY_KINDS = {
    "verify-curvature": ("connection", "curvature"),
    "verify-ricci": ("ricci",),
    "verify-scalar": ("scalar",),
}
SOLVE_TASKS = ("solve-grw-einstein", "solve-grw-scalar", "kasner-scalar")
CLASSIFY_TASKS = ("classify-kasner",)
TASKS = tuple(VERIFY_KINDS) + SOLVE_TASKS + CLASSIFY_TASKS
CONFIG_KEYS = {
    "task", "space", "qsc", "sample_count", "points", "seed", "tolerances", "output", "params",
    "fiber_reading", "family", "grid", "max_rows", "draws",
}
PARAM_KEYS = {"l", "lambda1", "lambda2", "alpha", "type", "zeta", "p", "sbar", "sf"}


class ConfigError(QscError):
    """Bad or inconsistent run configuration."""


@dataclass
class Run:
    task: str
    seed: int
    tol: float
    out: Path
    strict: bool
    config: dict[str, Any]
    params: dict[str, Any]
    draws: int = DEFAULT_DRAWS

    def tolerances(self) -> dict[str, Any]:
        return {"match": self.tol, "residual": self.tol, "fingerprint": True}


@dataclass
class Outcome:
    """Result of one solve or classify task."""

    items: list[dict[str, Any]] = field(default_factory=list)
    samples: list[tuple] = field(default_factory=list)
    code: int = EXIT_OK
    message: str = ""

    @property
    def emitted(self) -> list[dict[str, Any]]:
        return [it for it in self.items if it.get("status") == "valid"]

    @property
    def worst(self) -> float:
        vals = [it["residual_max"] for it in self.emitted if it.get("residual_max") is not None]
        return max(vals) if vals else math.nan


# ---------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------


def load_config(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


def _parse_p(value) -> tuple[float, ...]:
    if isinstance(value, str):
        value = [x for x in value.replace(",", " ").split() if x]
    try:
        return tuple(float(x) for x in value)
    except (TypeError, ValueError):
        raise ConfigError(f"exponents must be numbers, got {value!r}") from None


def _number(params: dict[str, Any], key: str, default=None) -> float:
    v = params.get(key, default)
    if v is None:
        raise ConfigError(f"missing parameter {key!r}")
    try:
        x = float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"parameter {key!r} must be a number, got {v!r}") from None
    if not math.isfinite(x):
        raise ConfigError(f"parameter {key!r} must be finite")
    return x


def _integer(params: dict[str, Any], key: str, default=None) -> int:
    x = _number(params, key, default)
    if x != int(x) or x < 1:
        raise ConfigError(f"parameter {key!r} must be a positive integer")
    return int(x)


def _lambdas(params: dict[str, Any]) -> tuple[float, float]:
    l1, l2 = _number(params, "lambda1"), _number(params, "lambda2")
    if l1 == 0:
        raise ConfigError("lambda1 must be nonzero")
    if l2 == 0:
        raise ConfigError("lambda2 must be nonzero")
    return l1, l2


def make_run(args: argparse.Namespace, command: str) -> Run:
    cfg = load_config(args.config)
    strict = bool(args.strict)
    if strict:
        unknown = sorted(set(cfg) - CONFIG_KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
    params = dict(cfg.get("params", {}))
    if strict:
        unknown = sorted(set(params) - PARAM_KEYS)
        if unknown:
            raise ConfigError(f"unknown parameters: {unknown}")
    for key in PARAM_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            params[key] = v
    task = getattr(args, "task", None) or cfg.get("task")
    if task is None and command == "classify":
        task = "classify-kasner"
    if task not in TASKS:
        raise ConfigError(f"unknown or missing task {task!r}; expected one of {', '.join(TASKS)}")
    allowed = {
        "verify": tuple(VERIFY_KINDS),
        "solve": SOLVE_TASKS + CLASSIFY_TASKS,
        "classify": CLASSIFY_TASKS + ("kasner-scalar",),
        "sweep": SOLVE_TASKS + CLASSIFY_TASKS,
    }[command]
    if task not in allowed:
        raise ConfigError(f"task {task!r} is not available under '{command}'")
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    tol = args.tol if args.tol is not None else cfg.get("tolerances", {}).get("match", DEFAULT_TOL)
    out = args.out or cfg.get("output") or "qsc_out"
    try:
        seed, tol = int(seed), float(tol)
        draws = int(cfg.get("draws", DEFAULT_DRAWS))
    except (TypeError, ValueError):
        raise ConfigError("seed, draws and tolerance must be numbers") from None
    if not (tol > 0 and math.isfinite(tol)):
        raise ConfigError("tolerance must be positive and finite")
    return Run(task, seed, tol, Path(out), strict, cfg, params, draws)


# ---------------------------------------------------------------------
# solve and classify tasks
# ---------------------------------------------------------------------


def _family_residual(fam: Family, rng: np.random.Generator, draws: int) -> float:
    worst = fam.check()
    for _ in range(draws):
        try:
            c = fam.draw(rng)
        except DomainError:
            break
        worst = max(worst, fam.check(c))
    fam.residual_max = worst
    return worst


def _verdict_residual(v: kasner.KasnerVerdict, rng: np.random.Generator, draws: int) -> float:
    try:
        return v.verify(rng, draws)
    except DomainError:
        return v.verify()


def _family_samples(case: str, fam: Family) -> list[tuple]:
    return [(case, t, val, res) for t, val, res in fam.samples()]


def _add_family(out: Outcome, fam: Family, run: Run, rng, oracle_l: int | None = None) -> None:
    if fam.applicable and fam.status == "valid":
        _family_residual(fam, rng, run.draws)
        if fam.residual_max > run.tol:
            out.code = max(out.code, EXIT_MISMATCH)
        out.samples.extend(_family_samples(fam.case_id, fam))
    item = fam.to_json()
    if oracle_l is not None and fam.applicable and fam.status == "valid":
        item["oracle"] = grw.family_cross_check(fam, oracle_l)
    out.items.append(item)


def _add_verdict(out: Outcome, v: kasner.KasnerVerdict, run: Run, rng) -> None:
    if v.emitted:
        _verdict_residual(v, rng, run.draws)
        if v.residual_max > run.tol:
            out.code = max(out.code, EXIT_MISMATCH)
        out.samples.extend(_family_samples(v.case, v.family))
    item = v.to_json()
    item["case_id"] = v.case
    item["residual_max"] = None if math.isnan(v.residual_max) else v.residual_max
    out.items.append(item)


def _finish(out: Outcome, what: str) -> Outcome:
    if not out.emitted and out.code == EXIT_OK:
        out.code = EXIT_INFEASIBLE
        out.message = f"no case applies: {what}"
    return out


def task_grw_einstein(run: Run, rng, oracle: bool = True) -> Outcome:
    p = run.params
    l = _integer(p, "l", 1)
    l1, l2 = _lambdas(p)
    out = Outcome()
    if l == 1:
        alpha = _number(p, "alpha")
        fams = [grw.solve_einstein_dimF1(l1, l2, alpha)]
        if l2 == 2 * l1:
            fams.append(grw.einstein_dimF1_doubled(l1, alpha))
    else:
        fams = grw.classify_einstein_dimFl(l1, l2, l)
        if p.get("alpha") is not None:
            alpha = _number(p, "alpha")
            for fam in fams:
                a = fam.constraints.get("alpha", math.nan)
                if fam.applicable and not abs(a - alpha) <= run.tol * max(1.0, abs(alpha)):
                    fam.applicable, fam.status = False, "not_applicable"
    for fam in fams:
        _add_family(out, fam, run, rng, l if oracle else None)
    return _finish(out, f"Einstein warping for l={l}, lambda=({l1:g}, {l2:g})")


def task_grw_scalar(run: Run, rng, oracle: bool = True) -> Outcome:
    p = run.params
    l = _integer(p, "l", 3)
    l1, l2 = _lambdas(p)
    Sbar, SF = _number(p, "sbar"), _number(p, "sf", 0.0)
    out = Outcome()
    if l == 3:
        fam = grw.solve_scalar_l3(l1, l2, Sbar, SF)
    elif SF == 0:
        fam = grw.solve_scalar_flatfiber(l1, l2, l, Sbar)
    else:
        out.code, out.message = EXIT_INFEASIBLE, "no case applies: closed forms need l = 3 or a flat fiber"
        return out
    _add_family(out, fam, run, rng)
    return _finish(out, "constant scalar curvature")


def _kasner_type(p: dict[str, Any]) -> str:
    t = str(p.get("type", "")).upper()
    if t not in kasner.TYPE_DIMS:
        raise ConfigError(f"Kasner type must be I, II or III, got {p.get('type')!r}")
    return t


def task_classify_kasner(run: Run, rng, oracle: bool = True) -> Outcome:
    p = run.params
    kind = _kasner_type(p)
    l1, l2 = _lambdas(p)
    out = Outcome()
    if kind == "I":
        for fam in kasner.classify_typeI_einstein(l1, l2):
            _add_family(out, fam, run, rng)
    else:
        if kind == "II":
            verdicts = kasner.classify_typeII_einstein(l1, l2)
        else:
            verdicts = kasner.classify_typeIII_einstein(l1, l2, _number(p, "zeta", 6.0))
        for v in verdicts:
            _add_verdict(out, v, run, rng)
    return _finish(out, f"Type {kind} Einstein with lambda=({l1:g}, {l2:g})")


def task_kasner_scalar(run: Run, rng, oracle: bool = True) -> Outcome:
    p = run.params
    kind = _kasner_type(p)
    l1, l2 = _lambdas(p)
    Sbar, SF = _number(p, "sbar"), _number(p, "sf", 0.0)
    out = Outcome()
    if kind == "I":
        _add_family(out, kasner.solve_typeI_scalar(l1, l2, Sbar, SF), run, rng)
        return _finish(out, "Type I constant scalar curvature")
    n = len(kasner.TYPE_DIMS[kind])
    exps = _parse_p(p["p"]) if p.get("p") is not None else (1.0,) * n
    if len(exps) != n:
        raise ConfigError(f"Type {kind} needs {n} exponents, got {len(exps)}")
    if kind == "II":
        verdicts = kasner.solve_typeII_scalar(l1, l2, Sbar, SF, exps)
    else:
        verdicts = kasner.solve_typeIII_scalar(l1, l2, Sbar, exps)
    for v in verdicts:
        _add_verdict(out, v, run, rng)
    return _finish(out, f"Type {kind} constant scalar curvature")


TASK_RUNNERS: dict[str, Callable[..., Outcome]] = {
    "solve-grw-einstein": task_grw_einstein,
    "solve-grw-scalar": task_grw_scalar,
    "classify-kasner": task_classify_kasner,
    "kasner-scalar": task_kasner_scalar,
}


def _expr_of(item: dict[str, Any]) -> str:
    return item.get("f_expr") or item.get("phi") or ""


def _ledger_rows(run: Run, items: Sequence[dict[str, Any]]) -> list[list[Any]]:
    rows = []
    for it in items:
        res = it.get("residual_max")
        if it.get("status") != "valid":
            verdict = it.get("status", "").upper()
        else:
            verdict = MATCH if res is not None and res <= run.tol else MISMATCH
        rows.append([run.seed, it.get("case_id", ""), it.get("status", ""), res, verdict, _expr_of(it), it.get("note", "")])
    return rows


def cmd_solve(run: Run) -> int:
    rng = np.random.default_rng(run.seed)
    out = TASK_RUNNERS[run.task](run, rng)
    report = {
        "metadata": run_metadata(run.seed, run.tolerances()),
        "task": run.task,
        "params": run.params,
        "families": out.items,
        "summary": {
            "checked": len(out.items),
            "emitted": len(out.emitted),
            "worst_residual": None if math.isnan(out.worst) else out.worst,
        },
        "exit_code": out.code,
    }
    write_json(run.out / "report.json", report)
    write_csv(
        run.out / "ledger.csv",
        ["seed", "case_id", "status", "residual", "verdict", "expression", "note"],
        _ledger_rows(run, out.items),
    )
    write_csv(run.out / "samples.csv", ["case_id", "t", "value", "residual"], out.samples)
    for it in out.items:
        res = it.get("residual_max")
        tail = f"  residual {res:.3e}" if res is not None else ""
        print(f"{it.get('case_id', '')}  {it.get('status', '')}  {_expr_of(it)}{tail}")
    if out.message:
        print(out.message, file=sys.stderr)
    return out.code


# ---------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------


def _space_and_params(run: Run) -> tuple[SpaceSpec, QscParams]:
    if "space" not in run.config or "qsc" not in run.config:
        raise ConfigError("verify needs 'space' and 'qsc' entries in the config")
    spec = SpaceSpec.from_json(run.config["space"])
    qsc = dict(run.config["qsc"])
    if run.strict:
        qsc["strict"] = True
    return spec, QscParams.from_json(qsc)


def _points(run: Run, spec: SpaceSpec) -> list[np.ndarray]:
    if run.config.get("points"):
        return [spec.point(p) for p in run.config["points"]]
    n = int(run.config.get("sample_count", DEFAULT_SAMPLE_COUNT))
    if n < 1:
        raise ConfigError("sample_count must be positive")
    rng = np.random.default_rng(run.seed)
    return [spec.point(spec.sample_point(rng)) for _ in range(n)]


def cmd_verify(run: Run) -> int:
    spec, params = _space_and_params(run)
    points = _points(run, spec)
    rows = compare_catalog(
        spec, params, points, VERIFY_KINDS[run.task], run.config.get("family"), run.tol,
        run.config.get("fiber_reading", "leaf"),
    )
    counts = {v: sum(r.verdict == v for r in rows) for v in (MATCH, MISMATCH, NOT_STATED)}
    summary = {
        "checked": len(rows),
        "matched": counts[MATCH],
        "mismatched": counts[MISMATCH],
        "not_stated": counts[NOT_STATED],
    }
    if run.task == "verify-ricci":
        summary["ricci_max_abs"] = max(float(np.max(np.abs(analyze(spec, p, params).ricci))) for p in points)
    elif run.task == "verify-scalar":
        summary["scalar_values"] = [float(analyze(spec, p, params).scalar) for p in points]
    code = EXIT_MISMATCH if counts[MISMATCH] else EXIT_OK
    report = {
        "metadata": run_metadata(run.seed, run.tolerances()),
        "task": run.task,
        "space": spec.to_json(),
        "qsc": params.to_json(),
        "ledger": [r.to_json() for r in rows],
        "summary": summary,
        "exit_code": code,
    }
    write_json(run.out / "report.json", report)
    write_csv(
        run.out / "ledger.csv",
        ["seed", "formula_id", "kind", "point", "slots", "max_abs_diff", "max_rel_diff", "verdict", "fingerprint"],
        (
            [run.seed, r.formula_id, r.kind, [round(x, 12) for x in r.point], r.slots,
             r.max_abs_diff, r.max_rel_diff, r.verdict, r.fingerprint]
            for r in rows
        ),
    )
    print(
        f"{run.task}: {summary['checked']} checked, {summary['matched']} matched, "
        f"{summary['mismatched']} mismatched, {summary['not_stated']} not stated"
    )
    if "ricci_max_abs" in summary:
        print(f"max |Ric| = {summary['ricci_max_abs']:.3e}")
    return code


# ---------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------


def _axis(name: str, spec) -> list[Any]:
    if isinstance(spec, dict):
        try:
            start, stop, num = float(spec["start"]), float(spec["stop"]), int(spec["num"])
        except (KeyError, TypeError, ValueError):
            raise ConfigError(f"grid axis {name!r} needs numeric start, stop and num") from None
        vals: list[Any] = np.linspace(start, stop, num).tolist()
    elif isinstance(spec, list):
        vals = list(spec)
    else:
        raise ConfigError(f"grid axis {name!r} must be a list or a start/stop/num object")
    for v in vals:
        if isinstance(v, (int, float)) and not math.isfinite(v):
            raise ConfigError(f"grid axis {name!r} has a non-finite value")
    if not vals:
        raise ConfigError(f"grid axis {name!r} is empty")
    return vals


def grid_points(run: Run) -> tuple[list[str], list[tuple]]:
    grid = run.config.get("grid")
    if not isinstance(grid, dict) or not grid:
        raise ConfigError("sweep needs a non-empty 'grid' object")
    names = list(grid)
    if run.strict:
        unknown = sorted(set(names) - PARAM_KEYS)
        if unknown:
            raise ConfigError(f"unknown grid parameters: {unknown}")
    axes = [_axis(n, grid[n]) for n in names]
    size = math.prod(len(a) for a in axes)
    cap = int(run.config.get("max_rows", DEFAULT_MAX_ROWS))
    if size > cap:
        raise ConfigError(f"grid has {size} points, above the cap of {cap}")
    return names, list(itertools.product(*axes))


def sweep_row(run: Run, names: Sequence[str], index: int, values: tuple) -> list[Any]:
    """One grid point; the generator is seeded by (seed, index) so rows can be recomputed alone."""
    params = {**run.params, **dict(zip(names, values))}
    sub = Run(run.task, run.seed, run.tol, run.out, run.strict, run.config, params, run.draws)
    rng = np.random.default_rng([run.seed, index])
    try:
        out = TASK_RUNNERS[run.task](sub, rng, oracle=False)
    except QscError as exc:
        return [index, *values, "", "error", None, EXIT_CONFIG, str(exc)]
    cases = ";".join(it.get("case_id", "") for it in out.emitted)
    statuses = ";".join(f"{it.get('case_id', '')}={it.get('status', '')}" for it in out.items)
    worst = None if math.isnan(out.worst) else out.worst
    return [index, *values, cases, statuses, worst, out.code, out.message]


def threads() -> int:
    try:
        return max(1, int(os.environ.get("QSC_LAB_THREADS", "1")))
    except ValueError:
        return 1


def cmd_sweep(run: Run) -> int:
    names, points = grid_points(run)
    with ThreadPoolExecutor(max_workers=threads()) as pool:
        rows = list(pool.map(lambda ix: sweep_row(run, names, *ix), enumerate(points)))
    header = ["index", *names, "cases", "statuses", "residual_max", "code", "note"]
    code = EXIT_MISMATCH if any(r[-2] == EXIT_MISMATCH for r in rows) else EXIT_OK
    write_csv(run.out / "sweep.csv", ["seed", *header], ([run.seed, *r] for r in rows))
    report = {
        "metadata": run_metadata(run.seed, run.tolerances()),
        "task": run.task,
        "params": run.params,
        "grid": names,
        "rows": [dict(zip(header, r)) for r in rows],
        "summary": {
            "rows": len(rows),
            "emitting": sum(bool(r[len(names) + 1]) for r in rows),
            "mismatched": sum(r[-2] == EXIT_MISMATCH for r in rows),
            "errors": sum(r[-2] == EXIT_CONFIG for r in rows),
        },
        "exit_code": code,
    }
    write_json(run.out / "report.json", report)
    print(f"{run.task}: {len(rows)} rows written to {run.out / 'sweep.csv'}")
    return code


# ---------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsclab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("verify", "compare closed forms with the numerical oracle"),
        ("solve", "emit solution families for a warping or Kasner problem"),
        ("classify", "classify Kasner Einstein or scalar-curvature cases"),
        ("sweep", "run a task over a parameter grid"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int)
        p.add_argument("--tol", type=float, help=f"match and residual tolerance (default {DEFAULT_TOL:g})")
        p.add_argument("--out", help="output directory (default qsc_out)")
        p.add_argument("--strict", action="store_true", help="strict parameters, reject unknown keys")
        p.add_argument("--task", choices=TASKS)
        if name in ("solve", "classify", "sweep"):
            p.add_argument("--l", type=int, help="fiber dimension")
            p.add_argument("--lambda1", type=float)
            p.add_argument("--lambda2", type=float)
            p.add_argument("--alpha", type=float, help="Einstein constant")
            p.add_argument("--type", choices=("I", "II", "III"), help="Kasner type")
            p.add_argument("--zeta", type=float, help="Type III exponent sum for the witness")
            p.add_argument("--p", help="Kasner exponents, comma separated")
            p.add_argument("--sbar", type=float, help="target scalar curvature")
            p.add_argument("--sf", type=float, help="fiber scalar curvature")
    return parser


COMMANDS = {"verify": cmd_verify, "solve": cmd_solve, "classify": cmd_solve, "sweep": cmd_sweep}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run = make_run(args, args.command)
        return COMMANDS[args.command](run)
    except QscError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
