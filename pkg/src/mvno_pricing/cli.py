"""Command-line front end: ``solve``, ``sweep``, ``game`` and ``verify``.

Output is CSV with a header row and fixed column order; notes and summaries
follow as ``#`` comment lines. Exit codes: 0 success, 1 configuration error,
2 model infeasibility, 3 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np

from . import game, oracle, solvers
from .market import DEFAULT_TOL, MAX_GAMMA, MarketParams, ParameterError, Scenario, reference_params

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_VERIFY = 0, 1, 2, 3

SCENARIOS = ("part-nonpart-1", "part-nonpart-2", "part-part-fs", "part-part-ps", "nonpart-nonpart")
SWEEP_VARS = ("gamma", "r0", "eps")

SOLVE_COLUMNS = [
    "scenario", "leader", "w1", "w2", "p0", "boundary", "q0", "d1", "d2",
    "r_mvno", "r_mno1", "r_mno2", "feasible",
    "r_bar_10", "r_bar_20", "r_bar_0", "r_flat_0",
]
SWEEP_COLUMNS = ["sweep_value"] + SOLVE_COLUMNS + ["scaled_w1", "scaled_w2"]
GAME_COLUMNS = ["mno1", "mno2", "r_mno1", "r_mno2", "margin_mno1", "margin_mno2", "is_ne", "source"]
VERIFY_COLUMNS = ["check", "passed", "gap", "detail"]

RUN_KEYS = {
    "scenario", "leader", "sweep", "from", "to", "steps",
    "grid_resolution", "grid_rounds", "tolerance", "out",
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    market: MarketParams
    scenario: str = "part-part-fs"
    leader: int = 1
    sweep: Optional[str] = None
    start: Optional[float] = None
    stop: Optional[float] = None
    steps: int = 11
    grid_resolution: int = 2001
    grid_rounds: int = 2
    tolerance: float = DEFAULT_TOL
    out: Optional[str] = None
    perturb: float = 0.0

    @property
    def grid(self) -> oracle.GridSpec:
        return oracle.GridSpec(resolution=self.grid_resolution, rounds=self.grid_rounds)

    def validate(self, command: str) -> None:
        valid = SCENARIOS + (("all",) if command == "sweep" else ())
        if self.scenario not in valid:
            raise ConfigError(f"scenario: expected one of {', '.join(valid)}, got {self.scenario!r}")
        if self.leader not in (1, 2):
            raise ConfigError(f"leader: must be 1 or 2, got {self.leader!r}")
        if self.grid_resolution < 3:
            raise ConfigError("grid_resolution: must be at least 3")
        if self.grid_rounds < 0:
            raise ConfigError("grid_rounds: must be nonnegative")
        if not self.tolerance > 0:
            raise ConfigError("tolerance: must be positive")
        if command != "sweep":
            return
        if self.sweep not in SWEEP_VARS:
            raise ConfigError(f"sweep: expected one of {', '.join(SWEEP_VARS)}, got {self.sweep!r}")
        if self.start is None or self.stop is None:
            raise ConfigError("from/to: sweep range is required")
        if self.steps < 2:
            raise ConfigError("steps: must be at least 2")
        lo, hi = sorted((self.start, self.stop))
        if self.sweep == "gamma" and (lo < 0 or hi > MAX_GAMMA):
            raise ConfigError(f"from/to: gamma sweep must stay within [0, {MAX_GAMMA}]")
        if self.sweep == "r0" and lo < 0:
            raise ConfigError("from/to: r0 sweep must be nonnegative")
        if self.sweep == "eps" and lo <= 0:
            raise ConfigError("from/to: eps sweep must be positive")


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return {"market": reference_params().to_dict(), "run": {}}
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config: top level must be an object")
    unknown = sorted(set(doc) - {"market", "run"})
    if unknown:
        raise ConfigError(f"config: unknown top-level key {unknown[0]!r}")
    if "market" not in doc:
        raise ConfigError("config: missing 'market' section")
    run = doc.get("run", {})
    if not isinstance(run, dict) or not isinstance(doc["market"], dict):
        raise ConfigError("config: 'market' and 'run' must be objects")
    bad = sorted(set(run) - RUN_KEYS)
    if bad:
        raise ConfigError(f"run: unknown key {bad[0]!r}")
    return doc


def build_config(args: argparse.Namespace) -> RunConfig:
    doc = load_config(args.config)
    try:
        market = MarketParams.from_mapping(doc["market"])
    except ParameterError as exc:
        raise ConfigError(f"market.{exc}") from exc
    except TypeError as exc:
        raise ConfigError(f"market: {exc}") from exc
    run = dict(doc.get("run", {}))
    overrides = {
        "scenario": args.scenario, "leader": args.leader, "sweep": args.sweep,
        "from": args.start, "to": args.stop, "steps": args.steps,
        "grid_resolution": args.grid_resolution, "grid_rounds": args.grid_rounds,
        "tolerance": args.tolerance, "out": args.out,
    }
    run.update({k: v for k, v in overrides.items() if v is not None})
    try:
        cfg = RunConfig(
            market=market,
            scenario=run.get("scenario", "part-part-fs"),
            leader=int(run.get("leader", 1)),
            sweep=run.get("sweep"),
            start=None if run.get("from") is None else float(run["from"]),
            stop=None if run.get("to") is None else float(run["to"]),
            steps=int(run.get("steps", 11)),
            grid_resolution=int(run.get("grid_resolution", 2001)),
            grid_rounds=int(run.get("grid_rounds", 2)),
            tolerance=float(run.get("tolerance", DEFAULT_TOL)),
            out=run.get("out"),
            perturb=getattr(args, "perturb", 0.0) or 0.0,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"run: {exc}") from exc
    cfg.validate(args.command)
    return cfg


# -- formatting --------------------------------------------------------------


def fmt(value) -> str:
    """Locale-independent cell formatting with 12 significant digits."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if v == 0.0:
            v = 0.0
        if math.isnan(v):
            return "nan"
        return format(v, ".12g")
    return str(value)


def write_table(stream, columns: Sequence[str], rows: Iterable[dict], comments: Sequence[str] = ()) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(row.get(c)) for c in columns])
    for line in comments:
        stream.write(f"# {line}\n")


def _scenario_of(name: str, leader: int) -> Scenario:
    if name == "part-nonpart-1":
        return Scenario.part_nonpart(1)
    if name == "part-nonpart-2":
        return Scenario.part_nonpart(2)
    if name == "part-part-fs":
        return Scenario.part_part_fs(leader)
    if name == "part-part-ps":
        return Scenario.part_part_ps()
    return Scenario.nonpart_nonpart()


def solution_row(params: MarketParams, sol: solvers.PriceSolution) -> dict:
    th = solvers.thresholds(params)
    flows = sol.flows
    return {
        "scenario": sol.scenario.label,
        "leader": sol.leader,
        "w1": sol.w1,
        "w2": sol.w2,
        "p0": sol.p0,
        "boundary": sol.boundary if sol.p0 is not None else None,
        "q0": None if flows is None else float(flows.q0),
        "d1": None if flows is None else float(flows.d1),
        "d2": None if flows is None else float(flows.d2),
        "r_mvno": sol.profit_mvno,
        "r_mno1": sol.profit_mno1,
        "r_mno2": sol.profit_mno2,
        "feasible": sol.feasible,
        "r_bar_10": th.r_bar_10,
        "r_bar_20": th.r_bar_20,
        "r_bar_0": th.r_bar_0,
        "r_flat_0": th.r_flat_0,
    }


# -- commands ----------------------------------------------------------------


def cmd_solve(cfg: RunConfig, stream) -> int:
    sol = solvers.solve(cfg.market, _scenario_of(cfg.scenario, cfg.leader), cfg.tolerance)
    comments = [f"diagnostic: {d}" for d in sol.diagnostics]
    write_table(stream, SOLVE_COLUMNS, [solution_row(cfg.market, sol)], comments)
    return EXIT_OK if sol.feasible else EXIT_INFEASIBLE


def _sweep_scenarios(cfg: RunConfig) -> List[Scenario]:
    if cfg.scenario != "all":
        return [_scenario_of(cfg.scenario, cfg.leader)]
    return [
        Scenario.part_nonpart(1), Scenario.part_nonpart(2),
        Scenario.part_part_fs(1), Scenario.part_part_fs(2), Scenario.part_part_ps(),
    ]


def _trend(values: Sequence[float], tol: float) -> str:
    if len(values) < 2:
        return "n/a"
    diffs = np.diff(np.asarray(values, dtype=float))
    scale = max(1.0, float(np.max(np.abs(values))))
    up = diffs > tol * scale
    down = diffs < -tol * scale
    if not up.any() and not down.any():
        return "constant"
    if not down.any():
        return "increasing" if up.all() else "non-decreasing"
    if not up.any():
        return "decreasing" if down.all() else "non-increasing"
    return "mixed"


def sweep_rows(cfg: RunConfig) -> tuple:
    values = np.linspace(cfg.start, cfg.stop, cfg.steps)
    scenarios = _sweep_scenarios(cfg)
    rows: List[dict] = []
    series: dict = {}
    for x in values:
        params = cfg.market.replace(**{cfg.sweep: float(x)})
        for sc in scenarios:
            sol = solvers.solve(params, sc, cfg.tolerance)
            row = solution_row(params, sol)
            row["sweep_value"] = float(x)
            a = 1.0 - params.gamma
            row["scaled_w1"] = None if sol.w1 is None else a * sol.w1
            row["scaled_w2"] = None if sol.w2 is None else a * sol.w2
            rows.append(row)
            key = f"{sc.label}" + (f"(leader={sol.leader})" if sol.leader else "")
            series.setdefault(key, []).append(row)
    comments = []
    for key, srows in series.items():
        feasible = [r for r in srows if r["feasible"]]
        parts = [f"feasible points {len(feasible)}/{len(srows)}"]
        for col in ("w1", "w2", "p0", "scaled_w1", "scaled_w2"):
            vals = [r[col] for r in feasible if r[col] is not None]
            if len(vals) >= 2:
                parts.append(f"{col} {_trend(vals, 1e-12)} in {cfg.sweep}")
        comments.append(f"{key}: " + "; ".join(parts))
    return rows, comments


def cmd_sweep(cfg: RunConfig, stream) -> int:
    try:
        rows, comments = sweep_rows(cfg)
    except ParameterError as exc:
        raise ConfigError(f"sweep: {exc}") from exc
    write_table(stream, SWEEP_COLUMNS, rows, comments)
    return EXIT_OK


def game_summary(params: MarketParams, report: game.EquilibriumReport) -> str:
    if report.hypothesis_b:
        return "unique NE: (Part, Part)"
    if report.hypothesis_a:
        reasons = []
        if not report.r0_below_r_bar_20:
            reasons.append("r0 > r_bar_20")
        if not report.single_price_above_cost:
            reasons.append("single-partner price of MNO 2 below its network cost")
        return "(Part, Part) is a NE; uniqueness not guaranteed (" + ", ".join(reasons) + ")"
    return "sufficient conditions not met; no equilibrium claim (see enumeration)"


def cmd_game(cfg: RunConfig, stream) -> int:
    params = cfg.market
    report = game.partnership_report(params, cfg.leader)
    matrix = game.build_payoff_matrix(params, cfg.leader)
    rows = []
    for profile, cell in matrix.cells.items():
        m1, m2 = report.margins[profile]
        rows.append({
            "mno1": profile[0], "mno2": profile[1], "r_mno1": cell.r1, "r_mno2": cell.r2,
            "margin_mno1": m1, "margin_mno2": m2, "is_ne": profile in report.equilibria,
            "source": cell.source,
        })
    eq = ", ".join(f"({a}, {b})" for a, b in report.equilibria) or "none"
    comments = [
        f"fs leader: {matrix.fs_leader}",
        f"pure equilibria: {eq}",
        f"r0 <= r_bar_0: {fmt(report.r0_below_r_bar_0)}",
        f"r0 <= r_bar_20: {fmt(report.r0_below_r_bar_20)}",
        f"sequential wholesale prices >= network costs: {fmt(report.fs_prices_above_cost)}",
        f"MNO 2 single-partner price >= network cost: {fmt(report.single_price_above_cost)}",
    ]
    for i, (dp, dn, ok) in report.customer_loss.items():
        comments.append(
            f"customer loss mno{i}: lost as partner {fmt(dp)}, lost as non-partner {fmt(dn)}, holds {fmt(ok)}"
        )
    comments.append(f"summary: {game_summary(params, report)}")
    write_table(stream, GAME_COLUMNS, rows, comments)
    return EXIT_OK


def cmd_verify(cfg: RunConfig, stream) -> int:
    results = oracle.run_all_checks(cfg.market, cfg.grid, cfg.perturb)
    rows = [{"check": r.name, "passed": r.passed, "gap": r.gap, "detail": r.detail} for r in results]
    failed = [r.name for r in results if not r.passed]
    summary = "all checks passed" if not failed else "failed: " + ", ".join(failed)
    write_table(stream, VERIFY_COLUMNS, rows, [summary])
    return EXIT_OK if not failed else EXIT_VERIFY


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "game": cmd_game, "verify": cmd_verify}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvno-pricing",
        description="Optimal wholesale/retail prices and partnership equilibria for a two-MNO, one-MVNO market.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with 'market' and optional 'run' sections (default: reference market)")
    common.add_argument("--scenario", help="|".join(SCENARIOS) + " (sweep also accepts 'all')")
    common.add_argument("--leader", type=int, choices=(1, 2), help="leader MNO for the sequential model")
    common.add_argument("--sweep", choices=SWEEP_VARS, help="parameter to sweep")
    common.add_argument("--from", dest="start", type=float, help="first sweep value")
    common.add_argument("--to", dest="stop", type=float, help="last sweep value")
    common.add_argument("--steps", type=int, help="number of sweep points")
    common.add_argument("--grid-resolution", type=int, help="points per axis in oracle grids")
    common.add_argument("--grid-rounds", type=int, help="zoom refinement rounds in oracle grids")
    common.add_argument("--tolerance", type=float, help="absolute tolerance for threshold comparisons")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--perturb", type=float, default=0.0, help=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        cfg = build_config(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    buffer = io.StringIO()
    try:
        code = COMMANDS[args.command](cfg, buffer)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.out and cfg.out != "-":
        with open(cfg.out, "w", newline="") as fh:
            fh.write(buffer.getvalue())
    else:
        sys.stdout.write(buffer.getvalue())
    return code


if __name__ == "__main__":
    sys.exit(main())
