"""Command-line entry point: ``stochdim <subcommand> --config run.json``.

Subcommands write into ``--out``:

* simulate   paths.csv
* dissect    pieces.csv
* integrate  gains.csv, plus wealth.csv and wealth.json under the L0 convention
* verify     verify.json and verify.txt (exit 1 on any violation)
* test       reports.json and reports.txt (exit 1 if any report fails)

Every run also writes manifest.json with the config hash, the seed and the
sha256 of each output. Nothing depends on wall-clock time, so equal configs
give byte-identical outputs. Schema errors exit with code 2.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Annotated, Literal, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .deflator import (
    CheckpointAccumulator,
    Mode,
    NoDeflatorError,
    deflator_for_scenario,
    martingale_test,
)
from .dissection import ResetSequenceError, check_resets, dissect_path, integrate_dissected
from .integration import integrate
from .io import (
    CsvFormatError,
    config_hash,
    file_sha256,
    read_paths_csv,
    write_json,
    write_paths_csv,
    write_pieces_csv,
    write_series_csv,
)
from .market import GridSpec, MarketSpec, SimulationError, iter_scenarios
from .paths import PiecewisePath, minimal_reset_sequence, validate_path
from .portfolio import admissibility_from_gains
from .rng import MAX_SEED
from .strategies import RuleStrategy, StepStrategy, named_rule
from .strict_local import StrictLocalMartSpec, iter_strict_local_mart

__all__ = ["RunConfig", "load_config", "run", "main"]

log = logging.getLogger("stochdim")

_STRICT = ConfigDict(extra="forbid", frozen=True)
SUBCOMMANDS = ("simulate", "dissect", "integrate", "verify", "test")
REPORTS = ("martingale", "supermartingale", "deflator", "deflated", "admissibility")


class RuleSpec(BaseModel):
    model_config = _STRICT
    rule: Literal["buy-hold", "equal-weight", "constant-share", "short-one"]
    params: dict[str, float] = {}


class StepSpec(BaseModel):
    """Positions H_i held on (alpha_i, alpha_{i+1}]."""

    model_config = _STRICT
    step: list[tuple[float, list[float]]] = Field(min_length=1)
    initial: list[float] | None = None
    end: float | None = None


class TestPlan(BaseModel):
    model_config = _STRICT
    reports: list[Literal[REPORTS]] = ["martingale", "deflated"]
    z: float = Field(default=3.0, gt=0)
    checkpoints: list[float] | None = None
    c: float | None = Field(default=None, ge=0)


class RunConfig(BaseModel):
    """Everything a run needs. Exactly one of market, market_path, example
    names the scenario source unless paths are read from ``--paths``."""

    model_config = _STRICT
    subcommand: Literal[SUBCOMMANDS] | None = None
    market: MarketSpec | None = None
    market_path: str | None = None
    example: StrictLocalMartSpec | None = None
    strategy: Annotated[Union[RuleSpec, StepSpec], Field(union_mode="left_to_right")] = RuleSpec(rule="buy-hold")
    seed: int | None = Field(default=None, ge=0, le=MAX_SEED)
    n_scenarios: int | None = Field(default=None, ge=1)
    grid: GridSpec | None = None
    convention: Literal["L0", "seed"] = "L0"
    v: float = 1.0
    tests: TestPlan = TestPlan()
    out: str | None = None

    @model_validator(mode="after")
    def _one_source(self):
        if sum(x is not None for x in (self.market, self.market_path, self.example)) > 1:
            raise ValueError("give at most one of market, market_path, example")
        return self

    def source_spec(self):
        """The market or Example spec with seed, size and grid overrides applied."""
        base = self.market if self.market is not None else self.example
        if base is None:
            return None
        data = base.model_dump()
        if self.seed is not None:
            data["seed"] = self.seed
        if self.n_scenarios is not None:
            data["n_scenarios"] = self.n_scenarios
        if self.grid is not None:
            if isinstance(base, MarketSpec):
                data["grid"] = self.grid.model_dump()
            else:
                data["T"], data["step"] = self.grid.T, self.grid.step
        return type(base).model_validate(data)

    def strategy_object(self):
        s = self.strategy
        if isinstance(s, RuleSpec):
            return RuleStrategy(named_rule(s.rule, **s.params))
        return StepStrategy(s.step, initial=s.initial, end=s.end)


class ConfigError(ValueError):
    pass


def _field_errors(exc: ValidationError) -> list[str]:
    return [f"{'.'.join(str(p) for p in e['loc']) or '<root>'}: {e['msg']}" for e in exc.errors()]


def load_config(path: str | None, overrides: dict) -> RunConfig:
    data = {}
    base_dir = Path(".")
    if path is not None:
        base_dir = Path(path).parent
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be a JSON object")
    data.update({k: v for k, v in overrides.items() if v is not None})
    cfg = RunConfig.model_validate(data)
    if cfg.market_path is not None:
        mp = base_dir / cfg.market_path
        try:
            market = json.loads(mp.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"market_path: cannot read {mp}: {exc}") from None
        data = cfg.model_dump(exclude={"market_path"}, exclude_none=True)
        data["market"] = market
        try:
            cfg = RunConfig.model_validate(data)
        except ValidationError as exc:
            raise ConfigError("\n".join(_field_errors(exc))) from None
    return cfg


# -- scenario sources ---------------------------------------------------------


def _paths(cfg: RunConfig, paths_csv: str | None) -> tuple[list[int], list[PiecewisePath]]:
    if paths_csv is not None:
        data = read_paths_csv(paths_csv)
        return list(data), list(data.values())
    spec = cfg.source_spec()
    if spec is None:
        raise ConfigError("config: no scenario source (market, market_path or example) and no --paths")
    if isinstance(spec, MarketSpec):
        sims = list(iter_scenarios(spec))
        return [s.scenario_id for s in sims], [s.path for s in sims]
    sims = list(iter_strict_local_mart(spec))
    return [s.scenario_id for s in sims], [s.path for s in sims]


def _holdings(cfg: RunConfig, path: PiecewisePath):
    h = cfg.strategy_object().materialize(path)
    return h.without_initial() if cfg.convention == "L0" else h


# -- subcommands ----------------------------------------------------------------


def _cmd_simulate(cfg, args, out: Path) -> tuple[int, list[str]]:
    ids, paths = _paths(cfg, None)
    write_paths_csv(out / "paths.csv", paths, ids)
    return 0, ["paths.csv"]


def _cmd_dissect(cfg, args, out: Path):
    ids, paths = _paths(cfg, args.paths)
    write_pieces_csv(out / "pieces.csv", (dissect_path(p) for p in paths), paths, ids)
    return 0, ["pieces.csv"]


def _cmd_integrate(cfg, args, out: Path):
    ids, paths = _paths(cfg, args.paths)
    gains = [integrate(_holdings(cfg, p), p) for p in paths]
    times = [p.grid.times for p in paths]
    write_series_csv(out / "gains.csv", zip(times, (g.values for g in gains)), ids)
    files = ["gains.csv"]
    if cfg.convention == "L0":
        write_series_csv(out / "wealth.csv", zip(times, (cfg.v + g.values for g in gains)), ids)
        write_json(out / "wealth.json", {"v": cfg.v, "convention": "L0", "source": "wealth.csv"})
        files += ["wealth.csv", "wealth.json"]
    return 0, files


def _verify_path(sid: int, path: PiecewisePath, cfg: RunConfig, max_pieces) -> list[str]:
    problems = [f"scenario {sid}: {v}" for v in validate_path(path, max_pieces)]
    if problems:
        return problems
    try:
        check_resets(path, path.reset_times)
    except ResetSequenceError as exc:
        problems.append(f"scenario {sid}: {exc}")
        return problems
    minimal = minimal_reset_sequence(path)
    h = _holdings(cfg, path)
    direct = integrate(h, path).values
    for label, resets in (("stored", path.reset_times), ("minimal", minimal)):
        diff = float(np.max(np.abs(integrate_dissected(h, path, resets).values - direct)))
        if diff > 1e-9:
            problems.append(f"scenario {sid}: gains via {label} resets differ by {diff:.3g}")
    return problems


def _cmd_verify(cfg, args, out: Path):
    ids, paths = _paths(cfg, args.paths)
    spec = cfg.source_spec()
    cap = getattr(spec, "max_pieces", None)
    problems = []
    for sid, p in zip(ids, paths):
        problems += _verify_path(sid, p, cfg, cap)
    result = {"n_paths": len(paths), "violations": problems, "passed": not problems}
    write_json(out / "verify.json", result)
    text = [f"verified {len(paths)} paths: {'PASS' if not problems else 'FAIL'}"] + [f"  {p}" for p in problems]
    (out / "verify.txt").write_text("\n".join(text) + "\n")
    for p in problems:
        log.error("%s", p)
    return (0 if not problems else 1), ["verify.json", "verify.txt"]


def _default_checkpoints(horizon: float, common: set | None) -> list[float]:
    cps = {0.0, horizon}
    if common:
        cps |= common
    return sorted(cps)


def _cmd_test(cfg, args, out: Path):
    spec = cfg.source_spec()
    if spec is None:
        raise ConfigError("config: the test subcommand needs a market, market_path or example")
    plan = cfg.tests
    is_market = isinstance(spec, MarketSpec)
    source = iter_scenarios(spec) if is_market else iter_strict_local_mart(spec)
    strat = cfg.strategy_object()
    want = set(plan.reports)
    if not is_market and ("deflator" in want or "deflated" in want):
        log.info("Example pieces are driftless inverse Bessel pieces; the deflator is Z = 1")

    # first pass collects per-path series; checkpoints need the common resets
    rows_v, rows_z, gains_list = [], [], []
    common = None
    for s in source:
        path = s.path
        g = integrate(strat.materialize(path).without_initial(), path)
        common = set(path.reset_times[1:]) if common is None else common & set(path.reset_times[1:])
        if "admissibility" in want:
            gains_list.append(g)
        z = deflator_for_scenario(s).values if is_market else np.ones(len(path.grid))
        rows_v.append((path.grid, cfg.v + g.values))
        rows_z.append(z)
    if not rows_v:
        raise ConfigError("no scenarios")
    checkpoints = plan.checkpoints
    if checkpoints is None:
        checkpoints = _default_checkpoints(rows_v[0][0].horizon, common)

    acc_v = CheckpointAccumulator(len(checkpoints))
    acc_z = CheckpointAccumulator(len(checkpoints))
    acc_zv = CheckpointAccumulator(len(checkpoints))
    for (grid, v), z in zip(rows_v, rows_z):
        idx = [grid.index_of(t) for t in checkpoints]
        acc_v.update(v[idx])
        acc_z.update(z[idx])
        acc_zv.update(z[idx] * v[idx])

    tested = f"tested family: {cfg.strategy.model_dump_json()} wealth with v={cfg.v:g} on {len(rows_v)} paths"
    reports = []
    for name in plan.reports:
        if name == "martingale":
            reports.append(martingale_test(acc_v.samples(), checkpoints, Mode.MARTINGALE, plan.z, "wealth", [tested]))
        elif name == "supermartingale":
            reports.append(martingale_test(acc_v.samples(), checkpoints, Mode.SUPERMARTINGALE, plan.z, "wealth", [tested]))
        elif name == "deflator":
            reports.append(martingale_test(acc_z.samples(), checkpoints, Mode.MARTINGALE, plan.z, "deflator"))
        elif name == "deflated":
            reports.append(martingale_test(acc_zv.samples(), checkpoints, Mode.SUPERMARTINGALE, plan.z,
                                           "deflated wealth", [tested]))
    body = [r.to_dict() for r in reports]
    texts = [r.to_text() for r in reports]
    passed = all(r.passed for r in reports)
    if "admissibility" in want:
        if plan.c is None:
            raise ConfigError("tests.c: the admissibility report needs a claimed credit line c")
        adm = admissibility_from_gains(gains_list, plan.c)
        body.append({"name": "admissibility", **adm.to_dict()})
        texts.append(f"admissibility: {adm.verdict.value}, inf gains {adm.pathwise_inf:.6g}\n  note: {adm.note}")
        passed = passed and adm.verdict.value == "EMPIRICALLY_ADMISSIBLE"
    write_json(out / "reports.json", {"reports": body, "passed": passed})
    (out / "reports.txt").write_text("\n\n".join(texts) + f"\n\noverall: {'PASS' if passed else 'FAIL'}\n")
    return (0 if passed else 1), ["reports.json", "reports.txt"]


_COMMANDS = {
    "simulate": _cmd_simulate,
    "dissect": _cmd_dissect,
    "integrate": _cmd_integrate,
    "verify": _cmd_verify,
    "test": _cmd_test,
}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stochdim", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run config")
        p.add_argument("--seed", type=int, help="override the scenario seed (u64)")
        p.add_argument("--scenarios", type=int, help="override the number of scenarios")
        p.add_argument("--out", help="output directory (default: the config's out, else .)")
        p.add_argument("--z", type=float, help="z multiplier for test bands")
        p.add_argument("--paths", help="read paths from this CSV instead of simulating")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def run(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if not logging.getLogger().handlers:
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    overrides = {"subcommand": args.subcommand, "seed": args.seed, "n_scenarios": args.scenarios, "out": args.out}
    try:
        cfg = load_config(args.config, overrides)
        if args.z is not None:
            cfg = RunConfig.model_validate({**cfg.model_dump(exclude_none=True),
                                            "tests": {**cfg.tests.model_dump(exclude_none=True), "z": args.z}})
    except ValidationError as exc:
        for line in _field_errors(exc):
            print(f"config error: {line}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    spec = cfg.source_spec()
    seed = getattr(spec, "seed", None)
    digest = config_hash(cfg.model_dump(mode="json", exclude={"out"}))
    log.warning("config %s seed %s", digest[:16], seed)
    out = Path(cfg.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    try:
        code, files = _COMMANDS[args.subcommand](cfg, args, out)
    except (ConfigError, CsvFormatError, NoDeflatorError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SimulationError as exc:
        # e.g. a scenario needing more pieces than the cap allows
        print(f"generation error: {exc}", file=sys.stderr)
        return 1
    manifest = {
        "subcommand": args.subcommand,
        "config_hash": digest,
        "seed": seed,
        "inputs": {"paths": file_sha256(args.paths)} if args.paths else {},
        "outputs": {f: file_sha256(out / f) for f in files},
        "exit_code": code,
    }
    write_json(out / "manifest.json", manifest)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
