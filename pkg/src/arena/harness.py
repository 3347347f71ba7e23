"""Experiment plumbing: game descriptors, configs, presets, runs, comparisons, sweeps.

A game is named by a descriptor string:

* a fixture: ``staghunt`` or ``resource_2x2``
* a generator: ``resource:n=20,m=5`` or ``task:n=10,m=20,alpha=2,beta=1``
* a path to a JSON instance file written by :func:`arena.models.save_instance`

Generated games without an explicit ``seed=`` are drawn with the run seed,
so every seed gets its own instance and every algorithm sees the same one.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import statistics
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import dynamics as dyn
from .dynamics import ALGORITHMS, DynamicsConfig, RunResult, RunTrace
from .equilibria import cce_regret, empirical_distribution, is_psne, social_optimum
from .game import GameSpec, resource_2x2_fixture, stag_hunt_fixture
from .models import (
    ResourceGameParams,
    TaskGameParams,
    gen_resource_game,
    gen_task_game,
    load_instance,
    save_instance,
)

log = logging.getLogger(__name__)

OUT_DIR_ENV = "ARENA_OUT_DIR"
DEFAULT_OUT_DIR = "arena-out"
# enumerate for the oracle optimum only below this many profiles
ORACLE_LIMIT = 10**6


class ConfigError(ValueError):
    """Bad experiment configuration; the CLI maps it to exit code 2."""


FIXTURES = {
    "staghunt": stag_hunt_fixture,
    "stag_hunt": stag_hunt_fixture,
    "resource_2x2": resource_2x2_fixture,
}

_GENERATOR_KEYS = {
    "resource": {"n": "n_players", "m": "n_resources", "rate_min": "rate_min", "rate_max": "rate_max",
                 "seed": "seed"},
    "task": {"n": "n_agents", "m": "n_targets", "alpha": "alpha", "beta": "beta", "value_min": "value_min",
             "value_max": "value_max", "seed": "seed"},
}
_INT_FIELDS = {"n_players", "n_resources", "n_agents", "n_targets", "seed"}


def parse_descriptor(descriptor: str) -> tuple[str, dict]:
    """Split ``kind:key=value,...`` into the kind and a typed parameter dict."""
    kind, _, rest = descriptor.partition(":")
    kind = kind.strip()
    if kind not in _GENERATOR_KEYS:
        raise ConfigError(f"unknown generator {kind!r}; use one of {sorted(_GENERATOR_KEYS)}")
    params = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, value = item.partition("=")
        if not eq:
            raise ConfigError(f"expected key=value in {descriptor!r}, got {item!r}")
        name = _GENERATOR_KEYS[kind].get(key.strip())
        if name is None:
            raise ConfigError(f"unknown {kind} parameter {key!r}; known: {sorted(_GENERATOR_KEYS[kind])}")
        try:
            params[name] = int(value) if name in _INT_FIELDS else float(value)
        except ValueError:
            raise ConfigError(f"bad value for {key} in {descriptor!r}: {value!r}") from None
    return kind, params


def format_descriptor(kind: str, params: dict) -> str:
    short = {v: k for k, v in _GENERATOR_KEYS[kind].items()}
    return f"{kind}:" + ",".join(f"{short[k]}={v}" for k, v in params.items())


def build_game(descriptor: str, seed: int = 0) -> GameSpec:
    """Instantiate the game a descriptor names; ``seed`` feeds unseeded generators."""
    if descriptor in FIXTURES:
        return FIXTURES[descriptor]()
    if ":" in descriptor and descriptor.split(":", 1)[0] in _GENERATOR_KEYS:
        kind, params = parse_descriptor(descriptor)
        params.setdefault("seed", seed)
        try:
            if kind == "resource":
                return gen_resource_game(ResourceGameParams(**params))
            return gen_task_game(TaskGameParams(**params))[0]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad game {descriptor!r}: {exc}") from None
    path = Path(descriptor)
    if path.suffix == ".json" or path.exists():
        if not path.exists():
            raise ConfigError(f"game file not found: {descriptor}")
        try:
            return load_instance(path)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    raise ConfigError(f"unknown game {descriptor!r}: not a fixture ({', '.join(sorted(FIXTURES))}), "
                      "generator spec or instance file")


def instance_hash(game: GameSpec) -> str | None:
    doc = game.to_dict()
    if doc is None:
        return None
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


# -- configuration ------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    game: str
    algorithms: list[str] = field(default_factory=lambda: ["sorm"])
    seeds: list[int] = field(default_factory=lambda: [0])
    dynamics: DynamicsConfig = field(default_factory=DynamicsConfig)
    out_dir: Path | None = None
    # parameter sweep: axis name ("n" or "m") and the values it takes
    sweep_axis: str | None = None
    sweep_values: list[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if not self.algorithms:
            raise ConfigError("at least one algorithm is required")
        for name in self.algorithms:
            if name not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {name!r}; choose from {', '.join(ALGORITHMS)}")
        self.seeds = [int(s) for s in self.seeds]
        if self.out_dir is not None:
            self.out_dir = Path(self.out_dir)

    def to_dict(self) -> dict:
        return {
            "game": self.game,
            "algorithms": list(self.algorithms),
            "seeds": list(self.seeds),
            "dynamics": self.dynamics.to_dict(),
            "out_dir": str(self.out_dir) if self.out_dir is not None else None,
            "sweep_axis": self.sweep_axis,
            "sweep_values": list(self.sweep_values),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        known = {"game", "algorithms", "seeds", "dynamics", "out_dir", "sweep_axis", "sweep_values"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "game" not in doc:
            raise ConfigError("config needs a 'game'")
        try:
            doc["dynamics"] = DynamicsConfig.from_dict(doc.get("dynamics") or {})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad dynamics settings: {exc}") from None
        return cls(**doc)


def load_config(path: str | Path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    return doc


PRESETS: dict[str, dict] = {
    "fig2": {
        "game": "resource_2x2",
        "algorithms": ["sorm", "lurm", "gurm"],
        "seeds": list(range(50)),
        "dynamics": {"max_iterations": 5000},
    },
    "staghunt": {
        "game": "staghunt",
        "algorithms": ["sorm", "lurm", "gurm"],
        "seeds": list(range(50)),
        "dynamics": {"max_iterations": 5000},
    },
    "fig4-small": {
        "game": "resource:n=20,m=5",
        "algorithms": ["sorm", "gurm", "lurm"],
        "seeds": list(range(20)),
        "dynamics": {},
    },
    "fig5-sweep": {
        "game": "resource:n=50,m=3",
        "algorithms": ["sorm", "gurm", "lurm"],
        "seeds": list(range(5)),
        "dynamics": {},
        "sweep_axis": "m",
        "sweep_values": [3, 5, 8],
    },
    "wta-small": {
        "game": "task:n=10,m=20,alpha=2,beta=1",
        "algorithms": ["sorm", "gurm"],
        "seeds": list(range(10)),
        "dynamics": {"T": 500, "max_iterations": 500},
    },
}


def preset(name: str) -> dict:
    try:
        return json.loads(json.dumps(PRESETS[name]))
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}") from None


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_DIR_ENV, DEFAULT_OUT_DIR))


# -- metrics ------------------------------------------------------------------------------


def iterations_to_convergence(trace: RunTrace, window: int = 50) -> int | None:
    """First iteration (1-based, counted over the whole trace) at which every
    strategy has been pure on one unchanged profile for ``window`` iterations."""
    run, last = 0, None
    for k, (pure, prof) in enumerate(zip(trace.pure, trace.profiles)):
        if pure and prof == last:
            run += 1
        elif pure:
            run, last = 1, prof
        else:
            run, last = 0, None
        if run >= window:
            return k + 1
    return None


def metrics(trace: RunTrace, oracle_W: float | None = None, window: int = 50) -> dict:
    """Summary numbers of one trace, read off its last row.

    ``iterations_to_pure_convergence`` is ``"none"`` when play never settled.
    ``ratio_to_optimum`` only appears when ``oracle_W`` is given.
    """
    if len(trace) == 0:
        raise ValueError("empty trace")
    conv = iterations_to_convergence(trace, window)
    final_W = trace.global_utility[-1]
    out = {
        "iterations_to_pure_convergence": conv if conv is not None else "none",
        "final_W": final_W,
        "final_omega": trace.omega[-1],
        "max_final_avg_regret": trace.max_avg_regret[-1],
    }
    if oracle_W is not None:
        out["ratio_to_optimum"] = final_W / oracle_W if oracle_W != 0 else float("nan")
    return out


# -- running ------------------------------------------------------------------------------


@dataclass
class SeedRecord:
    algorithm: str
    seed: int
    game: str
    game_name: str
    instance_hash: str | None
    result: RunResult
    oracle_W: float | None = None
    paths: dict = field(default_factory=dict)

    def summary(self) -> dict:
        r = self.result
        out = {
            "algorithm": self.algorithm,
            "seed": self.seed,
            "game": self.game,
            "game_name": self.game_name,
            "instance_hash": self.instance_hash,
            "iterations_to_convergence": r.first_pure_at if r.first_pure_at is not None else "none",
            "final_W": r.W,
            "final_profile": list(r.profile),
            "final_omega": r.final_omega,
            "status": r.status,
            "rounds": r.rounds,
            "iterations": r.iterations,
            "cumulative_queries": r.trace.cumulative_queries[-1] if len(r.trace) else 0,
            "config": r.config.to_dict(),
        }
        if self.oracle_W is not None:
            out["oracle_W"] = self.oracle_W
            out["ratio_to_optimum"] = r.W / self.oracle_W if self.oracle_W != 0 else float("nan")
        out.update({k: str(v) for k, v in self.paths.items()})
        return out


def _oracle(game: GameSpec) -> float | None:
    if game.n_profiles > ORACLE_LIMIT:
        return None
    return social_optimum(game, ORACLE_LIMIT)[1]


def _write_seed(record: SeedRecord, game: GameSpec, out_dir: Path) -> None:
    arm = out_dir / record.algorithm
    arm.mkdir(parents=True, exist_ok=True)
    trace_path = arm / f"seed{record.seed}.csv"
    record.result.trace.to_csv(trace_path)
    record.paths["trace"] = trace_path
    if game.to_dict() is not None:
        inst = out_dir / "instances" / f"seed{record.seed}.json"
        inst.parent.mkdir(exist_ok=True)
        if not inst.exists():
            save_instance(game, inst)
        record.paths["instance"] = inst
    summary_path = arm / f"seed{record.seed}.json"
    record.paths["summary"] = summary_path
    summary_path.write_text(json.dumps(record.summary(), indent=2, sort_keys=True))


def run(config: ExperimentConfig, write: bool = True) -> list[SeedRecord]:
    """Run every (algorithm, seed) pair; write traces, summaries and instances.

    Files go to ``<out_dir>/<algorithm>/seed<k>.csv`` (trace) and ``.json``
    (summary), with the game instances under ``<out_dir>/instances``.
    """
    out_dir = config.out_dir or default_out_dir()
    records = []
    for seed in config.seeds:
        game = build_game(config.game, seed)
        oracle_W = _oracle(game)
        for algo in config.algorithms:
            log.info("%s seed %d on %s", algo, seed, config.game)
            result = dyn.run_algorithm(algo, game, replace(config.dynamics, seed=seed))
            rec = SeedRecord(algo, seed, config.game, game.name, instance_hash(game), result, oracle_W)
            if write:
                _write_seed(rec, game, out_dir)
            records.append(rec)
    return records


@dataclass
class ArmSummary:
    algorithm: str
    n_seeds: int
    mean_W: float
    median_W: float
    mean_iterations_to_convergence: float | None
    converged_seeds: int
    optimum_fraction: float | None
    mean_cumulative_queries: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ComparisonSummary:
    game: str
    seeds: list[int]
    arms: dict[str, ArmSummary]
    # seed -> instance hash, shared by every arm
    instance_hashes: dict[int, str | None]
    ranking: list[str]

    def to_dict(self) -> dict:
        return {
            "game": self.game,
            "seeds": self.seeds,
            "arms": {k: v.to_dict() for k, v in self.arms.items()},
            "instance_hashes": {str(k): v for k, v in self.instance_hashes.items()},
            "ranking": self.ranking,
        }


def summarise(records: Sequence[SeedRecord], game: str, seeds: Sequence[int]) -> ComparisonSummary:
    arms: dict[str, ArmSummary] = {}
    hashes: dict[int, str | None] = {}
    for rec in records:
        if rec.seed in hashes and hashes[rec.seed] != rec.instance_hash:
            raise RuntimeError(f"seed {rec.seed} ran on different instances across algorithms")
        hashes[rec.seed] = rec.instance_hash
    for algo in dict.fromkeys(r.algorithm for r in records):
        mine = [r for r in records if r.algorithm == algo]
        ws = [r.result.W for r in mine]
        conv = [r.result.first_pure_at for r in mine if r.result.first_pure_at is not None]
        opt = None
        if all(r.oracle_W is not None for r in mine):
            opt = sum(abs(r.result.W - r.oracle_W) <= 1e-9 for r in mine) / len(mine)
        queries = [r.result.trace.cumulative_queries[-1] if len(r.result.trace) else 0 for r in mine]
        arms[algo] = ArmSummary(
            algorithm=algo, n_seeds=len(mine), mean_W=float(np.mean(ws)), median_W=float(statistics.median(ws)),
            mean_iterations_to_convergence=float(np.mean(conv)) if conv else None, converged_seeds=len(conv),
            optimum_fraction=opt, mean_cumulative_queries=float(np.mean(queries)),
        )
    ranking = sorted(arms, key=lambda a: -arms[a].mean_W)
    return ComparisonSummary(game, list(seeds), arms, hashes, ranking)


def compare(config: ExperimentConfig, write: bool = True) -> ComparisonSummary:
    """Run every algorithm on the same instances and seeds and aggregate."""
    if len(config.algorithms) < 2:
        raise ConfigError("compare needs at least two algorithms")
    records = run(config, write=write)
    summary = summarise(records, config.game, config.seeds)
    if write:
        out_dir = config.out_dir or default_out_dir()
        (out_dir / "comparison.json").write_text(json.dumps(
            {"summary": summary.to_dict(), "config": config.to_dict()}, indent=2, sort_keys=True))
    return summary


SWEEP_COLUMNS = ("axis", "value", "algorithm", "mean_W", "median_W", "mean_iterations_to_convergence",
                 "converged_seeds", "optimum_fraction", "mean_cumulative_queries")


def _with_axis(descriptor: str, axis: str, value: int) -> str:
    kind, params = parse_descriptor(descriptor)
    name = _GENERATOR_KEYS[kind].get(axis)
    if name not in {"n_players", "n_resources", "n_agents", "n_targets"}:
        raise ConfigError(f"cannot sweep {axis!r}; sweep 'n' or 'm'")
    params[name] = value
    return format_descriptor(kind, params)


def sweep(config: ExperimentConfig, axis: str | None = None, values: Sequence[int] | None = None,
          write: bool = True) -> list[dict]:
    """One comparison per axis value; returns (and writes) the table rows."""
    axis = axis or config.sweep_axis
    values = list(values if values is not None else config.sweep_values)
    if axis is None or not values:
        raise ConfigError("sweep needs an axis and at least one value")
    unique = list(dict.fromkeys(int(v) for v in values))
    if len(unique) < len(values):
        warnings.warn(f"duplicate sweep values dropped: {values} -> {unique}", stacklevel=2)
    out_dir = config.out_dir or default_out_dir()
    rows = []
    for value in unique:
        point = replace(config, game=_with_axis(config.game, axis, value), out_dir=out_dir / f"{axis}={value}")
        records = run(point, write=write)
        summary = summarise(records, point.game, point.seeds)
        for algo, arm in summary.arms.items():
            rows.append({"axis": axis, "value": value, **{k: v for k, v in arm.to_dict().items()
                                                           if k not in ("n_seeds",)}})
    if write:
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "sweep.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: ("" if row[k] is None else row[k]) for k in SWEEP_COLUMNS})
    return rows


def replay(summary_path: str | Path) -> RunResult:
    """Re-run one seed from its JSON summary and the instance file next to it."""
    doc = json.loads(Path(summary_path).read_text())
    game = load_instance(doc["instance"]) if "instance" in doc else build_game(doc["game"], doc["seed"])
    config = DynamicsConfig.from_dict(doc["config"])
    return dyn.run_algorithm(doc["algorithm"], game, config)


def verify_trace(game: GameSpec, trace: RunTrace, burn_in: float = 0.5) -> dict:
    """Equilibrium diagnostics of recorded play: final profile and post-burn-in CCE regret."""
    dist = empirical_distribution(trace, burn_in)
    last = trace.profiles[-1]
    return {
        "final_profile": list(last),
        "final_is_psne": is_psne(game, last),
        "pure_at_end": bool(trace.pure[-1]),
        "cce_regret": cce_regret(game, dist),
        "window": dist.total,
    }
