"""Parametric game families: proportional-fair resource selection and target assignment."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .game import GameSpec


@dataclass(frozen=True)
class ResourceGameParams:
    n_players: int
    n_resources: int
    rate_min: float = 1.0
    rate_max: float = 100.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_players < 1 or self.n_resources < 1:
            raise ValueError("need at least one player and one resource")
        if not 0 < self.rate_min <= self.rate_max:
            raise ValueError(f"need 0 < rate_min <= rate_max, got {self.rate_min}, {self.rate_max}")


@dataclass(frozen=True)
class TaskGameParams:
    n_agents: int
    n_targets: int
    alpha: float = 2.0
    beta: float = 1.0
    value_min: float = 10.0
    value_max: float = 100.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_agents < 1 or self.n_targets < 1:
            raise ValueError("need at least one agent and one target")
        if not (np.isfinite(self.alpha) and np.isfinite(self.beta)):
            raise ValueError("alpha and beta must be finite")
        if self.value_min > self.value_max:
            raise ValueError("value_min must not exceed value_max")


# -- resource selection ---------------------------------------------------------


class ResourceGame(GameSpec):
    """Players pick one resource each; a resource's rate is split equally among its users.

    ``rates[i, r]`` is player i's rate when alone on resource r, so
    ``u_i(a) = rates[i, a_i] / load(a_i)``.
    """

    def __init__(self, rates: np.ndarray, *, labels=None, name: str = "resource") -> None:
        rates = np.array(rates, dtype=float)
        if rates.ndim != 2:
            raise ValueError("rates must be a (players, resources) matrix")
        if not np.all(np.isfinite(rates)):
            raise ValueError("rates must be finite")
        rates.setflags(write=False)
        self.rates = rates
        n, m = rates.shape
        super().__init__([m] * n, self._eval, labels=labels, name=name)
        self._rows = np.arange(n)

    def _eval(self, player: int, profile: tuple) -> float:
        load = sum(1 for a in profile if a == profile[player])
        return float(self.rates[player, profile[player]] / load)

    def loads(self, a: np.ndarray) -> np.ndarray:
        return np.bincount(a, minlength=self.rates.shape[1])

    def _payoffs(self, a: np.ndarray) -> np.ndarray:
        return self.rates[self._rows, a] / self.loads(a)[a]

    def _global(self, a: np.ndarray) -> float:
        return float(np.sum(self._payoffs(a)))

    def _deviation_payoffs(self, a: np.ndarray) -> np.ndarray:
        load = self.loads(a)
        out = self.rates / (load[None, :] + 1)
        out[self._rows, a] = self._payoffs(a)
        return out

    def _deviation_globals(self, a: np.ndarray) -> np.ndarray:
        m = self.rates.shape[1]
        load = np.bincount(a, minlength=m).astype(float)
        own = self.rates[self._rows, a]
        total = np.bincount(a, weights=own, minlength=m)
        share = np.divide(total, load, out=np.zeros(m), where=load > 0)
        w = float(np.sum(own / load[a]))

        # leaving a_i: the old resource keeps the others' rates
        left_load = load[a] - 1
        left_share = np.divide(total[a] - own, left_load, out=np.zeros_like(own), where=left_load > 0)
        base = w - share[a] + left_share  # (n,)
        # joining k
        join = (total[None, :] + self.rates) / (load[None, :] + 1)
        out = base[:, None] - share[None, :] + join
        out[self._rows, a] = w
        return out

    def to_dict(self) -> dict:
        return {"kind": "resource", "rates": self.rates.tolist()}


def gen_resource_game(params: ResourceGameParams) -> ResourceGame:
    rng = np.random.default_rng(params.seed)
    rates = rng.uniform(params.rate_min, params.rate_max, size=(params.n_players, params.n_resources))
    return ResourceGame(rates, name=f"resource-{params.n_players}x{params.n_resources}")


# -- target assignment ----------------------------------------------------------


def survival_prob(distance, alpha: float = 2.0, beta: float = 1.0):
    """Probability a target survives an agent at ``distance``; logistic, rising with distance."""
    return 1.0 / (1.0 + np.exp(-alpha * np.asarray(distance, dtype=float) + beta))


@dataclass(frozen=True)
class TaskInstance:
    agent_positions: np.ndarray  # (n, 3)
    target_positions: np.ndarray  # (m, 3)
    values: np.ndarray  # (m,)
    alpha: float = 2.0
    beta: float = 1.0

    def __post_init__(self) -> None:
        for name in ("agent_positions", "target_positions", "values"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.agent_positions.ndim != 2 or self.agent_positions.shape[1] != 3:
            raise ValueError("agent_positions must be (n, 3)")
        if self.target_positions.ndim != 2 or self.target_positions.shape[1] != 3:
            raise ValueError("target_positions must be (m, 3)")
        if self.values.shape != (self.target_positions.shape[0],):
            raise ValueError("need one value per target")

    @property
    def n_agents(self) -> int:
        return self.agent_positions.shape[0]

    @property
    def n_targets(self) -> int:
        return self.target_positions.shape[0]

    def distances(self) -> np.ndarray:
        diff = self.agent_positions[:, None, :] - self.target_positions[None, :, :]
        return np.sqrt(np.sum(diff * diff, axis=-1))

    def survival(self) -> np.ndarray:
        """``p[i, k]``: survival probability of target k if agent i engages it."""
        return survival_prob(self.distances(), self.alpha, self.beta)

    def to_dict(self) -> dict:
        return {
            "agent_positions": self.agent_positions.tolist(),
            "target_positions": self.target_positions.tolist(),
            "values": self.values.tolist(),
            "alpha": self.alpha,
            "beta": self.beta,
        }


def _survival_products(p: np.ndarray, a: np.ndarray, m: int) -> np.ndarray:
    prod = np.ones(m)
    np.multiply.at(prod, a, p[np.arange(len(a)), a])
    return prod


def target_utility(instance: TaskInstance, target: int, profile: Sequence[int]) -> float:
    """Expected destroyed value of one target: ``V(k) * (1 - prod of assigned survival probs)``."""
    if not 0 <= target < instance.n_targets:
        raise ValueError(f"target {target} out of range")
    p = instance.survival()
    surv = 1.0
    for i, a in enumerate(profile):
        if a == target:
            surv *= p[i, target]
    return float(instance.values[target] * (1.0 - surv))


def _target_utilities(values: np.ndarray, p: np.ndarray, a: np.ndarray) -> np.ndarray:
    return values * (1.0 - _survival_products(p, a, len(values)))


def task_global_utility(instance: TaskInstance, profile: Sequence[int]) -> float:
    a = np.asarray(profile, dtype=int)
    if a.shape != (instance.n_agents,) or np.any((a < 0) | (a >= instance.n_targets)):
        raise ValueError("profile must assign every agent a valid target")
    return float(np.sum(_target_utilities(instance.values, instance.survival(), a)))


class TaskGame(GameSpec):
    """Agents choose targets; welfare is the total expected destroyed value.

    An agent's local payoff is its equal share of its target's utility, so
    local payoffs add up to the welfare.
    """

    def __init__(self, instance: TaskInstance, *, name: str = "task") -> None:
        self.instance = instance
        self._p = instance.survival()
        self._p.setflags(write=False)
        self._values = instance.values
        n, m = instance.n_agents, instance.n_targets
        self._rows = np.arange(n)
        super().__init__([m] * n, self._eval, name=name)

    def _eval(self, player: int, profile: tuple) -> float:
        k = profile[player]
        load = sum(1 for a in profile if a == k)
        return target_utility(self.instance, k, profile) / load

    def _payoffs(self, a: np.ndarray) -> np.ndarray:
        m = len(self._values)
        tu = _target_utilities(self._values, self._p, a)
        return tu[a] / np.bincount(a, minlength=m)[a]

    def _global(self, a: np.ndarray) -> float:
        return float(np.sum(_target_utilities(self._values, self._p, a)))

    def _leave_and_join(self, a: np.ndarray):
        m = len(self._values)
        prod = _survival_products(self._p, a, m)
        own_p = self._p[self._rows, a]
        # survival product of a_i once agent i leaves it
        left_prod = prod[a] / own_p
        joined_prod = prod[None, :] * self._p  # (n, m)
        return prod, left_prod, joined_prod

    def _deviation_payoffs(self, a: np.ndarray) -> np.ndarray:
        m = len(self._values)
        _, _, joined = self._leave_and_join(a)
        load = np.bincount(a, minlength=m)
        out = self._values[None, :] * (1.0 - joined) / (load[None, :] + 1)
        out[self._rows, a] = self._payoffs(a)
        return out

    def _deviation_globals(self, a: np.ndarray) -> np.ndarray:
        prod, left_prod, joined = self._leave_and_join(a)
        tu = self._values * (1.0 - prod)
        w = self._global(a)
        base = w - tu[a] + self._values[a] * (1.0 - left_prod)
        out = base[:, None] - tu[None, :] + self._values[None, :] * (1.0 - joined)
        out[self._rows, a] = w
        return out

    def to_dict(self) -> dict:
        return {"kind": "task", **self.instance.to_dict()}


def gen_task_instance(params: TaskGameParams) -> TaskInstance:
    rng = np.random.default_rng(params.seed)
    agents = rng.uniform(0.0, 1.0, size=(params.n_agents, 3))
    targets = rng.uniform(0.0, 1.0, size=(params.n_targets, 3))
    values = rng.uniform(params.value_min, params.value_max, size=params.n_targets)
    return TaskInstance(agents, targets, values, alpha=params.alpha, beta=params.beta)


def gen_task_game(params: TaskGameParams) -> tuple[TaskGame, TaskInstance]:
    instance = gen_task_instance(params)
    return TaskGame(instance, name=f"task-{params.n_agents}x{params.n_targets}"), instance


# -- instance files ---------------------------------------------------------------


def game_from_dict(doc: dict) -> GameSpec:
    from .game import MatrixGame, TensorGame

    kind = doc.get("kind", "matrix")
    if kind == "resource":
        return ResourceGame(np.asarray(doc["rates"]), labels=doc.get("labels"), name=doc.get("name", "resource"))
    if kind == "task":
        inst = TaskInstance(
            np.asarray(doc["agent_positions"]),
            np.asarray(doc["target_positions"]),
            np.asarray(doc["values"]),
            alpha=float(doc.get("alpha", 2.0)),
            beta=float(doc.get("beta", 1.0)),
        )
        return TaskGame(inst, name=doc.get("name", "task"))
    if kind == "matrix":
        matrix = MatrixGame.from_flat(doc["n_players"], doc["action_counts"], doc["payoffs"])
        return TensorGame(matrix, labels=doc.get("labels"), name=doc.get("name", "matrix"))
    raise ValueError(f"unknown instance kind {kind!r}")


def save_instance(game: GameSpec, path: str | Path) -> Path:
    doc = game.to_dict()
    if doc is None:
        raise ValueError(f"{game!r} has no serialisable instance form")
    doc = {**doc, "name": game.name}
    if game.labels is not None:
        doc["labels"] = game.labels
    path = Path(path)
    path.write_text(json.dumps(doc, sort_keys=True))
    return path


def load_instance(path: str | Path) -> GameSpec:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot read game file {path}: {exc}") from exc
    try:
        return game_from_dict(doc)
    except KeyError as exc:
        raise ValueError(f"{path}: missing field {exc.args[0]!r}") from None


def params_dict(params) -> dict:
    return asdict(params)
