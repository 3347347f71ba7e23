"""Regret-matching dynamics: SORM, and the LURM / GURM baselines.

All three share the same loop. Every iteration each player samples an action
from its mixed strategy, observes the counterfactual value of each of its own
actions against the others' realised actions, folds the instantaneous regret
into a running time-average, and re-derives its strategy from the positive
part of that average.

* LURM values actions by the player's own payoff.
* GURM values actions by the social welfare ``W`` of the deviation.
* SORM is GURM plus a decaying uniform exploration term, optional pruning of
  small probabilities, and a shared satisfaction threshold ``U``: the running
  maximum of every welfare value any player has seen. A profile whose welfare
  reaches ``U`` is a local maximum that beats everything observed, and all
  players freeze on it. Rounds then restart with ``U`` raised by ``delta_U``
  to look for something strictly better, until ``patience`` consecutive
  rounds fail to improve.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .comms import messages_per_iteration, queries_for_action_counts
from .game import GameSpec

PURE_MASS = 1.0 - 1e-6
GAIN_TOL = 1e-9
ALGORITHMS = ("sorm", "lurm", "gurm")


@dataclass(frozen=True)
class DynamicsConfig:
    delta: float = 0.5
    gamma: float = 0.5
    T: int = 10_000
    max_rounds: int = 50
    prune: bool = True
    prune_eps: float = 0.03
    convergence_window: int = 50
    seed: int = 0
    # absolute threshold step; None means delta_U_frac of the first positive U
    delta_U: float | None = None
    delta_U_frac: float = 0.02
    patience: int = 10
    # cap on iterations summed over all rounds
    max_iterations: int | None = None
    stop_on_convergence: bool = True

    def __post_init__(self) -> None:
        if not 0 < self.delta <= 1:
            raise ValueError(f"delta must be in (0, 1], got {self.delta}")
        if not 0 < self.gamma <= 1:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.T < 1 or self.max_rounds < 1 or self.convergence_window < 1 or self.patience < 1:
            raise ValueError("T, max_rounds, convergence_window and patience must be positive")
        if not 0 <= self.prune_eps < 1:
            raise ValueError("prune_eps must be in [0, 1)")
        if self.delta_U is not None and self.delta_U < 0:
            raise ValueError("delta_U must be non-negative")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "DynamicsConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown dynamics settings: {sorted(unknown)}")
        return cls(**doc)


# -- per-player learner ------------------------------------------------------------


@dataclass
class LearnerState:
    avg_regret: np.ndarray
    strategy: np.ndarray
    locked: bool = False
    t: int = 0
    action: int | None = None

    @classmethod
    def fresh(cls, n_actions: int) -> "LearnerState":
        return cls(np.zeros(n_actions), np.full(n_actions, 1.0 / n_actions))


def regret_update(state: LearnerState, realized_u: float, counterfactual_u: Sequence[float]) -> LearnerState:
    """Fold one round of counterfactual values into the time-averaged regret."""
    cf = np.asarray(counterfactual_u, dtype=float)
    if cf.shape != state.avg_regret.shape:
        raise ValueError(f"expected {state.avg_regret.shape[0]} counterfactual values, got {cf.shape}")
    t = state.t + 1
    avg = state.avg_regret + ((cf - realized_u) - state.avg_regret) / t
    return replace(state, avg_regret=avg, t=t)


def _matching(avg_regret: np.ndarray, mask: np.ndarray, explore: float) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise regret matching with a uniform exploration share.

    Returns the strategies and a boolean per row telling whether the row had
    positive regret (rows without fall back to uniform).
    """
    counts = mask.sum(axis=1, keepdims=True)
    uniform = mask / counts
    pos = np.where(mask, np.maximum(avg_regret, 0.0), 0.0)
    total = pos.sum(axis=1, keepdims=True)
    has_pos = total[:, 0] > 0
    matched = np.divide(pos, total, out=uniform.copy(), where=total > 0)
    mixed = (1.0 - explore) * matched + explore * uniform
    return np.where(has_pos[:, None], mixed, uniform), has_pos


def prune_strategy(strategy: Sequence[float], eps: float) -> np.ndarray:
    """Zero every probability ``<= eps`` and renormalise.

    If nothing survives, the largest entry (lowest index on ties) gets all
    the mass.
    """
    p = np.asarray(strategy, dtype=float)
    return _prune_rows(p[None, :], eps)[0]


def _prune_rows(p: np.ndarray, eps: float) -> np.ndarray:
    kept = np.where(p > eps, p, 0.0)
    total = kept.sum(axis=1, keepdims=True)
    empty = total[:, 0] == 0
    if np.any(empty):
        best = np.argmax(p[empty], axis=1)
        kept[np.flatnonzero(empty), best] = 1.0
        total = kept.sum(axis=1, keepdims=True)
    return kept / total


def _explore_and_prune(avg_regret, ragged, uniform, explore: float, eps: float | None) -> np.ndarray:
    """Fused :func:`_matching` plus :func:`_prune_rows` for the SORM hot loop."""
    pos = np.maximum(avg_regret, 0.0)
    if ragged is not None:
        pos *= ragged
    total = pos.sum(axis=1)
    has_pos = total > 0
    if not has_pos.all():
        total[~has_pos] = 1.0
    p = pos * ((1.0 - explore) / total)[:, None]
    p += explore * uniform
    if eps is not None:
        kept = np.where(p > eps, p, 0.0)
        mass = kept.sum(axis=1)
        empty = mass == 0
        if empty.any():
            kept[np.flatnonzero(empty), np.argmax(p[empty], axis=1)] = 1.0
            mass = kept.sum(axis=1)
        p = kept / mass[:, None]
    if not has_pos.all():
        p[~has_pos] = uniform[~has_pos]
    return p


def exploration_rate(t: int, delta: float, gamma: float) -> float:
    return delta / t**gamma


def strategy_from_regrets(state: LearnerState, t: int, config: DynamicsConfig, lock: bool) -> np.ndarray:
    """Next mixed strategy of one SORM learner.

    ``lock`` freezes the player on its current action; otherwise the strategy
    is uniform when no action has positive regret, and exploratory regret
    matching (pruned if the config says so) when some action has.
    """
    if t < 1:
        raise ValueError("t starts at 1")
    n_actions = state.avg_regret.shape[0]
    if lock:
        if state.action is None:
            raise ValueError("cannot lock a learner that has not acted yet")
        out = np.zeros(n_actions)
        out[state.action] = 1.0
        return out
    mask = np.ones((1, n_actions), dtype=bool)
    p, has_pos = _matching(state.avg_regret[None, :], mask, exploration_rate(t, config.delta, config.gamma))
    if config.prune and has_pos[0]:
        p = _prune_rows(p, config.prune_eps)
    return p[0]


# -- shared threshold ----------------------------------------------------------------


@dataclass
class ThresholdMonitor:
    U: float = 0.0
    delta_U: float | None = None
    omega: float = 0.0
    best_profile: tuple[int, ...] | None = None
    best_W: float = float("-inf")


def threshold_update(monitor: ThresholdMonitor, counterfactual_globals) -> ThresholdMonitor:
    """Raise ``U`` to the largest deviation welfare any player reports this iteration."""
    if isinstance(counterfactual_globals, np.ndarray):
        top = float(counterfactual_globals.max())
    else:
        top = max(float(np.max(v)) for v in counterfactual_globals)
    if top > monitor.U:
        monitor.U = top
    return monitor


def satisfaction(monitor: ThresholdMonitor, realized_W: float) -> float:
    monitor.omega = realized_W / monitor.U if monitor.U > 0 else 0.0
    return monitor.omega


def _reaches(w: float, U: float) -> bool:
    return w >= U - 1e-9 * max(1.0, abs(U))


# -- convergence detection ---------------------------------------------------------------


def detect_pure_convergence(
    strategies,
    window_history: Sequence[Sequence[int]],
    window: int = 50,
    deviation_gains: Sequence[float] | None = None,
) -> bool:
    """True when every strategy is (numerically) pure and the last ``window``
    induced profiles are all the same one.

    ``deviation_gains``, when given, holds each player's best unilateral gain
    at the current profile under the valuation it learns from; any positive
    gain means the profile is not a rest point and the test fails.
    """
    strategies = [np.asarray(s, dtype=float) for s in strategies]
    if any(s.max() < PURE_MASS for s in strategies):
        return False
    if deviation_gains is not None and max(deviation_gains) > GAIN_TOL:
        return False
    if len(window_history) < window:
        return False
    current = tuple(int(np.argmax(s)) for s in strategies)
    return all(tuple(p) == current for p in window_history[-window:])


class _PureRun:
    """Incremental form of :func:`detect_pure_convergence`."""

    def __init__(self, window: int) -> None:
        self.window = window
        self.length = 0
        self.profile: tuple | None = None

    def update(self, pure: bool, profile: tuple) -> bool:
        if not pure:
            self.length, self.profile = 0, None
            return False
        if profile == self.profile:
            self.length += 1
        else:
            self.profile, self.length = profile, 1
        return self.length >= self.window


# -- traces -----------------------------------------------------------------------------

TRACE_COLUMNS = (
    "round", "t", "global_utility", "U", "omega", "max_avg_regret",
    "pure_profile_flag", "cumulative_messages", "cumulative_queries", "profile",
)


@dataclass
class RunTrace:
    round: list[int] = field(default_factory=list)
    t: list[int] = field(default_factory=list)
    global_utility: list[float] = field(default_factory=list)
    U: list[float] = field(default_factory=list)
    omega: list[float] = field(default_factory=list)
    max_avg_regret: list[float] = field(default_factory=list)
    pure: list[bool] = field(default_factory=list)
    cumulative_messages: list[int] = field(default_factory=list)
    cumulative_queries: list[int] = field(default_factory=list)
    profiles: list[tuple[int, ...]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.t)

    def rows(self):
        for k in range(len(self)):
            yield (
                self.round[k], self.t[k], self.global_utility[k], self.U[k], self.omega[k],
                self.max_avg_regret[k], int(self.pure[k]), self.cumulative_messages[k],
                self.cumulative_queries[k], "-".join(map(str, self.profiles[k])),
            )

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for row in self.rows():
            writer.writerow([repr(x) if isinstance(x, float) else x for x in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path: str | Path) -> "RunTrace":
        trace = cls()
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                trace.round.append(int(rec["round"]))
                trace.t.append(int(rec["t"]))
                trace.global_utility.append(float(rec["global_utility"]))
                trace.U.append(float(rec["U"]))
                trace.omega.append(float(rec["omega"]))
                trace.max_avg_regret.append(float(rec["max_avg_regret"]))
                trace.pure.append(rec["pure_profile_flag"] == "1")
                trace.cumulative_messages.append(int(rec["cumulative_messages"]))
                trace.cumulative_queries.append(int(rec["cumulative_queries"]))
                trace.profiles.append(tuple(int(x) for x in rec["profile"].split("-")))
        return trace


@dataclass(frozen=True)
class Checkpoint:
    """Pure rest point a SORM round settled on."""

    round: int
    profile: tuple[int, ...]
    W: float
    locked: bool
    at: int


@dataclass
class RunResult:
    algorithm: str
    profile: tuple[int, ...]
    W: float
    strategies: np.ndarray
    avg_regret: np.ndarray
    trace: RunTrace
    status: str
    rounds: int
    iterations: int
    # cumulative iteration at which play first stayed on one pure profile for the window
    first_pure_at: int | None
    # cumulative iteration at which the run settled on the returned profile
    converged_at: int | None
    monitor: ThresholdMonitor | None
    config: DynamicsConfig
    checkpoints: list[Checkpoint] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.converged_at is not None

    @property
    def final_omega(self) -> float:
        return self.trace.omega[-1] if len(self.trace) else float("nan")


# -- the loop -----------------------------------------------------------------------------


def _sample(strategies: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cs = np.cumsum(strategies, axis=1)
    cs /= cs[:, -1:]
    u = rng.random(strategies.shape[0])
    return (cs > u[:, None]).argmax(axis=1)


def _max_regret(avg_regret: np.ndarray, mask: np.ndarray | None) -> float:
    if mask is None:
        return float(avg_regret.max())
    return float(np.max(np.where(mask, avg_regret, -np.inf)))


def _at_rest(cf: np.ndarray, realized: np.ndarray) -> bool:
    """No player can strictly improve its valuation by a unilateral switch."""
    gain = cf.max(axis=1) - realized
    return bool(gain.max() <= GAIN_TOL * max(1.0, float(np.abs(realized).max())))


def _record(trace: RunTrace, rnd, t, W, U, omega, max_regret, pure, msgs, queries, prof) -> None:
    trace.round.append(rnd)
    trace.t.append(t)
    trace.global_utility.append(W)
    trace.U.append(U)
    trace.omega.append(omega)
    trace.max_avg_regret.append(max_regret)
    trace.pure.append(pure)
    trace.cumulative_messages.append(msgs)
    trace.cumulative_queries.append(queries)
    trace.profiles.append(prof)


def _baseline(game: GameSpec, config: DynamicsConfig, use_global: bool, name: str) -> RunResult:
    rng = np.random.default_rng(config.seed)
    mask = game.action_mask()
    ragged = None if mask.all() else mask
    rows = np.arange(game.n_players)
    P = mask / mask.sum(axis=1, keepdims=True)
    R = np.zeros(mask.shape)
    trace = RunTrace()
    detector = _PureRun(config.convergence_window)
    msgs = messages_per_iteration(game.n_players) if use_global else 0
    queries = queries_for_action_counts(game.action_counts) if use_global else 0
    horizon = config.T if config.max_iterations is None else min(config.T, config.max_iterations)
    stable = _PureRun(config.convergence_window)
    converged_at = first_pure_at = None
    a = None
    for t in range(1, horizon + 1):
        a = _sample(P, rng)
        cf = game._deviation_globals(a) if use_global else game._deviation_payoffs(a)
        realized = cf[rows, a]
        R += ((cf - realized[:, None]) - R) / t
        P, _ = _matching(R, mask, 0.0)
        pure = bool(P.max(axis=1).min() >= PURE_MASS)
        prof = tuple(a.tolist())
        if stable.update(pure, prof) and first_pure_at is None:
            first_pure_at = t
        done = detector.update(pure and _at_rest(cf, realized), prof)
        W = float(realized[0]) if use_global else game._global(a)
        _record(trace, 1, t, W, float("nan"), float("nan"), _max_regret(R, ragged), pure,
                msgs * t, queries * t, prof)
        if done and converged_at is None:
            converged_at = t
            if config.stop_on_convergence:
                break
    final = tuple(a.tolist())
    return RunResult(
        algorithm=name, profile=final, W=game.global_utility(final), strategies=P, avg_regret=R,
        trace=trace, status="converged" if converged_at is not None else "horizon", rounds=1,
        iterations=len(trace), first_pure_at=first_pure_at, converged_at=converged_at, monitor=None,
        config=config,
    )


def lurm_run(game: GameSpec, config: DynamicsConfig = DynamicsConfig()) -> RunResult:
    """Plain regret matching on each player's own payoff."""
    return _baseline(game, config, use_global=False, name="lurm")


def gurm_run(game: GameSpec, config: DynamicsConfig = DynamicsConfig()) -> RunResult:
    """Plain regret matching where every player values actions by social welfare."""
    return _baseline(game, config, use_global=True, name="gurm")


def sorm_run(game: GameSpec, config: DynamicsConfig = DynamicsConfig()) -> RunResult:
    """Social-optimum-seeking regret matching.

    Each round restarts every learner from uniform play and runs until the
    joint play stays on one pure profile for the convergence window (or ``T``
    runs out). Pruning can leave play pure on a profile that one unilateral
    switch would still improve, so only profiles at rest (no such switch) are
    kept as checkpoints. A rest point whose welfare reaches the shared
    threshold is frozen (``omega == 1``). After a frozen round the threshold
    moves ``delta_U`` above it, so later rounds can only freeze on something
    strictly better. The search stops after ``patience`` rounds that settle
    without improving on the best checkpoint, or at ``max_rounds``.

    Returns the best checkpoint (or, if no round ever settled, the best
    profile played). ``status`` is ``"certified"`` when the best checkpoint
    was frozen at the threshold and the search ran out of patience,
    ``"settled"`` when it ran out of patience on an unfrozen best,
    ``"max_rounds"`` or ``"budget"`` when a cap cut it short.
    """
    rng = np.random.default_rng(config.seed)
    mask = game.action_mask()
    ragged = None if mask.all() else mask
    rows = np.arange(game.n_players)
    uniform = mask / mask.sum(axis=1, keepdims=True)
    msgs = messages_per_iteration(game.n_players)
    queries = queries_for_action_counts(game.action_counts)
    budget = config.max_iterations if config.max_iterations is not None else float("inf")
    eps = config.prune_eps if config.prune else None

    mon = ThresholdMonitor(delta_U=config.delta_U)
    trace = RunTrace()
    checkpoints: list[Checkpoint] = []
    best: Checkpoint | None = None
    best_seen: tuple[float, tuple] = (float("-inf"), ())
    total = 0
    stalls = 0
    first_pure_at = None
    status = "max_rounds"
    P = uniform.copy()
    R = np.zeros(mask.shape)
    rnd = 0

    for rnd in range(1, config.max_rounds + 1):
        if rnd > 1 and mon.best_profile is not None:
            # only a frozen profile certifies a level; unfrozen rounds leave U alone
            mon.U = max(mon.U, mon.best_W + (mon.delta_U or 0.0))
        P = uniform.copy()
        R = np.zeros(mask.shape)
        detector = _PureRun(config.convergence_window)
        stable = _PureRun(config.convergence_window)
        settled: Checkpoint | None = None

        for t in range(1, config.T + 1):
            if total >= budget:
                break
            total += 1
            a = _sample(P, rng)
            cf = game._deviation_globals(a)
            W = float(cf[0, a[0]])
            threshold_update(mon, cf)
            if mon.delta_U is None and mon.U > 0:
                mon.delta_U = config.delta_U_frac * mon.U
            R += ((cf - W) - R) / t
            satisfaction(mon, W)
            prof = tuple(a.tolist())
            locked = _reaches(W, mon.U)
            if locked:
                P = np.zeros(mask.shape)
                P[rows, a] = 1.0
                if W > mon.best_W:
                    mon.best_W, mon.best_profile = W, prof
            else:
                P = _explore_and_prune(R, ragged, uniform, exploration_rate(t, config.delta, config.gamma), eps)
            if W > best_seen[0]:
                best_seen = (W, prof)

            pure = bool(P.max(axis=1).min() >= PURE_MASS)
            rest = pure and (locked or _at_rest(cf, np.full(len(rows), W)))
            still = stable.update(pure, prof)
            if still and first_pure_at is None:
                first_pure_at = total
            done = detector.update(rest, prof)
            _record(trace, rnd, t, W, mon.U, mon.omega, _max_regret(R, ragged), pure,
                    msgs * total, queries * total, prof)
            if done and settled is None:
                settled = Checkpoint(rnd, prof, W, locked, total)
            if still and config.stop_on_convergence:
                break

        if settled is not None:
            checkpoints.append(settled)
        if settled is not None and (best is None or settled.W > best.W):
            best = settled
            stalls = 0
        elif settled is not None:
            # a round that never came to rest says nothing about progress
            stalls += 1
        if total >= budget:
            status = "budget"
            break
        if stalls >= config.patience:
            status = "certified" if best is not None and best.locked else "settled"
            break

    if best is not None:
        final, W_final, converged_at = best.profile, best.W, best.at
    else:
        (W_final, final), converged_at = best_seen, None
    return RunResult(
        algorithm="sorm", profile=final, W=W_final, strategies=P, avg_regret=R, trace=trace,
        status=status, rounds=rnd, iterations=total, first_pure_at=first_pure_at,
        converged_at=converged_at, monitor=mon, config=config, checkpoints=checkpoints,
    )


RUNNERS = {"sorm": sorm_run, "lurm": lurm_run, "gurm": gurm_run}


def run_algorithm(name: str, game: GameSpec, config: DynamicsConfig = DynamicsConfig()) -> RunResult:
    try:
        runner = RUNNERS[name]
    except KeyError:
        raise ValueError(f"unknown algorithm {name!r}; choose from {', '.join(ALGORITHMS)}") from None
    return runner(game, config)
