"""Ground-truth checks: pure Nash equilibria, social optimum, Pareto front, CCE regret.

``is_psne`` only queries unilateral deviations, so it works on games of any
size. Everything else enumerates the joint action space and refuses to run
past ``ENUMERATION_LIMIT`` profiles unless the caller raises the limit.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .game import ActionProfile, GameSpec, TensorGame, aligned_matrix

ENUMERATION_LIMIT = 10**7
TOL = 1e-9


class EnumerationLimitError(ValueError):
    """The joint action space is larger than the enumeration guard allows."""


def _guard(game: GameSpec, limit: int) -> None:
    if game.n_profiles > limit:
        raise EnumerationLimitError(
            f"{game.name} has {game.n_profiles} profiles, above the enumeration limit of {limit}; "
            "pass a larger limit to force it"
        )


def payoff_tensor(game: GameSpec, limit: int = ENUMERATION_LIMIT) -> np.ndarray:
    """Dense ``(n_players, |A_1|, ..., |A_n|)`` payoff array of ``game``."""
    _guard(game, limit)
    if isinstance(game, TensorGame):
        return game.matrix.payoff_tensor
    out = np.empty((game.n_players, *game.action_counts))
    for prof in game.profiles():
        out[(slice(None), *prof)] = game._payoffs(np.asarray(prof))
    return out


# -- pure equilibria ----------------------------------------------------------------


def is_psne(game: GameSpec, profile: Sequence[int], tol: float = TOL) -> bool:
    """True iff no player has a strictly improving unilateral deviation.

    Costs one payoff query per (player, action); gains up to ``tol`` are
    treated as ties.
    """
    a = np.asarray(game.check_profile(profile))
    dev = game._deviation_payoffs(a)
    own = dev[np.arange(game.n_players), a]
    return bool(np.all(dev.max(axis=1) - own <= tol))


def _psne_mask(tensor: np.ndarray, tol: float) -> np.ndarray:
    ok = np.ones(tensor.shape[1:], dtype=bool)
    for i in range(tensor.shape[0]):
        best = tensor[i].max(axis=i, keepdims=True)
        ok &= best - tensor[i] <= tol
    return ok


def psne_set(game: GameSpec, limit: int = ENUMERATION_LIMIT, tol: float = TOL) -> list[ActionProfile]:
    """Every pure Nash equilibrium of ``game`` in lexicographic order."""
    mask = _psne_mask(payoff_tensor(game, limit), tol)
    return [ActionProfile(map(int, p)) for p in np.argwhere(mask)]


def social_optimum(game: GameSpec, limit: int = ENUMERATION_LIMIT) -> tuple[ActionProfile, float]:
    """Welfare-maximising profile; the lexicographically first one on ties."""
    welfare = payoff_tensor(game, limit).sum(axis=0)
    flat = int(np.argmax(welfare))
    prof = ActionProfile(map(int, np.unravel_index(flat, welfare.shape)))
    return prof, game.global_utility(prof)


# -- Pareto optimality ------------------------------------------------------------------


def _dominates(b: np.ndarray, u: np.ndarray, tol: float) -> np.ndarray:
    """Row-wise: does each row of ``b`` Pareto-dominate ``u``?"""
    return np.all(b >= u - tol, axis=-1) & np.any(b > u + tol, axis=-1)


def is_pareto_optimal(game: GameSpec, profile: Sequence[int], limit: int = ENUMERATION_LIMIT,
                      tol: float = TOL) -> bool:
    u = game.payoffs(profile)
    t = payoff_tensor(game, limit)
    table = t.reshape(t.shape[0], -1).T
    return not bool(np.any(_dominates(table, u, tol)))


def pareto_set(game: GameSpec, limit: int = ENUMERATION_LIMIT, tol: float = TOL) -> list[ActionProfile]:
    """All Pareto-optimal profiles, lexicographic order.

    Profiles are visited in order of decreasing welfare, so each one only has
    to be compared against the front built so far.
    """
    t = payoff_tensor(game, limit)
    table = t.reshape(t.shape[0], -1).T
    order = np.argsort(-table.sum(axis=1), kind="stable")
    front: list[int] = []
    for idx in order:
        u = table[idx]
        if front and np.any(_dominates(table[front], u, tol)):
            continue
        if front:
            beaten = _dominates(u[None, :], table[front], tol)
            front = [f for f, gone in zip(front, np.atleast_1d(beaten)) if not gone]
        front.append(int(idx))
    shape = t.shape[1:]
    return [ActionProfile(map(int, np.unravel_index(f, shape))) for f in sorted(front)]


# -- empirical play -----------------------------------------------------------------------


@dataclass
class EmpiricalDistribution:
    counts: dict[tuple[int, ...], int] = field(default_factory=dict)
    total: int = 0

    def __post_init__(self) -> None:
        if self.total != sum(self.counts.values()):
            raise ValueError("total must equal the sum of the counts")

    @classmethod
    def from_profiles(cls, profiles: Iterable[Sequence[int]]) -> "EmpiricalDistribution":
        counts = Counter(tuple(int(x) for x in p) for p in profiles)
        return cls(dict(counts), sum(counts.values()))

    def probabilities(self) -> dict[tuple[int, ...], float]:
        return {p: c / self.total for p, c in self.counts.items()}


def empirical_distribution(trace, burn_in: float = 0.0) -> EmpiricalDistribution:
    """Visit frequencies of the joint profiles after discarding a leading fraction.

    ``trace`` is a :class:`~arena.dynamics.RunTrace` or any sequence of
    profiles. With ``burn_in=0.5`` on 100 iterations, iterations 51-100 count.
    """
    if not 0.0 <= burn_in < 1.0:
        raise ValueError(f"burn_in must be in [0, 1), got {burn_in}")
    profiles = list(getattr(trace, "profiles", trace))
    start = int(burn_in * len(profiles))
    window = profiles[start:]
    if not window:
        raise ValueError("no iterations left after burn-in")
    return EmpiricalDistribution.from_profiles(window)


def cce_regret(game: GameSpec, dist: EmpiricalDistribution) -> float:
    """Largest expected gain any player gets from a fixed unilateral action.

    ``max over i, k of sum_a P(a) [u_i(k, a_-i) - u_i(a)]``; the distribution
    is an eps-coarse-correlated equilibrium iff this is at most eps.
    """
    if dist.total == 0:
        raise ValueError("empty distribution")
    gain = np.zeros((game.n_players, game.max_actions))
    rows = np.arange(game.n_players)
    for prof, count in dist.counts.items():
        a = np.asarray(game.check_profile(prof))
        dev = game._deviation_payoffs(a)
        gain += (count / dist.total) * (dev - dev[rows, a][:, None])
    # padded entries carry zero gain, so they never win the max over real deviations
    return float(gain.max())


# -- identical-interest alignment ----------------------------------------------------------


def _sign(x: float, tol: float) -> int:
    return 0 if abs(x) <= tol else (1 if x > 0 else -1)


def alignment_check(game: GameSpec, samples: int = 100, seed: int = 0, limit: int = ENUMERATION_LIMIT,
                    tol: float = TOL) -> bool:
    """Check that paying everyone the welfare yields a game with a welfare-optimal PSNE.

    Builds the identical-interest game ``u_i = W`` and verifies that
    (a) on ``samples`` random unilateral deviations each player's payoff
    change has the sign of the welfare change, and (b) the identical-interest
    game has at least one PSNE, the welfare maximiser among them.
    """
    _guard(game, limit)
    shared = aligned_matrix(game)
    rng = np.random.default_rng(seed)
    counts = np.asarray(game.action_counts)
    for _ in range(samples):
        a = tuple(int(x) for x in rng.integers(0, counts))
        i = int(rng.integers(game.n_players))
        b = list(a)
        b[i] = int(rng.integers(counts[i]))
        b = tuple(b)
        d_u = shared.payoff(b, i) - shared.payoff(a, i)
        d_w = game.global_utility(b) - game.global_utility(a)
        if _sign(d_u, tol) != _sign(d_w, tol):
            return False
    eq = psne_set(shared, limit, tol)
    best, _ = social_optimum(game, limit)
    return bool(eq) and best in eq


# -- report -----------------------------------------------------------------------------------


@dataclass
class EquilibriumReport:
    psne_set: list[ActionProfile]
    social_optimum: tuple[ActionProfile, float] | None
    pareto_set: list[ActionProfile]
    is_exhaustive: bool

    def to_dict(self) -> dict:
        opt = None
        if self.social_optimum is not None:
            opt = {"profile": list(self.social_optimum[0]), "W": self.social_optimum[1]}
        return {
            "psne_set": [list(p) for p in self.psne_set],
            "social_optimum": opt,
            "pareto_set": [list(p) for p in self.pareto_set],
            "is_exhaustive": self.is_exhaustive,
        }


def report(game: GameSpec, limit: int = ENUMERATION_LIMIT) -> EquilibriumReport:
    """Full equilibrium picture, or an empty non-exhaustive report past the limit."""
    if game.n_profiles > limit:
        return EquilibriumReport([], None, [], is_exhaustive=False)
    return EquilibriumReport(psne_set(game, limit), social_optimum(game, limit), pareto_set(game, limit), True)
