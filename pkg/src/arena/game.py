"""Finite normal-form games: payoff queries, counterfactual queries and matrix fixtures.

Every game exposes two access paths. ``payoff_eval`` answers one
(player, profile) question at a time and is the reference. Subclasses may
additionally override the batched ``_payoffs`` / ``_deviation_*`` hooks with
vectorised formulas; the learning dynamics use those, the tests compare them
against the reference.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

PayoffEval = Callable[[int, tuple], float]


class GameSpec:
    """A finite game ``(players, action sets, payoff functions)``.

    Args:
        action_counts: number of pure actions of each player.
        payoff_eval: ``payoff_eval(player, profile) -> float``. Must be pure.
        labels: optional per-player action names, display only.
        name: short identifier used in summaries.
    """

    def __init__(
        self,
        action_counts: Sequence[int],
        payoff_eval: PayoffEval | None = None,
        *,
        labels: Sequence[Sequence[str]] | None = None,
        name: str = "game",
    ) -> None:
        counts = tuple(int(c) for c in action_counts)
        if len(counts) < 1:
            raise ValueError("a game needs at least one player")
        if any(c < 1 for c in counts):
            raise ValueError(f"every player needs at least one action, got {counts}")
        self.action_counts = counts
        self._payoff_eval = payoff_eval
        self.labels = [list(l) for l in labels] if labels is not None else None
        self.name = name

    # -- shape ---------------------------------------------------------------

    @property
    def n_players(self) -> int:
        return len(self.action_counts)

    @property
    def max_actions(self) -> int:
        return max(self.action_counts)

    @property
    def n_profiles(self) -> int:
        return int(np.prod(self.action_counts, dtype=object))

    def action_mask(self) -> np.ndarray:
        """Boolean ``(n_players, max_actions)`` array, True where the action exists."""
        return np.arange(self.max_actions)[None, :] < np.asarray(self.action_counts)[:, None]

    def profiles(self) -> Iterator[tuple[int, ...]]:
        """All pure profiles in lexicographic order."""
        return itertools.product(*(range(c) for c in self.action_counts))

    def check_profile(self, profile: Sequence[int]) -> tuple[int, ...]:
        prof = tuple(int(a) for a in profile)
        if len(prof) != self.n_players:
            raise ValueError(f"profile has {len(prof)} actions, game has {self.n_players} players")
        for i, (a, c) in enumerate(zip(prof, self.action_counts)):
            if not 0 <= a < c:
                raise ValueError(f"action {a} out of range for player {i} ({c} actions)")
        return prof

    def check_player(self, player: int) -> int:
        if not 0 <= int(player) < self.n_players:
            raise ValueError(f"player {player} out of range for {self.n_players} players")
        return int(player)

    # -- reference queries ---------------------------------------------------

    def payoff_eval(self, player: int, profile: tuple[int, ...]) -> float:
        if self._payoff_eval is None:
            return float(self._payoffs(np.asarray(profile))[player])
        return float(self._payoff_eval(player, profile))

    def payoff(self, profile: Sequence[int], player: int) -> float:
        prof = self.check_profile(profile)
        return self.payoff_eval(self.check_player(player), prof)

    def payoffs(self, profile: Sequence[int]) -> np.ndarray:
        """Vector of every player's payoff at ``profile``."""
        return self._payoffs(np.asarray(self.check_profile(profile)))

    def global_utility(self, profile: Sequence[int]) -> float:
        return self._global(np.asarray(self.check_profile(profile)))

    # -- batched hooks (profile already validated, as an int array) ----------

    def _payoffs(self, a: np.ndarray) -> np.ndarray:
        prof = tuple(int(x) for x in a)
        return np.array([self._payoff_eval(i, prof) for i in range(self.n_players)], dtype=float)

    def _global(self, a: np.ndarray) -> float:
        return float(np.sum(self._payoffs(a)))

    def _deviation_payoffs(self, a: np.ndarray) -> np.ndarray:
        own = self._payoffs(a)
        out = np.repeat(own[:, None], self.max_actions, axis=1)
        for i, c in enumerate(self.action_counts):
            b = a.copy()
            for k in range(c):
                if k != a[i]:
                    b[i] = k
                    out[i, k] = self._payoffs(b)[i]
        return out

    def _deviation_globals(self, a: np.ndarray) -> np.ndarray:
        out = np.full((self.n_players, self.max_actions), self._global(a))
        for i, c in enumerate(self.action_counts):
            b = a.copy()
            for k in range(c):
                if k != a[i]:
                    b[i] = k
                    out[i, k] = self._global(b)
        return out

    def deviation_payoffs(self, profile: Sequence[int]) -> np.ndarray:
        """``out[i, k] = u_i(k, a_-i)``.

        Shape ``(n_players, max_actions)``; entries beyond a player's action
        count are padded with that player's realised payoff so they carry zero
        regret.
        """
        return self._deviation_payoffs(np.asarray(self.check_profile(profile)))

    def deviation_globals(self, profile: Sequence[int]) -> np.ndarray:
        """``out[i, k] = W(k, a_-i)``, padded with ``W(a)`` like ``deviation_payoffs``.

        The played entry ``out[i, a_i]`` is exactly ``global_utility(a)``.
        """
        return self._deviation_globals(np.asarray(self.check_profile(profile)))

    def to_dict(self) -> dict | None:
        """JSON-ready instance description, or None when the game is not serialisable."""
        return None

    def __repr__(self) -> str:
        return f"{type(self).__name__}(name={self.name!r}, action_counts={list(self.action_counts)})"


class ActionProfile(tuple):
    """One pure action index per player."""

    def __new__(cls, actions: Sequence[int]):
        return super().__new__(cls, (int(a) for a in actions))

    def replace(self, player: int, action: int) -> "ActionProfile":
        acts = list(self)
        acts[player] = int(action)
        return ActionProfile(acts)


# -- explicit payoff tensors --------------------------------------------------


@dataclass(frozen=True)
class MatrixGame:
    """Dense payoff tensor of shape ``(n_players, |A_1|, ..., |A_n|)``."""

    payoff_tensor: np.ndarray

    def __post_init__(self) -> None:
        t = np.array(self.payoff_tensor, dtype=float)
        if t.ndim < 2:
            raise ValueError("payoff tensor needs a player axis and at least one action axis")
        if t.shape[0] != t.ndim - 1:
            raise ValueError(
                f"payoff tensor shape {t.shape}: leading axis must equal the number of players ({t.ndim - 1})"
            )
        if not np.all(np.isfinite(t)):
            raise ValueError("payoffs must be finite")
        t.setflags(write=False)
        object.__setattr__(self, "payoff_tensor", t)

    @classmethod
    def from_flat(cls, n_players: int, action_counts: Sequence[int], payoffs: Sequence[float]) -> "MatrixGame":
        """Build from the flat player-major, row-major payoff list used by the JSON format."""
        counts = [int(c) for c in action_counts]
        if len(counts) != int(n_players):
            raise ValueError(f"n_players={n_players} but {len(counts)} action counts given")
        flat = np.asarray(payoffs, dtype=float).ravel()
        expected = int(n_players) * int(np.prod(counts))
        if flat.size != expected:
            raise ValueError(f"expected {expected} payoff entries, got {flat.size}")
        return cls(flat.reshape([int(n_players), *counts]))

    def to_json_dict(self) -> dict:
        t = self.payoff_tensor
        return {"n_players": int(t.shape[0]), "action_counts": list(t.shape[1:]), "payoffs": t.ravel().tolist()}


class TensorGame(GameSpec):
    """GameSpec backed by a dense payoff tensor lookup."""

    def __init__(self, matrix: MatrixGame, *, labels=None, name: str = "matrix") -> None:
        self.matrix = matrix
        self._tensor = matrix.payoff_tensor
        super().__init__(self._tensor.shape[1:], self._lookup, labels=labels, name=name)

    def _lookup(self, player: int, profile: tuple) -> float:
        return float(self._tensor[(player, *profile)])

    def _payoffs(self, a: np.ndarray) -> np.ndarray:
        return self._tensor[(slice(None), *a.tolist())].copy()

    def _slice(self, a: np.ndarray, i: int) -> np.ndarray:
        idx: list = [slice(None), *a.tolist()]
        idx[i + 1] = slice(None)
        return self._tensor[tuple(idx)]  # (n_players, |A_i|)

    def _deviation_payoffs(self, a: np.ndarray) -> np.ndarray:
        own = self._payoffs(a)
        out = np.repeat(own[:, None], self.max_actions, axis=1)
        for i, c in enumerate(self.action_counts):
            out[i, :c] = self._slice(a, i)[i]
        return out

    def _deviation_globals(self, a: np.ndarray) -> np.ndarray:
        w = self._global(a)
        out = np.full((self.n_players, self.max_actions), w)
        for i, c in enumerate(self.action_counts):
            row = self._slice(a, i).sum(axis=0)
            row[a[i]] = w
            out[i, :c] = row
        return out

    def to_dict(self) -> dict:
        return {"kind": "matrix", **self.matrix.to_json_dict()}


def from_matrix(tensor: MatrixGame | np.ndarray, *, labels=None, name: str = "matrix") -> TensorGame:
    if not isinstance(tensor, MatrixGame):
        tensor = MatrixGame(np.asarray(tensor, dtype=float))
    return TensorGame(tensor, labels=labels, name=name)


def load_matrix_game(path: str | Path) -> TensorGame:
    doc = json.loads(Path(path).read_text())
    try:
        matrix = MatrixGame.from_flat(doc["n_players"], doc["action_counts"], doc["payoffs"])
    except KeyError as exc:
        raise ValueError(f"{path}: missing field {exc.args[0]!r}") from None
    return TensorGame(matrix, labels=doc.get("labels"), name=doc.get("name", Path(path).stem))


def aligned(game: GameSpec) -> GameSpec:
    """Identical-interest version of ``game``: every player is paid ``W(a)``.

    Unilateral improvements of any player then coincide in sign with
    improvements of the social welfare of the original game.
    """

    def same_for_all(player: int, profile: tuple) -> float:
        return game.global_utility(profile)

    return GameSpec(game.action_counts, same_for_all, labels=game.labels, name=f"{game.name}-aligned")


def aligned_matrix(game: GameSpec) -> TensorGame:
    """Tensor form of :func:`aligned`; enumerates every profile."""
    w = np.empty(game.action_counts)
    for prof in game.profiles():
        w[prof] = game.global_utility(prof)
    return from_matrix(np.broadcast_to(w, (game.n_players, *game.action_counts)), labels=game.labels,
                       name=f"{game.name}-aligned")


# -- functional API -------------------------------------------------------------


def payoff(game: GameSpec, profile: Sequence[int], player: int) -> float:
    return game.payoff(profile, player)


def global_utility(game: GameSpec, profile: Sequence[int]) -> float:
    return game.global_utility(profile)


def _deviate(game: GameSpec, profile: Sequence[int], player: int, alt: int) -> tuple[int, ...]:
    prof = list(game.check_profile(profile))
    player = game.check_player(player)
    if not 0 <= int(alt) < game.action_counts[player]:
        raise ValueError(f"alternative action {alt} out of range for player {player}")
    prof[player] = int(alt)
    return tuple(prof)


def counterfactual_payoff(game: GameSpec, profile: Sequence[int], player: int, alt: int) -> float:
    """``u_i(alt, a_-i)``: what ``player`` would have earned by playing ``alt``."""
    return game.payoff(_deviate(game, profile, player, alt), player)


def counterfactual_global(game: GameSpec, profile: Sequence[int], player: int, alt: int) -> float:
    """``W(alt, a_-i)``: social welfare had only ``player`` switched to ``alt``."""
    return game.global_utility(_deviate(game, profile, player, alt))


# -- fixtures -------------------------------------------------------------------

STAG, HARE = 0, 1


def stag_hunt_fixture() -> TensorGame:
    """Two hunters; stag pays 3 each only if both go, a hare always pays 1."""
    row = [[3.0, 0.0], [1.0, 1.0]]
    col = [[3.0, 1.0], [0.0, 1.0]]
    return from_matrix(np.array([row, col]), labels=[["stag", "hare"], ["stag", "hare"]], name="stag_hunt")


def resource_2x2_fixture():
    """Two users, two shared resources; a user alone gets its full PHY rate.

    Row rates (R#1, R#2) = (5, 6), column rates = (4, 3). Sharing splits a
    resource equally.
    """
    from .models import ResourceGame

    return ResourceGame(np.array([[5.0, 6.0], [4.0, 3.0]]), labels=[["R#1", "R#2"], ["R#1", "R#2"]],
                        name="resource_2x2")


def constant_game(action_counts: Sequence[int], value: float) -> GameSpec:
    return GameSpec(action_counts, lambda player, profile: float(value), name="constant")
