"""Message and payoff-query accounting for the counterfactual-payoff exchange.

Each iteration every player sends every other player one message: its own
payoff under each action the receiver could have taken. Summing the messages
it receives with its own counterfactual payoffs gives a player the welfare of
each of its deviations without knowing anyone else's utility function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .game import GameSpec


def queries_per_iteration(n: int, m: int) -> int:
    """Payoff entries exchanged per iteration with ``n`` players of ``m`` actions each."""
    if n < 1 or m < 1:
        raise ValueError("need n >= 1 and m >= 1")
    return n * (n - 1) * m


def queries_for_action_counts(action_counts: Sequence[int]) -> int:
    """Heterogeneous form: every sender covers each receiver's whole action set."""
    n = len(action_counts)
    return (n - 1) * int(sum(action_counts))


def messages_per_iteration(n: int) -> int:
    return n * (n - 1)


def query_ratio(n: int, m: int) -> float:
    """Per-iteration query count relative to the size of the full payoff tensor.

    ``n(n-1)m / (n m^n) = (n-1) / m^(n-1)``; evaluated in log space so large
    games underflow to 0.0 rather than overflow.
    """
    if n < 1 or m < 1:
        raise ValueError("need n >= 1 and m >= 1")
    if n == 1:
        return 0.0
    return math.exp(math.log(n - 1) - (n - 1) * math.log(m))


def tensor_entries(n: int, m: int) -> int:
    return n * m**n


@dataclass
class CommsLedger:
    messages_this_iter: int = 0
    queries_this_iter: int = 0
    cumulative_messages: int = 0
    cumulative_queries: int = 0
    iterations: int = 0

    def record(self, messages: int, queries: int) -> "CommsLedger":
        self.messages_this_iter = messages
        self.queries_this_iter = queries
        self.cumulative_messages += messages
        self.cumulative_queries += queries
        self.iterations += 1
        return self


def record_iteration(ledger: CommsLedger, n: int, m: int) -> CommsLedger:
    return ledger.record(messages_per_iteration(n), queries_per_iteration(n, m))


def record_game_iteration(ledger: CommsLedger, game: GameSpec) -> CommsLedger:
    return ledger.record(messages_per_iteration(game.n_players), queries_for_action_counts(game.action_counts))


def build_message(game: GameSpec, profile: Sequence[int], sender: int, receiver: int) -> np.ndarray:
    """``sender``'s payoff for every action ``receiver`` might have taken, others fixed."""
    prof = list(game.check_profile(profile))
    sender, receiver = game.check_player(sender), game.check_player(receiver)
    if sender == receiver:
        raise ValueError("a player does not message itself")
    out = np.empty(game.action_counts[receiver])
    for k in range(len(out)):
        prof[receiver] = k
        out[k] = game.payoff_eval(sender, tuple(prof))
    return out


def reconstruct_globals(game: GameSpec, profile: Sequence[int], player: int) -> np.ndarray:
    """Welfare of each of ``player``'s deviations, assembled from received messages.

    Uses only ``player``'s own payoff function plus the messages of the
    others, which is all a decentralised player would have.
    """
    prof = list(game.check_profile(profile))
    player = game.check_player(player)
    own = np.empty(game.action_counts[player])
    for k in range(len(own)):
        prof[player] = k
        own[k] = game.payoff_eval(player, tuple(prof))
    total = own
    for j in range(game.n_players):
        if j != player:
            total = total + build_message(game, profile, j, player)
    return total
