"""Regret-matching dynamics that steer multi-agent games toward their welfare optimum."""

from arena.comms import CommsLedger, queries_per_iteration, reconstruct_globals
from arena.dynamics import DynamicsConfig, RunResult, RunTrace, gurm_run, lurm_run, run_algorithm, sorm_run
from arena.equilibria import alignment_check, cce_regret, empirical_distribution, is_psne, psne_set, social_optimum
from arena.game import GameSpec, aligned, from_matrix, resource_2x2_fixture, stag_hunt_fixture
from arena.models import ResourceGameParams, TaskGameParams, gen_resource_game, gen_task_game

__all__ = [
    "CommsLedger",
    "DynamicsConfig",
    "GameSpec",
    "ResourceGameParams",
    "RunResult",
    "RunTrace",
    "TaskGameParams",
    "aligned",
    "alignment_check",
    "cce_regret",
    "empirical_distribution",
    "from_matrix",
    "gen_resource_game",
    "gen_task_game",
    "gurm_run",
    "is_psne",
    "lurm_run",
    "psne_set",
    "queries_per_iteration",
    "reconstruct_globals",
    "resource_2x2_fixture",
    "run_algorithm",
    "social_optimum",
    "sorm_run",
    "stag_hunt_fixture",
]
