"""leaguelab: population-based league training on zero-sum matrix games.

A learner inner loop (gradient ascent on softmax policies) runs inside an
asynchronous steady-state PBT outer loop. Around them sit an Elo league with a
hall of fame, Nash analysis of the empirical game, and a grid archive of
behaviour descriptors with per-agent niche criteria.
"""

from .config import ExperimentConfig, load_config, parse_config
from .games import GameSpec, make_blotto, make_game, make_random_antisymmetric, make_rps, mixed_payoff
from .gametheory import exploitability, fictitious_play, support_enum_oracle
from .runtime import LeagueState, init_state, run_league, run_unit

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig", "GameSpec", "LeagueState", "exploitability", "fictitious_play", "init_state",
    "load_config", "make_blotto", "make_game", "make_random_antisymmetric", "make_rps", "mixed_payoff",
    "parse_config", "run_league", "run_unit", "support_enum_oracle",
]
