"""Corpus generation and the finite-window check of the reduction's correctness."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

from popsync.countdown import CountdownGame, parse_game, random_game, solve_game
from popsync.pilot import PilotContext, verify_pilot
from popsync.population import check_sync
from popsync.reduction import compile_game

HAND_GAMES = {
    "branching": "init v0 1\nedge v0 1 v0\nedge v0 1 u\nedge u 2 u\n",
    "unit_loop": "init v 1\nedge v 1 v\n",
    "even_loop": "init v 3\nedge v 2 v\n",
}


def generated_corpus(size: int = 50) -> list[tuple[str, CountdownGame]]:
    """Small random games: up to 3 vertices, weights up to 3, c0 up to 4."""
    return [
        (f"gen{i:03d}", random_game(1 + i % 3, 1 + (i // 3) % 3, i % 5, seed=1000 + i))
        for i in range(size)
    ]


def corpus(size: int = 50) -> list[tuple[str, CountdownGame]]:
    hand = [(name, parse_game(text)) for name, text in HAND_GAMES.items()]
    return hand + generated_corpus(size)


def game_summary(game: CountdownGame, k_mc: int, k_ac: int) -> dict:
    return {
        "vertices": len(game.vertices),
        "edges": len(game.edges),
        "c0": game.init_counter,
        "d_max": game.d_max,
        "k_mc": k_mc,
        "k_ac": k_ac,
        "min_sync_n": 2 + k_mc + k_ac,
    }


@dataclass(frozen=True)
class NResult:
    n: int
    synchronizable: bool
    reachable_configs: int
    solve_millis: float
    pilot_certified: bool | None = None


@dataclass(frozen=True)
class LemmaReport:
    game: dict
    dp_winner: int
    results: list[NResult] = field(default_factory=list)
    literal_control_error: bool = False

    @property
    def consistent(self) -> bool:
        threshold = self.game["min_sync_n"]
        if self.dp_winner == 1:
            return all(r.synchronizable and r.pilot_certified for r in self.results)
        return all(r.synchronizable == (r.n < threshold) for r in self.results)

    def to_document(self) -> dict:
        return {
            "game": self.game,
            "dp_winner": f"player {self.dp_winner}",
            "literal_control_error": self.literal_control_error,
            "results": [asdict(r) for r in self.results],
            "consistent": self.consistent,
        }


def verify_lemma(
    game: CountdownGame,
    extra: int = 1,
    literal_control_error: bool = False,
    cap: int | None = None,
) -> LemmaReport:
    """Check synchronizability for n = 1 .. min_sync_n + extra against the game's winner.

    For games won by Player 1 the pilot strategy is certified at every n too.
    """
    if extra < 0:
        raise ValueError("extra must be nonnegative")
    wt = solve_game(game)
    mdp, gm = compile_game(game, literal_control_error=literal_control_error)
    ctx = PilotContext(gm, wt) if wt.player1_wins else None
    results = []
    for n in range(1, gm.min_sync_n + extra + 1):
        res = check_sync(mdp, n, cap)
        pilot = verify_pilot(mdp, ctx, n).certified if ctx else None
        results.append(NResult(n, res.synchronizable, res.reachable_configs, round(res.millis, 3), pilot))
    return LemmaReport(game_summary(game, gm.k_mc, gm.k_ac), wt.winner, results, literal_control_error)
