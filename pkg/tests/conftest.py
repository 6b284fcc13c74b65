import pytest

from popsync.countdown import CountdownGame, parse_game
from popsync.harness import HAND_GAMES, corpus

ACCEPTANCE_LINES: list[str] = []


def brute_force_winner(game: CountdownGame, v: str, c: int) -> bool:
    """Exhaustive game-tree search: explore every play from (v, c), no tables."""
    if c == 0:
        return True
    options: dict[int, list[str]] = {}
    for e in game.edges:
        if e.source == v and e.weight <= c:
            options.setdefault(e.weight, []).append(e.target)
    return any(
        all(brute_force_winner(game, t, c - d) for t in targets)
        for d, targets in options.items()
    )


@pytest.fixture(scope="session")
def game_corpus() -> list[tuple[str, CountdownGame]]:
    return corpus()


@pytest.fixture
def branching() -> CountdownGame:
    return parse_game(HAND_GAMES["branching"])


@pytest.fixture
def unit_loop() -> CountdownGame:
    return parse_game(HAND_GAMES["unit_loop"])


@pytest.fixture
def even_loop() -> CountdownGame:
    return parse_game(HAND_GAMES["even_loop"])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
