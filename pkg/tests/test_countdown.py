from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from conftest import brute_force_winner
from popsync.countdown import (
    CountdownGame,
    Edge,
    GameError,
    countdown_as_mdp,
    parse_game,
    random_game,
    solve_game,
)
from popsync.mdp import prob1, validate


@st.composite
def small_games(draw, max_c0=6):
    n = draw(st.integers(1, 3))
    vs = [f"v{i}" for i in range(n)]
    triples = [(s, d, t) for s in vs for d in (1, 2, 3) for t in vs]
    edges = draw(st.lists(st.sampled_from(triples), unique=True, max_size=8))
    c0 = draw(st.integers(0, max_c0))
    return CountdownGame(tuple(vs), tuple(Edge(*e) for e in edges), "v0", c0)


def test_parse_simple():
    g = parse_game("init v 3\nedge v 1 v")
    assert g.vertices == ("v",)
    assert g.edges == (Edge("v", 1, "v"),)
    assert (g.init_vertex, g.init_counter) == ("v", 3)


def test_parse_comments_and_blank_lines():
    g = parse_game("# a game\n\ninit a 2   # start here\nedge a 2 b\n")
    assert g.vertices == ("a", "b")
    assert g.d_max == 2


@pytest.mark.parametrize(
    "text, message",
    [
        ("edge v 1 v", "missing init"),
        ("init v 3\nedge v 1 v\nedge v 1 v", "duplicate edge"),
        ("init v 3\ninit v 2", "duplicate init"),
        ("init v 3\nedge v 0 v", "weight must be >= 1"),
        ("init v 3\nloop v", "unknown token"),
        ("init v x", "decimal integer"),
        ("init v-1 3", "invalid vertex"),
    ],
)
def test_parse_errors(text, message):
    with pytest.raises(GameError, match=message):
        parse_game(text)


def test_parse_error_names_line():
    with pytest.raises(GameError, match="line 3"):
        parse_game("init v 3\nedge v 1 v\nedge v 1 v")


def test_solve_unit_loop():
    wt = solve_game(parse_game("init v 3\nedge v 1 v"))
    assert all(wt.win[("v", c)] for c in range(4))
    assert wt.winner == 1


def test_solve_branching(branching):
    g = CountdownGame.from_edges(list(branching.edges), "v0", 3)
    wt = solve_game(g)
    assert wt.win[("v0", 1)] is True
    assert wt.win[("v0", 2)] is False
    assert wt.win[("v0", 3)] is False
    assert wt.win[("u", 2)] is True
    assert wt.win[("u", 1)] is False


def test_solve_even_loop():
    edges = [("v", 2, "v")]
    assert solve_game(CountdownGame.from_edges(edges, "v", 3)).win[("v", 3)] is False
    assert solve_game(CountdownGame.from_edges(edges, "v", 4)).win[("v", 4)] is True


def test_zero_counter_wins_immediately():
    wt = solve_game(parse_game("init v 0"))
    assert wt.player1_wins


@settings(max_examples=200, deadline=None)
@given(small_games())
def test_solver_matches_brute_force(game):
    wt = solve_game(game)
    for v in game.vertices:
        for c in range(game.init_counter + 1):
            assert wt.win[(v, c)] == brute_force_winner(game, v, c)


@settings(max_examples=100, deadline=None)
@given(small_games())
def test_win_table_invariants(game):
    wt = solve_game(game)
    for v in game.vertices:
        assert wt.win[(v, 0)]
        for c in range(1, game.init_counter + 1):
            if not wt.win[(v, c)]:
                assert (v, c) not in wt.move
                continue
            d = wt.move[(v, c)]
            assert d <= c and d in game.moves(v)
            assert all(wt.win[(t, c - d)] for t in game.moves(v)[d])
            smaller = [e for e in game.moves(v) if e < d]
            assert not any(all(wt.win[(t, c - e)] for t in game.moves(v)[e]) for e in smaller)


@settings(max_examples=100, deadline=None)
@given(small_games())
def test_move_table_plays_end_within_c0_rounds(game):
    wt = solve_game(game)
    if not wt.player1_wins:
        return
    # every Player 2 reply must still be winning; depth-first over all replies
    stack = [(game.init_vertex, game.init_counter, 0)]
    while stack:
        v, c, rounds = stack.pop()
        assert rounds <= game.init_counter
        if c == 0:
            continue
        d = wt.move[(v, c)]
        stack.extend((t, c - d, rounds + 1) for t in game.moves(v)[d])


def test_countdown_mdp_single_successor():
    mdp, target = countdown_as_mdp(parse_game("init v 2\nedge v 1 v"))
    d = mdp.dist(mdp.state("(v,2)"), mdp.action("1"))
    assert d.succ == (mdp.state("(v,1)"),)
    assert d.prob == (Fraction(1),)
    assert validate(mdp) == []
    assert target == {mdp.state("(v,0)")}


def test_countdown_mdp_uniform_over_edges():
    g = CountdownGame.from_edges([("v0", 1, "v0"), ("v0", 1, "u")], "v0", 2)
    mdp, _ = countdown_as_mdp(g)
    d = mdp.dist(mdp.state("(v0,2)"), mdp.action("1"))
    assert dict(d.items()) == {mdp.state("(v0,1)"): Fraction(1, 2), mdp.state("(u,1)"): Fraction(1, 2)}


def test_countdown_mdp_disabled_actions_hit_sink():
    mdp, _ = countdown_as_mdp(parse_game("init v 3\nedge v 2 v\nedge v 3 u"))
    sink = mdp.state("sink")
    assert mdp.dist(mdp.state("(v,1)"), mdp.action("2")).succ == (sink,)
    assert mdp.dist(mdp.state("(u,3)"), mdp.action("3")).succ == (sink,)


@settings(max_examples=200, deadline=None)
@given(small_games())
def test_randomized_adversary_equivalence(game):
    mdp, target = countdown_as_mdp(game)
    start = mdp.labelled("start")
    assert (start in prob1(mdp, target)) == solve_game(game).player1_wins


def test_random_game_degenerate():
    for seed in range(20):
        g = random_game(1, 1, 3, seed)
        assert set(g.edges) <= {Edge("v0", 1, "v0")}


def test_random_game_deterministic():
    assert random_game(3, 3, 4, 7) == random_game(3, 3, 4, 7)


@pytest.mark.parametrize("seed", range(30))
def test_random_game_round_trip(seed):
    g = random_game(3, 3, 4, seed)
    assert len(g.edges) <= 9
    assert all(len([e for e in g.edges if e.source == v]) <= 3 for v in g.vertices)
    assert g.init_vertex == "v0"
    again = parse_game(g.to_text())
    assert set(again.edges) == set(g.edges)
    assert (again.init_vertex, again.init_counter) == ("v0", 4)


def test_invalid_game_rejected():
    with pytest.raises(GameError):
        CountdownGame(("a",), (Edge("a", 1, "b"),), "a", 1)
    with pytest.raises(GameError):
        CountdownGame(("a",), (), "b", 1)
