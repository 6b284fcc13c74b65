"""Countdown games: model, text format, minimax solver and generators."""

from __future__ import annotations

import random
import re
from collections import defaultdict
from dataclasses import dataclass, field
from typing import NamedTuple

from popsync.mdp import Distribution, Mdp

_VERTEX_RE = re.compile(r"[A-Za-z0-9_]+\Z")
_INT_RE = re.compile(r"[0-9]+\Z")


class GameError(ValueError):
    """Raised for malformed countdown game documents or invalid games."""

    def __init__(self, message: str, lineno: int | None = None) -> None:
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class Edge(NamedTuple):
    source: str
    weight: int
    target: str


@dataclass(frozen=True)
class CountdownGame:
    """A weighted directed graph with an initial (vertex, counter) pair.

    Vertices keep their order of first appearance so that everything derived
    from a game (solver tables, compiled MDPs, reports) is reproducible.
    """

    vertices: tuple[str, ...]
    edges: tuple[Edge, ...]
    init_vertex: str
    init_counter: int
    _moves: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(set(self.vertices)) != len(self.vertices):
            raise GameError("duplicate vertex")
        for v in self.vertices:
            if not _VERTEX_RE.match(v):
                raise GameError(f"invalid vertex id {v!r}")
        if self.init_vertex not in self.vertices:
            raise GameError(f"init vertex {self.init_vertex!r} is not a vertex")
        if self.init_counter < 0:
            raise GameError("init counter must be nonnegative")
        vs = set(self.vertices)
        moves: dict[str, dict[int, list[str]]] = defaultdict(dict)
        for e in self.edges:
            if e.weight < 1:
                raise GameError(f"edge weight must be >= 1: {e}")
            if e.source not in vs or e.target not in vs:
                raise GameError(f"edge endpoint is not a vertex: {e}")
            targets = moves[e.source].setdefault(e.weight, [])
            if e.target in targets:
                raise GameError(f"duplicate edge {e.source} {e.weight} {e.target}")
            targets.append(e.target)
        frozen = {
            v: {d: tuple(ts) for d, ts in sorted(moves[v].items())}
            for v in self.vertices
        }
        object.__setattr__(self, "_moves", frozen)

    @classmethod
    def from_edges(
        cls,
        edges: list[tuple[str, int, str]],
        init_vertex: str,
        init_counter: int,
    ) -> CountdownGame:
        order = [init_vertex]
        for s, _, t in edges:
            order.extend((s, t))
        vertices = tuple(dict.fromkeys(order))
        return cls(vertices, tuple(Edge(*e) for e in edges), init_vertex, init_counter)

    @property
    def d_max(self) -> int:
        return max((e.weight for e in self.edges), default=0)

    def moves(self, v: str) -> dict[int, tuple[str, ...]]:
        """Weights playable at ``v`` (ignoring the counter) mapped to their targets."""
        return self._moves[v]

    def move_labels(self) -> list[tuple[str, int]]:
        """Distinct (vertex, weight) pairs that appear on edges, in vertex order."""
        return [(v, d) for v in self.vertices for d in self._moves[v]]

    def to_text(self) -> str:
        lines = [f"init {self.init_vertex} {self.init_counter}"]
        lines += [f"edge {e.source} {e.weight} {e.target}" for e in self.edges]
        return "\n".join(lines) + "\n"


def parse_game(source: str) -> CountdownGame:
    """Parse the line-oriented countdown format.

    ``# comment``, ``init <vertex> <counter>`` (exactly once) and
    ``edge <from> <weight> <to>``.  Errors name the offending line.
    """
    init: tuple[str, int] | None = None
    edges: list[tuple[str, int, str]] = []
    seen: set[tuple[str, int, str]] = set()
    for lineno, raw in enumerate(source.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        head = tokens[0]
        if head == "init":
            if len(tokens) != 3:
                raise GameError("init expects <vertex> <counter>", lineno)
            if init is not None:
                raise GameError("duplicate init", lineno)
            v = _vertex(tokens[1], lineno)
            init = (v, _integer(tokens[2], lineno))
        elif head == "edge":
            if len(tokens) != 4:
                raise GameError("edge expects <from> <weight> <to>", lineno)
            e = (_vertex(tokens[1], lineno), _integer(tokens[2], lineno), _vertex(tokens[3], lineno))
            if e[1] < 1:
                raise GameError(f"weight must be >= 1, got {e[1]}", lineno)
            if e in seen:
                raise GameError(f"duplicate edge {' '.join(map(str, e))}", lineno)
            seen.add(e)
            edges.append(e)
        else:
            raise GameError(f"unknown token {head!r}", lineno)
    if init is None:
        raise GameError("missing init")
    return CountdownGame.from_edges(edges, *init)


def _vertex(token: str, lineno: int) -> str:
    if not _VERTEX_RE.match(token):
        raise GameError(f"invalid vertex id {token!r}", lineno)
    return token


def _integer(token: str, lineno: int) -> int:
    if not _INT_RE.match(token):
        raise GameError(f"expected a decimal integer, got {token!r}", lineno)
    return int(token)


@dataclass(frozen=True)
class WinTable:
    """Minimax winner for every (vertex, counter) with counter in 0..c0.

    ``move[(v, c)]`` is the smallest winning weight for Player 1 wherever
    ``win[(v, c)]`` holds and ``c > 0``.
    """

    game: CountdownGame
    win: dict[tuple[str, int], bool]
    move: dict[tuple[str, int], int]

    @property
    def player1_wins(self) -> bool:
        return self.win[(self.game.init_vertex, self.game.init_counter)]

    @property
    def winner(self) -> int:
        return 1 if self.player1_wins else 2


def solve_game(game: CountdownGame) -> WinTable:
    """Bottom-up minimax over counter values 0..c0.

    Player 1 chooses a playable weight d <= c, Player 2 chooses any edge with
    that weight.  A position with c > 0 and nothing playable is lost.
    """
    win: dict[tuple[str, int], bool] = {}
    move: dict[tuple[str, int], int] = {}
    for v in game.vertices:
        win[(v, 0)] = True
    for c in range(1, game.init_counter + 1):
        for v in game.vertices:
            win[(v, c)] = False
            for d, targets in game.moves(v).items():
                if d > c:
                    break
                if all(win[(t, c - d)] for t in targets):
                    win[(v, c)] = True
                    move[(v, c)] = d
                    break
    return WinTable(game, win, move)


def countdown_as_mdp(game: CountdownGame) -> tuple[Mdp, frozenset[int]]:
    """Encode the game against a uniformly randomizing Player 2 as an MDP.

    States are ``(v, c)`` for ``0 <= c <= c0`` plus an absorbing ``sink``;
    actions are the distinct edge weights.  Pairs with counter 0 are
    absorbing and form the returned target set.
    """
    weights = sorted({e.weight for e in game.edges})
    pairs = [(v, c) for c in range(game.init_counter + 1) for v in game.vertices]
    index = {p: i for i, p in enumerate(pairs)}
    sink = len(pairs)
    names = [f"({v},{c})" for v, c in pairs] + ["sink"]
    labels: list[frozenset[str]] = []
    for v, c in pairs:
        tags = set()
        if c == 0:
            tags.add("target")
        if (v, c) == (game.init_vertex, game.init_counter):
            tags.add("start")
        labels.append(frozenset(tags))
    labels.append(frozenset({"sink"}))

    trans: list[tuple[Distribution, ...]] = []
    for i, (v, c) in enumerate(pairs):
        row = []
        for d in weights:
            targets = game.moves(v).get(d)
            if c == 0:
                row.append(Distribution.point(i))
            elif targets is None or d > c:
                row.append(Distribution.point(sink))
            else:
                row.append(Distribution.uniform(index[(t, c - d)] for t in targets))
        trans.append(tuple(row))
    trans.append(tuple(Distribution.point(sink) for _ in weights))
    mdp = Mdp(
        tuple(names),
        tuple(labels),
        tuple(str(d) for d in weights),
        tuple(trans),
    )
    target = frozenset(index[(v, 0)] for v in game.vertices)
    return mdp, target


def random_game(n_vertices: int, max_weight: int, c0: int, seed: int) -> CountdownGame:
    """Seeded random game with 0..3 outgoing edges per vertex; init vertex ``v0``."""
    if n_vertices < 1 or max_weight < 1:
        raise ValueError("n_vertices and max_weight must be positive")
    rng = random.Random(seed)
    vertices = [f"v{i}" for i in range(n_vertices)]
    pool = [(d, t) for d in range(1, max_weight + 1) for t in vertices]
    edges = []
    for v in vertices:
        k = min(rng.randint(0, 3), len(pool))
        for d, t in sorted(rng.sample(pool, k)):
            edges.append(Edge(v, d, t))
    return CountdownGame(tuple(vertices), tuple(edges), vertices[0], c0)
