"""Finite MDPs with exact probabilities, almost-sure reachability and strategies.

Everything here is support-based: the Prob1 region and the extracted
strategies depend only on which successors have positive probability.
"""

from __future__ import annotations

import json
from collections import deque
from collections.abc import Hashable, Iterable, Mapping, Sequence
from dataclasses import dataclass
from fractions import Fraction


@dataclass(frozen=True)
class Distribution:
    """Successor indices paired with exact probabilities."""

    succ: tuple[int, ...]
    prob: tuple[Fraction, ...]

    @classmethod
    def point(cls, s: int) -> Distribution:
        return cls((s,), (Fraction(1),))

    @classmethod
    def uniform(cls, succ: Iterable[int]) -> Distribution:
        items = tuple(sorted(set(succ)))
        if not items:
            raise ValueError("uniform distribution over an empty set")
        p = Fraction(1, len(items))
        return cls(items, (p,) * len(items))

    @classmethod
    def from_mapping(cls, weights: Mapping[int, Fraction]) -> Distribution:
        items = sorted(weights.items())
        return cls(tuple(s for s, _ in items), tuple(Fraction(p) for _, p in items))

    @property
    def support(self) -> frozenset[int]:
        return frozenset(self.succ)

    def items(self) -> Iterable[tuple[int, Fraction]]:
        return zip(self.succ, self.prob)


@dataclass(frozen=True)
class Mdp:
    """States, actions and a transition table ``trans[state][action]``.

    A ``None`` entry marks a missing transition; :func:`validate` reports it.
    Labels used across the package: ``start``, ``heaven``, ``hell``.
    """

    state_names: tuple[str, ...]
    labels: tuple[frozenset[str], ...]
    action_names: tuple[str, ...]
    trans: tuple[tuple[Distribution | None, ...], ...]

    @property
    def n_states(self) -> int:
        return len(self.state_names)

    @property
    def n_actions(self) -> int:
        return len(self.action_names)

    def state(self, name: str) -> int:
        return self.state_names.index(name)

    def action(self, name: str) -> int:
        return self.action_names.index(name)

    def with_label(self, label: str) -> list[int]:
        return [s for s, tags in enumerate(self.labels) if label in tags]

    def labelled(self, label: str) -> int:
        """The unique state carrying ``label``."""
        found = self.with_label(label)
        if len(found) != 1:
            raise ValueError(f"expected exactly one {label!r} state, found {len(found)}")
        return found[0]

    def dist(self, s: int, a: int) -> Distribution:
        d = self.trans[s][a]
        if d is None:
            raise ValueError(f"no transition for ({self.state_names[s]}, {self.action_names[a]})")
        return d


def validate(mdp: Mdp) -> list[str]:
    """Return all invariant violations; an empty list means the MDP is well formed."""
    problems = []
    if len(mdp.labels) != mdp.n_states or len(mdp.trans) != mdp.n_states:
        problems.append("state tables have inconsistent lengths")
        return problems
    for s, row in enumerate(mdp.trans):
        if len(row) != mdp.n_actions:
            problems.append(f"trans not total: state {mdp.state_names[s]} has {len(row)} actions")
            continue
        for a, d in enumerate(row):
            where = f"({mdp.state_names[s]}, {mdp.action_names[a]})"
            if d is None:
                problems.append(f"trans not total: missing {where}")
                continue
            if not d.succ or len(d.succ) != len(d.prob):
                problems.append(f"malformed distribution at {where}")
                continue
            if len(set(d.succ)) != len(d.succ):
                problems.append(f"repeated successor at {where}")
            if any(not 0 <= t < mdp.n_states for t in d.succ):
                problems.append(f"unknown successor at {where}")
            if any(p <= 0 for p in d.prob):
                problems.append(f"nonpositive probability at {where}")
            total = sum(d.prob, Fraction(0))
            if total != 1:
                problems.append(f"distribution sums to {total} at {where}")
    return problems


def _predecessors(mdp: Mdp) -> list[list[tuple[int, int]]]:
    preds: list[list[tuple[int, int]]] = [[] for _ in range(mdp.n_states)]
    for s, row in enumerate(mdp.trans):
        for a, d in enumerate(row):
            for t in d.succ:
                preds[t].append((s, a))
    return preds


def _rank(
    mdp: Mdp,
    region: set[int],
    target: set[int],
    preds: list[list[tuple[int, int]]],
) -> dict[int, int]:
    """Backward BFS levels inside ``region`` using only actions that stay in it."""
    rank = {t: 0 for t in target if t in region}
    queue = deque(rank)
    while queue:
        t = queue.popleft()
        for s, a in preds[t]:
            if s in rank or s not in region:
                continue
            if all(u in region for u in mdp.trans[s][a].succ):
                rank[s] = rank[t] + 1
                queue.append(s)
    return rank


def prob1(mdp: Mdp, target: Iterable[int]) -> frozenset[int]:
    """States from which some strategy reaches ``target`` with probability one.

    Nested fixpoint: shrink the candidate region to the states that can reach
    the target using only actions whose support stays inside the region.
    """
    target = set(target)
    if not target:
        raise ValueError("prob1 needs a nonempty target set")
    preds = _predecessors(mdp)
    region = set(range(mdp.n_states))
    while True:
        reach = set(_rank(mdp, region, target, preds))
        if reach == region:
            return frozenset(region)
        region = reach


def graph_reachable_to(mdp: Mdp, target: Iterable[int]) -> frozenset[int]:
    """States with some path (any actions) into ``target``."""
    preds = _predecessors(mdp)
    seen = set(target)
    queue = deque(seen)
    while queue:
        t = queue.popleft()
        for s, _ in preds[t]:
            if s not in seen:
                seen.add(s)
                queue.append(s)
    return frozenset(seen)


@dataclass(frozen=True)
class Strategy:
    """Memoryless deterministic choice on a winning region.

    ``choice`` covers ``region`` minus the target; ``rank`` is the distance
    to the target used to pick the choices.
    """

    choice: dict[int, int]
    region: frozenset[int]
    rank: dict[int, int]


def extract_strategy(mdp: Mdp, winset: Iterable[int], target: Iterable[int]) -> Strategy:
    """Pick, per winning state, an action staying in ``winset`` that lowers the rank.

    Ties go to the smallest successor rank, then the lowest action index.
    """
    region = set(winset)
    target = set(target)
    rank = _rank(mdp, region, target, _predecessors(mdp))
    if len(rank) != len(region):
        raise ValueError("not closed: winset is not an almost-sure fixpoint for target")
    choice = {}
    for s in region:
        if s in target:
            continue
        best = None
        for a, d in enumerate(mdp.trans[s]):
            if not all(t in region for t in d.succ):
                continue
            low = min(rank[t] for t in d.succ)
            if best is None or low < best[0]:
                best = (low, a)
        assert best is not None and best[0] < rank[s]
        choice[s] = best[1]
    return Strategy(choice, frozenset(region), rank)


@dataclass(frozen=True)
class MarkovChain:
    """A finite chain; ``states[i]`` is the key (state id, config, ...) of index ``i``."""

    states: tuple[Hashable, ...]
    next: tuple[Distribution, ...]

    def index(self, key: Hashable) -> int:
        return self.states.index(key)

    def __len__(self) -> int:
        return len(self.states)


def induced_chain(
    mdp: Mdp,
    strategy: Strategy | Mapping[int, int],
    initial: int,
    absorbing: Iterable[int] = (),
) -> MarkovChain:
    """The chain of states reachable from ``initial`` when following ``strategy``.

    States in ``absorbing`` are not expanded and get a self-loop, which is how
    targets are treated when only reaching them matters.
    """
    choice = strategy.choice if isinstance(strategy, Strategy) else strategy
    stop = set(absorbing)
    order = [initial]
    index = {initial: 0}
    raw: list[Distribution] = []
    i = 0
    while i < len(order):
        s = order[i]
        i += 1
        if s in stop:
            raw.append(Distribution.point(s))
            continue
        if s not in choice:
            raise ValueError(f"strategy undefined at reachable state {mdp.state_names[s]}")
        d = mdp.dist(s, choice[s])
        for t in d.succ:
            if t not in index:
                index[t] = len(order)
                order.append(t)
        raw.append(d)
    nxt = tuple(Distribution(tuple(index[t] for t in d.succ), d.prob) for d in raw)
    return MarkovChain(tuple(order), nxt)


def chain_almost_sure(chain: MarkovChain, initial: int, target: Iterable[int]) -> bool:
    """Finite-chain criterion: the target is reachable from every reachable state.

    Indices are chain positions.  Exploration stops at target states.
    """
    target = set(target)
    reach = {initial}
    queue = deque([initial])
    while queue:
        s = queue.popleft()
        if s in target:
            continue
        for t in chain.next[s].succ:
            if t not in reach:
                reach.add(t)
                queue.append(t)
    preds: dict[int, list[int]] = {s: [] for s in reach}
    for s in reach:
        if s in target:
            continue
        for t in chain.next[s].succ:
            preds[t].append(s)
    good = {s for s in reach if s in target}
    queue = deque(good)
    while queue:
        t = queue.popleft()
        for s in preds[t]:
            if s not in good:
                good.add(s)
                queue.append(s)
    return good == reach


def mdp_to_document(mdp: Mdp) -> dict:
    """JSON-ready document with probabilities as integer fractions."""
    transitions = []
    for s, row in enumerate(mdp.trans):
        for a, d in enumerate(row):
            if d is None:
                continue
            transitions.append({
                "state": s,
                "action": a,
                "successors": [
                    {"state": t, "num": p.numerator, "den": p.denominator}
                    for t, p in d.items()
                ],
            })
    return {
        "states": [
            {"id": s, "name": name, "labels": sorted(mdp.labels[s])}
            for s, name in enumerate(mdp.state_names)
        ],
        "actions": [{"id": a, "name": name} for a, name in enumerate(mdp.action_names)],
        "transitions": transitions,
    }


def mdp_from_document(doc: Mapping) -> Mdp:
    states = sorted(doc["states"], key=lambda x: x["id"])
    actions = sorted(doc["actions"], key=lambda x: x["id"])
    if [x["id"] for x in states] != list(range(len(states))):
        raise ValueError("state ids must be 0..n-1")
    if [x["id"] for x in actions] != list(range(len(actions))):
        raise ValueError("action ids must be 0..m-1")
    table: list[list[Distribution | None]] = [[None] * len(actions) for _ in states]
    for tr in doc["transitions"]:
        succ = tuple(x["state"] for x in tr["successors"])
        prob = tuple(Fraction(x["num"], x["den"]) for x in tr["successors"])
        table[tr["state"]][tr["action"]] = Distribution(succ, prob)
    return Mdp(
        tuple(x["name"] for x in states),
        tuple(frozenset(x.get("labels", ())) for x in states),
        tuple(x["name"] for x in actions),
        tuple(tuple(row) for row in table),
    )


def dumps(mdp: Mdp) -> str:
    return json.dumps(mdp_to_document(mdp), indent=1, sort_keys=True) + "\n"


def loads(text: str) -> Mdp:
    return mdp_from_document(json.loads(text))


def build_mdp(
    states: Sequence[str],
    actions: Sequence[str],
    transitions: Mapping[tuple[str, str], Mapping[str, Fraction] | Iterable[str]],
    labels: Mapping[str, Iterable[str]] | None = None,
) -> Mdp:
    """Convenience constructor from names.

    A transition value is either a ``{successor: probability}`` mapping or an
    iterable of successors (uniform).  Missing pairs stay ``None``.
    """
    sidx = {name: i for i, name in enumerate(states)}
    labels = labels or {}
    table: list[list[Distribution | None]] = [[None] * len(actions) for _ in states]
    aidx = {name: i for i, name in enumerate(actions)}
    for (s, a), spec in transitions.items():
        if isinstance(spec, Mapping):
            items = list(spec.items())
            d = Distribution(
                tuple(sidx[t] for t, _ in items),
                tuple(Fraction(p) for _, p in items),
            )
        else:
            d = Distribution.uniform(sidx[t] for t in spec)
        table[sidx[s]][aidx[a]] = d
    return Mdp(
        tuple(states),
        tuple(frozenset(labels.get(s, ())) for s in states),
        tuple(actions),
        tuple(tuple(row) for row in table),
    )
