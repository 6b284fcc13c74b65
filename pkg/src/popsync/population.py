"""n-fold products of an MDP: counting quotient, tuple oracle, synchronization.

A configuration of the counting quotient is a multiset of MDP states, stored
canonically as ``((state, count), ...)`` sorted by state with zero counts
omitted.
"""

from __future__ import annotations

import itertools
import math
import os
import time
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

from popsync.mdp import (
    Distribution,
    Mdp,
    Strategy,
    chain_almost_sure,
    extract_strategy,
    graph_reachable_to,
    induced_chain,
    prob1,
)

DEFAULT_CAP = 5_000_000
LOST = "LOST"


class CapExceeded(RuntimeError):
    """The explored product grew beyond the configured number of configurations."""


def default_cap() -> int:
    return int(os.environ.get("POPSYNC_CAP", DEFAULT_CAP))


class Config(tuple):
    """Canonical multiset of states: a tuple of ``(state, count)`` pairs."""

    __slots__ = ()

    @classmethod
    def from_counts(cls, counts: Mapping[int, int]) -> Config:
        if any(c < 0 for c in counts.values()):
            raise ValueError("negative count")
        return cls(sorted((s, c) for s, c in counts.items() if c))

    @classmethod
    def uniform(cls, state: int, n: int) -> Config:
        return cls(((state, n),))

    @property
    def n(self) -> int:
        return sum(c for _, c in self)

    def count(self, state: int) -> int:  # type: ignore[override]
        for s, c in self:
            if s == state:
                return c
        return 0

    def marked(self) -> list[int]:
        return [s for s, _ in self]

    def counts(self) -> dict[int, int]:
        return dict(self)

    def key(self, names: tuple[str, ...]) -> str:
        return ",".join(f"{names[s]}:{c}" for s, c in self)


@lru_cache(maxsize=None)
def _splits(dist: Distribution, count: int) -> tuple[tuple[tuple[tuple[int, int], ...], Fraction], ...]:
    """Every way ``count`` components at one state spread over ``dist``'s support."""
    k = len(dist.succ)
    out = []
    for combo in itertools.combinations_with_replacement(range(k), count):
        parts = [0] * k
        for i in combo:
            parts[i] += 1
        coef = math.factorial(count)
        p = Fraction(1)
        for i, m in enumerate(parts):
            if m:
                coef //= math.factorial(m)
                p *= dist.prob[i] ** m
        out.append((tuple((dist.succ[i], m) for i, m in enumerate(parts) if m), p * coef))
    return tuple(out)


def config_distribution(mdp: Mdp, config: Config, action: int) -> dict[Config, Fraction]:
    """Product distribution of ``action`` lifted to a configuration."""
    fixed: dict[int, int] = {}
    random_parts = []
    for q, c in config:
        d = mdp.trans[q][action]
        if len(d.succ) == 1:
            t = d.succ[0]
            fixed[t] = fixed.get(t, 0) + c
        else:
            random_parts.append(_splits(d, c))
    if not random_parts:
        return {Config.from_counts(fixed): Fraction(1)}
    out: dict[Config, Fraction] = {}
    for combo in itertools.product(*random_parts):
        counts = dict(fixed)
        p = Fraction(1)
        for pairs, pp in combo:
            p *= pp
            for s, m in pairs:
                counts[s] = counts.get(s, 0) + m
        cfg = Config.from_counts(counts)
        out[cfg] = out.get(cfg, 0) + p
    return out


def config_successors(mdp: Mdp, config: Config, action: int) -> frozenset[Config]:
    if not 0 <= action < mdp.n_actions:
        raise KeyError(f"unknown action {action}")
    if any(not 0 <= q < mdp.n_states for q in config.marked()):
        raise KeyError("config mentions an unknown state")
    return frozenset(config_distribution(mdp, config, action))


def dead_states(mdp: Mdp) -> frozenset[int]:
    """States from which no heaven-labelled state is reachable at all."""
    alive = graph_reachable_to(mdp, mdp.with_label("heaven"))
    return frozenset(range(mdp.n_states)) - alive


@dataclass(frozen=True)
class AbstractProduct:
    """Reachable part of the counting quotient as an explicit MDP.

    ``configs[i]`` is the configuration of product state ``i``; the pruned
    sink, when present, has configuration ``None``.
    """

    base: Mdp
    n: int
    mdp: Mdp
    configs: tuple[Config | None, ...]
    index: dict[Config, int] = field(repr=False)
    start: int
    end: int | None
    lost: int | None

    def __len__(self) -> int:
        return len(self.configs)


def build_quotient(mdp: Mdp, n: int, cap: int | None = None, prune: bool = True) -> AbstractProduct:
    """Explore every configuration reachable from ``{start: n}``.

    ``prune`` applies two reductions that leave the Prob1 verdict unchanged:

    * an action that can move some marked component into a state from which
      Heaven is unreachable goes wholesale to one absorbing ``LOST`` sink
      instead of being expanded (it can never be part of a winning strategy);
    * a configuration in which some action sends every component straight to
      Heaven keeps only that action (lowest index); the others become
      self-loops, so nothing beyond it is explored.
    """
    if n < 1:
        raise ValueError("population size must be positive")
    cap = default_cap() if cap is None else cap
    start_cfg = Config.uniform(mdp.labelled("start"), n)
    end_cfg = Config.uniform(mdp.labelled("heaven"), n)
    dead = dead_states(mdp) if prune else frozenset()
    heaven = mdp.labelled("heaven")
    doomed = [
        [bool(dead.intersection(mdp.trans[q][a].succ)) for a in range(mdp.n_actions)]
        for q in range(mdp.n_states)
    ]
    to_heaven = [
        [mdp.trans[q][a].succ == (heaven,) for a in range(mdp.n_actions)]
        for q in range(mdp.n_states)
    ]

    configs: list[Config | None] = [start_cfg]
    index: dict[Config, int] = {start_cfg: 0}
    rows: list[list[tuple[dict[Config, Fraction] | None]]] = []
    lost_used = False
    i = 0
    while i < len(configs):
        cfg = configs[i]
        i += 1
        row = []
        finisher = None
        if prune and cfg != end_cfg:
            finisher = next(
                (a for a in range(mdp.n_actions) if all(to_heaven[q][a] for q, _ in cfg)),
                None,
            )
        if finisher is not None:
            if end_cfg not in index:
                index[end_cfg] = len(configs)
                configs.append(end_cfg)
            rows.append([
                {end_cfg: Fraction(1)} if a == finisher else {cfg: Fraction(1)}
                for a in range(mdp.n_actions)
            ])
            continue
        for a in range(mdp.n_actions):
            if prune and any(doomed[q][a] for q, _ in cfg):
                row.append(None)
                lost_used = True
                continue
            dist = config_distribution(mdp, cfg, a)
            for succ in dist:
                if succ not in index:
                    index[succ] = len(configs)
                    configs.append(succ)
            row.append(dist)
        rows.append(row)
        if len(configs) > cap:
            raise CapExceeded(f"more than {cap} configurations at n={n}")

    lost = len(configs) if lost_used else None
    trans = []
    for row in rows:
        trans.append(tuple(
            Distribution.point(lost) if dist is None
            else Distribution.from_mapping({index[c]: p for c, p in dist.items()})
            for dist in row
        ))
    names = [c.key(mdp.state_names) for c in configs]
    labels = [frozenset()] * len(configs)
    labels[0] = frozenset({"start"})
    end = index.get(end_cfg)
    if end is not None:
        labels[end] = labels[end] | {"end"}
    if lost is not None:
        configs.append(None)
        names.append(LOST)
        labels.append(frozenset({"lost"}))
        trans.append(tuple(Distribution.point(lost) for _ in range(mdp.n_actions)))
    product = Mdp(tuple(names), tuple(labels), mdp.action_names, tuple(trans))
    return AbstractProduct(mdp, n, product, tuple(configs), index, 0, end, lost)


@dataclass(frozen=True)
class SyncResult:
    synchronizable: bool
    product: AbstractProduct = field(repr=False)
    winning: frozenset[int] = field(repr=False)
    strategy: Strategy | None = field(repr=False)
    certified: bool | None
    millis: float

    @property
    def reachable_configs(self) -> int:
        return len(self.product)

    def diagnostics(self) -> dict:
        return {
            "n": self.product.n,
            "synchronizable": self.synchronizable,
            "reachable_configs": self.reachable_configs,
            "winning_configs": len(self.winning),
            "strategy_certified": self.certified,
            "solve_millis": round(self.millis, 3),
        }

    def action_for(self, config: Config) -> int:
        """Strategy lookup by configuration (for simulation)."""
        if self.strategy is None:
            raise ValueError("no synchronizing strategy")
        i = self.product.index.get(config)
        if i is None or i not in self.strategy.choice:
            raise ValueError(f"strategy undefined at {config.key(self.product.base.state_names)}")
        return self.strategy.choice[i]


def check_sync(mdp: Mdp, n: int, cap: int | None = None, prune: bool = True) -> SyncResult:
    """Decide whether ``{start: n}`` reaches ``{heaven: n}`` almost surely.

    A positive verdict comes with an extracted strategy that is re-checked on
    its induced Markov chain.
    """
    t0 = time.perf_counter()
    product = build_quotient(mdp, n, cap, prune)
    if product.end is None:
        return SyncResult(False, product, frozenset(), None, None, (time.perf_counter() - t0) * 1e3)
    win = prob1(product.mdp, {product.end})
    ok = product.start in win
    strategy = None
    certified = None
    if ok:
        strategy = extract_strategy(product.mdp, win, {product.end})
        chain = induced_chain(product.mdp, strategy, product.start, absorbing={product.end})
        certified = chain_almost_sure(chain, 0, {chain.index(product.end)})
    return SyncResult(ok, product, win, strategy, certified, (time.perf_counter() - t0) * 1e3)


@dataclass(frozen=True)
class FullProduct:
    """Reachable ordered-tuple product (oracle scale only)."""

    base: Mdp
    n: int
    mdp: Mdp
    tuples: tuple[tuple[int, ...], ...]
    index: dict[tuple[int, ...], int] = field(repr=False)
    start: int
    end: int | None


MAX_FULL_N = 3


def build_full(mdp: Mdp, n: int) -> FullProduct:
    """Unquotiented product over n-tuples, with no pruning."""
    if not 1 <= n <= MAX_FULL_N:
        raise ValueError(f"full product only supported for 1 <= n <= {MAX_FULL_N}")
    start = (mdp.labelled("start"),) * n
    end = (mdp.labelled("heaven"),) * n
    tuples = [start]
    index = {start: 0}
    trans = []
    i = 0
    while i < len(tuples):
        q = tuples[i]
        i += 1
        row = []
        for a in range(mdp.n_actions):
            weights = {}
            for combo in itertools.product(*(tuple(mdp.trans[s][a].items()) for s in q)):
                p = Fraction(1)
                for _, pp in combo:
                    p *= pp
                succ = tuple(s for s, _ in combo)
                if succ not in index:
                    index[succ] = len(tuples)
                    tuples.append(succ)
                weights[index[succ]] = p
            row.append(Distribution.from_mapping(weights))
        trans.append(tuple(row))
    names = tuple("(" + ",".join(mdp.state_names[s] for s in q) + ")" for q in tuples)
    labels = [frozenset()] * len(tuples)
    labels[0] = frozenset({"start"})
    end_id = index.get(end)
    if end_id is not None:
        labels[end_id] = labels[end_id] | {"end"}
    product = Mdp(names, tuple(labels), mdp.action_names, tuple(trans))
    return FullProduct(mdp, n, product, tuple(tuples), index, 0, end_id)


def full_sync(mdp: Mdp, n: int) -> tuple[bool, FullProduct, frozenset[int]]:
    """Synchronization verdict on the tuple product, with its winning set."""
    full = build_full(mdp, n)
    if full.end is None:
        return False, full, frozenset()
    win = prob1(full.mdp, {full.end})
    return full.start in win, full, win


def permutation_closed(full: FullProduct, winning: Iterable[int]) -> bool:
    """Whether the winning tuples are closed under coordinate permutations."""
    win_tuples = {full.tuples[i] for i in winning}
    for q in win_tuples:
        for perm in itertools.permutations(q):
            if perm not in win_tuples:
                return False
    return True
