"""Seeded sampling of strategy-driven runs on the n-fold product."""

from __future__ import annotations

import random
from collections.abc import Callable, Mapping
from dataclasses import dataclass
from fractions import Fraction
from statistics import fmean

from popsync.mdp import Distribution, Mdp
from popsync.population import Config

MASK64 = (1 << 64) - 1
TWO64 = 1 << 64

StrategyLike = Callable[[Config], int] | Mapping[Config, int]


def splitmix64(x: int) -> int:
    """SplitMix64 output function (golden-gamma increment, Stafford variant 13 mix)."""
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def run_seed(seed: int, index: int) -> int:
    return splitmix64((seed + index) & MASK64)


class Sampler:
    """Draws successors with exact rational thresholds on 64-bit uniforms.

    Successor ``i`` is chosen for the first ``i`` with
    ``u < ceil(cum_i * 2**64)``, i.e. ``u / 2**64 < cum_i`` exactly.
    """

    def __init__(self, seed: int) -> None:
        self._rng = random.Random(seed)
        self._cache: dict[Distribution, tuple[int, ...]] = {}

    def _thresholds(self, dist: Distribution) -> tuple[int, ...]:
        th = self._cache.get(dist)
        if th is None:
            cum = Fraction(0)
            out = []
            for p in dist.prob:
                cum += p
                out.append(-((-cum.numerator * TWO64) // cum.denominator))
            th = self._cache[dist] = tuple(out)
        return th

    def draw(self, dist: Distribution) -> int:
        if len(dist.succ) == 1:
            return dist.succ[0]
        u = self._rng.getrandbits(64)
        for s, t in zip(dist.succ, self._thresholds(dist)):
            if u < t:
                return s
        return dist.succ[-1]


@dataclass(frozen=True)
class SimOutcome:
    reached_end: bool
    steps: int
    final_config: Config
    trace: list[tuple[Config, int]] | None = None


def _as_callable(strategy: StrategyLike) -> Callable[[Config], int]:
    if callable(strategy):
        return strategy
    table = strategy

    def lookup(cfg: Config) -> int:
        try:
            return table[cfg]
        except KeyError:
            raise ValueError(f"strategy undefined at {cfg}") from None

    return lookup


def run(
    mdp: Mdp,
    n: int,
    strategy: StrategyLike,
    seed: int,
    max_steps: int,
    trace: bool = False,
    initial: Config | None = None,
) -> SimOutcome:
    """Play ``strategy`` from ``{start: n}`` (or ``initial``) until End or the budget runs out.

    Every component samples its successor independently.
    """
    choose = _as_callable(strategy)
    sampler = Sampler(seed)
    end = Config.uniform(mdp.labelled("heaven"), n)
    cfg = initial if initial is not None else Config.uniform(mdp.labelled("start"), n)
    if cfg.n != n:
        raise ValueError("initial configuration has the wrong population size")
    steps = 0
    log: list[tuple[Config, int]] | None = [] if trace else None
    while cfg != end and steps < max_steps:
        a = choose(cfg)
        if log is not None:
            log.append((cfg, a))
        counts: dict[int, int] = {}
        for q, c in cfg:
            d = mdp.trans[q][a]
            for _ in range(c):
                t = sampler.draw(d)
                counts[t] = counts.get(t, 0) + 1
        cfg = Config.from_counts(counts)
        steps += 1
    return SimOutcome(cfg == end, steps, cfg, log)


@dataclass(frozen=True)
class Estimate:
    runs: int
    successes: int
    mean_steps: float
    min_steps: int
    max_steps: int

    @property
    def success_rate(self) -> Fraction:
        return Fraction(self.successes, self.runs)

    def to_document(self) -> dict:
        return {
            "runs": self.runs,
            "successes": self.successes,
            "success_rate": str(self.success_rate),
            "mean_steps": self.mean_steps,
            "min_steps": self.min_steps,
            "max_steps": self.max_steps,
        }


def estimate(
    mdp: Mdp,
    n: int,
    strategy: StrategyLike,
    runs: int,
    seed: int,
    max_steps: int,
) -> Estimate:
    """Aggregate ``runs`` independent runs; run ``i`` uses ``run_seed(seed, i)``."""
    if runs < 1:
        raise ValueError("runs must be positive")
    outcomes = [run(mdp, n, strategy, run_seed(seed, i), max_steps) for i in range(runs)]
    steps = [o.steps for o in outcomes]
    return Estimate(
        runs,
        sum(o.reached_end for o in outcomes),
        fmean(steps),
        min(steps),
        max(steps),
    )


def default_max_steps(c0: int, n: int, k_mc: int, k_ac: int) -> int:
    return 10 * (c0 + 1) * n * (k_mc + k_ac + 4)


def format_trace(outcome: SimOutcome, mdp: Mdp) -> str:
    """One ``config_key<TAB>action_name`` line per step."""
    if outcome.trace is None:
        raise ValueError("run was not traced")
    return "".join(
        f"{cfg.key(mdp.state_names)}\t{mdp.action_names[a]}\n" for cfg, a in outcome.trace
    )
