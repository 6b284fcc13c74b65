"""The explicit synchronizing strategy for games that Player 1 wins.

The strategy reads the current configuration gadget by gadget and proceeds
in phases: start, initialisation check, isolation of one waiting component,
one game round at a time, and the lock-step countdown of the two counters.
"""

from __future__ import annotations

from dataclasses import dataclass

from popsync.countdown import WinTable
from popsync.mdp import Distribution, MarkovChain, Mdp, chain_almost_sure
from popsync.population import Config, config_distribution
from popsync.reduction import GadgetMap, is_safe


class PilotError(ValueError):
    """The pilot has no defined move for a configuration."""


class PilotPreconditionError(PilotError):
    """The pilot was asked to play a game that Player 1 does not win."""


@dataclass(frozen=True)
class PilotContext:
    gm: GadgetMap
    wt: WinTable

    def __post_init__(self) -> None:
        game = self.wt.game
        if set(self.gm.vertices) != set(game.vertices):
            raise ValueError("win table and gadget map come from different games")
        if self.gm.k_mc != max(1, game.init_counter.bit_length()):
            raise ValueError("main counter width does not match the game's initial counter")

    def counter(self, counts: dict[int, int], name: str) -> int | None:
        """Number held by counter ``name`` (``"mc"``/``"ac"``), ``None`` if malformed."""
        value = 0
        for i, (zero, one) in enumerate(self.gm.bits(name)):
            z, o = zero in counts, one in counts
            if z == o:
                return None
            value |= o << i
        return value


def _lowest_bit(x: int) -> int:
    return (x & -x).bit_length() - 1


def pilot_decision(ctx: PilotContext, config: Config) -> tuple[str, int]:
    """The pilot's ``(phase, action)`` for ``config``."""
    gm = ctx.gm
    counts = config.counts()
    heaven = gm.state("heaven")
    if counts.get(heaven) == config.n:
        return "done", gm.action("end")
    if gm.state("hell") in counts:
        raise PilotError("pilot undefined: Hell is marked")
    start = gm.state("start_state")
    if start in counts:
        if len(counts) != 1:
            raise PilotError("pilot undefined: StartState partially marked")
        return "P0 start", gm.action("start")

    for name in ("mc", "ac"):
        for i, (zero, one) in enumerate(gm.bits(name)):
            if zero not in counts and one not in counts:
                return "P1 init check", gm.action(f"{name}_error", i)
    in_game = any(s in counts for s in gm.vertices.values())
    if gm.state("wait") not in counts and gm.state("ready") not in counts and not in_game:
        return "P1 waiting empty", gm.action("end")
    control = [c for c in "WGAB" if gm.state(f"control_{c}") in counts]
    if not control:
        return "P1 init check", gm.action("control_error")
    if len(control) != 1:
        raise PilotError(f"pilot undefined: control gadget at {control}")

    loc = control[0]
    if loc == "W":
        if counts.get(gm.state("ready"), 0) == 1:
            return "P2 isolate", gm.action("go")
        return "P2 isolate", gm.action("wait")

    mc = ctx.counter(counts, "mc")
    ac = ctx.counter(counts, "ac")
    if mc is None or ac is None:
        raise PilotError("pilot undefined: counter does not hold a number")
    if loc == "G":
        if mc == 0:
            return "P3 game", gm.action("win")
        marked = [v for v, s in gm.vertices.items() if s in counts]
        if len(marked) != 1:
            raise PilotError(f"pilot undefined: game vertices marked {marked}")
        v = marked[0]
        d = ctx.wt.move.get((v, mc))
        if d is None:
            raise PilotPreconditionError(f"Player 1 has no winning move at ({v}, {mc})")
        return "P3 game", gm.action("game_move", v, d)
    if loc == "A":
        if ac == 0:
            return "P4 countdown", gm.action("next")
        if mc == 0:
            raise PilotError("pilot undefined: MC exhausted before AC")
        return "P4 countdown", gm.action("mc_dec", _lowest_bit(mc))
    return "P5 countdown", gm.action("ac_dec", _lowest_bit(ac))


def pilot_action(ctx: PilotContext, config: Config) -> int:
    """Next action of the pilot; raises :class:`PilotError` if none is safe."""
    phase, a = pilot_decision(ctx, config)
    if not is_safe(ctx.gm, config.marked(), a):
        raise PilotError(f"pilot undefined: {phase} action {ctx.gm.action_role[a]} is not safe")
    return a


@dataclass(frozen=True)
class PilotCertificate:
    certified: bool
    reachable_configs: int
    chain: MarkovChain


def pilot_chain(mdp: Mdp, ctx: PilotContext, n: int) -> MarkovChain:
    """Markov chain over configurations reachable from ``{start: n}`` under the pilot.

    The all-Heaven configuration is kept absorbing.
    """
    start = Config.uniform(ctx.gm.state("start_state"), n)
    end = Config.uniform(ctx.gm.state("heaven"), n)
    order = [start]
    index = {start: 0}
    dists = []
    i = 0
    while i < len(order):
        cfg = order[i]
        i += 1
        if cfg == end:
            dists.append({cfg: 1})
            continue
        try:
            dist = config_distribution(mdp, cfg, pilot_action(ctx, cfg))
        except PilotError as exc:
            raise type(exc)(f"{exc} [config {cfg.key(mdp.state_names)}]") from exc
        for succ in dist:
            if succ not in index:
                index[succ] = len(order)
                order.append(succ)
        dists.append(dist)
    nxt = tuple(Distribution.from_mapping({index[c]: p for c, p in d.items()}) for d in dists)
    return MarkovChain(tuple(order), nxt)


def verify_pilot(mdp: Mdp, ctx: PilotContext, n: int) -> PilotCertificate:
    """Certify that the pilot synchronizes ``n`` components almost surely."""
    if not ctx.wt.player1_wins:
        raise PilotPreconditionError("Player 1 does not win this game; there is no pilot")
    chain = pilot_chain(mdp, ctx, n)
    end = Config.uniform(ctx.gm.state("heaven"), n)
    if end not in chain.states:
        return PilotCertificate(False, len(chain), chain)
    ok = chain_almost_sure(chain, 0, {chain.index(end)})
    return PilotCertificate(ok, len(chain), chain)
