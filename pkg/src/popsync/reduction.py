"""Compile a countdown game into the gadget MDP whose populations must simulate it.

The behaviour of every (state, action) pair is first collected in a
:class:`BehaviorLedger` as one of four kinds (explicit successors, angelic,
daemonic, ignore) together with the rule that declared it, and only then
resolved into distributions.  Precedence, lowest first:

* gadget defaults (control states: daemonic; everything else: ignore),
* explicit declarations (depicted gadget edges and the action-wide
  angelic/daemonic clauses); two different explicit entries for one pair
  are a :class:`CompileError`,
* repairs: every action other than ``start`` is daemonic at the start state,
  and ``end`` is daemonic at game vertices (otherwise moving every waiting
  component into the game at once and playing ``end`` wins any game),
* Heaven and Hell ignore every action.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import NamedTuple

from popsync.countdown import CountdownGame
from popsync.mdp import Distribution, Mdp

ANGELIC = "angelic"
DAEMONIC = "daemonic"
IGNORE = "ignore"
SUCCESSORS = "successors"

DEFAULT, EXPLICIT, REPAIR, ABSORBING = range(4)

CONTROL = ("W", "G", "A", "B")


class CompileError(ValueError):
    pass


@dataclass(frozen=True)
class BehaviorEntry:
    kind: str
    successors: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if (self.kind == SUCCESSORS) != bool(self.successors):
            raise ValueError("successors must be given exactly for kind 'successors'")

    def resolve(self, state: int, heaven: int, hell: int) -> tuple[int, ...]:
        if self.kind == ANGELIC:
            return (heaven,)
        if self.kind == DAEMONIC:
            return (hell,)
        if self.kind == IGNORE:
            return (state,)
        return self.successors


def goes_to(*states: int) -> BehaviorEntry:
    return BehaviorEntry(SUCCESSORS, tuple(sorted(set(states))))


ANGEL = BehaviorEntry(ANGELIC)
DAEMON = BehaviorEntry(DAEMONIC)
STAY = BehaviorEntry(IGNORE)


class _Decl(NamedTuple):
    level: int
    entry: BehaviorEntry
    source: str


class BehaviorLedger:
    """Collects behaviour declarations and applies the precedence rules."""

    def __init__(self, n_states: int, n_actions: int) -> None:
        self.n_states = n_states
        self.n_actions = n_actions
        self._decl: dict[tuple[int, int], _Decl] = {}

    def put(self, s: int, a: int, entry: BehaviorEntry, level: int, source: str) -> None:
        cur = self._decl.get((s, a))
        if cur is None or level > cur.level:
            self._decl[(s, a)] = _Decl(level, entry, source)
        elif level == cur.level and level != DEFAULT and entry != cur.entry:
            raise CompileError(
                f"conflicting behaviour for state {s}, action {a}: "
                f"{cur.entry.kind} from [{cur.source}] vs {entry.kind} from [{source}]"
            )

    def explicit(self, s: int, a: int, entry: BehaviorEntry, source: str) -> None:
        self.put(s, a, entry, EXPLICIT, source)

    def every_other(self, a: int, entry: BehaviorEntry, listed: set[int], source: str) -> None:
        for s in range(self.n_states):
            if s not in listed:
                self.put(s, a, entry, EXPLICIT, source)

    def entry(self, s: int, a: int) -> BehaviorEntry:
        return self._decl[(s, a)].entry

    def source(self, s: int, a: int) -> str:
        return self._decl[(s, a)].source

    def table(self) -> tuple[tuple[BehaviorEntry, ...], ...]:
        missing = [
            (s, a) for s in range(self.n_states) for a in range(self.n_actions)
            if (s, a) not in self._decl
        ]
        if missing:
            raise CompileError(f"behaviour undefined for {len(missing)} pairs, e.g. {missing[0]}")
        return tuple(
            tuple(self._decl[(s, a)].entry for a in range(self.n_actions))
            for s in range(self.n_states)
        )


def bitlength(x: int) -> int:
    return x.bit_length()


def bit(x: int, i: int) -> int:
    return (x >> i) & 1


@dataclass(frozen=True)
class GadgetMap:
    """Roles of the compiled states and actions plus counter widths.

    Roles are tuples such as ``("wait",)``, ``("game_vertex", "v0")``,
    ``("mc_bit", 1, 0)`` or ``("game_move", "v0", 2)``.
    """

    state_role: tuple[tuple, ...]
    action_role: tuple[tuple, ...]
    k_mc: int
    k_ac: int
    behaviors: tuple[tuple[BehaviorEntry, ...], ...] = field(repr=False)
    literal_control_error: bool = False
    literal_end: bool = False
    _sidx: dict = field(init=False, repr=False, compare=False)
    _aidx: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_sidx", {r: i for i, r in enumerate(self.state_role)})
        object.__setattr__(self, "_aidx", {r: i for i, r in enumerate(self.action_role)})

    @property
    def min_sync_n(self) -> int:
        return 2 + self.k_mc + self.k_ac

    def state(self, *role) -> int:
        return self._sidx[tuple(role)]

    def action(self, *role) -> int:
        return self._aidx[tuple(role)]

    def has_action(self, *role) -> bool:
        return tuple(role) in self._aidx

    def bits(self, counter: str) -> list[tuple[int, int]]:
        """``[(bit_i^0, bit_i^1) for each bit i]`` of counter ``"mc"`` or ``"ac"``."""
        k = self.k_mc if counter == "mc" else self.k_ac
        return [(self.state(f"{counter}_bit", i, 0), self.state(f"{counter}_bit", i, 1)) for i in range(k)]

    @property
    def vertices(self) -> dict[str, int]:
        return {r[1]: i for i, r in enumerate(self.state_role) if r[0] == "game_vertex"}

    @property
    def start_targets(self) -> list[int]:
        """States that ``start`` spreads the population over."""
        a = self.action("start")
        return list(self.behaviors[self.state("start_state")][a].successors)

    def to_document(self) -> dict:
        return {
            "k_mc": self.k_mc,
            "k_ac": self.k_ac,
            "min_sync_n": self.min_sync_n,
            "literal_control_error": self.literal_control_error,
            "literal_end": self.literal_end,
            "states": [{"id": i, "role": list(r)} for i, r in enumerate(self.state_role)],
            "actions": [{"id": i, "role": list(r)} for i, r in enumerate(self.action_role)],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_document(), indent=1, sort_keys=True) + "\n"


def _state_name(role: tuple) -> str:
    kind = role[0]
    if kind == "game_vertex":
        return f"game.{role[1]}"
    if kind in ("mc_bit", "ac_bit"):
        return f"{kind[:2].upper()}.bit{role[1]}={role[2]}"
    return {
        "start_state": "StartState", "heaven": "Heaven", "hell": "Hell",
        "wait": "Wait", "ready": "Ready",
        "control_W": "W", "control_G": "G", "control_A": "A", "control_B": "B",
    }[kind]


def _action_name(role: tuple) -> str:
    kind = role[0]
    if kind == "game_move":
        return f"move({role[1]},{role[2]})"
    if kind in ("mc_dec", "ac_dec", "mc_error", "ac_error"):
        counter, what = kind.split("_")
        return f"{counter.upper()}.{what}{role[1]}"
    if kind == "control_error":
        return "error"
    return kind


def compile_game(
    game: CountdownGame,
    literal_control_error: bool = False,
    literal_end: bool = False,
) -> tuple[Mdp, GadgetMap]:
    """Build the gadget MDP for ``game``.

    With ``literal_control_error`` the control ``error`` action is daemonic
    only at ``W``; by default it is daemonic at all four control states.
    With ``literal_end`` the ``end`` action stays angelic at game vertices.
    Both literal variants make every game synchronizable and exist only to
    document that.
    """
    k_mc = max(1, bitlength(game.init_counter))
    k_ac = max(1, bitlength(game.d_max))

    state_role: list[tuple] = [("start_state",), ("heaven",), ("hell",), ("wait",), ("ready",)]
    state_role += [("game_vertex", v) for v in game.vertices]
    state_role += [("mc_bit", i, j) for i in range(k_mc) for j in (0, 1)]
    state_role += [("ac_bit", i, j) for i in range(k_ac) for j in (0, 1)]
    state_role += [(f"control_{c}",) for c in CONTROL]

    action_role: list[tuple] = [("start",), ("end",), ("wait",), ("go",), ("win",), ("next",), ("control_error",)]
    action_role += [("game_move", v, d) for v, d in game.move_labels()]
    action_role += [("mc_dec", i) for i in range(k_mc)] + [("mc_error", i) for i in range(k_mc)]
    action_role += [("ac_dec", i) for i in range(k_ac)] + [("ac_error", i) for i in range(k_ac)]

    S = {r: i for i, r in enumerate(state_role)}
    A = {r: i for i, r in enumerate(action_role)}
    start, heaven, hell = S[("start_state",)], S[("heaven",)], S[("hell",)]
    wait, ready = S[("wait",)], S[("ready",)]
    W, G, Ac, B = (S[(f"control_{c}",)] for c in CONTROL)
    vertex = {v: S[("game_vertex", v)] for v in game.vertices}
    mc = [(S[("mc_bit", i, 0)], S[("mc_bit", i, 1)]) for i in range(k_mc)]
    ac = [(S[("ac_bit", i, 0)], S[("ac_bit", i, 1)]) for i in range(k_ac)]

    led = BehaviorLedger(len(state_role), len(action_role))
    for a in range(len(action_role)):
        for s in range(len(state_role)):
            led.put(s, a, DAEMON if s in (W, G, Ac, B) else STAY, DEFAULT, "gadget default")

    def set_counter(a: int, bits: list[tuple[int, int]], value: int, source: str) -> None:
        for i, (zero, one) in enumerate(bits):
            led.explicit(zero, a, goes_to(bits[i][bit(value, i)]), f"{source}: set bit {i}")
            led.explicit(one, a, DAEMON, f"{source}: set requires zero")

    def decrement(a: int, bits: list[tuple[int, int]], i: int, source: str) -> None:
        zero, one = bits[i]
        led.explicit(one, a, goes_to(zero), f"{source}: bit {i} 1->0")
        led.explicit(zero, a, DAEMON, f"{source}: bit {i} is 0")
        for j in range(i):
            led.explicit(bits[j][0], a, goes_to(bits[j][1]), f"{source}: borrow bit {j} 0->1")
            led.explicit(bits[j][1], a, DAEMON, f"{source}: lower bit {j} must be 0 (repair D4)")

    a = A[("start",)]
    led.explicit(start, a, goes_to(wait, W, *(z for z, _ in mc), *(z for z, _ in ac)), "start: initialise gadgets")
    led.every_other(a, DAEMON, {start}, "start: daemonic elsewhere")

    a = A[("end",)]
    led.explicit(wait, a, DAEMON, "end: waiting gadget")
    led.explicit(ready, a, DAEMON, "end: waiting gadget")
    led.every_other(a, ANGEL, {wait, ready}, "end: angelic elsewhere")

    a = A[("wait",)]
    led.explicit(wait, a, goes_to(wait, ready), "waiting gadget")
    led.explicit(ready, a, goes_to(wait), "waiting gadget")
    led.explicit(W, a, goes_to(W), "control: wait loop")

    a = A[("go",)]
    led.explicit(ready, a, goes_to(vertex[game.init_vertex]), "go: Ready to v0")
    set_counter(a, mc, game.init_counter, "go sets MC to c0")
    led.explicit(W, a, goes_to(G), "control: go")

    for (v, d) in game.move_labels():
        a = A[("game_move", v, d)]
        led.explicit(vertex[v], a, goes_to(*(vertex[t] for t in game.moves(v)[d])), f"move({v},{d})")
        for u, su in vertex.items():
            if u != v:
                led.explicit(su, a, DAEMON, f"move({v},{d}): other vertex")
        set_counter(a, ac, d, f"move({v},{d}) sets AC")
        led.explicit(G, a, goes_to(Ac), "control: game move")

    for i in range(k_mc):
        a = A[("mc_dec", i)]
        decrement(a, mc, i, f"MC.dec{i}")
        led.explicit(Ac, a, goes_to(B), "control: MC decrement")
        a = A[("mc_error", i)]
        led.explicit(mc[i][0], a, DAEMON, f"MC.error{i}")
        led.explicit(mc[i][1], a, DAEMON, f"MC.error{i}")
        led.every_other(a, ANGEL, set(mc[i]), f"MC.error{i}: angelic elsewhere")
    for i in range(k_ac):
        a = A[("ac_dec", i)]
        decrement(a, ac, i, f"AC.dec{i}")
        led.explicit(B, a, goes_to(Ac), "control: AC decrement")
        a = A[("ac_error", i)]
        led.explicit(ac[i][0], a, DAEMON, f"AC.error{i}")
        led.explicit(ac[i][1], a, DAEMON, f"AC.error{i}")
        led.every_other(a, ANGEL, set(ac[i]), f"AC.error{i}: angelic elsewhere")

    a = A[("next",)]
    for _, one in ac:
        led.explicit(one, a, DAEMON, "next: AC must hold 0")
    led.explicit(Ac, a, goes_to(G), "control: next")

    a = A[("win",)]
    for s in vertex.values():
        led.explicit(s, a, ANGEL, "win: angelic on game")
    for _, one in mc:
        led.explicit(one, a, DAEMON, "win: MC must hold 0")
    led.explicit(G, a, goes_to(W), "control: win")

    a = A[("control_error",)]
    guarded = {W} if literal_control_error else {W, G, Ac, B}
    for s in guarded:
        led.explicit(s, a, DAEMON, "control error")
    led.every_other(a, ANGEL, guarded, "control error: angelic elsewhere")

    for a, role in enumerate(action_role):
        if role != ("start",):
            led.put(start, a, DAEMON, REPAIR, "repair D2: only start at StartState")
    if not literal_end:
        for s in vertex.values():
            led.put(s, A[("end",)], DAEMON, REPAIR, "repair: end only after the game gadget is empty")
    for s in (heaven, hell):
        for a in range(len(action_role)):
            led.put(s, a, STAY, ABSORBING, "Heaven/Hell absorbing")

    behaviors = led.table()
    trans = tuple(
        tuple(Distribution.uniform(e.resolve(s, heaven, hell)) for e in row)
        for s, row in enumerate(behaviors)
    )
    labels = [frozenset()] * len(state_role)
    labels[start] = frozenset({"start"})
    labels[heaven] = frozenset({"heaven"})
    labels[hell] = frozenset({"hell"})
    mdp = Mdp(
        tuple(_state_name(r) for r in state_role),
        tuple(labels),
        tuple(_action_name(r) for r in action_role),
        trans,
    )
    gm = GadgetMap(
        tuple(state_role), tuple(action_role), k_mc, k_ac, behaviors, literal_control_error, literal_end
    )
    return mdp, gm


def behavior(mdp: Mdp, gm: GadgetMap, state: int | str, action: int | str) -> BehaviorEntry:
    """Ledger entry for a (state, action) pair, given by id or display name."""
    s = mdp.state(state) if isinstance(state, str) else state
    a = mdp.action(action) if isinstance(action, str) else action
    if not (0 <= s < mdp.n_states and 0 <= a < mdp.n_actions):
        raise KeyError(f"unknown state/action ({state!r}, {action!r})")
    return gm.behaviors[s][a]


def is_safe(gm: GadgetMap, marked, a: int) -> bool:
    """True iff ``a`` is daemonic for none of the ``marked`` states."""
    return all(gm.behaviors[s][a].kind != DAEMONIC for s in marked)


_CLUSTERS = (
    ("waiting", ("wait", "ready")),
    ("game", ("game_vertex",)),
    ("MC", ("mc_bit",)),
    ("AC", ("ac_bit",)),
    ("control", ("control_W", "control_G", "control_A", "control_B")),
)


def export_dot(mdp: Mdp, gm: GadgetMap) -> str:
    """Gadget-clustered DOT graph; ignored actions are left out.

    Angelic edges are dashed green, daemonic edges dotted red.
    """
    heaven, hell = gm.state("heaven"), gm.state("hell")
    out = ["digraph M {", "  rankdir=LR;", "  node [shape=ellipse];"]

    def node(s: int) -> str:
        return f'    s{s} [label="{mdp.state_names[s]}"];'

    for s in (gm.state("start_state"), heaven, hell):
        out.append(node(s)[2:])
    for name, kinds in _CLUSTERS:
        out.append(f"  subgraph cluster_{name} {{")
        out.append(f'    label="{name}";')
        out.extend(node(s) for s, r in enumerate(gm.state_role) if r[0] in kinds)
        out.append("  }")

    for s in range(mdp.n_states):
        if s in (heaven, hell):
            continue
        grouped: dict[tuple[int, str], list[str]] = defaultdict(list)
        for a, e in enumerate(gm.behaviors[s]):
            if e.kind == IGNORE:
                continue
            for t in e.resolve(s, heaven, hell):
                grouped[(t, e.kind)].append(mdp.action_names[a])
        for (t, kind), names in sorted(grouped.items()):
            style = {ANGELIC: ", style=dashed, color=green", DAEMONIC: ", style=dotted, color=red"}.get(kind, "")
            out.append(f'  s{s} -> s{t} [label="{",".join(names)}"{style}];')
    out.append("}")
    return "\n".join(out) + "\n"
