import re

import pytest

from popsync.countdown import CountdownGame, parse_game
from popsync.mdp import validate
from popsync.reduction import (
    ANGELIC,
    DAEMONIC,
    EXPLICIT,
    IGNORE,
    BehaviorEntry,
    BehaviorLedger,
    CompileError,
    behavior,
    compile_game,
    export_dot,
    goes_to,
    is_safe,
)


def counter_game(counter: str, k: int) -> CountdownGame:
    """A game whose MC (or AC) counter has exactly ``k`` bits."""
    top = 2**k - 1
    if counter == "mc":
        return CountdownGame.from_edges([("v", 1, "v")], "v", top)
    return CountdownGame.from_edges([("v", top, "v")], "v", 1)


def holding(gm, counter: str, c: int) -> set[int]:
    return {pair[(c >> i) & 1] for i, pair in enumerate(gm.bits(counter))}


def value_of(gm, counter: str, marked: set[int]) -> int:
    value = 0
    for i, (zero, one) in enumerate(gm.bits(counter)):
        assert (zero in marked) != (one in marked)
        value |= (one in marked) << i
    return value


def apply(mdp, marked: set[int], a: int) -> set[int]:
    return {t for s in marked for t in mdp.trans[s][a].succ}


def test_branching_counts(branching):
    mdp, gm = compile_game(branching)
    assert (gm.k_mc, gm.k_ac) == (1, 2)
    assert mdp.n_states == 17
    assert mdp.n_actions == 15
    assert gm.min_sync_n == 5
    assert validate(mdp) == []


def test_count_formulas(game_corpus):
    for _, game in game_corpus:
        mdp, gm = compile_game(game)
        assert gm.k_mc == max(1, game.init_counter.bit_length())
        assert gm.k_ac == max(1, game.d_max.bit_length())
        assert mdp.n_states == 9 + len(game.vertices) + 2 * (gm.k_mc + gm.k_ac)
        assert mdp.n_actions == 7 + len(game.move_labels()) + 2 * gm.k_mc + 2 * gm.k_ac
        assert gm.min_sync_n == 2 + gm.k_mc + gm.k_ac
        assert len(gm.start_targets) == gm.min_sync_n


def test_heaven_hell_absorbing(game_corpus):
    for _, game in game_corpus[:10]:
        mdp, gm = compile_game(game)
        for name in ("Heaven", "Hell"):
            for a in range(mdp.n_actions):
                assert behavior(mdp, gm, name, a).kind == IGNORE
                assert mdp.trans[mdp.state(name)][a].succ == (mdp.state(name),)


def test_behavior_examples(branching):
    mdp, gm = compile_game(branching)
    assert behavior(mdp, gm, "MC.bit0=0", "MC.dec0").kind == DAEMONIC
    assert behavior(mdp, gm, "Wait", "win").kind == IGNORE
    assert behavior(mdp, gm, "W", "move(v0,1)").kind == DAEMONIC
    with pytest.raises(ValueError):
        behavior(mdp, gm, "nowhere", "win")


def test_behavior_table_spot_checks(branching):
    mdp, gm = compile_game(branching)
    S = mdp.state

    def succ(state, action):
        return {mdp.state_names[t] for t in mdp.trans[S(state)][mdp.action(action)].succ}

    assert succ("StartState", "start") == {"Wait", "W", "MC.bit0=0", "AC.bit0=0", "AC.bit1=0"}
    assert succ("Wait", "start") == {"Hell"}
    assert succ("Wait", "wait") == {"Wait", "Ready"}
    assert succ("Ready", "wait") == {"Wait"}
    assert succ("W", "wait") == {"W"}
    assert succ("G", "wait") == {"Hell"}
    assert succ("Ready", "go") == {"game.v0"}
    assert succ("MC.bit0=0", "go") == {"MC.bit0=1"}  # c0 = 1
    assert succ("MC.bit0=1", "go") == {"Hell"}
    assert succ("W", "go") == {"G"}
    assert succ("game.v0", "move(v0,1)") == {"game.v0", "game.u"}
    assert succ("game.u", "move(v0,1)") == {"Hell"}
    assert succ("AC.bit0=0", "move(v0,1)") == {"AC.bit0=1"}
    assert succ("AC.bit1=0", "move(v0,1)") == {"AC.bit1=0"}
    assert succ("AC.bit0=0", "move(u,2)") == {"AC.bit0=0"}
    assert succ("AC.bit1=0", "move(u,2)") == {"AC.bit1=1"}
    assert succ("G", "move(u,2)") == {"A"}
    assert succ("A", "MC.dec0") == {"B"}
    assert succ("B", "AC.dec1") == {"A"}
    assert succ("AC.bit0=1", "AC.dec1") == {"Hell"}
    assert succ("A", "next") == {"G"}
    assert succ("AC.bit1=1", "next") == {"Hell"}
    assert succ("G", "win") == {"W"}
    assert succ("game.u", "win") == {"Heaven"}
    assert succ("MC.bit0=1", "win") == {"Hell"}
    assert succ("Wait", "end") == {"Hell"}
    assert succ("W", "end") == {"Heaven"}
    assert succ("game.v0", "end") == {"Hell"}
    assert succ("Wait", "MC.error0") == {"Heaven"}
    assert succ("MC.bit0=1", "MC.error0") == {"Hell"}
    assert succ("StartState", "MC.error0") == {"Hell"}
    assert succ("StartState", "end") == {"Hell"}
    for c in "WGAB":
        assert succ(c, "error") == {"Hell"}
    assert succ("Wait", "error") == {"Heaven"}


def test_literal_control_error_scope(branching):
    mdp, gm = compile_game(branching, literal_control_error=True)
    assert behavior(mdp, gm, "W", "error").kind == DAEMONIC
    for c in "GAB":
        assert behavior(mdp, gm, c, "error").kind == ANGELIC
    assert behavior(mdp, gm, "StartState", "error").kind == DAEMONIC


def test_literal_end_scope(branching):
    mdp, gm = compile_game(branching, literal_end=True)
    assert behavior(mdp, gm, "game.v0", "end").kind == ANGELIC


def test_trans_agrees_with_behavior(game_corpus):
    for _, game in game_corpus[:15]:
        mdp, gm = compile_game(game)
        heaven, hell = gm.state("heaven"), gm.state("hell")
        for s in range(mdp.n_states):
            for a in range(mdp.n_actions):
                e = gm.behaviors[s][a]
                d = mdp.trans[s][a]
                assert d.succ == e.resolve(s, heaven, hell)
                assert all(p == d.prob[0] for p in d.prob)


@pytest.mark.parametrize("counter", ["mc", "ac"])
@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_unique_safe_decrement(counter, k):
    mdp, gm = compile_game(counter_game(counter, k))
    assert len(gm.bits(counter)) == k
    decs = [gm.action(f"{counter}_dec", i) for i in range(k)]
    for c in range(2**k):
        marked = holding(gm, counter, c)
        steps = 0
        while True:
            safe = [a for a in decs if is_safe(gm, marked, a)]
            if not safe:
                break
            assert len(safe) == 1
            marked = apply(mdp, marked, safe[0])
            steps += 1
            assert value_of(gm, counter, marked) == c - steps
        assert steps == c
        assert value_of(gm, counter, marked) == 0


def test_four_bit_counter_holding_six():
    mdp, gm = compile_game(counter_game("mc", 4))
    marked = holding(gm, "mc", 6)
    safe = [i for i in range(4) if is_safe(gm, marked, gm.action("mc_dec", i))]
    assert safe == [1]
    after = apply(mdp, marked, gm.action("mc_dec", 1))
    assert after == holding(gm, "mc", 5)
    assert {mdp.state_names[s] for s in after} == {"MC.bit0=1", "MC.bit1=0", "MC.bit2=1", "MC.bit3=0"}


@pytest.mark.parametrize("k", [1, 2, 3])
def test_set_requires_zero(k):
    top = 2**k - 1
    game = CountdownGame.from_edges([("v", top, "v")], "v", top)
    mdp, gm = compile_game(game)
    for counter, a, value in (("mc", gm.action("go"), top), ("ac", gm.action("game_move", "v", top), top)):
        for c in range(2**k):
            marked = holding(gm, counter, c)
            assert is_safe(gm, marked, a) == (c == 0)
        assert value_of(gm, counter, apply(mdp, holding(gm, counter, 0), a)) == value


def test_ledger_reports_conflicts():
    led = BehaviorLedger(3, 1)
    led.put(0, 0, goes_to(1), EXPLICIT, "rule one")
    led.put(0, 0, goes_to(1), EXPLICIT, "rule one again")
    with pytest.raises(CompileError, match=r"rule one.*rule two"):
        led.put(0, 0, BehaviorEntry(DAEMONIC), EXPLICIT, "rule two")


def test_ledger_requires_totality():
    led = BehaviorLedger(2, 1)
    led.put(0, 0, goes_to(1), EXPLICIT, "only one")
    with pytest.raises(CompileError, match="undefined"):
        led.table()


def test_behavior_entry_validation():
    with pytest.raises(ValueError):
        BehaviorEntry("successors")


def parse_dot(text: str) -> tuple[set[str], list[tuple[str, str, str]]]:
    nodes = set(re.findall(r"^\s*(s\d+) \[label=", text, re.M))
    edges = re.findall(r"^\s*(s\d+) -> (s\d+) \[label=\"([^\"]*)\"", text, re.M)
    return nodes, edges


def test_dot_export(branching):
    mdp, gm = compile_game(branching)
    text = export_dot(mdp, gm)
    assert text == export_dot(*compile_game(branching))
    nodes, edges = parse_dot(text)
    assert len(nodes) == mdp.n_states
    assert all(a in nodes and b in nodes for a, b, _ in edges)
    assert text.count("{") == text.count("}")
    assert "color=red" in text and "color=green" in text


def test_dot_export_without_edges():
    mdp, gm = compile_game(parse_game("init v 2"))
    text = export_dot(mdp, gm)
    for cluster in ("waiting", "game", "MC", "AC", "control"):
        assert f"subgraph cluster_{cluster}" in text
    assert len(parse_dot(text)[0]) == mdp.n_states


def test_gadget_document(branching):
    _, gm = compile_game(branching)
    doc = gm.to_document()
    assert doc["min_sync_n"] == 5 and doc["k_mc"] == 1 and doc["k_ac"] == 2
    assert len(doc["states"]) == 17 and len(doc["actions"]) == 15
