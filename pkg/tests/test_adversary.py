from __future__ import annotations

import pytest

from bdsim.adversary import AdversaryPlan, Equivocator, PathForger, Silent, Strategy, make_byzantine
from bdsim.config import ModificationConfig, preset
from bdsim.errors import InvalidParams
from bdsim.node import Node
from bdsim.props import check_brb
from bdsim.sim import run
from bdsim.topology import Graph, TopologySpec, generate_regular_graph
from bdsim.wire import Message, MessageType

ECHO = MessageType.ECHO


def test_plan_parse_and_validate():
    plan = AdversaryPlan.parse("3:silent, 5:mutate")
    assert plan.corrupt == {3: Strategy.SILENT, 5: Strategy.MUTATE}
    assert str(plan) == "3:silent,5:mutate"
    assert AdversaryPlan.parse("").corrupt == {}
    with pytest.raises(InvalidParams):
        plan.validate(10, 1)
    with pytest.raises(InvalidParams):
        AdversaryPlan.parse("12:silent").validate(10, 1)
    with pytest.raises(InvalidParams):
        AdversaryPlan.parse("1:teleport")


def test_silent_drops_everything():
    s = make_byzantine("silent", 2, [1, 3], 4, 1, ModificationConfig(), 0)
    assert isinstance(s, Silent)
    assert s.on_message(1, Message(ECHO, 1, 0, 0, 0, b"p")) == []
    assert s.start(b"p") == []


def test_equivocator_sends_two_payloads():
    eq = make_byzantine("equivocate", 0, [2, 3], 4, 1, ModificationConfig(), 0)
    assert isinstance(eq, Equivocator)
    sends = [a for a in eq.start(b"A") if a.message.mtype is MessageType.SEND]
    payloads = {a.target: a.message.payload for a in sends}
    assert payloads[2] != payloads[3]


def test_equivocating_source_cannot_split_correct_nodes():
    g = generate_regular_graph(TopologySpec(10, 3, 1, 4))
    for name in ("bd", "bdopt", "latbdw", "bdw"):
        plan = AdversaryPlan({0: Strategy.EQUIVOCATE})
        rep = run(g, 1, preset(name), plan, seed=1)
        assert check_brb(rep, plan) == []
        delivered = {d for v in rep.correct for d in rep.deliveries[v]}
        assert len(delivered) <= 1


def test_forged_duplicate_path_is_dropped():
    cfg = ModificationConfig()
    node = Node(4, [9], 10, 1, cfg)
    assert node.on_message(9, Message(ECHO, 1, 0, 0, 0, b"p", None, (9, 9))) == []
    assert node.malformed == 1


def test_path_forger_traffic_is_partly_malformed():
    g = Graph.complete(4)
    plan = AdversaryPlan({2: Strategy.FORGE_PATHS})
    rep = run(g, 1, ModificationConfig(), plan, seed=0)
    assert rep.dropped_malformed > 0
    assert check_brb(rep, plan) == []


def test_forger_is_deterministic():
    a = PathForger(1, [0, 2, 3], 4, 1, ModificationConfig(), 7)
    b = PathForger(1, [0, 2, 3], 4, 1, ModificationConfig(), 7)
    msg = Message(MessageType.SEND, 0, 0, 0, 0, b"p")
    assert a.on_message(0, msg) == b.on_message(0, msg)


@pytest.mark.parametrize("strategy", list(Strategy))
def test_every_strategy_keeps_properties_on_k4(strategy):
    g = Graph.complete(4)
    for corrupt in range(4):
        plan = AdversaryPlan({corrupt: strategy})
        rep = run(g, 1, preset("bdopt"), plan, seed=2)
        assert check_brb(rep, plan) == []
