from __future__ import annotations

import pytest

from bdsim.config import ModificationConfig, preset
from bdsim.dolev import DolevLayer, ids_of, mask_of
from bdsim.errors import MalformedFrame
from bdsim.wire import MessageType

ECHO, READY = MessageType.ECHO, MessageType.READY
BDOPT = preset("bdopt")


def layer(cfg=None, neighbors=(2, 3, 4, 7), pid=0, n=10, f=1):
    return DolevLayer(pid, list(neighbors), n, f, cfg or ModificationConfig())


def test_mask_round_trip():
    assert ids_of(mask_of([5, 1, 9])) == [1, 5, 9]


def test_broadcast_to_all_neighbors():
    d = layer()
    assert d.rc_broadcast((0, ECHO, 0)) == [2, 3, 4, 7]
    assert d.is_delivered((0, ECHO, 0))


def test_broadcast_without_neighbors_still_delivers():
    d = layer(neighbors=())
    assert d.rc_broadcast((0, ECHO, 0)) == []
    assert d.is_delivered((0, ECHO, 0))


def test_broadcast_skips_closed_neighbor():
    d = layer(ModificationConfig(mbd9=True), f=1)
    for c in (1, 5, 6):
        d.prune_on_ready(3, 0, relayed_creator=c)
    assert d.rc_broadcast((0, ECHO, 0)) == [2, 4, 7]


def test_two_disjoint_paths_deliver_at_f1():
    d = layer(BDOPT)
    key = (0, ECHO, 9)
    first = d.rc_on_receive(2, key, (9,))
    assert first[0] is False
    assert first[2] == (9, 2)
    delivered, targets, fpath = d.rc_on_receive(3, key, (9,))
    assert delivered and fpath == ()
    assert 3 not in targets and 9 not in targets


def test_plain_forwarding_extends_path():
    d = layer()
    delivered, targets, fpath = d.rc_on_receive(2, (0, ECHO, 9), (9, 5))
    assert not delivered
    assert fpath == (9, 5, 2)
    assert targets == [3, 4, 7]


def test_direct_reception_delivers_under_md1():
    d = layer(ModificationConfig(md1=True), f=2)
    delivered, _, _ = d.rc_on_receive(4, (0, ECHO, 4), ())
    assert delivered


def test_direct_reception_alone_is_one_path_without_md1():
    d = layer(f=1)
    delivered, _, _ = d.rc_on_receive(4, (0, ECHO, 4), ())
    assert not delivered
    delivered, _, _ = d.rc_on_receive(2, (0, ECHO, 4), (4,))
    assert delivered


def test_md4_drops_paths_through_a_vouching_neighbor():
    d = layer(BDOPT)
    key = (0, ECHO, 9)
    d.rc_on_receive(4, key, ())  # neighbor 4 has delivered and says so
    assert d.rc_on_receive(7, key, (9, 4)) is None


def test_md3_skips_neighbors_that_delivered():
    d = layer(BDOPT)
    key = (0, ECHO, 9)
    d.rc_on_receive(4, key, ())
    _, targets, _ = d.rc_on_receive(2, key, (9, 5))
    assert 4 not in targets


def test_md5_stops_after_empty_forward():
    d = layer(BDOPT)
    key = (0, ECHO, 9)
    d.rc_on_receive(2, key, (9,))
    d.rc_on_receive(3, key, (9,))
    assert d.rc_on_receive(4, key, (9, 5)) is None


def test_duplicate_copy_dropped():
    d = layer()
    key = (0, ECHO, 9)
    assert d.rc_on_receive(2, key, (9, 5)) is not None
    assert d.rc_on_receive(2, key, (9, 5)) is None


def test_impossible_path_is_malformed():
    d = layer(n=4)
    with pytest.raises(MalformedFrame):
        d.rc_on_receive(2, (0, ECHO, 9), (9, 5, 6))
    with pytest.raises(MalformedFrame):
        layer().rc_on_receive(2, (0, ECHO, 9), (9, 0))


def test_mbd9_counts_distinct_creators():
    d = layer(ModificationConfig(mbd9=True))
    d.prune_on_ready(3, 0, relayed_creator=1)
    d.prune_on_ready(3, 0, relayed_creator=1)
    d.prune_on_ready(3, 0, relayed_creator=5)
    assert not d.closed.get(0, 0) >> 3 & 1
    d.prune_on_ready(3, 0, relayed_creator=6)
    assert d.closed[0] >> 3 & 1


def test_mbd9_fed_by_empty_path_readies():
    d = layer(ModificationConfig(mbd9=True))
    for c in (1, 5, 6):
        d.rc_on_receive(3, (0, READY, c), ())
    assert d.closed[0] >> 3 & 1


def test_mbd8_toggle():
    off = layer()
    off.prune_on_ready(3, 0)
    assert off.echo_suppressed == {}
    on = layer(ModificationConfig(mbd8=True))
    on.prune_on_ready(3, 0)
    assert on.excluded(ECHO, 0) >> 3 & 1
    assert not on.excluded(READY, 0)


def test_superpath_filter_drops_redundant_copy():
    d = layer(ModificationConfig(mbd10=True), f=2)
    key = (0, ECHO, 9)
    d.rc_on_receive(2, key, (9, 5))
    # relays {5, 2, 3} contain the stored {5, 2}
    assert d.rc_on_receive(3, key, (9, 5, 2)) is None
    assert d.entry(key).paths == [mask_of([5, 2])]
