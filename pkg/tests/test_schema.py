import pytest

from goalienet.schema import (
    NET_IDS,
    NUM_KEYPOINTS,
    STICK_IDS,
    Group,
    SchemaError,
    check_id,
    group_of,
    ids_in_group,
    keypoint_table,
    skeleton_edges,
)

# transcribed independently from the keypoint table of the source article
TABLE = {
    1: "Left Shoulder", 2: "Right Shoulder", 3: "Left Elbow", 4: "Right Elbow",
    5: "Left Hip", 6: "Right Hip", 7: "Right Legpad(0)", 8: "Right Legpad(1)",
    9: "Right Legpad(2)", 10: "Right Legpad(3)", 11: "Left Legpad(0)", 12: "Left Legpad(1)",
    13: "Left Legpad(2)", 14: "Left Legpad(3)", 15: "Blocker(0)", 16: "Blocker(1)",
    17: "Blocker(2)", 18: "Blocker(3)", 19: "Torso Center", 20: "Mask-Low", 21: "Mask-High",
    22: "Stick-Upper", 23: "Stick-Lower", 24: "Stick-Blade-Tip", 25: "Mit-Top",
    26: "Net-Top-Left", 27: "Net-Top-Right", 28: "Net-Bottom-Left", 29: "Net-Bottom-Right",
}


def test_table_ids_and_names():
    table = keypoint_table()
    assert [d.id for d in table] == list(range(1, 30))
    assert {d.id: d.name for d in table} == TABLE
    assert len({d.name for d in table}) == NUM_KEYPOINTS


@pytest.mark.parametrize("kp_id, name, group", [
    (1, "Left Shoulder", Group.GOALIE),
    (24, "Stick-Blade-Tip", Group.STICK),
    (29, "Net-Bottom-Right", Group.NET),
    (11, "Left Legpad(0)", Group.GOALIE),
])
def test_table_examples(kp_id, name, group):
    d = keypoint_table()[kp_id - 1]
    assert (d.id, d.name, d.group) == (kp_id, name, group)


@pytest.mark.parametrize("kp_id, group", [(22, Group.STICK), (26, Group.NET), (5, Group.GOALIE), (25, Group.GOALIE)])
def test_group_of(kp_id, group):
    assert group_of(kp_id) is group


def test_partition_sizes():
    assert len(ids_in_group(Group.GOALIE)) == 22
    assert ids_in_group(Group.STICK) == list(STICK_IDS) == [22, 23, 24]
    assert ids_in_group(Group.NET) == list(NET_IDS) == [26, 27, 28, 29]


@pytest.mark.parametrize("bad", [0, 30, -1, 2.5, "3", True])
def test_invalid_ids_rejected(bad):
    with pytest.raises(SchemaError):
        check_id(bad)
    with pytest.raises(SchemaError):
        group_of(bad)


def test_skeleton_edges():
    edges = skeleton_edges()
    assert frozenset({1, 3}) in edges
    assert frozenset({22, 23}) in edges and frozenset({23, 24}) in edges
    net = {e for e in edges if e <= set(NET_IDS)}
    assert net == {frozenset(p) for p in [(26, 27), (26, 28), (27, 29), (28, 29)]}
    for e in edges:
        assert len(e) == 2
        assert all(1 <= i <= 29 for i in e)
