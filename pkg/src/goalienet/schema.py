"""The fixed 29-keypoint taxonomy for goalie, stick and net."""

from __future__ import annotations

import enum
from dataclasses import dataclass

NUM_KEYPOINTS = 29


class SchemaError(ValueError):
    """Raised for keypoint ids outside 1..29."""


class Group(enum.Enum):
    GOALIE = "GOALIE"
    STICK = "STICK"
    NET = "NET"


_NAMES = (
    "Left Shoulder",
    "Right Shoulder",
    "Left Elbow",
    "Right Elbow",
    "Left Hip",
    "Right Hip",
    "Right Legpad(0)",
    "Right Legpad(1)",
    "Right Legpad(2)",
    "Right Legpad(3)",
    "Left Legpad(0)",
    "Left Legpad(1)",
    "Left Legpad(2)",
    "Left Legpad(3)",
    "Blocker(0)",
    "Blocker(1)",
    "Blocker(2)",
    "Blocker(3)",
    "Torso Center",
    "Mask-Low",
    "Mask-High",
    "Stick-Upper",
    "Stick-Lower",
    "Stick-Blade-Tip",
    "Mit-Top",
    "Net-Top-Left",
    "Net-Top-Right",
    "Net-Bottom-Left",
    "Net-Bottom-Right",
)

STICK_IDS = (22, 23, 24)
NET_IDS = (26, 27, 28, 29)


def check_id(kp_id: int) -> int:
    if isinstance(kp_id, bool) or not isinstance(kp_id, int) or not 1 <= kp_id <= NUM_KEYPOINTS:
        raise SchemaError(f"keypoint id must be an integer in [1, {NUM_KEYPOINTS}], got {kp_id!r}")
    return kp_id


@dataclass(frozen=True)
class KeypointDef:
    id: int
    name: str
    group: Group

    def __post_init__(self):
        check_id(self.id)


def group_of(kp_id: int) -> Group:
    check_id(kp_id)
    if kp_id in STICK_IDS:
        return Group.STICK
    if kp_id in NET_IDS:
        return Group.NET
    return Group.GOALIE


_TABLE = tuple(KeypointDef(i + 1, name, group_of(i + 1)) for i, name in enumerate(_NAMES))


def keypoint_table() -> list[KeypointDef]:
    """All 29 keypoint definitions in id order."""
    return list(_TABLE)


def ids_in_group(group: Group) -> list[int]:
    return [d.id for d in _TABLE if d.group is group]


# Decorative overlay edges; the keypoints themselves carry no connectivity.
_EDGES = (
    (1, 3), (2, 4), (1, 19), (2, 19), (19, 5), (19, 6), (5, 11), (6, 7),
    (7, 8), (8, 9), (9, 10), (10, 7),
    (11, 12), (12, 13), (13, 14), (14, 11),
    (15, 16), (16, 17), (17, 18), (18, 15),
    (20, 21), (25, 16),
    (22, 23), (23, 24),
    (26, 27), (26, 28), (27, 29), (28, 29),
)


def skeleton_edges() -> frozenset[frozenset[int]]:
    """Unordered keypoint pairs used to draw overlays."""
    return frozenset(frozenset(e) for e in _EDGES)
