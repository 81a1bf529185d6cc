"""Triangular-lattice geometry: nodes, directions, orientations, poses, ports.

Everything in this module is pure. Nodes are axial coordinates ``(q, r)``;
direction 0 points along +q and directions increase counter-clockwise, so the
six unit steps enumerate the neighbors of a node in CCW order starting east.

An amoebot occupies one node (contracted) or two adjacent nodes (expanded,
head + tail). Its ports are the edges to adjacent nodes: 6 when contracted,
10 when expanded (the edge between head and tail is internal and is not a
port). Port labels are local: each amoebot numbers its ports 0..5 or 0..9
according to its own direction offset and handedness, so two amoebots
generally disagree about the label of their shared edge.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple, Optional

Node = tuple[int, int]

#: Unit steps for directions 0..5, counter-clockwise starting at +q (east).
DIRECTIONS: tuple[Node, ...] = ((1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1))

#: Chirality values: +1 labels ports counter-clockwise, -1 clockwise.
CCW = 1
CW = -1

CONTRACTED = "contracted"
EXPANDED = "expanded"


def step(v: Node, d: int) -> Node:
    dq, dr = DIRECTIONS[d % 6]
    return (v[0] + dq, v[1] + dr)


def neighbors(v: Node) -> tuple[Node, ...]:
    """The six neighbors of ``v`` in global direction order 0..5."""
    q, r = v
    return tuple((q + dq, r + dr) for dq, dr in DIRECTIONS)


def opposite(d: int) -> int:
    return (d + 3) % 6


def direction_between(a: Node, b: Node) -> Optional[int]:
    """Direction d with step(a, d) == b, or None if not adjacent."""
    delta = (b[0] - a[0], b[1] - a[1])
    try:
        return DIRECTIONS.index(delta)
    except ValueError:
        return None


def are_adjacent(a: Node, b: Node) -> bool:
    return direction_between(a, b) is not None


def distance(a: Node, b: Node) -> int:
    """Hex grid distance (number of lattice steps)."""
    dq = a[0] - b[0]
    dr = a[1] - b[1]
    # Axial -> cube: s = -q - r. Distance is max of the absolute cube deltas.
    return max(abs(dq), abs(dr), abs(dq + dr))


def common_neighbors(a: Node, b: Node) -> tuple[Node, ...]:
    na = set(neighbors(a))
    return tuple(v for v in neighbors(b) if v in na)


@dataclass(frozen=True)
class Orientation:
    """An amoebot's private frame: direction offset plus handedness.

    Local label L maps to global direction (offset + chirality * L) mod 6.
    Chirality +1 means the amoebot counts its ports counter-clockwise in the
    global frame, -1 clockwise. The amoebot itself cannot tell the difference.
    """

    offset: int = 0
    chirality: int = CCW

    def __post_init__(self):
        if self.chirality not in (CCW, CW):
            raise ValueError("chirality must be +1 or -1")
        object.__setattr__(self, "offset", self.offset % 6)

    def label_to_global(self, label: int) -> int:
        return (self.offset + self.chirality * label) % 6

    def global_to_label(self, d: int) -> int:
        return ((d - self.offset) * self.chirality) % 6


@dataclass(frozen=True)
class Pose:
    """Where an amoebot sits: head node, plus tail node when expanded."""

    head: Node
    tail: Optional[Node] = None

    def __post_init__(self):
        if self.tail is not None and not are_adjacent(self.head, self.tail):
            raise ValueError(f"head {self.head} and tail {self.tail} not adjacent")

    @property
    def expanded(self) -> bool:
        return self.tail is not None

    @property
    def shape(self) -> str:
        return EXPANDED if self.tail is not None else CONTRACTED

    def nodes(self) -> tuple[Node, ...]:
        if self.tail is None:
            return (self.head,)
        return (self.head, self.tail)

    def occupies(self, v: Node) -> bool:
        return v == self.head or v == self.tail


class Port(NamedTuple):
    label: int
    node: Node      # the node of this amoebot that hosts the port
    gdir: int       # global direction of the edge
    faces: Node     # the adjacent node the port looks at


def boundary_cycle(head: Node, tail: Node) -> tuple[tuple[Node, int], ...]:
    """The 10 external edges of an expanded amoebot, CCW in the global frame.

    Entries are (hosting node, global direction). Consecutive entries share a
    lattice corner, and the two nodes adjacent to both head and tail each
    appear twice (once from each host).
    """
    t = direction_between(head, tail)
    if t is None:
        raise ValueError("head and tail must be adjacent")
    u, w = head, tail
    order = (
        (w, t), (w, t + 1), (w, t + 2),
        (u, t + 1), (u, t + 2), (u, t + 3), (u, t + 4), (u, t + 5),
        (w, t + 4), (w, t + 5),
    )
    return tuple((node, d % 6) for node, d in order)


def ports_of(pose: Pose, orientation: Orientation) -> tuple[Port, ...]:
    """All ports of an amoebot in local label order (index == label)."""
    if not pose.expanded:
        out = []
        for label in range(6):
            d = orientation.label_to_global(label)
            out.append(Port(label, pose.head, d, step(pose.head, d)))
        return tuple(out)

    cycle = boundary_cycle(pose.head, pose.tail)
    # Label 0 is the head port with the smallest local angular index; labels
    # then advance along the boundary in the amoebot's own handedness.
    start = min(
        (i for i, (node, _) in enumerate(cycle) if node == pose.head),
        key=lambda i: orientation.global_to_label(cycle[i][1]),
    )
    out = []
    for label in range(10):
        node, d = cycle[(start + orientation.chirality * label) % 10]
        out.append(Port(label, node, d, step(node, d)))
    return tuple(out)


def port_toward(pose: Pose, orientation: Orientation, target: Node) -> Optional[Port]:
    """Lowest-label port facing ``target``, or None."""
    for p in ports_of(pose, orientation):
        if p.faces == target:
            return p
    return None


def local_neighbor_ids(
    pose: Pose,
    orientation: Orientation,
    occupant_of: Callable[[Node], object],
) -> list:
    """First-encounter neighbor numbering over the ports of an amoebot.

    ``occupant_of(node)`` returns a hashable occupant key or None for empty.
    The result has one entry per port (in label order): None where the port
    faces an empty node, otherwise the neighbor's local number, assigned 1, 2,
    ... in order of first encounter by ascending port label. An expanded
    neighbor (or a contracted one on a shared corner) keeps one number across
    all the ports it appears on.
    """
    ids: list = []
    seen: dict = {}
    own = set(pose.nodes())
    for p in ports_of(pose, orientation):
        if p.faces in own:
            # Cannot happen for a valid pose; ports point outward by
            # construction of the boundary cycle.
            raise AssertionError("port faces own node")
        occ = occupant_of(p.faces)
        if occ is None:
            ids.append(None)
        else:
            if occ not in seen:
                seen[occ] = len(seen) + 1
            ids.append(seen[occ])
    return ids


def derive_offset(label: int, gdir: int, chirality: int) -> int:
    """Direction offset of an orientation that maps ``label`` to ``gdir``."""
    return (gdir - chirality * label) % 6


def pull_relabel(
    child_node: Node,
    vacated: Node,
    remaining: Node,
    child_edge_label: int,
    child_chirality: int,
) -> int:
    """The child's post-handover label for its edge to the puller.

    A contracted child at ``child_node`` is pulled into ``vacated`` while the
    puller keeps ``remaining``. The child currently labels the edge toward
    ``vacated`` with ``child_edge_label``. Both that label and the child's
    handedness are visible to the puller as bond metadata, which pins the
    child's direction offset and therefore its whole post-expansion labeling.
    """
    d0 = direction_between(child_node, vacated)
    if d0 is None:
        raise ValueError("child is not adjacent to the vacated node")
    offset = derive_offset(child_edge_label, d0, child_chirality)
    ori = Orientation(offset, child_chirality)
    future = Pose(head=vacated, tail=child_node)
    # The head hosts a port toward every adjacent node except the tail, and
    # remaining is adjacent to vacated by construction. Scan for the head-side
    # port explicitly: the tail may also touch remaining on a shared corner.
    for cand in ports_of(future, ori):
        if cand.node == vacated and cand.faces == remaining:
            return cand.label
    raise AssertionError("no head port toward the puller's remaining node")


def pull_relangle(
    child_node: Node,
    vacated: Node,
    remaining: Node,
    child_edge_langle: int,
    child_chirality: int,
) -> int:
    """Angular-index counterpart of pull_relabel.

    Returns the child's angular index at ``vacated`` for the direction toward
    ``remaining``. Unlike a port label, an angular index does not depend on
    the pose, so the value stays meaningful after the child later contracts
    into ``vacated``.
    """
    d0 = direction_between(child_node, vacated)
    if d0 is None:
        raise ValueError("child is not adjacent to the vacated node")
    d1 = direction_between(vacated, remaining)
    if d1 is None:
        raise ValueError("remaining node is not adjacent to the vacated node")
    offset = derive_offset(child_edge_langle, d0, child_chirality)
    return Orientation(offset, child_chirality).global_to_label(d1)


def translate(nodes: Iterable[Node], dq: int, dr: int) -> list[Node]:
    return [(q + dq, r + dr) for q, r in nodes]
