"""Core runtime types shared by the engine, operations, and analysis layers.

A Configuration is the message-free part of system state: where every amoebot
sits, how it is oriented, and what its public memory holds. The engine keeps
richer live state (channels, in-flight movements, grants), but everything the
algorithms can observe reduces to a Configuration, which is also what replays
and brute-force enumeration work over.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .lattice import Node, Orientation, Pose, are_adjacent, neighbors

# Reserved public-memory variable names. Algorithm variables live next to
# these in the same map; the reserved ones are maintained by the system layer.
SHAPE = "shape"
LOCK = "lock"
ACT = "act"
AWAKEN = "awaken"
RESERVED_VARS = (SHAPE, LOCK, ACT, AWAKEN)

# Every message the system layer ever puts on a channel. Connection feedback
# is instantaneous and deliberately not a message.
MESSAGE_KINDS = frozenset({
    "read_request", "read_ack",
    "write_request",
    "pull_request", "pull_ack", "pull_nack",
    "push_request", "push_ack", "push_nack",
    "lock_request", "lock_ack", "lock_nack", "lock_conflict",
    "lock", "unlock",
})

PORT_BUFFER_CAPACITY = 2

# Operation failure kinds, exactly the set raised into action bodies.
DISCONNECT = "disconnect-failure"
SHAPE_FAIL = "shape-failure"
HANDOVER = "handover-failure"
OCCUPIED = "occupied-failure"
NACK = "nack-failure"
LOCK_FAIL = "lock-failure"
FAILURE_KINDS = frozenset({DISCONNECT, SHAPE_FAIL, HANDOVER, OCCUPIED, NACK, LOCK_FAIL})


class SimulatorFault(Exception):
    """A model invariant broke inside the simulator. Never caught by algorithms."""


class OperationFailure(Exception):
    """Raised into an action body when one of its operations fails."""

    def __init__(self, kind: str, detail: str = ""):
        if kind not in FAILURE_KINDS:
            raise SimulatorFault(f"unknown failure kind {kind!r}")
        super().__init__(f"{kind}{': ' + detail if detail else ''}")
        self.kind = kind
        self.detail = detail


@dataclass
class Message:
    kind: str
    src: int                 # sender amoebot id
    src_node: Node           # hosting node of the sending port
    dst_node: Node           # faced node at enqueue time
    payload: tuple = ()
    enqueued: int = -1
    sent: int = -1
    received: int = -1
    send_ready: bool = False
    # optional hooks: on_sent(msg, edge) fires when the message leaves the
    # buffer, on_flushed(msg, edge) when a disconnection drops it unsent
    on_sent: Optional[Callable] = None
    on_flushed: Optional[Callable] = None

    def __post_init__(self):
        if self.kind not in MESSAGE_KINDS:
            raise SimulatorFault(f"unknown message kind {self.kind!r}")


def fresh_public(shape: str, variables: Optional[dict] = None) -> dict:
    """Public memory with the reserved bookkeeping fields in their start state."""
    mem = {SHAPE: shape, LOCK: False, ACT: True, AWAKEN: False}
    if variables:
        mem.update(variables)
    return mem


@dataclass
class Configuration:
    poses: dict[int, Pose]
    orientations: dict[int, Orientation]
    public: dict[int, dict] = field(default_factory=dict)

    def copy(self) -> "Configuration":
        return Configuration(
            dict(self.poses),
            dict(self.orientations),
            {a: dict(m) for a, m in self.public.items()},
        )

    def occupancy(self) -> dict[Node, int]:
        occ: dict[Node, int] = {}
        for aid, pose in self.poses.items():
            for v in pose.nodes():
                if v in occ:
                    raise SimulatorFault(f"node {v} occupied by {occ[v]} and {aid}")
                occ[v] = aid
        return occ

    def neighbors_of(self, aid: int, occ: Optional[dict] = None) -> list[int]:
        """Amoebot ids adjacent to any node of ``aid``, ascending, no self."""
        if occ is None:
            occ = self.occupancy()
        out = set()
        for v in self.poses[aid].nodes():
            for w in neighbors(v):
                b = occ.get(w)
                if b is not None and b != aid:
                    out.add(b)
        return sorted(out)

    def key(self, ignore_vars: tuple = ()) -> tuple:
        """Canonical hashable snapshot, optionally masking some variables."""
        items = []
        for aid in sorted(self.poses):
            pose = self.poses[aid]
            ori = self.orientations[aid]
            mem = tuple(sorted(
                (k, v) for k, v in self.public[aid].items() if k not in ignore_vars
            ))
            items.append((aid, pose.head, pose.tail, ori.offset, ori.chirality, mem))
        return tuple(items)


def validate_configuration(config: Configuration, require_connected: bool = True) -> list[str]:
    """Model-validity problems with a configuration, empty when it is fine.

    Checks physical exclusion (via occupancy), shape bookkeeping against the
    pose, boolean lock bits, and optionally that the occupied nodes form one
    connected component.
    """
    problems = []
    try:
        occ = config.occupancy()
    except SimulatorFault as e:
        return [str(e)]
    for aid, pose in config.poses.items():
        mem = config.public.get(aid)
        if mem is None:
            problems.append(f"amoebot {aid}: no public memory")
            continue
        if mem.get(SHAPE) != pose.shape:
            problems.append(f"amoebot {aid}: shape variable {mem.get(SHAPE)!r} "
                            f"disagrees with pose {pose.shape}")
        if not isinstance(mem.get(LOCK), bool):
            problems.append(f"amoebot {aid}: lock bit is {mem.get(LOCK)!r}")
        if aid not in config.orientations:
            problems.append(f"amoebot {aid}: no orientation")
    if require_connected and occ:
        start = next(iter(occ))
        seen = {start}
        stack = [start]
        while stack:
            v = stack.pop()
            for w in neighbors(v):
                if w in occ and w not in seen:
                    seen.add(w)
                    stack.append(w)
        if len(seen) != len(occ):
            problems.append(f"occupied nodes not connected "
                            f"({len(seen)} of {len(occ)} reachable)")
    return problems


def connected_occupancy(nodes: set, reserved: set = frozenset()) -> bool:
    """Whether ``nodes | reserved`` forms one connected set of lattice nodes."""
    allnodes = set(nodes) | set(reserved)
    if not allnodes:
        return True
    start = next(iter(allnodes))
    seen = {start}
    stack = [start]
    while stack:
        v = stack.pop()
        for w in neighbors(v):
            if w in allnodes and w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == len(allnodes)


def edge_key(a: Node, b: Node) -> tuple[Node, Node]:
    """Canonical undirected key for the lattice edge between two nodes."""
    if not are_adjacent(a, b):
        raise SimulatorFault(f"{a} and {b} are not adjacent")
    return (a, b) if a <= b else (b, a)
