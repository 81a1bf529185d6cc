"""Hexagonal self-assembly on the triangular lattice.

An arbitrary connected system with a single seed reshapes itself into the
canonical hexagonal packing: amoebots settle one at a time into a spiral that
winds around the seed, each retiring in place with a pointer to where the
next one belongs. Amoebots adjacent to the settled structure promote
themselves to roots and crawl along its surface; everyone else hangs off a
parent in a forest and gets dragged behind through handovers.

Public variables:

* ``state``: one of idle, follower, root, seed, retired
* ``parent``: angular index of the edge toward the parent, or None
* ``dir``: for a root, the angular index it will expand along next; for the
  seed and retired amoebots, the angular index of the next spiral node (the
  frontier pointer); None otherwise

Angular indices are stored instead of port labels because expansion and
contraction reshuffle labels, while an angular index is pinned to the
amoebot's own handedness and survives both. Wherever a neighbor's variable
is compared against "the edge between us", the comparison uses the
neighbor's angular index for that edge, which is part of the bond metadata.

The final shape only comes out as the one canonical spiral when all
amoebots share a handedness (the default placement mode); with mixed
chirality every settler winds its own way and the shape drifts.
"""

from __future__ import annotations

import random
from typing import Optional

from . import operations as ops
from .actions import ActionSpec, Algorithm, LocalView, PhasedAction, PortView
from .core import (
    Configuration, DISCONNECT, OperationFailure, SHAPE, SimulatorFault,
    fresh_public,
)
from .lattice import CONTRACTED, Node, Orientation, Pose, neighbors, step

STATE = "state"
PARENT = "parent"
DIR = "dir"
PUBLIC_VARS = (STATE, PARENT, DIR)

IDLE = "idle"
FOLLOWER = "follower"
ROOT = "root"
SEED = "seed"
RETIRED = "retired"

SETTLED = (SEED, RETIRED)

# Sweep senses for the surface scan, in the amoebot's own handedness.
CCW = 1
CW = -1


# --------------------------------------------------------------------------
# Surface scan

def _next_head(by_langle: dict, langle: int, sweep: int) -> PortView:
    """The next head port when rotating by ``sweep``, skipping the tail gap."""
    for _ in range(6):
        langle = (langle + sweep) % 6
        p = by_langle.get(langle)
        if p is not None:
            return p
    raise SimulatorFault("no head ports to scan")


def _settled_in_view(p: PortView) -> bool:
    return p.connected and p.vars is not None and p.vars.get(STATE) in SETTLED


def _scan_view(view: LocalView, sweep: int, start: PortView) -> Optional[int]:
    """Pure-view replica of get_next_dir, None when it would not terminate."""
    by_langle = {p.langle: p for p in view.ports if p.on_my_head}
    port = start
    budget = 2 * len(by_langle)
    while not _settled_in_view(port):
        port = _next_head(by_langle, port.langle, sweep)
        budget -= 1
        if budget < 0:
            return None
    budget = 2 * len(by_langle)
    while True:
        port = _next_head(by_langle, port.langle, sweep)
        if not _settled_in_view(port):
            return port.langle
        budget -= 1
        if budget < 0:
            return None


def _assert_scan_start_invariance(view: LocalView, sweep: int) -> None:
    """The scan must not care which head port it starts from.

    That holds exactly when the settled neighbors form one contiguous arc
    around the head, which the surface geometry guarantees; a violation here
    means the structure grew a shape the walk cannot handle. Skipped when the
    view is missing data.
    """
    heads = [p for p in view.ports if p.on_my_head]
    if any(p.connected and p.vars is None for p in heads):
        return
    if not any(_settled_in_view(p) for p in heads):
        return
    results = {_scan_view(view, sweep, h) for h in heads}
    if len(results) != 1:
        raise SimulatorFault(f"surface scan is start-dependent: {results}")


def _probe_settled(port: PortView, nports: int):
    """Fresh connected-and-settled check for one head port.

    A bond that drops mid-read leaves the neighbor's state unknown, and
    skipping the port would be wrong: in the second scan phase it may be the
    very port the walk is looking for (a marching neighbor contracting away
    right as we read it). So the probe retries the same port until it gets a
    definite answer; after a drop the retry normally finds the port unbonded
    and answers False.

    Returns None when the executing amoebot's own pose changed underneath
    (dragged through a handover), which remaps every port label and voids
    the whole scan.
    """
    while True:
        try:
            if not (yield ops.Connected(port.label)):
                return False
            return (yield ops.Read(port.label, STATE)) in SETTLED
        except OperationFailure as f:
            if f.kind != DISCONNECT:
                raise
            if len((yield ops.Connected())) != nports:
                return None


def get_next_dir(ctx, sweep: int):
    """Angular index of the first free direction past the settled block.

    Rotates through the head ports in the given sweep sense: first until it
    stands on a settled neighbor (seed or retired), then until it leaves the
    block again, and returns that first free direction. Each port is probed
    until the answer is definite, so a bond dropping mid-read never skips a
    port (see _probe_settled).

    Returns None when no answer exists for the current pose: either the
    executing amoebot was dragged through a handover mid-scan (the ports the
    scan is walking belong to a pose that no longer exists), or the head has
    drifted off the settled surface entirely, which a dragged amoebot can
    discover one activation later. Callers keep their previous direction in
    that case; a later activation rescans from a saner spot.
    """
    view = ctx.view
    by_langle = {p.langle: p for p in view.ports if p.on_my_head}
    start = view.ports[0]
    if not start.on_my_head:
        raise SimulatorFault("port 0 is not on the head")
    _assert_scan_start_invariance(view, sweep)
    nports = len(view.ports)
    port = start
    budget = 2 * len(by_langle)
    while True:
        hit = yield from _probe_settled(port, nports)
        if hit is None or (not hit and budget < 0):
            return None
        if hit:
            break
        budget -= 1
        port = _next_head(by_langle, port.langle, sweep)
    budget = 2 * len(by_langle)
    while True:
        port = _next_head(by_langle, port.langle, sweep)
        hit = yield from _probe_settled(port, nports)
        if hit is None or (hit and budget < 0):
            return None
        if not hit:
            return port.langle
        budget -= 1


def _names_me_parent(p: PortView) -> bool:
    """Whether this port's view data marks its occupant as my child.

    The parent pointer always sits on the child's head, so the bond must
    attach there; without that requirement an expanded child touching my
    tail with both of its nodes could match through the wrong edge.
    """
    return (p.connected and p.peer_on_head and p.vars is not None
            and p.vars.get(PARENT) == p.peer_langle)


def tail_children(ctx):
    """Tail ports whose occupant names me as its parent, re-checked fresh.

    Ports whose bond drops mid-check are skipped; the caller sees only the
    children that were still attached when probed.
    """
    out = []
    for pv in ctx.view.ports:
        if pv.on_my_head or not pv.connected or not pv.peer_on_head:
            continue
        try:
            if not (yield ops.Connected(pv.label)):
                continue
            if (yield ops.Read(pv.label, PARENT)) == pv.peer_langle:
                out.append(pv)
        except OperationFailure as f:
            if f.kind != DISCONNECT:
                raise
    return out


# --------------------------------------------------------------------------
# Guards

def _no_idle_nbr(view: LocalView) -> bool:
    return view.all_nbrs(lambda lb: view.nbr_var(lb, STATE) != IDLE)


def _g_become_root(view: LocalView) -> bool:
    return (view.own[STATE] in (IDLE, FOLLOWER)
            and view.any_nbr(lambda lb: view.nbr_var(lb, STATE) in SETTLED))


def _g_become_follower(view: LocalView) -> bool:
    return (view.own[STATE] == IDLE
            and view.any_nbr(lambda lb: view.nbr_var(lb, STATE) in (FOLLOWER, ROOT)))


def _g_retire(view: LocalView) -> bool:
    if view.expanded or view.own[STATE] != ROOT:
        return False
    if not _no_idle_nbr(view):
        return False
    # the frontier pointer of some settled neighbor names the edge to me
    return any(p.connected and p.vars is not None
               and p.vars.get(STATE) in SETTLED
               and p.vars.get(DIR) == p.peer_langle
               for p in view.ports)


def _g_expand_ahead(view: LocalView) -> bool:
    own = view.own
    return (not view.expanded and own[STATE] == ROOT
            and own.get(DIR) is not None
            and not view.ports[own[DIR]].connected)


def _g_pull_child(view: LocalView) -> bool:
    if not view.expanded or view.own[STATE] not in (FOLLOWER, ROOT):
        return False
    if not _no_idle_nbr(view):
        return False
    return any(not p.on_my_head and _names_me_parent(p)
               and p.vars.get(SHAPE) == CONTRACTED
               for p in view.ports)


def _g_contract_tail(view: LocalView) -> bool:
    if not view.expanded or view.own[STATE] not in (FOLLOWER, ROOT):
        return False
    if not _no_idle_nbr(view):
        return False
    return not any(not p.on_my_head and _names_me_parent(p)
                   for p in view.ports)


# --------------------------------------------------------------------------
# Bodies

def _b_become_root(ctx):
    yield ops.Write(None, PARENT, None)
    yield ops.Write(None, STATE, ROOT)
    d = yield from get_next_dir(ctx, CCW)
    yield ops.Write(None, DIR, d)


def _b_become_follower(ctx):
    for p in ctx.view.ports:
        if not (yield ops.Connected(p.label)):
            continue
        if (yield ops.Read(p.label, STATE)) in (FOLLOWER, ROOT):
            yield ops.Write(None, PARENT, p.langle)
            yield ops.Write(None, STATE, FOLLOWER)
            return
    # the guard's witness cannot vanish: nobody moves away from or retires
    # next to an idle amoebot
    raise SimulatorFault("no follower or root neighbor at adoption time")


def _b_retire(ctx):
    d = yield from get_next_dir(ctx, CW)
    yield ops.Write(None, DIR, d)
    yield ops.Write(None, STATE, RETIRED)


def _c_expand_ahead(ctx):
    ctx.scratch["port"] = ctx.view.own[DIR]
    yield from ()


def _m_expand_ahead(ctx):
    return ops.Expand(ctx.scratch["port"])


def _c_pull_child(ctx):
    if ctx.view.own[STATE] == ROOT:
        d = yield from get_next_dir(ctx, CCW)
        if d is not None:
            yield ops.Write(None, DIR, d)
    pick = None
    for pv in (yield from tail_children(ctx)):
        try:
            shape = yield ops.Read(pv.label, SHAPE)
        except OperationFailure as f:
            if f.kind != DISCONNECT:
                raise
            continue
        if shape == CONTRACTED:
            pick = pv
            break
    if pick is None:
        # The guard's contracted child self-promoted to root before we got
        # here, dropping off the child list (its parent pointer is null
        # now). There is nothing left to drag this time around; once the
        # remaining children report back in, a later activation pulls one
        # of them or contracts the tail.
        ctx.scratch["port"] = None
        return
    yield ops.Write(pick.label, PARENT, pick.pull_parent_langle)
    ctx.scratch["port"] = pick.label


def _m_pull_child(ctx):
    port = ctx.scratch["port"]
    return None if port is None else ops.Pull(port)


def _c_contract_tail(ctx):
    if ctx.view.own[STATE] == ROOT:
        d = yield from get_next_dir(ctx, CCW)
        if d is not None:
            yield ops.Write(None, DIR, d)
    yield from ()


def _m_contract_tail(ctx):
    return ops.Contract("tail")


def hexagon_actions() -> tuple:
    """The six actions, highest priority first."""
    return (
        ActionSpec("become_root", _g_become_root, _b_become_root,
                   guard_reads=(STATE,)),
        ActionSpec("become_follower", _g_become_follower, _b_become_follower,
                   guard_reads=(STATE,)),
        ActionSpec("retire", _g_retire, _b_retire,
                   guard_reads=(STATE, DIR)),
        PhasedAction("expand_ahead", _g_expand_ahead,
                     _c_expand_ahead, _m_expand_ahead,
                     guard_reads=()),
        PhasedAction("pull_child", _g_pull_child,
                     _c_pull_child, _m_pull_child,
                     guard_reads=(STATE, PARENT, SHAPE)),
        PhasedAction("contract_tail", _g_contract_tail,
                     _c_contract_tail, _m_contract_tail,
                     guard_reads=(STATE, PARENT)),
    )


def algorithm() -> Algorithm:
    return Algorithm("hexagon", hexagon_actions(), PUBLIC_VARS)


# --------------------------------------------------------------------------
# Target shape

def spiral(n: int, seed: Node = (0, 0), anchor: int = 0, winding: int = 1) -> list[Node]:
    """First ``n`` nodes of the hexagonal spiral.

    Starts at ``seed``, steps to its ``anchor`` neighbor, then repeatedly
    takes the unique free direction that keeps the already-built part on its
    ``winding`` side (+1 hugs counterclockwise, -1 clockwise). This is
    exactly the order in which settlers retire, so the first n nodes are the
    target shape for n amoebots.
    """
    if n <= 0:
        return []
    out = [seed]
    taken = {seed}
    if n == 1:
        return out
    cur = step(seed, anchor)
    out.append(cur)
    taken.add(cur)
    while len(out) < n:
        opts = [d for d in range(6)
                if step(cur, d) not in taken
                and step(cur, (d + winding) % 6) in taken]
        assert len(opts) == 1, f"spiral walk ambiguous at {cur}: {opts}"
        cur = step(cur, opts[0])
        out.append(cur)
        taken.add(cur)
    return out


def hexagon_defects(config: Configuration) -> list[str]:
    """Everything wrong with a configuration as a finished hexagon."""
    seeds = [a for a, mem in config.public.items() if mem.get(STATE) == SEED]
    if len(seeds) != 1:
        return [f"expected exactly one seed, found {len(seeds)}"]
    s = seeds[0]
    out = []
    for aid, pose in config.poses.items():
        if pose.expanded:
            out.append(f"amoebot {aid} is still expanded")
    for aid, mem in config.public.items():
        if aid != s and mem.get(STATE) != RETIRED:
            out.append(f"amoebot {aid} is {mem.get(STATE)!r}, not retired")
    if out:
        return out
    sori = config.orientations[s]
    sdir = config.public[s].get(DIR)
    if sdir is None:
        return ["seed has no frontier pointer"]
    n = len(config.poses)
    want = spiral(n + 1, config.poses[s].head,
                  sori.label_to_global(sdir), sori.chirality)
    occ = {pose.head: aid for aid, pose in config.poses.items()}
    if set(occ) != set(want[:-1]):
        return [f"occupied nodes do not form spiral({n})"]
    for k, node in enumerate(want[:-1]):
        aid = occ[node]
        d = config.public[aid].get(DIR)
        ori = config.orientations[aid]
        if d is None or step(node, ori.label_to_global(d)) != want[k + 1]:
            out.append(f"amoebot {aid} does not point at its spiral successor")
    return out


def is_hexagon(config: Configuration) -> bool:
    """Whether the configuration is a finished hexagon.

    One seed, everyone else retired and contracted, the occupied nodes form
    the spiral anchored at the seed's frontier pointer and winding with the
    seed's handedness, and every frontier pointer names its successor on the
    spiral (the last one naming the next free spiral node).
    """
    return not hexagon_defects(config)


# --------------------------------------------------------------------------
# Initial systems

ORIENTATION_MODES = ("common", "aligned", "mirrored", "assorted")


def _orientation(rng: random.Random, mode: str) -> Orientation:
    if mode == "common":
        return Orientation(rng.randrange(6), 1)
    if mode == "aligned":
        return Orientation(0, 1)
    if mode == "mirrored":
        return Orientation(rng.randrange(6), -1)
    if mode == "assorted":
        return Orientation(rng.randrange(6), rng.choice((1, -1)))
    raise ValueError(f"unknown orientation mode {mode!r}")


def random_initial(n: int, rng: random.Random,
                   orientation_mode: str = "common") -> Configuration:
    """A random connected system of ``n`` contracted amoebots.

    Grows a blob node by node from the origin, picking uniformly from the
    frontier. Amoebot 0 sits at the origin as the seed with its frontier
    pointer on angular index 0; everyone else starts idle. Orientation modes:
    common (shared handedness, random facings; the default, and the only one
    that settles into the canonical spiral), aligned, mirrored, assorted.
    """
    if n < 1:
        raise ValueError("need at least the seed")
    nodes = [(0, 0)]
    taken = {(0, 0)}
    frontier = set(neighbors((0, 0)))
    while len(nodes) < n:
        pick = rng.choice(sorted(frontier))
        frontier.discard(pick)
        taken.add(pick)
        nodes.append(pick)
        frontier.update(w for w in neighbors(pick) if w not in taken)
    poses = {}
    orientations = {}
    public = {}
    for aid, node in enumerate(nodes):
        poses[aid] = Pose(head=node)
        orientations[aid] = _orientation(rng, orientation_mode)
        if aid == 0:
            public[aid] = fresh_public(CONTRACTED, {STATE: SEED, PARENT: None,
                                                    DIR: 0})
        else:
            public[aid] = fresh_public(CONTRACTED, {STATE: IDLE, PARENT: None,
                                                    DIR: None})
    return Configuration(poses, orientations, public)
