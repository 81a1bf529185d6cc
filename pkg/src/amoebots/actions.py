"""Action framework: guarded actions, local views, and the two executors.

An algorithm is an ordered list of guarded actions. Guards are pure functions
over a LocalView, which packages everything one amoebot can legally see: its
own public variables and pose, which ports are connected, bond metadata for
each connected port, and (once fetched) the public variables of each
neighbor. The same guard functions run in two worlds:

* live, inside the simulation, where the view is assembled through real
  Connected and Read operations and can therefore go stale or fail, and
* as an oracle over a configuration snapshot, which is what the adversary,
  termination detection, replays, and brute-force enumeration use.

Bodies are generators that yield operation requests (see operations.py) and
receive results back; operation failures are thrown into the generator so an
algorithm can install handlers with ordinary try/except.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from . import operations as ops
from .core import (
    ACT, AWAKEN, LOCK, SHAPE, Configuration, OperationFailure, SimulatorFault,
)
from .lattice import (
    CONTRACTED, EXPANDED, Pose, direction_between, neighbors, ports_of,
    pull_relangle, step,
)


class Unreadable(Exception):
    """A guard touched a neighbor whose variables could not be read."""


_MISSING = object()


@dataclass
class PortView:
    label: int
    connected: bool
    nbr: Optional[int] = None          # first-encounter local number
    peer_label: Optional[int] = None   # the neighbor's label for this edge
    peer_langle: Optional[int] = None  # the neighbor's angular index for it
    peer_chirality: Optional[int] = None
    peer_on_head: Optional[bool] = None  # port touches the neighbor's head node
    on_my_head: bool = True            # hosted on my head node
    langle: int = 0                    # angular index around the host node, in
                                       # the amoebot's own handedness; equals
                                       # the label this direction gets when
                                       # contracted
    pull_parent_langle: Optional[int] = None  # angular index a contracted
                                       # neighbor would use for its edge toward
                                       # my remaining node after I pull it
                                       # through here
    vars: Optional[dict] = None        # neighbor's public vars, shared per nbr


class LocalView:
    """What one amoebot can see of itself and its immediate neighborhood."""

    def __init__(self, own: dict, shape: str, ports: list[PortView]):
        self.own = own
        self.shape = shape
        self.ports = ports

    @property
    def expanded(self) -> bool:
        return self.shape == EXPANDED

    def connected(self, label: int) -> bool:
        return self.ports[label].connected

    def connected_labels(self) -> list[int]:
        return [p.label for p in self.ports if p.connected]

    def head_labels(self) -> list[int]:
        return [p.label for p in self.ports if p.on_my_head]

    def tail_labels(self) -> list[int]:
        return [p.label for p in self.ports if not p.on_my_head]

    def nbr_var(self, label: int, var: str):
        """A neighbor's public variable; raises Unreadable when unavailable."""
        p = self.ports[label]
        if not p.connected:
            raise Unreadable(f"port {label} is not connected")
        if p.vars is None:
            raise Unreadable(f"neighbor on port {label} could not be read")
        return p.vars.get(var)

    def neighbor_numbers(self) -> list[int]:
        out = []
        for p in self.ports:
            if p.nbr is not None and p.nbr not in out:
                out.append(p.nbr)
        return out

    def any_nbr(self, pred: Callable[[int], bool]) -> bool:
        """True if pred holds on some connected port, one per neighbor."""
        seen = set()
        for p in self.ports:
            if not p.connected or p.nbr in seen:
                continue
            seen.add(p.nbr)
            if pred(p.label):
                return True
        return False

    def all_nbrs(self, pred: Callable[[int], bool]) -> bool:
        return not self.any_nbr(lambda lb: not pred(lb))


@dataclass(frozen=True)
class ActionSpec:
    """One guarded action: name, pure guard, and a generator body."""

    label: str
    guard: Callable[[LocalView], bool]
    body: Callable
    guard_reads: tuple[str, ...] = ()


@dataclass(frozen=True)
class PhasedAction:
    """An action split into a compute phase and one optional movement.

    The compute generator may read, do private computation, and yield Write
    requests; it must not move. ``move`` inspects the private result and
    returns a single movement request (or None). The split is what the
    locking transform keys on, and running the phases back to back is exactly
    the plain semantics.
    """

    label: str
    guard: Callable[[LocalView], bool]
    compute: Callable
    move: Callable
    guard_reads: tuple[str, ...] = ()

    @property
    def body(self):
        compute, move = self.compute, self.move
        def run(ctx):
            yield from compute(ctx)
            m = move(ctx)
            if m is not None:
                yield m
        return run


@dataclass
class Algorithm:
    name: str
    actions: tuple
    public_vars: tuple[str, ...] = ()       # algorithm-owned public variables

    def find(self, label: str):
        for a in self.actions:
            if a.label == label:
                return a
        raise KeyError(label)

    def eval_guard(self, action, view: LocalView) -> Optional[bool]:
        """True/False, or None when the guard touched an unreadable neighbor."""
        try:
            return bool(action.guard(view))
        except Unreadable:
            return None

    def choose(self, view: LocalView) -> Optional[str]:
        """Highest-priority enabled action label, unreadable counting as false."""
        for a in self.actions:
            if self.eval_guard(a, view):
                return a.label
        return None


class Ctx:
    """Handed to action bodies: the guard-time view plus small helpers."""

    __slots__ = ("view", "scratch")

    def __init__(self, view: LocalView):
        self.view = view
        self.scratch: dict = {}


# --------------------------------------------------------------------------
# View builders

def _group_ports(pose, orientation, occupant_of, connected_of):
    """Shared shaping for both view builders.

    occupant_of(node) -> opaque neighbor key or None.
    connected_of(port) -> bool, whether the edge is up.
    """
    out = []
    first_seen: dict = {}
    for p in ports_of(pose, orientation):
        occ = occupant_of(p.faces)
        conn = occ is not None and connected_of(p)
        pv = PortView(p.label, conn, on_my_head=(p.node == pose.head),
                      langle=orientation.global_to_label(p.gdir))
        if conn:
            if occ not in first_seen:
                first_seen[occ] = len(first_seen) + 1
            pv.nbr = first_seen[occ]
        out.append(pv)
    return out


def _attach_pull_labels(pviews, plist, pose) -> None:
    """Fill in pull_parent_langle on connected ports of an expanded pose.

    A pull through a port vacates that port's host node, so the remaining
    node is the opposite one. Pure geometry from bond metadata; meaningless
    (and unused) when the neighbor on the other end is itself expanded.
    """
    if not pose.expanded:
        return
    for pv, port in zip(pviews, plist):
        if not pv.connected or pv.peer_langle is None:
            continue
        remaining = pose.tail if pv.on_my_head else pose.head
        pv.pull_parent_langle = pull_relangle(
            port.faces, port.node, remaining, pv.peer_langle, pv.peer_chirality)


def build_oracle_view(eng, bot) -> LocalView:
    """A view straight out of engine state, bypassing messages entirely."""
    occ = eng.occupancy

    def occupant_of(node):
        aid = occ.get(node)
        return None if aid == bot.aid else aid

    def connected_of(port):
        return eng.edge_connected(port.node, port.faces)

    ports = _group_ports(bot.pose, bot.orientation, occupant_of, connected_of)
    plist = eng.bot_ports(bot)
    for pv, port in zip(ports, plist):
        if not pv.connected:
            continue
        peer = eng.bots[occ[port.faces]]
        pv.vars = peer.public
        pv.peer_label = eng.peer_port_label(port.faces, port.node)
        pv.peer_langle = peer.orientation.global_to_label(
            direction_between(port.faces, port.node))
        pv.peer_chirality = peer.orientation.chirality
        pv.peer_on_head = port.faces == peer.pose.head
    _attach_pull_labels(ports, plist, bot.pose)
    return LocalView(bot.public, bot.pose.shape, ports)


def build_config_view(config: Configuration, aid: int,
                      occ: Optional[dict] = None) -> LocalView:
    """Oracle view over a plain Configuration (for replays and enumeration)."""
    if occ is None:
        occ = config.occupancy()
    pose = config.poses[aid]
    ori = config.orientations[aid]

    def occupant_of(node):
        b = occ.get(node)
        return None if b is None or b == aid else b

    ports = _group_ports(pose, ori, occupant_of, lambda p: True)
    plist = ports_of(pose, ori)
    for pv, port in zip(ports, plist):
        if not pv.connected:
            continue
        baid = occ[port.faces]
        bpose = config.poses[baid]
        bori = config.orientations[baid]
        pv.vars = config.public[baid]
        for bp in ports_of(bpose, bori):
            if bp.node == port.faces and bp.faces == port.node:
                pv.peer_label = bp.label
                break
        pv.peer_langle = bori.global_to_label(
            direction_between(port.faces, port.node))
        pv.peer_chirality = bori.chirality
        pv.peer_on_head = port.faces == bpose.head
    _attach_pull_labels(ports, plist, pose)
    return LocalView(config.public[aid], pose.shape, ports)


# --------------------------------------------------------------------------
# Live execution

class ProgramRunner:
    """Drives one activation: guard evaluation, then the chosen body."""

    def __init__(self, eng, bot, xid: int, forced_label=None, on_done=None):
        self.eng = eng
        self.bot = bot
        self.xid = xid
        self.forced_label = forced_label
        self.on_done = on_done
        self.gen = None
        self.chosen = None

    def start(self):
        self.gen = self._program()
        self._advance(None, None)

    def _program(self):
        eng, bot = self.eng, self.bot
        algo = eng.algorithm
        if self.forced_label is not None:
            label = self.forced_label
            view = build_oracle_view(eng, bot)
        else:
            view = None
            for _ in range(4):
                view = yield from self._live_view(algo)
                if view is not None:
                    break
            if view is None:
                # kept getting dragged through handovers mid-read; give the
                # activation back rather than guess from torn data
                return ("disabled", None)
            label = None
            for a in algo.actions:
                try:
                    g = bool(a.guard(view))
                    res = "true" if g else "false"
                except Unreadable:
                    g, res = False, "unreadable"
                eng.emit("guard", aid=bot.aid, xid=self.xid, label=a.label,
                         result=res)
                if g:
                    label = a.label
                    break
        if label is None:
            return ("disabled", None)
        self.chosen = label
        eng.emit("choose", aid=bot.aid, xid=self.xid, label=label)
        ctx = Ctx(view)
        yield from algo.find(label).body(ctx)
        return ("success", label)

    def _live_view(self, algo):
        """Assemble a LocalView through real operations, fetching lazily.

        All declared public variables of the algorithm are read once per
        neighbor (one read per variable over the lowest connected port); a
        failure marks that whole neighbor unreadable for this activation.

        The view describes one pose. When a handover drags the executing
        amoebot mid-assembly, every port label already gathered belongs to a
        pose that no longer exists, so the build returns None and the caller
        starts over.
        """
        eng, bot = self.eng, self.bot
        pose0 = bot.pose
        conn = yield ops.Connected()
        ports = eng.bot_ports(bot)
        pviews = []
        first_seen: dict = {}
        rep: dict = {}
        for port, is_conn in zip(ports, conn):
            pv = PortView(port.label, is_conn,
                          on_my_head=(port.node == pose0.head),
                          langle=bot.orientation.global_to_label(port.gdir))
            if is_conn:
                peer_aid = eng.occupancy.get(port.faces)
                if peer_aid is None:
                    pv.connected = False
                else:
                    if peer_aid not in first_seen:
                        first_seen[peer_aid] = len(first_seen) + 1
                        rep[peer_aid] = (port.label, pv)
                    peer = eng.bots[peer_aid]
                    pv.nbr = first_seen[peer_aid]
                    pv.peer_label = eng.peer_port_label(port.faces, port.node)
                    pv.peer_langle = peer.orientation.global_to_label(
                        direction_between(port.faces, port.node))
                    pv.peer_chirality = peer.orientation.chirality
                    pv.peer_on_head = port.faces == peer.pose.head
            pviews.append(pv)
        # one vars dict per neighbor, shared by all of its ports
        shared: dict = {}
        for peer_aid, (label, _) in rep.items():
            vals: Optional[dict] = {}
            for var in algo.public_vars:
                try:
                    v = yield ops.Read(label, var)
                except OperationFailure:
                    vals = None
                    break
                vals[var] = v
            if vals is not None:
                try:
                    vals[SHAPE] = yield ops.Read(label, SHAPE)
                except OperationFailure:
                    vals = None
            shared[peer_aid] = vals
        if bot.pose.head != pose0.head or bot.pose.tail != pose0.tail:
            return None
        for pv, port in zip(pviews, ports):
            if pv.connected:
                peer_aid = eng.occupancy.get(port.faces)
                pv.vars = shared.get(peer_aid)
        _attach_pull_labels(pviews, ports, pose0)
        return LocalView(bot.public, pose0.shape, pviews)

    # -- generator pump ----------------------------------------------------

    def _advance(self, value, failure):
        eng, bot = self.eng, self.bot
        while True:
            try:
                if failure is not None:
                    f, failure = failure, None
                    item = self.gen.throw(f)
                else:
                    item = self.gen.send(value)
            except StopIteration as stop:
                outcome, label = stop.value if stop.value else ("success", self.chosen)
                self._done(outcome, label, None)
                return
            except OperationFailure as f:
                self._done("failure", self.chosen, f.kind)
                return
            value = None
            res = self._start_item(item)
            if res is _PENDING:
                return
            value, failure = res

    def _start_item(self, item):
        eng, bot, xid = self.eng, self.bot, self.xid
        if isinstance(item, ops.Note):
            eng.emit("note", aid=bot.aid, xid=xid, key=item.key, data=item.data)
            return (None, None)
        if isinstance(item, ops.Connected):
            eng.emit("op_start", aid=bot.aid, xid=xid, op="connected",
                     args=(item.port,))
            ports = eng.bot_ports(bot)
            arr = [eng.edge_connected(p.node, p.faces) for p in ports]
            out = arr if item.port is None else arr[item.port]
            eng.emit("op_end", aid=bot.aid, xid=xid, op="connected", outcome="ok")
            return (out, None)
        if isinstance(item, ops.Read) and item.port is None:
            eng.emit("op_start", aid=bot.aid, xid=xid, op="read", args=(None, item.var))
            val = bot.public.get(item.var, _MISSING)
            if val is _MISSING:
                val = None
            eng.emit("op_end", aid=bot.aid, xid=xid, op="read", outcome="ok")
            return (val, None)
        if isinstance(item, ops.Write) and item.port is None:
            eng.emit("op_start", aid=bot.aid, xid=xid, op="write",
                     args=(None, item.var))
            eng.set_public(bot, item.var, item.value, bot.aid, xid)
            eng.emit("op_end", aid=bot.aid, xid=xid, op="write", outcome="ok")
            return (None, None)
        op = ops.make_operation(self.eng, bot, xid, item, self._resume)
        bot.op = op
        op.launch()
        if op.done:
            bot.op = None
            return op.result
        return _PENDING

    def _resume(self, value, failure):
        self.bot.op = None
        self._advance(value, failure)

    def _done(self, outcome, label, failkind):
        if self.on_done is not None:
            self.on_done(self.bot, self.xid, outcome, label, failkind)


_PENDING = object()


# --------------------------------------------------------------------------
# Instant sequential execution over a Configuration

class SeqExecutor:
    """Runs actions to completion against a Configuration, no clock, no
    messages. This is the reference semantics: one amoebot at a time, every
    operation instantaneous, handovers resolved atomically. Used for replays
    and brute-force outcome enumeration; physical rules are still enforced
    and operations raise the same failures they would raise live.
    """

    def __init__(self, config: Configuration, algorithm: Algorithm):
        self.c = config
        self.algo = algorithm
        self.writes_log: list = []

    # -- views ---------------------------------------------------------

    def view(self, aid: int) -> LocalView:
        return build_config_view(self.c, aid)

    def enabled_labels(self, aid: int) -> list[str]:
        view = self.view(aid)
        out = []
        for a in self.algo.actions:
            if self.algo.eval_guard(a, view):
                out.append(a.label)
        return out

    def choose(self, aid: int) -> Optional[str]:
        return self.algo.choose(self.view(aid))

    def enabled_anywhere(self) -> list[int]:
        return [aid for aid in sorted(self.c.poses) if self.choose(aid) is not None]

    # -- execution -------------------------------------------------------

    def execute(self, aid: int, label: Optional[str] = None) -> tuple[str, Optional[str]]:
        """Run one activation; returns (outcome, failure kind or None)."""
        view = self.view(aid)
        if label is None:
            label = self.algo.choose(view)
            if label is None:
                return ("disabled", None)
        action = self.algo.find(label)
        ctx = Ctx(view)
        gen = action.body(ctx)
        value = None
        failure = None
        try:
            while True:
                if failure is not None:
                    f, failure = failure, None
                    item = gen.throw(f)
                else:
                    item = gen.send(value)
                value = None
                try:
                    value = self._do(aid, item)
                except OperationFailure as f:
                    failure = f
        except StopIteration:
            return ("success", None)
        except OperationFailure as f:
            return ("failure", f.kind)

    def _occ(self):
        return self.c.occupancy()

    def _port(self, aid, label):
        plist = ports_of(self.c.poses[aid], self.c.orientations[aid])
        if not (0 <= label < len(plist)):
            raise OperationFailure("shape-failure", "no such port")
        return plist[label]

    def _write(self, owner: int, var: str, value, by: int):
        self.c.public[owner][var] = value
        self.writes_log.append((owner, var, value, by))

    def _do(self, aid: int, item):
        c = self.c
        if isinstance(item, ops.Note):
            return None
        if isinstance(item, ops.Connected):
            occ = self._occ()
            plist = ports_of(c.poses[aid], c.orientations[aid])
            arr = [occ.get(p.faces) is not None for p in plist]
            return arr if item.port is None else arr[item.port]
        if isinstance(item, ops.Read):
            if item.port is None:
                return c.public[aid].get(item.var)
            p = self._port(aid, item.port)
            b = self._occ().get(p.faces)
            if b is None:
                raise OperationFailure("disconnect-failure")
            return c.public[b].get(item.var)
        if isinstance(item, ops.Write):
            if item.port is None:
                self._write(aid, item.var, item.value, aid)
                return None
            p = self._port(aid, item.port)
            b = self._occ().get(p.faces)
            if b is None:
                raise OperationFailure("disconnect-failure")
            self._write(b, item.var, item.value, aid)
            return None
        if isinstance(item, ops.Expand):
            pose = c.poses[aid]
            if pose.expanded:
                raise OperationFailure("shape-failure")
            p = self._port(aid, item.port)
            if self._occ().get(p.faces) is not None:
                raise OperationFailure("occupied-failure")
            c.poses[aid] = Pose(head=p.faces, tail=pose.head)
            self._write(aid, SHAPE, EXPANDED, aid)
            return ops.ExpandResult(attempts=1)
        if isinstance(item, ops.Contract):
            pose = c.poses[aid]
            if not pose.expanded:
                raise OperationFailure("shape-failure")
            keep = pose.tail if item.which == "head" else pose.head
            c.poses[aid] = Pose(head=keep)
            self._write(aid, SHAPE, CONTRACTED, aid)
            return None
        if isinstance(item, ops.Pull):
            pose = c.poses[aid]
            if not pose.expanded:
                raise OperationFailure("shape-failure")
            p = self._port(aid, item.port)
            occ = self._occ()
            b = occ.get(p.faces)
            if b is None:
                raise OperationFailure("disconnect-failure")
            bpose = c.poses[b]
            if bpose.expanded or c.public[b].get(LOCK):
                raise OperationFailure("nack-failure")
            vac = p.node
            keep = pose.head if vac == pose.tail else pose.tail
            c.poses[aid] = Pose(head=keep)
            self._write(aid, SHAPE, CONTRACTED, aid)
            c.poses[b] = Pose(head=vac, tail=bpose.head)
            self._write(b, SHAPE, EXPANDED, aid)
            return None
        if isinstance(item, ops.Push):
            pose = c.poses[aid]
            if pose.expanded:
                raise OperationFailure("shape-failure")
            p = self._port(aid, item.port)
            occ = self._occ()
            b = occ.get(p.faces)
            if b is None:
                raise OperationFailure("disconnect-failure")
            bpose = c.poses[b]
            if not bpose.expanded or c.public[b].get(LOCK):
                raise OperationFailure("nack-failure")
            w = p.faces
            bkeep = bpose.head if w == bpose.tail else bpose.tail
            c.poses[b] = Pose(head=bkeep)
            self._write(b, SHAPE, CONTRACTED, aid)
            c.poses[aid] = Pose(head=w, tail=pose.head)
            self._write(aid, SHAPE, EXPANDED, aid)
            return None
        if isinstance(item, ops.Lock):
            if c.public[aid].get(LOCK):
                raise OperationFailure("lock-failure")
            occ = self._occ()
            members = []
            plist = ports_of(c.poses[aid], c.orientations[aid])
            first: dict = {}
            for p in plist:
                b = occ.get(p.faces)
                if b is None or b == aid:
                    continue
                if b not in first:
                    first[b] = ops.LockedNeighbor(
                        nbr=len(first) + 1, ports=(p.label,),
                        edges=((p.node, p.faces),), key=b)
                else:
                    m = first[b]
                    first[b] = ops.LockedNeighbor(
                        nbr=m.nbr, ports=m.ports + (p.label,),
                        edges=m.edges + ((p.node, p.faces),), key=b)
            for b in first:
                if c.public[b].get(LOCK):
                    raise OperationFailure("lock-failure")
            self._write(aid, LOCK, True, aid)
            for b, m in first.items():
                self._write(b, LOCK, True, aid)
                members.append(m)
            return tuple(members)
        if isinstance(item, ops.Unlock):
            for m in item.members:
                self._write(m.key, LOCK, False, aid)
            if item.unlock_self:
                self._write(aid, LOCK, False, aid)
            return None
        raise SimulatorFault(f"unknown operation request {item!r}")

    # -- whole-run helpers -------------------------------------------------

    def run_to_quiescence(self, order: str = "min", max_steps: int = 100_000):
        """Greedy sequential schedule until no action is enabled."""
        steps = 0
        while steps < max_steps:
            en = self.enabled_anywhere()
            if not en:
                return steps
            aid = en[0] if order == "min" else en[-1]
            self.execute(aid)
            steps += 1
        raise SimulatorFault("sequential run did not quiesce")
