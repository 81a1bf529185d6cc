"""Operation state machines and the system-layer message dispatcher.

Action bodies yield the small request objects at the top of this file; the
program runner turns the non-instant ones into Operation instances that live
on the acting amoebot until they succeed or fail. Each operation drives the
engine's physical truth (occupancy, edges, movements) and reacts to message
arrivals, connection feedback, and movement completions.

The message kinds and their meaning:

  read_request/read_ack        remote variable read, value snapshotted when
                               the ack is enqueued
  write_request                remote variable write, applied at receipt;
                               the writer's op succeeds when the request is
                               sent, not when it lands
  pull_request/pull_ack/_nack  handover: the acting expanded amoebot hands
                               one of its nodes to the acked contracted
                               neighbor; ownership of the node swaps the
                               instant the ack arrives, the two movements
                               animate the rest
  push_request/push_ack/_nack  handover, the mirror image: the acked
                               expanded neighbor hands the requested node
                               to the acting contracted amoebot
  lock_request/lock_ack/lock_nack/lock_conflict/lock/unlock
                               the locking handshake; unlock doubles as the
                               cleanup that releases a pending grant
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

from .core import (
    DISCONNECT, HANDOVER, LOCK, LOCK_FAIL, NACK, OCCUPIED, SHAPE, SHAPE_FAIL,
    Message, OperationFailure, SimulatorFault,
)
from .lattice import CONTRACTED, EXPANDED, Node, Pose, neighbors


# --------------------------------------------------------------------------
# Requests an action body may yield

@dataclass(frozen=True)
class Connected:
    port: Optional[int] = None


@dataclass(frozen=True)
class Read:
    port: Optional[int]
    var: str


@dataclass(frozen=True)
class Write:
    port: Optional[int]
    var: str
    value: object


@dataclass(frozen=True)
class Contract:
    which: str  # "head" or "tail": the node to pull in (vacate)


@dataclass(frozen=True)
class Expand:
    port: int


@dataclass(frozen=True)
class Pull:
    port: int


@dataclass(frozen=True)
class Push:
    port: int


@dataclass(frozen=True)
class Lock:
    pass


class LockedNeighbor(NamedTuple):
    nbr: int                      # local first-encounter number at lock time
    ports: tuple                  # my port labels reaching it at lock time
    edges: tuple                  # (host, faced) node pairs at lock time
    key: int                      # system-layer routing handle


@dataclass(frozen=True)
class Unlock:
    members: tuple                # LockedNeighbor entries to release
    unlock_self: bool = True


@dataclass(frozen=True)
class Note:
    """Zero-cost trace annotation from inside an action body."""
    key: str
    data: tuple = ()


class ExpandResult(NamedTuple):
    attempts: int


def make_operation(eng, bot, xid, item, resume):
    table = {
        Read: ReadOp, Write: WriteOp, Contract: ContractOp, Expand: ExpandOp,
        Pull: PullOp, Push: PushOp, Lock: LockOp, Unlock: UnlockOp,
    }
    cls = table.get(type(item))
    if cls is None:
        raise SimulatorFault(f"action yielded an unknown request {item!r}")
    return cls(eng, bot, xid, item, resume)


# --------------------------------------------------------------------------

class Operation:
    kind = "?"

    def __init__(self, eng, bot, xid, item, resume):
        self.eng = eng
        self.bot = bot
        self.xid = xid
        self.item = item
        self.resume = resume
        self.done = False
        self.result = (None, None)
        self.started = False
        eng.emit("op_start", aid=bot.aid, xid=xid, op=self.kind,
                 args=self.describe())

    def describe(self):
        return ()

    def start(self):
        raise NotImplementedError

    def finish(self, value=None, **info):
        if self.done:
            return
        self.done = True
        self.eng.emit("op_end", aid=self.bot.aid, xid=self.xid, op=self.kind,
                      outcome="ok", **info)
        self.result = (value, None)
        if self.started:
            self.resume(value, None)

    def fail(self, fkind: str, detail: str = "", **info):
        if self.done:
            return
        self.done = True
        self.eng.emit("op_end", aid=self.bot.aid, xid=self.xid, op=self.kind,
                      outcome=fkind, **info)
        self.result = (None, OperationFailure(fkind, detail))
        if self.started:
            self.resume(None, self.result[1])

    def launch(self):
        """Run start(); afterwards the runner checks self.done for a
        synchronous outcome, otherwise callbacks fire later."""
        self.start()
        self.started = True

    # notifications, overridden as needed
    def on_connect(self, edge, peer):
        pass

    def on_disconnect(self, edge, peer):
        pass

    def on_response(self, msg: Message, edge):
        pass


def _post(eng, bot, src: Node, dst: Node, kind: str, payload=(),
          on_sent=None, on_flushed=None):
    msg = Message(kind, bot.aid, src, dst, payload)
    msg.on_sent = on_sent
    msg.on_flushed = on_flushed
    eng.send(bot, src, dst, msg)
    return msg


# --------------------------------------------------------------------------

class ReadOp(Operation):
    kind = "read"

    def describe(self):
        return (self.item.port, self.item.var)

    def start(self):
        port = self.eng.resolve_port(self.bot, self.item.port)
        if port is None:
            self.fail(DISCONNECT, "no such port")
            return
        if not self.eng.edge_connected(port.node, port.faces):
            self.fail(DISCONNECT)
            return
        self.edge = (port.node, port.faces)
        _post(self.eng, self.bot, port.node, port.faces,
              "read_request", (self.item.var,))

    def on_response(self, msg, edge):
        if msg.kind == "read_ack" and msg.payload[0] == self.item.var:
            self.finish(msg.payload[1])

    def on_disconnect(self, edge, peer):
        if edge in (self.edge, (self.edge[1], self.edge[0])):
            self.fail(DISCONNECT)


class WriteOp(Operation):
    kind = "write"

    def describe(self):
        return (self.item.port, self.item.var)

    def start(self):
        port = self.eng.resolve_port(self.bot, self.item.port)
        if port is None:
            self.fail(DISCONNECT, "no such port")
            return
        if not self.eng.edge_connected(port.node, port.faces):
            self.fail(DISCONNECT)
            return
        self.edge = (port.node, port.faces)
        _post(self.eng, self.bot, port.node, port.faces, "write_request",
              (self.item.var, self.item.value, self.bot.aid, self.xid),
              on_sent=lambda m, e: self.finish(),
              on_flushed=lambda m, e: self.fail(DISCONNECT))

    def on_disconnect(self, edge, peer):
        # the flush callback handles the not-yet-sent case; once sent, the
        # write already counts as successful
        pass


class ContractOp(Operation):
    kind = "contract"

    def describe(self):
        return (self.item.which,)

    def start(self):
        bot = self.bot
        if not bot.pose.expanded:
            self.fail(SHAPE_FAIL)
            return
        if bot.movement_committed():
            self.fail(HANDOVER)
            return
        if self.item.which not in ("head", "tail"):
            raise SimulatorFault(f"bad contract argument {self.item.which!r}")
        vacate = bot.pose.head if self.item.which == "head" else bot.pose.tail
        self.vacate = vacate
        # edges on the vacated node drop at movement start
        for w in neighbors(vacate):
            if self.eng.edge_connected(vacate, w):
                self.eng.disconnect_edge(vacate, w, bot.aid)
        self.eng.begin_move(bot, "contract", vacate, self.xid, self._complete)

    def _complete(self, m):
        eng, bot = self.eng, self.bot
        at = eng.occupancy.pop(self.vacate, None)
        if at != bot.aid:
            raise SimulatorFault("contraction of a node not occupied by mover")
        keep = bot.pose.head if self.vacate == bot.pose.tail else bot.pose.tail
        bot.pose = Pose(head=keep)
        eng.set_public(bot, SHAPE, CONTRACTED, bot.aid, self.xid)
        eng.finish_move(m)
        self.finish()


class ExpandOp(Operation):
    kind = "expand"

    def describe(self):
        return (self.item.port,)

    def start(self):
        self.attempts = 0
        self.state = "attempt"
        self.pending_occupied = False
        bot = self.bot
        if bot.pose.expanded:
            self.fail(SHAPE_FAIL)
            return
        if bot.movement_committed():
            self.fail(HANDOVER)
            return
        port = self.eng.resolve_port(bot, self.item.port)
        if port is None:
            self.fail(SHAPE_FAIL, "no such port")
            return
        self.src = port.node
        self.target = port.faces
        self._attempt()

    def _attempt(self):
        if self.done:
            return
        eng, bot = self.eng, self.bot
        if bot.pose.expanded:
            # a handover moved us while we were waiting to retry
            self.fail(SHAPE_FAIL, "expanded while waiting")
            return
        if bot.movement_committed():
            # drafted into a neighbor's handover between retries
            self.fail(HANDOVER, "handover while waiting")
            return
        if eng.edge_connected(self.src, self.target):
            self.fail(OCCUPIED, attempts=self.attempts)
            return
        self.attempts += 1
        if self.target in eng.occupancy:
            # someone is mid-departure from the node; try again after
            # backing off
            self.state = "waiting"
            eng.schedule(eng.timing.backoff(eng.rng), 0, self._attempt)
            return
        self.state = "claiming"
        m = eng.begin_move(bot, "expand", self.target, self.xid, self._claimed)
        stack = eng.claims.setdefault(self.target, [])
        stack.append(m)
        if len(stack) > 1:
            self._collide_all()

    def _collide_all(self):
        eng = self.eng
        for m in list(eng.claims.get(self.target, ())):
            if m.kind != "expand" or m.cancelled:
                continue
            op = m.bot.op
            if not isinstance(op, ExpandOp):
                raise SimulatorFault("claim movement without an expand op")
            op._begin_retract(m)

    def _begin_retract(self, m):
        eng, bot = self.eng, self.bot
        eng.claims[self.target].remove(m)
        m.cancelled = True
        bot.moving = None
        eng.open_movements -= 1
        eng.emit("move_cancel", aid=bot.aid, xid=self.xid, kind="expand",
                 node=self.target)
        self.state = "retracting"
        rm = eng.begin_move(bot, "retract", self.target, self.xid, self._retracted)
        eng.claims[self.target].append(rm)

    def _retracted(self, m):
        eng = self.eng
        eng.claims[self.target].remove(m)
        if not eng.claims[self.target]:
            del eng.claims[self.target]
        self.bot.moving = None
        eng.open_movements -= 1
        eng.emit("move_end", aid=self.bot.aid, xid=self.xid, kind="retract",
                 pose=(self.bot.pose.head, self.bot.pose.tail))
        if self.pending_occupied:
            self.fail(OCCUPIED, attempts=self.attempts)
            return
        self.state = "waiting"
        eng.schedule(eng.timing.backoff(eng.rng), 0, self._attempt)

    def _claimed(self, m):
        eng, bot = self.eng, self.bot
        stack = eng.claims.get(self.target, [])
        if stack != [m]:
            raise SimulatorFault("contested claim reached completion")
        del eng.claims[self.target]
        if self.target in eng.occupancy:
            raise SimulatorFault("expansion completed into a blocked node")
        eng.occupancy[self.target] = bot.aid
        bot.pose = Pose(head=self.target, tail=self.src)
        eng.set_public(bot, SHAPE, EXPANDED, bot.aid, self.xid)
        eng.finish_move(m)
        eng.connect_new_node(bot, self.target)
        self.finish(ExpandResult(self.attempts), attempts=self.attempts)

    def on_connect(self, edge, peer):
        if edge != (self.src, self.target):
            return
        if self.state == "waiting":
            self.fail(OCCUPIED, attempts=self.attempts)
        elif self.state == "retracting":
            self.pending_occupied = True
        elif self.state == "claiming":
            raise SimulatorFault("connection on a node under exclusive claim")


class PullOp(Operation):
    kind = "pull"

    def describe(self):
        return (self.item.port,)

    def start(self):
        eng, bot = self.eng, self.bot
        if not bot.pose.expanded:
            self.fail(SHAPE_FAIL)
            return
        if bot.movement_committed():
            self.fail(HANDOVER)
            return
        port = eng.resolve_port(bot, self.item.port)
        if port is None:
            self.fail(SHAPE_FAIL, "no such port")
            return
        if not eng.edge_connected(port.node, port.faces):
            self.fail(DISCONNECT)
            return
        self.vacate = port.node
        self.keep = bot.pose.head if port.node == bot.pose.tail else bot.pose.tail
        self.child_node = port.faces
        bot.handover = {"role": "puller"}
        _post(eng, bot, port.node, port.faces, "pull_request",
              (bot.aid, self.xid),
              on_flushed=lambda m, e: self._aborted(DISCONNECT))

    def _aborted(self, fkind):
        self.bot.handover = None
        self.fail(fkind)

    def on_response(self, msg, edge):
        if msg.kind == "pull_nack":
            self._aborted(NACK)
        elif msg.kind == "pull_ack":
            eng, bot = self.eng, self.bot
            child = eng.bots[msg.src]
            eng.begin_move(bot, "h_contract", self.vacate, self.xid,
                           self._contracted)
            eng.begin_move(child, "h_expand", self.vacate, self.xid,
                           lambda m: _pullee_complete(eng, child, m, self.xid))
            eng.handover_swap(bot, child, self.vacate, self.keep,
                              self.child_node, self.xid)

    def on_disconnect(self, edge, peer):
        # the child vanished before answering; wait for the flush callback
        # rather than double-failing (once we are moving the handover has
        # committed and the edge teardown is our own doing)
        if self.done or self.bot.moving is not None:
            return
        a, b = edge
        if {a, b} == {self.vacate, self.child_node}:
            self._aborted(DISCONNECT)

    def _contracted(self, m):
        eng, bot = self.eng, self.bot
        eng.set_public(bot, SHAPE, CONTRACTED, bot.aid, self.xid)
        bot.handover = None
        eng.finish_move(m)
        self.finish()


class PushOp(Operation):
    kind = "push"

    def describe(self):
        return (self.item.port,)

    def start(self):
        eng, bot = self.eng, self.bot
        if bot.pose.expanded:
            self.fail(SHAPE_FAIL)
            return
        if bot.movement_committed():
            self.fail(HANDOVER)
            return
        port = eng.resolve_port(bot, self.item.port)
        if port is None:
            self.fail(SHAPE_FAIL, "no such port")
            return
        if not eng.edge_connected(port.node, port.faces):
            self.fail(DISCONNECT)
            return
        self.src = port.node
        self.target = port.faces
        bot.handover = {"role": "pusher"}
        _post(eng, bot, port.node, port.faces, "push_request",
              (bot.aid, self.xid),
              on_flushed=lambda m, e: self._aborted(DISCONNECT))

    def _aborted(self, fkind):
        self.bot.handover = None
        self.fail(fkind)

    def on_response(self, msg, edge):
        if msg.kind == "push_nack":
            self._aborted(NACK)
        elif msg.kind == "push_ack":
            eng, bot = self.eng, self.bot
            pushee = eng.bots[msg.src]
            keep = (pushee.pose.head if self.target == pushee.pose.tail
                    else pushee.pose.tail)
            eng.begin_move(bot, "h_expand", self.target, self.xid,
                           self._expanded)
            eng.begin_move(pushee, "h_contract", self.target, self.xid,
                           lambda m: _pushee_complete(eng, pushee, m, self.xid))
            eng.handover_swap(pushee, bot, self.target, keep, self.src,
                              self.xid)
            eng.set_public(bot, SHAPE, EXPANDED, bot.aid, self.xid)

    def on_disconnect(self, edge, peer):
        if self.done or self.bot.moving is not None:
            return
        a, b = edge
        if {a, b} == {self.src, self.target}:
            self._aborted(DISCONNECT)

    def _expanded(self, m):
        eng, bot = self.eng, self.bot
        bot.handover = None
        eng.finish_move(m)
        self.finish()


class LockOp(Operation):
    kind = "lock"

    def start(self):
        self.attempts = 0
        self.phase = "collect"
        self.members: dict = {}
        self.locks_out = 0
        self.final_members: list = []
        self._try()

    def _snapshot(self):
        """Current neighbors: aid -> (local number, ports, edges, request edge)."""
        eng, bot = self.eng, self.bot
        members: dict = {}
        order: dict = {}
        for p in eng.bot_ports(bot):
            if not eng.edge_connected(p.node, p.faces):
                continue
            peer = eng.occupancy.get(p.faces)
            if peer is None or peer == bot.aid:
                continue
            if peer not in order:
                order[peer] = len(order) + 1
                members[peer] = {
                    "nbr": order[peer], "ports": [p.label],
                    "edges": [(p.node, p.faces)], "req_edge": (p.node, p.faces),
                    "status": "pending",
                }
            else:
                members[peer]["ports"].append(p.label)
                members[peer]["edges"].append((p.node, p.faces))
        return members

    def _try(self):
        if self.done:
            return
        eng, bot = self.eng, self.bot
        if bot.grant_to is not None:
            # we promised our lock to a neighbor that asked first
            self._contend()
            return
        self.members = self._snapshot()
        if not self.members:
            self._complete()
            return
        for peer, m in self.members.items():
            src, dst = m["req_edge"]
            _post(eng, bot, src, dst, "lock_request", (bot.aid, self.xid))

    def on_response(self, msg, edge):
        if self.phase != "collect" or self.done:
            return
        peer = msg.src
        m = self.members.get(peer)
        if m is None or m["status"] != "pending":
            return
        if msg.kind == "lock_ack":
            m["status"] = "acked"
            if all(x["status"] == "acked" for x in self.members.values()):
                self._complete()
        elif msg.kind == "lock_nack":
            self._cleanup()
            self.fail(LOCK_FAIL, "neighbor already locked",
                      attempts=self.attempts + 1)
        elif msg.kind == "lock_conflict":
            self._contend()

    def _contend(self):
        self.attempts += 1
        self._cleanup()
        if self.attempts >= self.eng.timing.lock_attempt_cap:
            self.fail(LOCK_FAIL, "contention cap reached", attempts=self.attempts)
            return
        self.members = {}
        self.eng.schedule(self.eng.timing.backoff(self.eng.rng), 1, self._try)

    def _cleanup(self):
        """Release every grant this round may have produced."""
        eng, bot = self.eng, self.bot
        for peer, m in self.members.items():
            src, dst = m["req_edge"]
            if eng.edge_connected(src, dst):
                _post(eng, bot, src, dst, "unlock", (bot.aid, self.xid))

    def on_disconnect(self, edge, peer):
        if self.phase != "collect" or self.done:
            return
        m = self.members.get(peer)
        if m is None:
            return
        src, dst = m["req_edge"]
        if not self.eng.edge_connected(src, dst):
            # the neighbor left before the handshake finished
            del self.members[peer]
            if self.members and all(
                    x["status"] == "acked" for x in self.members.values()):
                self._complete()
            elif not self.members:
                self._complete()

    def _complete(self):
        eng, bot = self.eng, self.bot
        if bot.public.get(LOCK):
            self._cleanup()
            self.fail(LOCK_FAIL, "own lock bit already set",
                      attempts=self.attempts + 1)
            return
        self.phase = "locking"
        eng.set_public(bot, LOCK, True, bot.aid, self.xid)
        bot.locked_by = bot.aid
        acked = [(peer, m) for peer, m in self.members.items()
                 if m["status"] == "acked"]
        self.locks_out = 0
        self.final_members = []
        for peer, m in acked:
            route = self._route(peer, m)
            if route is None:
                continue
            self.locks_out += 1
            ln = LockedNeighbor(m["nbr"], tuple(m["ports"]), tuple(m["edges"]), peer)
            _post(eng, bot, route[0], route[1], "lock", (bot.aid, self.xid),
                  on_sent=lambda msg, e, ln=ln: self._lock_sent(ln),
                  on_flushed=lambda msg, e: self._lock_flushed())
        if self.locks_out == 0:
            self._succeed()

    def _route(self, peer, m):
        eng = self.eng
        for e in m["edges"]:
            if eng.edge_connected(*e) and eng.occupancy.get(e[1]) == peer:
                return e
        return None

    def _lock_sent(self, ln):
        self.final_members.append(ln)
        self.locks_out -= 1
        if self.locks_out == 0:
            self._succeed()

    def _lock_flushed(self):
        self.locks_out -= 1
        if self.locks_out == 0:
            self._succeed()

    def _succeed(self):
        members = tuple(sorted(self.final_members, key=lambda ln: ln.nbr))
        self.finish(members, locked=[ln.key for ln in members],
                    attempts=self.attempts + 1)


class UnlockOp(Operation):
    kind = "unlock"

    def describe(self):
        return (len(self.item.members), self.item.unlock_self)

    def start(self):
        eng, bot = self.eng, self.bot
        self.out = 0
        self.missing = 0
        for ln in self.item.members:
            route = None
            for e in ln.edges:
                if eng.edge_connected(*e) and eng.occupancy.get(e[1]) == ln.key:
                    route = e
                    break
            if route is None:
                route = self._route_anywhere(ln.key)
            if route is None:
                self.missing += 1
                continue
            self.out += 1
            _post(eng, bot, route[0], route[1], "unlock", (bot.aid, self.xid),
                  on_sent=lambda m, e: self._sent(),
                  on_flushed=lambda m, e: self._sent())
        if self.item.unlock_self:
            eng.set_public(bot, LOCK, False, bot.aid, self.xid)
            bot.locked_by = None
        if self.out == 0:
            self._finish_now()

    def _route_anywhere(self, peer):
        """Any live edge to the peer; poses may have changed since locking."""
        eng = self.eng
        for p in eng.bot_ports(self.bot):
            if (eng.occupancy.get(p.faces) == peer
                    and eng.edge_connected(p.node, p.faces)):
                return (p.node, p.faces)
        return None

    def _sent(self):
        self.out -= 1
        if self.out == 0:
            self._finish_now()

    def _finish_now(self):
        if self.missing:
            self.fail(DISCONNECT, f"{self.missing} locked neighbor(s) unreachable")
        else:
            self.finish()


# --------------------------------------------------------------------------
# System-layer receive side

def dispatch_message(eng, bot, msg: Message, edge):
    kind = msg.kind
    back = (edge[1], edge[0])

    if kind in ("pull_request", "push_request") and bot.busy:
        # a mid-action amoebot answers handover requests only between
        # actions: dragging it between two of its own operation stages would
        # hand it a pose its in-progress computation knows nothing about.
        # The engine replays these when the current action finishes, nacking
        # any whose validity the action itself wiped out (see _action_done).
        bot.deferred.append((msg, edge, bot.self_writes))
        eng.emit("msg_defer", mkind=kind, src=msg.src, aid=bot.aid)
        return

    if kind == "read_request":
        var = msg.payload[0]
        value = bot.public.get(var)
        _post(eng, bot, back[0], back[1], "read_ack", (var, value))
        return

    if kind == "write_request":
        var, value, by, xid = msg.payload
        eng.set_public(bot, var, value, by, xid)
        return

    if kind == "pull_request":
        by, xid = msg.payload
        if (bot.pose.expanded or bot.movement_committed()
                or bot.public.get(LOCK)):
            _post(eng, bot, back[0], back[1], "pull_nack", (bot.aid,))
            return
        bot.handover = {"role": "pullee", "node": edge[0],
                        "partner": msg.src, "xid": xid}
        _post(eng, bot, back[0], back[1], "pull_ack", (bot.aid,),
              on_sent=lambda m, e: _pullee_start(eng, bot, xid),
              on_flushed=lambda m, e: _handover_revoked(bot))
        return

    if kind == "push_request":
        by, xid = msg.payload
        if ((not bot.pose.expanded) or bot.movement_committed()
                or bot.public.get(LOCK)):
            _post(eng, bot, back[0], back[1], "push_nack", (bot.aid,))
            return
        bot.handover = {"role": "pushee", "node": edge[1],
                        "partner": msg.src, "xid": xid}
        _post(eng, bot, back[0], back[1], "push_ack", (bot.aid,),
              on_flushed=lambda m, e: _handover_revoked(bot))
        return

    if kind == "lock_request":
        _answer_lock_request(eng, bot, msg, back)
        return

    if kind == "lock":
        by, xid = msg.payload
        if bot.grant_to != by:
            raise SimulatorFault("lock message without a matching grant")
        if bot.public.get(LOCK):
            raise SimulatorFault("double lock")
        bot.grant_to = None
        bot.locked_by = by
        eng.set_public(bot, LOCK, True, by, xid)
        return

    if kind == "unlock":
        by, xid = msg.payload
        if bot.grant_to == by:
            bot.grant_to = None
        if bot.locked_by == by and bot.public.get(LOCK):
            bot.locked_by = None
            eng.set_public(bot, LOCK, False, by, xid)
        return

    # everything else answers an operation in flight on this amoebot
    if bot.op is not None and not bot.op.done:
        bot.op.on_response(msg, edge)


def _answer_lock_request(eng, bot, msg, back):
    by, xid = msg.payload
    op = bot.op
    own_lock_running = (isinstance(op, LockOp) and not op.done
                        and op.phase == "collect")
    if own_lock_running:
        # both contenders see a conflict and back off for different spans
        _post(eng, bot, back[0], back[1], "lock_conflict", (bot.aid,))
    elif bot.public.get(LOCK):
        _post(eng, bot, back[0], back[1], "lock_nack", (bot.aid,))
    elif bot.grant_to is not None:
        _post(eng, bot, back[0], back[1], "lock_conflict", (bot.aid,))
    else:
        bot.grant_to = by
        _post(eng, bot, back[0], back[1], "lock_ack", (bot.aid,))


def refuse_handover(eng, bot, msg: Message, edge):
    """Nack a held pull or push request without touching any other state."""
    kind = "pull_nack" if msg.kind == "pull_request" else "push_nack"
    _post(eng, bot, edge[1], edge[0], kind, (bot.aid,))


def _handover_revoked(bot):
    bot.handover = None


def _pullee_start(eng, bot, xid: int):
    # the ack is on the wire: from here on the pullee reads as expanded,
    # even though the node itself changes hands when the ack arrives
    if bot.handover is None or bot.handover.get("role") != "pullee":
        return
    eng.set_public(bot, SHAPE, EXPANDED, bot.handover["partner"], xid)


def _pullee_complete(eng, bot, m, xid: int):
    bot.handover = None
    eng.finish_move(m)


def _pushee_complete(eng, bot, m, xid: int):
    partner = bot.handover["partner"] if bot.handover else bot.aid
    eng.set_public(bot, SHAPE, CONTRACTED, partner, xid)
    bot.handover = None
    eng.finish_move(m)
