"""Discrete-event core: clock, channels, movements, adversary, run loop.

Simulated time is an integer tick count. Events at equal times are ordered by
tier (physical completions, then message steps, then activations) and then by
insertion order, so a run is a pure function of its seed. All randomness comes
from one seeded generator owned by the engine.

The engine owns the physical truth: node occupancy, the connection set, the
per-edge channels, and in-flight movements. Operations (see operations.py)
are small state machines that drive this truth on behalf of one amoebot each;
the engine calls back into them when messages land, edges drop, or movements
finish.
"""

from __future__ import annotations

import heapq
import itertools
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import operations as ops_mod
from .actions import Algorithm, ProgramRunner, build_oracle_view
from .core import (
    ACT, LOCK, PORT_BUFFER_CAPACITY, SHAPE,
    Configuration, Message, SimulatorFault,
    connected_occupancy, fresh_public, validate_configuration,
)
from .lattice import Node, Orientation, Pose, distance, neighbors, ports_of

TIER_PHYSICAL = 0
TIER_MESSAGE = 1
TIER_ACTIVATION = 2

SEQUENTIAL = "sequential"
K_ISOLATED = "k-isolated"
SYNCHRONOUS = "synchronous"
ASYNC = "async"

UNFAIR = "unfair"
WEAKLY_FAIR = "weakly-fair"
STRONGLY_FAIR = "strongly-fair"

RANDOM = "random"
FIXED_PRIORITY = "fixed-priority"
LIFO = "lifo"
ROUND_ROBIN = "round-robin"


@dataclass(frozen=True)
class Timing:
    """Duration model, all in integer ticks.

    Movements take a uniformly random duration in (epsilon*T, T]. A message
    spends two uniform stages in (0, dmax//2] ticks each (buffer residence,
    then wire time), so its total latency is at most dmax when uncontended.
    Failed expansions back off for a uniform time in [5T, backoff_c*T].
    """

    T: int = 1_000_000
    epsilon: float = 0.1
    dmax: int = 250_000
    backoff_c: float = 10.0
    lock_attempt_cap: int = 64

    def move_duration(self, rng: random.Random) -> int:
        lo = int(self.epsilon * self.T)
        return rng.randint(lo + 1, self.T)

    def stage_latency(self, rng: random.Random) -> int:
        return rng.randint(1, max(1, self.dmax // 2))

    def backoff(self, rng: random.Random) -> int:
        return rng.randint(5 * self.T, int(self.backoff_c * self.T))


@dataclass(frozen=True)
class AdversaryConfig:
    concurrency: str = ASYNC
    k: int = 2                      # isolation radius for k-isolated
    fairness: str = UNFAIR
    policy: str = RANDOM
    horizon_factor: int = 10        # fairness horizon, in multiples of n

    def __post_init__(self):
        if self.concurrency not in (SEQUENTIAL, K_ISOLATED, SYNCHRONOUS, ASYNC):
            raise ValueError(f"unknown concurrency class {self.concurrency!r}")
        if self.fairness not in (UNFAIR, WEAKLY_FAIR, STRONGLY_FAIR):
            raise ValueError(f"unknown fairness class {self.fairness!r}")
        if self.policy not in (RANDOM, FIXED_PRIORITY, LIFO, ROUND_ROBIN):
            raise ValueError(f"unknown activation policy {self.policy!r}")


@dataclass
class Movement:
    kind: str                   # expand | retract | contract | h_expand | h_contract
    bot: "Bot"
    node: Node                  # node being claimed (expand) or vacated (contract)
    t0: int
    t1: int
    xid: int
    on_complete: Callable
    cancelled: bool = False     # a colliding expand flips to a retraction


@dataclass
class Channel:
    """Directed message lane along one connected lattice edge."""

    src: Node
    dst: Node
    src_aid: int
    dst_aid: int
    queue: deque = field(default_factory=deque)
    in_transit: Optional[Message] = None


class Bot:
    """Engine-side record for one amoebot."""

    __slots__ = (
        "aid", "pose", "orientation", "public", "private",
        "op", "runner", "moving", "handover", "grant_to", "locked_by",
        "pending", "forced_label", "enabled_since", "enabled_seen",
        "enabled_stamp", "backlog", "deferred", "self_writes",
    )

    def __init__(self, aid: int, pose: Pose, orientation: Orientation, public: dict):
        self.aid = aid
        self.pose = pose
        self.orientation = orientation
        self.public = public
        self.private: dict = {}
        self.op = None              # current operation state machine
        self.runner = None          # ProgramRunner while an action executes
        self.moving: Optional[Movement] = None
        self.handover: Optional[dict] = None
        self.grant_to: Optional[int] = None
        self.locked_by: Optional[int] = None
        self.pending = False        # activation scheduled but not yet fired
        self.forced_label = None    # synchronous stages pin the choice
        self.enabled_since: Optional[int] = None
        self.enabled_seen = 0
        self.enabled_stamp = 0      # for LIFO: when it last became enabled
        self.backlog = 0
        self.deferred: list = []    # handover requests held while busy
        self.self_writes = 0        # how often this amoebot wrote its own vars

    @property
    def busy(self) -> bool:
        return self.runner is not None

    def movement_committed(self) -> bool:
        """True while physically moving or committed to a handover."""
        return self.moving is not None or self.handover is not None


@dataclass
class RunResult:
    status: str                     # terminated | limit | violation
    initial: Configuration
    final: Configuration
    end_time: int
    events: int
    trace: list
    violations: list
    stats: dict
    seed: Optional[int] = None
    meta: dict = field(default_factory=dict)

    @property
    def terminated(self) -> bool:
        return self.status == "terminated"


class Engine:
    def __init__(
        self,
        config: Configuration,
        algorithm: Algorithm,
        adversary: AdversaryConfig = AdversaryConfig(),
        timing: Timing = Timing(),
        seed: int = 0,
        max_events: int = 20_000_000,
        max_ticks: Optional[int] = None,
        check_connectivity: bool = True,
        collect_trace: bool = True,
    ):
        problems = validate_configuration(config)
        if problems:
            raise SimulatorFault("invalid initial configuration: " + "; ".join(problems))
        self.algorithm = algorithm
        self.adv = adversary
        self.timing = timing
        self.seed = seed
        self.rng = random.Random(seed)
        self.max_events = max_events
        self.max_ticks = max_ticks
        self.check_connectivity = check_connectivity
        self.collect_trace = collect_trace

        self.initial = config.copy()
        self.bots: dict[int, Bot] = {}
        self.occupancy: dict[Node, int] = {}
        for aid in sorted(config.poses):
            b = Bot(aid, config.poses[aid], config.orientations[aid],
                    dict(config.public[aid]))
            self.bots[aid] = b
            for v in b.pose.nodes():
                self.occupancy[v] = aid
        self.claims: dict[Node, list[Movement]] = {}
        self.connections: set[tuple[Node, Node]] = set()
        self.channels: dict[tuple[Node, Node], Channel] = {}
        for aid in sorted(self.bots):
            self._establish_initial_edges(aid)

        self.now = 0
        self.heap: list = []
        self.seq = itertools.count()
        self.events = 0
        self.trace: list = []
        self.violations: list[str] = []
        self.stats: dict = {"activations": 0, "executions": 0, "messages": 0,
                            "movements": 0, "max_buffer": 0}
        self.xids = itertools.count(1)
        self.open_movements = 0
        self.busy_channels = 0
        self.active_count = 0
        self.pending_count = 0
        self.enabled_cache: dict[int, bool] = {}
        self.dirty: set[int] = set(self.bots)
        self.enabled_stamp = itertools.count(1)
        self.rr_next = 0
        self.sync_stage_open = False
        self._dispatch_queued = False
        self.finished = False
        self.status = "terminated"

    # ----- trace -------------------------------------------------------

    def emit(self, ev: str, **fields):
        if self.collect_trace:
            rec = {"t": self.now, "ev": ev}
            rec.update(fields)
            self.trace.append(rec)

    def violation(self, text: str):
        self.violations.append(f"t={self.now}: {text}")
        self.emit("violation", text=text)

    # ----- scheduling ----------------------------------------------------

    def schedule(self, dt: int, tier: int, fn: Callable, *args):
        heapq.heappush(self.heap, (self.now + dt, tier, next(self.seq), fn, args))

    # ----- edges and channels -------------------------------------------

    def _establish_initial_edges(self, aid: int):
        bot = self.bots[aid]
        own = set(bot.pose.nodes())
        for v in own:
            for w in neighbors(v):
                peer = self.occupancy.get(w)
                if peer is None or peer == aid or w in own:
                    continue
                self._add_edge(v, w, quiet=True)

    def _add_edge(self, a: Node, b: Node, quiet: bool = False):
        key = (a, b) if a <= b else (b, a)
        if key in self.connections:
            return
        self.connections.add(key)
        aida = self.occupancy[a]
        aidb = self.occupancy[b]
        self.channels[(a, b)] = Channel(a, b, aida, aidb)
        self.channels[(b, a)] = Channel(b, a, aidb, aida)

    def edge_connected(self, a: Node, b: Node) -> bool:
        key = (a, b) if a <= b else (b, a)
        return key in self.connections

    def disconnect_edge(self, a: Node, b: Node, mover: int):
        key = (a, b) if a <= b else (b, a)
        if key not in self.connections:
            return
        cha = self.channels[(a, b)]
        aida, aidb = cha.src_aid, cha.dst_aid
        self.connections.discard(key)
        for e in ((a, b), (b, a)):
            ch = self.channels.pop(e)
            self._flush_channel(ch)
        self.emit("disconnect", aid=mover, edge=(a, b), between=(aida, aidb))
        for aid, peer in sorted(((aida, aidb), (aidb, aida))):
            bot = self.bots[aid]
            if bot.grant_to == peer and not self._still_adjacent(aid, peer):
                bot.grant_to = None
            if bot.op is not None and not bot.op.done:
                bot.op.on_disconnect((a, b), peer)
            self.mark_dirty_bot(aid)

    def _still_adjacent(self, aid: int, peer: int) -> bool:
        bot = self.bots[aid]
        for v in bot.pose.nodes():
            for w in neighbors(v):
                if self.occupancy.get(w) == peer and self.edge_connected(v, w):
                    return True
        return False

    def _flush_channel(self, ch: Channel):
        dropped = list(ch.queue)
        if ch.in_transit is not None:
            dropped.append(ch.in_transit)
        ch.queue.clear()
        if ch.in_transit is not None:
            ch.in_transit = None
            self.busy_channels -= 1
        for msg in dropped:
            self.emit("msg_drop", mkind=msg.kind, src=msg.src, edge=(ch.src, ch.dst))
            if msg.on_flushed is not None and msg.sent < 0:
                msg.on_flushed(msg, (ch.src, ch.dst))

    def connect_new_node(self, bot: Bot, v: Node):
        """Establish edges around a node the bot just started occupying."""
        own = set(bot.pose.nodes())
        by_peer: dict[int, list] = {}
        for w in neighbors(v):
            if w in own:
                continue
            peer = self.occupancy.get(w)
            if peer is not None and peer != bot.aid:
                pbot = self.bots[peer]
                if (pbot.moving is not None
                        and pbot.moving.kind == "contract"
                        and pbot.moving.node == w):
                    # the occupant released this node's bonds when its
                    # contraction started; don't re-bond a leaving flank
                    continue
                self._add_edge(v, w)
                by_peer.setdefault(peer, []).append((v, w))
        for peer in sorted(by_peer):
            edges = by_peer[peer]
            self.emit("connect", aid=bot.aid, peer=peer, edges=edges)
            for side, other in sorted(((bot.aid, peer), (peer, bot.aid))):
                sbot = self.bots[side]
                if sbot.op is not None and not sbot.op.done:
                    for e in edges:
                        edge = e if side == bot.aid else (e[1], e[0])
                        sbot.op.on_connect(edge, other)
            self.mark_dirty_bot(peer)
        self.mark_dirty_bot(bot.aid)

    # ----- ports ---------------------------------------------------------

    def bot_ports(self, bot: Bot):
        return ports_of(bot.pose, bot.orientation)

    def resolve_port(self, bot: Bot, label: int):
        """The bot's port for a local label, or None when out of range."""
        ports = self.bot_ports(bot)
        if 0 <= label < len(ports):
            return ports[label]
        return None

    def peer_port_label(self, faced: Node, host: Node) -> int:
        """The label the occupant of ``faced`` uses for its edge back to ``host``."""
        peer = self.bots[self.occupancy[faced]]
        for p in self.bot_ports(peer):
            if p.node == faced and p.faces == host:
                return p.label
        raise SimulatorFault("no return port on a connected edge")

    # ----- messaging -----------------------------------------------------

    def send(self, bot: Bot, src_node: Node, dst_node: Node, msg: Message):
        if not self.edge_connected(src_node, dst_node):
            raise SimulatorFault("send on a disconnected edge")
        ch = self.channels[(src_node, dst_node)]
        if len(ch.queue) >= PORT_BUFFER_CAPACITY:
            self.violation(
                f"port buffer overflow on {src_node}->{dst_node} "
                f"({msg.kind} from {msg.src})")
            raise SimulatorFault("port buffer overflow")
        msg.enqueued = self.now
        ch.queue.append(msg)
        self.stats["messages"] += 1
        self.stats["max_buffer"] = max(self.stats["max_buffer"], len(ch.queue))
        self.emit("msg_enqueue", mkind=msg.kind, src=msg.src,
                  edge=(src_node, dst_node))
        self.schedule(self.timing.stage_latency(self.rng), TIER_MESSAGE,
                      self._kick_channel, (src_node, dst_node), msg)

    def _kick_channel(self, edge, msg: Optional[Message]):
        ch = self.channels.get(edge)
        if ch is None:
            return
        if msg is not None:
            msg.send_ready = True
        if ch.in_transit is None and ch.queue and ch.queue[0].send_ready:
            head = ch.queue.popleft()
            head.sent = self.now
            ch.in_transit = head
            self.busy_channels += 1
            self.emit("msg_send", mkind=head.kind, src=head.src, edge=edge)
            if head.on_sent is not None:
                head.on_sent(head, edge)
            self.schedule(self.timing.stage_latency(self.rng), TIER_MESSAGE,
                          self._deliver, edge, head)

    def _deliver(self, edge, msg: Message):
        ch = self.channels.get(edge)
        if ch is None or ch.in_transit is not msg:
            return  # edge died; the flush already handled it
        ch.in_transit = None
        self.busy_channels -= 1
        msg.received = self.now
        dst_aid = self.occupancy.get(edge[1])
        if dst_aid is None:
            raise SimulatorFault("message delivered to an empty node")
        self.emit("msg_recv", mkind=msg.kind, src=msg.src, dst=dst_aid, edge=edge)
        ops_mod.dispatch_message(self, self.bots[dst_aid], msg, edge)
        self._kick_channel(edge, None)

    # ----- movements ------------------------------------------------------

    def begin_move(self, bot: Bot, kind: str, node: Node, xid: int,
                   on_complete: Callable, duration: Optional[int] = None) -> Movement:
        if bot.moving is not None:
            raise SimulatorFault("amoebot already moving")
        if duration is None:
            duration = self.timing.move_duration(self.rng)
        m = Movement(kind, bot, node, self.now, self.now + duration, xid,
                     on_complete)
        bot.moving = m
        self.open_movements += 1
        self.stats["movements"] += 1
        self.emit("move_start", aid=bot.aid, xid=xid, kind=kind, node=node,
                  until=m.t1)
        self.schedule(duration, TIER_PHYSICAL, self._move_complete, m)
        return m

    def _move_complete(self, m: Movement):
        if not m.cancelled:
            m.on_complete(m)

    def finish_move(self, m: Movement):
        """Book-keeping shared by every movement completion."""
        m.bot.moving = None
        self.open_movements -= 1
        self.emit("move_end", aid=m.bot.aid, xid=m.xid, kind=m.kind,
                  pose=(m.bot.pose.head, m.bot.pose.tail))
        if self.check_connectivity:
            if not connected_occupancy(set(self.occupancy)):
                self.violation("occupied nodes disconnected after movement")
        self.mark_dirty_around(m.node)
        self.mark_dirty_bot(m.bot.aid)

    def handover_swap(self, giver: Bot, taker: Bot, node: Node,
                      giver_keep: Node, taker_keep: Node, xid: int):
        """Hand ``node`` from the giver to the taker in one instant.

        A handover never leaves the node empty or unbonded: occupancy flips
        to the taker, both poses change together, the bond between the two
        partners (now an internal edge of the taker) disappears, and a fresh
        bond forms between the node and the giver's kept node. Bonds between
        the node and bystanders survive untouched; their channels just learn
        the new occupant. The movements that animate the handover are booked
        by the caller, before this call, so that the partners' own operations
        ignore the internal-edge teardown.
        """
        if self.occupancy.get(node) != giver.aid:
            raise SimulatorFault("handover of a node the giver does not hold")
        if set(giver.pose.nodes()) != {node, giver_keep}:
            raise SimulatorFault("handover giver pose out of sync")
        if set(taker.pose.nodes()) != {taker_keep}:
            raise SimulatorFault("handover taker pose out of sync")
        self.disconnect_edge(node, taker_keep, giver.aid)
        self.occupancy[node] = taker.aid
        giver.pose = Pose(head=giver_keep)
        taker.pose = Pose(head=node, tail=taker_keep)
        for edge, ch in self.channels.items():
            if edge[0] == node and ch.src_aid == giver.aid:
                ch.src_aid = taker.aid
            elif edge[1] == node and ch.dst_aid == giver.aid:
                ch.dst_aid = taker.aid
        self._add_edge(node, giver_keep)
        self.emit("connect", aid=taker.aid, peer=giver.aid,
                  edges=[(node, giver_keep)])
        self.emit("handover", node=node, giver=giver.aid, taker=taker.aid,
                  xid=xid)
        self.mark_dirty_around(node)
        self.mark_dirty_bot(giver.aid)
        self.mark_dirty_bot(taker.aid)

    def set_public(self, owner: Bot, var: str, value, by: int, xid: int):
        owner.public[var] = value
        if by == owner.aid:
            owner.self_writes += 1
        self.emit("write", aid=owner.aid, var=var, value=value, by=by, xid=xid)
        self.mark_dirty_bot(owner.aid)

    # ----- enabledness oracle -------------------------------------------

    def mark_dirty_bot(self, aid: int):
        self.dirty.add(aid)
        bot = self.bots.get(aid)
        if bot is None:
            return
        for v in bot.pose.nodes():
            for w in neighbors(v):
                peer = self.occupancy.get(w)
                if peer is not None and peer != aid:
                    self.dirty.add(peer)
        self.queue_dispatch()

    def mark_dirty_around(self, node: Node):
        for w in list(neighbors(node)) + [node]:
            peer = self.occupancy.get(w)
            if peer is not None:
                self.mark_dirty_bot(peer)

    def oracle_enabled(self, aid: int) -> bool:
        if aid in self.dirty:
            bot = self.bots[aid]
            view = build_oracle_view(self, bot)
            label = self.algorithm.choose(view)
            self.enabled_cache[aid] = label is not None
            self.dirty.discard(aid)
        return self.enabled_cache[aid]

    def refresh_enabled(self):
        for aid in list(self.dirty):
            self.oracle_enabled(aid)

    # ----- adversary ------------------------------------------------------

    def quiescent(self) -> bool:
        if self.active_count or self.pending_count or self.open_movements:
            return False
        if self.busy_channels:
            return False
        return not any(ch.queue for ch in self.channels.values())

    def queue_dispatch(self):
        if not self._dispatch_queued and not self.finished:
            self._dispatch_queued = True
            self.schedule(0, TIER_ACTIVATION, self._dispatch_event)

    def _dispatch_event(self):
        self._dispatch_queued = False
        self.dispatch()

    def _idle(self, bot: Bot) -> bool:
        return (not bot.busy and not bot.pending
                and not bot.movement_committed())

    def _fairness_note(self, aid: int, enabled: bool):
        bot = self.bots[aid]
        if not enabled or not self._idle(bot):
            bot.enabled_since = None
            return
        if bot.enabled_since is None:
            bot.enabled_since = self.now
            bot.enabled_stamp = next(self.enabled_stamp)
        bot.enabled_seen += 1

    def _overdue(self, bot: Bot) -> bool:
        n = len(self.bots)
        if self.adv.fairness == WEAKLY_FAIR:
            return (bot.enabled_since is not None
                    and self.now - bot.enabled_since
                    > self.adv.horizon_factor * n * self.timing.T)
        if self.adv.fairness == STRONGLY_FAIR:
            return bot.enabled_seen > self.adv.horizon_factor * max(n, 4)
        return False

    def dispatch(self):
        if self.finished:
            return
        self.refresh_enabled()
        for aid in self.bots:
            self._fairness_note(aid, self.enabled_cache.get(aid, False))

        adv = self.adv
        if adv.concurrency == SEQUENTIAL:
            if not self.quiescent():
                return
            cands = [a for a, b in self.bots.items()
                     if self._idle(b) and self.enabled_cache.get(a)]
            if not cands:
                return
            pick = self._pick(cands)
            self._schedule_activation(pick, self.rng.randint(1, self.timing.T // 4))
            return

        if adv.concurrency == SYNCHRONOUS:
            if self.sync_stage_open or not self.quiescent():
                return
            stage = []
            for aid, bot in self.bots.items():
                if not self._idle(bot):
                    continue
                view = build_oracle_view(self, bot)
                label = self.algorithm.choose(view)
                if label is not None:
                    stage.append((aid, label))
            if not stage:
                return
            self.sync_stage_open = True
            at = self.rng.randint(1, self.timing.T // 4)
            for aid, label in stage:
                self.bots[aid].forced_label = label
                self._schedule_activation(aid, at)
            return

        # async and k-isolated
        cands = []
        for aid, bot in self.bots.items():
            if self._idle(bot) and self.enabled_cache.get(aid):
                cands.append(aid)
        if not cands:
            return

        def clear(aid):
            return (adv.concurrency != K_ISOLATED
                    or not self._crowded(self.bots[aid]))

        overdue = {a for a in cands if self._overdue(self.bots[a])}
        for aid in sorted(overdue):
            if clear(aid):
                self._schedule_activation(aid, self.rng.randint(1, self.timing.T // 8))
        cands = [a for a in cands if a not in overdue]
        if not cands:
            return
        if adv.policy == RANDOM:
            for aid in cands:
                if clear(aid):
                    self._schedule_activation(aid, self.rng.randint(0, self.timing.T))
        elif self.pending_count == 0:
            # one-at-a-time policies hand out a single activation; overlap
            # still happens against actions already in flight
            pick = self._pick(cands)
            if clear(pick):
                self._schedule_activation(pick, self.rng.randint(0, self.timing.T // 4))

    def _pick(self, cands: list[int]) -> int:
        adv = self.adv
        if adv.policy == RANDOM:
            return self.rng.choice(cands)
        if adv.policy == FIXED_PRIORITY:
            return min(cands)
        if adv.policy == LIFO:
            return max(cands, key=lambda a: self.bots[a].enabled_stamp)
        # round-robin: first candidate at or after the rotating pointer
        for shift in range(len(self.bots)):
            a = (self.rr_next + shift) % len(self.bots)
            if a in cands:
                self.rr_next = (a + 1) % len(self.bots)
                return a
        return cands[0]

    def _crowded(self, bot: Bot) -> bool:
        """k-isolated: too close to an amoebot that is active or pending."""
        mine = bot.pose.nodes()
        for other in self.bots.values():
            if other.aid == bot.aid or not (other.busy or other.pending):
                continue
            for v in mine:
                for w in other.pose.nodes():
                    if distance(v, w) <= self.adv.k:
                        return True
        return False

    def _schedule_activation(self, aid: int, dt: int):
        bot = self.bots[aid]
        bot.pending = True
        self.pending_count += 1
        self.schedule(dt, TIER_ACTIVATION, self._activate, aid)

    def _activate(self, aid: int):
        bot = self.bots[aid]
        bot.pending = False
        self.pending_count -= 1
        if bot.busy:
            raise SimulatorFault("activation of a busy amoebot")
        if self.adv.concurrency == SEQUENTIAL and self.active_count:
            self.violation("sequential adversary activated a second amoebot")
        if self.adv.concurrency == K_ISOLATED and self._crowded(bot):
            # the world moved between selection and firing; stand down
            self.queue_dispatch()
            return
        if bot.movement_committed():
            # drafted into a neighbor's handover (or still finishing a
            # movement) between selection and firing; stand down
            self.queue_dispatch()
            return
        self.active_count += 1
        self.stats["activations"] += 1
        bot.enabled_since = None
        bot.enabled_seen = 0
        xid = next(self.xids)
        forced = bot.forced_label
        bot.forced_label = None
        self.emit("act_start", aid=aid, xid=xid)
        runner = ProgramRunner(self, bot, xid, forced_label=forced,
                               on_done=self._action_done)
        bot.runner = runner
        runner.start()

    def _action_done(self, bot: Bot, xid: int, outcome: str, label, failure):
        bot.runner = None
        if bot.op is not None:
            raise SimulatorFault("action finished with an operation still open")
        self.active_count -= 1
        self.stats["executions"] += 1
        self.emit("act_end", aid=bot.aid, xid=xid, outcome=outcome,
                  label=label, fail=failure)
        if bot.deferred:
            held, bot.deferred = bot.deferred, []
            for msg, edge, stamp in held:
                if not self.edge_connected(*edge):
                    # the asker moved on while the request waited; it has
                    # already seen the disconnect and given up
                    self.emit("msg_drop", mkind=msg.kind, src=msg.src,
                              edge=edge)
                elif bot.self_writes != stamp:
                    # the action rewrote this amoebot's public state, so
                    # whatever the asker validated before requesting no
                    # longer describes it; make the asker look again
                    ops_mod.refuse_handover(self, bot, msg, edge)
                else:
                    ops_mod.dispatch_message(self, bot, msg, edge)
        self.mark_dirty_bot(bot.aid)
        if self.adv.concurrency == SYNCHRONOUS and self.active_count == 0:
            self.sync_stage_open = False
        self.queue_dispatch()

    # ----- main loop ------------------------------------------------------

    def snapshot(self) -> Configuration:
        return Configuration(
            {a: b.pose for a, b in self.bots.items()},
            {a: b.orientation for a, b in self.bots.items()},
            {a: dict(b.public) for a, b in self.bots.items()},
        )

    def run(self) -> RunResult:
        self.queue_dispatch()
        while self.heap:
            t, tier, _, fn, args = heapq.heappop(self.heap)
            if self.max_ticks is not None and t > self.max_ticks:
                self.status = "limit"
                break
            self.now = t
            self.events += 1
            if self.events > self.max_events:
                self.status = "limit"
                break
            fn(*args)
            if self.violations and self.status == "terminated":
                self.status = "violation"
                break
            if not self.heap:
                # give the adversary a last word before declaring the end
                self.dispatch()
        self.finished = True
        if self.status == "terminated":
            if not self.quiescent():
                # events ran dry with work still open: an operation wedged
                self.violation("event queue drained while operations were open")
                self.status = "violation"
            else:
                self.refresh_enabled()
                if any(self.enabled_cache.get(a) for a in self.bots):
                    self.violation("run ended with an enabled amoebot unscheduled")
                    self.status = "violation"
        final = self.snapshot()
        meta = {
            "algorithm": self.algorithm.name,
            "n": len(self.bots),
            "seed": self.seed,
            "adversary": {
                "concurrency": self.adv.concurrency, "k": self.adv.k,
                "fairness": self.adv.fairness, "policy": self.adv.policy,
            },
            "timing": {
                "T": self.timing.T, "epsilon": self.timing.epsilon,
                "dmax": self.timing.dmax, "backoff_c": self.timing.backoff_c,
            },
        }
        return RunResult(self.status, self.initial, final, self.now, self.events,
                         self.trace, self.violations, dict(self.stats),
                         seed=self.seed, meta=meta)
