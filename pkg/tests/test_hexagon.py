"""Hexagon formation: frozen shape oracles, worked scans, end-to-end runs."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amoebots.actions import SeqExecutor
from amoebots.core import SHAPE, Configuration, fresh_public
from amoebots.engine import (
    ASYNC, SEQUENTIAL, UNFAIR, RANDOM, AdversaryConfig, Engine,
)
from amoebots.hexagon import (
    DIR, FOLLOWER, IDLE, PARENT, RETIRED, ROOT, SEED, STATE,
    algorithm, hexagon_defects, is_hexagon, random_initial, spiral,
)
from amoebots.lattice import CONTRACTED, EXPANDED, Orientation, Pose, neighbors, step

# Hand-derived: the seed, the first ring counterclockwise starting east, and
# the second ring. Everything downstream is judged against this list.
CANONICAL_19 = [
    (0, 0),
    (1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1),
    (2, -1), (2, 0), (1, 1), (0, 2), (-1, 2), (-2, 2),
    (-2, 1), (-2, 0), (-1, -1), (0, -2), (1, -2), (2, -2),
]


def _mirror(node):
    q, r = node
    return (q + r, -r)


def _rot_ccw(node):
    q, r = node
    return (-r, q + r)


# --------------------------------------------------------------------------
# Spiral oracle

def test_spiral_matches_frozen_canonical_19():
    assert spiral(19) == CANONICAL_19


def test_spiral_prefixes_are_stable():
    full = spiral(19)
    for k in range(20):
        assert spiral(k) == full[:k]


def test_spiral_perfect_ring_sizes():
    assert set(spiral(7)) == {(0, 0)} | set(neighbors((0, 0)))
    assert len(set(spiral(19))) == 19


@given(st.integers(min_value=1, max_value=120))
def test_spiral_nodes_distinct_and_connected(n):
    nodes = spiral(n)
    assert len(set(nodes)) == n
    for k in range(1, n):
        assert any(nodes[k] in neighbors(nodes[j]) for j in range(k))


@given(st.integers(min_value=1, max_value=60),
       st.integers(min_value=0, max_value=5))
def test_spiral_anchor_rotates_the_whole_walk(n, anchor):
    base = spiral(n, anchor=anchor)
    rotated = spiral(n, anchor=(anchor + 1) % 6)
    assert rotated == [_rot_ccw(p) for p in base]


@given(st.integers(min_value=1, max_value=60))
def test_spiral_mirrored_winding_is_the_mirror_image(n):
    assert spiral(n, winding=-1) == [_mirror(p) for p in spiral(n)]


def test_spiral_respects_seed_translation():
    assert spiral(10, seed=(3, -2)) == [(q + 3, r - 2) for q, r in spiral(10)]


# --------------------------------------------------------------------------
# Worked surface scans, driven through whole actions

def _config(bots):
    """bots: aid -> (pose, orientation, state, parent, dir)."""
    poses, orientations, public = {}, {}, {}
    for aid, (pose, ori, state, parent, dirv) in bots.items():
        poses[aid] = pose
        orientations[aid] = ori
        public[aid] = fresh_public(pose.shape, {STATE: state, PARENT: parent,
                                                DIR: dirv})
    return Configuration(poses, orientations, public)


@pytest.mark.parametrize("offset", range(6))
@pytest.mark.parametrize("chi", [1, -1])
def test_become_root_scans_one_step_past_a_lone_seed(offset, chi):
    ori = Orientation(offset, chi)
    config = _config({
        0: (Pose(head=(0, 0)), Orientation(0, 1), SEED, None, 0),
        1: (Pose(head=(1, 0)), ori, IDLE, None, None),
    })
    se = SeqExecutor(config, algorithm())
    assert se.choose(1) == "become_root"
    outcome, fail = se.execute(1)
    assert (outcome, fail) == ("success", None)
    assert config.public[1][STATE] == ROOT
    assert config.public[1][PARENT] is None
    # the seed sits west (global 3); the counterclockwise sweep stops on the
    # first free direction past it, one global step by the own handedness
    assert config.public[1][DIR] == ori.global_to_label((3 + chi) % 6)


@pytest.mark.parametrize("offset", range(6))
@pytest.mark.parametrize("chi", [1, -1])
def test_retire_scans_clockwise_past_a_two_member_block(offset, chi):
    ori = Orientation(offset, chi)
    config = _config({
        # seed's frontier pointer (global 0) names the amoebot under test
        0: (Pose(head=(0, 0)), Orientation(0, 1), SEED, None, 0),
        # second settled neighbor, northwest of the amoebot under test
        2: (Pose(head=(0, 1)), Orientation(0, 1), RETIRED, None, 0),
        1: (Pose(head=(1, 0)), ori, ROOT, None, 0),
    })
    se = SeqExecutor(config, algorithm())
    assert se.choose(1) == "retire"
    outcome, fail = se.execute(1)
    assert (outcome, fail) == ("success", None)
    assert config.public[1][STATE] == RETIRED
    # settled block sits at global {2, 3}; the clockwise sweep walks against
    # the handedness, so it exits at global 1 right-handed and 4 left-handed
    assert config.public[1][DIR] == ori.global_to_label(1 if chi == 1 else 4)


def test_become_follower_adopts_the_root_next_door():
    config = _config({
        0: (Pose(head=(0, 0)), Orientation(0, 1), SEED, None, 0),
        1: (Pose(head=(1, 0)), Orientation(0, 1), ROOT, None, 1),
        2: (Pose(head=(2, 0)), Orientation(0, 1), IDLE, None, None),
    })
    se = SeqExecutor(config, algorithm())
    assert se.choose(2) == "become_follower"
    outcome, fail = se.execute(2)
    assert (outcome, fail) == ("success", None)
    assert config.public[2][STATE] == FOLLOWER
    assert config.public[2][PARENT] == 3  # aligned frame: west


def test_becoming_root_outranks_becoming_follower():
    config = _config({
        0: (Pose(head=(0, 0)), Orientation(0, 1), SEED, None, 0),
        1: (Pose(head=(1, 0)), Orientation(0, 1), ROOT, None, 1),
        2: (Pose(head=(1, -1)), Orientation(0, 1), IDLE, None, None),
    })
    se = SeqExecutor(config, algorithm())
    assert se.choose(2) == "become_root"


def test_pull_child_rewrites_the_parent_pointer_then_moves_both():
    config = _config({
        1: (Pose(head=(0, 0), tail=(1, 0)), Orientation(0, 1), FOLLOWER, 0, None),
        2: (Pose(head=(2, 0)), Orientation(0, 1), FOLLOWER, 3, None),
    })
    se = SeqExecutor(config, algorithm())
    assert se.choose(1) == "pull_child"
    outcome, fail = se.execute(1)
    assert (outcome, fail) == ("success", None)
    assert config.poses[1] == Pose(head=(0, 0))
    assert config.poses[2] == Pose(head=(1, 0), tail=(2, 0))
    # the child's pointer now names its post-handover edge toward (0, 0)
    assert config.public[2][PARENT] == 3
    assert config.public[2][SHAPE] == EXPANDED


def test_contract_tail_when_no_child_is_attached():
    config = _config({
        1: (Pose(head=(0, 0), tail=(1, 0)), Orientation(0, 1), FOLLOWER, 0, None),
        2: (Pose(head=(2, 0)), Orientation(0, 1), FOLLOWER, 0, None),
    })
    se = SeqExecutor(config, algorithm())
    # the neighbor's parent pointer names some other edge, so no child holds
    assert se.choose(1) == "contract_tail"
    outcome, fail = se.execute(1)
    assert (outcome, fail) == ("success", None)
    assert config.poses[1] == Pose(head=(0, 0))


# --------------------------------------------------------------------------
# Shape recognizer

def _finished_hexagon(n):
    nodes = spiral(n + 1)
    bots = {}
    for k in range(n):
        d = None
        for cand in range(6):
            if step(nodes[k], cand) == nodes[k + 1]:
                d = cand
        state = SEED if k == 0 else RETIRED
        bots[k] = (Pose(head=nodes[k]), Orientation(0, 1), state, None, d)
    return _config(bots)


@pytest.mark.parametrize("n", [1, 2, 5, 7, 12, 19])
def test_recognizer_accepts_finished_hexagons(n):
    config = _finished_hexagon(n)
    assert is_hexagon(config), hexagon_defects(config)


def test_recognizer_rejects_misplaced_node():
    config = _finished_hexagon(7)
    config.poses[6] = Pose(head=(5, 5))
    assert not is_hexagon(config)


def test_recognizer_rejects_broken_frontier_chain():
    config = _finished_hexagon(7)
    config.public[3][DIR] = (config.public[3][DIR] + 1) % 6
    assert not is_hexagon(config)


def test_recognizer_rejects_undone_states():
    config = _finished_hexagon(7)
    config.public[4][STATE] = FOLLOWER
    assert not is_hexagon(config)
    config.public[4][STATE] = SEED
    assert not is_hexagon(config)


def test_recognizer_rejects_expanded_member():
    config = _finished_hexagon(3)
    config.poses[2] = Pose(head=config.poses[2].head, tail=(0, 2))
    config.public[2][SHAPE] = EXPANDED
    assert not is_hexagon(config)


def test_recognizer_honors_seed_frame():
    # same hexagon, seed oriented differently: anchor follows the pointer
    config = _finished_hexagon(7)
    config.orientations[0] = Orientation(2, 1)
    for aid in config.poses:
        if config.public[aid][DIR] is not None and aid == 0:
            config.public[aid][DIR] = (config.public[aid][DIR] - 2) % 6
    assert is_hexagon(config)


# --------------------------------------------------------------------------
# Initial systems

@given(st.integers(min_value=1, max_value=40), st.integers(min_value=0, max_value=2**32))
@settings(max_examples=40)
def test_random_initial_is_a_valid_idle_system(n, seed):
    config = random_initial(n, random.Random(seed))
    assert len(config.poses) == n
    occ = config.occupancy()
    assert len(occ) == n
    assert config.poses[0].head == (0, 0)
    assert config.public[0][STATE] == SEED and config.public[0][DIR] == 0
    for aid in range(1, n):
        assert config.public[aid][STATE] == IDLE
    # connectivity: walk the occupied component
    seen = {(0, 0)}
    stack = [(0, 0)]
    while stack:
        v = stack.pop()
        for w in neighbors(v):
            if w in occ and w not in seen:
                seen.add(w)
                stack.append(w)
    assert len(seen) == n


def test_random_initial_modes():
    rng = random.Random(7)
    for mode in ("common", "aligned", "mirrored", "assorted"):
        config = random_initial(12, rng, orientation_mode=mode)
        chis = {o.chirality for o in config.orientations.values()}
        if mode in ("common", "aligned"):
            assert chis == {1}
        if mode == "mirrored":
            assert chis == {-1}
    with pytest.raises(ValueError):
        random_initial(3, rng, orientation_mode="upside-down")


# --------------------------------------------------------------------------
# End-to-end runs

def _run(config, adversary, seed):
    eng = Engine(config, algorithm(), adversary, seed=seed)
    return eng.run()


@pytest.mark.parametrize("n,seed", [(1, 0), (2, 1), (3, 2), (5, 3), (8, 4),
                                    (12, 5), (19, 6)])
def test_sequential_runs_settle_into_hexagons(n, seed):
    config = random_initial(n, random.Random(seed))
    res = _run(config, AdversaryConfig(concurrency=SEQUENTIAL), seed)
    assert res.terminated
    assert is_hexagon(res.final), hexagon_defects(res.final)


def test_nineteen_aligned_settles_on_the_frozen_spiral():
    config = random_initial(19, random.Random(11), orientation_mode="aligned")
    res = _run(config, AdversaryConfig(concurrency=SEQUENTIAL), 11)
    assert res.terminated
    assert {p.head for p in res.final.poses.values()} == set(CANONICAL_19)
    assert is_hexagon(res.final), hexagon_defects(res.final)


@pytest.mark.parametrize("n,seed", [(4, 0), (7, 1)])
def test_async_runs_settle_into_hexagons(n, seed):
    config = random_initial(n, random.Random(seed))
    res = _run(config, AdversaryConfig(concurrency=ASYNC, fairness=UNFAIR,
                                       policy=RANDOM), seed)
    assert res.terminated
    assert is_hexagon(res.final), hexagon_defects(res.final)
    failures = [ev for ev in res.trace
                if ev.get("ev") == "act_end" and ev.get("outcome") == "failure"]
    assert failures == []
