"""Geometry tests: direction order, distances, port labelings, neighbor ids.

The expected arrays in here were worked out by hand on grid paper before the
module was written; if an implementation change breaks one of them, the
implementation is wrong, not the test.
"""

import collections

import pytest
from hypothesis import given, strategies as st

from amoebots.lattice import (
    CCW,
    CW,
    DIRECTIONS,
    Orientation,
    Pose,
    boundary_cycle,
    common_neighbors,
    derive_offset,
    direction_between,
    distance,
    local_neighbor_ids,
    neighbors,
    opposite,
    ports_of,
    port_toward,
    pull_relabel,
    step,
)

ORIGIN = (0, 0)


def bfs_distance(a, b, cap=20):
    """Independent distance oracle: plain BFS over the lattice."""
    if a == b:
        return 0
    frontier = {a}
    seen = {a}
    for d in range(1, cap + 1):
        frontier = {w for v in frontier for w in neighbors(v) if w not in seen}
        if b in frontier:
            return d
        seen |= frontier
    raise AssertionError("bfs cap exceeded")


def test_neighbor_order_is_ccw_from_east():
    assert neighbors(ORIGIN) == ((1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1))


def test_neighbors_form_a_cycle():
    ns = neighbors((3, -2))
    for i in range(6):
        assert distance(ns[i], ns[(i + 1) % 6]) == 1
        assert distance(ns[i], ns[(i + 3) % 6]) == 2


def test_opposite_directions_cancel():
    for d in range(6):
        assert step(step(ORIGIN, d), opposite(d)) == ORIGIN


@given(st.integers(-4, 4), st.integers(-4, 4), st.integers(-4, 4), st.integers(-4, 4))
def test_distance_matches_bfs(q1, r1, q2, r2):
    a, b = (q1, r1), (q2, r2)
    assert distance(a, b) == bfs_distance(a, b)


def test_adjacent_nodes_share_exactly_two_neighbors():
    for d in range(6):
        b = step(ORIGIN, d)
        shared = common_neighbors(ORIGIN, b)
        assert len(shared) == 2
        for v in shared:
            assert distance(v, ORIGIN) == 1 and distance(v, b) == 1


def test_direction_between_roundtrip():
    for d in range(6):
        assert direction_between(ORIGIN, step(ORIGIN, d)) == d
    assert direction_between(ORIGIN, (2, 0)) is None
    assert direction_between(ORIGIN, ORIGIN) is None


@given(st.integers(0, 5), st.sampled_from([CCW, CW]), st.integers(0, 5))
def test_orientation_roundtrip(offset, chi, label):
    o = Orientation(offset, chi)
    assert o.global_to_label(o.label_to_global(label)) == label


def test_contracted_ports_identity_orientation():
    ports = ports_of(Pose(ORIGIN), Orientation(0, CCW))
    assert len(ports) == 6
    for p in ports:
        assert p.gdir == p.label
        assert p.node == ORIGIN
        assert p.faces == step(ORIGIN, p.label)


def test_contracted_ports_offset_and_chirality():
    ports = ports_of(Pose(ORIGIN), Orientation(2, CW))
    assert [p.gdir for p in ports] == [2, 1, 0, 5, 4, 3]


def test_boundary_cycle_walks_the_perimeter():
    cyc = boundary_cycle((0, 0), (1, 0))
    assert len(cyc) == 10
    faces = [step(node, d) for node, d in cyc]
    # Consecutive faced nodes are either equal (shared corner) or adjacent.
    for i in range(10):
        a, b = faces[i], faces[(i + 1) % 10]
        assert a == b or distance(a, b) == 1
    # Exactly the two shared corners appear twice.
    counts = collections.Counter(faces)
    assert sorted(counts.values()) == [1, 1, 1, 1, 1, 1, 2, 2]
    dup = {v for v, c in counts.items() if c == 2}
    assert dup == set(common_neighbors((0, 0), (1, 0)))


def test_expanded_ports_identity_orientation_tail_east():
    # Head (0,0), tail (1,0), offset 0, CCW. Worked out by hand:
    # label: 0       1        2        3        4       5       6       7      8      9
    # faces: (0,1)  (-1,1)   (-1,0)   (0,-1)   (1,-1)  (1,-1)  (2,-1)  (2,0)  (1,1)  (0,1)
    ports = ports_of(Pose((0, 0), (1, 0)), Orientation(0, CCW))
    assert len(ports) == 10
    assert [p.faces for p in ports] == [
        (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1),
        (1, -1), (2, -1), (2, 0), (1, 1), (0, 1),
    ]
    assert [p.node for p in ports[:5]] == [(0, 0)] * 5
    assert [p.node for p in ports[5:]] == [(1, 0)] * 5


def test_expanded_ports_clockwise_traversal():
    ccw = ports_of(Pose((0, 0), (1, 0)), Orientation(0, CCW))
    cw = ports_of(Pose((0, 0), (1, 0)), Orientation(0, CW))
    # Same port set, traversed the other way around. Label 0 starts at the
    # head port with the smallest local angle, which under CW handedness is
    # the edge at global direction 5 (local index 1). Hand-derived faces:
    assert [p.faces for p in cw] == [
        (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1),
        (0, 1), (1, 1), (2, 0), (2, -1), (1, -1),
    ]
    assert {(p.node, p.gdir) for p in cw} == {(p.node, p.gdir) for p in ccw}
    # Reversed cyclic order relative to the CCW labeling.
    edges_ccw = [(p.node, p.gdir) for p in ccw]
    k = edges_ccw.index((cw[0].node, cw[0].gdir))
    for i, p in enumerate(cw):
        assert (p.node, p.gdir) == edges_ccw[(k - i) % 10]


@given(
    st.integers(0, 5),
    st.sampled_from([CCW, CW]),
    st.integers(0, 5),
    st.integers(-3, 3),
    st.integers(-3, 3),
)
def test_expanded_port_invariants(offset, chi, tail_dir, q, r):
    head = (q, r)
    pose = Pose(head, step(head, tail_dir))
    ports = ports_of(pose, Orientation(offset, chi))
    assert [p.label for p in ports] == list(range(10))
    own = set(pose.nodes())
    for p in ports:
        assert p.node in own
        assert step(p.node, p.gdir) == p.faces
        assert p.faces not in own
    # Ten ports but eight distinct faced nodes: two shared corners.
    faced = collections.Counter(p.faces for p in ports)
    assert len(faced) == 8
    assert sorted(faced.values()) == [1, 1, 1, 1, 1, 1, 2, 2]
    by_host = collections.Counter(p.node for p in ports)
    assert by_host[pose.head] == 5 and by_host[pose.tail] == 5


def test_neighbor_ids_contracted_with_expanded_neighbor():
    # A contracted at the origin, identity orientation. One expanded neighbor
    # covering (0,1) and (-1,1), one contracted neighbor at (0,-1):
    # ports 1 and 2 both see the first neighbor, port 4 the second.
    occupied = {(0, 1): "B", (-1, 1): "B", (0, -1): "C"}
    ids = local_neighbor_ids(Pose(ORIGIN), Orientation(0, CCW), occupied.get)
    assert ids == [None, 1, 1, None, 2, None]


def test_neighbor_ids_expanded_with_wraparound():
    # A expanded, head (0,0), tail (1,0), identity orientation. Neighbors:
    #   B contracted on the shared corner (0,1): ports 0 and 9 (wraps),
    #   C contracted at (-1,0): port 2,
    #   D expanded over (0,-1) and (1,-1): ports 3, 4, 5.
    occupied = {(0, 1): "B", (-1, 0): "C", (0, -1): "D", (1, -1): "D"}
    ids = local_neighbor_ids(Pose((0, 0), (1, 0)), Orientation(0, CCW), occupied.get)
    assert ids == [1, None, 2, 3, 3, 3, None, None, None, 1]


def test_neighbor_ids_number_by_first_encounter():
    occupied = {(1, -1): "X", (1, 0): "Y"}
    ids = local_neighbor_ids(Pose(ORIGIN), Orientation(3, CCW), occupied.get)
    # Offset 3: label 0 faces dir 3, so Y at dir 0 is label 3, X at dir 5 is label 2.
    assert ids == [None, None, 1, 2, None, None]


@given(
    st.integers(0, 5),
    st.sampled_from([CCW, CW]),
    st.integers(0, 5),
    st.sets(st.integers(0, 7), max_size=8),
)
def test_neighbor_id_properties(offset, chi, tail_dir, occupied_idx):
    pose = Pose(ORIGIN, step(ORIGIN, tail_dir))
    ports = ports_of(pose, Orientation(offset, chi))
    faced = sorted({p.faces for p in ports})
    occ = {faced[i]: f"n{i}" for i in occupied_idx if i < len(faced)}
    ids = local_neighbor_ids(pose, Orientation(offset, chi), occ.get)
    seen_order = []
    for i in ids:
        if i is not None and i not in seen_order:
            seen_order.append(i)
    # Numbers are 1..k in first-encounter order with no gaps.
    assert seen_order == list(range(1, len(seen_order) + 1))
    # Same occupant always gets the same number.
    byocc = {}
    for p, i in zip(ports, ids):
        if i is None:
            assert p.faces not in occ
        else:
            assert byocc.setdefault(occ[p.faces], i) == i


def test_port_toward_picks_lowest_label():
    pose = Pose((0, 0), (1, 0))
    p = port_toward(pose, Orientation(0, CCW), (0, 1))
    assert p is not None and p.label == 0
    assert port_toward(pose, Orientation(0, CCW), (5, 5)) is None


def test_derive_offset_inverts_labeling():
    for offset in range(6):
        for chi in (CCW, CW):
            o = Orientation(offset, chi)
            for label in range(6):
                d = o.label_to_global(label)
                assert derive_offset(label, d, chi) == offset


def test_pull_relabel_simple_case():
    # Puller expanded over (0,0) head and (1,0) tail, child contracted at
    # (2,0) with identity orientation. The child is pulled into (1,0); its
    # post-handover head port toward the puller's remaining node (0,0) is the
    # one facing west from (1,0). Child edge label toward (1,0) is 3
    # (identity orientation, west), and after expanding head=(1,0) tail=(2,0)
    # the label facing (0,0) comes out of the boundary labeling.
    label = pull_relabel(
        child_node=(2, 0),
        vacated=(1, 0),
        remaining=(0, 0),
        child_edge_label=3,
        child_chirality=CCW,
    )
    ports = ports_of(Pose((1, 0), (2, 0)), Orientation(0, CCW))
    expect = [p.label for p in ports if p.node == (1, 0) and p.faces == (0, 0)]
    assert [label] == expect


@given(
    st.integers(0, 5),
    st.sampled_from([CCW, CW]),
    st.integers(0, 5),
)
def test_pull_relabel_always_names_a_head_port(child_offset, chi, rem_dir):
    child_node = (3, 1)
    vacated = step(child_node, 0)
    remaining = step(vacated, rem_dir)
    if remaining == child_node:
        return
    ori = Orientation(child_offset, chi)
    edge_label = ori.global_to_label(0)
    label = pull_relabel(child_node, vacated, remaining, edge_label, chi)
    ports = ports_of(Pose(vacated, child_node), ori)
    p = ports[label]
    assert p.node == vacated and p.faces == remaining
