import struct
import zlib

import pytest

from hoppersim.topology import (GBPS, PROTO_UDP, ROCE_DPORT, TopologyError,
                                build_asymmetric_testbed, build_leaf_spine,
                                ecmp_hash, profile_source_ports)


@pytest.fixture(scope="module")
def small():
    return build_leaf_spine(8, 2, 4)


def test_base_rtt_counts_link_latency_both_ways(small):
    # 4 hops of 1 us each way across the leaf boundary
    assert small.base_rtt_ns == 8000


def test_ecmp_hash_matches_crc32_of_packed_tuple():
    for src, dst, sport in [(0, 4, 0), (3, 7, 12345), (1, 2, 65535)]:
        packed = struct.pack(">IIHHB", src, dst, sport, ROCE_DPORT, PROTO_UDP)
        assert ecmp_hash(src, dst, sport) == zlib.crc32(packed)


def test_resolve_path_follows_hash_over_uplinks(small):
    ups = small.uplinks["l0"]
    for sport in (0, 7, 91, 40000):
        spine, links = small.resolve_path("h0", "h4", sport)
        expect = ups[ecmp_hash(0, 4, sport) % len(ups)][0]
        assert spine == expect
        assert [l.src for l in links] == ["h0", "l0", spine, "l1"]


def test_same_leaf_pair_has_single_direct_path(small):
    assert small.n_paths("h0", "h1") == 1
    pid, links = small.resolve_path("h0", "h1", 777)
    assert pid == "direct"
    assert len(links) == 2


def test_profile_finds_distinct_paths_with_ascending_ports(small):
    prof = profile_source_ports(small, "h0", "h4", 4)
    assert list(prof.ports) == sorted(prof.ports)
    pids = {prof.port_path[p] for p in prof.ports}
    assert len(pids) == 4
    for port in prof.ports:
        spine, _ = small.resolve_path("h0", "h4", port)
        assert spine == prof.port_path[port]


def test_profile_rejects_unreachable_path_counts(small):
    with pytest.raises(TopologyError):
        profile_source_ports(small, "h0", "h4", 5)
    with pytest.raises(TopologyError):
        profile_source_ports(small, "h0", "h4", 0)
    with pytest.raises(TopologyError):
        profile_source_ports(small, "h0", "h0", 1)


def test_builder_validation():
    with pytest.raises(TopologyError):
        build_leaf_spine(9, 2, 2)  # hosts must split evenly over leaves
    with pytest.raises(TopologyError):
        build_leaf_spine(1, 1, 1)
    with pytest.raises(TopologyError):
        build_asymmetric_testbed(7)


def test_link_class_labels(small):
    assert small.links[("h0", "l0")].cls == "host-100g"
    assert small.links[("l0", "s0")].cls == "fabric-100g"


def test_asymmetric_testbed_shape():
    topo = build_asymmetric_testbed(8)
    assert topo.n_paths("h0", "h4") == 6
    classes = {l.cls for l in topo.links.values()}
    assert {"host-25g", "fabric-10g", "fabric-1g"} <= classes
    fast = sum(1 for l in topo.links.values() if l.cls == "fabric-10g")
    slow = sum(1 for l in topo.links.values() if l.cls == "fabric-1g")
    assert (fast, slow) == (16, 8)  # 4+2 spines, 2 leaves, both directions


def test_host_to_leaf_assignment_is_contiguous():
    topo = build_leaf_spine(8, 2, 2)
    assert [topo.host_leaf[f"h{i}"] for i in range(8)] == ["l0"] * 4 + ["l1"] * 4
