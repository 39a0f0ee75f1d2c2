"""Workload generator tests: CDF handling, Poisson arrivals, collectives."""

import pytest

from hoppersim.engine import NS_PER_S, RngStream
from hoppersim.topology import build_leaf_spine
from hoppersim.workload import (
    FlowSpec,
    SizeCdf,
    WorkloadError,
    generate_collective_rounds,
    generate_poisson,
    poisson_rate_fps,
)

GBPS = 10**9


@pytest.fixture(scope="module")
def topo():
    return build_leaf_spine(8, 2, 2, host_bw_bps=100 * GBPS,
                            fabric_bw_bps=100 * GBPS)


# ---------------------------------------------------------------------------
# SizeCdf


def test_cdf_rejects_malformed_tables():
    with pytest.raises(WorkloadError, match="empty"):
        SizeCdf([])
    with pytest.raises(WorkloadError, match="positive"):
        SizeCdf([(0, 1.0)])
    with pytest.raises(WorkloadError, match="strictly increasing"):
        SizeCdf([(200, 0.5), (100, 1.0)])
    with pytest.raises(WorkloadError, match="strictly increasing"):
        SizeCdf([(100, 0.5), (200, 0.5), (300, 1.0)])
    with pytest.raises(WorkloadError, match="end at 1.0"):
        SizeCdf([(100, 0.5), (200, 0.9)])


def test_cdf_sampling_tracks_step_probabilities():
    cdf = SizeCdf([(1_000, 0.5), (10_000, 0.8), (100_000, 1.0)])
    rng = RngStream(42, "cdf")
    n = 20_000
    counts = {1_000: 0, 10_000: 0, 100_000: 0}
    for _ in range(n):
        counts[cdf.sample(rng)] += 1
    assert counts[1_000] / n == pytest.approx(0.5, abs=0.03)
    assert counts[10_000] / n == pytest.approx(0.3, abs=0.03)
    assert counts[100_000] / n == pytest.approx(0.2, abs=0.03)


def test_cdf_mean_is_probability_weighted():
    cdf = SizeCdf([(1_000, 0.5), (10_000, 0.8), (100_000, 1.0)])
    assert cdf.mean() == pytest.approx(0.5 * 1_000 + 0.3 * 10_000 + 0.2 * 100_000)


def test_preset_cdfs_load_and_differ():
    ali = SizeCdf.preset("alicloud")
    had = SizeCdf.preset("hadoop")
    ml = SizeCdf.preset("ml-train")
    # storage/analytics mixes skew small; the training mix is elephant-heavy
    assert ali.mean() < ml.mean() and had.mean() < ml.mean()
    assert ml.sizes[0] >= 100_000
    for cdf in (ali, had, ml):
        assert cdf.cums[-1] == 1.0


def test_unknown_preset_is_rejected():
    with pytest.raises(WorkloadError, match="unknown CDF preset"):
        SizeCdf.preset("netflix")


def test_cdf_from_csv_roundtrip(tmp_path):
    p = tmp_path / "sizes.csv"
    p.write_text("size_bytes,cum_prob\n# tiny two-pointer\n500,0.25\n2000,1.0\n")
    cdf = SizeCdf.from_csv(p)
    assert cdf.sizes == [500, 2000] and cdf.cums == [0.25, 1.0]


def test_cdf_from_csv_requires_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("500,0.25\n2000,1.0\n")
    with pytest.raises(WorkloadError, match="expected header"):
        SizeCdf.from_csv(p)


def test_load_dispatches_between_preset_and_path(tmp_path):
    assert SizeCdf.load("hadoop").name == "hadoop"
    p = tmp_path / "own.csv"
    p.write_text("size_bytes,cum_prob\n100,1.0\n")
    assert SizeCdf.load(str(p)).sizes == [100]


# ---------------------------------------------------------------------------
# Poisson generator


def test_rate_formula():
    # 32 hosts x 100G at half load over 1 MB mean -> 200k flows/s
    assert poisson_rate_fps(0.5, 32, 100 * GBPS, 1e6) == pytest.approx(200_000.0)


def test_poisson_rejects_out_of_range_load(topo):
    cdf = SizeCdf([(1_000, 1.0)])
    rng = RngStream(1, "w")
    for bad in (0.0, 1.0, -0.2, 1.7):
        with pytest.raises(WorkloadError, match="load"):
            generate_poisson(topo, cdf, bad, 10_000, rng)


def test_poisson_flow_shape(topo):
    cdf = SizeCdf([(1_000, 0.7), (50_000, 1.0)])
    flows = generate_poisson(topo, cdf, 0.5, 2_000_000, RngStream(7, "w"))
    assert flows
    hosts = set(topo.hosts)
    last = 0
    for f in flows:
        assert f.src in hosts and f.dst in hosts and f.src != f.dst
        assert 0 <= f.start_ns < 2_000_000
        assert f.start_ns >= last
        assert f.size in (1_000, 50_000)
        assert f.chunk == 0 and f.port is None and not f.pinned
        last = f.start_ns


def test_poisson_volume_matches_target_load(topo):
    cdf = SizeCdf([(100_000, 1.0)])
    dur_ns = 20_000_000
    flows = generate_poisson(topo, cdf, 0.4, dur_ns, RngStream(11, "w"))
    offered = sum(f.size for f in flows) * 8.0 / (dur_ns / NS_PER_S)
    target = 0.4 * 8 * 100 * GBPS
    assert offered == pytest.approx(target, rel=0.1)


def test_poisson_cross_leaf_only_filter(topo):
    cdf = SizeCdf([(1_000, 1.0)])
    flows = generate_poisson(topo, cdf, 0.3, 500_000, RngStream(3, "w"),
                             cross_leaf_only=True)
    hl = topo.host_leaf
    assert flows and all(hl[f.src] != hl[f.dst] for f in flows)


def test_poisson_chunk_is_propagated(topo):
    cdf = SizeCdf([(1_000, 1.0)])
    flows = generate_poisson(topo, cdf, 0.3, 200_000, RngStream(3, "w"),
                             chunk=64_000)
    assert flows and all(f.chunk == 64_000 for f in flows)


def test_poisson_streams_are_reproducible(topo):
    cdf = SizeCdf([(1_000, 0.5), (9_000, 1.0)])
    a = generate_poisson(topo, cdf, 0.5, 300_000, RngStream(5, "w"))
    b = generate_poisson(topo, cdf, 0.5, 300_000, RngStream(5, "w"))
    c = generate_poisson(topo, cdf, 0.5, 300_000, RngStream(6, "w"))
    assert a == b
    assert a != c


# ---------------------------------------------------------------------------
# collective rounds


def test_collective_pairs_hosts_across_the_half(topo):
    rounds = generate_collective_rounds(topo, 3, 4, 2_000_000, 1_000_000)
    assert len(rounds) == 3
    for rnd in rounds:
        assert [f.src for f in rnd] == ["h0", "h1", "h2", "h3"]
        assert [f.dst for f in rnd] == ["h4", "h5", "h6", "h7"]
        assert all(f.size == 2_000_000 and f.chunk == 1_000_000 for f in rnd)


def test_collective_bounds(topo):
    with pytest.raises(WorkloadError, match="flows_per_round"):
        generate_collective_rounds(topo, 2, 5, 1_000, 0)
    with pytest.raises(WorkloadError, match="flows_per_round"):
        generate_collective_rounds(topo, 2, 0, 1_000, 0)
    with pytest.raises(WorkloadError, match="rounds"):
        generate_collective_rounds(topo, 0, 2, 1_000, 0)


def test_flowspec_defaults():
    f = FlowSpec(10, "h0", "h1", 500)
    assert f.chunk == 0 and f.port is None and f.pinned is False
