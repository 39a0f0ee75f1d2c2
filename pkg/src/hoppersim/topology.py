"""Leaf-spine fabric descriptions and source-port path profiling.

A Topology is a pure description: nodes, directed links, and the ECMP hash
that switches apply. It is immutable after construction; per-run queue
state lives in switchnet.Fabric.
"""

import struct
import zlib
from dataclasses import dataclass, field

# RoCEv2-style constants used in the canonical ECMP tuple.
ROCE_DPORT = 4791
PROTO_UDP = 17

GBPS = 1_000_000_000


class TopologyError(ValueError):
    """Invalid topology request (bad shape, unreachable path count, ...)."""


@dataclass(frozen=True)
class Link:
    """One directed link with its output-queue parameters."""

    src: str
    dst: str
    bandwidth_bps: int
    latency_ns: int
    queue_capacity: int
    ecn_kmin: int
    ecn_kmax: int
    ecn_pmax: float
    tier: str  # "host" or "fabric"
    loss_rate: float = 0.0

    @property
    def cls(self) -> str:
        """Utilization class label, e.g. fabric-10g."""
        g = self.bandwidth_bps / GBPS
        tag = f"{g:g}g"
        return f"{self.tier}-{tag}"


@dataclass(frozen=True)
class PathProfile:
    """Source ports that steer a (src, dst) pair onto distinct paths."""

    src: str
    dst: str
    ports: tuple          # ascending source ports, one per distinct path
    port_path: dict       # port -> path id (spine name, or "direct")
    paths: dict           # path id -> tuple of (src, dst) link keys


class Topology:
    def __init__(self, hosts, leaves, spines, host_leaf, links, uplinks, downlinks):
        self.hosts = hosts
        self.leaves = leaves
        self.spines = spines
        self.host_leaf = host_leaf              # host -> leaf
        self.links = links                      # (src, dst) -> Link
        self.uplinks = uplinks                  # leaf -> tuple of (spine, Link), spine order
        self.downlinks = downlinks              # (spine, leaf) -> Link
        self.host_index = {h: i for i, h in enumerate(hosts)}
        self.leaf_hosts = {}
        for h, l in host_leaf.items():
            self.leaf_hosts.setdefault(l, []).append(h)
        self.base_rtt_ns = self._base_rtt()

    def _base_rtt(self) -> int:
        """Unloaded round-trip propagation across a cross-leaf path.

        Serialization is size-dependent, so the base figure counts link
        latency only; with 1 us links and 4 hops each way this is 8 us.
        """
        src = self.hosts[0]
        dst = next((h for h in self.hosts if self.host_leaf[h] != self.host_leaf[src]), None)
        if dst is None:  # single-leaf fabric
            dst = self.hosts[-1]
        links = self.path_links(src, dst, None)
        return 2 * sum(l.latency_ns for l in links)

    # -- path enumeration --------------------------------------------------

    def n_paths(self, src: str, dst: str) -> int:
        if self.host_leaf[src] == self.host_leaf[dst]:
            return 1
        return len(self.uplinks[self.host_leaf[src]])

    def path_links(self, src: str, dst: str, spine):
        """Links along the path via `spine` (None picks the first uplink,
        or the single direct path for a same-leaf pair)."""
        sleaf = self.host_leaf[src]
        dleaf = self.host_leaf[dst]
        if sleaf == dleaf:
            return [self.links[(src, sleaf)], self.links[(sleaf, dst)]]
        if spine is None:
            spine = self.uplinks[sleaf][0][0]
        return [
            self.links[(src, sleaf)],
            self.links[(sleaf, spine)],
            self.links[(spine, dleaf)],
            self.links[(dleaf, dst)],
        ]

    def resolve_path(self, src: str, dst: str, sport: int):
        """Walk the forwarding decision for a 5-tuple; returns (path_id, links)."""
        sleaf = self.host_leaf[src]
        dleaf = self.host_leaf[dst]
        if sleaf == dleaf:
            return "direct", self.path_links(src, dst, None)
        ups = self.uplinks[sleaf]
        idx = ecmp_hash(self.host_index[src], self.host_index[dst], sport) % len(ups)
        spine = ups[idx][0]
        return spine, self.path_links(src, dst, spine)


def ecmp_hash(src_idx: int, dst_idx: int, sport: int,
              dport: int = ROCE_DPORT, proto: int = PROTO_UDP) -> int:
    """CRC32 over the canonical byte encoding of the 5-tuple."""
    return zlib.crc32(struct.pack(">IIHHB", src_idx, dst_idx, sport, dport, proto))


def profile_source_ports(topo: Topology, src: str, dst: str, k: int) -> PathProfile:
    """Find k source ports steering (src, dst) onto k distinct paths.

    Sweeps ports from 0 upward and keeps the first port that lands on each
    new path, so the result is deterministic for a given topology.
    """
    if src == dst:
        raise TopologyError(f"src == dst ({src})")
    avail = topo.n_paths(src, dst)
    if k < 1 or k > avail:
        raise TopologyError(
            f"requested {k} distinct paths for {src}->{dst}, achievable: {avail}"
        )
    ports = []
    port_path = {}
    paths = {}
    for sport in range(65536):
        pid, links = topo.resolve_path(src, dst, sport)
        if pid in paths:
            continue
        ports.append(sport)
        port_path[sport] = pid
        paths[pid] = tuple((l.src, l.dst) for l in links)
        if len(ports) == k:
            break
    else:
        raise TopologyError(
            f"port sweep exhausted with {len(ports)} paths for {src}->{dst}, wanted {k}"
        )
    return PathProfile(src, dst, tuple(ports), port_path, paths)


# -- builders ---------------------------------------------------------------


def _link(src, dst, bw, lat, qcap, kmin, kmax, pmax, tier, loss):
    return Link(src, dst, bw, lat, qcap, kmin, kmax, pmax, tier, loss)


def build_leaf_spine(
    n_hosts: int,
    n_leaves: int,
    n_spines: int,
    host_bw_bps: int = 100 * GBPS,
    fabric_bw_bps: int = 100 * GBPS,
    latency_ns: int = 1000,
    queue_capacity: int = 1_000_000,
    ecn_kmin: int = 100_000,
    ecn_kmax: int = 400_000,
    ecn_pmax: float = 0.05,
    loss_rate: float = 0.0,
) -> Topology:
    """Symmetric two-tier Clos: every leaf connects to every spine."""
    if n_hosts < 2 or n_leaves < 1 or n_spines < 1:
        raise TopologyError("need at least 2 hosts and 1 of each switch tier")
    if n_hosts % n_leaves != 0:
        raise TopologyError(f"{n_hosts} hosts do not divide evenly over {n_leaves} leaves")
    hosts = [f"h{i}" for i in range(n_hosts)]
    leaves = [f"l{i}" for i in range(n_leaves)]
    spines = [f"s{i}" for i in range(n_spines)]
    per_leaf = n_hosts // n_leaves
    host_leaf = {h: leaves[i // per_leaf] for i, h in enumerate(hosts)}

    links = {}
    uplinks = {}
    downlinks = {}

    def add(src, dst, bw, tier):
        links[(src, dst)] = _link(src, dst, bw, latency_ns, queue_capacity,
                                  ecn_kmin, ecn_kmax, ecn_pmax, tier, loss_rate)

    for h in hosts:
        l = host_leaf[h]
        add(h, l, host_bw_bps, "host")
        add(l, h, host_bw_bps, "host")
    for l in leaves:
        ups = []
        for s in spines:
            add(l, s, fabric_bw_bps, "fabric")
            add(s, l, fabric_bw_bps, "fabric")
            ups.append((s, links[(l, s)]))
            downlinks[(s, l)] = links[(s, l)]
        uplinks[l] = tuple(ups)
    return Topology(hosts, leaves, spines, host_leaf, links, uplinks, downlinks)


def build_asymmetric_testbed(
    n_hosts: int = 8,
    host_bw_bps: int = 25 * GBPS,
    fast_bw_bps: int = 10 * GBPS,
    slow_bw_bps: int = 1 * GBPS,
    n_fast: int = 4,
    n_slow: int = 2,
    latency_ns: int = 1000,
    queue_capacity: int = 1_000_000,
    ecn_kmin: int = 100_000,
    ecn_kmax: int = 400_000,
    ecn_pmax: float = 0.05,
    loss_rate: float = 0.0,
) -> Topology:
    """Two leaves, mixed-speed spine tier: n_fast fast + n_slow slow uplinks
    per leaf. Models a testbed where ECMP is blind to the 10x bandwidth gap."""
    if n_hosts % 2 != 0:
        raise TopologyError("testbed needs an even host count across 2 leaves")
    n_spines = n_fast + n_slow
    hosts = [f"h{i}" for i in range(n_hosts)]
    leaves = ["l0", "l1"]
    spines = [f"s{i}" for i in range(n_spines)]
    per_leaf = n_hosts // 2
    host_leaf = {h: leaves[i // per_leaf] for i, h in enumerate(hosts)}

    links = {}
    uplinks = {}
    downlinks = {}

    def add(src, dst, bw, tier):
        kmin, kmax = ecn_kmin, ecn_kmax
        if tier == "fabric" and bw < fast_bw_bps:
            # marking thresholds approximate a target queueing delay, so a
            # slow uplink signals at the same delay as a fast one
            kmin = max(4_000, int(ecn_kmin * bw / fast_bw_bps))
            kmax = max(16_000, int(ecn_kmax * bw / fast_bw_bps))
        links[(src, dst)] = _link(src, dst, bw, latency_ns, queue_capacity,
                                  kmin, kmax, ecn_pmax, tier, loss_rate)

    for h in hosts:
        l = host_leaf[h]
        add(h, l, host_bw_bps, "host")
        add(l, h, host_bw_bps, "host")
    for l in leaves:
        ups = []
        for i, s in enumerate(spines):
            bw = fast_bw_bps if i < n_fast else slow_bw_bps
            add(l, s, bw, "fabric")
            add(s, l, bw, "fabric")
            ups.append((s, links[(l, s)]))
            downlinks[(s, l)] = links[(s, l)]
        uplinks[l] = tuple(ups)
    return Topology(hosts, leaves, spines, host_leaf, links, uplinks, downlinks)
