"""Runtime switch plane: drop-tail output queues, linear ECN marking, ECMP forwarding.

Each directed link carries one output queue. A packet entering a queue is
assigned its departure instant immediately (max(busy_until, now) + ser) and
a single arrival event fires at the far end after the link latency, so the
per-hop cost is one event. Occupancy for ECN/drop decisions is maintained
lazily from a deque of pending departures.
"""

from collections import deque

from .engine import NS_PER_S, Engine
from .topology import Link, Topology


def serialization_ns(size_bytes: int, bandwidth_bps: int) -> int:
    """Wire time for size_bytes, rounded to the nearest nanosecond."""
    return (size_bytes * 8 * NS_PER_S + bandwidth_bps // 2) // bandwidth_bps


class LinkState:
    """Mutable per-run queue state for one directed link."""

    __slots__ = (
        "link", "key", "bw", "lat", "cap", "kmin", "kmax", "span", "pmax",
        "loss_rate", "busy_until", "occ", "departures", "bytes_out",
        "pkts_out", "drops", "ecn_marks", "lost", "ev_kind", "ev_target",
        "arrive_fn", "_ser",
    )

    def __init__(self, link: Link):
        self.link = link
        self.key = (link.src, link.dst)
        self.bw = link.bandwidth_bps
        self.lat = link.latency_ns
        self.cap = link.queue_capacity
        self.kmin = link.ecn_kmin
        self.kmax = link.ecn_kmax
        self.span = max(1, link.ecn_kmax - link.ecn_kmin)
        self.pmax = link.ecn_pmax
        self.loss_rate = link.loss_rate
        self.busy_until = 0
        self.occ = 0
        self.departures = deque()
        self.bytes_out = 0
        self.pkts_out = 0
        self.drops = 0
        self.ecn_marks = 0
        self.lost = 0
        self.ev_kind = "hop"
        self.ev_target = f"{link.src}>{link.dst}"
        self.arrive_fn = None  # bound by Fabric
        self._ser = {}

    def ser_ns(self, size: int) -> int:
        s = self._ser.get(size)
        if s is None:
            s = serialization_ns(size, self.bw)
            self._ser[size] = s
        return s


class Fabric:
    """Forwarding plane bound to one Engine run."""

    def __init__(self, topo: Topology, engine: Engine, deliver_host, ecn_rng, loss_rng=None):
        self.topo = topo
        self.engine = engine
        self.deliver_host = deliver_host
        self.ecn_rng = ecn_rng
        self.loss_rng = loss_rng
        self.links = {key: LinkState(l) for key, l in topo.links.items()}
        self.injected = 0
        self.delivered = 0
        self.dropped = 0
        self.lost = 0
        self._hash_cache = {}
        self._host_nic = {}       # host -> LinkState toward its leaf
        self._leaf_down = {}      # (leaf, host) -> LinkState
        self._leaf_up = {}        # leaf -> tuple of LinkState in spine order
        self._spine_down = {}     # (spine, leaf) -> LinkState
        hl = topo.host_leaf
        for h in topo.hosts:
            self._host_nic[h] = self.links[(h, hl[h])]
            self._leaf_down[(hl[h], h)] = self.links[(hl[h], h)]
        for leaf, ups in topo.uplinks.items():
            self._leaf_up[leaf] = tuple(self.links[(leaf, s)] for s, _ in ups)
        for (s, leaf) in topo.downlinks:
            self._spine_down[(s, leaf)] = self.links[(s, leaf)]
        self._bind_handlers()

    def _bind_handlers(self):
        hl = self.topo.host_leaf
        for key, ls in self.links.items():
            src, dst = key
            if dst in hl:  # leaf -> host: delivery
                ls.arrive_fn = self._make_deliver()
            elif dst in self._leaf_up:  # arrives at a leaf switch
                ls.arrive_fn = self._make_leaf_handler(dst)
            else:  # arrives at a spine switch
                ls.arrive_fn = self._make_spine_handler(dst)

    def _make_deliver(self):
        deliver = self.deliver_host

        def arrive(pkt):
            self.delivered += 1
            deliver(pkt)

        return arrive

    def _make_leaf_handler(self, leaf: str):
        hl = self.topo.host_leaf
        ups = self._leaf_up[leaf]
        n_up = len(ups)
        down = self._leaf_down
        cache = self._hash_cache
        from .topology import ecmp_hash

        def arrive(pkt, _leaf=leaf):
            dst = pkt.dst
            if hl[dst] == _leaf:
                self.transmit(down[(_leaf, dst)], pkt)
            else:
                key = (pkt.si, pkt.di, pkt.sport, pkt.dport)
                h = cache.get(key)
                if h is None:
                    h = ecmp_hash(pkt.si, pkt.di, pkt.sport, pkt.dport)
                    cache[key] = h
                self.transmit(ups[h % n_up], pkt)

        return arrive

    def _make_spine_handler(self, spine: str):
        hl = self.topo.host_leaf
        sd = self._spine_down

        def arrive(pkt, _spine=spine):
            self.transmit(sd[(_spine, hl[pkt.dst])], pkt)

        return arrive

    def inject(self, host: str, pkt) -> bool:
        """Enter the fabric through the host's NIC queue."""
        self.injected += 1
        return self.transmit(self._host_nic[host], pkt)

    def transmit(self, ls: LinkState, pkt) -> bool:
        """Queue pkt on a directed link; returns False on drop."""
        now = self.engine.now
        occ = ls.occ
        dq = ls.departures
        while dq and dq[0][0] <= now:
            occ -= dq.popleft()[1]
        size = pkt.size
        if occ + size > ls.cap:
            ls.occ = occ
            ls.drops += 1
            self.dropped += 1
            return False
        if ls.loss_rate > 0.0 and self.loss_rng is not None \
                and self.loss_rng.random() < ls.loss_rate:
            ls.occ = occ
            ls.lost += 1
            self.lost += 1
            return False
        if occ > ls.kmin and not pkt.ecn:
            if occ >= ls.kmax:
                pkt.ecn = True
                ls.ecn_marks += 1
            elif self.ecn_rng.random() < ls.pmax * (occ - ls.kmin) / ls.span:
                pkt.ecn = True
                ls.ecn_marks += 1
        busy = ls.busy_until
        if busy < now:
            busy = now
        depart = busy + ls.ser_ns(size)
        ls.busy_until = depart
        dq.append((depart, size))
        ls.occ = occ + size
        ls.bytes_out += size
        ls.pkts_out += 1
        self.engine.schedule_at(depart + ls.lat, ls.ev_kind, ls.ev_target, ls.arrive_fn, pkt)
        return True

    def per_spine_bytes(self) -> dict:
        """Bytes carried leaf->spine, keyed by spine (uplink direction only)."""
        out = {s: 0 for s in self.topo.spines}
        for leaf, ups in self.topo.uplinks.items():
            for spine, _ in ups:
                out[spine] += self.links[(leaf, spine)].bytes_out
        return out
