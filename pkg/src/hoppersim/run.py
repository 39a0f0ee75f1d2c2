"""Run assembly: flows, path controllers, probe plumbing, and reports.

A Simulation binds one topology + scheme + seed to one Engine and drives a
workload to completion. Flows injected during the measurement window always
run until their last byte is acknowledged, so completion times are exact
rather than censored at the window edge.
"""

import dataclasses
from dataclasses import replace

from .engine import NS_PER_MS, NS_PER_S, Engine, SimulationError
from .loadbalancer import (FlowBender, HopperController, HopperParams,
                           PacketSpray, StaticEcmp)
from .metrics import (BaselineTable, Counters, FlowRecord, bin_slowdowns,
                      drop_and_mark_totals, spine_spread, utilization_by_class)
from .switchnet import Fabric
from .topology import ROCE_DPORT, profile_source_ports
from .transport import FlowReceiver, FlowSender, Packet, TransportParams
from .workload import FlowSpec, SizeCdf, generate_collective_rounds, generate_poisson

SCHEMES = ("ecmp", "rps", "flowbender", "hopper")

# Fixed creation order keeps every run of a given seed bit-identical no
# matter which streams a scheme actually draws from.
RNG_STREAMS = ("workload", "ecmp-port-assignment", "probe-selection",
               "flowbender-reroute", "rps", "ecn", "loss")

DEFAULT_SLOWDOWN_EDGES = (2_000, 49_000)


def default_hopper_params(base_rtt_ns: int, *, alpha=1.0, th_probe=1.5,
                          th_cong=2.5, ttl_probe=4.0, delta_rtt=0.8,
                          probe_size=1000, force_zero_delay=False) -> HopperParams:
    """Controller thresholds expressed as multiples of the unloaded RTT."""
    if th_cong <= th_probe:
        raise ValueError(f"th_cong ({th_cong}) must exceed th_probe ({th_probe})")
    return HopperParams(
        alpha=alpha,
        th_probe_ns=int(th_probe * base_rtt_ns),
        th_cong_ns=int(th_cong * base_rtt_ns),
        ttl_probe_ns=int(ttl_probe * base_rtt_ns),
        delta_rtt=delta_rtt,
        probe_size=probe_size,
        force_zero_delay=force_zero_delay,
    )


def bdp_bytes(bandwidth_bps: int, rtt_ns: int) -> int:
    return int(bandwidth_bps * rtt_ns / (8 * NS_PER_S))


def fastest_port(topo, src: str, dst: str) -> int:
    """Steering port whose path has the highest bottleneck bandwidth."""
    prof = profile_source_ports(topo, src, dst, topo.n_paths(src, dst))
    best_bw = -1
    best_port = prof.ports[0]
    for port in prof.ports:
        links = prof.paths[prof.port_path[port]]
        bw = min(topo.links[k].bandwidth_bps for k in links)
        if bw > best_bw:
            best_bw, best_port = bw, port
    return best_port


def unloaded_fct(topo, transport, size: int, chunk: int, pair_class: str) -> int:
    """Completion time of one flow on an idle fabric over its fastest path.

    This is the denominator of every slowdown figure, so it deliberately
    reuses the full transport stack rather than a shortcut formula.
    """
    src = topo.hosts[0]
    if pair_class == "intra":
        mates = [h for h in topo.leaf_hosts[topo.host_leaf[src]] if h != src]
        if not mates:
            raise SimulationError("no same-leaf pair for an intra baseline")
        dst, port = mates[0], 0
    else:
        dst = next(h for h in topo.hosts
                   if topo.host_leaf[h] != topo.host_leaf[src])
        port = fastest_port(topo, src, dst)
    sub = Simulation(topo, "ecmp", 0, transport=transport)
    sub.add_flow(FlowSpec(0, src, dst, size, chunk, port=port, pinned=True))
    sub._drain(0, size * 800 + 200 * NS_PER_MS)
    snd = sub.senders[0]
    if not snd.completed:
        raise SimulationError(f"unloaded baseline flow of {size} B stalled")
    return snd.end_ns - snd.start_ns


def make_baseline_table(topo, transport=None) -> BaselineTable:
    """Memoized unloaded-FCT table, shareable across seeds of one topology."""
    tp = transport if transport is not None else TransportParams()
    return BaselineTable(lambda s, c, p: unloaded_fct(topo, tp, s, c, p))


class Simulation:
    """One seeded run of one scheme over one topology."""

    def __init__(self, topo, scheme: str, seed: int, *, transport=None,
                 hopper=None, trace_write=None, baselines=None,
                 slowdown_edges=DEFAULT_SLOWDOWN_EDGES):
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}; have {', '.join(SCHEMES)}")
        self.topo = topo
        self.scheme = scheme
        self.seed = seed
        self.transport = transport if transport is not None else TransportParams()
        self.base_rtt_ns = topo.base_rtt_ns
        self.hopper = hopper if hopper is not None else default_hopper_params(self.base_rtt_ns)
        self.engine = Engine(seed, trace_write)
        self.counters = Counters()
        self.rngs = {name: self.engine.rng(name) for name in RNG_STREAMS}
        self.fabric = Fabric(topo, self.engine, self._deliver,
                             self.rngs["ecn"], self.rngs["loss"])
        self.senders = {}
        self.receivers = {}
        self.records = {}        # fid -> FlowRecord
        self.baselines = baselines if baselines is not None \
            else make_baseline_table(topo, self.transport)
        self.slowdown_edges = tuple(slowdown_edges)
        self.duration_ns = 0     # injection window, set by the run_* drivers
        self.offered_load = None
        self.round_times = []
        self._profiles = {}
        self._next_fid = 0
        self._probe_seq = 0
        self._done_hook = None
        self._round_sched = None
        self._round_idx = 0
        self._round_left = 0

    # -- flow setup ----------------------------------------------------------

    def add_flow(self, spec: FlowSpec) -> int:
        fid = self._next_fid
        self._next_fid += 1
        self.engine.schedule_at(spec.start_ns, "flow-start", fid,
                                self._start_flow, (fid, spec))
        return fid

    def _start_flow(self, arg):
        fid, spec = arg
        now = self.engine.now
        topo = self.topo
        line = topo.links[(spec.src, topo.host_leaf[spec.src])].bandwidth_bps
        snd = FlowSender(self, fid, spec.src, spec.dst, spec.size, now, line,
                         bdp_bytes(line, self.base_rtt_ns), self.transport,
                         spec.chunk)
        snd.lb = self._make_lb(snd, spec)
        rcv = FlowReceiver(self, fid, spec.dst, self.transport.ooo_threshold,
                           self.transport.ack_bytes, snd.n_pkts)
        self.senders[fid] = snd
        self.receivers[fid] = rcv
        pc = "intra" if topo.host_leaf[spec.src] == topo.host_leaf[spec.dst] else "cross"
        self.records[fid] = FlowRecord(fid, spec.src, spec.dst, spec.size, pc,
                                       now, 0, chunk=spec.chunk)
        self.counters.flows_started += 1
        snd.start()

    def _profile(self, src, dst):
        key = (src, dst)
        prof = self._profiles.get(key)
        if prof is None:
            prof = profile_source_ports(self.topo, src, dst,
                                        self.topo.n_paths(src, dst))
            self._profiles[key] = prof
        return prof

    def _make_lb(self, snd, spec):
        if spec.pinned or self.scheme == "ecmp":
            return StaticEcmp(snd, self.rngs["ecmp-port-assignment"],
                              pinned_port=spec.port)
        prof = self._profile(spec.src, spec.dst)
        if self.scheme == "rps":
            return PacketSpray(snd, prof, self.rngs["rps"], pinned_port=spec.port)
        if self.scheme == "flowbender":
            return FlowBender(snd, prof, self.hopper,
                              self.rngs["flowbender-reroute"], self.base_rtt_ns,
                              self.rngs["ecmp-port-assignment"],
                              pinned_port=spec.port)
        return HopperController(snd, prof, self.hopper,
                                self.rngs["probe-selection"], self.base_rtt_ns,
                                self.rngs["ecmp-port-assignment"],
                                self._make_send_probe(snd),
                                pinned_port=spec.port)

    def _make_send_probe(self, snd):
        size = self.hopper.probe_size

        def send_probe(port):
            if snd.completed:
                return
            self.counters.probes_sent += 1
            seq = self._probe_seq
            self._probe_seq += 1
            pkt = Packet("p", snd.fid, seq, 0, None, size, snd.src, snd.dst,
                         snd.si, snd.di, port, ROCE_DPORT, False,
                         self.engine.now)
            if self.engine.traced:
                self.engine.note("probe", f"flow={snd.fid} seq={seq} port={port}")
            self.fabric.inject(snd.src, pkt)

        return send_probe

    # -- packet delivery at hosts ---------------------------------------------

    def _deliver(self, pkt):
        kind = pkt.kind
        if kind == "d":
            self.receivers[pkt.flow].on_data(pkt)
        elif kind == "a":
            snd = self.senders[pkt.flow]
            if not snd.completed:
                snd.on_ack(pkt)
        elif kind == "n":
            snd = self.senders[pkt.flow]
            if not snd.completed:
                snd.on_nack(pkt)
        elif kind == "p":
            self._probe_echo(pkt)
        else:
            self.counters.probe_replies += 1
            snd = self.senders.get(pkt.flow)
            if snd is not None and not snd.completed:
                snd.lb.on_probe_reply(pkt.dport, self.engine.now - pkt.born,
                                      self.engine.now)

    def _probe_echo(self, pkt):
        host = pkt.dst
        reply = Packet("r", pkt.flow, pkt.seq, 0, None,
                       self.transport.ack_bytes, host, pkt.src, pkt.di,
                       pkt.si, ROCE_DPORT, pkt.sport, pkt.ecn, pkt.born)
        self.fabric.inject(host, reply)

    def on_flow_done(self, snd):
        self.counters.flows_completed += 1
        rec = self.records[snd.fid]
        rec.finish_ns = snd.end_ns
        rec.switches = snd.switches
        rec.retx = snd.retx_sent
        if self._done_hook is not None:
            self._done_hook(snd)

    # -- drivers ---------------------------------------------------------------

    def _drain(self, start_at: int, cap_ns: int):
        """Advance to start_at, then in slices until all flows finish."""
        eng = self.engine
        eng.run_until(start_at)
        c = self.counters
        t = max(start_at, eng.now)
        while c.flows_completed < c.flows_started or eng.pending:
            if t >= cap_ns:
                raise SimulationError(
                    f"run exceeded its {cap_ns} ns cap with "
                    f"{c.flows_started - c.flows_completed} unfinished flows; "
                    + eng.diagnostic_tail())
            t = min(t + NS_PER_MS, cap_ns)
            eng.run_until(t)

    def run_poisson(self, cdf: SizeCdf, load: float, duration_ns: int,
                    cross_leaf_only=False, chunk=0, drain_cap_ns=None):
        specs = generate_poisson(self.topo, cdf, load, duration_ns,
                                 self.rngs["workload"], cross_leaf_only, chunk)
        for spec in specs:
            self.add_flow(spec)
        self.offered_load = load
        self.duration_ns = duration_ns
        cap = drain_cap_ns if drain_cap_ns is not None \
            else duration_ns * 10 + 200 * NS_PER_MS
        self._drain(duration_ns, cap)
        return self

    def run_explicit(self, specs, drain_cap_ns=None):
        total = sum(s.size for s in specs)
        last = max((s.start_ns for s in specs), default=0)
        cap = drain_cap_ns if drain_cap_ns is not None \
            else last + total * 800 + 200 * NS_PER_MS  # total at 10 Mbps, roughly
        for spec in specs:
            self.add_flow(spec)
        self._drain(last, cap)
        self.duration_ns = self.engine.now
        return self

    def run_collective(self, rounds: int, flows_per_round: int, flow_size: int,
                       chunk=0, drain_cap_ns=None):
        """Barrier-synchronized rounds: round k+1 starts the instant the last
        flow of round k completes. Returns per-round finish times."""
        self._round_sched = generate_collective_rounds(
            self.topo, rounds, flows_per_round, flow_size, chunk)
        self._round_idx = 0
        self.round_times = []
        self._done_hook = self._round_hook
        if drain_cap_ns is None:
            min_bw = min(l.bandwidth_bps for l in self.topo.links.values())
            total = rounds * flows_per_round * flow_size
            drain_cap_ns = int(total * 8 * NS_PER_S / min_bw) * 10 + 200 * NS_PER_MS
        self._launch_next_round()
        self._drain(0, drain_cap_ns)
        self._done_hook = None
        self.duration_ns = self.engine.now
        return self.round_times

    def _round_hook(self, _snd):
        self._round_left -= 1
        if self._round_left == 0:
            self.round_times.append(self.engine.now)
            self._launch_next_round()

    def _launch_next_round(self):
        if self._round_idx >= len(self._round_sched):
            return
        rnd = self._round_sched[self._round_idx]
        self._round_idx += 1
        self._round_left = len(rnd)
        now = self.engine.now
        for spec in rnd:
            self.add_flow(replace(spec, start_ns=now))

    # -- results -----------------------------------------------------------------

    def check_invariants(self):
        """Cheap end-of-run audits; raises SimulationError on any violation."""
        f = self.fabric
        if f.delivered + f.dropped + f.lost > f.injected:
            raise SimulationError(
                f"packet accounting broken: injected {f.injected} < delivered "
                f"{f.delivered} + dropped {f.dropped} + lost {f.lost}")
        for key, ls in f.links.items():
            if ls.occ < 0:
                raise SimulationError(f"negative occupancy on {key}: {ls.occ}")
        for fid, snd in self.senders.items():
            if not snd.completed:
                continue
            rcv = self.receivers[fid]
            if rcv.expected != snd.n_pkts or rcv.buf:
                raise SimulationError(
                    f"flow {fid} completed but receiver saw {rcv.expected}"
                    f"/{snd.n_pkts} in order ({len(rcv.buf)} parked)")
            if rcv.delivered_bytes != snd.size:
                raise SimulationError(
                    f"flow {fid} delivered {rcv.delivered_bytes} B of {snd.size}")

    def build_report(self) -> dict:
        self.check_invariants()
        for rec in self.records.values():
            if rec.finish_ns and not rec.baseline_ns:
                rec.baseline_ns = self.baselines.get(rec.size, rec.chunk,
                                                     rec.pair_class)
        eng = self.engine
        topo = self.topo
        c = self.counters
        elapsed = eng.now if eng.now > 0 else 1
        report = {
            "meta": {
                "scheme": self.scheme,
                "seed": self.seed,
                "hosts": len(topo.hosts),
                "leaves": len(topo.leaves),
                "spines": len(topo.spines),
                "base_rtt_ns": self.base_rtt_ns,
                "load": self.offered_load,
                "inject_window_ns": self.duration_ns,
                "elapsed_ns": eng.now,
                "events": eng.dispatched,
                "params": dataclasses.asdict(self.hopper),
            },
            "counters": c.as_dict(),
            "fabric": {
                "injected": self.fabric.injected,
                "delivered": self.fabric.delivered,
                **drop_and_mark_totals(self.fabric),
            },
            "flows": {
                "started": c.flows_started,
                "completed": c.flows_completed,
                "unfinished": c.flows_started - c.flows_completed,
            },
            "slowdown": bin_slowdowns(self.records.values(), self.slowdown_edges),
            "utilization": utilization_by_class(self.fabric, elapsed),
            "spines": spine_spread(self.fabric),
        }
        if self.round_times:
            report["collective"] = {
                "rounds": len(self.round_times),
                "round_finish_ns": list(self.round_times),
                "total_ns": self.round_times[-1],
            }
        return report
