"""Host-side path controllers: RTT-probing switcher plus the baselines.

The probing controller keeps a per-flow EWMA of data-path RTT, re-arms two
one-shot flags each RTT epoch, launches a pair of probes to unexplored
paths when the first threshold is crossed, and, past the second threshold,
migrates to the best probed path when it beats the current RTT by a margin,
delaying the rebinding by half the predicted RTT gap so packets on the new
path do not overtake what is still in flight on the old one.
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class HopperParams:
    alpha: float            # EWMA weight on the newest sample
    th_probe_ns: int        # probe trigger
    th_cong_ns: int         # switch trigger (must exceed th_probe)
    ttl_probe_ns: int       # probe-record freshness window
    delta_rtt: float        # switch margin: best < delta * avg
    probe_size: int = 1000
    force_zero_delay: bool = False  # diagnostic: disable delay compensation


def estimate_inflight_rtt(samples, inflight_count, avg_rtt):
    """Predict the RTT the last in-flight packet will see on the current path.

    Least-squares line over this epoch's (ack index, rtt) samples, projected
    ahead by the number of packets still in flight. A negative slope clamps
    to the last measured sample; fewer than two samples fall back to avg_rtt.
    """
    n = len(samples)
    if n < 2:
        return float(avg_rtt)
    sx = sy = sxy = sxx = 0.0
    for x, y in samples:
        sx += x
        sy += y
        sxy += x * y
        sxx += x * x
    denom = n * sxx - sx * sx
    if denom == 0:
        return float(samples[-1][1])
    slope = (n * sxy - sx * sy) / denom
    if slope < 0:
        return float(samples[-1][1])
    intercept = (sy - slope * sx) / n
    return intercept + slope * (samples[-1][0] + inflight_count)


def compute_switch_delay(predicted_old_ns, probed_new_ns):
    """Rebinding delay: half the predicted RTT gap, never negative."""
    d = (predicted_old_ns - probed_new_ns) / 2
    return int(d) if d > 0 else 0


class StaticEcmp:
    """Hash-and-forget: one random source port for the flow's lifetime."""

    per_packet = False
    needs_profile = False

    def __init__(self, sender, rng, pinned_port=None):
        self.sender = sender
        self._port = pinned_port if pinned_port is not None else rng.randrange(65536)

    def initial_port(self):
        return self._port

    def packet_port(self):
        return self._port

    def on_rtt(self, rtt, sport, inflight, now):
        pass

    def on_probe_reply(self, port, rtt, now):
        pass

    def on_migrated(self, port, now):
        pass


class PacketSpray:
    """Per-packet uniform spraying over the pair's profiled ports."""

    per_packet = True
    needs_profile = True

    def __init__(self, sender, profile, rng, pinned_port=None):
        self.sender = sender
        self.ports = profile.ports
        self.rng = rng
        self._initial = pinned_port if pinned_port is not None else rng.choice(self.ports)

    def initial_port(self):
        return self._initial

    def packet_port(self):
        return self.rng.choice(self.ports)

    def on_rtt(self, rtt, sport, inflight, now):
        pass

    def on_probe_reply(self, port, rtt, now):
        pass

    def on_migrated(self, port, now):
        pass


class FlowBender:
    """RTT-triggered blind rerouting: same detector as the prober, but the
    escape path is uniform-random and immediate, at most once per epoch."""

    per_packet = False
    needs_profile = True

    def __init__(self, sender, profile, params: HopperParams, rng, base_rtt_ns,
                 init_rng, pinned_port=None):
        self.sender = sender
        self.ports = profile.ports
        self.params = params
        self.rng = rng
        self.base_rtt = base_rtt_ns
        self.avg_rtt = 0.0
        self.epoch_start = sender.start_ns
        self.rerouted = False
        self._initial = pinned_port if pinned_port is not None else init_rng.choice(self.ports)

    def initial_port(self):
        return self._initial

    def packet_port(self):
        return self.sender.qp.sport

    def on_rtt(self, rtt, sport, inflight, now):
        if sport != self.sender.qp.sport:
            return  # sample from a path we already left
        epoch_len = int(self.avg_rtt) if self.avg_rtt > 0 else self.base_rtt
        if now - self.epoch_start >= epoch_len:
            self.epoch_start = now
            self.rerouted = False
        a = self.params.alpha
        self.avg_rtt = a * rtt + (1.0 - a) * self.avg_rtt
        if self.avg_rtt > self.params.th_cong_ns and not self.rerouted:
            self.rerouted = True
            others = [p for p in self.ports if p != self.sender.qp.sport]
            if others:
                self.sender.migrate(self.rng.choice(others), now)

    def on_probe_reply(self, port, rtt, now):
        pass

    def on_migrated(self, port, now):
        pass


class HopperController:
    """Probe-then-switch controller (one instance per flow)."""

    per_packet = False
    needs_profile = True

    def __init__(self, sender, profile, params: HopperParams, rng, base_rtt_ns,
                 init_rng, send_probe, pinned_port=None):
        self.sender = sender
        self.ports = profile.ports
        self.params = params
        self.rng = rng
        self.base_rtt = base_rtt_ns
        self.send_probe = send_probe    # callable(port)
        self.avg_rtt = 0.0
        self.epoch_start = sender.start_ns
        self.probe_ok = True
        self.switch_ok = True
        self.samples = []               # (ack index in epoch, rtt)
        self.records = {}               # port -> (rtt, probed_at)
        self.inflight_probes = {}       # port -> sent_at
        self._initial = pinned_port if pinned_port is not None else init_rng.choice(self.ports)

    def initial_port(self):
        return self._initial

    def packet_port(self):
        return self.sender.qp.sport

    # -- measurement loop ---------------------------------------------------

    def on_rtt(self, rtt, sport, inflight, now):
        if sport != self.sender.qp.sport:
            return  # stale sample from the pre-switch path
        p = self.params
        epoch_len = int(self.avg_rtt) if self.avg_rtt > 0 else self.base_rtt
        if now - self.epoch_start >= epoch_len:
            self._roll_epoch(now)
        a = p.alpha
        self.avg_rtt = a * rtt + (1.0 - a) * self.avg_rtt
        self.samples.append((len(self.samples), rtt))
        if self.avg_rtt > p.th_probe_ns and self.probe_ok:
            self.probe_ok = False
            eng = self.sender.engine
            if eng.traced:
                eng.note("th-probe-crossed",
                         f"flow={self.sender.fid} avg={int(self.avg_rtt)}")
            self._launch_probes(now)
        if self.avg_rtt > p.th_cong_ns and self.switch_ok:
            self._select_and_switch(inflight, now)

    def _roll_epoch(self, now):
        self.epoch_start = now
        self.probe_ok = True
        self.switch_ok = True
        self.samples.clear()
        ttl = self.params.ttl_probe_ns
        self.records = {q: r for q, r in self.records.items() if now - r[1] <= ttl}
        self.inflight_probes = {q: t for q, t in self.inflight_probes.items()
                                if now - t <= ttl}

    def _launch_probes(self, now):
        """Power-of-two-choices probing of unexplored alternative paths."""
        ttl = self.params.ttl_probe_ns
        cur = self.sender.qp.sport
        eligible = [q for q in self.ports
                    if q != cur
                    and (q not in self.records or now - self.records[q][1] > ttl)
                    and (q not in self.inflight_probes or now - self.inflight_probes[q] > ttl)]
        if not eligible:
            return
        picks = self.rng.sample(eligible, 2) if len(eligible) > 1 else eligible
        for q in picks:
            self.inflight_probes[q] = now
            self.send_probe(q)

    def on_probe_reply(self, port, rtt, now):
        sent = self.inflight_probes.pop(port, None)
        if sent is None:
            return
        self.records[port] = (rtt, sent)

    def _select_and_switch(self, inflight, now):
        p = self.params
        ttl = p.ttl_probe_ns
        cur = self.sender.qp.sport
        fresh = [(r[0], q) for q, r in self.records.items()
                 if q != cur and now - r[1] <= ttl]
        if not fresh:
            return  # keep the flag armed until probe replies arrive
        self.switch_ok = False
        eng = self.sender.engine
        if eng.traced:
            eng.note("th-cong-crossed",
                     f"flow={self.sender.fid} avg={int(self.avg_rtt)}")
        best_rtt, best_port = min(fresh)
        if best_rtt >= p.delta_rtt * self.avg_rtt:
            return  # margin not met: stay, keep records until their ttl
        predicted = estimate_inflight_rtt(self.samples, inflight, self.avg_rtt)
        delay = 0 if p.force_zero_delay else compute_switch_delay(predicted, best_rtt)
        if eng.traced:
            eng.note("switch-decision",
                     f"flow={self.sender.fid} port={best_port} delay={delay}")
        self.sender.migrate(best_port, now + delay)

    def on_migrated(self, port, now):
        # trust the probe: the new path's measured RTT seeds the average
        rec = self.records.pop(port, None)
        if rec is not None:
            self.avg_rtt = float(rec[0])
        self.samples.clear()
