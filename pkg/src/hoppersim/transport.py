"""Host transport: BDP-capped senders, DCQCN rate control, IRN selective repeat.

A flow owns one data queue pair at a time; the QP's steering source port
fixes the fabric path. Path migration rebinds the flow to a fresh QP, so
packets already in flight keep their old port while everything sent after
the rebinding (retransmissions included) uses the new one.
"""

from collections import deque
from dataclasses import dataclass

from .engine import NS_PER_S
from .topology import ROCE_DPORT


class Packet:
    """One simulated packet. kind: d=data a=ack n=nack p=probe r=probe-reply."""

    __slots__ = ("kind", "flow", "seq", "cum", "sack", "size", "src", "dst",
                 "si", "di", "sport", "dport", "ecn", "born")

    def __init__(self, kind, flow, seq, cum, sack, size, src, dst, si, di,
                 sport, dport, ecn, born=0):
        self.kind = kind
        self.flow = flow
        self.seq = seq
        self.cum = cum
        self.sack = sack
        self.size = size
        self.src = src
        self.dst = dst
        self.si = si
        self.di = di
        self.sport = sport
        self.dport = dport
        self.ecn = ecn
        self.born = born


@dataclass(frozen=True)
class DcqcnParams:
    g: float = 1.0 / 256.0
    ai_bps: int = 40_000_000            # additive-increase step
    timer_ns: int = 55_000              # rate increase period
    alpha_timer_ns: int = 55_000        # alpha decay period
    cut_interval_ns: int = 50_000       # min spacing between rate cuts
    fast_recovery_stages: int = 5
    min_rate_bps: int = 10_000_000


@dataclass(frozen=True)
class TransportParams:
    mtu: int = 1000                     # data payload bytes per packet
    ack_bytes: int = 64
    ooo_threshold: int = 30             # receiver reorder tolerance, packets
    rto_multiple: int = 3               # x smoothed RTT
    rto_min_ns: int = 100_000
    dcqcn: DcqcnParams = DcqcnParams()


class QueuePair:
    """Steering-port binding; the port never changes for a QP's lifetime."""

    __slots__ = ("qid", "sport", "created_ns", "purpose", "out", "released")

    def __init__(self, qid, sport, created_ns, purpose="data"):
        self.qid = qid
        self.sport = sport
        self.created_ns = created_ns
        self.purpose = purpose
        self.out = 0          # packets in flight on this QP
        self.released = False


class FlowSender:
    __slots__ = (
        "run", "engine", "fabric", "fid", "src", "dst", "si", "di",
        "size", "n_pkts", "tail", "mtu", "window_bytes", "inflight_bytes",
        "next_new", "cum", "sacked", "outstanding", "rtx_q",
        "qp", "_qp_seq", "dc", "line_rate", "rate", "target", "alpha",
        "stage", "last_cut", "last_inc", "last_alpha",
        "params", "srtt", "rto_handle", "rto_backoff",
        "send_primed", "send_handle", "next_send_ns", "pending_port",
        "chunk_pkts", "lb", "start_ns", "end_ns", "completed",
        "switches", "retx_sent", "peak_inflight",
    )

    def __init__(self, run, fid, src, dst, size, start_ns, line_rate_bps,
                 window_bytes, params: TransportParams, chunk_bytes=0):
        if size <= 0:
            raise ValueError(f"flow {fid}: size must be positive, got {size}")
        self.run = run
        self.engine = run.engine
        self.fabric = run.fabric
        self.fid = fid
        self.src = src
        self.dst = dst
        self.si = run.topo.host_index[src]
        self.di = run.topo.host_index[dst]
        self.size = size
        self.mtu = params.mtu
        self.n_pkts = (size + params.mtu - 1) // params.mtu
        tail = size % params.mtu
        self.tail = tail if tail else params.mtu
        self.window_bytes = window_bytes
        self.inflight_bytes = 0
        self.next_new = 0
        self.cum = 0
        self.sacked = set()
        self.outstanding = {}   # seq -> [sent_ns, qp, retx_count, nack_queued]
        self.rtx_q = deque()
        self.qp = None
        self._qp_seq = 0
        self.dc = params.dcqcn
        self.line_rate = line_rate_bps
        self.rate = float(line_rate_bps)    # transmission begins at line rate
        self.target = float(line_rate_bps)
        self.alpha = 1.0
        self.stage = 0
        self.last_cut = start_ns
        self.last_inc = start_ns
        self.last_alpha = start_ns
        self.params = params
        self.srtt = 0
        self.rto_handle = None
        self.rto_backoff = 1
        self.send_primed = False
        self.send_handle = None
        self.next_send_ns = start_ns
        self.pending_port = None
        self.chunk_pkts = (chunk_bytes + params.mtu - 1) // params.mtu if chunk_bytes else 0
        self.lb = None
        self.start_ns = start_ns
        self.end_ns = None
        self.completed = False
        self.switches = 0
        self.retx_sent = 0
        self.peak_inflight = 0

    # -- lifecycle ----------------------------------------------------------

    def start(self):
        now = self.engine.now
        self._new_qp(self.lb.initial_port(), now)
        self.rto_handle = self.engine.schedule(
            self._rto_ns(), "rto", self.fid, self._rto_event, None)
        self._pump()

    def _new_qp(self, port, now):
        self.qp = QueuePair(self._qp_seq, port, now)
        self._qp_seq += 1
        self.run.counters.qps_created += 1

    def _complete(self, now):
        self.completed = True
        self.end_ns = now
        if self.rto_handle is not None:
            self.engine.cancel(self.rto_handle)
        self.sacked.clear()
        self.rtx_q.clear()
        qp = self.qp
        if not qp.released:
            qp.released = True
            self.run.counters.qps_released += 1
        self.run.on_flow_done(self)

    # -- sending ------------------------------------------------------------

    def _size_of(self, seq):
        return self.mtu if seq < self.n_pkts - 1 else self.tail

    def _chunk_ok(self, seq):
        cp = self.chunk_pkts
        if not cp:
            return True
        return seq < (self.cum // cp + 1) * cp

    def _can_send_new(self):
        nn = self.next_new
        return (nn < self.n_pkts
                and self.inflight_bytes + self._size_of(nn) <= self.window_bytes
                and self._chunk_ok(nn))

    def _pump(self):
        if self.send_primed or self.completed:
            return
        if not self.rtx_q and not self._can_send_new():
            return
        at = self.next_send_ns
        now = self.engine.now
        if at < now:
            at = now
        self.send_primed = True
        self.send_handle = self.engine.schedule_at(
            at, "tx", self.fid, self._send_event, None)

    def _send_event(self, _):
        self.send_primed = False
        self.send_handle = None
        if self.completed:
            return
        engine = self.engine
        now = engine.now
        seq = -1
        rtx_q = self.rtx_q
        while rtx_q:
            s = rtx_q.popleft()
            if s in self.outstanding and s not in self.sacked:
                seq = s
                break
        is_new = False
        if seq < 0:
            if self._can_send_new():
                seq = self.next_new
                if self.chunk_pkts and self.pending_port is not None \
                        and seq % self.chunk_pkts == 0:
                    # chunk boundary is the path-switch grain in chunked mode
                    self._apply_port(self.pending_port, now)
                    self.pending_port = None
                self.next_new = seq + 1
                is_new = True
            else:
                return
        size = self._size_of(seq)
        qp = self.qp
        port = self.lb.packet_port() if self.lb.per_packet else qp.sport
        pkt = Packet("d", self.fid, seq, 0, None, size, self.src, self.dst,
                     self.si, self.di, port, ROCE_DPORT, False, now)
        if is_new:
            self.outstanding[seq] = [now, qp, 0, False]
            qp.out += 1
            self.inflight_bytes += size
            if self.inflight_bytes > self.peak_inflight:
                self.peak_inflight = self.inflight_bytes
        else:
            rec = self.outstanding[seq]
            old_qp = rec[1]
            if old_qp is not qp:
                old_qp.out -= 1
                self._maybe_release(old_qp)
                rec[1] = qp
                qp.out += 1
            rec[0] = now
            rec[2] += 1
            self.retx_sent += 1
            self.run.counters.retx_sent += 1
        self.run.counters.data_sent += 1
        if engine.traced:
            engine.note("send" if is_new else "resend",
                        f"flow={self.fid} seq={seq} port={port}")
        self.fabric.inject(self.src, pkt)
        gap = int(size * 8 * NS_PER_S / self.rate + 0.5)
        self.next_send_ns = now + (gap if gap > 0 else 1)
        self._pump()

    # -- receiving feedback --------------------------------------------------

    def _advance_cum(self, to):
        out = self.outstanding
        sacked = self.sacked
        for s in range(self.cum, to):
            rec = out.pop(s, None)
            if rec is not None:
                self.inflight_bytes -= self._size_of(s)
                rec[1].out -= 1
                self._maybe_release(rec[1])
            else:
                sacked.discard(s)
        self.cum = to

    def _take_sack(self, seq):
        """Mark one seq delivered out of order; returns True on new info."""
        if seq < self.cum or seq in self.sacked:
            return False
        rec = self.outstanding.pop(seq, None)
        if rec is None:
            return False
        self.inflight_bytes -= self._size_of(seq)
        rec[1].out -= 1
        self._maybe_release(rec[1])
        self.sacked.add(seq)
        return True

    def on_ack(self, pkt):
        if self.completed:
            return
        now = self.engine.now
        self._dcqcn(now, pkt.ecn)
        rtt = -1
        sport = 0
        rec = self.outstanding.get(pkt.seq)
        if rec is not None and rec[2] == 0:  # Karn: never sample retransmits
            rtt = now - rec[0]
            sport = rec[1].sport
        prog = False
        if pkt.cum > self.cum:
            self._advance_cum(pkt.cum)
            prog = True
        if self._take_sack(pkt.seq):
            prog = True
        if prog:
            self.rto_backoff = 1
        if self.cum >= self.n_pkts:
            self._complete(now)
            return
        if rtt >= 0:
            self._srtt_update(rtt)
            self.lb.on_rtt(rtt, sport, len(self.outstanding), now)
            if self.completed:  # a migration hook may have finished us
                return
        self._pump()

    def on_nack(self, pkt):
        if self.completed:
            return
        now = self.engine.now
        self._dcqcn(now, pkt.ecn)
        prog = False
        if pkt.cum > self.cum:
            self._advance_cum(pkt.cum)
            prog = True
        sack = pkt.sack or ()
        for s in sack:
            if self._take_sack(s):
                prog = True
        hi = max(sack) if sack else self.cum
        for s in range(self.cum, hi):
            rec = self.outstanding.get(s)
            if rec is None or s in self.sacked or rec[3]:
                continue
            rec[3] = True
            self.rtx_q.append(s)
        if prog:
            self.rto_backoff = 1
        if self.cum >= self.n_pkts:
            self._complete(now)
            return
        self._pump()

    # -- timers ---------------------------------------------------------------

    def _srtt_update(self, rtt):
        if self.srtt == 0:
            self.srtt = rtt
        else:
            self.srtt += (rtt - self.srtt) >> 3

    def _rto_ns(self):
        base = self.srtt if self.srtt else self.run.base_rtt_ns
        rto = self.params.rto_multiple * base
        if rto < self.params.rto_min_ns:
            rto = self.params.rto_min_ns
        return rto * self.rto_backoff

    def _rto_event(self, _):
        if self.completed:
            return
        now = self.engine.now
        # deadline follows the oldest un-acked packet, not wall progress:
        # a DCQCN-throttled sender legitimately goes quiet between sends
        if self.outstanding:
            oldest = min(rec[0] for rec in self.outstanding.values())
            deadline = oldest + self._rto_ns()
        else:
            deadline = now + self._rto_ns()
        if now >= deadline:
            if self.outstanding:
                # last-resort recovery: resend every un-sacked outstanding seq
                self.rtx_q = deque(s for s in sorted(self.outstanding)
                                   if s not in self.sacked)
                for s in self.rtx_q:
                    self.outstanding[s][3] = True
                self.run.counters.rto_fires += 1
                # consecutive fires back off exponentially, else a slow path
                # turns the backstop into a resend storm
                if self.rto_backoff < 64:
                    self.rto_backoff *= 2
            deadline = now + self._rto_ns()
            self._pump()
        self.rto_handle = self.engine.schedule_at(
            deadline, "rto", self.fid, self._rto_event, None)

    # -- path migration --------------------------------------------------------

    def migrate(self, port, effective_at):
        """Rebind to a new steering port, resuming transmission at effective_at.

        The rebinding is immediate: nothing more is launched down the old
        path. A future effective_at holds the next send back so packets
        still in flight on the old path can land before the first packet
        on the new one arrives. Chunked flows instead defer the whole
        rebinding to the next chunk boundary (latest request wins).
        """
        if self.completed or port == self.qp.sport:
            return
        self.run.counters.migrations_scheduled += 1
        if self.chunk_pkts:
            self.pending_port = port
            return
        now = self.engine.now
        self._apply_port(port, now)
        if effective_at > now:
            if self.next_send_ns < effective_at:
                self.next_send_ns = effective_at
            if self.send_primed and self.send_handle[0] < effective_at:
                self.engine.cancel(self.send_handle)
                self.send_primed = False
                self.send_handle = None
                self._pump()

    def _apply_port(self, port, now):
        old = self.qp
        self._new_qp(port, now)
        self._maybe_release(old)
        self.switches += 1
        self.run.counters.switches += 1
        if self.engine.traced:
            self.engine.note("migrated", f"flow={self.fid} port={port}")
        self.lb.on_migrated(port, now)

    def _maybe_release(self, qp):
        if qp is not self.qp and qp.out == 0 and not qp.released:
            qp.released = True
            self.run.counters.qps_released += 1

    # -- DCQCN -------------------------------------------------------------------

    def _dcqcn(self, now, ecn):
        p = self.dc
        dt = now - self.last_inc
        T = p.timer_ns
        if dt >= T:
            k = dt // T
            steps = k if k < 64 else 64
            rate = self.rate
            target = self.target
            stage = self.stage
            line = self.line_rate
            for _ in range(steps):
                stage += 1
                if stage > p.fast_recovery_stages:
                    target += p.ai_bps
                    if target > line:
                        target = line
                rate = (rate + target) * 0.5
            self.rate = rate
            self.target = target
            self.stage = stage
            self.last_inc += k * T
        dta = now - self.last_alpha
        Ta = p.alpha_timer_ns
        if dta >= Ta:
            k2 = dta // Ta
            self.alpha *= (1.0 - p.g) ** k2
            self.last_alpha += k2 * Ta
        if ecn and now - self.last_cut >= p.cut_interval_ns:
            self.target = self.rate
            r = self.rate * (1.0 - self.alpha * 0.5)
            self.rate = r if r > p.min_rate_bps else float(p.min_rate_bps)
            self.alpha = (1.0 - p.g) * self.alpha + p.g
            self.stage = 0
            self.last_cut = now
            self.last_inc = now
            self.last_alpha = now


class FlowReceiver:
    """IRN-style receiver: buffer small reorder gaps, NACK past the threshold."""

    __slots__ = ("run", "host", "fid", "si", "expected", "buf", "threshold",
                 "ack_bytes", "n_pkts", "delivered_bytes")

    def __init__(self, run, fid, host, threshold, ack_bytes, n_pkts):
        self.run = run
        self.host = host
        self.fid = fid
        self.si = run.topo.host_index[host]
        self.expected = 0
        self.buf = set()
        self.threshold = threshold
        self.ack_bytes = ack_bytes
        self.n_pkts = n_pkts
        self.delivered_bytes = 0

    def on_data(self, pkt):
        seq = pkt.seq
        exp = self.expected
        c = self.run.counters
        if seq < exp or seq in self.buf:
            c.dup_delivered += 1
            self._reply("a", pkt, exp, None)  # re-ack; never deliver twice
            return
        self.delivered_bytes += pkt.size
        if seq == exp:
            exp += 1
            buf = self.buf
            while exp in buf:
                buf.remove(exp)
                exp += 1
            self.expected = exp
            self._reply("a", pkt, exp, None)
        elif seq - exp <= self.threshold:
            self.buf.add(seq)
            c.ooo_buffered += 1
            self._reply("a", pkt, exp, None)
        else:
            self.buf.add(seq)
            c.ooo_buffered += 1
            c.nacks_sent += 1
            self._reply("n", pkt, exp, tuple(sorted(self.buf)))

    def _reply(self, kind, data_pkt, cum, sack):
        ack = Packet(kind, self.fid, data_pkt.seq, cum, sack, self.ack_bytes,
                     self.host, data_pkt.src, self.si, data_pkt.si,
                     ROCE_DPORT, data_pkt.sport, data_pkt.ecn, self.run.engine.now)
        self.run.counters.acks_sent += 1
        self.run.fabric.inject(self.host, ack)
