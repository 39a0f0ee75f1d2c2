"""Deterministic discrete-event core: integer-nanosecond clock and seeded RNG streams.

All simulation state advances through one event queue. Events fire in
(fire_at, seq) order, so two events scheduled for the same nanosecond run
in insertion order, which is what makes runs bit-reproducible.
"""

import hashlib
import heapq
import random
from collections import deque

NS_PER_US = 1_000
NS_PER_MS = 1_000_000
NS_PER_S = 1_000_000_000


class SimulationError(RuntimeError):
    """Fatal logic error inside a run (never silently recovered)."""


def derive_seed(root_seed: int, label: str) -> int:
    digest = hashlib.sha256(f"{root_seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


class RngStream(random.Random):
    """A random.Random bound to (root seed, stream label).

    Streams with different labels are statistically independent, and draws
    on one stream never perturb another, so adding randomness to one
    concern (say probing) cannot change another's sequence (say workload).
    """

    def __new__(cls, root_seed: int, label: str):
        # random.Random.__new__ is C code that only accepts the seed argument
        return super().__new__(cls, derive_seed(root_seed, label))

    def __init__(self, root_seed: int, label: str):
        super().__init__(derive_seed(root_seed, label))
        self.label = label


# Heap entries are plain lists [fire_at, seq, kind, target, fn, arg]; the
# fn slot doubles as the cancelled flag (None == dead entry).
_FN = 4


class Engine:
    """Event queue with an integer-nanosecond virtual clock."""

    __slots__ = (
        "now", "seed", "_heap", "_seq", "_live", "_streams",
        "_trace_write", "_note_seq", "recent", "dispatched",
    )

    def __init__(self, seed: int, trace_write=None):
        self.now = 0
        self.seed = seed
        self._heap = []
        self._seq = 0
        self._live = 0
        self._streams = {}
        # trace_write: callable taking one formatted line, or None
        self._trace_write = trace_write
        self._note_seq = 0
        self.recent = deque(maxlen=16)  # diagnostic tail for error reports
        self.dispatched = 0

    # -- rng streams ------------------------------------------------------

    def rng(self, label: str) -> RngStream:
        """Fork a named RNG stream off the root seed. Labels are single-use."""
        if label in self._streams:
            raise SimulationError(f"duplicate RNG stream label: {label!r}")
        stream = RngStream(self.seed, label)
        self._streams[label] = stream
        return stream

    # -- scheduling -------------------------------------------------------

    def schedule(self, delay_ns: int, kind: str, target, fn, arg=None) -> list:
        """Schedule fn(arg) after delay_ns. Returns a cancellable handle."""
        if delay_ns < 0:
            raise SimulationError(
                f"schedule into the past: delay {delay_ns} ns for {kind} @ {self.now}"
            )
        return self.schedule_at(self.now + delay_ns, kind, target, fn, arg)

    def schedule_at(self, fire_at: int, kind: str, target, fn, arg=None) -> list:
        if fire_at < self.now:
            raise SimulationError(
                f"schedule into the past: {kind} at {fire_at} ns, clock {self.now} ns"
            )
        entry = [fire_at, self._seq, kind, target, fn, arg]
        self._seq += 1
        heapq.heappush(self._heap, entry)
        self._live += 1
        return entry

    def cancel(self, entry: list) -> None:
        """Cancel a pending event. No-op if already fired or cancelled."""
        if entry[_FN] is not None:
            entry[_FN] = None
            entry[5] = None
            self._live -= 1

    @property
    def pending(self) -> int:
        return self._live

    @property
    def traced(self) -> bool:
        return self._trace_write is not None

    # -- trace -------------------------------------------------------------

    def note(self, kind: str, target) -> None:
        """Emit a synthetic trace line at the current instant.

        Used for control-plane decisions (probe launches, switch commits)
        that are not queue events themselves. Never affects event seq
        numbering, so traced and untraced runs dispatch identically.
        """
        if self._trace_write is not None:
            self._trace_write(f"{self.now}\tn{self._note_seq}\t{kind}\t{target}\n")
            self._note_seq += 1

    # -- main loop ---------------------------------------------------------

    def run_until(self, t_end: int) -> int:
        """Dispatch every event with fire_at <= t_end.

        Afterwards the clock sits at the last dispatched fire time, or at
        t_end if nothing fired.
        """
        if t_end < self.now:
            raise SimulationError(f"run_until({t_end}) behind clock {self.now}")
        heap = self._heap
        pop = heapq.heappop
        trace = self._trace_write
        recent = self.recent
        count = 0
        while heap and heap[0][0] <= t_end:
            entry = pop(heap)
            fn = entry[_FN]
            if fn is None:
                continue
            entry[_FN] = None
            self._live -= 1
            self.now = entry[0]
            if trace is not None:
                trace(f"{entry[0]}\t{entry[1]}\t{entry[2]}\t{entry[3]}\n")
            recent.append((entry[0], entry[1], entry[2], entry[3]))
            fn(entry[5])
            count += 1
        if count == 0:
            self.now = t_end
        self.dispatched += count
        return count

    def diagnostic_tail(self) -> str:
        lines = [f"  {t} ns  seq={s}  {kind}  {target}" for t, s, kind, target in self.recent]
        return "last dispatched events:\n" + "\n".join(lines) if lines else "no events dispatched"
