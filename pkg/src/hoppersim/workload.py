"""Traffic generation: CDF-sampled Poisson flows and barrier-synchronized collectives."""

import bisect
import csv
from dataclasses import dataclass
from importlib import resources

from .engine import NS_PER_S


class WorkloadError(ValueError):
    pass


PRESET_CDFS = ("alicloud", "hadoop", "ml-train")


@dataclass(frozen=True)
class FlowSpec:
    start_ns: int
    src: str
    dst: str
    size: int
    chunk: int = 0
    port: int = None          # fixed initial steering port, if any
    pinned: bool = False      # pinned flows never migrate (static path)


class SizeCdf:
    """Discrete flow-size distribution given as (size_bytes, cum_prob) steps."""

    def __init__(self, points, name="custom"):
        if not points:
            raise WorkloadError("empty CDF")
        sizes = [p[0] for p in points]
        cums = [p[1] for p in points]
        for s, c in points:
            if s <= 0:
                raise WorkloadError(f"CDF size must be positive, got {s}")
        if sizes != sorted(set(sizes)):
            raise WorkloadError("CDF sizes must be strictly increasing")
        prev = 0.0
        for c in cums:
            if c <= prev:
                raise WorkloadError("CDF probabilities must be strictly increasing")
            prev = c
        if abs(cums[-1] - 1.0) > 1e-9:
            raise WorkloadError(f"CDF must end at 1.0, got {cums[-1]}")
        self.name = name
        self.sizes = sizes
        self.cums = cums
        self.cums[-1] = 1.0

    def sample(self, rng) -> int:
        """Inverse-CDF draw with step interpolation at the listed points."""
        u = rng.random()
        return self.sizes[bisect.bisect_left(self.cums, u)]

    def mean(self) -> float:
        m = 0.0
        prev = 0.0
        for s, c in zip(self.sizes, self.cums):
            m += s * (c - prev)
            prev = c
        return m

    @classmethod
    def from_csv(cls, path, name=None):
        points = []
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header is None or [h.strip() for h in header[:2]] != ["size_bytes", "cum_prob"]:
                raise WorkloadError(f"{path}: expected header 'size_bytes,cum_prob'")
            for row in reader:
                if not row or row[0].strip().startswith("#"):
                    continue
                points.append((int(row[0]), float(row[1])))
        return cls(points, name=name or str(path))

    @classmethod
    def preset(cls, name):
        if name not in PRESET_CDFS:
            raise WorkloadError(f"unknown CDF preset {name!r}; have {', '.join(PRESET_CDFS)}")
        ref = resources.files("hoppersim").joinpath("data", f"{name}.csv")
        with resources.as_file(ref) as path:
            return cls.from_csv(path, name=name)

    @classmethod
    def load(cls, name_or_path):
        if name_or_path in PRESET_CDFS:
            return cls.preset(name_or_path)
        return cls.from_csv(name_or_path)


def poisson_rate_fps(load: float, n_hosts: int, host_bw_bps: int, mean_bytes: float) -> float:
    """Flow arrival rate achieving `load` of aggregate host-link capacity."""
    return load * n_hosts * host_bw_bps / (8.0 * mean_bytes)


def generate_poisson(topo, cdf: SizeCdf, load: float, duration_ns: int, rng,
                     cross_leaf_only=False, chunk=0):
    """Poisson arrivals, uniform distinct host pairs, iid CDF sizes."""
    if not 0.0 < load < 1.0:
        raise WorkloadError(f"target load must sit in (0, 1), got {load}")
    hosts = topo.hosts
    n = len(hosts)
    host_bw = topo.links[(hosts[0], topo.host_leaf[hosts[0]])].bandwidth_bps
    rate = poisson_rate_fps(load, n, host_bw, cdf.mean())
    hl = topo.host_leaf
    flows = []
    t = 0.0
    while True:
        t += rng.expovariate(rate) * NS_PER_S
        t_ns = int(t)
        if t_ns >= duration_ns:
            break
        si = rng.randrange(n)
        di = (si + 1 + rng.randrange(n - 1)) % n
        if cross_leaf_only:
            while hl[hosts[di]] == hl[hosts[si]]:
                di = (si + 1 + rng.randrange(n - 1)) % n
        size = cdf.sample(rng)
        flows.append(FlowSpec(t_ns, hosts[si], hosts[di], size, chunk))
    return flows


def generate_collective_rounds(topo, rounds: int, flows_per_round: int,
                               flow_size: int, chunk: int):
    """Fixed sender->receiver pairing across the leaf boundary, one flow set
    per round; round k+1 is released only when round k fully completes, so
    start times are assigned by the driver at run time."""
    hosts = topo.hosts
    half = len(hosts) // 2
    if flows_per_round < 1 or flows_per_round > half:
        raise WorkloadError(
            f"flows_per_round must sit in 1..{half} for {len(hosts)} hosts")
    if rounds < 1:
        raise WorkloadError("rounds must be positive")
    out = []
    for _ in range(rounds):
        rnd = [FlowSpec(0, hosts[i], hosts[i + half], flow_size, chunk)
               for i in range(flows_per_round)]
        out.append(rnd)
    return out
