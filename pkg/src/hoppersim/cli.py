"""Command line harness.

Subcommands:
  run       execute a configured scenario over one or more seeds
  sweep     re-run a scenario across parameter values and schemes
  profile   show which source ports steer a host pair onto which paths
  baseline  print unloaded completion times for a set of flow sizes

Reports land as JSON plus a flows CSV per seed; --plots adds PNG figures
next to them.
"""

import argparse
import csv
import os
import sys
from pathlib import Path

import yaml

from .config import ConfigError, RunConfig, preset_raw
from .engine import SimulationError
from .metrics import aggregate_runs, write_flows_csv, write_report_json
from .run import SCHEMES, make_baseline_table, unloaded_fct
from .topology import GBPS, profile_source_ports

SWEEPABLE = ("load", "alpha", "th_probe", "th_cong", "ttl_probe", "delta_rtt")


def _load_raw(args) -> dict:
    if args.config:
        try:
            with open(args.config) as f:
                raw = yaml.safe_load(f.read())
        except OSError as e:
            raise ConfigError(f"cannot read {args.config}: {e}") from None
        except yaml.YAMLError as e:
            raise ConfigError(f"bad YAML in {args.config}: {e}") from None
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError(f"{args.config} must hold a YAML mapping")
        if "name" not in raw:
            raw["name"] = Path(args.config).stem
        return raw
    return preset_raw(args.preset)


def _apply_overrides(raw, args) -> dict:
    if getattr(args, "scheme", None):
        raw["scheme"] = args.scheme
    if getattr(args, "seed", None) is not None:
        raw["seed"] = args.seed
    if getattr(args, "load", None) is not None:
        raw.setdefault("workload", {})["load"] = args.load
    if getattr(args, "duration_us", None) is not None:
        raw.setdefault("workload", {})["duration_us"] = args.duration_us
    return raw


def _seeds(args, cfg) -> list:
    if getattr(args, "seeds", None):
        try:
            seeds = [int(s) for s in args.seeds.split(",") if s.strip() != ""]
        except ValueError:
            raise ConfigError(f"--seeds wants comma-separated integers, "
                              f"got {args.seeds!r}") from None
        if not seeds:
            raise ConfigError("--seeds list is empty")
        return seeds
    return [cfg.seed]


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get("HOPPERSIM_OUT") or "./out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _run_one(cfg, seed, baselines, trace_path=None):
    if trace_path is None:
        sim = cfg.make_simulation(seed=seed, baselines=baselines)
        cfg.execute(sim)
    else:
        with open(trace_path, "w") as tf:
            sim = cfg.make_simulation(seed=seed, trace_write=tf.write,
                                      baselines=baselines)
            cfg.execute(sim)
    return sim


def _summary_line(report) -> str:
    m, f = report["meta"], report["flows"]
    done = [v for v in report["slowdown"].values() if v["n"]]
    worst = max((v["p99"] for v in done), default=None)
    tail = "" if worst is None else f", worst-bin p99 slowdown {worst:.2f}"
    return (f"{m['scheme']} seed={m['seed']}: {f['completed']}/{f['started']} "
            f"flows in {m['elapsed_ns'] / 1e6:.2f} ms, "
            f"{m['events']} events{tail}")


def cmd_run(args) -> int:
    cfg = RunConfig.from_dict(_apply_overrides(_load_raw(args), args))
    seeds = _seeds(args, cfg)
    out = _out_dir(args)
    baselines = make_baseline_table(cfg.build_topology(), cfg.build_transport())

    reports = []
    for seed in seeds:
        stem = str(out / f"{cfg.name}-{cfg.scheme}-s{seed}")
        trace_path = f"{stem}.trace.tsv" if args.trace else None
        sim = _run_one(cfg, seed, baselines, trace_path)
        report = sim.build_report()
        reports.append(report)
        write_report_json(f"{stem}.report.json", report)
        write_flows_csv(f"{stem}.flows.csv", sim.records.values())
        print(_summary_line(report))
        print(f"  wrote {stem}.report.json, {stem}.flows.csv"
              + (f", {trace_path}" if trace_path else ""))
        if args.plots:
            from . import plots
            made = []
            if plots.render_slowdown(report["slowdown"],
                                     f"{stem}.slowdown.png",
                                     title=f"{cfg.name} {cfg.scheme} s{seed}"):
                made.append(f"{stem}.slowdown.png")
            if plots.render_utilization(report["utilization"],
                                        f"{stem}.util.png",
                                        title=f"{cfg.name} {cfg.scheme} s{seed}"):
                made.append(f"{stem}.util.png")
            for p in made:
                print(f"  wrote {p}")

    if len(reports) > 1:
        agg = aggregate_runs(reports)
        agg_path = out / f"{cfg.name}-{cfg.scheme}.aggregate.json"
        write_report_json(agg_path, agg)
        print(f"aggregate over seeds {agg['seeds']} -> {agg_path}")
        if args.plots:
            from . import plots
            if plots.render_slowdown(agg["slowdown"],
                                     out / f"{cfg.name}-{cfg.scheme}.aggregate.slowdown.png",
                                     title=f"{cfg.name} {cfg.scheme} mean over seeds"):
                print(f"  wrote {out / f'{cfg.name}-{cfg.scheme}.aggregate.slowdown.png'}")
    return 0


def cmd_sweep(args) -> int:
    base = _apply_overrides(_load_raw(args), args)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip() != ""]
    except ValueError:
        raise ConfigError(f"--values wants comma-separated numbers, "
                          f"got {args.values!r}") from None
    if not values:
        raise ConfigError("--values list is empty")
    schemes = (args.schemes.split(",") if args.schemes
               else [base.get("scheme", "hopper")])
    for s in schemes:
        if s not in SCHEMES:
            raise ConfigError(f"unknown scheme {s!r} in --schemes; "
                              f"have {', '.join(SCHEMES)}")

    cfg0 = RunConfig.from_dict(base)
    seeds = _seeds(args, cfg0)
    out = _out_dir(args)
    # the swept parameters never touch the fabric, so the unloaded
    # baselines can be computed once and shared by every cell
    baselines = make_baseline_table(cfg0.build_topology(), cfg0.build_transport())

    rows = []
    for value in values:
        raw = dict(base)
        if args.param == "load":
            raw.setdefault("workload", {})
            raw["workload"] = {**raw["workload"], "load": value}
        else:
            raw.setdefault("hopper", {})
            raw["hopper"] = {**raw["hopper"], args.param: value}
        for scheme in schemes:
            raw["scheme"] = scheme
            cfg = RunConfig.from_dict(raw)
            for seed in seeds:
                sim = _run_one(cfg, seed, baselines)
                report = sim.build_report()
                print(f"{args.param}={value:g} " + _summary_line(report))
                for label, st in report["slowdown"].items():
                    rows.append({
                        "param": args.param, "value": value,
                        "scheme": scheme, "seed": seed, "bin": label,
                        "n": st["n"], "avg": st["avg"],
                        "p50": st["p50"], "p99": st["p99"],
                    })

    name = base.get("name", "sweep")
    csv_path = out / f"{name}.sweep.csv"
    with open(csv_path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["param", "value", "scheme", "seed",
                                          "bin", "n", "avg", "p50", "p99"])
        w.writeheader()
        for r in rows:
            w.writerow(r)
    print(f"wrote {csv_path} ({len(rows)} rows)")
    if args.plots:
        from . import plots
        png = out / f"{name}.sweep.png"
        if plots.render_sweep(rows, png, title=f"{name}: {args.param} sweep"):
            print(f"  wrote {png}")
    return 0


def cmd_profile(args) -> int:
    cfg = RunConfig.from_dict(_load_raw(args))
    topo = cfg.build_topology()
    src = args.src or topo.hosts[0]
    dst = args.dst
    if dst is None:
        others = [h for h in topo.hosts
                  if h != src and topo.host_leaf[h] != topo.host_leaf[src]]
        dst = others[0] if others else [h for h in topo.hosts if h != src][0]
    k = args.paths or topo.n_paths(src, dst)
    prof = profile_source_ports(topo, src, dst, k)
    print(f"# {src} -> {dst}: {len(prof.ports)} distinct paths")
    print("port\tpath\tbottleneck_gbps")
    for port in prof.ports:
        pid = prof.port_path[port]
        bw = min(topo.links[key].bandwidth_bps for key in prof.paths[pid])
        print(f"{port}\t{pid}\t{bw / GBPS:g}")
    return 0


def cmd_baseline(args) -> int:
    cfg = RunConfig.from_dict(_load_raw(args))
    topo = cfg.build_topology()
    transport = cfg.build_transport()
    try:
        sizes = [int(s) for s in args.sizes.split(",") if s.strip() != ""]
    except ValueError:
        raise ConfigError(f"--sizes wants comma-separated integers, "
                          f"got {args.sizes!r}") from None
    classes = []
    leaves = set(topo.host_leaf.values())
    if any(sum(1 for h in topo.hosts if topo.host_leaf[h] == l) > 1
           for l in leaves):
        classes.append("intra")
    if len(leaves) > 1:
        classes.append("cross")
    print("size\tpair_class\tfct_ns")
    for size in sizes:
        for cls in classes:
            t = unloaded_fct(topo, transport, size, args.chunk, cls)
            print(f"{size}\t{cls}\t{t}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hoppersim",
        description="Packet-level simulator for RTT-probing path switching "
                    "in leaf-spine fabrics.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=True):
        g = sp.add_mutually_exclusive_group(required=True)
        g.add_argument("--preset", help="named built-in scenario")
        g.add_argument("--config", help="YAML config file")
        if scenario:
            sp.add_argument("--out", default=None,
                            help="output directory (default $HOPPERSIM_OUT or ./out)")

    r = sub.add_parser("run", help="run a scenario and write reports")
    common(r)
    r.add_argument("--scheme", choices=SCHEMES)
    r.add_argument("--seed", type=int)
    r.add_argument("--seeds", help="comma-separated seed list, one run each")
    r.add_argument("--load", type=float, help="offered load override (0, 1)")
    r.add_argument("--duration-us", dest="duration_us", type=float)
    r.add_argument("--trace", action="store_true",
                   help="write the event trace alongside the report")
    r.add_argument("--plots", action="store_true",
                   help="render PNG figures next to the reports")
    r.set_defaults(fn=cmd_run)

    s = sub.add_parser("sweep", help="repeat a scenario across parameter values")
    common(s)
    s.add_argument("--param", choices=SWEEPABLE, required=True)
    s.add_argument("--values", required=True,
                   help="comma-separated values for the swept parameter")
    s.add_argument("--schemes", help="comma-separated schemes "
                                     "(default: the configured one)")
    s.add_argument("--seeds", help="comma-separated seed list")
    s.add_argument("--seed", type=int)
    s.add_argument("--duration-us", dest="duration_us", type=float)
    s.add_argument("--plots", action="store_true")
    s.set_defaults(fn=cmd_sweep)

    pr = sub.add_parser("profile",
                        help="map source ports to fabric paths for a host pair")
    common(pr, scenario=False)
    pr.add_argument("--src", help="source host (default: first host)")
    pr.add_argument("--dst", help="destination host (default: first cross-leaf host)")
    pr.add_argument("--paths", type=int,
                    help="how many distinct paths to find (default: all)")
    pr.set_defaults(fn=cmd_profile)

    b = sub.add_parser("baseline",
                       help="print unloaded completion times per flow size")
    common(b, scenario=False)
    b.add_argument("--sizes", default="1000,10000,100000,1000000,10000000",
                   help="comma-separated flow sizes in bytes")
    b.add_argument("--chunk", type=int, default=0,
                   help="chunk size for chunked transfers (0 = single QP)")
    b.set_defaults(fn=cmd_baseline)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except SimulationError as e:
        print(f"simulation error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
