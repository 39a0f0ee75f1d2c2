"""Figure rendering for run reports and sweeps.

matplotlib is imported lazily and pinned to the Agg backend so plotting
works headless and costs nothing when unused.
"""


def _plt():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def render_slowdown(slowdown: dict, path, title="") -> bool:
    """Bar chart of avg and p99 slowdown per size bin.

    Accepts either a single-run section (avg/p99 floats) or an aggregate
    section ({mean, std} dicts, plotted with error bars). Returns False
    when every bin is empty.
    """
    labels, avs, a_err, p99s, p_err = [], [], [], [], []
    for label, row in slowdown.items():
        av, p99 = row["avg"], row["p99"]
        if isinstance(av, dict):
            if av["mean"] is None:
                continue
            labels.append(label)
            avs.append(av["mean"])
            a_err.append(av["std"] or 0.0)
            p99s.append(p99["mean"])
            p_err.append(p99["std"] or 0.0)
        else:
            if av is None:
                continue
            labels.append(label)
            avs.append(av)
            a_err.append(0.0)
            p99s.append(p99)
            p_err.append(0.0)
    if not labels:
        return False
    plt = _plt()
    fig, ax = plt.subplots(figsize=(max(5, 1.4 * len(labels)), 3.6))
    x = range(len(labels))
    w = 0.38
    ax.bar([i - w / 2 for i in x], avs, w, yerr=a_err, capsize=3, label="avg")
    ax.bar([i + w / 2 for i in x], p99s, w, yerr=p_err, capsize=3, label="p99")
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels, rotation=20, ha="right")
    ax.set_ylabel("FCT slowdown")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return True


def render_utilization(utilization: dict, path, title="") -> bool:
    labels, avg, mx = [], [], []
    for cls, row in utilization.items():
        a, m = row["avg_util"], row["max_util"]
        if isinstance(a, dict):
            if a["mean"] is None:
                continue
            a, m = a["mean"], m["mean"]
        labels.append(cls)
        avg.append(a)
        mx.append(m)
    if not labels:
        return False
    plt = _plt()
    fig, ax = plt.subplots(figsize=(max(5, 1.2 * len(labels)), 3.6))
    x = range(len(labels))
    w = 0.38
    ax.bar([i - w / 2 for i in x], avg, w, label="avg")
    ax.bar([i + w / 2 for i in x], mx, w, label="max")
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels, rotation=20, ha="right")
    ax.set_ylabel("link utilization")
    ax.set_ylim(bottom=0)
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return True


def render_sweep(rows, path, title="") -> bool:
    """One panel per size bin: avg slowdown vs swept value, line per scheme.

    rows carry dict keys param, value, scheme, seed, bin, n, avg, p50, p99;
    seeds are averaged per (scheme, value, bin) point.
    """
    acc = {}
    for r in rows:
        if r["avg"] is None or r["n"] == 0:
            continue
        acc.setdefault(r["bin"], {}).setdefault(r["scheme"], {}) \
           .setdefault(float(r["value"]), []).append(float(r["avg"]))
    bins = [b for b, sch in acc.items() if sch]
    if not bins:
        return False
    plt = _plt()
    fig, axes = plt.subplots(1, len(bins),
                             figsize=(4.2 * len(bins), 3.6), squeeze=False)
    param = rows[0]["param"]
    for ax, b in zip(axes[0], bins):
        for scheme, pts in sorted(acc[b].items()):
            xs = sorted(pts)
            ys = [sum(pts[x]) / len(pts[x]) for x in xs]
            ax.plot(xs, ys, marker="o", label=scheme)
        ax.set_title(b)
        ax.set_xlabel(param)
        ax.set_ylabel("avg FCT slowdown")
        ax.legend()
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return True
