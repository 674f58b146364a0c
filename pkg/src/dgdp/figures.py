"""Figure rendering for the report paths (PNG alongside the CSV output)."""

from __future__ import annotations


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_level_report(rows, path):
    """Grouped bar chart: baseline vs tight epsilon per geographical level."""
    plt = _plt()
    names = [r.level for r in rows]
    eps_z = [float(r.eps_zcdp) for r in rows]
    eps_f = [float(r.eps_fdp) for r in rows]
    x = range(len(names))
    fig, ax = plt.subplots(figsize=(1.6 * len(names) + 2, 4.5))
    width = 0.38
    ax.bar([i - width / 2 for i in x], eps_z, width, label="zCDP conversion",
           color="#c44e52")
    ax.bar([i + width / 2 for i in x], eps_f, width, label="f-DP accountant",
           color="#4c72b0")
    ax.set_xticks(list(x))
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylabel("epsilon")
    ax.set_title("Per-level privacy guarantee")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_curve(rows, path, title="Privacy profile"):
    """delta(eps) on a log scale: tight accountant vs zCDP conversion."""
    plt = _plt()
    eps = [float(r[0]) for r in rows]
    d_f = [max(float(r[1]), 1e-300) for r in rows]
    d_z = [max(float(r[2]), 1e-300) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.semilogy(eps, d_z, color="#c44e52", label="zCDP conversion")
    ax.semilogy(eps, d_f, color="#4c72b0", label="f-DP accountant")
    ax.set_xlabel("epsilon")
    ax.set_ylabel("delta")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
