"""Static SVG figures for analysis reports.

Text is written as SVG ``<text>``; scatter markers are ``<use>`` elements
inside a ``<g id="data-points">`` group, so figures can be checked structurally. Output is byte-stable for
identical inputs.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "svg.fonttype": "none",
    "svg.hashsalt": "subsample-hpo",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.frameon": False,
    "figure.figsize": (5.0, 3.4),
}

# Ranking plots hide this lower quantile of scores; statistics never do.
CROP_QUANTILE = 0.25


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return path


def plot_runtime(fit, path):
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        ax.plot(fit.fractions, fit.seconds, linestyle="none", marker="*", color="C0", gid="data-points")
        xs = np.array([0.0, max(fit.fractions)])
        ax.plot(xs, fit.intercept + fit.slope * xs, color="C3", lw=1,
                label=f"fit: {fit.slope:.3g} r + {fit.intercept:.3g}  (R$^2$={fit.r_squared_of_fit:.3f})")
        ax.set_title(f"{fit.n_points} trials", fontsize=9)
        ax.set_xlabel("data fraction r")
        ax.set_ylabel("train time [s]")
        ax.legend(loc="upper left")
        return _save(fig, path)


def plot_ranking(rep, path):
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        vals = [v for t in rep.trajectories for v in t["scores"].values()]
        for i, t in enumerate(rep.trajectories):
            xs = sorted(t["scores"])
            ax.plot(xs, [t["scores"][x] for x in xs], color=f"C{i % 10}", lw=1,
                    label=f"best at r={t['best_at']:g}")
        ax.set_xscale("log")
        if len(vals) > 3:
            lo, hi = np.quantile(vals, CROP_QUANTILE), max(vals)
            if hi > lo:
                ax.set_ylim(lo, hi + 0.05 * (hi - lo))
        ax.set_xlabel("data fraction r")
        ax.set_ylabel("validation score")
        ax.legend(fontsize=7, loc="lower right")
        return _save(fig, path)


def plot_relative(rep, path):
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        rows = rep.rows
        x = np.arange(len(rows))
        w = 0.4
        without = [100 * r["relative_without"] for r in rows]
        with_ = [100 * r["relative_with"] if r["relative_with"] is not None else 0.0 for r in rows]
        ax.bar(x - w / 2, without, w, label="without retraining", color="C0")
        ax.bar(x + w / 2, with_, w, label="with retraining", color="C1")
        ax.set_xticks(x, [f"{r['fraction']:g}" for r in rows])
        ax.axhline(0, color="k", lw=0.5)
        ax.set_xlabel("data fraction r")
        ax.set_ylabel("relative change vs r=1 [%]")
        ax.legend()
        return _save(fig, path)


def plot_wallclock(rep, path):
    with plt.rc_context(RC):
        fig, (ax, bx) = plt.subplots(1, 2, figsize=(8.0, 3.4))
        names = sorted(rep.curves)
        for i, name in enumerate(names):
            c = rep.curves[name]
            if c.seconds:
                ax.step(c.seconds, c.incumbent, where="post", color=f"C{i}", label=name)
        ax.set_xscale("log")
        ax.set_xlabel("cumulative wallclock [s]")
        ax.set_ylabel("incumbent score")
        ax.legend()
        fractions = sorted({r for n in names for r in rep.curves[n].seconds_by_fraction})
        bottom = np.zeros(len(names))
        for j, r in enumerate(fractions):
            h = np.array([rep.curves[n].seconds_by_fraction.get(r, 0.0) for n in names])
            bx.bar(names, h, bottom=bottom, label=f"r={r:g}", color=plt.cm.viridis(j / max(1, len(fractions) - 1)))
            bottom += h
        bx.set_ylabel("time spent [s]")
        bx.legend(fontsize=7)
        return _save(fig, path)


def plot_report(rep, path):
    fn = {"runtime": plot_runtime, "ranking": plot_ranking,
          "relative_performance": plot_relative, "wallclock": plot_wallclock}.get(rep.kind)
    return fn(rep, path) if fn else None
