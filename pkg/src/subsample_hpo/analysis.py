"""Analyses over trial logs: runtime linearity, rank agreement across fidelities,
relative performance with and without retraining, and cumulative-wallclock economy.

Every analysis is a pure function of the records it is given.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .dataio import STRESS_FRACTIONS
from .executor import COMPLETED, TrialRecord, TrialSeeds
from .metrics import EvaluationScore
from .search_space import HyperparamSpace, config_key

# Large-scale headline values for side-by-side display; not reproduced at desk scale.
REFERENCE_HEADLINES = {
    "mean_relative_drop_r0.01_without_retraining": 0.033,
    "mean_relative_drop_r0.01_with_retraining": 0.014,
    "mean_relative_drop_higher_fidelity_upper_bound": 0.005,
    "note": "reference values from 15-70 GB datasets; not reproduced at desk scale",
}


class InsufficientData(ValueError):
    pass


def _tuning(records) -> list[TrialRecord]:
    return [r for r in records if r.completed and not r.is_retrain]


def _num(x):
    return None if x is None or (isinstance(x, float) and not math.isfinite(x)) else x


@dataclass
class LinearFit:
    slope: float
    intercept: float
    r_squared_of_fit: float
    n_points: int
    fractions: list = field(default_factory=list)
    seconds: list = field(default_factory=list)

    kind = "runtime"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "slope": self.slope, "intercept": self.intercept,
                "r_squared_of_fit": self.r_squared_of_fit, "n_points": self.n_points}

    def table(self):
        return ["fraction", "train_seconds"], [[f, s] for f, s in zip(self.fractions, self.seconds)]


def fit_runtime_line(records) -> LinearFit:
    """Least-squares line of train-only wallclock against the data fraction."""
    recs = [r for r in records if r.completed]
    r = np.array([rec.fraction for rec in recs], dtype=np.float64)
    t = np.array([rec.train_wallclock_seconds for rec in recs], dtype=np.float64)
    if len(recs) < 3 or len(np.unique(r)) < 2:
        raise InsufficientData("runtime fit needs >= 3 completed trials over >= 2 fractions")
    rm, tm = r.mean(), t.mean()
    sxx = float(np.sum((r - rm) ** 2))
    slope = float(np.sum((r - rm) * (t - tm)) / sxx)
    intercept = float(tm - slope * rm)
    ss_res = float(np.sum((t - (intercept + slope * r)) ** 2))
    ss_tot = float(np.sum((t - tm) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return LinearFit(slope, intercept, max(0.0, min(1.0, r2)), len(recs), r.tolist(), t.tolist())


def spearman(a, b) -> float:
    """Spearman rank correlation with midranks for ties (nan if either side is constant)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.size < 2:
        raise ValueError("spearman needs two equal-length sequences of length >= 2")
    ra = rankdata(a) - (a.size + 1) / 2
    rb = rankdata(b) - (b.size + 1) / 2
    den = math.sqrt(float(ra @ ra) * float(rb @ rb))
    if den == 0:
        return math.nan
    return float(np.clip(ra @ rb / den, -1.0, 1.0))


def score_table(records) -> dict[float, dict[str, TrialRecord]]:
    """fraction -> config key -> first completed tuning record."""
    table: dict[float, dict[str, TrialRecord]] = defaultdict(dict)
    for rec in sorted(_tuning(records), key=lambda r: r.trial_id):
        table[rec.fraction].setdefault(config_key(rec.config), rec)
    return dict(table)


@dataclass
class RankingReport:
    fractions: list
    correlation: list  # len(fractions)^2 matrix, None where undefined
    common_counts: list
    config_counts: dict
    trajectories: list  # [{"best_at": r, "config": {...}, "scores": {r: score}}]

    kind = "ranking"

    def rho(self, r1: float, r2: float):
        return self.correlation[self.fractions.index(r1)][self.fractions.index(r2)]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "fractions": self.fractions,
            "spearman": [[_num(v) for v in row] for row in self.correlation],
            "common_config_counts": self.common_counts,
            "config_counts": {repr(k): v for k, v in self.config_counts.items()},
            "trajectories": [{"best_at": t["best_at"], "config": t["config"],
                              "scores": {repr(k): v for k, v in t["scores"].items()}}
                             for t in self.trajectories],
        }

    def table(self):
        rows = []
        for i, a in enumerate(self.fractions):
            for j, b in enumerate(self.fractions):
                if i < j:
                    rows.append([a, b, self.common_counts[i][j], _num(self.correlation[i][j])])
        return ["fraction_a", "fraction_b", "n_common", "spearman"], rows


def ranking_analysis(records) -> RankingReport:
    table = score_table(records)
    fr = sorted(table)
    if len(fr) < 2:
        raise InsufficientData("ranking analysis needs trials at >= 2 fidelities")
    n = len(fr)
    corr = [[None] * n for _ in range(n)]
    counts = [[0] * n for _ in range(n)]
    any_pair = False
    for i in range(n):
        corr[i][i] = 1.0
        counts[i][i] = len(table[fr[i]])
        for j in range(i + 1, n):
            common = sorted(set(table[fr[i]]) & set(table[fr[j]]))
            counts[i][j] = counts[j][i] = len(common)
            if len(common) >= 2:
                any_pair = True
                rho = spearman([table[fr[i]][k].value for k in common], [table[fr[j]][k].value for k in common])
                corr[i][j] = corr[j][i] = None if math.isnan(rho) else rho
    if not any_pair:
        raise InsufficientData("no two fidelities share at least two configurations")
    traj = []
    for r in fr:
        best = max(table[r].values(), key=lambda rec: (rec.value, -rec.trial_id))
        key = config_key(best.config)
        traj.append({"best_at": r, "config": dict(best.config),
                     "scores": {q: table[q][key].value for q in fr if key in table[q]}})
    return RankingReport(fr, corr, counts, {r: len(table[r]) for r in fr}, traj)


@dataclass
class RelativePerformanceReport:
    reference_score: float
    rows: list  # dicts per fraction
    reference_headlines: dict = field(default_factory=lambda: dict(REFERENCE_HEADLINES))

    kind = "relative_performance"

    def row(self, r: float) -> dict:
        for row in self.rows:
            if math.isclose(row["fraction"], r, rel_tol=1e-12):
                return row
        raise KeyError(r)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "reference_score": self.reference_score,
                "rows": [{k: _num(v) for k, v in row.items()} for row in self.rows],
                "relative_delta_convention": "delta / |reference score|; arithmetic mean across datasets",
                "reference_headlines": self.reference_headlines}

    def table(self):
        cols = ["fraction", "best_score", "retrained_score", "delta_without", "delta_with",
                "relative_without", "relative_with"]
        return cols, [[_num(row[c]) for c in cols] for row in self.rows]


def relative_performance(records, retrained=None) -> RelativePerformanceReport:
    """Best score per fraction against the best full-data score, with and without retraining.

    Retraining records may be mixed into ``records`` or passed separately; a
    retrained score is used when its source fraction and configuration match
    the best configuration at that fraction.
    """
    records = list(records) + list(retrained or [])
    table = score_table(records)
    if 1.0 not in table:
        raise InsufficientData("no completed r = 1 trials to use as the reference")
    best = {r: max(t.values(), key=lambda rec: (rec.value, -rec.trial_id)) for r, t in table.items()}
    ref = best[1.0].value
    retrains = {}
    for rec in sorted((r for r in records if r.completed and r.is_retrain), key=lambda r: r.trial_id):
        retrains[(float(rec.annotations["source_fraction"]), config_key(rec.config))] = rec
    scale = abs(ref) if ref != 0 else 1.0
    rows = []
    for r in sorted(best):
        b = best[r]
        rt = retrains.get((r, config_key(b.config)))
        if rt is None and r == 1.0:
            rt = b  # the reference retrains to itself
        with_score = rt.value if rt is not None else None
        d_without = b.value - ref
        d_with = with_score - ref if with_score is not None else None
        rows.append({
            "fraction": r,
            "stress": any(math.isclose(r, s, rel_tol=1e-12) for s in STRESS_FRACTIONS),
            "best_score": b.value,
            "best_trial_id": b.trial_id,
            "retrained_score": with_score,
            "delta_without": d_without,
            "delta_with": d_with,
            "relative_without": d_without / scale,
            "relative_with": d_with / scale if d_with is not None else None,
        })
    return RelativePerformanceReport(ref, rows)


@dataclass
class WallclockCurve:
    name: str
    seconds: list
    incumbent: list
    trial_ids: list
    total_seconds: float
    seconds_by_fraction: dict
    trials_by_fraction: dict

    def time_to_reach(self, target: float):
        """Cumulative wallclock at which the incumbent first reaches ``target`` (None if never)."""
        for t, v in zip(self.seconds, self.incumbent):
            if v >= target:
                return t
        return None

    def time_share(self, max_fraction: float) -> float:
        low = sum(s for r, s in self.seconds_by_fraction.items() if r <= max_fraction * (1 + 1e-12))
        return low / self.total_seconds if self.total_seconds > 0 else 0.0

    @property
    def final_score(self) -> float:
        return self.incumbent[-1] if self.incumbent else -math.inf

    def to_dict(self) -> dict:
        return {"name": self.name, "cumulative_seconds": self.seconds, "incumbent": self.incumbent,
                "trial_ids": self.trial_ids, "total_seconds": self.total_seconds,
                "seconds_by_fraction": {repr(k): v for k, v in sorted(self.seconds_by_fraction.items())},
                "trials_by_fraction": {repr(k): v for k, v in sorted(self.trials_by_fraction.items())}}


@dataclass
class WallclockReport:
    curves: dict

    kind = "wallclock"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "curves": [self.curves[k].to_dict() for k in sorted(self.curves)]}

    def table(self):
        rows = []
        for name in sorted(self.curves):
            c = self.curves[name]
            rows.extend([name, tid, t, v] for tid, t, v in zip(c.trial_ids, c.seconds, c.incumbent))
        return ["optimizer", "trial_id", "cumulative_seconds", "incumbent"], rows


def wallclock_curve(name: str, records) -> WallclockCurve:
    recs = sorted((r for r in records if not r.is_retrain), key=lambda r: r.trial_id)
    if not recs:
        raise InsufficientData(f"{name}: empty trial log")
    cum = 0.0
    best = -math.inf
    secs, inc, ids = [], [], []
    by_r: dict[float, float] = defaultdict(float)
    n_r: dict[float, int] = defaultdict(int)
    for rec in recs:
        cum += rec.total_wallclock_seconds
        by_r[rec.fraction] += rec.total_wallclock_seconds
        n_r[rec.fraction] += 1
        if rec.completed:
            best = max(best, rec.value)
            secs.append(cum)
            inc.append(best)
            ids.append(rec.trial_id)
    return WallclockCurve(name, secs, inc, ids, cum, dict(by_r), dict(n_r))


def cumulative_wallclock(logs: dict) -> WallclockReport:
    """Incumbent-versus-cumulative-wallclock step curve per optimizer log."""
    return WallclockReport({name: wallclock_curve(name, recs) for name, recs in logs.items()})


class QuadraticBenchmark:
    """Cheap unimodal objective standing in for an :class:`~subsample_hpo.executor.Executor`.

    ``score(x, r) = 1 - mean((u(x) - u*)**2) + e``, where ``u`` maps a
    configuration onto the unit cube and ``e ~ N(0, (noise * (1 - r))**2)`` is
    drawn from the trial seed, so lower fidelities are noisier. Each trial is
    charged ``r`` simulated seconds, which keeps wallclock linear in ``r``.
    """

    def __init__(self, space: HyperparamSpace, seed: int = 0, noise: float = 0.05, parallelism: int = 1):
        self.space = space
        self.optimum = np.random.default_rng(seed).uniform(0.2, 0.8, size=len(space))
        self.noise = float(noise)
        self.parallelism = parallelism
        self.records: list[TrialRecord] = []

    def objective(self, config: dict) -> float:
        u = self.space.to_unit(config)
        return float(1.0 - np.mean((u - self.optimum) ** 2))

    def run_batch(self, requests) -> list[TrialRecord]:
        out = []
        for req in requests:
            r = float(req.fraction)
            e = np.random.default_rng(req.trial_seed).normal(0.0, self.noise * (1.0 - r)) if self.noise else 0.0
            rec = TrialRecord(len(self.records), dict(req.config), r, TrialSeeds(0, 0, int(req.trial_seed)),
                              COMPLETED, EvaluationScore(self.objective(req.config) + e, "quadratic", 0),
                              r, r, annotations=dict(req.annotations))
            self.records.append(rec)
            out.append(rec)
        return out


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n").encode()


def _csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue().encode()


def emit_report(reports: dict, out_dir) -> list[Path]:
    """Write ``<name>/report.json``, ``<name>/table.csv`` and ``<name>/plot.svg`` per report,
    plus a ``manifest.json`` listing every artifact with its SHA-256."""
    from . import plotting

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name in sorted(reports):
        rep = reports[name]
        d = out / name
        d.mkdir(parents=True, exist_ok=True)
        (d / "report.json").write_bytes(_json_bytes(rep.to_dict()))
        (d / "table.csv").write_bytes(_csv_bytes(*rep.table()))
        written += [d / "report.json", d / "table.csv"]
        svg = plotting.plot_report(rep, d / "plot.svg")
        if svg is not None:
            written.append(svg)
    manifest = {"artifacts": [{"path": p.relative_to(out).as_posix(),
                               "sha256": hashlib.sha256(p.read_bytes()).hexdigest()} for p in written]}
    (out / "manifest.json").write_bytes(_json_bytes(manifest))
    return written + [out / "manifest.json"]
