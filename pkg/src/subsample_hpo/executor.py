"""Trial execution and the append-only trial log.

A trial trains one configuration on a fractional view of the training split
and scores it on the full validation split. Every started trial produces
exactly one :class:`TrialRecord`, persisted one JSON object per line.
"""
from __future__ import annotations

import json
import logging
import math
import os
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import learner, metrics
from .dataio import STRESS_FRACTIONS, Dataset, DataView, FidelityLadder, Split, SplitSpec, split, subsample, write_table
from .external import external_trainer_roundtrip
from .search_space import config_key, default_xgboost_space, validate_config

log = logging.getLogger(__name__)

COMPLETED = "completed"
FAILED = "failed"


class ReplayMismatch(RuntimeError):
    """The trial log on disk was produced by a different run."""


@dataclass(frozen=True)
class TrialSeeds:
    split: int
    subsample: int
    trial: int

    def to_dict(self) -> dict:
        return {"split": self.split, "subsample": self.subsample, "trial": self.trial}


@dataclass
class TrialRecord:
    trial_id: int
    config: dict
    fraction: float
    seeds: TrialSeeds
    status: str
    score: metrics.EvaluationScore | None = None
    train_wallclock_seconds: float = 0.0
    total_wallclock_seconds: float = 0.0
    reason: str | None = None
    annotations: dict = field(default_factory=dict)
    timestamp: str = ""

    @property
    def completed(self) -> bool:
        return self.status == COMPLETED

    @property
    def value(self) -> float:
        """Score used for ranking; failures rank as -inf."""
        return self.score.value if self.completed else -math.inf

    @property
    def is_retrain(self) -> bool:
        return bool(self.annotations.get("retrain"))

    def same_request(self, other: "TrialRecord") -> bool:
        return (config_key(self.config) == config_key(other.config)
                and math.isclose(self.fraction, other.fraction, rel_tol=1e-12)
                and self.seeds == other.seeds)

    def to_dict(self) -> dict:
        return {
            "trial_id": self.trial_id,
            "config": {k: float(v) for k, v in self.config.items()},
            "fraction": self.fraction,
            "seeds": self.seeds.to_dict(),
            "status": self.status,
            "reason": self.reason,
            "score": self.score.to_dict() if self.score else None,
            "train_wallclock_seconds": self.train_wallclock_seconds,
            "total_wallclock_seconds": self.total_wallclock_seconds,
            "annotations": self.annotations,
            "timestamp": self.timestamp,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "TrialRecord":
        return cls(
            trial_id=int(d["trial_id"]),
            config=dict(d["config"]),
            fraction=float(d["fraction"]),
            seeds=TrialSeeds(**d["seeds"]),
            status=d["status"],
            score=metrics.EvaluationScore.from_dict(d["score"]) if d.get("score") else None,
            train_wallclock_seconds=float(d["train_wallclock_seconds"]),
            total_wallclock_seconds=float(d["total_wallclock_seconds"]),
            reason=d.get("reason"),
            annotations=dict(d.get("annotations") or {}),
            timestamp=d.get("timestamp", ""),
        )


def load_trial_log(path) -> list[TrialRecord]:
    """Read a trial log, sorted by trial id.

    A truncated final line (a writer killed mid-append) is skipped.
    """
    records = []
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    for n, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            records.append(TrialRecord.from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            if n == len(lines) - 1 or all(not ln.strip() for ln in lines[n + 1:]):
                log.warning("%s: ignoring truncated last line", path)
                continue
            raise ValueError(f"{path}: corrupt record on line {n + 1}: {exc}") from None
    return sorted(records, key=lambda r: r.trial_id)


class TrialStore:
    """Append-only record sink; ``path=None`` keeps records in memory only."""

    def __init__(self, path=None):
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self.records: list[TrialRecord] = []
        if self.path is not None and self.path.exists():
            self.records = load_trial_log(self.path)
            self._repair_tail()

    def _repair_tail(self) -> None:
        # drop a partial trailing line so the next append starts on a fresh line
        data = self.path.read_bytes()
        if data and not data.endswith(b"\n"):
            cut = data.rfind(b"\n") + 1
            self.path.write_bytes(data[:cut])

    def append(self, record: TrialRecord) -> None:
        with self._lock:
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(record.to_json() + "\n")
                    fh.flush()
                    os.fsync(fh.fileno())
            self.records.append(record)

    def by_id(self) -> dict[int, TrialRecord]:
        return {r.trial_id: r for r in self.records}


@dataclass(frozen=True)
class TrainerBinding:
    kind: str = "builtin"  # or "external"
    task: str = "regression"
    metric: str = metrics.R2
    command: tuple = ()
    timeout_seconds: float | None = None

    def __post_init__(self):
        if self.kind not in ("builtin", "external"):
            raise ValueError(f"unknown trainer kind {self.kind!r}")
        if metrics.TASK_METRIC[self.task] != self.metric:
            raise ValueError(f"metric {self.metric!r} is incompatible with task {self.task!r}")
        if self.kind == "external" and not self.command:
            raise ValueError("external trainer needs a command")


class DataContext:
    """A dataset with its fixed split and the run's subsample seed."""

    def __init__(self, dataset: Dataset, split_spec: SplitSpec, subsample_seed: int):
        self.dataset = dataset
        self.split_spec = split_spec
        self.split: Split = split(dataset, split_spec)
        self.subsample_seed = int(subsample_seed)
        self._views: dict[float, DataView] = {}
        self._lock = threading.Lock()
        self._tmpdir = None
        self._valid_path = None

    def view(self, r: float) -> DataView:
        with self._lock:
            if r not in self._views:
                self._views[r] = subsample(self.split.train, r, self.subsample_seed)
            return self._views[r]

    @property
    def valid(self) -> tuple[np.ndarray, np.ndarray]:
        idx = self.split.valid
        return self.dataset.X[idx], self.dataset.y[idx]

    def _scratch(self) -> Path:
        if self._tmpdir is None:
            self._tmpdir = tempfile.TemporaryDirectory(prefix="subsample-hpo-")
        return Path(self._tmpdir.name)

    def valid_csv(self) -> str:
        with self._lock:
            if self._valid_path is None:
                X, y = self.valid
                p = self._scratch() / "valid.csv"
                write_table(p, X, y, self.dataset.feature_names)
                self._valid_path = str(p)
            return self._valid_path

    def view_csv(self, r: float) -> str:
        X, y = self.view(r).materialize(self.dataset)
        p = self._scratch() / f"view-{r!r}-{threading.get_ident()}.csv"
        write_table(p, X, y, self.dataset.feature_names)
        return str(p)


@dataclass
class TrialRequest:
    config: dict
    fraction: float
    trial_seed: int
    annotations: dict = field(default_factory=dict)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


class Executor:
    """Runs trials through a trainer binding and persists every outcome.

    Trial ids are assigned in request order by the calling (scheduler)
    thread. If the store already holds a record with the same id and the same
    (config, fraction, seeds), that record is replayed instead of retraining;
    this is how interrupted runs resume.
    """

    def __init__(self, binding: TrainerBinding, context: DataContext, store: TrialStore | None = None,
                 ladder: FidelityLadder | None = None, parallelism: int = 1, analysis_mode: bool = False):
        self.binding = binding
        self.context = context
        self.store = store if store is not None else TrialStore()
        self.ladder = ladder or FidelityLadder.default()
        self.parallelism = max(1, int(parallelism))
        self.analysis_mode = analysis_mode
        self._space = default_xgboost_space()
        self._replay = self.store.by_id()
        self.next_id = 0
        self.replayed = 0

    def seeds(self, trial_seed: int) -> TrialSeeds:
        return TrialSeeds(self.context.split_spec.seed, self.context.subsample_seed, int(trial_seed))

    def _check_request(self, req: TrialRequest) -> None:
        bad = validate_config(self._space, req.config) if self.binding.kind == "builtin" else []
        if bad:
            raise ValueError(f"invalid configuration: {', '.join(bad)}")
        r = req.fraction
        stress = any(math.isclose(r, s, rel_tol=1e-12) for s in STRESS_FRACTIONS)
        if r not in self.ladder and not (self.analysis_mode and stress):
            raise ValueError(f"fraction {r} is not on the fidelity ladder")

    def _train_and_score(self, req: TrialRequest) -> tuple[metrics.EvaluationScore, float]:
        ctx = self.context
        if self.binding.kind == "builtin":
            view = ctx.view(req.fraction)
            view.materialize(ctx.dataset)
            model, train_s = learner.train(req.config, view, ctx.dataset, req.trial_seed)
            Xv, yv = ctx.valid
            return learner.evaluate(model, Xv, yv, self.binding.metric), train_s
        request = {
            "config": {k: float(v) for k, v in req.config.items()},
            "rows_path": ctx.view_csv(req.fraction),
            "valid_path": ctx.valid_csv(),
            "task": self.binding.task,
            "metric": self.binding.metric,
        }
        resp = external_trainer_roundtrip(self.binding.command, request, self.binding.timeout_seconds)
        n_valid = len(ctx.split.valid)
        return metrics.EvaluationScore(resp["score"], self.binding.metric, n_valid), resp["train_seconds"]

    def _run_one(self, trial_id: int, req: TrialRequest) -> TrialRecord:
        t0 = time.perf_counter()
        rec = TrialRecord(trial_id=trial_id, config=dict(req.config), fraction=float(req.fraction),
                          seeds=self.seeds(req.trial_seed), status=FAILED, annotations=dict(req.annotations))
        try:
            score, train_s = self._train_and_score(req)
            if not math.isfinite(score.value):
                raise metrics.MetricError("non-finite score")
            rec.score = score
            rec.status = COMPLETED
            rec.train_wallclock_seconds = max(float(train_s), 1e-9)
        except Exception as exc:  # any trainer fault becomes a failed record
            rec.reason = f"{type(exc).__name__}: {exc}"
            log.warning("trial %d failed: %s", trial_id, rec.reason)
        rec.total_wallclock_seconds = max(time.perf_counter() - t0, rec.train_wallclock_seconds, 1e-9)
        rec.timestamp = _now()
        self.store.append(rec)
        return rec

    def run_batch(self, requests: list[TrialRequest]) -> list[TrialRecord]:
        """Execute requests (concurrently up to ``parallelism``); results in request order."""
        for req in requests:
            self._check_request(req)
        ids = list(range(self.next_id, self.next_id + len(requests)))
        self.next_id += len(requests)
        out: list[TrialRecord | None] = [None] * len(requests)
        todo = []
        for k, (tid, req) in enumerate(zip(ids, requests)):
            old = self._replay.get(tid)
            if old is not None:
                probe = TrialRecord(tid, req.config, float(req.fraction), self.seeds(req.trial_seed), FAILED)
                if not old.same_request(probe):
                    raise ReplayMismatch(f"trial {tid} in the log does not match this run")
                out[k] = old
                self.replayed += 1
            else:
                todo.append((k, tid, req))
        if self.parallelism == 1 or len(todo) <= 1:
            for k, tid, req in todo:
                out[k] = self._run_one(tid, req)
        else:
            with ThreadPoolExecutor(max_workers=self.parallelism) as pool:
                futs = [(k, pool.submit(self._run_one, tid, req)) for k, tid, req in todo]
                for k, fut in futs:
                    out[k] = fut.result()
        return out

    def execute_trial(self, config: dict, r: float, trial_seed: int, annotations: dict | None = None) -> TrialRecord:
        return self.run_batch([TrialRequest(config, r, trial_seed, dict(annotations or {}))])[0]

    def retrain_at_full(self, config: dict, trial_seed: int, source_fraction: float,
                        source_trial_id: int | None = None, annotations: dict | None = None) -> TrialRecord:
        """Re-train ``config`` on the whole training split, linked to its source trial."""
        ann = dict(annotations or {})
        ann.update({"retrain": True, "source_fraction": float(source_fraction)})
        if source_trial_id is not None:
            ann["source_trial"] = int(source_trial_id)
        return self.execute_trial(config, 1.0, trial_seed, ann)

    def resume_point(self) -> None:
        """Continue numbering after the records already in the store."""
        if self.store.records:
            self.next_id = max(self.next_id, max(r.trial_id for r in self.store.records) + 1)
