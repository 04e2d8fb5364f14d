"""Command-line interface: ``tune``, ``retrain``, ``analyze``, ``synth`` and ``bench``.

Exit codes: 0 success, 2 validation error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import shlex
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import analysis
from .dataio import TASKS, DataError, FidelityLadder, SplitSpec, load_table
from .executor import DataContext, Executor, TrainerBinding, TrialStore, load_trial_log
from .metrics import TASK_METRIC
from .optimizers import BudgetSpec, run_hyperband, run_model_based_hyperband, run_random_search
from .search_space import config_key, default_xgboost_space
from .synth import SynthSpec, make_synthetic, write_synthetic

log = logging.getLogger("subsample_hpo")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3
OPTIMIZERS = ("random", "hyperband", "bohb")
TRIAL_LOG = "trials.jsonl"


class ManifestError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass
class OptimizerBlock:
    optimizer: str = "hyperband"
    eta: int = 3
    rho: float = 1 / 3
    budget_seconds: float | None = None
    max_trials: int | None = None
    seed: int | None = None
    candidate_pool_size: int = 256
    full_fidelity_only: bool = False


@dataclass
class RunManifest:
    task: str
    optimizer: OptimizerBlock
    out_dir: Path
    dataset_path: Path | None = None
    target_column: str = "target"
    synthetic: SynthSpec | None = None
    metric: str = ""
    ladder: FidelityLadder = field(default_factory=FidelityLadder.default)
    split_seed: int = 0
    subsample_seed: int = 0
    trainer_kind: str = "builtin"
    trainer_command: str | list = ""
    trial_timeout_seconds: float | None = None
    parallelism: int = field(default_factory=lambda: os.cpu_count() or 1)

    def binding(self) -> TrainerBinding:
        return TrainerBinding(kind=self.trainer_kind, task=self.task, metric=self.metric,
                              command=tuple(_argv(self.trainer_command)),
                              timeout_seconds=self.trial_timeout_seconds)

    def budget(self) -> BudgetSpec:
        return BudgetSpec(self.optimizer.budget_seconds, self.optimizer.max_trials)

    def to_dict(self) -> dict:
        ds = ({"synthetic": self.synthetic.to_dict()} if self.synthetic else
              {"path": str(self.dataset_path), "target_column": self.target_column})
        return {
            "dataset": ds, "task": self.task, "metric": self.metric,
            "optimizer": dict(vars(self.optimizer)),
            "ladder": list(self.ladder.fractions),
            "seeds": {"split": self.split_seed, "subsample": self.subsample_seed, "optimizer": self.optimizer.seed},
            "out_dir": str(self.out_dir),
            "trainer": {"kind": self.trainer_kind, "command": self.trainer_command,
                        "timeout_seconds": self.trial_timeout_seconds},
            "parallelism": self.parallelism,
        }


def _argv(command) -> list[str]:
    if not command:
        return []
    return shlex.split(command) if isinstance(command, str) else [str(c) for c in command]


def parse_manifest(doc: dict, base_dir: Path = Path("."), overrides: dict | None = None) -> RunManifest:
    """Validate a manifest document (plus flag overrides); raises ManifestError listing every bad field."""
    ov = {k: v for k, v in (overrides or {}).items() if v is not None}
    problems: list[str] = []

    def bad(msg):
        problems.append(msg)

    task = doc.get("task")
    ds = doc.get("dataset") or {}
    synthetic = None
    dataset_path = None
    if "synthetic" in ds:
        try:
            synthetic = SynthSpec(**ds["synthetic"])
            task = task or synthetic.task
            if task != synthetic.task:
                bad("task: does not match dataset.synthetic.task")
        except (TypeError, ValueError) as exc:
            bad(f"dataset.synthetic: {exc}")
    elif "path" in ds:
        dataset_path = Path(ds["path"])
        if not dataset_path.is_absolute():
            dataset_path = base_dir / dataset_path
        if not dataset_path.exists():
            bad(f"dataset.path: file not found: {dataset_path}")
    else:
        bad("dataset: needs either 'path' or 'synthetic'")
    if task not in TASKS:
        bad(f"task: must be one of {', '.join(TASKS)}")
    metric = doc.get("metric") or (TASK_METRIC.get(task, "") if task in TASKS else "")
    if task in TASKS and metric != TASK_METRIC[task]:
        bad(f"metric: {metric!r} is incompatible with task {task!r}")

    opt_doc = dict(doc.get("optimizer") or {})
    for k in ("optimizer", "max_trials", "budget_seconds", "eta", "rho"):
        if k in ov:
            opt_doc[k] = ov[k]
    try:
        opt = OptimizerBlock(**opt_doc)
    except TypeError as exc:
        bad(f"optimizer: {exc}")
        opt = OptimizerBlock()
    seeds = dict(doc.get("seeds") or {})
    if "seed" in ov:
        seeds = {"split": ov["seed"], "subsample": ov["seed"], "optimizer": ov["seed"]}
    if opt.seed is None:
        opt.seed = seeds.get("optimizer")
    for name in ("split", "subsample"):
        if not isinstance(seeds.get(name), int):
            bad(f"seeds.{name}: an explicit integer seed is required")
    if not isinstance(opt.seed, int):
        bad("seeds.optimizer: an explicit integer seed is required")
    if opt.optimizer not in OPTIMIZERS:
        bad(f"optimizer.optimizer: must be one of {', '.join(OPTIMIZERS)}")
    if opt.budget_seconds is None and opt.max_trials is None:
        bad("optimizer: set budget_seconds and/or max_trials")
    if opt.budget_seconds is not None and not opt.budget_seconds > 0:
        bad("optimizer.budget_seconds: must be positive")
    if opt.max_trials is not None and (not isinstance(opt.max_trials, int) or opt.max_trials < 1):
        bad("optimizer.max_trials: must be an integer >= 1")
    if not isinstance(opt.eta, int) or opt.eta < 2:
        bad("optimizer.eta: must be an integer >= 2")
    if not 0 <= opt.rho <= 1:
        bad("optimizer.rho: must lie in [0, 1]")
    try:
        ladder = FidelityLadder(tuple(doc["ladder"])) if "ladder" in doc else FidelityLadder.default()
    except DataError as exc:
        bad(f"ladder: {exc}")
        ladder = FidelityLadder.default()

    trainer = dict(doc.get("trainer") or {"kind": "builtin"})
    if "trainer_cmd" in ov:
        trainer.update(kind="external", command=ov["trainer_cmd"])
    if "trial_timeout_seconds" in ov:
        trainer["timeout_seconds"] = ov["trial_timeout_seconds"]
    kind = trainer.get("kind", "builtin")
    if kind not in ("builtin", "external"):
        bad("trainer.kind: must be 'builtin' or 'external'")
    if kind == "external" and not trainer.get("command"):
        bad("trainer.command: required for an external trainer")
    out_dir = ov.get("out_dir") or doc.get("out_dir")
    if not out_dir:
        bad("out_dir: required (manifest field or --out-dir)")
    parallelism = ov.get("parallelism", doc.get("parallelism", os.cpu_count() or 1))
    if not isinstance(parallelism, int) or parallelism < 1:
        bad("parallelism: must be an integer >= 1")
    if problems:
        raise ManifestError(problems)
    # flag paths are relative to the working directory, manifest paths to the manifest
    out = Path(out_dir) if "out_dir" in ov else base_dir / out_dir
    return RunManifest(
        task=task, optimizer=opt, out_dir=out,
        dataset_path=dataset_path, target_column=ds.get("target_column", "target"), synthetic=synthetic,
        metric=metric, ladder=ladder, split_seed=seeds["split"], subsample_seed=seeds["subsample"],
        trainer_kind=kind, trainer_command=trainer.get("command", ""),
        trial_timeout_seconds=trainer.get("timeout_seconds"), parallelism=parallelism,
    )


def load_manifest(path, overrides: dict | None = None) -> RunManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ManifestError([f"manifest: file not found: {path}"]) from None
    except json.JSONDecodeError as exc:
        raise ManifestError([f"manifest: invalid JSON: {exc}"]) from None
    return parse_manifest(doc, path.parent, overrides)


def _load_dataset(m: RunManifest):
    if m.synthetic is not None:
        return make_synthetic(m.synthetic)
    return load_table(m.dataset_path, m.task, m.target_column)


def _executor(m: RunManifest, store: TrialStore) -> Executor:
    ctx = DataContext(_load_dataset(m), SplitSpec(seed=m.split_seed), m.subsample_seed)
    return Executor(m.binding(), ctx, store, ladder=m.ladder, parallelism=m.parallelism)


def incumbent(records):
    done = [r for r in records if r.completed and not r.is_retrain]
    return max(done, key=lambda r: (r.value, -r.trial_id)) if done else None


def cmd_tune(m: RunManifest):
    """Run (or resume) one tuning job; returns (records, summary)."""
    m.out_dir.mkdir(parents=True, exist_ok=True)
    store = TrialStore(m.out_dir / TRIAL_LOG)
    ex = _executor(m, store)
    space = default_xgboost_space()
    o = m.optimizer
    if o.optimizer == "random":
        recs = run_random_search(space, m.ladder, m.budget(), ex, o.seed, o.full_fidelity_only)
    elif o.optimizer == "hyperband":
        recs = run_hyperband(space, m.ladder, o.eta, m.budget(), ex, o.seed)
    else:
        recs = run_model_based_hyperband(space, m.ladder, o.eta, m.budget(), ex, o.seed, rho=o.rho,
                                         candidate_pool_size=o.candidate_pool_size)
    best = incumbent(recs)
    summary = {
        "optimizer": o.optimizer,
        "n_trials": len(recs),
        "n_failed": sum(not r.completed for r in recs),
        "n_replayed": ex.replayed,
        "cumulative_trial_seconds": sum(r.total_wallclock_seconds for r in recs),
        "incumbent": None if best is None else {
            "trial_id": best.trial_id, "config": best.config, "fraction": best.fraction,
            "score": best.value, "metric": best.score.metric_kind,
        },
    }
    (m.out_dir / "manifest.resolved.json").write_text(json.dumps(m.to_dict(), indent=2, sort_keys=True) + "\n")
    (m.out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return recs, summary


def cmd_retrain(log_path, m: RunManifest):
    """Retrain the best configuration of every fidelity in the log on the full training split."""
    store = TrialStore(log_path)
    recs = [r for r in store.records if r.completed and not r.is_retrain]
    if not recs:
        raise RuntimeError("nothing to retrain: the log has no completed tuning trials")
    done = {(float(r.annotations["source_fraction"]), config_key(r.config))
            for r in store.records if r.is_retrain and r.completed}
    ex = _executor(m, store)
    ex.resume_point()
    out = []
    for frac, table in sorted(analysis.score_table(recs).items()):
        best = max(table.values(), key=lambda r: (r.value, -r.trial_id))
        if (frac, config_key(best.config)) in done:
            continue
        out.append(ex.retrain_at_full(best.config, best.seeds.trial, frac, best.trial_id,
                                      {"optimizer": best.annotations.get("optimizer")}))
    return out


def _log_name(path: Path, records, taken: set) -> str:
    names = {r.annotations.get("optimizer") for r in records if r.annotations.get("optimizer")}
    name = names.pop() if len(names) == 1 else (path.parent.name if path.stem == "trials" else path.stem)
    base, k = name or "log", 2
    while name in taken:
        name = f"{base}-{k}"
        k += 1
    taken.add(name)
    return name


def cmd_analyze(log_paths, out_dir):
    """Run every applicable analysis over the logs and emit reports; returns (written, notices)."""
    logs, notices, reports = {}, [], {}
    taken: set = set()
    for p in map(Path, log_paths):
        recs = load_trial_log(p)
        logs[_log_name(p, recs, taken)] = recs
    for name, recs in logs.items():
        for kind, fn in (("runtime", analysis.fit_runtime_line), ("ranking", analysis.ranking_analysis),
                         ("relative_performance", analysis.relative_performance)):
            try:
                reports[f"{name}-{kind}"] = fn([r for r in recs if kind != "runtime" or not r.is_retrain])
            except analysis.InsufficientData as exc:
                notices.append(f"{name}: {kind} skipped: {exc}")
    nonempty = {k: v for k, v in logs.items() if any(not r.is_retrain for r in v)}
    if nonempty:
        reports["wallclock"] = analysis.cumulative_wallclock(nonempty)
    return analysis.emit_report(reports, out_dir), notices


def cmd_synth(spec: SynthSpec, out_path):
    return write_synthetic(spec, out_path)


def cmd_bench(m: RunManifest, optimizers=OPTIMIZERS):
    """Synthesize (if needed), tune with each optimizer, then analyze all logs together."""
    root = m.out_dir
    if m.synthetic is not None:
        root.mkdir(parents=True, exist_ok=True)
        cmd_synth(m.synthetic, root / "data.csv")
    logs, summaries = [], {}
    for name in optimizers:
        sub = replace(m, out_dir=root / name, optimizer=replace(m.optimizer, optimizer=name))
        _, summaries[name] = cmd_tune(sub)
        logs.append(sub.out_dir / TRIAL_LOG)
    written, notices = cmd_analyze(logs, root / "analysis")
    return summaries, written, notices


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--manifest", help="run manifest (JSON)")
    common.add_argument("--seed", type=int, help="override split, subsample and optimizer seeds")
    common.add_argument("--out-dir", help="output directory")
    common.add_argument("--parallelism", type=int, help="concurrent trials (default: number of processors)")
    common.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--trainer-cmd", help="external trainer command line")
    common.add_argument("--trial-timeout-seconds", type=float, help="per-trial timeout for external trainers")
    common.add_argument("--optimizer", choices=OPTIMIZERS)
    common.add_argument("--max-trials", type=int)
    common.add_argument("--budget-seconds", type=float)

    p = argparse.ArgumentParser(prog="subsample-hpo", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("tune", parents=[common], help="run or resume a tuning job")
    r = sub.add_parser("retrain", parents=[common], help="retrain each fidelity's best config at r = 1")
    r.add_argument("--log", help="trial log (default: <out-dir>/trials.jsonl)")
    a = sub.add_parser("analyze", parents=[common], help="emit reports for one or more trial logs")
    a.add_argument("logs", nargs="+")
    s = sub.add_parser("synth", parents=[common], help="write a synthetic CSV dataset")
    s.add_argument("--task", choices=TASKS, default="regression")
    s.add_argument("--n-rows", type=int, default=1000)
    s.add_argument("--n-features", type=int, default=10)
    s.add_argument("--noise", type=float, default=0.1)
    s.add_argument("--n-classes", type=int, default=3)
    s.add_argument("--fidelity-sensitive", action="store_true")
    s.add_argument("--output", required=True)
    b = sub.add_parser("bench", parents=[common], help="synth + tune with every optimizer + analyze")
    b.add_argument("--task", choices=TASKS, default="regression")
    b.add_argument("--n-rows", type=int, default=12_500)
    return p


def _overrides(args) -> dict:
    return {"seed": args.seed, "out_dir": args.out_dir, "parallelism": args.parallelism,
            "trainer_cmd": args.trainer_cmd, "trial_timeout_seconds": args.trial_timeout_seconds,
            "optimizer": args.optimizer, "max_trials": args.max_trials, "budget_seconds": args.budget_seconds}


def _manifest(args) -> RunManifest:
    if args.manifest:
        return load_manifest(args.manifest, _overrides(args))
    if args.command == "bench":
        doc = {"dataset": {"synthetic": SynthSpec(task=args.task, n_rows=args.n_rows, noise=0.3,
                                                  seed=args.seed or 0, fidelity_sensitive=True).to_dict()},
               "optimizer": {"max_trials": 205}}
        return parse_manifest(doc, Path("."), _overrides(args))
    raise ManifestError(["manifest: --manifest is required"])


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            seed = 0 if args.seed is None else args.seed
            spec = SynthSpec(task=args.task, n_rows=args.n_rows, n_features=args.n_features, noise=args.noise,
                             seed=seed, n_classes=args.n_classes, fidelity_sensitive=args.fidelity_sensitive)
            ds = cmd_synth(spec, args.output)
            print(f"wrote {ds.n_rows} rows x {ds.n_features} features to {args.output}")
            return EXIT_OK
        if args.command == "analyze":
            out = args.out_dir or "analysis"
            written, notices = cmd_analyze(args.logs, out)
            for n in notices:
                print(f"notice: {n}", file=sys.stderr)
            print(f"wrote {len(written)} files to {out}")
            return EXIT_OK
        m = _manifest(args)
        if args.command == "tune":
            recs, summary = cmd_tune(m)
            inc = summary["incumbent"]
            print(f"{summary['n_trials']} trials ({summary['n_failed']} failed) -> {m.out_dir / TRIAL_LOG}")
            if inc:
                print(f"incumbent: trial {inc['trial_id']} r={inc['fraction']:g} "
                      f"{inc['metric']}={inc['score']:.6f}")
                print(json.dumps(inc["config"], sort_keys=True))
            return EXIT_OK
        if args.command == "retrain":
            out = cmd_retrain(args.log or m.out_dir / TRIAL_LOG, m)
            for r in out:
                score = f"{r.value:.6f}" if r.completed else f"failed ({r.reason})"
                print(f"retrained best of r={r.annotations['source_fraction']:g}: {score}")
            return EXIT_OK
        if args.command == "bench":
            summaries, written, notices = cmd_bench(m)
            for n in notices:
                print(f"notice: {n}", file=sys.stderr)
            for name, s in summaries.items():
                inc = s["incumbent"]
                val = "n/a" if inc is None else f"{inc['score']:.6f}"
                print(f"{name:10s} trials={s['n_trials']:4d} seconds={s['cumulative_trial_seconds']:.1f} best={val}")
            print(f"analysis: {m.out_dir / 'analysis'}")
            return EXIT_OK
    except (ManifestError, DataError) as exc:
        for problem in getattr(exc, "problems", [str(exc)]):
            print(f"error: {problem}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:
        log.debug("runtime failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
