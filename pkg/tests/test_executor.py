from __future__ import annotations

import json
import time

import numpy as np
import pytest
from conftest import cheap_config, stub_command

from subsample_hpo import learner
from subsample_hpo.dataio import SplitSpec
from subsample_hpo.executor import (
    COMPLETED,
    FAILED,
    DataContext,
    Executor,
    ReplayMismatch,
    TrainerBinding,
    TrialRecord,
    TrialRequest,
    TrialStore,
    load_trial_log,
)
from subsample_hpo.external import (
    MalformedResponse,
    NonzeroExit,
    TrainerReportedError,
    TrainerTimeout,
    external_trainer_roundtrip,
    parse_response,
)


@pytest.fixture
def ctx(small_regression):
    return DataContext(small_regression, SplitSpec(seed=0), subsample_seed=1)


def builtin(ctx, store=None, **kw):
    return Executor(TrainerBinding(), ctx, store=store, **kw)


def external(ctx, mode, timeout=10.0, **kw):
    return Executor(TrainerBinding("external", command=stub_command(mode), timeout_seconds=timeout), ctx, **kw)


def test_builtin_happy_path(ctx):
    rec = builtin(ctx).execute_trial(cheap_config(), 1.0, trial_seed=3)
    assert rec.status == COMPLETED and rec.score is not None
    assert rec.score.n_evaluated == len(ctx.split.valid)
    assert rec.train_wallclock_seconds > 0
    assert rec.total_wallclock_seconds >= rec.train_wallclock_seconds
    assert rec.seeds.split == 0 and rec.seeds.subsample == 1 and rec.seeds.trial == 3


def test_same_inputs_same_score_new_id(ctx):
    ex = builtin(ctx)
    a = ex.execute_trial(cheap_config(subsample=0.7), 0.5, 4)
    b = ex.execute_trial(cheap_config(subsample=0.7), 0.5, 4)
    assert a.trial_id != b.trial_id
    assert a.score.value == b.score.value


def test_validation_set_is_never_subsampled(ctx):
    ex = builtin(ctx)
    small = ex.execute_trial(cheap_config(), 0.1, 0)
    full = ex.execute_trial(cheap_config(), 1.0, 0)
    assert small.score.n_evaluated == full.score.n_evaluated == len(ctx.split.valid)


def test_fraction_must_be_on_ladder(ctx):
    with pytest.raises(ValueError, match="ladder"):
        builtin(ctx).execute_trial(cheap_config(), 0.3, 0)
    with pytest.raises(ValueError, match="ladder"):
        builtin(ctx).execute_trial(cheap_config(), 1e-4, 0)
    rec = builtin(ctx, analysis_mode=True).execute_trial(cheap_config(), 1e-4, 0)
    assert rec.completed and rec.fraction == 1e-4


def test_invalid_config_rejected_before_running(ctx):
    ex = builtin(ctx)
    with pytest.raises(ValueError, match="eta"):
        ex.execute_trial(cheap_config(eta=5.0), 1.0, 0)
    assert ex.store.records == []


def test_metric_must_match_task():
    with pytest.raises(ValueError):
        TrainerBinding(task="binary", metric="r2")
    with pytest.raises(ValueError):
        TrainerBinding(kind="external")


def test_trainer_crash_yields_failed_record(ctx, tmp_path, monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("simulated trainer crash")

    monkeypatch.setattr(learner, "train", boom)
    store = TrialStore(tmp_path / "log.jsonl")
    recs = builtin(ctx, store=store).run_batch([TrialRequest(cheap_config(), 1.0, i) for i in range(3)])
    assert [r.status for r in recs] == [FAILED] * 3
    assert all("simulated trainer crash" in r.reason for r in recs)
    assert [r.trial_id for r in load_trial_log(store.path)] == [0, 1, 2]


def test_external_ok_stub(ctx):
    rec = external(ctx, "ok").execute_trial(cheap_config(eta=0.1, max_depth=5.0), 0.5, 0)
    assert rec.completed
    assert rec.score.value == pytest.approx(1.0)
    n_rows = len(ctx.view(0.5))
    assert rec.train_wallclock_seconds == pytest.approx(1e-3 * n_rows)


@pytest.mark.parametrize("mode, fragment", [
    ("malformed", "missing field 'score'"),
    ("exit", "exit status 3"),
    ("error", "refused"),
])
def test_external_failures_become_records(ctx, mode, fragment):
    rec = external(ctx, mode).execute_trial(cheap_config(), 1.0, 0)
    assert rec.status == FAILED and fragment in rec.reason


def test_external_timeout_kills_trainer(ctx):
    t0 = time.perf_counter()
    rec = external(ctx, "hang", timeout=1.0).execute_trial(cheap_config(), 1.0, 0)
    assert time.perf_counter() - t0 < 30
    assert rec.status == FAILED and "TrainerTimeout" in rec.reason


def test_roundtrip_errors(ctx):
    req = {"config": cheap_config(), "rows_path": ctx.view_csv(1.0), "valid_path": ctx.valid_csv(),
           "task": "regression", "metric": "r2"}
    assert "score" in external_trainer_roundtrip(stub_command("ok"), req, 10)
    with pytest.raises(MalformedResponse, match="'score'"):
        external_trainer_roundtrip(stub_command("malformed"), req, 10)
    with pytest.raises(NonzeroExit):
        external_trainer_roundtrip(stub_command("exit"), req, 10)
    with pytest.raises(TrainerReportedError):
        external_trainer_roundtrip(stub_command("error"), req, 10)
    with pytest.raises(TrainerTimeout):
        external_trainer_roundtrip(stub_command("hang"), req, 0.5)


@pytest.mark.parametrize("line, err", [
    ("not json", MalformedResponse),
    ("[1, 2]", MalformedResponse),
    ('{"train_seconds": 1}', MalformedResponse),
    ('{"score": 0.5}', MalformedResponse),
    ('{"score": "0.5", "train_seconds": 1}', MalformedResponse),
    ('{"score": NaN, "train_seconds": 1}', MalformedResponse),
    ('{"score": 0.5, "train_seconds": -1}', MalformedResponse),
    ('{"error": "oom"}', TrainerReportedError),
])
def test_parse_response_rejects(line, err):
    with pytest.raises(err):
        parse_response(line)


def test_parse_response_accepts():
    assert parse_response('{"score": 0.75, "train_seconds": 2}') == {"score": 0.75, "train_seconds": 2.0}


def test_records_persist_and_roundtrip(ctx, tmp_path):
    store = TrialStore(tmp_path / "t.jsonl")
    ex = builtin(ctx, store=store)
    recs = ex.run_batch([TrialRequest(cheap_config(), r, 7, {"rung": 0}) for r in (0.1, 0.5, 1.0)])
    loaded = load_trial_log(store.path)
    assert [r.to_dict() for r in loaded] == [r.to_dict() for r in recs]
    assert [r.trial_id for r in loaded] == [0, 1, 2]


def test_truncated_tail_is_ignored_and_repaired(ctx, tmp_path):
    path = tmp_path / "t.jsonl"
    builtin(ctx, store=TrialStore(path)).run_batch([TrialRequest(cheap_config(), 1.0, i) for i in range(2)])
    full = path.read_text()
    path.write_text(full + full.splitlines()[0][:40])
    assert len(load_trial_log(path)) == 2
    store = TrialStore(path)
    assert path.read_text() == full and len(store.records) == 2


def test_corrupt_middle_line_is_an_error(tmp_path, ctx):
    path = tmp_path / "t.jsonl"
    builtin(ctx, store=TrialStore(path)).run_batch([TrialRequest(cheap_config(), 1.0, i) for i in range(2)])
    lines = path.read_text().splitlines()
    path.write_text("\n".join([lines[0][:30], lines[1]]) + "\n")
    with pytest.raises(ValueError, match="line 1"):
        load_trial_log(path)


def test_resume_replays_instead_of_retraining(ctx, tmp_path, monkeypatch):
    path = tmp_path / "t.jsonl"
    reqs = [TrialRequest(cheap_config(), r, i) for i, r in enumerate((0.1, 0.25, 1.0))]
    first = builtin(ctx, store=TrialStore(path)).run_batch(reqs[:2])

    calls = []
    real = learner.train
    monkeypatch.setattr(learner, "train", lambda *a, **k: calls.append(a[1].fraction) or real(*a, **k))
    ex = builtin(ctx, store=TrialStore(path))
    again = ex.run_batch(reqs)
    assert calls == [1.0] and ex.replayed == 2
    assert [r.to_dict() for r in again[:2]] == [r.to_dict() for r in first]
    assert [r.trial_id for r in load_trial_log(path)] == [0, 1, 2]


def test_resume_detects_foreign_log(ctx, tmp_path):
    path = tmp_path / "t.jsonl"
    builtin(ctx, store=TrialStore(path)).execute_trial(cheap_config(), 1.0, 0)
    with pytest.raises(ReplayMismatch):
        builtin(ctx, store=TrialStore(path)).execute_trial(cheap_config(eta=0.2), 1.0, 0)


def test_replay_reproduces_scores_bit_for_bit(ctx, small_regression):
    ex = builtin(ctx)
    recs = ex.run_batch([TrialRequest(cheap_config(subsample=0.6, col_subsample=0.5), r, 10 + i)
                         for i, r in enumerate((0.01, 0.25, 0.75))])
    fresh = builtin(DataContext(small_regression, SplitSpec(seed=0), 1))
    for rec in recs:
        again = fresh.execute_trial(rec.config, rec.fraction, rec.seeds.trial)
        assert again.score.value == rec.score.value


def test_parallel_batch_matches_serial(ctx):
    reqs = [TrialRequest(cheap_config(subsample=0.8), r, i) for i, r in enumerate((0.1, 0.25, 0.5, 1.0))]
    serial = builtin(ctx).run_batch(reqs)
    par = builtin(ctx, parallelism=3).run_batch(reqs)
    assert [r.trial_id for r in par] == [0, 1, 2, 3]
    assert [r.score.value for r in par] == [r.score.value for r in serial]


def test_retrain_at_full(ctx):
    ex = builtin(ctx)
    inc = ex.execute_trial(cheap_config(), 1.0, 5)
    rt = ex.retrain_at_full(cheap_config(), 5, source_fraction=1.0, source_trial_id=inc.trial_id)
    assert rt.fraction == 1.0 and rt.is_retrain
    assert rt.annotations["source_fraction"] == 1.0 and rt.annotations["source_trial"] == inc.trial_id
    assert rt.score.value == inc.score.value
    low = ex.execute_trial(cheap_config(), 0.1, 6)
    rt2 = ex.retrain_at_full(low.config, 6, source_fraction=0.1)
    assert rt2.annotations["source_fraction"] == 0.1


def test_record_dict_roundtrip(ctx):
    rec = builtin(ctx).execute_trial(cheap_config(), 1.0, 0, {"bracket": 2})
    again = TrialRecord.from_dict(json.loads(rec.to_json()))
    assert again.to_dict() == rec.to_dict()
    assert again.value == rec.value
    failed = TrialRecord(1, {}, 1.0, rec.seeds, FAILED, reason="x")
    assert failed.value == -np.inf
