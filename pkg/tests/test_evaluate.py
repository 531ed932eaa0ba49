import copy
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from collabhar.classify import Hyperparams
from collabhar.evaluate import (
    ExperimentConfig,
    check_channels,
    class_metrics,
    confusion,
    fit_fold,
    logo_folds,
    macro_f,
    pair_instances,
    prepare,
    run_experiment,
    single_instances,
    split_streams,
)
from collabhar.preprocess import Mode, TaskMode, Variant
from helpers import make_session

FAST = Hyperparams(epochs=60)


def from_confusion(cm, classes):
    pred, truth = [], []
    for i, row in enumerate(cm):
        for j, n in enumerate(row):
            truth += [classes[i]] * n
            pred += [classes[j]] * n
    return pred, truth


# metrics

def test_macro_f_two_class_example():
    pred, truth = from_confusion([[8, 2], [3, 7]], ["a", "b"])
    _, _, f1 = class_metrics(confusion(pred, truth, ["a", "b"]))
    assert f1[0] == pytest.approx(16 / 21) and f1[0] == pytest.approx(0.7619, abs=1e-4)
    assert f1[1] == pytest.approx(14 / 19) and f1[1] == pytest.approx(0.7368, abs=1e-4)
    assert macro_f(pred, truth, ["a", "b"]) == pytest.approx(0.7494, abs=1e-4)


def test_macro_f_constant_predictor():
    truth = ["a", "b", "c"] * 10
    assert macro_f(["a"] * 30, truth, ["a", "b", "c"]) == pytest.approx((2 * (1 / 3) / (1 + 1 / 3)) / 3)
    assert macro_f(["a"] * 30, truth, ["a", "b", "c"]) == pytest.approx(0.1667, abs=1e-4)


def test_macro_f_perfect_and_errors():
    assert macro_f(list("abca"), list("abca"), list("abc")) == 1.0
    with pytest.raises(ValueError):
        macro_f([], [], ["a"])
    with pytest.raises(ValueError):
        macro_f(["a"], ["z"], ["a"])


def test_absent_class_scores_zero_and_counts():
    # class c never occurs nor is predicted; it still enters the mean
    assert macro_f(["a", "b"], ["a", "b"], ["a", "b", "c"]) == pytest.approx(2 / 3)


def test_confusion_examples():
    classes = ["a", "b", "NULL"]
    truth = ["a", "a", "b", "NULL", "NULL"]
    cm = confusion(truth, truth, classes)
    assert np.array_equal(cm, np.diag([2, 1, 2]))
    cm = confusion(["NULL"] * 5, truth, classes)
    assert np.count_nonzero(cm.sum(axis=0)) == 1 and cm[:, 2].tolist() == [2, 1, 2]


@given(st.lists(st.tuples(st.sampled_from("abc"), st.sampled_from("abc")), min_size=1, max_size=60))
def test_confusion_conservation(pairs):
    pred, truth = zip(*pairs)
    cm = confusion(pred, truth, list("abc"))
    assert cm.sum() == len(pairs)
    assert cm.sum(axis=1).tolist() == [truth.count(c) for c in "abc"]


# folds

def sessions_for(assign):
    """assign: list of (agent, group, day)."""
    return [make_session(n=20, agent=a, group=g, day=d, labels=[]) for a, g, d in assign]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_logo_disjoint_and_covering(seed):
    rng = np.random.default_rng(seed)
    n_groups = int(rng.integers(2, 6))
    groups = rng.permutation(np.arange(1, n_groups + 1).repeat(int(rng.integers(1, 4))))
    assign = [(f"P{i}", int(g), int(d)) for i, g in enumerate(groups) for d in range(1, int(rng.integers(2, 4)))]
    sessions = sessions_for(assign)
    folds = logo_folds(sessions)
    assert [f.held_out_group for f in folds] == sorted(set(groups.tolist()))
    tested = []
    for f in folds:
        train_ids = {s.session_id for s in f.train}
        test_ids = {s.session_id for s in f.test}
        assert not train_ids & test_ids
        assert train_ids | test_ids == {s.session_id for s in sessions}
        assert {s.group_id for s in f.test} == {f.held_out_group}
        assert f.held_out_group not in {s.group_id for s in f.train}
        tested += sorted(test_ids)
    assert sorted(tested) == sorted(s.session_id for s in sessions)


def test_logo_four_groups_four_days():
    assign = [(f"G{g}P{a}", g, d) for g in range(1, 5) for a in range(1, 4) for d in range(1, 5)]
    folds = logo_folds(sessions_for(assign))
    assert len(folds) == 4 and all(len(f.test) == 12 and len(f.train) == 36 for f in folds)


def test_logo_two_groups_complementary():
    folds = logo_folds(sessions_for([("A", 1, 1), ("B", 2, 1)]))
    assert [s.agent_id for s in folds[0].test] == [s.agent_id for s in folds[1].train] == ["A"]


def test_logo_errors():
    with pytest.raises(ValueError, match="duplicate session id"):
        logo_folds(sessions_for([("A", 1, 1), ("A", 2, 1)]))
    with pytest.raises(ValueError, match="at least 2 groups"):
        logo_folds(sessions_for([("A", 1, 1), ("B", 1, 1)]))


# streams

def test_split_streams():
    stream = [("a", 0), ("a", 1), ("a", 3), ("b", 4), ("b", 5), ("a", 4)]
    assert [r.tolist() for r in split_streams(stream)] == [[0, 1], [2], [3, 4], [5]]


# harness

def fast_config(**kw):
    kw.setdefault("hyperparams", FAST)
    return ExperimentConfig(**kw)


def test_missing_channel_lists_sessions(demo_sessions):
    sessions = copy.deepcopy(demo_sessions)
    sessions[1].accel_calf = None
    with pytest.raises(ValueError, match=sessions[1].session_id):
        check_channels(sessions, fast_config(sensor_configs=("A_CALF",)))
    check_channels(sessions, fast_config(sensor_configs=("E_WRIST",)))


def poisoned(sessions, group):
    out = copy.deepcopy(sessions)
    rng = np.random.default_rng(0)
    for s in out:
        if s.group_id == group:
            s.potential_mv = s.potential_mv + rng.normal(0, 50, s.n_samples)
            s.accel_wrist = s.accel_wrist * 3.0
            s.accel_calf = -s.accel_calf
    return out


@pytest.mark.parametrize("mode", [Mode.SINGLE_USER, Mode.PAIRWISE])
def test_poisoned_test_group_leaves_model_identical(demo_sessions, mode):
    task = TaskMode(mode, Variant.FULL)
    cfg = fast_config()
    sources = ("E_WRIST", "A_WRIST", "A_CALF")
    build = single_instances if mode is Mode.SINGLE_USER else pair_instances
    for held_out in (1, 2):
        models = []
        for sessions in (demo_sessions, poisoned(demo_sessions, held_out)):
            inst = build(prepare(sessions, cfg), sources, task)
            rows = np.flatnonzero(inst.group != held_out)
            models.append(fit_fold(inst, rows, list(task.classes), cfg.hyperparams))
        a, b = models
        assert a.weights.tobytes() == b.weights.tobytes()
        assert a.bias.tobytes() == b.bias.tobytes()
        assert a.standardizer.mean.tobytes() == b.standardizer.mean.tobytes()
        assert a.standardizer.std.tobytes() == b.standardizer.std.tobytes()


def test_poisoning_through_run_experiment(demo_sessions):
    cfg = fast_config(sensor_configs=("E_WRIST+A_WRIST",), modes=("SINGLE_USER",), variants=("FULL",))
    clean = run_experiment(demo_sessions, cfg, keep_models=True)
    dirty = run_experiment(poisoned(demo_sessions, 2), cfg, keep_models=True)
    key = "E_WRIST+A_WRIST|SINGLE_USER|FULL"
    assert clean.models[(key, 2)].weights.tobytes() == dirty.models[(key, 2)].weights.tobytes()
    assert clean.models[(key, 1)].weights.tobytes() != dirty.models[(key, 1)].weights.tobytes()
    assert clean.cells[key]["folds"]["2"] != dirty.cells[key]["folds"]["2"]


@pytest.fixture(scope="module")
def demo_report(demo_sessions):
    return run_experiment(demo_sessions, fast_config(sensor_configs=("E_WRIST", "A_WRIST", "E_WRIST+A_WRIST")))


def test_report_structure_and_pooling(demo_report):
    assert len(demo_report.cells) == 3 * 2 * 2
    for key, cell in demo_report.cells.items():
        k = len(cell["classes"])
        pooled = np.array(cell["pooled"]["confusion"])
        folds = [np.array(f["confusion"]) for f in cell["folds"].values()]
        assert pooled.shape == (k, k)
        assert np.array_equal(pooled, sum(folds))
        pred, truth = from_confusion(pooled.tolist(), cell["classes"])
        assert cell["pooled"]["macro_f"] == pytest.approx(macro_f(pred, truth, cell["classes"]), abs=1e-12)
        assert cell["fold_mean_macro_f"] == pytest.approx(np.mean([f["macro_f"] for f in cell["folds"].values()]))
        for c, row in zip(cell["classes"], pooled):
            assert cell["pooled"]["per_class"][c]["support"] == row.sum()
        assert cell["pooled"]["n_scored"] == pooled.sum()


def test_report_serialisation(demo_report):
    doc = json.loads(demo_report.to_json())
    assert set(doc) == {"version", "config", "cells"}
    lines = demo_report.to_csv().splitlines()
    assert lines[0].startswith("sensor_config,mode,variant,scope,macro_f")
    assert any(",pooled," in line for line in lines) and any(",fold_mean," in line for line in lines)
    tables = demo_report.confusion_tables()
    assert len(tables) == len(demo_report.cells) * 3  # pooled plus one per fold
    assert demo_report.macro("E_WRIST", "SINGLE_USER", "FULL") == demo_report.cells["E_WRIST|SINGLE_USER|FULL"]["pooled"]["macro_f"]


def test_electric_field_separates_joint_carry(demo_sessions):
    cfg = ExperimentConfig(sensor_configs=("E_WRIST", "A_WRIST"), modes=("SINGLE_USER",), variants=("FULL",))
    r = run_experiment(demo_sessions, cfg)
    e = r.cells["E_WRIST|SINGLE_USER|FULL"]["pooled"]["per_class"]["A5"]["f1"]
    a = r.cells["A_WRIST|SINGLE_USER|FULL"]["pooled"]["per_class"]["A5"]["f1"]
    assert e > a


def test_rerun_identical_and_workers_agree(demo_sessions, demo_report):
    cfg = fast_config(sensor_configs=("E_WRIST", "A_WRIST", "E_WRIST+A_WRIST"))
    assert run_experiment(demo_sessions, cfg).to_json() == demo_report.to_json()
    cfg.workers = 2
    assert run_experiment(demo_sessions, cfg).to_json() == demo_report.to_json()
