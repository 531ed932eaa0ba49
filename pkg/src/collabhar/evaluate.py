"""Leave-one-group-out experiments over sensor configurations and tasks."""
from __future__ import annotations

import csv
import io
import itertools
import json
import multiprocessing
from collections import defaultdict
from dataclasses import asdict, dataclass, field

import numpy as np

from .classify import Hyperparams, OvaModel, instance_weights, predict_proba, smooth_predictions, train
from .features import (
    feature_schema,
    fit_standardizer,
    ordered_sources,
    pair_schema,
    pair_target,
    source_block,
    stats_for,
)
from .ingest import SessionData
from .preprocess import CLIP_MV, SOURCES, STEP_S, WINDOW_S, Mode, TaskMode, make_windows, map_task_labels

REPORT_VERSION = 1
DEFAULT_SENSOR_CONFIGS = (
    "E_WRIST",
    "A_WRIST",
    "A_CALF",
    "E_WRIST+A_WRIST",
    "A_WRIST+A_CALF",
    "E_WRIST+A_WRIST+A_CALF",
)


def parse_sensor_config(name: str) -> tuple[str, ...]:
    return ordered_sources(part.strip() for part in name.split("+"))


def sensor_config_name(sources) -> str:
    return "+".join(ordered_sources(sources))


@dataclass
class Fold:
    held_out_group: int
    train: list[SessionData]
    test: list[SessionData]


def logo_folds(sessions) -> list[Fold]:
    """One fold per group: test on all of its sessions, train on the rest."""
    sessions = list(sessions)
    seen = {}
    for s in sessions:
        if s.session_id in seen:
            raise ValueError(f"duplicate session id {s.session_id} (groups {seen[s.session_id]} and {s.group_id})")
        seen[s.session_id] = s.group_id
    agent_group = {}
    for s in sessions:
        if agent_group.setdefault(s.agent_id, s.group_id) != s.group_id:
            raise ValueError(f"agent {s.agent_id} appears in groups {agent_group[s.agent_id]} and {s.group_id}")
    groups = sorted({s.group_id for s in sessions})
    if len(groups) < 2:
        raise ValueError(f"leave-one-group-out needs at least 2 groups, got {groups}")
    return [
        Fold(g, [s for s in sessions if s.group_id != g], [s for s in sessions if s.group_id == g])
        for g in groups
    ]


def confusion(predictions, labels, classes) -> np.ndarray:
    """Counts with rows = truth, columns = prediction."""
    index = {c: i for i, c in enumerate(classes)}
    cm = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for p, t in zip(predictions, labels):
        cm[index[t], index[p]] += 1
    return cm


def class_metrics(cm: np.ndarray):
    """Per-class precision, recall and F1 from a confusion matrix."""
    tp = np.diag(cm).astype(np.float64)
    pred = cm.sum(axis=0).astype(np.float64)
    true = cm.sum(axis=1).astype(np.float64)
    precision = np.divide(tp, pred, out=np.zeros_like(tp), where=pred > 0)
    recall = np.divide(tp, true, out=np.zeros_like(tp), where=true > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    return precision, recall, f1


def macro_f(predictions, labels, classes) -> float:
    predictions, labels = list(predictions), list(labels)
    if not labels or len(predictions) != len(labels):
        raise ValueError("macro_f needs equally long, non-empty predictions and labels")
    stray = set(labels) - set(classes)
    if stray:
        raise ValueError(f"labels outside the class set: {sorted(stray)}")
    return float(class_metrics(confusion(predictions, labels, classes))[2].mean())


@dataclass
class ExperimentConfig:
    sensor_configs: tuple[str, ...] = DEFAULT_SENSOR_CONFIGS
    modes: tuple[str, ...] = ("SINGLE_USER", "PAIRWISE")
    variants: tuple[str, ...] = ("FULL", "LIFT_DROP_NULL")
    window_s: float = WINDOW_S
    step_s: float = STEP_S
    clip_mv: float = CLIP_MV
    smooth_radius: int = 3
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    workers: int = 1

    def cells(self):
        for sc, mode, variant in itertools.product(self.sensor_configs, self.modes, self.variants):
            yield sensor_config_name(parse_sensor_config(sc)), TaskMode.parse(mode, variant)

    def describe(self) -> dict:
        doc = asdict(self)
        doc.pop("workers")
        for key in ("sensor_configs", "modes", "variants"):
            doc[key] = list(doc[key])
        return doc


@dataclass
class _Prepared:
    session: SessionData
    windows: list
    blocks: dict


@dataclass
class Instances:
    X: np.ndarray
    y: list
    purity: np.ndarray
    group: np.ndarray
    stream: list  # (stream name, window position) per row


def prepare(sessions, config: ExperimentConfig) -> list[_Prepared]:
    out = []
    for s in sessions:
        windows = make_windows(s, config.window_s, config.step_s, config.clip_mv)
        blocks = {src: source_block(windows, src) for src in SOURCES if s.has(SOURCES[src])}
        out.append(_Prepared(s, windows, blocks))
    return out


def single_instances(prepared, sources, task: TaskMode) -> Instances:
    X, y, purity, group, stream = [], [], [], [], []
    for p in prepared:
        idx = [i for i, w in enumerate(p.windows) if not w.discard]
        if not idx:
            continue
        X.append(np.hstack([p.blocks[s][idx] for s in sources]))
        for i in idx:
            w = p.windows[i]
            y.append(map_task_labels(w, task))
            purity.append(w.purity)
            group.append(p.session.group_id)
            stream.append((p.session.session_id, i))
    return _stack(X, y, purity, group, stream, sources)


def pair_instances(prepared, sources, task: TaskMode) -> Instances:
    by_day = defaultdict(list)
    for p in prepared:
        by_day[(p.session.group_id, p.session.day_index)].append(p)
    X, y, purity, group, stream = [], [], [], [], []
    for key in sorted(by_day):
        members = sorted(by_day[key], key=lambda p: p.session.agent_id)
        for pa, pb in itertools.combinations(members, 2):
            sa, sb = pa.session, pb.session
            if len(pa.windows) != len(pb.windows) or abs(sa.start_time - sb.start_time) > 1e-9:
                raise ValueError(f"sessions {sa.session_id} and {sb.session_id} are not time-aligned")
            idx = [i for i, (wa, wb) in enumerate(zip(pa.windows, pb.windows)) if not (wa.discard or wb.discard)]
            if not idx:
                continue
            X.append(np.hstack([pa.blocks[s][idx] for s in sources] + [pb.blocks[s][idx] for s in sources]))
            name = f"{sa.agent_id}+{sb.agent_id}-d{sa.day_index}"
            for i in idx:
                wa, wb = pa.windows[i], pb.windows[i]
                y.append(pair_target(wa, wb, task))
                purity.append(min(wa.purity, wb.purity))
                group.append(sa.group_id)
                stream.append((name, i))
    return _stack(X, y, purity, group, stream, sources, pairs=True)


def _stack(X, y, purity, group, stream, sources, pairs=False):
    width = sum(len(stats_for(s)) for s in sources) * (2 if pairs else 1)
    return Instances(
        X=np.vstack(X) if X else np.zeros((0, width)),
        y=y,
        purity=np.asarray(purity, dtype=np.float64),
        group=np.asarray(group, dtype=np.int64),
        stream=stream,
    )


def split_streams(stream) -> list[np.ndarray]:
    """Row indices of each contiguous stream, in window order.

    A stream breaks wherever windows are missing (discarded) in between.
    """
    runs = []
    current, last = None, None
    for row, (name, pos) in enumerate(stream):
        if current is not None and name == last[0] and pos == last[1] + 1:
            current.append(row)
        else:
            current = [row]
            runs.append(current)
        last = (name, pos)
    return [np.asarray(r, dtype=np.int64) for r in runs]


def fit_fold(inst: Instances, train_rows, classes, hp: Hyperparams) -> OvaModel:
    Xtr = inst.X[train_rows]
    ytr = [inst.y[i] for i in train_rows]
    std = fit_standardizer(Xtr)
    weights = instance_weights(inst.purity[train_rows], ytr)
    model = train(std.apply(Xtr), ytr, weights, hp, classes=classes)
    model.standardizer = std
    return model


def _score(pred, truth, classes) -> dict:
    cm = confusion(pred, truth, classes)
    precision, recall, f1 = class_metrics(cm)
    support = cm.sum(axis=1)
    return {
        "macro_f": float(f1.mean()),
        "n_scored": int(cm.sum()),
        "confusion": cm.tolist(),
        "per_class": {
            c: {
                "precision": float(precision[i]),
                "recall": float(recall[i]),
                "f1": float(f1[i]),
                "support": int(support[i]),
            }
            for i, c in enumerate(classes)
        },
    }


def run_cell(prepared, sensor_name: str, task: TaskMode, config: ExperimentConfig, keep_models=False):
    sources = parse_sensor_config(sensor_name)
    build = pair_instances if task.mode is Mode.PAIRWISE else single_instances
    inst = build(prepared, sources, task)
    classes = list(task.classes)
    folds = {}
    models = {}
    pooled_pred, pooled_true = [], []
    for g in sorted(set(inst.group.tolist())):
        train_rows = np.flatnonzero(inst.group != g)
        test_rows = np.flatnonzero(inst.group == g)
        model = fit_fold(inst, train_rows, classes, config.hyperparams)
        model.schema = pair_schema(sources) if task.mode is Mode.PAIRWISE else feature_schema(sources)
        if keep_models:
            models[g] = model
        P = predict_proba(model, inst.X[test_rows])
        pred = [None] * len(test_rows)
        for run in split_streams([inst.stream[i] for i in test_rows]):
            for j, k in zip(run, smooth_predictions(P[run], config.smooth_radius)):
                pred[j] = classes[k]
        truth = [inst.y[i] for i in test_rows]
        folds[str(g)] = _score(pred, truth, classes)
        pooled_pred.extend(pred)
        pooled_true.extend(truth)
    cell = {
        "sensor_config": sensor_name,
        "mode": task.mode.value,
        "variant": task.variant.value,
        "classes": classes,
        "folds": folds,
        "pooled": _score(pooled_pred, pooled_true, classes),
        "fold_mean_macro_f": float(np.mean([f["macro_f"] for f in folds.values()])),
        "n_features": int(inst.X.shape[1]),
    }
    return cell, models


def cell_key(sensor_name: str, task: TaskMode) -> str:
    return f"{sensor_name}|{task.mode.value}|{task.variant.value}"


@dataclass
class ExperimentReport:
    cells: dict
    config: dict
    models: dict = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {"version": REPORT_VERSION, "config": self.config, "cells": self.cells}
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sensor_config", "mode", "variant", "scope", "macro_f", "n_scored", "class", "precision", "recall", "f1", "support"])
        for key in sorted(self.cells):
            cell = self.cells[key]
            scopes = [(f"fold:{g}", cell["folds"][g]) for g in sorted(cell["folds"], key=int)]
            scopes.append(("pooled", cell["pooled"]))
            for scope, score in scopes:
                for c in cell["classes"]:
                    m = score["per_class"][c]
                    w.writerow([cell["sensor_config"], cell["mode"], cell["variant"], scope, repr(score["macro_f"]),
                                score["n_scored"], c, repr(m["precision"]), repr(m["recall"]), repr(m["f1"]), m["support"]])
            w.writerow([cell["sensor_config"], cell["mode"], cell["variant"], "fold_mean",
                        repr(cell["fold_mean_macro_f"]), "", "", "", "", "", ""])
        return buf.getvalue()

    def confusion_tables(self) -> dict:
        """File stem -> CSV text of each cell/scope confusion matrix."""
        out = {}
        for key in sorted(self.cells):
            cell = self.cells[key]
            stem = key.replace("|", "__").replace("+", "-")
            scopes = {f"fold{g}": cell["folds"][g] for g in cell["folds"]}
            scopes["pooled"] = cell["pooled"]
            for scope, score in sorted(scopes.items()):
                buf = io.StringIO()
                w = csv.writer(buf, lineterminator="\n")
                w.writerow(["truth\\pred"] + cell["classes"])
                for c, row in zip(cell["classes"], score["confusion"]):
                    w.writerow([c] + row)
                out[f"{stem}__{scope}"] = buf.getvalue()
        return out

    def macro(self, sensor_config: str, mode: str, variant: str, scope: str = "pooled") -> float:
        cell = self.cells[f"{sensor_config}|{mode}|{variant}"]
        return cell["pooled"]["macro_f"] if scope == "pooled" else cell["folds"][scope]["macro_f"]


def check_channels(sessions, config: ExperimentConfig) -> None:
    needed = set()
    for sc in config.sensor_configs:
        needed |= set(parse_sensor_config(sc))
    missing = defaultdict(list)
    for s in sessions:
        for src in sorted(needed):
            if not s.has(SOURCES[src]):
                missing[src].append(s.session_id)
    if missing:
        detail = "; ".join(f"{src} absent in {', '.join(ids)}" for src, ids in sorted(missing.items()))
        raise ValueError(f"requested channels missing: {detail}")


_SHARED = {}


def _run_shared(args):
    sensor_name, task = args
    cell, _ = run_cell(_SHARED["prepared"], sensor_name, task, _SHARED["config"])
    return cell


def run_experiment(sessions, config: ExperimentConfig | None = None, keep_models: bool = False) -> ExperimentReport:
    """Evaluate every (sensor configuration, mode, variant) cell with LOGO folds."""
    config = config or ExperimentConfig()
    sessions = list(sessions)
    logo_folds(sessions)
    check_channels(sessions, config)
    prepared = prepare(sessions, config)
    cells = list(config.cells())
    results, models = {}, {}
    if config.workers > 1 and not keep_models and "fork" in multiprocessing.get_all_start_methods():
        _SHARED.update(prepared=prepared, config=config)
        try:
            with multiprocessing.get_context("fork").Pool(config.workers) as pool:
                for (name, task), cell in zip(cells, pool.map(_run_shared, cells)):
                    results[cell_key(name, task)] = cell
        finally:
            _SHARED.clear()
    else:
        for name, task in cells:
            cell, cell_models = run_cell(prepared, name, task, config, keep_models)
            results[cell_key(name, task)] = cell
            for g, m in cell_models.items():
                models[(cell_key(name, task), g)] = m
    return ExperimentReport(results, config.describe(), models)
