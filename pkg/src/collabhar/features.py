"""Window statistics, fold standardisation and pairwise feature joins."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .preprocess import NULL, LabeledWindow, TaskMode, map_label

SCHEMA_VERSION = 1
SOURCE_ORDER = ("E_WRIST", "A_WRIST", "A_CALF")
CHANNEL_STATS = ("mean", "std", "min", "max", "rms", "mean_abs", "zero_crossings")
E_EXTRA_STATS = ("clipped_fraction",)
STD_FLOOR = 1e-8


def stats_for(source: str) -> tuple[str, ...]:
    return CHANNEL_STATS + (E_EXTRA_STATS if source == "E_WRIST" else ())


def ordered_sources(sources) -> tuple[str, ...]:
    sources = set(sources)
    unknown = sources - set(SOURCE_ORDER)
    if unknown or not sources:
        raise ValueError(f"sources must be a non-empty subset of {SOURCE_ORDER}, got {sorted(sources)}")
    return tuple(s for s in SOURCE_ORDER if s in sources)


def feature_schema(sources) -> list[str]:
    return [f"{s}.{stat}" for s in ordered_sources(sources) for stat in stats_for(s)]


@dataclass
class FeatureVector:
    values: np.ndarray
    schema: list[str]


def channel_stats(block: np.ndarray) -> np.ndarray:
    """Statistics of each row of a ``(n_windows, length)`` block, in CHANNEL_STATS order."""
    block = np.asarray(block, dtype=np.float64)
    signs = np.sign(block)
    crossings = np.count_nonzero(signs[:, 1:] * signs[:, :-1] < 0, axis=1)
    return np.column_stack(
        [
            block.mean(axis=1),
            block.std(axis=1),
            block.min(axis=1),
            block.max(axis=1),
            np.sqrt(np.mean(block * block, axis=1)),
            np.abs(block).mean(axis=1),
            crossings.astype(np.float64),
        ]
    )


def source_block(windows, source: str) -> np.ndarray:
    """Feature columns of one source for a list of windows."""
    if not windows:
        return np.zeros((0, len(stats_for(source))))
    missing = [w for w in windows if source not in w.channels]
    if missing:
        raise ValueError(f"{source} channel missing in window of {missing[0].session_id or missing[0].agent_id}")
    data = np.stack([w.channels[source] for w in windows])
    cols = channel_stats(data)
    if source == "E_WRIST":
        clipped = np.stack(
            [w.clipped if w.clipped is not None else np.zeros(data.shape[1], bool) for w in windows]
        )
        cols = np.column_stack([cols, clipped.mean(axis=1)])
    return cols


def feature_matrix(windows, sources) -> np.ndarray:
    order = ordered_sources(sources)
    blocks = [source_block(windows, s) for s in order]
    return np.hstack(blocks) if blocks else np.zeros((len(windows), 0))


def extract_features(window: LabeledWindow, sources) -> FeatureVector:
    return FeatureVector(feature_matrix([window], sources)[0], feature_schema(sources))


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def invert(self, z):
        return np.asarray(z, dtype=np.float64) * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, doc) -> "Standardizer":
        return cls(np.asarray(doc["mean"], dtype=np.float64), np.asarray(doc["std"], dtype=np.float64))


def fit_standardizer(train) -> Standardizer:
    x = np.asarray(train, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("fit_standardizer needs at least two training vectors")
    mean = x.mean(axis=0)
    # constant columns standardise to exact zeros
    constant = np.all(x == x[0], axis=0)
    mean = np.where(constant, x[0], mean)
    std = np.maximum(x.std(axis=0), STD_FLOOR)
    return Standardizer(mean, std)


def apply_standardizer(standardizer: Standardizer, v):
    return standardizer.apply(v)


def pair_target(wa: LabeledWindow, wb: LabeledWindow, task: TaskMode) -> str:
    """Collaborative class of a time-aligned window pair.

    A pair is collaborative only if both agents carry the same joint class
    with each other as partner; every other combination is null.
    """
    ra, rb = wa.raw_label, wb.raw_label
    mutual = (
        ra.joint and rb.joint and ra.cls is rb.cls
        and ra.partner == wb.agent_id and rb.partner == wa.agent_id
    )
    return map_label(ra, task) if mutual else NULL


def pair_join(wa: LabeledWindow, fa: FeatureVector, wb: LabeledWindow, fb: FeatureVector, task: TaskMode):
    """Concatenate two agents' features in lexicographic agent order.

    Returns ``(FeatureVector, target_class)``.
    """
    if fa.schema != fb.schema:
        raise ValueError("pair_join: feature schemas differ")
    if abs(wa.start - wb.start) > 1e-9:
        raise ValueError(f"pair_join: windows not aligned ({wa.start:g} vs {wb.start:g})")
    if wa.agent_id == wb.agent_id:
        raise ValueError("pair_join: a pair needs two distinct agents")
    if wb.agent_id < wa.agent_id:
        wa, fa, wb, fb = wb, fb, wa, fa
    values = np.concatenate([fa.values, fb.values])
    schema = [f"first.{n}" for n in fa.schema] + [f"second.{n}" for n in fb.schema]
    return FeatureVector(values, schema), pair_target(wa, wb, task)


def pair_schema(sources) -> list[str]:
    base = feature_schema(sources)
    return [f"first.{n}" for n in base] + [f"second.{n}" for n in base]


def schema_manifest(sources, pairwise: bool = False) -> str:
    """JSON description of the feature layout for one sensor configuration."""
    doc = {
        "version": SCHEMA_VERSION,
        "sources": list(ordered_sources(sources)),
        "pairwise": pairwise,
        "features": pair_schema(sources) if pairwise else feature_schema(sources),
    }
    return json.dumps(doc, indent=2, sort_keys=True)
