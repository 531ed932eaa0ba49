"""Model channels, sliding windows with majority labels, and task label maps."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .ingest import ACTIVITIES, UNLABELED, LabelClass, RawLabel, SessionData

CLIP_MV = 3.0
WINDOW_S = 5.0
STEP_S = 1.0
EPS = 1e-9

# source name -> session attribute it is derived from
SOURCES = {"E_WRIST": "potential_mv", "A_WRIST": "accel_wrist", "A_CALF": "accel_calf"}

DISCARD_REASONS = {
    LabelClass.A1: "sync-steps",
    LabelClass.A9: "undefined-activity",
    LabelClass.A10: "out-of-camera",
    LabelClass.UNLABELED: "unlabeled",
}


class Mode(enum.Enum):
    SINGLE_USER = "SINGLE_USER"
    PAIRWISE = "PAIRWISE"


class Variant(enum.Enum):
    FULL = "FULL"
    LIFT_DROP_NULL = "LIFT_DROP_NULL"


NULL = "NULL"

_CLASS_SETS = {
    (Mode.SINGLE_USER, Variant.FULL): ("A3", "A4", "A5", "A6", "A7", NULL),
    (Mode.SINGLE_USER, Variant.LIFT_DROP_NULL): ("A3", "A4", "A5", NULL),
    (Mode.PAIRWISE, Variant.FULL): ("A5", "A6_together", "A7_together", NULL),
    (Mode.PAIRWISE, Variant.LIFT_DROP_NULL): ("A5", NULL),
}


@dataclass(frozen=True)
class TaskMode:
    mode: Mode
    variant: Variant

    @classmethod
    def parse(cls, mode: str, variant: str) -> "TaskMode":
        return cls(Mode(mode), Variant(variant))

    @property
    def classes(self) -> tuple[str, ...]:
        return _CLASS_SETS[(self.mode, self.variant)]

    @property
    def name(self) -> str:
        return f"{self.mode.value}/{self.variant.value}"


def accel_norm(x, y=None, z=None):
    """Euclidean norm of accelerometer samples.

    Accepts three component arrays or one ``(n, 3)`` array.
    """
    if y is None and z is None:
        xyz = np.asarray(x, dtype=np.float64)
        return np.sqrt(np.sum(xyz * xyz, axis=-1))
    x, y, z = (np.asarray(v, dtype=np.float64) for v in (x, y, z))
    return np.sqrt(x * x + y * y + z * z)


def potential_delta(series) -> np.ndarray:
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 1 or len(series) < 2:
        raise ValueError("potential_delta needs a 1-D series of length >= 2")
    out = np.empty_like(series)
    out[0] = 0.0
    np.subtract(series[1:], series[:-1], out=out[1:])
    return out


def clip_delta(delta, limit: float = CLIP_MV):
    return np.clip(delta, -limit, limit)


@dataclass
class ModelChannels:
    """Preprocessed, equal-length channels of one session."""

    channels: dict
    clipped: np.ndarray | None


def model_channels(session: SessionData, clip_mv: float = CLIP_MV) -> ModelChannels:
    channels = {}
    clipped = None
    if session.potential_mv is not None:
        delta = potential_delta(session.potential_mv)
        # a delta whose previous sample was lost carries no information
        prev_ok = np.concatenate(([True], session.valid[:-1]))
        delta = np.where(prev_ok, delta, 0.0)
        clipped = np.abs(delta) > clip_mv
        channels["E_WRIST"] = clip_delta(delta, clip_mv)
    if session.accel_wrist is not None:
        channels["A_WRIST"] = accel_norm(session.accel_wrist)
    if session.accel_calf is not None:
        channels["A_CALF"] = accel_norm(session.accel_calf)
    return ModelChannels(channels, clipped)


@dataclass(eq=False)
class LabeledWindow:
    agent_id: str
    start: float
    duration: float
    channels: dict
    raw_label: RawLabel
    purity: float
    discard: bool = False
    reason: str | None = None
    tie_break: bool = False
    start_index: int = 0
    clipped: np.ndarray | None = None
    session_id: str = ""
    group_id: int = 0
    day_index: int = 0
    meta: dict = field(default_factory=dict)


def window_count(span: float, window_s: float, step_s: float) -> int:
    if window_s > span + EPS:
        return 0
    return int(math.floor((span - window_s) / step_s + EPS)) + 1


def window_starts(span: float, window_s: float, step_s: float) -> np.ndarray:
    return np.arange(window_count(span, window_s, step_s)) * step_s


def sample_label_codes(session: SessionData) -> tuple[np.ndarray, list[RawLabel]]:
    """Per-sample label code; code 0 is UNLABELED, others index the returned table."""
    times = session.times
    table = [UNLABELED]
    lookup = {UNLABELED: 0}
    codes = np.zeros(session.n_samples, dtype=np.int64)
    for iv in session.labels:
        raw = iv.raw
        if raw not in lookup:
            lookup[raw] = len(table)
            table.append(raw)
        lo = np.searchsorted(times, iv.start, "left")
        hi = np.searchsorted(times, iv.end, "left")
        codes[lo:hi] = lookup[raw]
    return codes, table


def make_windows(
    session: SessionData,
    window_s: float = WINDOW_S,
    step_s: float = STEP_S,
    clip_mv: float = CLIP_MV,
) -> list[LabeledWindow]:
    """Slice a session into labeled windows.

    Window ``k`` starts ``k * step_s`` seconds into the session. Its label is
    the sample-level majority (ties go to the label seen first). Windows are
    flagged for discard when the majority is A1, A9, A10 or unlabeled, or when
    any sample inside is marked lost.
    """
    if not (window_s > 0 and step_s > 0):
        raise ValueError("window and step must be positive")
    if window_s > session.span + EPS:
        raise ValueError(f"window of {window_s:g} s longer than session ({session.span:g} s)")
    fs = session.sample_rate
    length = int(round(window_s * fs))
    starts_s = window_starts(session.span, window_s, step_s)
    starts = np.minimum(np.round(starts_s * fs).astype(np.int64), session.n_samples - length)
    codes, table = sample_label_codes(session)
    majority, count, tie, invalid = _kernels.window_majority(codes, session.valid, starts, length)
    mc = model_channels(session, clip_mv)
    out = []
    for w, s in enumerate(starts.tolist()):
        raw = table[majority[w]]
        reason = None
        if invalid[w]:
            reason = "data-loss"
        elif raw.cls in DISCARD_REASONS:
            reason = DISCARD_REASONS[raw.cls]
        out.append(
            LabeledWindow(
                agent_id=session.agent_id,
                start=session.start_time + float(starts_s[w]),
                duration=window_s,
                channels={k: v[s:s + length] for k, v in mc.channels.items()},
                raw_label=raw,
                purity=count[w] / length,
                discard=reason is not None,
                reason=reason,
                tie_break=bool(tie[w]),
                start_index=s,
                clipped=None if mc.clipped is None else mc.clipped[s:s + length],
                session_id=session.session_id,
                group_id=session.group_id,
                day_index=session.day_index,
            )
        )
    return out


def map_label(raw: RawLabel, task: TaskMode) -> str:
    """Target class of a single agent's raw label under ``task``."""
    cls = raw.cls
    if cls in DISCARD_REASONS or cls is LabelClass.DATA_LOSS:
        raise ValueError(f"{cls.value} windows are discarded and have no target")
    if task.mode is Mode.SINGLE_USER:
        keep = {"A3", "A4", "A5"}
        if task.variant is Variant.FULL:
            keep |= {"A6", "A7"}
        return cls.value if cls.value in keep else NULL
    if cls is LabelClass.A5:
        return "A5"
    if task.variant is Variant.FULL and raw.joint and cls in (LabelClass.A6, LabelClass.A7):
        return f"{cls.value}_together"
    return NULL


def map_task_labels(window: LabeledWindow, task: TaskMode) -> str:
    if window.discard:
        raise ValueError(f"window at {window.start:g} s of {window.agent_id} is discarded ({window.reason})")
    return map_label(window.raw_label, task)


def all_raw_labels(partner: str = "P") -> list[RawLabel]:
    """Every admissible non-sentinel raw label, for exhaustive table checks."""
    out = []
    for cls in ACTIVITIES:
        if cls is not LabelClass.A5:
            out.append(RawLabel(cls))
        if cls in (LabelClass.A5, LabelClass.A6, LabelClass.A7):
            out.append(RawLabel(cls, True, partner))
    return out
