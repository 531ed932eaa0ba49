"""Session file format, label taxonomy and validated loading/writing.

A session is a pair of sibling UTF-8 text files sharing a stem:

``<stem>.session.csv``
    Header lines ``# key=value`` (``format``, ``agent_id``, ``group_id``,
    ``day_index``, ``sample_rate``) followed by a comma-delimited table with
    the header row ``time_s,potential_mv,awx,awy,awz,acx,acy,acz,valid``.
    Sensor column groups may be omitted as a whole (potential, wrist triple,
    calf triple). NaN and infinity are rejected; lost samples carry
    ``valid=0`` and any finite placeholder value.

``<stem>.labels.csv``
    Header row ``start_s,end_s,class,joint,partner``; ``class`` is ``A1`` to
    ``A10``, ``joint`` is ``0``/``1``, ``partner`` is empty unless joint.
    Intervals are half-open ``[start_s, end_s)``.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_TAG = "collabhar-session/1"
SESSION_SUFFIX = ".session.csv"
LABELS_SUFFIX = ".labels.csv"
LABEL_COLUMNS = ("start_s", "end_s", "class", "joint", "partner")
CHANNEL_GROUPS = {
    "potential_mv": ("potential_mv",),
    "accel_wrist": ("awx", "awy", "awz"),
    "accel_calf": ("acx", "acy", "acz"),
}
TIME_TOL = 1e-6


class SessionFormatError(ValueError):
    """Raised for malformed files or sessions violating their invariants."""


class LabelClass(enum.Enum):
    A1 = "A1"  # start and stop (synchronisation steps)
    A2 = "A2"  # doing nothing
    A3 = "A3"  # normal walk
    A4 = "A4"  # carry alone
    A5 = "A5"  # carry jointly
    A6 = "A6"  # lift
    A7 = "A7"  # drop
    A8 = "A8"  # turn screw
    A9 = "A9"  # no definition
    A10 = "A10"  # out of camera
    UNLABELED = "UNLABELED"
    DATA_LOSS = "DATA_LOSS"

    @property
    def is_sentinel(self) -> bool:
        return self in (LabelClass.UNLABELED, LabelClass.DATA_LOSS)


ACTIVITIES = tuple(c for c in LabelClass if not c.is_sentinel)
JOINT_CAPABLE = frozenset({LabelClass.A5, LabelClass.A6, LabelClass.A7})


@dataclass(frozen=True)
class RawLabel:
    """The label carried by one sample: class plus joint annotation."""

    cls: LabelClass
    joint: bool = False
    partner: str | None = None


UNLABELED = RawLabel(LabelClass.UNLABELED)


@dataclass(frozen=True)
class LabelInterval:
    start: float
    end: float
    cls: LabelClass
    joint: bool = False
    partner: str | None = None

    def __post_init__(self):
        problem = self.problem()
        if problem:
            raise SessionFormatError(problem)

    def problem(self) -> str | None:
        if not (math.isfinite(self.start) and math.isfinite(self.end)):
            return f"non-finite bounds in {self}"
        if not self.start < self.end:
            return f"start must precede end in {self.describe()}"
        if self.cls.is_sentinel:
            return f"sentinel class {self.cls.value} cannot be an interval"
        if self.joint and self.cls not in JOINT_CAPABLE:
            return f"joint flag only allowed for A5/A6/A7, got {self.describe()}"
        if self.cls is LabelClass.A5 and not self.joint:
            return f"A5 must be joint: {self.describe()}"
        if self.joint != (self.partner is not None):
            return f"partner must be present iff joint: {self.describe()}"
        return None

    @property
    def raw(self) -> RawLabel:
        return RawLabel(self.cls, self.joint, self.partner)

    def describe(self) -> str:
        tag = f" with {self.partner}" if self.partner else ""
        return f"[{self.start:g}, {self.end:g}) {self.cls.value}{tag}"


def check_labels(labels) -> list[str]:
    """Invariant violations of an interval list (empty when valid)."""
    problems = []
    for a, b in zip(labels, labels[1:]):
        if b.start < a.start:
            problems.append(f"labels not time-ordered: {a.describe()} before {b.describe()}")
        elif b.start < a.end:
            problems.append(f"overlapping labels: {a.describe()} and {b.describe()}")
    return problems


def label_at(labels, t: float) -> RawLabel:
    """Label covering time ``t`` under the half-open convention, else UNLABELED."""
    starts = [iv.start for iv in labels]
    i = int(np.searchsorted(starts, t, side="right")) - 1
    if i >= 0 and labels[i].start <= t < labels[i].end:
        return labels[i].raw
    return UNLABELED


@dataclass(eq=False)
class SessionData:
    """One participant-session of uniformly sampled channels and labels.

    ``accel_wrist`` and ``accel_calf`` are ``(n, 3)`` arrays in g,
    ``potential_mv`` is ``(n,)`` in millivolts. Absent sensors are ``None``.
    """

    agent_id: str
    group_id: int
    day_index: int
    sample_rate: float
    valid: np.ndarray
    potential_mv: np.ndarray | None = None
    accel_wrist: np.ndarray | None = None
    accel_calf: np.ndarray | None = None
    labels: list[LabelInterval] = field(default_factory=list)
    start_time: float = 0.0

    @property
    def n_samples(self) -> int:
        return len(self.valid)

    @property
    def span(self) -> float:
        return self.n_samples / self.sample_rate

    @property
    def session_id(self) -> str:
        return f"{self.agent_id}-d{self.day_index}"

    @property
    def times(self) -> np.ndarray:
        return self.start_time + np.arange(self.n_samples) / self.sample_rate

    def has(self, channel: str) -> bool:
        return getattr(self, channel) is not None

    def problems(self, max_group: int | None = None, max_day: int | None = None) -> list[str]:
        out = []
        if not self.sample_rate > 0:
            out.append(f"sample_rate must be positive, got {self.sample_rate}")
        if self.group_id < 1 or (max_group is not None and self.group_id > max_group):
            out.append(f"group_id {self.group_id} out of range")
        if self.day_index < 1 or (max_day is not None and self.day_index > max_day):
            out.append(f"day_index {self.day_index} out of range")
        n = self.n_samples
        for name, width in (("potential_mv", 1), ("accel_wrist", 3), ("accel_calf", 3)):
            arr = getattr(self, name)
            if arr is None:
                continue
            shape = (n,) if width == 1 else (n, width)
            if arr.shape != shape:
                out.append(f"{name} has shape {arr.shape}, expected {shape}")
            elif not np.isfinite(arr).all():
                out.append(f"{name} contains NaN or infinity")
        if not any(self.has(c) for c in CHANNEL_GROUPS):
            out.append("session carries no sensor channel")
        out.extend(check_labels(self.labels))
        return out

    def validate(self, **limits) -> "SessionData":
        problems = self.problems(**limits)
        if problems:
            raise SessionFormatError(f"{self.session_id}: " + "; ".join(problems))
        return self

    def equals(self, other: "SessionData", atol: float = 1e-9) -> bool:
        if (self.agent_id, self.group_id, self.day_index) != (other.agent_id, other.group_id, other.day_index):
            return False
        if self.sample_rate != other.sample_rate or self.labels != other.labels:
            return False
        if abs(self.start_time - other.start_time) > atol:
            return False
        if not np.array_equal(self.valid, other.valid):
            return False
        for name in CHANNEL_GROUPS:
            a, b = getattr(self, name), getattr(other, name)
            if (a is None) != (b is None):
                return False
            if a is not None and not np.allclose(a, b, rtol=0, atol=atol):
                return False
        return True


def _fmt(x: float) -> str:
    return repr(float(x))


def session_paths(path) -> tuple[Path, Path]:
    """Resolve a stem or either sibling file into (session, labels) paths."""
    p = Path(path)
    name = p.name
    for suffix in (SESSION_SUFFIX, LABELS_SUFFIX):
        if name.endswith(suffix):
            name = name[: -len(suffix)]
            break
    return p.with_name(name + SESSION_SUFFIX), p.with_name(name + LABELS_SUFFIX)


def write_session(session: SessionData, path) -> Path:
    """Write ``session`` next to ``path``; returns the ``.session.csv`` path."""
    session.validate()
    data_path, label_path = session_paths(path)
    columns = ["time_s"]
    blocks = [session.times[:, None]]
    for name, cols in CHANNEL_GROUPS.items():
        arr = getattr(session, name)
        if arr is not None:
            columns.extend(cols)
            blocks.append(arr.reshape(session.n_samples, -1))
    table = np.hstack(blocks)
    try:
        data_path.parent.mkdir(parents=True, exist_ok=True)
        with open(data_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(f"# format={FORMAT_TAG}\n")
            fh.write(f"# agent_id={session.agent_id}\n")
            fh.write(f"# group_id={session.group_id}\n")
            fh.write(f"# day_index={session.day_index}\n")
            fh.write(f"# sample_rate={_fmt(session.sample_rate)}\n")
            fh.write(",".join(columns + ["valid"]) + "\n")
            valid = session.valid.astype(int)
            for row, ok in zip(table.tolist(), valid.tolist()):
                fh.write(",".join(map(repr, row)) + f",{ok}\n")
        with open(label_path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LABEL_COLUMNS)
            for iv in session.labels:
                w.writerow([_fmt(iv.start), _fmt(iv.end), iv.cls.value, int(iv.joint), iv.partner or ""])
    except OSError as exc:
        raise OSError(f"cannot write session to {data_path}: {exc}") from exc
    return data_path


def _parse_float(text: str, where: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise SessionFormatError(f"{where}: not a number: {text!r}") from None
    if not math.isfinite(value):
        raise SessionFormatError(f"{where}: NaN/infinity is not allowed (use valid=0)")
    return value


def _read_labels(path: Path) -> list[LabelInterval]:
    labels = []
    with open(path, encoding="utf-8", newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header is None or tuple(header) != LABEL_COLUMNS:
            raise SessionFormatError(f"{path}:1: expected header {','.join(LABEL_COLUMNS)}")
        for lineno, row in enumerate(rows, start=2):
            where = f"{path}:{lineno}"
            if len(row) != len(LABEL_COLUMNS):
                raise SessionFormatError(f"{where}: expected {len(LABEL_COLUMNS)} fields, got {len(row)}")
            start = _parse_float(row[0], where)
            end = _parse_float(row[1], where)
            try:
                cls = LabelClass(row[2])
            except ValueError:
                raise SessionFormatError(f"{where}: unknown class {row[2]!r}") from None
            if row[3] not in ("0", "1"):
                raise SessionFormatError(f"{where}: joint must be 0 or 1, got {row[3]!r}")
            try:
                labels.append(LabelInterval(start, end, cls, row[3] == "1", row[4] or None))
            except SessionFormatError as exc:
                raise SessionFormatError(f"{where}: {exc}") from None
    problems = check_labels(labels)
    if problems:
        raise SessionFormatError(f"{path}: " + "; ".join(problems))
    return labels


def load_session(path) -> SessionData:
    """Load and validate a session written by :func:`write_session`."""
    data_path, label_path = session_paths(path)
    if not data_path.exists():
        raise SessionFormatError(f"{data_path}: no such session file")
    if not label_path.exists():
        raise SessionFormatError(f"{label_path}: missing labels file")
    header = {}
    with open(data_path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    lineno = 0
    while lineno < len(lines) and lines[lineno].startswith("#"):
        key, sep, value = lines[lineno][1:].strip().partition("=")
        if not sep:
            raise SessionFormatError(f"{data_path}:{lineno + 1}: header line must be '# key=value'")
        header[key.strip()] = value.strip()
        lineno += 1
    if header.get("format") != FORMAT_TAG:
        raise SessionFormatError(f"{data_path}:1: unsupported format {header.get('format')!r}")
    for key in ("agent_id", "group_id", "day_index", "sample_rate"):
        if key not in header:
            raise SessionFormatError(f"{data_path}: header key {key!r} missing")
    try:
        group_id = int(header["group_id"])
        day_index = int(header["day_index"])
    except ValueError:
        raise SessionFormatError(f"{data_path}: group_id/day_index must be integers") from None
    sample_rate = _parse_float(header["sample_rate"], f"{data_path}: sample_rate")
    if sample_rate <= 0:
        raise SessionFormatError(f"{data_path}: sample_rate must be positive")

    if lineno >= len(lines):
        raise SessionFormatError(f"{data_path}: missing column header")
    columns = lines[lineno].split(",")
    header_line = lineno + 1
    if columns[0] != "time_s" or columns[-1] != "valid":
        raise SessionFormatError(f"{data_path}:{header_line}: columns must start with time_s and end with valid")
    present = {}
    rest = columns[1:-1]
    pos = 0
    for name, cols in CHANNEL_GROUPS.items():
        if tuple(rest[pos:pos + len(cols)]) == cols:
            present[name] = pos + 1
            pos += len(cols)
    if pos != len(rest):
        raise SessionFormatError(f"{data_path}:{header_line}: unexpected columns {','.join(columns)}")

    width = len(columns)
    body = lines[header_line:]
    table = np.empty((len(body), width - 1), dtype=np.float64)
    valid = np.empty(len(body), dtype=bool)
    for i, line in enumerate(body):
        where = f"{data_path}:{header_line + i + 1}"
        fields = line.split(",")
        if len(fields) != width:
            raise SessionFormatError(f"{where}: expected {width} fields, got {len(fields)}")
        for j in range(width - 1):
            table[i, j] = _parse_float(fields[j], where)
        if fields[-1] not in ("0", "1"):
            raise SessionFormatError(f"{where}: valid must be 0 or 1, got {fields[-1]!r}")
        valid[i] = fields[-1] == "1"
    if len(body) == 0:
        raise SessionFormatError(f"{data_path}: no samples")

    times = table[:, 0]
    steps = np.diff(times)
    bad = np.flatnonzero(steps <= 0)
    if len(bad):
        raise SessionFormatError(f"{data_path}:{header_line + bad[0] + 2}: time not strictly increasing")
    expected = times[0] + np.arange(len(times)) / sample_rate
    off = np.flatnonzero(np.abs(times - expected) > TIME_TOL)
    if len(off):
        raise SessionFormatError(
            f"{data_path}:{header_line + off[0] + 1}: time {times[off[0]]!r} off the {sample_rate:g} Hz grid"
        )

    def block(name):
        if name not in present:
            return None
        j = present[name]
        k = len(CHANNEL_GROUPS[name])
        arr = table[:, j:j + k].copy()
        return arr[:, 0] if k == 1 else arr

    session = SessionData(
        agent_id=header["agent_id"],
        group_id=group_id,
        day_index=day_index,
        sample_rate=sample_rate,
        valid=valid,
        potential_mv=block("potential_mv"),
        accel_wrist=block("accel_wrist"),
        accel_calf=block("accel_calf"),
        labels=_read_labels(label_path),
        start_time=float(times[0]),
    )
    problems = session.problems()
    if problems:
        raise SessionFormatError(f"{data_path}: " + "; ".join(problems))
    return session


def find_sessions(root) -> list[Path]:
    return sorted(Path(root).glob(f"**/*{SESSION_SUFFIX}"))


def load_dataset(root) -> list[SessionData]:
    paths = find_sessions(root)
    if not paths:
        raise SessionFormatError(f"{root}: no *{SESSION_SUFFIX} files found")
    return [load_session(p) for p in paths]
