"""Activity scripts: what every agent does when, read from and written to TOML.

Script file schema (TOML)::

    day = 1                 # day index written into every session
    duration_s = 600.0      # session length in seconds

    [[agents]]
    id = "G1P1"
    group = 1
    segments = [            # [start_s, end_s, primitive] or [..., partner]
        [0.0, 10.0, "A1"],
        [10.0, 31.5, "A3"],
        [31.5, 36.0, "A6", "G1P2"],
    ]
    loss = [[120.0, 122.5]] # optional data-loss intervals

    [[handshakes]]          # optional one-sample coupling events
    t = 200.0
    agents = ["G1P1", "G1P2"]

Time not covered by a segment is unlabeled; the agent stands still there.
"""
from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ingest import JOINT_CAPABLE, LabelClass

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ScriptError(ValueError):
    """Invalid activity script; ``problems`` lists every offending item."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid activity script:\n  " + "\n  ".join(self.problems))


@dataclass(frozen=True)
class Segment:
    start: float
    end: float
    primitive: LabelClass
    partner: str | None = None

    def overlaps(self, other: "Segment") -> bool:
        return self.start < other.end and other.start < self.end

    def describe(self) -> str:
        tag = f" with {self.partner}" if self.partner else ""
        return f"[{self.start:g}, {self.end:g}) {self.primitive.value}{tag}"


@dataclass
class ActivityScript:
    agents: list[str]
    groups: dict[str, int]
    segments: dict[str, list[Segment]]
    duration: float
    day: int = 1
    losses: dict[str, list[tuple[float, float]]] = field(default_factory=dict)
    handshakes: list[tuple[float, str, str]] = field(default_factory=list)

    def problems(self) -> list[str]:
        out = []
        if not self.duration > 0:
            out.append(f"duration_s must be positive, got {self.duration}")
        if self.day < 1:
            out.append(f"day must be >= 1, got {self.day}")
        if len(set(self.agents)) != len(self.agents):
            out.append("duplicate agent ids")
        known = set(self.agents)
        for agent in self.agents:
            if agent not in self.groups:
                out.append(f"{agent}: no group")
            segs = self.segments.get(agent, [])
            for seg in segs:
                where = f"{agent} {seg.describe()}"
                if not seg.start < seg.end:
                    out.append(f"{where}: start must precede end")
                if seg.start < 0 or seg.end > self.duration + 1e-9:
                    out.append(f"{where}: outside [0, {self.duration:g}]")
                if seg.primitive.is_sentinel:
                    out.append(f"{where}: sentinel classes cannot be scripted")
                if seg.partner is None:
                    if seg.primitive is LabelClass.A5:
                        out.append(f"{where}: A5 needs a partner")
                    continue
                if seg.primitive not in JOINT_CAPABLE:
                    out.append(f"{where}: only A5/A6/A7 can be joint")
                elif seg.partner == agent or seg.partner not in known:
                    out.append(f"{where}: unknown partner")
                elif self.groups.get(seg.partner) != self.groups.get(agent):
                    out.append(f"{where}: partner in another group")
                elif not any(
                    o.primitive is seg.primitive and o.partner == agent and o.overlaps(seg)
                    for o in self.segments.get(seg.partner, [])
                ):
                    out.append(f"{where}: partner has no matching overlapping segment")
            for a, b in zip(segs, segs[1:]):
                if b.start < a.end:
                    out.append(f"{agent}: segments {a.describe()} and {b.describe()} overlap or are out of order")
            for lo, hi in self.losses.get(agent, []):
                if not (0 <= lo < hi <= self.duration + 1e-9):
                    out.append(f"{agent}: bad loss interval [{lo:g}, {hi:g})")
        for extra in set(self.segments) - known:
            out.append(f"segments for undeclared agent {extra}")
        for t, a, b in self.handshakes:
            if a not in known or b not in known or a == b:
                out.append(f"handshake at {t:g}: needs two distinct declared agents")
            elif self.groups[a] != self.groups[b]:
                out.append(f"handshake at {t:g}: agents in different groups")
            if not 0 <= t < self.duration:
                out.append(f"handshake at {t:g}: outside session")
        return out

    def validate(self) -> "ActivityScript":
        problems = self.problems()
        if problems:
            raise ScriptError(problems)
        return self


def script_from_dict(doc: dict) -> ActivityScript:
    problems = []
    allowed = {"day", "duration_s", "agents", "handshakes"}
    for key in set(doc) - allowed:
        problems.append(f"unknown top-level key {key!r}")
    agents, groups, segments, losses = [], {}, {}, {}
    for i, entry in enumerate(doc.get("agents", [])):
        unknown = set(entry) - {"id", "group", "segments", "loss"}
        if unknown:
            problems.append(f"agents[{i}]: unknown keys {sorted(unknown)}")
        if "id" not in entry or "group" not in entry:
            problems.append(f"agents[{i}]: 'id' and 'group' are required")
            continue
        aid = str(entry["id"])
        agents.append(aid)
        groups[aid] = int(entry["group"])
        segs = []
        for j, row in enumerate(entry.get("segments", [])):
            if len(row) not in (3, 4):
                problems.append(f"{aid} segment {j}: expected [start, end, primitive(, partner)]")
                continue
            try:
                prim = LabelClass(row[2])
            except ValueError:
                problems.append(f"{aid} segment {j}: unknown primitive {row[2]!r}")
                continue
            segs.append(Segment(float(row[0]), float(row[1]), prim, str(row[3]) if len(row) == 4 else None))
        segments[aid] = segs
        losses[aid] = [(float(lo), float(hi)) for lo, hi in entry.get("loss", [])]
    if not agents:
        problems.append("script declares no agents")
    handshakes = []
    for i, hs in enumerate(doc.get("handshakes", [])):
        pair = hs.get("agents", [])
        if "t" not in hs or len(pair) != 2:
            problems.append(f"handshakes[{i}]: needs 't' and two 'agents'")
            continue
        handshakes.append((float(hs["t"]), str(pair[0]), str(pair[1])))
    if "duration_s" not in doc:
        problems.append("'duration_s' is required")
    if problems:
        raise ScriptError(problems)
    script = ActivityScript(
        agents=agents,
        groups=groups,
        segments=segments,
        duration=float(doc["duration_s"]),
        day=int(doc.get("day", 1)),
        losses=losses,
        handshakes=handshakes,
    )
    return script.validate()


def script_to_dict(script: ActivityScript) -> dict:
    agents = []
    for aid in script.agents:
        entry = {
            "id": aid,
            "group": script.groups[aid],
            "segments": [
                [s.start, s.end, s.primitive.value] + ([s.partner] if s.partner else [])
                for s in script.segments.get(aid, [])
            ],
        }
        if script.losses.get(aid):
            entry["loss"] = [[lo, hi] for lo, hi in script.losses[aid]]
        agents.append(entry)
    doc = {"day": script.day, "duration_s": script.duration, "agents": agents}
    if script.handshakes:
        doc["handshakes"] = [{"t": t, "agents": [a, b]} for t, a, b in script.handshakes]
    return doc


def load_script(path) -> ActivityScript:
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ScriptError([f"{path}: {exc}"]) from None
    return script_from_dict(doc)


def _toml_value(v) -> str:
    if isinstance(v, str):
        return json.dumps(v)
    return repr(float(v)) if isinstance(v, float) else str(v)


def dumps_script(script: ActivityScript) -> str:
    """TOML text with one segment per line (round-trips through load_script)."""
    doc = script_to_dict(script)
    lines = [f"day = {doc['day']}", f"duration_s = {_toml_value(doc['duration_s'])}"]
    for entry in doc["agents"]:
        lines += ["", "[[agents]]", f"id = {_toml_value(entry['id'])}", f"group = {entry['group']}", "segments = ["]
        for row in entry["segments"]:
            lines.append("    [" + ", ".join(_toml_value(v) for v in row) + "],")
        lines.append("]")
        if entry.get("loss"):
            lines.append("loss = [" + ", ".join(f"[{_toml_value(lo)}, {_toml_value(hi)}]" for lo, hi in entry["loss"]) + "]")
    for hs in doc.get("handshakes", []):
        lines += ["", "[[handshakes]]", f"t = {_toml_value(hs['t'])}", "agents = [" + ", ".join(_toml_value(a) for a in hs["agents"]) + "]"]
    return "\n".join(lines) + "\n"


def save_script(script: ActivityScript, path) -> None:
    Path(path).write_text(dumps_script(script), encoding="utf-8")


# ---------------------------------------------------------------------------
# Scenario generation: an assemble/disassemble work day in blocks.

A = LabelClass


def _r(x: float) -> float:
    return round(float(x), 2)


class _Timeline:
    def __init__(self, agents):
        self.segs = {a: [] for a in agents}
        self.t = {a: 0.0 for a in agents}

    def add(self, agent, dur, prim, partner=None):
        start = self.t[agent]
        end = _r(start + dur)
        self.segs[agent].append(Segment(_r(start), end, prim, partner))
        self.t[agent] = end

    def gap(self, agent, dur):
        self.t[agent] = _r(self.t[agent] + dur)

    def pad_to(self, agent, t_end):
        if t_end - self.t[agent] >= 0.5:
            self.add(agent, t_end - self.t[agent], A.A2)
        self.t[agent] = t_end


def _carry_cycle(rng, tl, agents, partner_of=None, jitter=0.0):
    # walk to the piece, lift, carry, drop; joint when partner_of is given
    walk = rng.uniform(8, 20)
    lift = rng.uniform(4, 7)
    carry = rng.uniform(15, 35)
    drop = rng.uniform(4, 7)
    for a in agents:
        p = partner_of[a] if partner_of else None
        j = rng.uniform(-jitter, jitter) if jitter else 0.0
        tl.add(a, walk + j, A.A3)
        tl.add(a, lift, A.A6, p)
        tl.add(a, carry, A.A5 if p else A.A4, p)
        tl.add(a, drop, A.A7, p)


def _idle_cycle(rng, tl, agent, length):
    end = tl.t[agent] + length
    while end - tl.t[agent] > 3:
        prim = rng.choice([A.A2, A.A8, A.A9, A.A3], p=[0.35, 0.3, 0.15, 0.2])
        lo, hi = {A.A2: (8, 30), A.A8: (10, 30), A.A9: (5, 12), A.A3: (8, 20)}[prim]
        tl.add(agent, min(rng.uniform(lo, hi), end - tl.t[agent]), prim)
    tl.pad_to(agent, _r(end))


def _interlude(rng, tl, agent):
    roll = rng.random()
    if roll < 0.08:
        tl.add(agent, rng.uniform(5, 15), A.A10)
    elif roll < 0.14:
        tl.gap(agent, rng.uniform(3, 8))


def random_script(
    seed: int,
    groups=(1, 2, 3, 4),
    agents_per_group: int = 3,
    duration: float = 600.0,
    day: int = 1,
) -> ActivityScript:
    """Generate a plausible collaborative work session for several groups.

    Each group works in blocks: a pair carries a heavy piece jointly while the
    remaining agent works alone, everybody carries light pieces in parallel,
    or the group rests, screws and drinks. Sessions start with synchronisation
    steps and contain occasional out-of-camera spells, unlabeled gaps, data
    loss and handshakes.
    """
    rng = np.random.default_rng(seed)
    all_agents, groups_of, segments, losses, handshakes = [], {}, {}, {}, []
    for g in groups:
        members = [f"G{g}P{i + 1}" for i in range(agents_per_group)]
        tl = _Timeline(members)
        sync = rng.uniform(8, 12)
        for a in members:
            tl.add(a, sync, A.A1)
        while min(tl.t.values()) < duration:
            block_start = max(tl.t.values())
            for a in members:
                tl.pad_to(a, block_start)
                _interlude(rng, tl, a)
            block_start = max(tl.t.values())
            for a in members:
                tl.pad_to(a, block_start)
            kind = rng.choice(["joint", "parallel", "rest"], p=[0.45, 0.3, 0.25])
            if kind == "joint" and len(members) >= 2:
                pair = sorted(rng.choice(members, size=2, replace=False).tolist())
                _carry_cycle(rng, tl, pair, partner_of={pair[0]: pair[1], pair[1]: pair[0]})
                others = [a for a in members if a not in pair]
                for a in others:
                    if rng.random() < 0.5:
                        _carry_cycle(rng, tl, [a])
                    else:
                        _idle_cycle(rng, tl, a, tl.t[pair[0]] - tl.t[a])
            elif kind == "parallel":
                _carry_cycle(rng, tl, members, jitter=1.0)
            else:
                length = rng.uniform(30, 70)
                for a in members:
                    _idle_cycle(rng, tl, a, length)
                if len(members) >= 2 and rng.random() < 0.5:
                    a, b = sorted(rng.choice(members, size=2, replace=False).tolist())
                    handshakes.append((_r(block_start + rng.uniform(2, length - 2)), a, b))
        for a in members:
            segs = []
            for s in tl.segs[a]:
                if s.start >= duration - 0.5:
                    continue
                s = Segment(s.start, min(s.end, duration), s.primitive, s.partner)
                prev = segs[-1] if segs else None
                if prev and s.partner is None and prev.partner is None and prev.primitive is s.primitive and prev.end == s.start:
                    segs[-1] = Segment(prev.start, s.end, s.primitive)
                else:
                    segs.append(s)
            segments[a] = segs
            n_loss = rng.integers(0, 3)
            spans = []
            for _ in range(n_loss):
                lo = _r(rng.uniform(20, duration - 10))
                spans.append((lo, _r(lo + rng.uniform(1, 4))))
            spans.sort()
            merged = []
            for lo, hi in spans:
                if merged and lo <= merged[-1][1]:
                    merged[-1] = (merged[-1][0], max(hi, merged[-1][1]))
                else:
                    merged.append((lo, hi))
            losses[a] = merged
            all_agents.append(a)
            groups_of[a] = g
    _fix_truncated_partners(segments)
    handshakes = [h for h in handshakes if h[0] < duration]
    return ActivityScript(
        agents=all_agents,
        groups=groups_of,
        segments=segments,
        duration=float(duration),
        day=day,
        losses=losses,
        handshakes=sorted(handshakes),
    ).validate()


def _fix_truncated_partners(segments):
    # truncation at the session end can drop one side of a joint segment
    for agent, segs in segments.items():
        kept = []
        for s in segs:
            if s.partner and not any(
                o.partner == agent and o.primitive is s.primitive and o.overlaps(s)
                for o in segments.get(s.partner, [])
            ):
                s = Segment(s.start, s.end, A.A4 if s.primitive is A.A5 else s.primitive, None)
            kept.append(s)
        segments[agent] = kept
