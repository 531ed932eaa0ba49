"""Body-capacitance front end and multi-agent session synthesis.

The front end holds the body surface near a rest potential. A change of the
body capacitance at constant charge moves the potential instantly, after
which it relaxes exponentially back to rest. Bodies in galvanic contact, or
strongly coupled through a carried metal piece, share charge and behave as
one larger capacitor.

Capacitances are in picofarads, potentials in volts; synthesized channels are
written in millivolts.
"""
from __future__ import annotations

import math
import sys
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import _kernels
from .ingest import LabelClass, LabelInterval, SessionData
from .scenario import ActivityScript, Segment

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

WALKING = frozenset({LabelClass.A1, LabelClass.A3, LabelClass.A4, LabelClass.A5, LabelClass.A10})
CARRYING = frozenset({LabelClass.A4, LabelClass.A5})
GRAVITY = np.array([0.0, 0.0, 1.0])


@dataclass
class BodyState:
    capacitance: float
    potential: float
    coupled_with: frozenset = frozenset()

    def __post_init__(self):
        if not self.capacitance > 0:
            raise ValueError(f"capacitance must be positive, got {self.capacitance}")
        self.coupled_with = frozenset(self.coupled_with)


def check_coupling(states: dict) -> None:
    """Raise if the coupled_with relation between named states is not symmetric."""
    for name, st in states.items():
        for other in st.coupled_with:
            if other not in states or name not in states[other].coupled_with:
                raise ValueError(f"asymmetric coupling between {name} and {other}")


@dataclass(frozen=True)
class SimConfig:
    """Simulator constants. All are stand-ins chosen to be physically plausible."""

    rest_potential_vs: float = 0.02
    relax_tau: float = 0.2
    base_capacitance: float = 100.0
    step_delta_c: float = 10.0
    load_delta_c: float = 100.0
    joint_extra_c: float = 50.0
    noise_std: float = 0.05
    sample_rate: float = 50.0
    seed: int = 0
    step_rate: float = 2.0
    accel_noise_std: float = 0.02

    def __post_init__(self):
        if not self.relax_tau > 0:
            raise ValueError("relax_tau must be > 0")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be > 0")
        if self.noise_std < 0 or self.accel_noise_std < 0:
            raise ValueError("noise levels must be >= 0")
        if not self.step_rate > 0:
            raise ValueError("step_rate must be > 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a non-negative 64-bit integer")
        if self.base_capacitance <= 0 or self.base_capacitance + min(self.load_delta_c, 0.0) <= 0:
            raise ValueError("base_capacitance (with any load) must stay positive")
        if self.base_capacitance + min(self.step_delta_c, 0.0) <= 0 or self.joint_extra_c < 0:
            raise ValueError("capacitance swings must keep the body positive")

    @classmethod
    def from_dict(cls, doc: dict) -> "SimConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise ValueError(f"unknown simulator keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "SimConfig":
        with open(path, "rb") as fh:
            return cls.from_dict(tomllib.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)


def charge_share(states) -> float:
    """Common potential of bodies that exchange charge until balanced."""
    states = list(states)
    if not states:
        raise ValueError("charge_share needs at least one body")
    total_c = 0.0
    total_q = 0.0
    for st in states:
        if not st.capacitance > 0:
            raise ValueError(f"capacitance must be positive, got {st.capacitance}")
        total_c += st.capacitance
        total_q += st.capacitance * st.potential
    return total_q / total_c


def capacitance_jump(potential: float, c_old: float, c_new: float) -> float:
    """Potential right after the capacitance changes at constant charge."""
    if not (c_old > 0 and c_new > 0):
        raise ValueError(f"capacitances must be positive, got {c_old} -> {c_new}")
    return potential * c_old / c_new


def relax(potential: float, config: SimConfig, dt: float) -> float:
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    vs = config.rest_potential_vs
    return vs + (potential - vs) * math.exp(-dt / config.relax_tau)


@dataclass
class SimTrace:
    """Ground-truth internals of one synthesized agent."""

    agent_id: str
    capacitance: np.ndarray
    effective_capacitance: np.ndarray
    cluster: np.ndarray
    potential: np.ndarray
    step_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


def _span(times, lo, hi):
    return int(np.searchsorted(times, lo, "left")), int(np.searchsorted(times, hi, "left"))


def _hann_bump(t, centre, width):
    x = (t - centre) / width
    return np.where(np.abs(x) < 0.5, np.cos(np.pi * x) ** 2, 0.0)


def _overlap(seg: Segment, script: ActivityScript, agent: str) -> tuple[float, float]:
    for o in script.segments[seg.partner]:
        if o.partner == agent and o.primitive is seg.primitive and o.overlaps(seg):
            return max(seg.start, o.start), min(seg.end, o.end)
    raise AssertionError("validated script lost its partner segment")


def synth_session(script: ActivityScript, config: SimConfig | None = None, return_traces: bool = False):
    """Synthesize one session per scripted agent.

    Returns a list of :class:`SessionData` in script agent order, plus a list
    of :class:`SimTrace` when ``return_traces`` is set.
    """
    config = config or SimConfig()
    script.validate()
    fs = config.sample_rate
    n = int(round(script.duration * fs))
    times = np.arange(n) / fs
    agents = script.agents
    index = {a: i for i, a in enumerate(agents)}
    n_agents = len(agents)
    seeds = np.random.SeedSequence([config.seed, script.day]).spawn(n_agents + 1)
    plan_rng = np.random.default_rng(seeds[-1])
    period = 1.0 / config.step_rate

    # gait phases are planned first so joint partners never step on the same sample
    phases = {}
    for a in agents:
        for seg in script.segments[a]:
            if seg.primitive not in WALKING:
                continue
            key = (a, seg.start)
            if seg.partner and index[seg.partner] < index[a]:
                partner_seg = next(
                    o for o in script.segments[seg.partner]
                    if o.partner == a and o.primitive is seg.primitive and o.overlaps(seg)
                )
                base = phases[(seg.partner, partner_seg.start)]
                # align to the same absolute clock, then offset by 20-80 % of a step
                shift = (seg.start - partner_seg.start) % period
                phases[key] = (base + shift + plan_rng.uniform(0.2, 0.8) * period) % period
            else:
                phases[key] = plan_rng.uniform(0, period)

    own_c = np.full((n_agents, n), float(config.base_capacitance))
    ceff_extra = np.zeros((n_agents, n))
    cluster = np.tile(np.arange(n_agents, dtype=np.int64)[:, None], (1, n))
    steps = [[] for _ in agents]
    wrist = np.zeros((n_agents, n, 3))
    calf = np.zeros((n_agents, n, 3))
    half_extra = config.joint_extra_c / 2.0

    def couple(a, b, k0, k1):
        if k1 <= k0:
            return
        g = min(index[a], index[b])
        for x in (a, b):
            cluster[index[x], k0:k1] = g
            ceff_extra[index[x], k0:k1] = half_extra

    for a in agents:
        i = index[a]
        rng = np.random.default_rng(seeds[i])
        for seg in script.segments[a]:
            k0, k1 = _span(times, seg.start, seg.end)
            if k1 <= k0:
                continue
            t = times[k0:k1]
            prim = seg.primitive
            mid = seg.start + (seg.end - seg.start) / 2
            amp = rng.uniform(0.85, 1.15)
            if prim in WALKING:
                phase = phases[(a, seg.start)]
                m = np.floor((t - seg.start + phase) / period).astype(np.int64)
                own_c[i, k0:k1] += config.step_delta_c * (m % 2)
                steps[i].extend((k0 + np.flatnonzero(np.diff(m) != 0) + 1).tolist())
                swing = 0.4 * amp * (0.5 if prim in CARRYING else 1.0)
                if prim is LabelClass.A1:
                    swing = 0.1 * amp
                w = 2 * np.pi * config.step_rate
                wrist[i, k0:k1, 0] += swing * np.sin(w / 2 * t + phase)
                wrist[i, k0:k1, 2] += 0.5 * swing * np.sin(w * t + phase)
                calf_amp = (0.5 if prim is LabelClass.A1 else 0.8) * amp
                calf[i, k0:k1, 2] += calf_amp * np.sin(w / 2 * t + phase)
                calf[i, k0:k1, 0] += 0.3 * calf_amp * np.sin(w * t + phase)
            if prim is LabelClass.A4:
                own_c[i, k0:k1] += config.load_delta_c
            elif prim in (LabelClass.A6, LabelClass.A7):
                touch = mid
                if seg.partner:
                    lo, hi = _overlap(seg, script, a)
                    touch = lo + (hi - lo) / 2
                    if index[seg.partner] > i:
                        if prim is LabelClass.A6:
                            couple(a, seg.partner, *_span(times, touch, hi))
                        else:
                            couple(a, seg.partner, *_span(times, lo, touch))
                else:
                    kt = _span(times, touch, touch)[0]
                    if prim is LabelClass.A6:
                        own_c[i, kt:k1] += config.load_delta_c
                    else:
                        own_c[i, k0:kt] += config.load_delta_c
                bump = _hann_bump(t, touch, 1.5) * amp
                wrist[i, k0:k1, 2] += 0.5 * bump
                wrist[i, k0:k1, 0] += 0.3 * bump * np.sin(2 * np.pi * (t - touch))
                calf[i, k0:k1, 2] += 0.15 * bump
            elif prim is LabelClass.A5 and index[seg.partner] > i:
                couple(a, seg.partner, *_span(times, *_overlap(seg, script, a)))
            elif prim is LabelClass.A8:
                wrist[i, k0:k1, 1] += 0.03 * amp * np.sin(2 * np.pi * 11.0 * t)
            elif prim is LabelClass.A9:
                wrist[i, k0:k1, 0] += 0.3 * amp * np.sin(2 * np.pi * 0.4 * t)
                wrist[i, k0:k1, 2] += 0.2 * amp * np.cos(2 * np.pi * 0.4 * t)

    for t_h, a, b in script.handshakes:
        k = _span(times, t_h, t_h)[0]
        if k < n and cluster[index[a], k] == index[a] and cluster[index[b], k] == index[b]:
            couple(a, b, k, k + 1)

    ceff = own_c + ceff_extra
    decay = math.exp(-1.0 / (fs * config.relax_tau))
    volts = _kernels.propagate_potential(
        ceff, cluster, config.rest_potential_vs, decay, config.rest_potential_vs
    )

    sessions, traces = [], []
    for a in agents:
        i = index[a]
        rng = np.random.default_rng(seeds[i].spawn(1)[0])
        pot = volts[i] * 1000.0
        if config.noise_std > 0:
            pot = pot + rng.normal(0.0, config.noise_std, n)
        aw = wrist[i] + GRAVITY
        ac = calf[i] + GRAVITY
        if config.accel_noise_std > 0:
            aw = aw + rng.normal(0.0, config.accel_noise_std, (n, 3))
            ac = ac + rng.normal(0.0, config.accel_noise_std, (n, 3))
        valid = np.ones(n, dtype=bool)
        for lo, hi in script.losses.get(a, []):
            k0, k1 = _span(times, lo, hi)
            valid[k0:k1] = False
        pot = np.where(valid, pot, 0.0)
        aw = np.where(valid[:, None], aw, 0.0)
        ac = np.where(valid[:, None], ac, 0.0)
        labels = [
            LabelInterval(s.start, s.end, s.primitive, s.partner is not None, s.partner)
            for s in script.segments[a]
        ]
        sessions.append(
            SessionData(
                agent_id=a,
                group_id=script.groups[a],
                day_index=script.day,
                sample_rate=fs,
                valid=valid,
                potential_mv=pot,
                accel_wrist=aw,
                accel_calf=ac,
                labels=labels,
            )
        )
        traces.append(
            SimTrace(
                agent_id=a,
                capacitance=own_c[i],
                effective_capacitance=ceff[i],
                cluster=cluster[i],
                potential=volts[i],
                step_indices=np.array(sorted(steps[i]), dtype=np.int64),
            )
        )
    return (sessions, traces) if return_traces else sessions


def step_amplitudes(potential, step_indices) -> np.ndarray:
    """Absolute potential change on each gait step sample."""
    idx = np.asarray(step_indices, dtype=np.int64)
    idx = idx[idx > 0]
    potential = np.asarray(potential)
    return np.abs(potential[idx] - potential[idx - 1])


def _primitive_steps(session: SessionData, trace: SimTrace, primitive: LabelClass) -> np.ndarray:
    times = session.times
    keep = [np.zeros(0, dtype=np.int64)]
    for iv in session.labels:
        if iv.cls is primitive:
            k0, k1 = _span(times, iv.start, iv.end)
            keep.append(trace.step_indices[(trace.step_indices >= k0) & (trace.step_indices < k1)])
    return np.concatenate(keep)


def mean_step_amplitude(session: SessionData, trace: SimTrace, primitive: LabelClass) -> float:
    """Mean per-step potential jump (mV) over the agent's segments of ``primitive``.

    Returns NaN when the agent never steps during such a segment.
    """
    idx = _primitive_steps(session, trace, primitive)
    if len(idx) == 0:
        return float("nan")
    return float(step_amplitudes(session.potential_mv, idx).mean())


def pooled_step_amplitude(sessions, traces, primitive: LabelClass) -> float:
    """Like :func:`mean_step_amplitude`, pooled over every agent's steps."""
    amps = [step_amplitudes(s.potential_mv, _primitive_steps(s, t, primitive)) for s, t in zip(sessions, traces)]
    amps = np.concatenate(amps) if amps else np.zeros(0)
    return float(amps.mean()) if len(amps) else float("nan")
