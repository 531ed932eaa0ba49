import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from collabhar.ingest import LabelClass
from collabhar.preprocess import accel_norm
from collabhar.scenario import ActivityScript, ScriptError, Segment, random_script
from collabhar.simfield import (
    BodyState,
    SimConfig,
    capacitance_jump,
    charge_share,
    check_coupling,
    mean_step_amplitude,
    pooled_step_amplitude,
    relax,
    synth_session,
)

A = LabelClass
caps = st.floats(1.0, 1000.0)
volts = st.floats(-10.0, 10.0)


def states(pairs):
    return [BodyState(c, v) for c, v in pairs]


# charge_share

def test_charge_share_examples():
    assert charge_share(states([(100, 10), (100, 0)])) == pytest.approx(5.0)
    assert charge_share(states([(100, 3)])) == pytest.approx(3.0)
    assert charge_share(states([(200, 6), (100, 0)])) == pytest.approx(4.0)


def test_charge_share_empty():
    with pytest.raises(ValueError):
        charge_share([])


def test_body_state_rejects_nonpositive_capacitance():
    with pytest.raises(ValueError):
        BodyState(0.0, 1.0)


@given(st.lists(st.tuples(caps, volts), min_size=1, max_size=6))
def test_charge_conserved(pairs):
    before = sum(c * v for c, v in pairs)
    after = sum(c for c, _ in pairs) * charge_share(states(pairs))
    assert abs(after - before) <= 1e-9 * max(1.0, sum(abs(c * v) for c, v in pairs))


def test_coupling_must_be_symmetric():
    good = {"a": BodyState(100, 0, {"b"}), "b": BodyState(100, 0, {"a"})}
    check_coupling(good)
    bad = {"a": BodyState(100, 0, {"b"}), "b": BodyState(100, 0)}
    with pytest.raises(ValueError):
        check_coupling(bad)


# capacitance_jump

def test_capacitance_jump_examples():
    assert capacitance_jump(1.0, 100, 200) == pytest.approx(0.5)
    assert capacitance_jump(2.0, 150, 150) == 2.0
    assert capacitance_jump(1.0, 100, 250) == pytest.approx(0.4)


@pytest.mark.parametrize("c_old,c_new", [(0, 10), (10, 0), (-1, 10)])
def test_capacitance_jump_rejects_bad_capacitance(c_old, c_new):
    with pytest.raises(ValueError):
        capacitance_jump(1.0, c_old, c_new)


@given(volts, caps, caps)
def test_capacitance_jump_round_trip(v, c0, c1):
    back = capacitance_jump(capacitance_jump(v, c0, c1), c1, c0)
    assert abs(back - v) <= 1e-12 * max(abs(v), 1e-300)


# relax

def test_relax_examples():
    cfg = SimConfig(rest_potential_vs=1.0)
    assert abs(relax(0.0, cfg, 1e6) - 1.0) < 1e-9
    assert relax(0.5, SimConfig(rest_potential_vs=0.5), 3.7) == 0.5
    assert relax(0.0, cfg, cfg.relax_tau) == pytest.approx(1 - math.exp(-1), abs=1e-12)
    assert relax(0.123, cfg, 0.0) == 0.123


def test_relax_negative_dt():
    with pytest.raises(ValueError):
        relax(0.0, SimConfig(), -1e-3)


@given(volts, st.floats(-1.0, 1.0), st.floats(0.0, 100.0), st.floats(0.01, 5.0))
def test_relax_is_contraction(v, vs, dt, tau):
    cfg = SimConfig(rest_potential_vs=vs, relax_tau=tau)
    assert abs(relax(v, cfg, dt) - vs) <= abs(v - vs) + 1e-15


# config

@pytest.mark.parametrize(
    "kwargs",
    [{"relax_tau": 0}, {"sample_rate": 0}, {"noise_std": -1}, {"base_capacitance": 0},
     {"base_capacitance": 5, "step_delta_c": -10}, {"load_delta_c": -100}, {"seed": -1}, {"seed": 2**64}],
)
def test_sim_config_invariants(kwargs):
    with pytest.raises(ValueError):
        SimConfig(**kwargs)


def test_sim_config_unknown_key():
    with pytest.raises(ValueError, match="bogus"):
        SimConfig.from_dict({"bogus": 1})


def test_sim_config_round_trip():
    cfg = SimConfig(seed=99, noise_std=0.1)
    assert SimConfig.from_dict(cfg.to_dict()) == cfg


# synthesis

def one_agent(prim, duration=20.0):
    return ActivityScript(
        agents=["P1"], groups={"P1": 1}, segments={"P1": [Segment(0.0, duration, prim)]}, duration=duration
    )


def test_stand_still_is_rest_plus_noise():
    cfg = SimConfig()
    (s,) = synth_session(one_agent(A.A2), cfg)
    resid = s.potential_mv - cfg.rest_potential_vs * 1000.0
    assert abs(resid.mean()) < 4 * cfg.noise_std / math.sqrt(s.n_samples)
    assert resid.std() == pytest.approx(cfg.noise_std, rel=0.1)
    for acc in (s.accel_wrist, s.accel_calf):
        norm = accel_norm(acc)
        assert abs(norm.mean() - 1.0) < 0.01
        assert norm.std() < 3 * cfg.accel_noise_std


def test_stand_still_noise_free_is_exactly_rest():
    cfg = SimConfig(noise_std=0.0)
    (s,) = synth_session(one_agent(A.A2), cfg)
    np.testing.assert_allclose(s.potential_mv, cfg.rest_potential_vs * 1000.0, rtol=0, atol=1e-12)


def test_label_timeline_matches_script(demo_sessions):
    script = random_script(5, groups=(1,), duration=120.0)
    sessions = synth_session(script, SimConfig())
    for s in sessions:
        segs = script.segments[s.agent_id]
        assert [(iv.start, iv.end, iv.cls, iv.partner) for iv in s.labels] == [
            (g.start, g.end, g.primitive, g.partner) for g in segs
        ]
        assert s.n_samples == int(round(script.duration * s.sample_rate))
    assert len(demo_sessions) == 6


def test_losses_marked_invalid():
    script = one_agent(A.A3)
    script.losses = {"P1": [(5.0, 6.0)]}
    (s,) = synth_session(script, SimConfig())
    t = s.times
    assert not s.valid[(t >= 5.0) & (t < 6.0)].any()
    assert s.valid[(t < 5.0) | (t >= 6.0)].all()


def joint_vs_walker():
    segs = {
        "P1": [Segment(0.0, 30.0, A.A5, "P2")],
        "P2": [Segment(0.0, 30.0, A.A5, "P1")],
        "P3": [Segment(0.0, 30.0, A.A3)],
    }
    return ActivityScript(["P1", "P2", "P3"], {"P1": 1, "P2": 1, "P3": 1}, segs, 30.0)


def test_joint_carriers_step_smaller_than_walker():
    sessions, traces = synth_session(joint_vs_walker(), SimConfig(noise_std=0.0), return_traces=True)
    joint = [mean_step_amplitude(s, t, A.A5) for s, t in zip(sessions[:2], traces[:2])]
    walk = mean_step_amplitude(sessions[2], traces[2], A.A3)
    assert max(joint) < walk


def test_joint_carriers_share_potential_cluster():
    sessions, traces = synth_session(joint_vs_walker(), SimConfig(noise_std=0.0), return_traces=True)
    mid = sessions[0].n_samples // 2
    assert traces[0].cluster[mid] == traces[1].cluster[mid] != traces[2].cluster[mid]
    assert traces[0].potential[mid] == pytest.approx(traces[1].potential[mid], abs=1e-12)


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 10_000))
def test_amplitude_ordering(seed):
    script = random_script(seed, groups=(1, 2), duration=600.0)
    sessions, traces = synth_session(script, SimConfig(noise_std=0.0), return_traces=True)
    joint, alone, walk = (pooled_step_amplitude(sessions, traces, p) for p in (A.A5, A.A4, A.A3))
    assert joint < alone < walk


def test_deterministic():
    script = random_script(3, groups=(1,), duration=60.0)
    a = synth_session(script, SimConfig(seed=4))
    b = synth_session(script, SimConfig(seed=4))
    c = synth_session(script, SimConfig(seed=5))
    for x, y in zip(a, b):
        for name in ("potential_mv", "accel_wrist", "accel_calf", "valid"):
            assert getattr(x, name).tobytes() == getattr(y, name).tobytes()
    assert a[0].potential_mv.tobytes() != c[0].potential_mv.tobytes()


def test_days_differ_under_same_seed():
    s1 = random_script(3, groups=(1,), duration=60.0, day=1)
    s2 = random_script(3, groups=(1,), duration=60.0, day=1)
    s2.day = 2
    a = synth_session(s1, SimConfig())
    b = synth_session(s2, SimConfig())
    assert a[0].potential_mv.tobytes() != b[0].potential_mv.tobytes()


def test_invalid_script_lists_segments():
    bad = ActivityScript(
        agents=["P1", "P2"],
        groups={"P1": 1, "P2": 1},
        segments={"P1": [Segment(0.0, 5.0, A.A5, "P2"), Segment(4.0, 6.0, A.A3)], "P2": []},
        duration=10.0,
    )
    with pytest.raises(ScriptError) as info:
        synth_session(bad)
    text = str(info.value)
    assert "partner has no matching" in text and "overlap" in text
    assert len(info.value.problems) == 2
