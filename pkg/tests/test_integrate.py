import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pilotwave.integrate import (Event, IntegratorControls, SameSpinError, Trajectory,
                                 catch_time, integrate, integrate_implicit,
                                 integrate_piecewise, overlap_constants, quantile,
                                 rk4_adaptive, rk4_ensemble, solve_implicit)
from pilotwave.scenarios import ScenarioSpec, epr_state, run_empty_wave, split_state
from pilotwave.state import Branch, QuantumState, SpatialFactor, kick

A, B = math.sqrt(0.4), math.sqrt(0.6)
K = 2 * math.pi / 0.3


def sg(alpha2=0.4, packet="rect"):
    return split_state(ScenarioSpec(alpha2=alpha2, beta2=1 - alpha2, packet=packet))


def spinless_pair(alpha=A, beta=B):
    fa = SpatialFactor("rect", group_velocity=-1.0, carrier=-K)
    fb = SpatialFactor("rect", group_velocity=1.0, carrier=K)
    return QuantumState((Branch(alpha, (fa,), ("none",), "a"),
                         Branch(beta, (fb,), ("none",), "b")), 0.0, (1 / K,))


# -- closed forms -----------------------------------------------------------

def test_catch_time_examples():
    assert catch_time(A, B, 0.2) == (pytest.approx(0.375, abs=1e-15), "upPacket")
    assert catch_time(1.0, 0.0, 0.1) == (0.0, "upPacket")
    t, who = catch_time(math.sqrt(0.5), math.sqrt(0.5), 0.25)
    assert t == pytest.approx(0.25) and who == "upPacket"
    # the separating position goes up
    assert catch_time(A, B, 0.1)[1] == "upPacket"
    assert catch_time(A, B, 0.0999)[1] == "downPacket"
    with pytest.raises(ValueError):
        catch_time(A, B, 0.6)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(-0.5, 0.5))
def test_capture_side_follows_weight_threshold(alpha2, z0):
    _, who = catch_time(math.sqrt(alpha2), math.sqrt(1 - alpha2), z0)
    threshold = 0.5 - alpha2
    if abs(z0 - threshold) > 1e-9:
        assert (who == "upPacket") == (z0 > threshold)


def test_quantiles():
    assert quantile("rect", 0.7) == pytest.approx(0.2)
    assert quantile("gauss", 0.7) == pytest.approx(0.37, abs=1e-3)
    assert quantile("rect", 0.5) == 0 and quantile("gauss", 0.5) == 0
    with pytest.raises(ValueError):
        quantile("rect", 1.0)


def test_solve_implicit_anchor_and_linear_limit():
    s = spinless_pair().at(-0.1)
    c = overlap_constants(s, (0, 1), -0.1, 0.05)
    z = solve_implicit(-0.1, c["alpha"], c["beta"], c["u"], c["k"], c["phi"], c["C1"])
    assert z == pytest.approx(0.05, abs=1e-12)
    assert solve_implicit(2.0, 1.0, 0.0, 1.0, K, 0.0, 0.3) == pytest.approx(-2.0 + 0.3)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(-3, 3), st.floats(-1, 1), st.floats(-1, 1),
       st.floats(1, 60))
def test_solve_implicit_residual(alpha2, phi, t, C1, k):
    a, b = math.sqrt(alpha2), math.sqrt(1 - alpha2) * complex(math.cos(phi), math.sin(phi))
    z = solve_implicit(t, a, b, 1.0, k, phi, C1)
    res = z - ((1 - 2 * alpha2) * t - abs(a * b) / k * math.sin(2 * k * z + phi) + C1)
    assert abs(res) < 1e-12


# -- piecewise --------------------------------------------------------------

def test_piecewise_sg_capture():
    tr = integrate_piecewise(sg(), [0.2], 2.0)
    (cap,) = tr.events_of("packetCapture")
    assert cap.time == pytest.approx(0.375, abs=1e-15)
    assert cap.detail["by"] == "up"
    assert tr.at(0.375) == pytest.approx(0.125, abs=1e-15)
    # rides a quarter width below the up packet centre
    assert tr.final[0] - 2.0 == pytest.approx(-0.25, abs=1e-14)
    assert tr.events_of("branchCollapse")[0].detail["pruned"] == ["down"]


def test_piecewise_empty_wave_exchange():
    tr = run_empty_wave(ScenarioSpec()).trajectory
    entry = tr.events_of("overlapEntry")[0]
    exit_ = tr.events_of("overlapExit")[-1]
    assert (entry.time, tr.at(entry.time)) == (pytest.approx(-0.375), pytest.approx(0.125))
    assert (exit_.time, tr.at(exit_.time)) == (pytest.approx(0.25), pytest.approx(0.25))
    assert tr.final[0] == pytest.approx(4.0, abs=1e-12)


def test_symmetric_epr_split_has_zero_overlap_velocity():
    spec = ScenarioSpec(alpha2=0.5, beta2=0.5)
    s = kick(epr_state(spec), 0, [spec.k, -spec.k])
    tr = integrate_piecewise(s, [0.2, -0.1], 1.0)
    assert tr.at(0.2) == pytest.approx(0.2, abs=1e-14)
    assert tr.events_of("packetCapture")[0].detail["by"] == "ud"
    # the top of the down packet reaches z = 0.2 at t = 0.3
    assert tr.events_of("packetCapture")[0].time == pytest.approx(0.3)
    assert tr.at(1.0) == pytest.approx(0.2 + 0.7)


def test_piecewise_refuses_same_spin_overlap():
    with pytest.raises(SameSpinError):
        integrate(spinless_pair(), [0.0], 1.0, IntegratorControls(method="piecewiseAnalytic"))


def test_empty_run_has_one_sample():
    tr = integrate(sg(), [0.2], 0.0)
    assert tr.times == [0.0]


# -- implicit and RK4 -------------------------------------------------------

def test_implicit_matches_rk4_on_plane_waves():
    s = spinless_pair().at(-0.5)
    ctl = IntegratorControls(method="rk4Adaptive", rel_tol=1e-10, abs_tol=1e-12)
    imp = integrate_implicit(s, [0.05], 0.5)
    rk = rk4_adaptive(s, [0.05], 0.5, ctl)
    common = sorted(set(imp.times) & set(rk.times))
    assert len(common) > 50
    assert np.max(np.abs(imp.at(common) - rk.at(common))) < 1e-6


def test_rk4_reproduces_piecewise_for_boxes():
    ctl = IntegratorControls(method="rk4Adaptive")
    rk = rk4_adaptive(sg(), [0.2], 2.0, ctl)
    ex = integrate_piecewise(sg(), [0.2], 2.0)
    assert rk.events_of("overlapExit")[0].time == pytest.approx(0.375, abs=1e-9)
    ts = np.linspace(0, 2, 41)
    assert np.max(np.abs(rk.at(ts) - ex.at(ts))) < 1e-7


def test_symmetric_gaussian_axis_is_invariant():
    tr = rk4_adaptive(sg(0.5, "gauss"), [0.0], 2.0,
                      IntegratorControls(method="rk4Adaptive", max_step=1e-2))
    assert np.max(np.abs(tr.z)) < 1e-8


def test_controls_are_validated():
    with pytest.raises(ValueError):
        IntegratorControls(method="euler")
    with pytest.raises(ValueError):
        IntegratorControls(rel_tol=0.0)
    with pytest.raises(ValueError):
        IntegratorControls(collapse_epsilon=-1.0)


def test_trajectory_times_must_increase():
    tr = Trajectory()
    tr.append(0.0, [0.0])
    tr.append(0.1, [0.1])
    with pytest.raises(ValueError):
        tr.append(0.05, [0.0])
    with pytest.raises(ValueError):
        Event(0.0, "teleport")


def test_trajectories_are_continuous():
    tr = run_empty_wave(ScenarioSpec(spin_mode="spinless")).trajectory
    t, z = tr.t, tr.z
    assert np.all(np.diff(t) > 0)
    # the spinless overlap speed peaks at 0.2 u / (1 - 2 |ab|)
    vmax = 0.2 / (1 - 2 * math.sqrt(0.24))
    assert np.all(np.abs(np.diff(z)) <= vmax * np.diff(t) + 1e-9)


@settings(max_examples=100, deadline=None)
@given(st.floats(-0.499, 0.499), st.floats(-0.499, 0.499))
def test_box_trajectories_never_cross(za, zb):
    if abs(za - zb) < 1e-9:
        return
    za, zb = sorted((za, zb))
    s = sg()
    ctl = IntegratorControls(sample_dt=0.05)
    a = integrate(s, [za], 2.0, ctl)
    b = integrate(s, [zb], 2.0, ctl)
    ts = np.linspace(0, 2, 81)
    assert np.all(a.at(ts) < b.at(ts))


def test_gaussian_ensemble_keeps_its_order():
    z0 = np.linspace(-1.5, 1.5, 101)
    zf = rk4_ensemble(sg(0.4, "gauss"), z0[None, :], 2.0,
                      IntegratorControls(max_step=1e-2))[0]
    assert np.all(np.diff(zf) > 0)
