import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pilotwave.detectors import DetectorSpec, apply_detector
from pilotwave.dynamics import (PacketCurrent, RotatedBasis, VelocityUndefinedError,
                                approx_velocity, exact_velocity, local_currents,
                                spinless_overlap_velocity, velocity_info)
from pilotwave.scenarios import ScenarioSpec, split_state
from pilotwave.state import Branch, QuantumState, SpatialFactor, density, evaluate, kick

K = 2 * math.pi / 0.3
HM = 1 / K


def plane_pair(alpha, beta, spins=("none", "none"), kind="rect"):
    """Two full-overlap packets at t = 0; alpha moves at -u, beta at +u."""
    fa = SpatialFactor(kind, group_velocity=-1.0, carrier=-K)
    fb = SpatialFactor(kind, group_velocity=1.0, carrier=K)
    return QuantumState((Branch(alpha, (fa,), (spins[0],), "a"),
                         Branch(beta, (fb,), (spins[1],), "b")), 0.0, (HM,))


def test_single_packet_rides_at_group_velocity():
    s = split_state(ScenarioSpec(alpha2=1.0, beta2=0.0))
    for z in np.linspace(-0.49, 0.49, 9):
        assert exact_velocity(s, [z], 0) == pytest.approx(1.0, abs=1e-12)


def test_orthogonal_spin_overlap_velocity():
    s = split_state(ScenarioSpec(alpha2=0.4, beta2=0.6))
    assert exact_velocity(s, [0.1], 0) == pytest.approx(-0.2, abs=1e-12)


def test_same_spin_overlap_velocity_at_origin():
    expected = 0.2 / (1 + 2 * math.sqrt(6) / 5)
    s = plane_pair(math.sqrt(0.4), math.sqrt(0.6))
    assert exact_velocity(s, [0.0], 0) == pytest.approx(expected, abs=1e-12)
    assert spinless_overlap_velocity(math.sqrt(0.4), math.sqrt(0.6), 1.0, K, 0.0) == \
        pytest.approx(0.101021, abs=1e-6)


def test_velocity_at_node_is_undefined():
    s = plane_pair(math.sqrt(0.5), math.sqrt(0.5))
    # cos(2kz) = -1 makes the two equal plane waves cancel
    z = math.pi / (2 * K)
    with pytest.raises(VelocityUndefinedError):
        exact_velocity(s, [z], 0)
    with pytest.raises(VelocityUndefinedError):
        spinless_overlap_velocity(math.sqrt(0.5), math.sqrt(0.5), 1.0, K, z)


def test_edge_point_uses_interior_limit():
    s = split_state(ScenarioSpec(alpha2=0.4, beta2=0.6)).at(0.25)
    info = velocity_info(s, [0.25])
    assert info.on_edge
    assert info.velocity[0] == pytest.approx(-0.2, abs=1e-12)


def test_approx_velocity_examples():
    assert approx_velocity([PacketCurrent(0.5, 1.0), PacketCurrent(0.5, -1.0)]) == 0
    assert approx_velocity([PacketCurrent(0.3, 0.7), PacketCurrent(0.0, -1.0)]) == \
        pytest.approx(0.7)
    assert approx_velocity([PacketCurrent(0.4, 1.0), PacketCurrent(0.6, -1.0)]) == \
        pytest.approx(-0.2)
    with pytest.raises(VelocityUndefinedError):
        approx_velocity([PacketCurrent(0.0, 1.0)])
    with pytest.raises(ValueError):
        PacketCurrent(-0.1, 0.0)


def test_spinless_formula_limits():
    a = b = math.sqrt(0.5)
    assert spinless_overlap_velocity(a, b, 1.0, K, 0.123) == 0
    z = math.pi / (4 * K)  # cos(2kz) = 0
    assert spinless_overlap_velocity(math.sqrt(0.4), math.sqrt(0.6), 1.0, K, z) == \
        pytest.approx(0.2, abs=1e-12)


@pytest.mark.parametrize("phase", [0.0, 0.7, -2.1, math.pi / 2])
def test_spinless_formula_matches_exact_velocity(phase):
    alpha = math.sqrt(0.4)
    beta = math.sqrt(0.6) * complex(math.cos(phase), math.sin(phase))
    s = plane_pair(alpha, beta)
    for z in np.linspace(-0.45, 0.45, 41):
        assert exact_velocity(s, [z], 0) == pytest.approx(
            spinless_overlap_velocity(alpha, beta, 1.0, K, z), abs=1e-12)


def test_orthogonal_spins_exact_equals_weighted_on_random_configs():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        a2 = rng.uniform(0.01, 0.99)
        kind = rng.choice(["rect", "gauss"])
        s = plane_pair(math.sqrt(a2), math.sqrt(1 - a2) * np.exp(1j * rng.uniform(0, 6)),
                       ("up", "down"), kind)
        s = s.at(rng.uniform(0, 0.4))
        z = rng.uniform(-0.3, 0.3)
        v = exact_velocity(s, [z], 0)
        w = approx_velocity([PacketCurrent(c.density, c.velocity[0])
                             for c in local_currents(s, [z])])
        assert abs(v - w) <= 1e-12


def test_ring_detector_packet_rides_the_ring():
    spec = ScenarioSpec(alpha2=0.5, beta2=0.5)
    s = kick(split_state(spec, -4.0).at(-2.0), 0, [-spec.k, spec.k])
    det = DetectorSpec("ringVelocity")
    s = apply_detector(s, det)
    w = det.angular_velocity(spec.hbar_m)
    # upper arm is untouched (clockwise), lower arm was flipped
    assert exact_velocity(s, [1.7, 0.3], 1) == pytest.approx(-w, rel=1e-12)
    assert exact_velocity(s, [-1.7, 0.3], 1) == pytest.approx(w, rel=1e-12)
    assert exact_velocity(s, [-1.7, 0.3], 0) == pytest.approx(1.0, rel=1e-12)


def test_rotated_basis_decoupled_limit():
    rb = RotatedBasis(k=K, k_ring=0.0, u=1.0, omega=0.0, R=2.0)
    Z, Y = rb.forward(0.3, 0.1)
    assert Z == pytest.approx(0.3) and Y == pytest.approx(0.2)
    z, th = rb.inverse(Z, Y)
    assert z == pytest.approx(0.3) and th == pytest.approx(0.1)


def test_rotated_basis_amplitudes():
    k, kr = 2 * math.pi / 0.3, 2 * math.pi / 0.1
    rb = RotatedBasis(k=k, k_ring=kr, u=1.0, omega=kr / k, R=1.0)
    ab = math.sqrt(0.4 * 0.6)
    assert rb.oscillation_amplitude(math.sqrt(0.4), math.sqrt(0.6)) == \
        pytest.approx(ab / math.hypot(k, kr))
    zamp = rb.z_amplitude(math.sqrt(0.4), math.sqrt(0.6))
    assert zamp == pytest.approx(ab * k / (k * k + kr * kr))
    assert zamp < 0.15 * ab / k


def test_rotated_basis_rejects_degenerate_input():
    with pytest.raises(ValueError):
        RotatedBasis(k=0.0, k_ring=0.0, u=1.0, omega=1.0, R=1.0)
    with pytest.raises(ValueError):
        RotatedBasis(k=1.0, k_ring=1.0, u=1.0, omega=1.0, R=0.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.5, 40), st.floats(0.5, 40), st.floats(0.2, 3), st.floats(-5, 5),
       st.floats(-5, 5))
def test_rotated_basis_preserves_speed_for_equal_masses(k, kr, R, vz, vth):
    u = 1.0
    omega = u * kr / (k * R)   # omega R / k_ring = u / k
    rb = RotatedBasis(k=k, k_ring=kr, u=u, omega=omega, R=R)
    Z, Y = rb.forward(vz, vth)
    assert math.hypot(Z, Y) == pytest.approx(math.hypot(vz, R * vth), rel=1e-12)


@st.composite
def smooth_states(draw):
    n = draw(st.integers(1, 3))
    fs = st.builds(SpatialFactor, kind=st.just("gauss"), center0=st.floats(-0.5, 0.5),
                   group_velocity=st.floats(-1, 1), carrier=st.floats(-10, 10),
                   width=st.floats(0.6, 1.5), birth_time=st.floats(-2, 0),
                   phase_offset=st.floats(-3, 3))
    branches = [Branch(draw(st.complex_numbers(min_magnitude=0.2, max_magnitude=1)),
                       (draw(fs), draw(fs)), (draw(st.sampled_from(["up", "down"])),))
                for _ in range(n)]
    return QuantumState(tuple(branches), draw(st.floats(0, 1)), (0.2, 0.5))


@settings(max_examples=100, deadline=None)
@given(smooth_states(), st.floats(-0.8, 0.8), st.floats(-0.8, 0.8))
def test_analytic_gradient_matches_finite_differences(s, z0, z1):
    x = np.array([z0, z1])
    rho = density(s, x)
    if rho < 1e-6:
        return
    h = 1e-6
    for d in range(2):
        e = np.zeros(2)
        e[d] = h
        p, m, c = evaluate(s, x + e), evaluate(s, x - e), evaluate(s, x)
        cur = sum((np.conj(c[key]) * (p[key] - m[key]) / (2 * h)).imag for key in c)
        fd = s.hbar_over_m[d] * cur / rho
        v = exact_velocity(s, x, d)
        assert v == pytest.approx(fd, rel=1e-6, abs=1e-6 * max(1.0, abs(v)))
