"""Which-path detectors as impulsive branch transformations, and their readout.

Four detector kinds couple a neutron to the particle branch passing one
arm of the interferometer:

* ``bohmianPosition``: the neutron box is shifted by ``b``.
* ``spinFlip``: the neutron spin flips, its spatial state is untouched.
* ``phaseFlip``: the neutron sits in a two-box superposition and the box
  near the arm changes sign.
* ``ringVelocity``: the neutron circulates on a ring and reverses its sense.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import exact_velocity
from .state import QuantumState, SpatialFactor, attach_dof, attach_spin

DETECTOR_KINDS = ("bohmianPosition", "spinFlip", "phaseFlip", "ringVelocity")
ARMS = ("upper", "lower")
VERDICTS = ("particlePresent", "particleAbsent", "undetermined")
CHANNELS = {
    "bohmianPosition": "neutronPosition",
    "spinFlip": "neutronSpin",
    "phaseFlip": "neutronPhase",
    "ringVelocity": "neutronRotationSense",
}


class TemporalOrderError(ValueError):
    """The detector fired before the particle packets reached separate arms."""


@dataclass(frozen=True)
class DetectorSpec:
    """Detector placement and parameters (lengths in a, times in a/u).

    ``omega`` defaults to the value that gives the ring neutron the same
    mass scale as the particle, ``omega R = (hbar/m) k_ring``.
    """

    kind: str
    arm: str = "lower"
    interaction_time: float = -2.0
    b: float = 10.0
    R: float = 1.0
    k_ring: float = 2 * math.pi / 0.1
    omega: float | None = None
    mass_ratio: float = 1.0
    position0: float = 0.0

    def __post_init__(self):
        if self.kind not in DETECTOR_KINDS:
            raise ValueError(f"unknown detector kind {self.kind!r}")
        if self.arm not in ARMS:
            raise ValueError(f"unknown arm {self.arm!r}")
        if not self.b > 1.0:
            raise ValueError("shift b must exceed the packet width")
        if not (self.R > 0 and self.k_ring > 0 and self.mass_ratio > 0):
            raise ValueError("ring radius, ring wavenumber and mass ratio must be positive")

    @property
    def channel(self) -> str:
        return CHANNELS[self.kind]

    def neutron_hbar_m(self, particle_hbar_m: float) -> float:
        if self.omega is not None:
            return self.omega * self.R / self.k_ring
        return particle_hbar_m / self.mass_ratio

    def angular_velocity(self, particle_hbar_m: float) -> float:
        return self.neutron_hbar_m(particle_hbar_m) * self.k_ring / self.R


@dataclass(frozen=True)
class DetectorRecord:
    verdict: str
    channel: str
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")


def arm_of(state: QuantumState, branch: int, dof: int = 0) -> str:
    """Arm holding a branch: the upper arm has its packet above the axis."""
    c = state.branches[branch].factors[dof].center(state.time)
    return "upper" if c > 0 else "lower"


def _check_separated(state: QuantumState, dof: int) -> None:
    fs = [b.factors[dof] for b in state.branches]
    cs = [f.center(state.time) for f in fs]
    for f, c in zip(fs, cs):
        half = 0.5 * f.width if f.kind == "rect" else 0.0
        if abs(c) < half or c == 0:
            raise TemporalOrderError(
                f"packets have not reached separate arms at t={state.time:g}")


def apply_detector(state: QuantumState, det: DetectorSpec, dof: int = 0) -> QuantumState:
    """Couple a fresh neutron to the branches in ``det.arm``.

    The neutron becomes the last dof (or, for the spin detector, the last
    spin slot).  Only the phase detector changes the branch count.
    """
    if not math.isclose(state.time, det.interaction_time, abs_tol=1e-12):
        raise TemporalOrderError("state time differs from the detector interaction time")
    _check_separated(state, dof)
    hit = [arm_of(state, i, dof) == det.arm for i in range(len(state.branches))]
    hm_p = state.hbar_over_m[dof]
    nd = state.ndof

    if det.kind == "spinFlip":
        out = attach_spin(state, "up")
        bs = [replace(b, spins=b.spins[:-1] + ("down",)) if h else b
              for b, h in zip(out.branches, hit)]
        return out.with_branches(bs)

    if det.kind == "bohmianPosition":
        box = SpatialFactor("rect", width=1.0)
        out = attach_dof(state, [(1.0, box)], hm_p)
        bs = [_replace_factor(b, nd, box.shifted(det.b)) if h else b
              for b, h in zip(out.branches, hit)]
        return out.with_branches(bs)

    if det.kind == "phaseFlip":
        near = SpatialFactor("rect", width=1.0)
        far = near.shifted(det.b)
        s = 1 / math.sqrt(2)
        out = attach_dof(state, [(s, near), (s, far)], hm_p)
        bs = []
        for i, b in enumerate(out.branches):
            if hit[i // 2] and b.factors[nd].center0 == 0.0:
                b = replace(b, coefficient=-b.coefficient)
            bs.append(b)
        # the record sits in a relative phase; its packets must be kept
        return out.with_branches(bs, recombining=out.recombining | {nd})

    hm_n = det.neutron_hbar_m(hm_p)
    wR = hm_n * det.k_ring
    ring = SpatialFactor("ring", group_velocity=-wR, carrier=-det.k_ring, width=det.R)
    out = attach_dof(state, [(1.0, ring)], hm_n)
    flipped = replace(ring, group_velocity=wR, carrier=det.k_ring)
    bs = [_replace_factor(b, nd, flipped) if h else b for b, h in zip(out.branches, hit)]
    return out.with_branches(bs)


def _replace_factor(branch, d, factor):
    fs = list(branch.factors)
    fs[d] = factor
    return replace(branch, factors=tuple(fs))


def neutron_dof(state: QuantumState, det: DetectorSpec) -> int | None:
    """Index of the detector's neutron dof, or None if it carries no dof."""
    if det.kind == "spinFlip":
        return None
    kind = "ring" if det.kind == "ringVelocity" else "rect"
    d = state.ndof - 1
    if d < 1 or state.branches[0].factors[d].kind != kind:
        return None
    return d


def _lineage(state: QuantumState) -> str | None:
    labels = {b.label for b in state.branches}
    return labels.pop() if len(labels) == 1 else None


def read_record(state: QuantumState, det: DetectorSpec, config) -> DetectorRecord:
    """Verdict carried by the detector at ``config``.

    The position detector is readable from the neutron position alone.  The
    others are undetermined until pruning has left a single branch lineage,
    that is, until the particle's own packets no longer overlap.
    """
    x = np.asarray(config, dtype=float)
    ch = det.channel
    d = neutron_dof(state, det)
    if det.kind == "spinFlip":
        attached = state.nspin >= 2
        s = {b.spins[-1] for b in state.branches} if attached else set()
        if _lineage(state) is None or len(s) != 1:
            return DetectorRecord("undetermined", ch, {"spins": sorted(s)})
        spin = s.pop()
        return DetectorRecord("particlePresent" if spin == "down" else "particleAbsent",
                              ch, {"spin": spin})
    if d is None:
        return DetectorRecord("undetermined", ch, {"reason": "no interaction yet"})

    if det.kind == "bohmianPosition":
        zn = float(x[d])
        if abs(zn) <= 0.5:
            return DetectorRecord("particleAbsent", ch, {"position": zn})
        if abs(zn - det.b) <= 0.5:
            return DetectorRecord("particlePresent", ch, {"position": zn})
        return DetectorRecord("undetermined", ch, {"position": zn})

    if det.kind == "ringVelocity":
        w = exact_velocity(state, x, d)
        sense = "clockwise" if w < 0 else "counterclockwise"
        if _lineage(state) is None:
            return DetectorRecord("undetermined", ch, {"sense": sense, "angular_velocity": w})
        return DetectorRecord("particlePresent" if w > 0 else "particleAbsent", ch,
                              {"sense": sense, "angular_velocity": w})

    # phase detector: sign of near/far amplitudes within the surviving lineage
    if _lineage(state) is None:
        return DetectorRecord("undetermined", ch, {})
    t = state.time
    near = far = 0j
    for b in state.branches:
        f = b.factors[d]
        amp = b.coefficient * f.value(f.center(t), t, state.hbar_over_m[d])
        if abs(f.center0) < 0.5:
            near += amp
        else:
            far += amp
    if near == 0 or far == 0:
        return DetectorRecord("undetermined", ch, {})
    sign = float(np.sign((near / far).real))
    return DetectorRecord("particlePresent" if sign < 0 else "particleAbsent", ch,
                          {"relative_sign": sign})
