"""End-to-end experiments: SG, EPR, empty-wave interferometer, GHZ counting.

Interferometer clock: the SG split happens at ``-2T``, the reverse double
kick (and any detector) at ``-T`` and the packets fully overlap at ``0``.
The upper arm carries the spin-up packet; after the kick it heads down to
detector A, while the spin-down packet heads up to detector B.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .detectors import DetectorRecord, DetectorSpec, apply_detector, neutron_dof, read_record
from .integrate import (Event, IntegratorControls, Trajectory, integrate, quantile,
                        rk4_ensemble)
from .state import (Branch, QuantumState, SpatialFactor, branch_amplitudes, density, kick,
                    prune_collapsed)

EXPERIMENTS = ("sg", "sgReversed", "epr", "emptyWave", "interferometerWithDetector", "ghz")
PACKETS = ("rect", "gauss")
SPIN_MODES = ("spinful", "spinless")
DESTINATIONS = ("detectorA", "detectorB", "upBeam", "downBeam")


@dataclass(frozen=True)
class ScenarioSpec:
    """Complete experiment description in units of a and a/u.

    ``z0`` fixes the initial position; when it is None the position is the
    ``quantile`` fraction of the initial packet.  ``phase`` is the phase of
    ``beta`` relative to ``alpha``.
    """

    experiment: str = "sg"
    alpha2: float = 0.4
    beta2: float = 0.6
    phase: float = 0.0
    z0: float | None = None
    quantile: float = 0.7
    packet: str = "rect"
    spin_mode: str = "spinful"
    detector: DetectorSpec | None = None
    a: float = 1.0
    u: float = 1.0
    k: float = 2 * math.pi / 0.3
    T: float = 2.0
    t_end: float | None = None
    controls: IntegratorControls = field(default_factory=IntegratorControls)
    seed: int = 0
    z2: float = 0.0
    measure_first: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.packet not in PACKETS:
            raise ValueError(f"unknown packet model {self.packet!r}")
        if self.spin_mode not in SPIN_MODES:
            raise ValueError(f"unknown spin mode {self.spin_mode!r}")
        if self.alpha2 < 0 or self.beta2 < 0 or abs(self.alpha2 + self.beta2 - 1) > 1e-12:
            raise ValueError("amplitudes must satisfy |alpha|^2 + |beta|^2 = 1")
        if not (self.a > 0 and self.u > 0 and self.k > 0 and self.T > 0):
            raise ValueError("a, u, k and T must be positive")
        if not 0 < self.quantile < 1:
            raise ValueError("quantile must lie in (0, 1)")
        if self.measure_first not in (1, 2):
            raise ValueError("measure_first must be 1 or 2")
        if self.experiment == "interferometerWithDetector" and self.detector is None:
            raise ValueError("interferometerWithDetector needs a detector")

    @property
    def alpha(self) -> complex:
        return complex(math.sqrt(self.alpha2))

    @property
    def beta(self) -> complex:
        return math.sqrt(self.beta2) * complex(math.cos(self.phase), math.sin(self.phase))

    @property
    def hbar_m(self) -> float:
        return self.u / self.k

    @property
    def initial_z(self) -> float:
        if self.z0 is not None:
            return float(self.z0)
        return quantile(self.packet, self.quantile, self.a)


@dataclass
class RunResult:
    trajectory: Trajectory
    final_destination: str
    records: list = field(default_factory=list)
    surreal: bool | str = "notApplicable"
    seed: int = 0
    sigma_z: int | None = None
    approx: Trajectory | None = None
    spec: ScenarioSpec | None = None
    outcomes: tuple | None = None


# -- state builders ---------------------------------------------------------

def _packet(spec: ScenarioSpec, t_split: float) -> SpatialFactor:
    return SpatialFactor(spec.packet, width=spec.a, birth_time=t_split)


def split_state(spec: ScenarioSpec, t_split: float = 0.0, reversed_device: bool = False,
                recombining=()) -> QuantumState:
    """Particle right after an SG kick at ``t_split``; spin up moves +u."""
    f = _packet(spec, t_split)
    s = QuantumState((Branch(spec.alpha, (f,), ("up",), "up"),
                      Branch(spec.beta, (f,), ("down",), "down")),
                     t_split, (spec.hbar_m,), recombining)
    sign = -1.0 if reversed_device else 1.0
    return kick(s, 0, [sign * spec.k, -sign * spec.k])


def _dominant(state: QuantumState, x) -> Branch:
    amps = np.abs(branch_amplitudes(state, np.asarray(x, float))[:, 0]) ** 2
    return state.branches[int(np.argmax(amps))]


# -- Stern-Gerlach ----------------------------------------------------------

def run_sg(spec: ScenarioSpec) -> RunResult:
    """Particle through one SG device; reports the beam and the sigma_z label."""
    if spec.experiment not in ("sg", "sgReversed"):
        raise ValueError("run_sg needs experiment sg or sgReversed")
    rev = spec.experiment == "sgReversed"
    state = split_state(spec, 0.0, rev)
    t_end = spec.t_end if spec.t_end is not None else spec.T
    traj = integrate(state, [spec.initial_z], t_end, spec.controls)
    br = _dominant(traj.final_state, traj.final)
    beam = "upBeam" if br.factors[0].group_velocity > 0 else "downBeam"
    return RunResult(traj, beam, seed=spec.seed, sigma_z=1 if br.spins[0] == "up" else -1,
                     spec=spec)


# -- EPR --------------------------------------------------------------------

def epr_state(spec: ScenarioSpec) -> QuantumState:
    """Two particles at rest in ``alpha |up,down> + beta |down,up>``."""
    f = _packet(spec, 0.0)
    return QuantumState((Branch(spec.alpha, (f, f), ("up", "down"), "ud"),
                         Branch(spec.beta, (f, f), ("down", "up"), "du")),
                        0.0, (spec.hbar_m, spec.hbar_m))


def _measure(state: QuantumState, x, dof: int, t_end: float, k: float, controls,
             traj: Trajectory):
    carriers = [k if b.spins[dof] == "up" else -k for b in state.branches]
    state = kick(state, dof, carriers)
    seg = integrate(state, x, t_end, controls)
    traj.extend(seg)
    return seg.final_state, seg.final


def run_epr(spec: ScenarioSpec, z1: float | None = None, z2: float | None = None,
            measure_first: int | None = None, full: bool = False):
    """Sequential SG measurements on both particles; returns the two outcomes.

    The first particle is measured at ``t = 0``, the second at ``t = T``,
    once the first has left its overlap and the conditional state of the
    second has collapsed.  With ``full`` a RunResult is returned instead.
    """
    z1 = spec.initial_z if z1 is None else z1
    z2 = spec.z2 if z2 is None else z2
    first = spec.measure_first if measure_first is None else measure_first
    t_end = spec.t_end if spec.t_end is not None else 2 * spec.T
    state = epr_state(spec)
    x = np.array([z1, z2], dtype=float)
    traj = Trajectory()
    order = (0, 1) if first == 1 else (1, 0)
    state, x = _measure(state, x, order[0], spec.T, spec.k, spec.controls, traj)
    state, x = _measure(state.at(spec.T), x, order[1], t_end, spec.k, spec.controls, traj)
    br = _dominant(state, x)
    outcomes = (br.spins[0], br.spins[1])
    if not full:
        return outcomes
    beam = "upBeam" if outcomes[first - 1] == "up" else "downBeam"
    return RunResult(traj, beam, seed=spec.seed, spec=spec, outcomes=outcomes,
                     sigma_z=1 if outcomes[0] == "up" else -1)


# -- interferometer ---------------------------------------------------------

def _interaction(spec: ScenarioSpec, state: QuantumState, x, detector: DetectorSpec | None,
                 decohere: bool):
    """Reverse kick at ``-T`` plus the detector coupling; no pruning."""
    t_kick = -spec.T
    state = kick(state.at(t_kick), 0, [-spec.k if b.label == "up" else spec.k
                                        for b in state.branches])
    state = state.with_branches(state.branches, recombining=frozenset())
    if spec.spin_mode == "spinless" and not decohere:
        # mirror flips equalise the particle spin of both arms
        state = state.with_branches([replace(b, spins=("none",) + b.spins[1:])
                                     for b in state.branches])
    x = np.asarray(x, dtype=float)
    detail = {"particle_in_arm": "upper" if x[0] > 0 else "lower"}
    if detector is not None:
        state = apply_detector(state, replace(detector, interaction_time=t_kick), 0)
        if neutron_dof(state, detector) is not None:
            x = np.append(x, detector.position0)
        detail.update(kind=detector.kind, arm=detector.arm)
    return state, x, detail


def _interferometer(spec: ScenarioSpec, detector: DetectorSpec | None, decohere: bool):
    t_split, t_kick = -2 * spec.T, -spec.T
    t_end = spec.t_end if spec.t_end is not None else 2 * spec.T
    state = split_state(spec, t_split, recombining={0})
    traj = integrate(state, [spec.initial_z], t_kick, spec.controls)
    state, x, detail = _interaction(spec, traj.final_state, traj.final, detector, decohere)
    state, _ = prune_collapsed(state, x, spec.controls.collapse_epsilon)
    seg = integrate(state, x, t_end, spec.controls)
    seg.events.insert(0, Event(t_kick, "detectorInteraction", detail))
    traj.extend(seg)
    return traj


def state_at(spec: ScenarioSpec, t: float, decohere: bool = False) -> QuantumState:
    """Unpruned wave function of a single-particle run at time ``t``."""
    if spec.experiment in ("sg", "sgReversed"):
        return split_state(spec, 0.0, spec.experiment == "sgReversed").at(t)
    if spec.experiment not in ("emptyWave", "interferometerWithDetector"):
        raise ValueError(f"experiment {spec.experiment!r} has no single-particle wave")
    state = split_state(spec, -2 * spec.T, recombining={0})
    if t < -spec.T:
        return state.at(t)
    det = spec.detector if spec.experiment == "interferometerWithDetector" else None
    state, _, _ = _interaction(spec, state, [spec.initial_z], det, decohere)
    return state.at(t)


def _destination(traj: Trajectory) -> str:
    br = _dominant(traj.final_state, traj.final)
    return "detectorA" if br.factors[0].group_velocity < 0 else "detectorB"


def interaction_event(traj: Trajectory) -> Event | None:
    ev = traj.events_of("detectorInteraction")
    return ev[0] if ev else None


def classify_surreal(traj: Trajectory, records, det: DetectorSpec | None):
    """True when the record contradicts the arm the trajectory actually took."""
    if det is None or not records:
        return "notApplicable"
    ev = interaction_event(traj)
    if ev is None:
        raise ValueError("trajectory has no detector interaction")
    entered = ev.detail["particle_in_arm"] == det.arm
    rec = records[0]
    if rec.verdict == "undetermined":
        raise ValueError("cannot classify an undetermined record")
    present = rec.verdict == "particlePresent"
    return present != entered


def run_interferometer(spec: ScenarioSpec, with_approx: bool = False) -> RunResult:
    """Two-arm interferometer with a which-path detector on one arm.

    With ``with_approx`` the same run is repeated with the two lineages
    made orthogonal, which is the weighted-velocity (decohered) trajectory.
    """
    det = spec.detector
    traj = _interferometer(spec, det, decohere=False)
    rec = read_record(traj.final_state, det, traj.final) if det is not None else None
    records = [rec] if rec is not None else []
    surreal = classify_surreal(traj, records, det) if det is not None else "notApplicable"
    approx = _interferometer(spec, det, decohere=True) if with_approx else None
    return RunResult(traj, _destination(traj), records, surreal, spec.seed, approx=approx,
                     spec=spec)


def run_empty_wave(spec: ScenarioSpec, with_approx: bool = False) -> RunResult:
    """Packet exchange in the overlap of the two arms, without any detector."""
    traj = _interferometer(spec, None, decohere=False)
    approx = _interferometer(spec, None, decohere=True) if with_approx else None
    return RunResult(traj, _destination(traj), [], "notApplicable", spec.seed,
                     approx=approx, spec=spec)


def run(spec: ScenarioSpec, with_approx: bool = False) -> RunResult:
    """Dispatch on ``spec.experiment`` (GHZ has its own entry point)."""
    if spec.experiment in ("sg", "sgReversed"):
        return run_sg(spec)
    if spec.experiment == "epr":
        return run_epr(spec, full=True)
    if spec.experiment == "emptyWave":
        return run_empty_wave(spec, with_approx)
    if spec.experiment == "interferometerWithDetector":
        return run_interferometer(spec, with_approx)
    raise ValueError(f"experiment {spec.experiment!r} has no trajectory run")


# -- GHZ --------------------------------------------------------------------

# (indices into (s1x, s2x, s3x, s1y, s2y, s3y), required product)
GHZ_EQUATIONS = (((0, 1, 2), -1), ((0, 4, 5), 1), ((3, 1, 5), 1), ((3, 4, 2), 1))


@dataclass(frozen=True)
class GHZProof:
    table: tuple            # (assignment, per-equation satisfied flags)
    n_satisfying: int
    lhs_product: int        # product of all left sides, always +1
    rhs_product: int        # product of the right sides
    relaxed_count: int      # solutions with the first right side set to +1


def _count(equations, assignments) -> int:
    return sum(all(math.prod(s[i] for i in idx) == r for idx, r in equations)
               for s in assignments)


def ghz_check() -> GHZProof:
    """Enumerate all 64 local assignments against the four GHZ constraints."""
    assignments = list(itertools.product((1, -1), repeat=6))
    table = tuple((s, tuple(math.prod(s[i] for i in idx) == r for idx, r in GHZ_EQUATIONS))
                  for s in assignments)
    lhs = {math.prod(math.prod(s[i] for i in idx) for idx, _ in GHZ_EQUATIONS)
           for s in assignments}
    relaxed = (((0, 1, 2), 1),) + GHZ_EQUATIONS[1:]
    return GHZProof(table, sum(all(f) for _, f in table), lhs.pop() if len(lhs) == 1 else 0,
                    math.prod(r for _, r in GHZ_EQUATIONS), _count(relaxed, assignments))


# -- ensembles --------------------------------------------------------------

def _cdf_grid(state: QuantumState, n: int = 20001):
    """Nodes and CDF values; density is taken constant on each cell.

    Box edges are grid nodes, so box densities are sampled exactly.
    """
    fs = [b.factors[0] for b in state.branches]
    t, hm = state.time, state.hbar_over_m[0]
    lo = min(f.center(t) - 6 * f.effective_width(t, hm) for f in fs)
    hi = max(f.center(t) + 6 * f.effective_width(t, hm) for f in fs)
    edges = [f.center(t) + s * 0.5 * f.width for f in fs if f.kind == "rect" for s in (-1, 1)]
    z = np.unique(np.concatenate([np.linspace(lo, hi, n), edges]))
    mid = 0.5 * (z[1:] + z[:-1])
    rho = density(state, mid[None, :])
    cdf = np.concatenate([[0.0], np.cumsum(rho * np.diff(z))])
    return z, cdf / cdf[-1]


def sample_positions(state: QuantumState, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` one-dof positions from ``|psi|^2`` by inverse transform."""
    z, cdf = _cdf_grid(state)
    return np.interp(rng.random(n), cdf, z)


def state_cdf(state: QuantumState):
    z, cdf = _cdf_grid(state)
    return lambda x: np.interp(x, z, cdf)


@dataclass
class EnsembleResult:
    initial: np.ndarray
    final: np.ndarray
    state: QuantumState
    seed: int


def run_ensemble(spec: ScenarioSpec, samples: int, seed: int | None = None,
                 t_end: float | None = None) -> EnsembleResult:
    """Equilibrium ensemble through the SG device, sampled with a seeded RNG.

    Gaussian ensembles share one RK4 step sequence; box ensembles use the
    exact piecewise path per sample.
    """
    seed = spec.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    state = split_state(spec, 0.0, spec.experiment == "sgReversed")
    x0 = sample_positions(state, samples, rng)
    t_end = spec.t_end if t_end is None and spec.t_end is not None else (t_end or spec.T)
    if spec.packet == "rect":
        # box fields are discontinuous; each sample follows its exact path
        ctl = replace(spec.controls, sample_dt=max(t_end - state.time, 1e-3))
        xf = np.array([integrate(state, [z], t_end, ctl).final[0] for z in x0])
    else:
        xf = rk4_ensemble(state, x0[None, :], t_end, spec.controls)[0]
    return EnsembleResult(x0, xf, state.at(t_end), seed)
