"""Trajectory integration: piecewise-analytic, implicit-root and adaptive RK4."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfinv

from .dynamics import NODE_DENSITY, velocity_field
from .state import (GAUSS_REACH, branch_amplitudes, NullSupportError, QuantumState, SpatialFactor,
                    StructureError, prune_collapsed, support_mask)

EVENT_KINDS = ("overlapEntry", "overlapExit", "packetCapture", "branchCollapse",
               "detectorInteraction")
METHODS = ("auto", "piecewiseAnalytic", "implicitRoot", "rk4Adaptive")


class NodeCollisionError(RuntimeError):
    """The trajectory ran into a density node."""


class StepUnderflowError(RuntimeError):
    """Adaptive step size fell below the resolvable minimum."""


class SameSpinError(ValueError):
    """Interfering branches where only orthogonal-spin overlaps are supported."""


@dataclass(frozen=True)
class Event:
    time: float
    kind: str
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "time", float(self.time))
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")


@dataclass(frozen=True)
class IntegratorControls:
    method: str = "auto"
    max_step: float = 1e-3
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    collapse_epsilon: float = 1e-12
    sample_dt: float = 1e-2
    event_resolution: float = 1e-10

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown integration method {self.method!r}")
        for name in ("max_step", "rel_tol", "abs_tol", "sample_dt", "event_resolution"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.collapse_epsilon < 0:
            raise ValueError("collapse_epsilon must be non-negative")


@dataclass
class Trajectory:
    """Time-ordered configurations plus annotated events.

    Configurations may grow when a detector dof joins mid-run; ``array``
    pads missing coordinates with NaN.
    """

    times: list = field(default_factory=list)
    positions: list = field(default_factory=list)
    events: list = field(default_factory=list)
    weights: list = field(default_factory=list)
    final_state: QuantumState | None = None

    def append(self, t: float, x, state: QuantumState | None = None) -> None:
        x = np.array(x, dtype=float)
        w = lineage_weights(state.at(t), x) if state is not None else {}
        if self.times and t <= self.times[-1]:
            if t == self.times[-1]:
                self.positions[-1] = x
                self.weights[-1] = w
                return
            raise ValueError("trajectory times must increase")
        self.times.append(float(t))
        self.positions.append(x)
        self.weights.append(w)

    def extend(self, other: Trajectory) -> None:
        for t, x, w in zip(other.times, other.positions, other.weights):
            self.append(t, x)
            self.weights[-1] = w
        self.events.extend(other.events)
        self.final_state = other.final_state

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.times)

    def array(self) -> np.ndarray:
        nd = max(len(p) for p in self.positions)
        out = np.full((len(self.positions), nd), np.nan)
        for i, p in enumerate(self.positions):
            out[i, :len(p)] = p
        return out

    def coordinate(self, dof: int = 0) -> np.ndarray:
        return self.array()[:, dof]

    @property
    def z(self) -> np.ndarray:
        return self.coordinate(0)

    @property
    def final(self) -> np.ndarray:
        return self.positions[-1]

    def at(self, t, dof: int = 0):
        return np.interp(t, self.t, self.coordinate(dof))

    def events_of(self, kind: str) -> list[Event]:
        return [e for e in self.events if e.kind == kind]


def lineage_weights(state: QuantumState, x) -> dict[str, float]:
    """Share of each branch lineage in the local density (cross terms ignored)."""
    amps = np.abs(branch_amplitudes(state, np.asarray(x, float))[:, 0]) ** 2
    out: dict[str, float] = {}
    for b, a in zip(state.branches, amps):
        out[b.label] = out.get(b.label, 0.0) + float(a)
    total = sum(out.values())
    return {k: v / total for k, v in out.items()} if total > 0 else out


# -- closed forms -----------------------------------------------------------

def catch_time(alpha: complex, beta: complex, z0: float, a: float = 1.0, u: float = 1.0):
    """When the Bohmian position leaves the SG overlap, and which packet takes it.

    The up packet moves at ``+u``.  Returns ``(t, "upPacket" | "downPacket")``.
    """
    if abs(z0) > a / 2:
        raise ValueError("initial position outside the packet support")
    pa, pb = abs(alpha) ** 2, abs(beta) ** 2
    if pb == 0:
        return 0.0, "upPacket"
    if pa == 0:
        return 0.0, "downPacket"
    v = (pa - pb) * u
    t_down_top = (a / 2 - z0) / (u + v)     # top of the down packet passes
    t_up_bottom = (z0 + a / 2) / (u - v)    # bottom of the up packet passes
    if t_down_top <= t_up_bottom + 1e-12 * max(1.0, t_up_bottom):
        # both edges pass at once at the pinch point; ties go up
        return t_down_top, "upPacket"
    return t_up_bottom, "downPacket"


def quantile(model: str, fraction: float, width: float = 1.0) -> float:
    """Position below which ``fraction`` of a centred packet's weight lies."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    if model == "rect":
        return (fraction - 0.5) * width
    if model == "gauss":
        return float(width * erfinv(2.0 * fraction - 1.0))
    raise ValueError(f"unknown packet model {model!r}")


def solve_implicit(t: float, alpha: complex, beta: complex, u: float, k: float,
                   phi: float, C1: float, tol: float = 1e-12) -> float:
    """Root of ``z = (|b|^2-|a|^2) u t - (|ab|/k) sin(2kz + phi) + C1``.

    Safeguarded Newton: the bracket ``z_lin +- |ab|/k`` always holds the
    root, and any Newton step leaving it is replaced by bisection.
    """
    n2 = abs(alpha) ** 2 + abs(beta) ** 2
    ab = abs(alpha * beta) / n2
    drift = (abs(beta) ** 2 - abs(alpha) ** 2) / n2 * u * t + C1
    if ab == 0:
        return drift
    amp = ab / k

    def f(z):
        return z - drift + amp * math.sin(2 * k * z + phi)

    lo, hi = drift - amp, drift + amp
    flo, fhi = f(lo), f(hi)
    if flo > 0 or fhi < 0:
        raise ArithmeticError("no root in bracket")
    z = drift
    for _ in range(200):
        fz = f(z)
        if abs(fz) < tol:
            return z
        if fz < 0:
            lo = z
        else:
            hi = z
        dfz = 1 + 2 * ab * math.cos(2 * k * z + phi)
        z_new = z - fz / dfz if dfz > 0 else lo - 1.0
        if not lo < z_new < hi:
            z_new = 0.5 * (lo + hi)
        if hi - lo < 1e-16 * max(1.0, abs(z)):
            return z_new
        z = z_new
    raise ArithmeticError("implicit solve did not converge")


# -- piecewise analytic -----------------------------------------------------

def _is_bounded(f: SpatialFactor) -> bool:
    return f.kind == "rect"


def piecewise_applicable(state: QuantumState) -> bool:
    """Boxes and rings only, and same-spin branches never share support."""
    for b in state.branches:
        if any(f.kind == "gauss" for f in b.factors):
            return False
    bs = state.branches
    for i in range(len(bs)):
        for j in range(i + 1, len(bs)):
            if bs[i].spins != bs[j].spins:
                continue
            if not any(_is_bounded(fi) and _is_bounded(fj)
                       and fi.group_velocity == fj.group_velocity
                       and abs(fi.center0 - fj.center0) >= 0.5 * (fi.width + fj.width)
                       for fi, fj in zip(bs[i].factors, bs[j].factors)):
                return False
    return True


def _plane_velocity(state: QuantumState, b: int) -> np.ndarray:
    br = state.branches[b]
    return np.array([state.hbar_over_m[d] * f.carrier / state.scale(d)
                     for d, f in enumerate(br.factors)])


def _branch_density(state: QuantumState, b: int) -> float:
    br = state.branches[b]
    rho = br.norm
    for f in br.factors:
        rho /= f.width if f.kind == "rect" else 2 * math.pi * f.width
    return rho


def _weighted_velocity(state: QuantumState, active) -> np.ndarray:
    spins = [state.branches[b].spins for b in active]
    if len(set(spins)) != len(spins):
        raise SameSpinError("same-spin branches overlap; use rk4Adaptive or implicitRoot")
    if not active:
        raise NullSupportError("configuration in null support")
    rho = np.array([_branch_density(state, b) for b in active])
    vel = np.array([_plane_velocity(state, b) for b in active])
    return rho @ vel / rho.sum()


def _entry_exit(state: QuantumState, b: int, x, vel, t, active: bool) -> float:
    """Delay until branch ``b`` enters (or leaves) the moving configuration."""
    br = state.branches[b]
    lo, hi = 0.0, math.inf
    exit_t = math.inf
    for d, f in enumerate(br.factors):
        if f.kind != "rect":
            continue
        r0 = x[d] - f.center(t)
        rv = vel[d] - f.group_velocity
        half = 0.5 * f.width
        if active:
            if rv > 0:
                exit_t = min(exit_t, (half - r0) / rv)
            elif rv < 0:
                exit_t = min(exit_t, (-half - r0) / rv)
            continue
        if rv == 0:
            if abs(r0) >= half:
                return math.inf
            continue
        a, c = sorted(((-half - r0) / rv, (half - r0) / rv))
        lo, hi = max(lo, a), min(hi, c)
    if active:
        return max(exit_t, 0.0)
    # windows shorter than rounding noise are grazing contacts, not entries
    if hi - lo <= 1e-12 * max(1.0, abs(t)) or hi <= 0:
        return math.inf
    return lo


def _dense(traj: Trajectory, t0, x0, vel, t1, dt, state):
    n0 = math.floor(t0 / dt) + 1
    n1 = math.ceil(t1 / dt)
    for n in range(n0, n1):
        ts = n * dt
        if t0 < ts < t1:
            traj.append(ts, x0 + vel * (ts - t0), state)


def _region_events(state, before, after, t) -> list[Event]:
    labels = lambda s: sorted(state_label(state, b) for b in s)  # noqa: E731
    ev = []
    if len(after) > len(before):
        ev.append(Event(t, "overlapEntry", {"active": labels(after)}))
    elif len(after) < len(before):
        ev.append(Event(t, "overlapExit", {"active": labels(after)}))
        if len({state_label(state, b) for b in after}) == 1:
            ev.append(Event(t, "packetCapture", {"by": labels(after)[0]}))
    return ev


def state_label(state: QuantumState, b: int) -> str:
    return state.branches[b].label or str(b)


def _apply_prune(state, x, eps, active, traj, t):
    flags = [i in active for i in range(len(state.branches))]
    new, pruned = prune_collapsed(state, x, eps, flags)
    if not pruned:
        return state, active
    traj.events.append(Event(t, "branchCollapse",
                             {"pruned": [state_label(state, i) for i in pruned]}))
    remap = {}
    j = 0
    for i in range(len(state.branches)):
        if i not in pruned:
            remap[i] = j
            j += 1
    return new, {remap[i] for i in active if i in remap}


def integrate_piecewise(state: QuantumState, config0, t_end: float,
                        controls: IntegratorControls = IntegratorControls()) -> Trajectory:
    """Exact trajectory for boxes whose overlapping branches carry distinct spins.

    Inside each region of configuration space the weighted velocity is
    constant, so the path is a chain of straight segments joined at the
    analytically computed support crossings.
    """
    x = np.array(config0, dtype=float)
    t = float(state.time)
    traj = Trajectory()
    traj.append(t, x, state)
    state = state.at(t)
    active = set(np.flatnonzero(support_mask(state, x, closed=True)[:, 0]))
    state, active = _apply_prune(state, x, controls.collapse_epsilon, active, traj, t)
    while t < t_end:
        vel = _weighted_velocity(state, sorted(active))
        delays = [_entry_exit(state, b, x, vel, t, b in active)
                  for b in range(len(state.branches))]
        tau = min(min(delays), t_end - t)
        _dense(traj, t, x, vel, t + tau, controls.sample_dt, state)
        x = x + vel * tau
        t = t + tau
        if t >= t_end:
            # exact arithmetic on the end point
            t = t_end
            traj.append(t, x, state)
            break
        flips = {b for b, d in enumerate(delays) if d - tau <= 1e-13 * max(1.0, abs(t))}
        before = set(active)
        active = active ^ flips
        if not active:
            # every packet leaves at one point: ties go to the faster packet along dof 0
            keep = max(before, key=lambda b: state.branches[b].factors[0].group_velocity)
            active = {keep}
        traj.append(t, x, state)
        state = state.at(t)
        traj.events.extend(_region_events(state, before, active, t))
        state, active = _apply_prune(state, x, controls.collapse_epsilon, active, traj, t)
    traj.final_state = state.at(t)
    return traj


# -- implicit root (spinless boxes) -----------------------------------------

def overlap_constants(state: QuantumState, pair, t_e, z_e):
    """Parameters of the two-plane-wave overlap solution entered at (t_e, z_e)."""
    ia, ib = sorted(pair, key=lambda b: state.branches[b].factors[0].carrier)
    fa, fb = state.branches[ia].factors[0], state.branches[ib].factors[0]
    if not math.isclose(fa.carrier, -fb.carrier) or fa.carrier >= 0:
        raise StructureError("implicit solution needs opposite carriers +-k")
    if state.branches[ia].spins != state.branches[ib].spins:
        raise StructureError("implicit solution is for same-spin branches")
    alpha = state.branches[ia].coefficient * np.exp(1j * fa.phase_offset) / math.sqrt(fa.width)
    beta = state.branches[ib].coefficient * np.exp(1j * fb.phase_offset) / math.sqrt(fb.width)
    n = math.sqrt(abs(alpha) ** 2 + abs(beta) ** 2)
    alpha, beta = alpha / n, beta / n
    k = fb.carrier
    u = state.hbar_over_m[0] * k
    phi = float(np.angle(beta) - np.angle(alpha))
    ab = abs(alpha * beta)
    v = (abs(beta) ** 2 - abs(alpha) ** 2) * u
    C1 = z_e + ab / k * math.sin(2 * k * z_e + phi) - v * t_e
    return dict(alpha=alpha, beta=beta, u=u, k=k, phi=phi, C1=C1)


def integrate_implicit(state: QuantumState, config0, t_end: float,
                       controls: IntegratorControls = IntegratorControls()) -> Trajectory:
    """One-dof boxes: straight rides plus the implicit solution in overlaps."""
    if state.ndof != 1:
        raise StructureError("implicitRoot integrates one-dof states only")
    if any(f.kind != "rect" for b in state.branches for f in b.factors):
        raise StructureError("implicitRoot needs box packets")
    x = np.array(config0, dtype=float)
    t = float(state.time)
    traj = Trajectory()
    traj.append(t, x, state)
    state = state.at(t)
    active = set(np.flatnonzero(support_mask(state, x, closed=True)[:, 0]))
    while t < t_end:
        if len(active) == 1:
            vel = _weighted_velocity(state, sorted(active))
            delays = [_entry_exit(state, b, x, vel, t, b in active)
                      for b in range(len(state.branches))]
            tau = min(min(delays), t_end - t)
            _dense(traj, t, x, vel, t + tau, controls.sample_dt, state)
            x, t = x + vel * tau, t + tau
            if t >= t_end:
                t = t_end
                traj.append(t, x, state)
                break
            flips = {b for b, d in enumerate(delays) if d - tau <= 1e-13 * max(1.0, abs(t))}
        elif len(active) == 2:
            pair = sorted(active)
            p = overlap_constants(state, pair, t, float(x[0]))
            fs = [state.branches[b].factors[0] for b in pair]

            def z_of(tt):
                return solve_implicit(tt, p["alpha"], p["beta"], p["u"], p["k"], p["phi"], p["C1"])

            def margin(tt):
                z = z_of(tt)
                return min(0.5 * f.width - abs(z - f.center(tt)) for f in fs)

            dt = controls.max_step
            t_lo = t
            t_exit = None
            while t_lo < t_end:
                t_hi = min(t_lo + dt, t_end)
                if margin(t_hi) < 0:
                    a, b = t_lo, t_hi
                    while b - a > controls.event_resolution:
                        m = 0.5 * (a + b)
                        if margin(m) < 0:
                            b = m
                        else:
                            a = m
                    t_exit = b
                    break
                traj.append(t_hi, [z_of(t_hi)], state)
                t_lo = t_hi
            if t_exit is None:
                t = t_end
                x = np.array([z_of(t)])
                traj.append(t, x, state)
                break
            t = t_exit
            x = np.array([z_of(t)])
            inside = support_mask(state.at(t), x, closed=False)[:, 0]
            flips = {b for b in pair if not inside[b]}
        else:
            raise StructureError("implicitRoot handles at most two overlapping packets")
        before = set(active)
        active = active ^ flips
        traj.append(t, x, state)
        state = state.at(t)
        traj.events.extend(_region_events(state, before, active, t))
        if not active:
            raise NullSupportError("configuration in null support")
    traj.final_state = state.at(t)
    return traj


# -- adaptive RK4 -----------------------------------------------------------

def _rk4(state, t, x, h, mask):
    def f(tt, xx):
        v, rho = velocity_field(state, xx, tt, mask)
        return v, rho

    k1, r1 = f(t, x)
    k2, r2 = f(t + h / 2, x + h / 2 * k1)
    k3, r3 = f(t + h / 2, x + h / 2 * k2)
    k4, r4 = f(t + h, x + h * k3)
    rho = np.minimum(np.minimum(r1, r2), np.minimum(r3, r4))
    return x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4), rho.min(), k1


def _rk4_from(state, t, x, h, mask, k1):
    def f(tt, xx):
        return velocity_field(state, xx, tt, mask)

    k2, r2 = f(t + h / 2, x + h / 2 * k1)
    k3, r3 = f(t + h / 2, x + h / 2 * k2)
    k4, r4 = f(t + h, x + h * k3)
    return x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4), min(r2.min(), r3.min(), r4.min())


def _double_step(state, t, x, h, mask):
    """Full step and two half steps; returns (extrapolated, error, min density)."""
    k1, r1 = velocity_field(state, x, t, mask)
    full, rf = _rk4_from(state, t, x, h, mask, k1)
    half, rh1 = _rk4_from(state, t, x, h / 2, mask, k1)
    second, rh2 = _rk4(state, t + h / 2, half, h / 2, mask)[:2]
    err = np.abs(second - full).max() / 15.0
    best = second + (second - full) / 15.0
    return best, err, min(r1.min(), rf, rh1, rh2), np.abs(second).max()


def _regions(state, x, t):
    vel_mask = support_mask(state, x, closed=True, t=t)
    ev_mask = support_mask(state, x, closed=True, gauss_reach=GAUSS_REACH, t=t)
    return vel_mask, ev_mask


def rk4_adaptive(state: QuantumState, config0, t_end: float,
                 controls: IntegratorControls = IntegratorControls(),
                 prune: bool = True) -> Trajectory:
    """Classic RK4 with step doubling on the exact guidance law.

    The right-hand side is frozen to the current region of configuration
    space (box edges are continued analytically), and every region change
    is located by bisection on the step length and stepped onto exactly.
    """
    x = np.array(config0, dtype=float).reshape(-1, 1)
    t = float(state.time)
    traj = Trajectory()
    traj.append(t, x[:, 0], state)
    state = state.at(t)
    vmask, emask = _regions(state, x, t)
    if prune:
        state, _ = _prune_rk(state, x, controls, traj, t, vmask[:, 0])
        vmask, emask = _regions(state, x, t)
    h = controls.max_step
    h_min = 1e-14 * max(1.0, abs(t_end - t))
    while t < t_end:
        h = min(h, controls.max_step, t_end - t)
        if t_end - (t + h) < 1e-14 * max(1.0, abs(t_end)):
            h = t_end - t
        if not velocity_field(state, x, t, vmask)[1].min() > NODE_DENSITY:
            raise NodeCollisionError(f"density node reached at t={t:.12g}")
        y, err, rho_min, ymax = _double_step(state, t, x, h, vmask)
        if not rho_min > NODE_DENSITY:
            h /= 2
            if h < h_min:
                raise NodeCollisionError(f"density node reached at t={t:.12g}")
            continue
        tol = controls.abs_tol + controls.rel_tol * ymax
        if err > tol:
            h = h * max(0.2, 0.9 * (tol / err) ** 0.2)
            if h < h_min:
                raise StepUnderflowError(f"step underflow at t={t:.12g}")
            continue
        nv, ne = _regions(state, y, t + h)
        if (nv != vmask).any() or (ne != emask).any():
            lo, hi = 0.0, h
            while hi - lo > controls.event_resolution:
                mid = 0.5 * (lo + hi)
                ym = _rk4(state, t, x, mid, vmask)[0]
                mv, me = _regions(state, ym, t + mid)
                if (mv != vmask).any() or (me != emask).any():
                    hi = mid
                else:
                    lo = mid
            y = _rk4(state, t, x, hi, vmask)[0]
            t_new = t + hi
            nv, ne = _regions(state, y, t_new)
            before = set(np.flatnonzero(emask[:, 0]))
            edge = _sliding_edge(state, y, t_new, vmask, nv)
            x, t = y, t_new
            if edge is not None:
                x, t, nv = _slide(state, x, t, t_end, edge, controls, traj)
                ne = _regions(state, x, t)[1]
            after = set(np.flatnonzero(ne[:, 0]))
            traj.events.extend(_region_events(state.at(t), before, after, t))
        else:
            x, t = y, t + h
            h = h * min(5.0, 0.9 * (tol / err) ** 0.2) if err > 0 else h * 5.0
        vmask, emask = nv, ne
        traj.append(t, x[:, 0], state)
        if prune:
            state, changed = _prune_rk(state, x, controls, traj, t, vmask[:, 0])
            if changed:
                vmask, emask = _regions(state, x, t)
    traj.final_state = state.at(t)
    return traj


def _edge_of(state, b, x, t):
    """Box dof of branch ``b`` whose support edge holds ``x``, with its side."""
    best = None
    for d, f in enumerate(state.branches[b].factors):
        if f.kind != "rect":
            continue
        r = float(x[d, 0]) - f.center(t)
        gap = abs(abs(r) - 0.5 * f.width)
        if best is None or gap < best[0]:
            best = (gap, d, 1.0 if r > 0 else -1.0)
    return None if best is None else best[1:]


def _sliding_edge(state, x, t, old_mask, new_mask):
    """Detect a box edge that the flow presses onto from both sides.

    The frozen box model has a velocity jump across support edges; when
    both one-sided fields point into the edge the Bohmian position is
    carried along it (a Filippov sliding motion) instead of crossing.
    """
    changed = np.flatnonzero(old_mask[:, 0] != new_mask[:, 0])
    if len(changed) != 1:
        return None
    b = int(changed[0])
    found = _edge_of(state, b, x, t)
    if found is None:
        return None
    d, side = found
    inside = old_mask if old_mask[b, 0] else new_mask
    outside = new_mask if old_mask[b, 0] else old_mask
    if _pressing(state, x, t, inside, outside, b, d, side):
        return b, d, side, inside, outside
    return None


def _pressing(state, x, t, inside, outside, b, d, side):
    ve = state.branches[b].factors[d].group_velocity
    v_in = velocity_field(state, x, t, inside)[0][d, 0]
    v_out = velocity_field(state, x, t, outside)[0][d, 0]
    return (v_in - ve) * side > 0 and (v_out - ve) * side < 0


def _slide(state, x, t, t_end, edge, controls, traj):
    """Carry the position along a pressed box edge until one side releases it."""
    b, d, side, inside, outside = edge
    f = state.branches[b].factors[d]
    ve = f.group_velocity

    def pin(tt, xx):
        xx = xx.copy()
        xx[d, 0] = f.center(tt) + side * 0.5 * f.width
        return xx

    def field(tt, xx):
        # Filippov: the combination of the two one-sided fields tangent to the edge
        v_in = velocity_field(state, xx, tt, inside)[0]
        v_out = velocity_field(state, xx, tt, outside)[0]
        lam = (ve - v_out[d, 0]) / (v_in[d, 0] - v_out[d, 0])
        v = lam * v_in + (1 - lam) * v_out
        v[d, 0] = ve
        return v

    def step(tt, xx, h):
        k1 = field(tt, xx)
        k2 = field(tt + h / 2, xx + h / 2 * k1)
        k3 = field(tt + h / 2, xx + h / 2 * k2)
        k4 = field(tt + h, xx + h * k3)
        return pin(tt + h, xx + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4))

    x = pin(t, x)
    h = controls.max_step
    while t < t_end:
        hh = min(h, t_end - t)
        y = step(t, x, hh)
        if _pressing(state, y, t + hh, inside, outside, b, d, side):
            x, t = y, t + hh
            traj.append(t, x[:, 0], state)
            continue
        lo, hi = 0.0, hh
        while hi - lo > controls.event_resolution:
            mid = 0.5 * (lo + hi)
            if _pressing(state, step(t, x, mid), t + mid, inside, outside, b, d, side):
                lo = mid
            else:
                hi = mid
        x, t = step(t, x, hi), t + hi
        break
    # leave on the side whose field no longer points into the edge
    v_in = velocity_field(state, x, t, inside)[0][d, 0]
    mask = inside if (v_in - ve) * side <= 0 else outside
    return x, t, mask


def _prune_rk(state, x, controls, traj, t, active=None):
    new, pruned = prune_collapsed(state.at(t), x[:, 0], controls.collapse_epsilon, active)
    if pruned:
        traj.events.append(Event(t, "branchCollapse",
                                 {"pruned": [state_label(state, i) for i in pruned]}))
        return new, True
    return state, False


def rk4_ensemble(state: QuantumState, configs, t_end: float,
                 controls: IntegratorControls = IntegratorControls()) -> np.ndarray:
    """Integrate many configurations of one state together; returns (D, N).

    Uses the natural (unfrozen) field and a shared step, so it is meant for
    smooth packet models.
    """
    x = np.array(configs, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    t = float(state.time)
    h = controls.max_step
    h_min = 1e-14 * max(1.0, abs(t_end - t))
    state = state.at(t)
    while t < t_end:
        h = min(h, controls.max_step, t_end - t)
        if t_end - (t + h) < 1e-14 * max(1.0, abs(t_end)):
            h = t_end - t
        y, err, rho_min, ymax = _double_step(state, t, x, h, None)
        if not rho_min > NODE_DENSITY:
            h /= 2
            if h < h_min:
                raise NodeCollisionError(f"density node reached at t={t:.12g}")
            continue
        tol = controls.abs_tol + controls.rel_tol * ymax
        if err > tol:
            h = h * max(0.2, 0.9 * (tol / err) ** 0.2)
            if h < h_min:
                raise StepUnderflowError(f"step underflow at t={t:.12g}")
            continue
        x, t = y, t + h
        h = h * min(5.0, 0.9 * (tol / err) ** 0.2) if err > 0 else h * 5.0
    return x


def integrate(state: QuantumState, config0, t_end: float,
              controls: IntegratorControls = IntegratorControls()) -> Trajectory:
    """Dispatch on ``controls.method``; ``auto`` prefers exact constructions."""
    m = controls.method
    if m in ("auto", "implicitRoot") and piecewise_applicable(state):
        return integrate_piecewise(state, config0, t_end, controls)
    if m == "piecewiseAnalytic":
        if not piecewise_applicable(state):
            raise SameSpinError("same-spin branches; use rk4Adaptive or implicitRoot")
        return integrate_piecewise(state, config0, t_end, controls)
    if m == "implicitRoot":
        return integrate_implicit(state, config0, t_end, controls)
    return rk4_adaptive(state, config0, t_end, controls)
