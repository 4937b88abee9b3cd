"""Multi-branch, multi-particle wave functions built from product packets.

A state is a flat sum of branches, each branch a complex coefficient times
one spatial factor per continuous degree of freedom (dof) times a tuple of
discrete spin labels.  Factors evolve analytically in time, so a state is
fully described by its branch list and a time stamp.

Units: lengths in ``a``, velocities in ``u``; ``hbar/m = u/k`` per dof.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from . import _kernel

SPIN_LABELS = ("up", "down", "none")
KINDS = {"rect": _kernel.RECT, "gauss": _kernel.GAUSS, "ring": _kernel.RING}

# Gaussian "support" for collapse and region bookkeeping, in effective widths.
# At 3 widths the density is e^-9; two packets 6 widths apart overlap < 1e-8.
GAUSS_REACH = 3.0


class StructureError(ValueError):
    """Configuration or branch layout does not match the state."""


class NullSupportError(ValueError):
    """The configuration lies where every branch vanishes."""


@dataclass(frozen=True)
class SpatialFactor:
    """One-dof wave packet.

    ``kind`` is ``"rect"`` (frozen box of width ``width``), ``"gauss"``
    (freely spreading Gaussian, real width ``width`` at ``birth_time``) or
    ``"ring"`` (uniform plane wave on a ring of radius ``width``; the
    coordinate is the angle and ``carrier`` is per unit arc length).
    """

    kind: str
    center0: float = 0.0
    group_velocity: float = 0.0
    carrier: float = 0.0
    width: float = 1.0
    birth_time: float = 0.0
    phase_offset: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise StructureError(f"unknown factor kind {self.kind!r}")
        if not self.width > 0:
            raise StructureError("factor width must be positive")

    def center(self, t: float) -> float:
        return self.center0 + self.group_velocity * t

    def complex_width(self, t: float, hbar_m: float) -> complex:
        return self.width**2 + 1j * hbar_m * (t - self.birth_time)

    def effective_width(self, t: float, hbar_m: float) -> float:
        """Width of the density profile at ``t`` (Gaussian: it spreads)."""
        if self.kind == "gauss":
            return abs(self.complex_width(t, hbar_m)) / self.width
        if self.kind == "ring":
            return math.inf
        return self.width

    def value(self, x: float, t: float, hbar_m: float = 1.0) -> complex:
        val, _ = _kernel._factor(KINDS[self.kind], self.center0, self.group_velocity,
                                 self.carrier, self.width, self.birth_time,
                                 self.phase_offset, hbar_m, float(x), float(t), False)
        return val

    def kicked(self, t: float, carrier: float, hbar_m: float) -> SpatialFactor:
        """Multiply by ``exp(i (carrier - self.carrier) s)`` at time ``t``.

        The envelope and its position are continuous through the kick; the
        new group velocity is ``hbar_m * carrier``.
        """
        v_new = hbar_m * carrier
        q, v = self.carrier, self.group_velocity
        return replace(
            self,
            center0=self.center(t) - v_new * t,
            group_velocity=v_new,
            carrier=carrier,
            phase_offset=self.phase_offset - 0.5 * q * v * t + 0.5 * carrier * v_new * t,
        )

    def shifted(self, b: float) -> SpatialFactor:
        return replace(self, center0=self.center0 + b)


@dataclass(frozen=True)
class Branch:
    coefficient: complex
    factors: tuple[SpatialFactor, ...]
    spins: tuple[str, ...] = ()
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        object.__setattr__(self, "spins", tuple(self.spins))
        for s in self.spins:
            if s not in SPIN_LABELS:
                raise StructureError(f"unknown spin label {s!r}")

    @property
    def norm(self) -> float:
        return abs(self.coefficient) ** 2


@dataclass(frozen=True)
class _Tables:
    kind: np.ndarray
    c0: np.ndarray
    v: np.ndarray
    q: np.ndarray
    w: np.ndarray
    birth: np.ndarray
    ph: np.ndarray
    coef: np.ndarray
    group: np.ndarray
    ngroup: int
    hm: np.ndarray
    scale: np.ndarray
    spin_keys: tuple


@dataclass(frozen=True)
class QuantumState:
    """Never-collapsing wave function at a given time.

    ``recombining`` lists dofs whose packets later interactions will bring
    back together; separation along them never justifies pruning.
    """

    branches: tuple[Branch, ...]
    time: float = 0.0
    hbar_over_m: tuple[float, ...] = ()
    recombining: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(self, "recombining", frozenset(self.recombining))
        if not self.branches:
            raise StructureError("a state needs at least one branch")
        nd = len(self.branches[0].factors)
        ns = len(self.branches[0].spins)
        for br in self.branches:
            if len(br.factors) != nd or len(br.spins) != ns:
                raise StructureError("all branches must share dof and spin arity")
        if not self.hbar_over_m:
            object.__setattr__(self, "hbar_over_m", (1.0,) * nd)
        object.__setattr__(self, "hbar_over_m", tuple(float(h) for h in self.hbar_over_m))
        if len(self.hbar_over_m) != nd:
            raise StructureError("hbar_over_m needs one entry per dof")

    @property
    def ndof(self) -> int:
        return len(self.branches[0].factors)

    @property
    def nspin(self) -> int:
        return len(self.branches[0].spins)

    def at(self, t: float) -> QuantumState:
        new = replace(self, time=float(t))
        if "tables" in self.__dict__:
            new.__dict__["tables"] = self.__dict__["tables"]
        return new

    def with_branches(self, branches, **changes) -> QuantumState:
        return replace(self, branches=tuple(branches), **changes)

    def norm(self) -> float:
        """Sum of branch weights; the true norm when branches do not interfere."""
        return sum(b.norm for b in self.branches)

    def scale(self, dof: int) -> float:
        f = self.branches[0].factors[dof]
        return f.width if f.kind == "ring" else 1.0

    @cached_property
    def tables(self) -> _Tables:
        bs = self.branches
        fs = [[f for f in b.factors] for b in bs]

        def grid(attr):
            return np.array([[getattr(f, attr) for f in row] for row in fs], dtype=float)

        keys = []
        group = np.empty(len(bs), dtype=np.int64)
        for i, b in enumerate(bs):
            if b.spins not in keys:
                keys.append(b.spins)
            group[i] = keys.index(b.spins)
        return _Tables(
            kind=np.array([[KINDS[f.kind] for f in row] for row in fs], dtype=np.int64),
            c0=grid("center0"), v=grid("group_velocity"), q=grid("carrier"),
            w=grid("width"), birth=grid("birth_time"), ph=grid("phase_offset"),
            coef=np.array([b.coefficient for b in bs], dtype=np.complex128),
            group=group, ngroup=len(keys),
            hm=np.array(self.hbar_over_m, dtype=float),
            scale=np.array([self.scale(d) for d in range(self.ndof)], dtype=float),
            spin_keys=tuple(keys),
        )

    def effective_widths(self, t: float | None = None) -> np.ndarray:
        t = self.time if t is None else t
        return np.array([[f.effective_width(t, self.hbar_over_m[d])
                          for d, f in enumerate(b.factors)] for b in self.branches])


def as_points(state: QuantumState, config) -> np.ndarray:
    """Coerce one configuration (D,) or a batch (D, N) to a (D, N) array."""
    x = np.asarray(config, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] != state.ndof:
        raise StructureError(
            f"configuration arity {x.shape[0] if x.ndim else 0} does not match "
            f"state with {state.ndof} dofs")
    return np.ascontiguousarray(x)


def branch_amplitudes(state: QuantumState, config) -> np.ndarray:
    """Amplitude of each branch (spin labels ignored), shape (B, N)."""
    tb = state.tables
    x = as_points(state, config)
    return _kernel.amplitudes(tb.kind, tb.c0, tb.v, tb.q, tb.w, tb.birth, tb.ph,
                              tb.coef, tb.hm, x, float(state.time))


def evaluate(state: QuantumState, config) -> dict[tuple[str, ...], complex]:
    """Spinor value at one configuration, keyed by joint spin labels."""
    amps = branch_amplitudes(state, config)[:, 0]
    out: dict[tuple[str, ...], complex] = {}
    for b, a in zip(state.branches, amps):
        out[b.spins] = out.get(b.spins, 0j) + complex(a)
    return out


def density(state: QuantumState, config) -> np.ndarray | float:
    """Configuration-space density; scalar for one config, array for a batch."""
    tb = state.tables
    amps = branch_amplitudes(state, config)
    psi = np.zeros((tb.ngroup, amps.shape[1]), dtype=complex)
    np.add.at(psi, tb.group, amps)
    rho = np.sum(np.abs(psi) ** 2, axis=0)
    return float(rho[0]) if np.ndim(config) == 1 else rho


def support_mask(state: QuantumState, config, closed=False, gauss_reach=math.inf,
                 t: float | None = None) -> np.ndarray:
    t = state.time if t is None else t
    tb = state.tables
    w = state.effective_widths(t) if gauss_reach != math.inf else tb.w
    w = np.where(tb.kind == _kernel.RING, 1.0, w)
    return _kernel.support_mask(tb.kind, tb.c0, tb.v, np.ascontiguousarray(w),
                                as_points(state, config), float(t), closed,
                                float(gauss_reach))


@dataclass(frozen=True)
class ConditionalWave:
    """One-dof wave obtained by pinning every other dof at its Bohmian value.

    ``wave`` is a one-dof state whose branch coefficients already include
    the values of the pinned factors.
    """

    dof: int
    wave: QuantumState

    def evaluate(self, x: float) -> dict[tuple[str, ...], complex]:
        return evaluate(self.wave, [x])

    @property
    def weights(self) -> list[complex]:
        return [b.coefficient for b in self.wave.branches]


def conditional(state: QuantumState, dof: int, config) -> ConditionalWave:
    x = np.asarray(config, dtype=float)
    if x.shape != (state.ndof,):
        raise StructureError("configuration arity does not match state")
    if not 0 <= dof < state.ndof:
        raise StructureError(f"no dof {dof}")
    t = state.time
    branches = []
    for b in state.branches:
        wgt = complex(b.coefficient)
        for j, f in enumerate(b.factors):
            if j != dof:
                wgt *= f.value(x[j], t, state.hbar_over_m[j])
        branches.append(Branch(wgt, (b.factors[dof],), b.spins, b.label))
    if all(br.coefficient == 0 for br in branches):
        raise NullSupportError("configuration in null support")
    wave = QuantumState(tuple(branches), t, (state.hbar_over_m[dof],))
    return ConditionalWave(dof, wave)


def _reach(f: SpatialFactor, t: float, hm: float) -> float:
    if f.kind == "rect":
        return 0.5 * f.width
    return GAUSS_REACH * f.effective_width(t, hm)


def _meeting_window(f1: SpatialFactor, f2: SpatialFactor, t: float, hm: float,
                    point: float | None = None):
    """Future times at which two one-dof supports can intersect, as (lo, hi).

    With ``point`` the second factor is replaced by that position moving
    at the factor's group velocity, which is how a Bohmian position rides
    a lone box packet.
    """
    if "ring" in (f1.kind, f2.kind):
        return (t, math.inf)
    if point is None:
        h = _reach(f1, t, hm) + _reach(f2, t, hm)
        d0 = f1.center(t) - f2.center(t)
    else:
        h = _reach(f1, t, hm)
        d0 = f1.center(t) - point
    dv = f1.group_velocity - f2.group_velocity
    if dv == 0:
        return (t, math.inf) if abs(d0) < h else None
    lo, hi = sorted(((-h - d0) / dv, (h - d0) / dv))
    lo, hi = t + max(lo, 0.0), t + hi
    # a contact shorter than rounding noise is a graze, not a meeting
    return (lo, hi) if hi - lo > 1e-12 * max(1.0, abs(t)) else None


def _can_meet(state: QuantumState, i: int, live, x) -> bool:
    """Whether branch ``i`` can again share support with the live branches."""
    bi = state.branches[i]
    riders = {}
    for d in range(state.ndof):
        fs = {state.branches[j].factors[d] for j in live}
        if len(fs) == 1:
            f = fs.pop()
            if f.kind == "rect":
                riders[d] = f
    for j in live:
        bj = state.branches[j]
        lo, hi = state.time, math.inf
        ok = True
        for d in range(state.ndof):
            if d in state.recombining:
                continue
            point = float(x[d]) if d in riders else None
            win = _meeting_window(bi.factors[d], bj.factors[d], state.time,
                                  state.hbar_over_m[d], point)
            if win is None:
                ok = False
                break
            lo, hi = max(lo, win[0]), min(hi, win[1])
            if hi <= lo:
                ok = False
                break
        if ok:
            return True
    return False


def prune_collapsed(state: QuantumState, config, epsilon: float = 0.0, active=None):
    """Drop branches that are negligible at ``config`` and can never return.

    A live packet that is alone on a box dof carries the Bohmian position
    along with it, so only that moving point has to stay clear of the
    dropped branch.  Returns the (renormalised) state and the indices of
    the removed branches.  ``active`` optionally flags the branches whose
    region contains the configuration; the others count as vanishing there,
    which keeps rounding at box edges from reviving a departed branch.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    if len(state.branches) == 1:
        return state, []
    x = np.asarray(config, dtype=float)
    w = np.abs(branch_amplitudes(state, x)[:, 0]) ** 2
    if active is not None:
        w = np.where(np.asarray(active, dtype=bool), w, 0.0)
    if not w.max() > 0:
        return state, []
    cut = epsilon * w.max()
    live = [i for i in range(len(w)) if w[i] > cut]
    if not live:
        return state, []
    pruned = [i for i in range(len(w)) if w[i] <= cut and not _can_meet(state, i, live, x)]
    if not pruned:
        return state, []
    kept = [b for i, b in enumerate(state.branches) if i not in pruned]
    total = math.sqrt(sum(b.norm for b in kept))
    kept = [replace(b, coefficient=b.coefficient / total) for b in kept]
    return state.with_branches(kept), pruned


def overlap_support(state: QuantumState, dof: int):
    """Intersection of all box supports on ``dof`` at ``state.time``, or None."""
    lo, hi = -math.inf, math.inf
    for b in state.branches:
        f = b.factors[dof]
        if f.kind != "rect":
            raise StructureError("not defined for unbounded support")
        c = f.center(state.time)
        lo, hi = max(lo, c - 0.5 * f.width), min(hi, c + 0.5 * f.width)
    return (lo, hi) if hi > lo else None


def kick(state: QuantumState, dof: int, carriers) -> QuantumState:
    """Impulsive momentum kick on one dof: branch ``i`` gets ``carriers[i]``."""
    hm = state.hbar_over_m[dof]
    out = []
    for b, q in zip(state.branches, carriers, strict=True):
        fs = list(b.factors)
        fs[dof] = fs[dof].kicked(state.time, q, hm)
        out.append(replace(b, factors=tuple(fs)))
    return state.with_branches(out)


def attach_dof(state: QuantumState, factors, hbar_m: float) -> QuantumState:
    """Append an unentangled dof; ``factors`` is a list of (weight, factor).

    Each existing branch is multiplied out against every (weight, factor)
    pair, so a superposition of k packets multiplies the branch count by k.
    """
    out = []
    for b in state.branches:
        for wgt, f in factors:
            out.append(replace(b, coefficient=b.coefficient * wgt,
                               factors=b.factors + (f,)))
    return state.with_branches(out, hbar_over_m=state.hbar_over_m + (float(hbar_m),))


def attach_spin(state: QuantumState, label: str = "up") -> QuantumState:
    return state.with_branches([replace(b, spins=b.spins + (label,)) for b in state.branches])
