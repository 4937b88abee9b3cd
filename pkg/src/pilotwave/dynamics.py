"""Bohmian velocities: the exact guidance law and its approximations."""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernel
from .state import Branch, QuantumState, as_points, density, support_mask

# densities below this count as a node of the wave function
NODE_DENSITY = 1e-14


class VelocityUndefinedError(ValueError):
    """Velocity requested where the density vanishes (a node)."""


@dataclass(frozen=True)
class VelocityInfo:
    velocity: np.ndarray
    density: float
    on_edge: bool


def velocity_field(state: QuantumState, points, t: float | None = None,
                   mask: np.ndarray | None = None):
    """Velocities (D, N) and densities (N,) for a batch of configurations.

    With ``mask`` the listed branches are used with their box factors
    continued past the support edges; this gives the smooth field of one
    fixed region of configuration space.
    """
    tb = state.tables
    x = as_points(state, points)
    t = state.time if t is None else t
    if mask is None:
        mask = np.ones((1, 1), dtype=np.bool_)
        use = False
    else:
        use = True
    return _kernel.velocity(tb.kind, tb.c0, tb.v, tb.q, tb.w, tb.birth, tb.ph, tb.coef,
                            tb.group, tb.ngroup, tb.hm, tb.scale, x, float(t), mask, use)


def velocity_info(state: QuantumState, config) -> VelocityInfo:
    """Guidance velocity of all dofs at one configuration.

    A point sitting exactly on a box edge takes the one-sided limit from
    inside the closed support and is flagged ``on_edge``.
    """
    closed = support_mask(state, config, closed=True)
    opened = support_mask(state, config, closed=False)
    vel, den = velocity_field(state, config, mask=closed)
    if not den[0] > NODE_DENSITY:
        raise VelocityUndefinedError("velocity undefined at node")
    return VelocityInfo(vel[:, 0], float(den[0]), bool((closed != opened).any()))


def exact_velocity(state: QuantumState, config, dof: int) -> float:
    """``(hbar/m) Im(psi^dag d_i psi / psi^dag psi)`` with analytic gradients."""
    return float(velocity_info(state, config).velocity[dof])


@dataclass(frozen=True)
class PacketCurrent:
    density: float
    velocity: float | np.ndarray

    def __post_init__(self):
        if self.density < 0:
            raise ValueError("packet density must be non-negative")


def approx_velocity(currents: Sequence[PacketCurrent]):
    """Density-weighted mean of the packet velocities."""
    total = sum(c.density for c in currents)
    if not total > 0:
        raise VelocityUndefinedError("all packet densities vanish")
    return sum(c.density * np.asarray(c.velocity) for c in currents) / total


def local_currents(state: QuantumState, config, labels: bool = True) -> list[PacketCurrent]:
    """Density and local velocity of each packet taken on its own.

    Packets are the branch lineages (``Branch.label``) when ``labels`` is set,
    otherwise single branches.  Velocities are vectors over all dofs.
    """
    groups: dict[str, list[Branch]] = {}
    for i, b in enumerate(state.branches):
        groups.setdefault(b.label if labels else str(i), []).append(b)
    out = []
    for members in groups.values():
        sub = state.with_branches(members)
        mask = support_mask(sub, config, closed=True)
        vel, den = velocity_field(sub, config, mask=mask)
        rho = float(density(sub, config))
        out.append(PacketCurrent(rho, vel[:, 0] if rho > 0 else np.zeros(state.ndof)))
    return out


def spinless_overlap_velocity(alpha: complex, beta: complex, u: float, k: float,
                              z: float) -> float:
    """Closed-form velocity inside the overlap of two same-spin plane waves.

    ``alpha`` rides the packet moving at ``-u`` (carrier ``-k``), ``beta``
    the one at ``+u``.  Amplitudes are normalised before use.
    """
    n = math.sqrt(abs(alpha) ** 2 + abs(beta) ** 2)
    a, b = alpha / n, beta / n
    phi = cmath.phase(b) - cmath.phase(a)
    den = 1.0 + 2.0 * abs(a * b) * math.cos(2.0 * k * z + phi)
    if not den > 0:
        raise VelocityUndefinedError("velocity undefined at node")
    return (abs(b) ** 2 - abs(a) ** 2) * u / den


@dataclass(frozen=True)
class RotatedBasis:
    """Linear map (z, theta) -> (Z, Y) for a particle coupled to a ring.

    ``Z`` runs along the joint carrier ``(k, k_ring)``; ``Y`` is built from
    the group velocities ``(u, omega R)``.  The map is orthonormal in
    (z, R theta) when ``omega R k = u k_ring`` (equal masses).
    """

    k: float
    k_ring: float
    u: float
    omega: float
    R: float

    def __post_init__(self):
        if self.k**2 + self.k_ring**2 <= 0 or self.u**2 + (self.omega * self.R) ** 2 <= 0:
            raise ValueError("degenerate rotated basis")
        if self.R <= 0 or abs(np.linalg.det(self.matrix)) < 1e-300:
            raise ValueError("degenerate rotated basis")

    @property
    def K(self) -> float:
        return math.hypot(self.k, self.k_ring)

    @property
    def matrix(self) -> np.ndarray:
        kz = math.hypot(self.k, self.k_ring)
        vy = math.hypot(self.u, self.omega * self.R)
        return np.array([[self.k / kz, self.k_ring * self.R / kz],
                         [-self.omega * self.R / vy, self.u * self.R / vy]])

    def forward(self, z, theta):
        m = self.matrix
        z, theta = np.asarray(z, float), np.asarray(theta, float)
        return m[0, 0] * z + m[0, 1] * theta, m[1, 0] * z + m[1, 1] * theta

    def inverse(self, Z, Y):
        zt = np.linalg.solve(self.matrix, np.vstack([np.ravel(Z), np.ravel(Y)]))
        return zt[0].reshape(np.shape(Z)), zt[1].reshape(np.shape(Y))

    def oscillation_amplitude(self, alpha: complex, beta: complex) -> float:
        """Amplitude of the overlap oscillation along Z."""
        return abs(alpha * beta) / self.K

    def z_amplitude(self, alpha: complex, beta: complex) -> float:
        """The same oscillation projected on the particle coordinate."""
        return abs(alpha * beta) * self.k / self.K**2
