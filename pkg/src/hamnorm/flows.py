"""Numerical ground truth: Hamiltonian vector fields evaluated from series,
fixed-step RK4 integration, Poincare sections, and semi-analytic orbits.

State vectors are laid out as ``[p (n1) | q (n1) | x (n2) | y (n2)]`` with the
oscillator pairs in Cartesian form ``x = sqrt(2J) cos(phi)``,
``y = sqrt(2J) sin(phi)`` (``z = (x + i y)/sqrt(2)``): the action-angle chart
is singular exactly at ``J = 0`` where elliptic tori live, so integration
always runs in the Cartesian chart and converts on input/output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .series import PoissonSeries, Signature

__all__ = [
    "PhasePoint",
    "SectionSpec",
    "Trajectory",
    "VectorField",
    "hamiltonian_field",
    "rk4_integrate",
    "poincare_sections",
    "semi_analytic_orbit",
    "orbit_discrepancy",
    "lie_coordinate_flow",
]

_SQRT2 = math.sqrt(2.0)


@dataclass
class PhasePoint:
    """Phase-space point ``(p, q, J, phi)``; angles stored unwrapped."""

    p: np.ndarray
    q: np.ndarray
    J: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        self.p = np.atleast_1d(np.asarray(self.p, dtype=float))
        self.q = np.atleast_1d(np.asarray(self.q, dtype=float))
        self.J = np.atleast_1d(np.asarray(self.J, dtype=float)) if np.size(self.J) else np.zeros(0)
        self.phi = (
            np.atleast_1d(np.asarray(self.phi, dtype=float)) if np.size(self.phi) else np.zeros(0)
        )
        if np.any(self.J < 0):
            raise ValueError("J must be non-negative")

    @property
    def z(self):
        return np.sqrt(self.J) * np.exp(1j * self.phi)

    def to_vec(self):
        x = np.sqrt(2 * self.J) * np.cos(self.phi)
        y = np.sqrt(2 * self.J) * np.sin(self.phi)
        return np.concatenate([self.p, self.q, x, y])

    @classmethod
    def from_vec(cls, sig: Signature, vec):
        n1, n2 = sig.n1, sig.n2
        vec = np.asarray(vec, dtype=float)
        p, q = vec[:n1], vec[n1 : 2 * n1]
        x = vec[2 * n1 : 2 * n1 + n2]
        y = vec[2 * n1 + n2 :]
        J = 0.5 * (x * x + y * y)
        phi = np.arctan2(y, x) if n2 else np.zeros(0)
        return cls(p, q, J, phi)


def _split_vec(sig, vec):
    n1, n2 = sig.n1, sig.n2
    p, q = vec[:n1], vec[n1 : 2 * n1]
    z = (vec[2 * n1 : 2 * n1 + n2] + 1j * vec[2 * n1 + n2 :]) / _SQRT2
    return p, q, z


@dataclass
class SectionSpec:
    """Poincare section: ``vec[coordinate] = crossing_value`` kept only when
    ``sign(vec[gate_index]) == gate_sign`` (vec layout ``[p, q, x, y]``)."""

    coordinate: int
    crossing_value: float = 0.0
    gate_index: int | None = None
    gate_sign: int = 1


class VectorField:
    """Callable Hamiltonian vector field on flat state vectors.

    ``dq/dt = dH/dp``, ``dp/dt = -dH/dq``, ``dz/dt = i dH/dzbar`` (so the
    oscillator part rotates consistently with ``{z, zbar} = i``)."""

    def __init__(self, H: PoissonSeries):
        self.H = H
        sig = H.sig
        self.sig = sig
        self._dp = [H.dp(j) for j in range(sig.n1)]
        self._dq = [H.dq(j) for j in range(sig.n1)]
        self._dzbar = [H.dzbar(j) for j in range(sig.n2)]

    def __call__(self, vec):
        p, q, z = _split_vec(self.sig, vec)
        dq = [s.evaluate_complex(p, q, z).real for s in self._dp]
        dp = [-s.evaluate_complex(p, q, z).real for s in self._dq]
        zdot = np.array(
            [1j * s.evaluate_complex(p, q, z) for s in self._dzbar],
            dtype=np.complex128,
        )
        return np.concatenate(
            [dp, dq, _SQRT2 * zdot.real, _SQRT2 * zdot.imag]
        )

    def energy(self, vec):
        p, q, z = _split_vec(self.sig, vec)
        return self.H.evaluate_complex(p, q, z).real


def hamiltonian_field(H: PoissonSeries, x: PhasePoint):
    """Tangent vector at ``x`` in the flat ``[p, q, x, y]`` layout."""
    return VectorField(H)(x.to_vec())


@dataclass
class Trajectory:
    sig: Signature
    times: np.ndarray
    states: np.ndarray  # (n_samples, state_dim), vec layout
    energy_drift: float = 0.0
    domain_flag: bool = False  # state left the series' reliable domain

    def point(self, i) -> PhasePoint:
        return PhasePoint.from_vec(self.sig, self.states[i])


def _rk4_step(field, vec, dt):
    k1 = field(vec)
    k2 = field(vec + 0.5 * dt * k1)
    k3 = field(vec + 0.5 * dt * k2)
    k4 = field(vec + dt * k3)
    return vec + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def rk4_integrate(
    H: PoissonSeries,
    x0: PhasePoint,
    dt: float,
    n_steps: int,
    record_every: int = 1,
    domain_norm_guard: float = 1e6,
) -> Trajectory:
    """Classical fixed-step 4th-order Runge-Kutta; records the relative
    energy drift along the way.  A state whose norm exceeds the guard flags
    the trajectory as having left the reliable domain (not fatal)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    field = VectorField(H)
    vec = x0.to_vec()
    e0 = field.energy(vec)
    times = [0.0]
    states = [vec]
    drift = 0.0
    flagged = False
    for i in range(1, n_steps + 1):
        vec = _rk4_step(field, vec, dt)
        if not flagged and np.max(np.abs(vec)) > domain_norm_guard:
            flagged = True
        if i % record_every == 0 or i == n_steps:
            times.append(i * dt)
            states.append(vec)
            drift = max(drift, abs(field.energy(vec) - e0))
    scale = max(abs(e0), 1e-300)
    return Trajectory(
        H.sig, np.array(times), np.array(states), drift / scale, flagged
    )


def poincare_sections(
    H: PoissonSeries,
    x0: PhasePoint,
    spec: SectionSpec,
    n_points: int,
    dt: float,
    max_steps: int = 2_000_000,
    refine_tol: float = 1e-12,
):
    """Section crossings of the RK4 flow.

    Detection by sign change of the section coordinate between steps, then
    Newton refinement along the flow until the coordinate is below
    ``refine_tol`` in absolute value.  Returns ``(points, times, complete)``
    where ``complete`` is False if the step budget ran out first."""
    field = VectorField(H)
    vec = x0.to_vec()
    c = spec.coordinate
    points, times = [], []
    g_prev = vec[c] - spec.crossing_value
    t = 0.0
    for _ in range(max_steps):
        new = _rk4_step(field, vec, dt)
        g_new = new[c] - spec.crossing_value
        if g_prev != 0.0 and np.sign(g_new) != np.sign(g_prev) and g_new != 0.0:
            # refine from the pre-crossing state
            tau = dt * g_prev / (g_prev - g_new)
            state = vec
            base_t = t
            for _ in range(60):
                cand = _rk4_step(field, state, tau) if tau != 0 else state
                g = cand[c] - spec.crossing_value
                if abs(g) < refine_tol:
                    state = cand
                    base_t += tau
                    break
                deriv = field(cand)[c]
                if deriv == 0.0:
                    break
                state = cand
                base_t += tau
                tau = -g / deriv
            else:
                cand = state
            crossing = state
            ok = abs(crossing[c] - spec.crossing_value) < refine_tol
            gate = (
                spec.gate_index is None
                or np.sign(crossing[spec.gate_index]) == spec.gate_sign
            )
            if ok and gate:
                points.append(crossing)
                times.append(base_t)
                if len(points) >= n_points:
                    return np.array(points), np.array(times), True
        vec = new
        t += dt
        g_prev = g_new
    if not points:
        return np.zeros((0, vec.size)), np.zeros(0), False
    return np.array(points), np.array(times), False


def semi_analytic_orbit(torus_map, omega, Q0, t_grid, n2: int = 0):
    """Sample ``psi(0, Q0 + omega t, 0, 0)`` on ``t_grid``; ``torus_map`` is
    the composed normal-form coordinate map (see kolmogorov.torus_map)."""
    omega = np.asarray(omega, dtype=float)
    Q0 = np.asarray(Q0, dtype=float)
    out = []
    for t in np.asarray(t_grid, dtype=float):
        pt = PhasePoint(
            np.zeros_like(omega), Q0 + omega * t, np.zeros(n2), np.zeros(n2)
        )
        out.append(torus_map(pt).to_vec())
    return np.array(out)


def orbit_discrepancy(A, B, sig: Signature):
    """Sup and RMS pointwise distance between two trajectories on a common
    time grid (states in vec layout).  Action and Cartesian oscillator
    components compare by difference; angle components on the circle."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise ValueError("trajectory grids do not match")
    d = A - B
    n1 = sig.n1
    dq = d[:, n1 : 2 * n1]
    d[:, n1 : 2 * n1] = np.arctan2(np.sin(dq), np.cos(dq))
    dist = np.sqrt(np.sum(d * d, axis=1))
    return float(dist.max()), float(np.sqrt(np.mean(dist * dist)))


# -- Lie-series coordinate flows ---------------------------------------------


def lie_coordinate_flow(chi: PoissonSeries, max_j: int = 400):
    """Time-1 flow of ``chi`` as a map on :class:`PhasePoint`.

    The new coordinates are the Lie images of the coordinate functions:
    ``exp(L_chi) p_j`` and ``exp(L_chi) x_j / y_j`` are Poisson series; the
    angle ``q_j`` transforms additively through
    ``q_j + sum_i (1/(i+1)!) L^i (dchi/dp_j)``."""
    from .series import lie_series, mul, poisson_bracket  # local: hot import

    sig, policy = chi.sig, chi.policy
    p_imgs, q_shifts, x_imgs, y_imgs = [], [], [], []
    for j in range(sig.n1):
        ej = [1 if i == j else 0 for i in range(sig.n1)]
        pj = PoissonSeries.from_terms(
            sig, policy,
            [(tuple(ej), (0,) * sig.n1, (0,) * sig.n2, (0,) * sig.n2, 1.0)],
        )
        p_imgs.append(lie_series(chi, pj, max_j))
        g = chi.dp(j)
        total = g
        term = g
        for i in range(1, max_j + 1):
            term = poisson_bracket(term, chi).scale(1.0 / (i + 1.0))
            if term.is_zero():
                break
            total = total + term
        q_shifts.append(total)
    for j in range(sig.n2):
        ej = tuple(1 if i == j else 0 for i in range(sig.n2))
        zj = PoissonSeries.from_terms(
            sig, policy, [((0,) * sig.n1, (0,) * sig.n1, ej, (0,) * sig.n2, 1.0)]
        )
        zbj = zj.conjugate()
        x = (zj + zbj).scale(1 / _SQRT2)
        y = (zj - zbj).scale(-1j / _SQRT2)
        x_imgs.append(lie_series(chi, x, max_j))
        y_imgs.append(lie_series(chi, y, max_j))

    def flow(pt: PhasePoint) -> PhasePoint:
        p, q, z = pt.p, pt.q, pt.z
        new_p = np.array([s.evaluate_complex(p, q, z).real for s in p_imgs])
        new_q = q + np.array(
            [s.evaluate_complex(p, q, z).real for s in q_shifts]
        )
        new_x = np.array([s.evaluate_complex(p, q, z).real for s in x_imgs])
        new_y = np.array([s.evaluate_complex(p, q, z).real for s in y_imgs])
        J = 0.5 * (new_x**2 + new_y**2)
        phi = np.arctan2(new_y, new_x) if sig.n2 else np.zeros(0)
        return PhasePoint(new_p, new_q, J, phi)

    return flow


def compose_flows(log, max_j: int = 400):
    """Composition ``psi = Phi_first o ... o Phi_last`` of the logged
    generating functions: the map sending normal-form coordinates back to the
    original ones (the last generator acts first on the point)."""
    flows = [lie_coordinate_flow(chi, max_j) for (_, _, chi) in log]

    def psi(pt: PhasePoint) -> PhasePoint:
        for f in reversed(flows):
            pt = f(pt)
        return pt

    return psi
