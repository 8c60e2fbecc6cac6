"""Kolmogorov normal form by Lie-series normalization.

Each step ``r`` removes, from the expansion

    H = E + omega.p + sum_{ell,s} f_ell^{(s)},      f_ell^{(s)} in P_{ell,sK},

the angle-dependent part independent of the actions (generator ``chi1``,
first homological equation) and the part linear in the actions (generator
``chi2``, second homological equation), both restricted to harmonics
``|k| <= rK``.  Constants accumulate into ``E`` and the zero-harmonic linear
part into ``omega``, which therefore evolves at every step.  Grid cells carry
the perturbation-order label ``s`` of the classes ``P_{ell,sK}``
(``|k| <= sK``); after step ``r`` the cells with sqrt-action degree
``ell <= 2`` and ``s <= r`` are identically zero by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .series import (
    ClassGrid,
    LieSeriesNonTermination,
    PoissonSeries,
    angular_average,
    classify,
    lie_series_tail,
    poisson_bracket,
)

__all__ = [
    "DiophantineParams",
    "SmallDivisorError",
    "KolmogorovState",
    "build_state",
    "solve_homological_1",
    "solve_homological_2",
    "step_stage1",
    "step_stage2",
    "normalize",
    "torus_map",
]

_RESIDUAL_RTOL = 1e-12


class SmallDivisorError(RuntimeError):
    """A divisor ``k . omega (+ lhat . Omega)`` fell below the floor."""

    def __init__(self, k, divisor, lhat=None, step=None, stage=None):
        self.k = tuple(int(x) for x in k)
        self.lhat = tuple(int(x) for x in lhat) if lhat is not None else None
        self.divisor = float(divisor)
        self.step = step
        self.stage = stage
        where = f" at step {step}" if step is not None else ""
        stage_s = f" ({stage})" if stage else ""
        lh = f", lhat={self.lhat}" if self.lhat else ""
        super().__init__(
            f"small divisor {divisor:.3e} for k={self.k}{lh}{where}{stage_s}"
        )


@dataclass(frozen=True)
class DiophantineParams:
    """gamma/tau are diagnostic (the margin gamma/(rK)^tau is reported);
    divisor_floor is the operational non-resonance gate.  A ``None`` floor
    defaults to ``1e-10 * |omega|_2`` at solve time."""

    gamma: float = 1.0
    tau: float | None = None
    divisor_floor: float | None = None

    def floor_for(self, omega, Omega=()):
        if self.divisor_floor is not None:
            return self.divisor_floor
        w = np.linalg.norm(np.concatenate([np.atleast_1d(omega), np.atleast_1d(Omega)])) if len(
            np.atleast_1d(Omega)
        ) else np.linalg.norm(np.atleast_1d(omega))
        return 1e-10 * max(w, 1e-300)


@dataclass
class KolmogorovState:
    E: float
    omega: np.ndarray
    grid: ClassGrid
    log: list = field(default_factory=list)  # (step, kind, chi)
    step: int = 0

    @property
    def sig(self):
        return self.grid.sig

    @property
    def policy(self):
        return self.grid.policy

    def linear_part(self) -> PoissonSeries:
        return PoissonSeries.action_linear(self.sig, self.policy, self.omega)

    def hamiltonian(self) -> PoissonSeries:
        """E + omega.p + all grid cells, reassembled."""
        out = PoissonSeries.constant(self.sig, self.policy, self.E)
        return out + self.linear_part() + self.grid.total()


def build_state(H: PoissonSeries) -> KolmogorovState:
    """Split a full Hamiltonian series into (E, omega, classified grid)."""
    if H.sig.n2 != 0:
        raise ValueError("Kolmogorov normalization expects n2 = 0")
    E = 0.0
    omega = np.zeros(H.sig.n1)
    rest = []
    for key, c in H.items():
        m, k, a, b = key
        if all(x == 0 for x in k):
            if all(x == 0 for x in m):
                E += c.real
                continue
            if sum(m) == 1:
                omega[m.index(1)] += c.real
                continue
        rest.append((m, k, a, b, c))
    grid = classify(PoissonSeries.from_terms(H.sig, H.policy, rest))
    return KolmogorovState(E, omega, grid)


def _solve_divisors(f, omega, Omega, dio, step=None, stage=None):
    """Divide each coefficient of ``f`` by ``i (k.omega + (a-b).Omega)``.

    Returns ``(chi, min_divisor)``; raises :class:`SmallDivisorError` on any
    divisor below the floor.  The ``k = 0, a = b`` terms must have been
    removed by the caller."""
    sig = f.sig
    if f.is_zero():
        return f, np.inf
    n1, n2 = sig.n1, sig.n2
    k = f.exps[:, n1 : 2 * n1]
    lhat = f.exps[:, 2 * n1 : 2 * n1 + n2] - f.exps[:, 2 * n1 + n2 :]
    div = k @ np.asarray(omega, dtype=float)
    Omega = np.atleast_1d(np.asarray(Omega, dtype=float))
    if n2 and Omega.size:
        div = div + lhat @ Omega
    floor = dio.floor_for(omega, Omega if n2 else ())
    worst = int(np.argmin(np.abs(div)))
    if abs(div[worst]) < floor:
        raise SmallDivisorError(
            k[worst], div[worst],
            lhat[worst] if n2 else None, step=step, stage=stage,
        )
    chi = PoissonSeries(
        sig, f.policy, f.exps, f.coeffs / (1j * div), _truncate=False
    )
    return chi, float(np.abs(div[worst]))


def _check_residual(chi, f, linear, label):
    """Hard gate: {linear, chi} + f must vanish (to 1e-12 relative).

    Terms below the policy drop threshold are discarded during the bracket,
    so the residual cannot be certified below ``drop_eps``; that is the
    absolute floor of the check."""
    res = poisson_bracket(linear, chi) + f
    floor = max(_RESIDUAL_RTOL * f.norm(), 1e4 * f.policy.drop_eps, 1e-300)
    if res.norm() > floor:
        raise ArithmeticError(
            f"{label} residual {res.norm():.3e} exceeds "
            f"{_RESIDUAL_RTOL:.0e} * {f.norm():.3e}"
        )


def solve_homological_1(f0, omega, dio: DiophantineParams, step=None):
    """First homological equation: {omega.p, chi1} + f0 = <f0>.

    ``f0`` must contain only ``ell = 0`` terms with ``|k| <= step*K``.
    Returns ``(chi1, avg, min_divisor)``."""
    if not f0.is_zero() and f0.max_ell() != 0:
        raise ValueError("f0 must be action-independent (ell = 0)")
    avg_series = angular_average(f0, "q")
    avg = sum(c for _, c in avg_series.items())
    if abs(avg.imag) > 1e-12 * max(f0.norm(), 1e-300):
        raise ArithmeticError("non-real angular average")
    osc = f0 - avg_series
    chi1, min_div = _solve_divisors(
        osc, omega, (), dio, step=step, stage="chi1"
    )
    lin = PoissonSeries.action_linear(f0.sig, f0.policy, omega)
    _check_residual(chi1, osc, lin, "homological-1")
    return chi1, float(avg.real), min_div


def solve_homological_2(f1, omega, dio: DiophantineParams, step=None):
    """Second homological equation: {omega.p, chi2} + f1 = 0 for ``f1``
    linear in the actions with zero q-average.  Returns ``(chi2,
    min_divisor)``."""
    if not f1.is_zero():
        n1 = f1.sig.n1
        if np.any(_action_deg(f1) != 1) or np.any(
            np.all(f1.exps[:, n1 : 2 * n1] == 0, axis=1)
        ):
            raise ValueError("f1 must be p-linear with k != 0")
    chi2, min_div = _solve_divisors(
        f1, omega, (), dio, step=step, stage="chi2"
    )
    lin = PoissonSeries.action_linear(f1.sig, f1.policy, omega)
    _check_residual(chi2, f1, lin, "homological-2")
    return chi2, min_div


def _action_deg(f):
    return np.abs(f.exps[:, : f.sig.n1]).sum(axis=1)


def apply_generator(grid: ClassGrid, chi, r, ell_chi, max_j=500):
    """Accumulate ``(1/j!) L_chi^j`` of every cell into cells
    ``(ell + j (ell_chi - 2), s + j r)``; sources read before any write."""
    smax = grid.policy.s_max
    contrib = []
    for (ell, s), f in grid.items():
        term = f
        for j in range(1, max_j + 1):
            tell = ell + j * (ell_chi - 2)
            ts = s + j * r
            if tell < 0 or ts > smax:
                break
            term = poisson_bracket(term, chi).scale(1.0 / j)
            if term.is_zero():
                break
            contrib.append((tell, ts, term))
        else:
            raise LieSeriesNonTermination(
                f"grid Lie application exceeded {max_j} iterations"
            )
    for tell, ts, t in contrib:
        grid.accumulate(tell, ts, t)


def _pop_band(grid: ClassGrid, ell, r):
    """Remove and return the union of cells (ell, s<=r) plus the list of
    their source orders (for the exact removal tail)."""
    pieces = []
    for s in range(0, r + 1):
        cell = grid.pop(ell, s)
        if not cell.is_zero():
            pieces.append((s, cell))
    total = PoissonSeries.zero(grid.sig, grid.policy)
    for _, c in pieces:
        total = total + c
    return total, pieces


def _removal_tail(grid, chi, pieces, r, max_j=500):
    """The exact image of (linear part + removed cells) under exp(L_chi) is
    linear part + average + sum_j (j/(j+1)!) L^j (removed); accumulate that
    tail at orders s + j r."""
    smax = grid.policy.s_max
    for s, cell in pieces:
        for j, t in lie_series_tail(chi, cell, max_j):
            ts = s + j * r
            if ts > smax:
                break
            ells = t.ell_degrees()
            if len(ells) == 0:
                continue
            ell = int(ells[0])
            if np.any(ells != ell):  # split mixed degrees (chi inhomogeneous)
                g = classify(t)
                for (e2, _), piece in g.items():
                    grid.accumulate(e2, ts, piece)
            else:
                grid.accumulate(ell, ts, t)


def step_stage1(state: KolmogorovState, chi1, avg, pieces):
    """Apply ``exp(L_chi1)`` (ell-lowering by 2 per bracket), fold the removed
    band into E, then absorb the new zero-harmonic p-linear average into
    omega."""
    r = state.step + 1
    state.E += avg
    apply_generator(state.grid, chi1, r, ell_chi=0)
    # chi1 and the removed band are both ell = 0: the removal tail vanishes
    # identically ({P_0, P_0} has ell = -2), so nothing further to fold back.
    state.log.append((r, "chi1", chi1))
    # frequency update from the q-average of the p-linear band
    for s in range(0, r + 1):
        cell = state.grid.pop(2, s)
        if cell.is_zero():
            continue
        avg_part = angular_average(cell, "q")
        rest = cell - avg_part
        state.grid.put(2, s, rest)
        for key, c in avg_part.items():
            state.omega[key.m.index(1)] += c.real
    return state


def step_stage2(state: KolmogorovState, chi2, pieces):
    """Apply ``exp(L_chi2)`` (ell-preserving) including the j/(j+1)! removal
    tail for the p-linear band killed by chi2."""
    r = state.step + 1
    apply_generator(state.grid, chi2, r, ell_chi=2)
    _removal_tail(state.grid, chi2, pieces, r)
    state.log.append((r, "chi2", chi2))
    state.step = r
    return state


def kolmogorov_step(state: KolmogorovState, dio: DiophantineParams):
    """One full normalization step (both stages); returns the history row."""
    r = state.step + 1
    f0, _ = _pop_band(state.grid, 0, r)
    chi1, avg, min1 = solve_homological_1(f0, state.omega, dio, step=r)
    step_stage1(state, chi1, avg, None)
    f1, pieces = _pop_band(state.grid, 2, r)
    chi2, min2 = solve_homological_2(f1, state.omega, dio, step=r)
    step_stage2(state, chi2, pieces)
    return {
        "r": r,
        "norm_chi1": chi1.norm(),
        "norm_chi2": chi2.norm(),
        "min_divisor_encountered": min(min1, min2),
    }


def normalize(state: KolmogorovState, R_I: int, dio: DiophantineParams):
    """Run ``R_I`` steps from the current one; returns (state, history)."""
    if state.policy.s_max < (state.step + R_I):
        raise ValueError("policy trig_max is too small for the requested steps")
    history = []
    for _ in range(R_I):
        try:
            history.append(kolmogorov_step(state, dio))
        except SmallDivisorError as exc:
            exc.step = state.step + 1
            raise
    return state, history


def torus_map(log, max_j: int = 400):
    """The semi-analytic map ``psi`` from normal-form coordinates ``(P, Q)``
    to the original ones: the composition of the time-1 flows of the logged
    generators, the last-applied generator acting first on the point.
    Evaluating at ``(P=0, Q=Q0+omega t)`` gives the torus orbit."""
    from .flows import compose_flows

    return compose_flows(log, max_j)
