"""Normal form for lower-dimensional elliptic tori.

The Hamiltonian lives in the mixed action-angle/oscillator phase space

    H = E + omega.p + Omega.J + sum_{ell,s} f_ell^(s),

with n1 rotor pairs (p, q) and n2 transverse oscillators written through
z_j = sqrt(J_j) exp(i phi_j).  Each normalization step r has three stages:

* stage 0 removes the purely angular part (generator ``chi0``, divisors
  ``k . omega``) just like the first Kolmogorov stage;
* stage 1 removes the part linear in sqrt(J) (generator ``chi1``, divisors
  ``k . omega +- Omega_j`` -- the first Melnikov condition);
* stage 2 removes the part linear in p (generator ``X2``, divisors
  ``k . omega``) and the sqrt(J)-quadratic angle-dependent part (generator
  ``Y2``, divisors ``k . omega +- Omega_i +- Omega_j`` -- the second
  Melnikov condition); the q-averaged p-linear remainder updates omega, and
  the q-independent sqrt(J)-quadratic remainder is brought to diagonal form
  ``Omega'.J`` by an iterative subsequence of quadratic Lie generators
  ``D2^(m)`` (divisors ``(a - b).Omega``).

After step r the cells with sqrt-action degree ell <= 2 and order label
s <= r are empty and the oscillator quadratic form is diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kolmogorov import (
    DiophantineParams,
    SmallDivisorError,
    _check_residual,
    _pop_band,
    _removal_tail,
    _solve_divisors,
    apply_generator,
    solve_homological_1,
)
from .series import (
    ClassGrid,
    PoissonSeries,
    TruncationPolicy,
    angular_average,
    classify,
    lie_series_tail,
)

__all__ = [
    "MelnikovParams",
    "EllipticState",
    "build_elliptic_state",
    "stage0",
    "stage1",
    "stage2",
    "diagonalize",
    "elliptic_step",
    "normalize_elliptic",
    "elliptic_torus_orbit",
]

_DIAG_CAP = 64


class MelnikovParams(DiophantineParams):
    """Non-resonance gate for the combinations ``k.omega + lhat.Omega`` with
    ``|lhat| <= 2`` (first and second Melnikov conditions plus the plain
    Diophantine one, all enforced through the same divisor floor)."""


@dataclass
class EllipticState:
    E: float
    omega: np.ndarray
    Omega: np.ndarray
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
        lin = PoissonSeries.action_linear(self.sig, self.policy, self.omega)
        return lin + PoissonSeries.oscillator_linear(
            self.sig, self.policy, self.Omega
        )

    def hamiltonian(self) -> PoissonSeries:
        out = PoissonSeries.constant(self.sig, self.policy, self.E)
        return out + self.linear_part() + self.grid.total()


def build_elliptic_state(H: PoissonSeries) -> EllipticState:
    """Split a series into (E, omega, Omega, classified grid).

    The constant, the zero-harmonic p-linear part and the diagonal
    oscillator-quadratic part (``z_j zbar_j = J_j``) form the normal-form
    seed; everything else goes to the grid."""
    if H.sig.n2 == 0:
        raise ValueError("elliptic normalization expects n2 > 0")
    E = 0.0
    omega = np.zeros(H.sig.n1)
    Omega = np.zeros(H.sig.n2)
    rest = []
    for key, c in H.items():
        m, k, a, b = key
        if all(x == 0 for x in k):
            deg = 2 * sum(m) + sum(a) + sum(b)
            if deg == 0:
                E += c.real
                continue
            if deg == 2 and sum(m) == 1:
                omega[m.index(1)] += c.real
                continue
            if deg == 2 and a == b:
                Omega[a.index(1)] += c.real
                continue
        rest.append((m, k, a, b, c))
    grid = classify(PoissonSeries.from_terms(H.sig, H.policy, rest))
    # zero-harmonic low-degree leftovers (e.g. a non-diagonal oscillator
    # quadratic) are order-one perturbations: label them s = 1 so the
    # expansion starts in the required shape (ell <= 2 only at s >= 1)
    for ell in (1, 2):
        cell = grid.pop(ell, 0)
        if not cell.is_zero():
            grid.accumulate(ell, 1, cell)
    return EllipticState(E, omega, Omega, grid)


def _osc_split(f):
    """Split an ell = 2 series into its p-linear and oscillator-quadratic
    parts (they are the only two shapes at this degree)."""
    if f.is_zero():
        return f, f
    plin = np.abs(f.exps[:, : f.sig.n1]).sum(axis=1) == 1
    p_part = PoissonSeries(
        f.sig, f.policy, f.exps[plin], f.coeffs[plin], _truncate=False
    )
    o_part = PoissonSeries(
        f.sig, f.policy, f.exps[~plin], f.coeffs[~plin], _truncate=False
    )
    return p_part, o_part


def _k_split(f):
    """Split into the zero-harmonic (k = 0) and oscillating (k != 0) parts."""
    if f.is_zero():
        return f, f
    n1 = f.sig.n1
    k0 = np.all(f.exps[:, n1 : 2 * n1] == 0, axis=1)
    zero = PoissonSeries(f.sig, f.policy, f.exps[k0], f.coeffs[k0], _truncate=False)
    osc = PoissonSeries(f.sig, f.policy, f.exps[~k0], f.coeffs[~k0], _truncate=False)
    return zero, osc


def _absorb_diagonal(Omega, f):
    """Move the diagonal (a = b) part of a q-independent quadratic series
    into Omega; returns the zero-average remainder."""
    if f.is_zero():
        return f
    avg = angular_average(f, "phi")
    for key, c in avg.items():
        if abs(c.imag) > 1e-12 * max(abs(c), 1e-300):
            raise ArithmeticError("non-real oscillator average")
        Omega[key.a.index(1)] += c.real
    return f - avg


def stage0(state: EllipticState, mel: MelnikovParams):
    """Remove the purely angular band (ell = 0, s <= r); E picks up its
    average.  Returns the minimum divisor met."""
    r = state.step + 1
    f0, _ = _pop_band(state.grid, 0, r)
    chi0, avg, min_div = solve_homological_1(f0, state.omega, mel, step=r)
    state.E += avg
    apply_generator(state.grid, chi0, r, ell_chi=0)
    # chi0 and the removed band are both ell = 0, so the removal tail is
    # identically zero, as in the Kolmogorov first stage.
    state.log.append((r, "chi0", chi0))
    return chi0, min_div


def stage1(state: EllipticState, mel: MelnikovParams):
    """Remove the band linear in sqrt(J) (ell = 1, s <= r); divisors
    ``k.omega +- Omega_j`` (first Melnikov condition; for k = 0 the divisor
    is ``+- Omega_j`` alone)."""
    r = state.step + 1
    f1, pieces = _pop_band(state.grid, 1, r)
    chi1, min_div = _solve_divisors(
        f1, state.omega, state.Omega, mel, step=r, stage="chi1"
    )
    _check_residual(chi1, f1, state.linear_part(), "elliptic stage-1")
    apply_generator(state.grid, chi1, r, ell_chi=1)
    _removal_tail(state.grid, chi1, pieces, r)
    state.log.append((r, "chi1", chi1))
    return chi1, min_div


def stage2(state: EllipticState, mel: MelnikovParams):
    """Remove the ell = 2 band (s <= r): the q-dependent p-linear part via
    ``X2``, the q-dependent quadratic part via ``Y2``; the q-averaged
    p-linear remainder updates omega and the q-independent quadratic
    remainder is diagonalized into Omega."""
    r = state.step + 1

    # the X2 / Y2 / D2 sub-bands must be extracted one at a time: while one
    # generator acts, the other sub-bands are still part of the Hamiltonian
    # and pick up Lie images of their own
    _, pieces = _pop_band(state.grid, 2, r)
    pq_pieces = []
    for s, cell in pieces:
        p_part, o_part = _osc_split(cell)
        pk0, posc = _k_split(p_part)
        for key, c in pk0.items():  # frequency update from the q-average
            state.omega[key.m.index(1)] += c.real
        if not posc.is_zero():
            pq_pieces.append((s, posc))
        if not o_part.is_zero():
            state.grid.accumulate(2, s, o_part)

    f2pq = PoissonSeries.zero(state.sig, state.policy)
    for _, c in pq_pieces:
        f2pq = f2pq + c
    X2, min_x = _solve_divisors(
        f2pq, state.omega, state.Omega, mel, step=r, stage="X2"
    )
    _check_residual(X2, f2pq, state.linear_part(), "elliptic stage-2 X2")
    apply_generator(state.grid, X2, r, ell_chi=2)
    _removal_tail(state.grid, X2, pq_pieces, r)
    state.log.append((r, "X2", X2))

    _, pieces = _pop_band(state.grid, 2, r)
    osc_pieces = []
    for s, cell in pieces:
        p_part, o_part = _osc_split(cell)
        if not p_part.is_zero():
            raise ArithmeticError("p-linear band regenerated during stage 2")
        ok0, oosc = _k_split(o_part)
        if not oosc.is_zero():
            osc_pieces.append((s, oosc))
        if not ok0.is_zero():
            state.grid.accumulate(2, s, ok0)

    f2of = PoissonSeries.zero(state.sig, state.policy)
    for _, c in osc_pieces:
        f2of = f2of + c
    Y2, min_y = _solve_divisors(
        f2of, state.omega, state.Omega, mel, step=r, stage="Y2"
    )
    _check_residual(Y2, f2of, state.linear_part(), "elliptic stage-2 Y2")
    apply_generator(state.grid, Y2, r, ell_chi=2)
    _removal_tail(state.grid, Y2, osc_pieces, r)
    state.log.append((r, "Y2", Y2))

    g2, _ = _pop_band(state.grid, 2, r)
    Omega2, seq, diag = diagonalize(state.Omega, g2, mel, step=r)
    state.Omega = Omega2
    for D2 in seq:
        # D2 is q-independent and quadratic: it preserves both the degree
        # and the order label, so the whole grid is conjugated in place
        apply_generator(state.grid, D2, 0, ell_chi=2)
        state.log.append((r, "D2", D2))
    return X2, Y2, min(min_x, min_y), diag


def diagonalize(Omega, f2JJ: PoissonSeries, mel: MelnikovParams, step=None):
    """Bring ``Omega.J + f2JJ`` (q-independent, quadratic in sqrt(J)) to the
    diagonal form ``Omega'.J`` by a subsequence of quadratic Lie generators.

    Each iteration m solves ``{Omega.J, D2} + g2 = 0`` (divisors
    ``(a - b).Omega``, nonzero under the second Melnikov condition), pushes
    ``g2`` through the removal tail ``sum_j j/(j+1)! L^j g2`` and absorbs the
    new angular average into Omega.  The loop stops when g2 vanishes or
    Omega stops changing in double precision (the leftover is round-off and
    its norm is reported); hard cap at 64 iterations.

    Returns ``(Omega', sequence, diagnostics)`` with diagnostics keys
    ``iters`` and ``residual``."""
    Omega = np.array(Omega, dtype=float)
    sig, policy = f2JJ.sig, f2JJ.policy
    if not f2JJ.is_zero():
        if f2JJ.max_ell() != 2 or np.any(f2JJ.exps[:, : 2 * sig.n1] != 0):
            raise ValueError("f2JJ must be q-independent and quadratic")
    g2 = _absorb_diagonal(Omega, f2JJ)
    seq = []
    scale = max(f2JJ.norm(), 1e-300)
    m = 0
    while not g2.is_zero() and m < _DIAG_CAP:
        m += 1
        D2, _ = _solve_divisors(
            g2, np.zeros(sig.n1), Omega, mel, step=step, stage="D2"
        )
        lin = PoissonSeries.oscillator_linear(sig, policy, Omega)
        _check_residual(D2, g2, lin, "diagonalization")
        seq.append(D2)
        new_g2 = PoissonSeries.zero(sig, policy)
        for _, t in lie_series_tail(D2, g2):
            new_g2 = new_g2 + t
        prev = Omega.copy()
        g2 = _absorb_diagonal(Omega, new_g2)
        if np.array_equal(prev, Omega) and g2.norm() < 1e-14 * scale:
            break
    if m >= _DIAG_CAP and g2.norm() >= 1e-14 * scale:
        raise ArithmeticError(
            f"diagonalization did not converge in {_DIAG_CAP} iterations "
            f"(residual {g2.norm():.3e}); the quadratic part is too large"
        )
    # whatever survives the stopping rule is round-off-level and dropped
    return Omega, seq, {"iters": m, "residual": g2.norm()}


def elliptic_step(state: EllipticState, mel: MelnikovParams):
    """One full three-stage normalization step; returns the history row."""
    r = state.step + 1
    chi0, min0 = stage0(state, mel)
    chi1, min1 = stage1(state, mel)
    X2, Y2, min2, diag = stage2(state, mel)
    state.step = r
    return {
        "r": r,
        "omega": state.omega.copy(),
        "Omega": state.Omega.copy(),
        "norm_chi0": chi0.norm(),
        "norm_chi1": chi1.norm(),
        "norm_X2": X2.norm(),
        "norm_Y2": Y2.norm(),
        "min_divisor_stage0": min0,
        "min_divisor_stage1": min1,
        "min_divisor_stage2": min2,
        "diag_iters": diag["iters"],
        "diag_residual": diag["residual"],
    }


def normalize_elliptic(state: EllipticState, R: int, mel: MelnikovParams):
    """Run ``R`` steps from the current one; returns (state, history)."""
    if state.policy.s_max < (state.step + R):
        raise ValueError("policy trig_max is too small for the requested steps")
    history = []
    for _ in range(R):
        try:
            history.append(elliptic_step(state, mel))
        except SmallDivisorError as exc:
            exc.step = state.step + 1
            raise
    return state, history


def elliptic_torus_orbit(state: EllipticState, Q0, t, max_j: int = 400):
    """Original-coordinate point of the torus orbit at time ``t``: the
    composed normal-form map evaluated at ``(p=0, Q0 + omega t, J=0)``."""
    from .flows import PhasePoint, compose_flows

    psi = compose_flows(state.log, max_j)
    n2 = state.sig.n2
    Q0 = np.atleast_1d(np.asarray(Q0, dtype=float))
    pt = PhasePoint(
        np.zeros(state.sig.n1), Q0 + state.omega * t, np.zeros(n2), np.zeros(n2)
    )
    return psi(pt)
