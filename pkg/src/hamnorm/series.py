"""Sparse Poisson series: Taylor-Fourier expansions in actions, angles and
oscillator (Birkhoff) variables, with Poisson brackets and Lie series.

A term is indexed by ``(m, k, a, b)`` and represents::

    c * p^m * exp(i k.q) * z^a * zbar^b,        z_j = sqrt(J_j) exp(i phi_j)

with ``m, k`` of length ``n1`` (action-angle pairs) and ``a, b`` of length
``n2`` (oscillator pairs).  The square-root-action degree of a term is
``ell = 2|m| + |a| + |b|`` and its trigonometric degree is ``|k|`` (l1 norm).

Conventions
-----------
The Poisson bracket is ``{f, g} = sum_j (df/dq_j dg/dp_j - df/dp_j dg/dq_j)``
plus, for every oscillator pair, ``i (df/dz_j dg/dzbar_j - df/dzbar_j
dg/dz_j)``; equivalently ``{z_j, zbar_j} = i``.  With this sign the Lie
derivative ``L_chi f = {f, chi}`` generates the time-1 flow of ``chi`` through
Hamilton's equations ``dp/dt = -dchi/dq``, ``dq/dt = +dchi/dp``.

Real series store both ``+k`` and ``-k`` harmonics; the key ``(m, -k, b, a)``
must carry the complex-conjugate coefficient of ``(m, k, a, b)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

__all__ = [
    "Signature",
    "TermKey",
    "TruncationPolicy",
    "PoissonSeries",
    "ClassGrid",
    "add",
    "mul",
    "poisson_bracket",
    "lie_series",
    "classify",
    "angular_average",
    "norm",
    "evaluate",
    "LieSeriesNonTermination",
]

# Pairs per product kernel chunk; bounds peak memory of the outer products.
_CHUNK_PAIRS = 4_000_000


class LieSeriesNonTermination(RuntimeError):
    """Raised when a Lie series fails to terminate within the iteration cap
    (a symptom of a misconfigured truncation policy)."""


@dataclass(frozen=True)
class Signature:
    """Number of action-angle pairs ``n1`` and oscillator pairs ``n2``.

    ``n2 = 0`` recovers the pure action-angle setting used by the Kolmogorov
    algorithm; ``n1 = 0`` the purely oscillatory one (the secular model)."""

    n1: int
    n2: int = 0

    def __post_init__(self):
        if self.n1 < 0 or self.n2 < 0 or self.n1 + self.n2 < 1:
            raise ValueError(f"invalid signature n1={self.n1}, n2={self.n2}")

    @property
    def width(self) -> int:
        return 2 * self.n1 + 2 * self.n2


class TermKey(NamedTuple):
    m: tuple
    k: tuple
    a: tuple
    b: tuple


@dataclass(frozen=True)
class TruncationPolicy:
    """Truncation bounds: max sqrt-action degree ``ell_max``, max trig degree
    ``trig_max`` (a multiple of the trig quantum ``K``), and the coefficient
    drop threshold ``drop_eps`` (default: drop exact zeros only)."""

    ell_max: int
    trig_max: int
    K: int = 1
    drop_eps: float = 1e-300

    def __post_init__(self):
        if self.ell_max < 2:
            raise ValueError("ell_max must be >= 2")
        if self.K < 1 or self.trig_max % self.K != 0:
            raise ValueError("trig_max must be a positive multiple of K")
        if self.drop_eps <= 0:
            raise ValueError("drop_eps must be positive")

    @property
    def s_max(self) -> int:
        return self.trig_max // self.K


def _dedupe(sig: Signature, exps: np.ndarray, coeffs: np.ndarray):
    """Canonically sort exponent rows and merge duplicates."""
    if len(coeffs) == 0:
        return exps.reshape(0, sig.width), coeffs
    order = np.lexsort(exps.T[::-1])
    exps = exps[order]
    coeffs = coeffs[order]
    if len(coeffs) > 1:
        boundary = np.empty(len(coeffs), dtype=bool)
        boundary[0] = True
        np.any(exps[1:] != exps[:-1], axis=1, out=boundary[1:])
        starts = np.flatnonzero(boundary)
        exps = exps[starts]
        coeffs = np.add.reduceat(coeffs, starts)
    return exps, coeffs


class PoissonSeries:
    """Immutable sparse Poisson series.

    Terms are held as a canonically ordered integer exponent matrix (columns:
    ``m`` then ``k`` then ``a`` then ``b``) plus a complex coefficient vector.
    All arithmetic re-truncates per the attached :class:`TruncationPolicy`.
    """

    __slots__ = ("sig", "policy", "exps", "coeffs")

    def __init__(self, sig, policy, exps=None, coeffs=None, _truncate=True):
        self.sig = sig
        self.policy = policy
        if exps is None:
            exps = np.zeros((0, sig.width), dtype=np.int64)
            coeffs = np.zeros(0, dtype=np.complex128)
        exps = np.asarray(exps, dtype=np.int64).reshape(-1, sig.width)
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        exps, coeffs = _dedupe(sig, exps, coeffs)
        if _truncate:
            keep = (
                (_ell_of(sig, exps) <= policy.ell_max)
                & (_trig_of(sig, exps) <= policy.trig_max)
                & (np.abs(coeffs) >= policy.drop_eps)
            )
            if not keep.all():
                exps = exps[keep]
                coeffs = coeffs[keep]
        else:
            keep = np.abs(coeffs) >= policy.drop_eps
            if not keep.all():
                exps = exps[keep]
                coeffs = coeffs[keep]
        self.exps = exps
        self.coeffs = coeffs
        self.exps.setflags(write=False)
        self.coeffs.setflags(write=False)

    # -- construction -----------------------------------------------------

    @classmethod
    def zero(cls, sig, policy):
        return cls(sig, policy)

    @classmethod
    def from_terms(cls, sig, policy, terms):
        """Build a series from ``(m, k, a, b, coeff)`` tuples (sequences of
        ints for the exponents)."""
        rows, cs = [], []
        for m, k, a, b, c in terms:
            rows.append(list(m) + list(k) + list(a) + list(b))
            cs.append(c)
        if not rows:
            return cls.zero(sig, policy)
        return cls(sig, policy, np.array(rows), np.array(cs))

    @classmethod
    def constant(cls, sig, policy, value):
        z1, z2 = (0,) * sig.n1, (0,) * sig.n2
        return cls.from_terms(sig, policy, [(z1, z1, z2, z2, value)])

    @classmethod
    def action_linear(cls, sig, policy, omega):
        """``omega . p`` for a frequency vector of length ``n1``."""
        terms = []
        z1, z2 = (0,) * sig.n1, (0,) * sig.n2
        for j, w in enumerate(omega):
            if w != 0.0:
                m = tuple(1 if i == j else 0 for i in range(sig.n1))
                terms.append((m, z1, z2, z2, w))
        return cls.from_terms(sig, policy, terms)

    @classmethod
    def oscillator_linear(cls, sig, policy, Omega):
        """``Omega . J`` with ``J_j = z_j zbar_j``."""
        terms = []
        z1, z2 = (0,) * sig.n1, (0,) * sig.n2
        for j, w in enumerate(Omega):
            if w != 0.0:
                e = tuple(1 if i == j else 0 for i in range(sig.n2))
                terms.append((z1, z1, e, e, w))
        return cls.from_terms(sig, policy, terms)

    @classmethod
    def cosine(cls, sig, policy, k, amplitude=1.0, m=None, a=None, b=None):
        """``amplitude * p^m (z^a zbar^b + conj) cos-like pair`` built from the
        harmonic ``k``: returns ``amplitude * X + conj(X)`` with
        ``X = (1/2) p^m e^{i k.q} z^a zbar^b``; for plain cosines leave
        ``a``/``b`` empty."""
        m = tuple(m) if m is not None else (0,) * sig.n1
        a = tuple(a) if a is not None else (0,) * sig.n2
        b = tuple(b) if b is not None else (0,) * sig.n2
        k = tuple(k)
        mk = tuple(-x for x in k)
        half = 0.5 * amplitude
        return cls.from_terms(
            sig, policy, [(m, k, a, b, half), (m, mk, b, a, np.conj(half))]
        )

    @classmethod
    def sine(cls, sig, policy, k, amplitude=1.0, m=None, a=None, b=None):
        """Like :meth:`cosine` but with ``sin``: ``X/(i) - conj``."""
        m = tuple(m) if m is not None else (0,) * sig.n1
        a = tuple(a) if a is not None else (0,) * sig.n2
        b = tuple(b) if b is not None else (0,) * sig.n2
        k = tuple(k)
        mk = tuple(-x for x in k)
        half = amplitude / 2j
        return cls.from_terms(
            sig, policy, [(m, k, a, b, half), (m, mk, b, a, np.conj(half))]
        )

    # -- views ------------------------------------------------------------

    def __len__(self):
        return len(self.coeffs)

    def is_zero(self):
        return len(self.coeffs) == 0

    def items(self):
        n1, n2 = self.sig.n1, self.sig.n2
        for row, c in zip(self.exps, self.coeffs):
            row = [int(x) for x in row]
            yield TermKey(
                tuple(row[:n1]),
                tuple(row[n1 : 2 * n1]),
                tuple(row[2 * n1 : 2 * n1 + n2]),
                tuple(row[2 * n1 + n2 :]),
            ), complex(c)

    def to_dict(self):
        return dict(self.items())

    def coefficient(self, m, k, a=None, b=None):
        a = list(a) if a is not None else [0] * self.sig.n2
        b = list(b) if b is not None else [0] * self.sig.n2
        row = np.array(list(m) + list(k) + a + b, dtype=np.int64)
        hit = np.all(self.exps == row, axis=1)
        idx = np.flatnonzero(hit)
        return complex(self.coeffs[idx[0]]) if len(idx) else 0.0 + 0.0j

    def ell_degrees(self):
        return _ell_of(self.sig, self.exps)

    def trig_degrees(self):
        return _trig_of(self.sig, self.exps)

    def norm(self):
        return float(np.sum(np.abs(self.coeffs)))

    def max_ell(self):
        return 0 if self.is_zero() else int(self.ell_degrees().max())

    def is_real(self, tol=0.0):
        """Check the conjugate-pair invariant: key (m,-k,b,a) carries the
        conjugate coefficient (within ``tol`` absolute)."""
        conj = _conjugate_rows(self.sig, self.exps)
        order = np.lexsort(conj.T[::-1])
        if not np.array_equal(conj[order], self.exps):
            return False
        return bool(np.all(np.abs(np.conj(self.coeffs[order]) - self.coeffs) <= tol))

    def conjugate(self):
        return PoissonSeries(
            self.sig,
            self.policy,
            _conjugate_rows(self.sig, self.exps),
            np.conj(self.coeffs),
            _truncate=False,
        )

    def with_policy(self, policy):
        return PoissonSeries(self.sig, policy, self.exps, self.coeffs)

    def __repr__(self):
        return (
            f"PoissonSeries(n1={self.sig.n1}, n2={self.sig.n2}, "
            f"terms={len(self)}, norm={self.norm():.3e})"
        )

    # -- arithmetic -------------------------------------------------------

    def _check_compatible(self, other):
        if self.sig != other.sig:
            raise ValueError("signature mismatch")
        if self.policy != other.policy:
            raise ValueError("policy mismatch")

    def __add__(self, other):
        self._check_compatible(other)
        return PoissonSeries(
            self.sig,
            self.policy,
            np.concatenate([self.exps, other.exps]),
            np.concatenate([self.coeffs, other.coeffs]),
            _truncate=False,
        )

    def __sub__(self, other):
        return self + (-other)

    def __neg__(self):
        return self.scale(-1.0)

    def scale(self, c):
        return PoissonSeries(
            self.sig, self.policy, self.exps, self.coeffs * c, _truncate=False
        )

    def __mul__(self, other):
        if np.isscalar(other):
            return self.scale(other)
        return mul(self, other)

    __rmul__ = __mul__

    # -- term-wise derivatives ---------------------------------------------

    def dp(self, j):
        col = j
        w = self.exps[:, col].astype(np.complex128)
        exps = self.exps.copy()
        exps[:, col] -= 1
        keep = w != 0
        return PoissonSeries(
            self.sig, self.policy, exps[keep], (self.coeffs * w)[keep], _truncate=False
        )

    def dq(self, j):
        col = self.sig.n1 + j
        w = 1j * self.exps[:, col].astype(np.complex128)
        keep = w != 0
        return PoissonSeries(
            self.sig, self.policy, self.exps[keep], (self.coeffs * w)[keep],
            _truncate=False,
        )

    def dz(self, j):
        col = 2 * self.sig.n1 + j
        w = self.exps[:, col].astype(np.complex128)
        exps = self.exps.copy()
        exps[:, col] -= 1
        keep = w != 0
        return PoissonSeries(
            self.sig, self.policy, exps[keep], (self.coeffs * w)[keep], _truncate=False
        )

    def dzbar(self, j):
        col = 2 * self.sig.n1 + self.sig.n2 + j
        w = self.exps[:, col].astype(np.complex128)
        exps = self.exps.copy()
        exps[:, col] -= 1
        keep = w != 0
        return PoissonSeries(
            self.sig, self.policy, exps[keep], (self.coeffs * w)[keep], _truncate=False
        )

    # -- evaluation ---------------------------------------------------------

    def evaluate_complex(self, p=(), q=(), z=()):
        """Raw complex value at a numeric phase point (``z_j`` complex)."""
        if self.is_zero():
            return 0.0 + 0.0j
        n1, n2 = self.sig.n1, self.sig.n2
        p = np.asarray(p, dtype=float).reshape(n1)
        q = np.asarray(q, dtype=float).reshape(n1)
        z = np.asarray(z, dtype=np.complex128).reshape(n2)
        vals = self.coeffs * np.exp(1j * (self.exps[:, n1 : 2 * n1] @ q))
        if n1:
            with np.errstate(divide="ignore", invalid="ignore"):
                vals = vals * np.prod(
                    p[None, :] ** self.exps[:, :n1], axis=1
                )
        if n2:
            vals = vals * np.prod(
                z[None, :] ** self.exps[:, 2 * n1 : 2 * n1 + n2], axis=1
            )
            vals = vals * np.prod(
                np.conj(z)[None, :] ** self.exps[:, 2 * n1 + n2 :], axis=1
            )
        return complex(np.sum(vals))


def _ell_of(sig, exps):
    n1 = sig.n1
    return 2 * np.abs(exps[:, :n1]).sum(axis=1) + np.abs(
        exps[:, 2 * n1 :]
    ).sum(axis=1)


def _trig_of(sig, exps):
    n1 = sig.n1
    return np.abs(exps[:, n1 : 2 * n1]).sum(axis=1)


def _conjugate_rows(sig, exps):
    n1, n2 = sig.n1, sig.n2
    out = exps.copy()
    out[:, n1 : 2 * n1] = -exps[:, n1 : 2 * n1]
    out[:, 2 * n1 : 2 * n1 + n2] = exps[:, 2 * n1 + n2 :]
    out[:, 2 * n1 + n2 :] = exps[:, 2 * n1 : 2 * n1 + n2]
    return out


# -- module-level operations ------------------------------------------------


def add(f: PoissonSeries, g: PoissonSeries) -> PoissonSeries:
    """Coefficient-wise sum (same signature and policy)."""
    return f + g


def mul(f: PoissonSeries, g: PoissonSeries) -> PoissonSeries:
    """Product of two series, truncated per the shared policy.

    The pairwise term products are generated in chunks, then accumulated over
    a canonically sorted key set, so the result is deterministic."""
    f._check_compatible(g)
    if f.is_zero() or g.is_zero():
        return PoissonSeries.zero(f.sig, f.policy)
    if len(f) > len(g):
        f, g = g, f
    sig, policy = f.sig, f.policy
    nf, ng = len(f), len(g)
    rows_per_chunk = max(1, _CHUNK_PAIRS // ng)
    pieces_e, pieces_c = [], []
    for start in range(0, nf, rows_per_chunk):
        fe = f.exps[start : start + rows_per_chunk]
        fc = f.coeffs[start : start + rows_per_chunk]
        ee = (fe[:, None, :] + g.exps[None, :, :]).reshape(-1, sig.width)
        cc = (fc[:, None] * g.coeffs[None, :]).reshape(-1)
        keep = (_ell_of(sig, ee) <= policy.ell_max) & (
            _trig_of(sig, ee) <= policy.trig_max
        )
        ee, cc = ee[keep], cc[keep]
        ee, cc = _dedupe(sig, ee, cc)
        pieces_e.append(ee)
        pieces_c.append(cc)
    return PoissonSeries(
        sig, policy, np.concatenate(pieces_e), np.concatenate(pieces_c),
        _truncate=False,
    )


def poisson_bracket(
    f: PoissonSeries,
    g: PoissonSeries,
    pq_pairs: Iterable[int] | None = None,
    osc_pairs: Iterable[int] | None = None,
) -> PoissonSeries:
    """Poisson bracket ``{f, g}``.

    ``pq_pairs``/``osc_pairs`` restrict the derivative sums to a subset of
    conjugate pairs (used by the secular split brackets); ``None`` means all.
    """
    f._check_compatible(g)
    sig = f.sig
    out = PoissonSeries.zero(sig, f.policy)
    pq = range(sig.n1) if pq_pairs is None else pq_pairs
    osc = range(sig.n2) if osc_pairs is None else osc_pairs
    for j in pq:
        out = out + mul(f.dq(j), g.dp(j)) - mul(f.dp(j), g.dq(j))
    for j in osc:
        term = mul(f.dz(j), g.dzbar(j)) - mul(f.dzbar(j), g.dz(j))
        out = out + term.scale(1j)
    return out


def lie_series(
    chi: PoissonSeries, f: PoissonSeries, max_j: int = 400
) -> PoissonSeries:
    """``exp(L_chi) f = sum_j (1/j!) L_chi^j f`` with ``L_chi f = {f, chi}``.

    Iteration stops when the running term vanishes under the truncation
    policy; exceeding ``max_j`` raises :class:`LieSeriesNonTermination`."""
    total = f
    term = f
    for j in range(1, max_j + 1):
        term = poisson_bracket(term, chi).scale(1.0 / j)
        if term.is_zero():
            return total
        total = total + term
    raise LieSeriesNonTermination(
        f"Lie series did not terminate within {max_j} iterations "
        f"(residual norm {term.norm():.3e})"
    )


def lie_series_tail(
    chi: PoissonSeries, f: PoissonSeries, max_j: int = 400
):
    """Yield the "self-interaction" tail terms ``(j, (j/(j+1)!) L_chi^j f)``
    for ``j >= 1``.

    This is the image of ``N + f`` under ``exp(L_chi)`` minus ``N + <f>``
    when ``chi`` solves ``{N, chi} + f = <f>`` against the normal-form linear
    part ``N``; the prescription used by the normalization steps."""
    term = f  # running (1/j!) L^j f
    for j in range(1, max_j + 1):
        term = poisson_bracket(term, chi).scale(1.0 / j)
        if term.is_zero():
            return
        yield j, term.scale(j / (j + 1.0))
    raise LieSeriesNonTermination(
        f"Lie tail did not terminate within {max_j} iterations"
    )


def angular_average(f: PoissonSeries, over: str = "both") -> PoissonSeries:
    """Average over the ``q`` angles (keep ``k = 0``), the ``phi`` angles
    (keep ``a = b``) or both."""
    if over not in ("q", "phi", "both"):
        raise ValueError("over must be 'q', 'phi' or 'both'")
    sig = f.sig
    n1, n2 = sig.n1, sig.n2
    keep = np.ones(len(f), dtype=bool)
    if over in ("q", "both"):
        keep &= np.all(f.exps[:, n1 : 2 * n1] == 0, axis=1)
    if over in ("phi", "both"):
        keep &= np.all(
            f.exps[:, 2 * n1 : 2 * n1 + n2] == f.exps[:, 2 * n1 + n2 :], axis=1
        )
    return PoissonSeries(sig, f.policy, f.exps[keep], f.coeffs[keep], _truncate=False)


def norm(f: PoissonSeries) -> float:
    """Sum of the absolute values of the coefficients."""
    return f.norm()


def evaluate(f: PoissonSeries, p=(), q=(), J=None, phi=None, z=None) -> float:
    """Numeric value at a phase point; the imaginary residue must stay below
    ``1e-10 * norm(f)`` (reality check) and the real part is returned.

    Oscillator coordinates may be given either as ``(J, phi)`` (``J_j >= 0``)
    or directly as complex ``z``."""
    if z is None:
        if f.sig.n2 == 0:
            z = ()
        else:
            J = np.asarray(J, dtype=float)
            phi = np.asarray(phi, dtype=float)
            if np.any(J < 0):
                raise ValueError("J must be non-negative")
            z = np.sqrt(J) * np.exp(1j * phi)
    val = f.evaluate_complex(p, q, z)
    bound = 1e-10 * max(f.norm(), 1e-300)
    if abs(val.imag) > bound:
        raise ArithmeticError(
            f"imaginary residue {val.imag:.3e} exceeds {bound:.3e}: "
            "reality invariant broken"
        )
    return val.real


# -- class bookkeeping --------------------------------------------------------


class ClassGrid:
    """Double-indexed family of series cells ``(ell, s)``.

    ``ell`` is the sqrt-action degree, ``s`` the trig-order index: cell
    ``(ell, s)`` may contain harmonics with ``|k| <= s K`` (class membership).
    :func:`classify` places every term at its minimal ``s = ceil(|k| / K)``,
    which makes the cells disjoint bands ``(s-1) K < |k| <= s K``; the
    normalization algorithms afterwards maintain the looser class invariant
    while tracking perturbation orders."""

    def __init__(self, sig, policy):
        self.sig = sig
        self.policy = policy
        self.cells: dict[tuple[int, int], PoissonSeries] = {}

    def cell(self, ell, s) -> PoissonSeries:
        return self.cells.get(
            (ell, s), PoissonSeries.zero(self.sig, self.policy)
        )

    def put(self, ell, s, series):
        if series.is_zero():
            self.cells.pop((ell, s), None)
        else:
            self.cells[(ell, s)] = series

    def accumulate(self, ell, s, series):
        if not series.is_zero():
            self.put(ell, s, self.cell(ell, s) + series)

    def pop(self, ell, s) -> PoissonSeries:
        return self.cells.pop(
            (ell, s), PoissonSeries.zero(self.sig, self.policy)
        )

    def items(self):
        return sorted(self.cells.items())

    def total(self) -> PoissonSeries:
        out = PoissonSeries.zero(self.sig, self.policy)
        for _, series in self.items():
            out = out + series
        return out

    def copy(self):
        g = ClassGrid(self.sig, self.policy)
        g.cells = dict(self.cells)
        return g

    def validate(self, strict=False):
        """Check cell membership: ``ell`` exact, ``|k| <= s K``; with
        ``strict`` also the disjoint band ``(s-1) K < |k|`` for ``s >= 1``."""
        K = self.policy.K
        for (ell, s), f in self.cells.items():
            if np.any(f.ell_degrees() != ell):
                raise AssertionError(f"cell ({ell},{s}): wrong ell degree")
            trig = f.trig_degrees()
            if np.any(trig > s * K):
                raise AssertionError(f"cell ({ell},{s}): |k| > sK")
            if strict and s >= 1 and np.any(trig <= (s - 1) * K):
                raise AssertionError(f"cell ({ell},{s}): |k| <= (s-1)K")
        return True


def classify(f: PoissonSeries) -> ClassGrid:
    """Split a series into ``(ell, s)`` cells with minimal ``s``; reassembling
    the grid reproduces the series exactly."""
    grid = ClassGrid(f.sig, f.policy)
    if f.is_zero():
        return grid
    K = f.policy.K
    ell = f.ell_degrees()
    s = -(-f.trig_degrees() // K)  # ceil division; s = 0 iff k = 0
    if np.any(ell > f.policy.ell_max) or np.any(s > f.policy.s_max):
        raise ValueError("term exceeds grid bounds")
    for e, sv in sorted({(int(x), int(y)) for x, y in zip(ell, s)}):
        keep = (ell == e) & (s == sv)
        grid.put(
            e,
            sv,
            PoissonSeries(
                f.sig, f.policy, f.exps[keep], f.coeffs[keep], _truncate=False
            ),
        )
    return grid


def factorial(j: int) -> float:
    return float(math.factorial(j))
