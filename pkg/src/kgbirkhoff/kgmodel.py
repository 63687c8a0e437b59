"""Truncated Klein-Gordon Hamiltonian on the circle in mode coordinates.

The field ``v`` and its velocity are encoded through ``p = Lambda^(-1/2)
dv/dt`` and ``q = Lambda^(1/2) v`` with ``Lambda = sqrt(-Laplacian + m^2)``
acting diagonally by ``omega_n`` per cluster, and the complex amplitudes
``u = (p + i q)/sqrt(2)``.  Fourier coefficients are taken against the
orthonormal exponentials ``e_k = exp(ikx)/sqrt(2 pi)``; with that
normalization the quadratic energy is ``sum omega |u_k|^2`` and the cluster
actions are ``J_n = sum_{|k|=n} |u_k|^2``.

A nonlinearity ``f(x, v) = sum_p a_p(x) v^p`` (``p >= 3``, finitely many
Fourier modes in ``x``) produces homogeneous Hamiltonian parts whose
monomials obey the momentum selection rule: u slots count ``+k``, ubar
slots ``-k``, and the signed sum plus the modulation index vanishes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .polyalg import HomPoly, State, evaluate, key

SQRT2 = math.sqrt(2.0)


class UnsupportedManifoldError(ValueError):
    """Hamiltonian assembly needs a coupling table off the circle."""


@dataclass
class Nonlinearity:
    """Polynomial nonlinearity ``f(x, v) = sum_p a_p(x) v^p``.

    Parameters
    ----------
    coefficients : dict
        ``p -> a_p`` with integer ``p >= 3`` and real ``a_p`` (the constant
        part of ``a_p(x)``).
    modulation : dict, optional
        ``p -> {h: complex}`` Fourier coefficients of the x-dependent part,
        ``a_p(x) = a_p + sum_h m_h exp(ihx)``; real-valuedness requires
        ``m_{-h} = conj(m_h)``.
    """

    coefficients: dict
    modulation: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coefficients = {int(p): float(a)
                             for p, a in dict(self.coefficients).items()}
        if not self.coefficients:
            raise ValueError("nonlinearity needs at least one term")
        if min(self.coefficients) < 3:
            raise ValueError("nonlinearity must vanish to order >= 3 in v")
        for p, table in self.modulation.items():
            for h, c in table.items():
                partner = table.get(-h, 0j)
                if abs(complex(c).conjugate() - partner) > 1e-12 * abs(c):
                    raise ValueError(
                        f"modulation of degree {p} is not real valued at "
                        f"index {h}")

    @classmethod
    def from_table(cls, table):
        """Build from ``[[p, a_p], ...]`` (the config file format)."""
        return cls({int(p): float(a) for p, a in table})

    def fourier_amplitudes(self, p):
        """Map ``h -> amplitude`` of ``a_p(x)`` (h = 0 carries ``a_p``)."""
        amps = {0: complex(self.coefficients.get(p, 0.0))}
        for h, c in self.modulation.get(p, {}).items():
            amps[h] = amps.get(h, 0j) + complex(c)
        return {h: c for h, c in amps.items() if c != 0}

    def degrees(self):
        degs = set(self.coefficients)
        degs.update(self.modulation)
        return sorted(degs)

    def value(self, x, v):
        """Pointwise ``f(x, v)`` (used by the quadrature oracle)."""
        total = 0.0
        for p in self.degrees():
            a = self.coefficients.get(p, 0.0)
            for h, c in self.modulation.get(p, {}).items():
                a = a + (c * np.exp(1j * h * x)).real
            total = total + a * v ** p
        return total


@dataclass
class PolyHamiltonian:
    """Quadratic part (implicit in the spectrum) plus homogeneous parts."""

    spec: object
    parts: list

    def part(self, degree):
        for p in self.parts:
            if p.degree == degree:
                return p
        return HomPoly.zero(degree)

    def max_degree(self):
        return max((p.degree for p in self.parts), default=2)

    def value(self, state):
        """Total Hamiltonian ``G2 + sum parts`` at ``state``."""
        return g2_value(state, self.spec) + sum(
            evaluate(p, state).real for p in self.parts)


def g2_value(state, spec):
    """Quadratic energy ``sum omega_n |u_mode|^2``."""
    return sum(spec.omega[spec.cluster_of(m)] * abs(c) ** 2
               for m, c in state.amplitudes.items())


# ----------------------------------------------------------------------
# real <-> complex coordinates
# ----------------------------------------------------------------------

@dataclass
class RealState:
    """Truncated Fourier data of real ``(v, dv/dt)``.

    Coefficients are against the orthonormal exponentials and must be
    conjugate symmetric: ``v[-k] = conj(v[k])``.
    """

    v: dict
    v_t: dict


def to_complex(rs, spec):
    """Complex amplitudes of real data: ``u = (p + i q)/sqrt(2)``.

    ``p = Lambda^(-1/2) v_t`` and ``q = Lambda^(1/2) v`` act diagonally by
    ``omega^(+-1/2)`` per cluster.
    """
    amps = {}
    for mid in spec.mode_ids:
        w = spec.omega[spec.cluster_of(mid)]
        pk = complex(rs.v_t.get(mid, 0j)) / math.sqrt(w)
        qk = complex(rs.v.get(mid, 0j)) * math.sqrt(w)
        if pk != 0 or qk != 0:
            amps[mid] = (pk + 1j * qk) / SQRT2
    return State(amps)


def from_complex(state, spec):
    """Inverse of :func:`to_complex` (exact round trip up to rounding)."""
    v, v_t = {}, {}
    amps = state.amplitudes
    for mid in spec.mode_ids:
        u = amps.get(mid, 0j)
        ubar = amps.get(spec.conj_partner(mid), 0j).conjugate()
        if u == 0 and ubar == 0:
            continue
        pk = (u + ubar) / SQRT2
        qk = (u - ubar) / (1j * SQRT2)
        w = spec.omega[spec.cluster_of(mid)]
        v[mid] = qk / math.sqrt(w)
        v_t[mid] = pk * math.sqrt(w)
    return RealState(v=v, v_t=v_t)


# ----------------------------------------------------------------------
# Hamiltonian assembly
# ----------------------------------------------------------------------

def taylor_hamiltonian(nl, spec, max_degree, coupling_table=None):
    """Homogeneous Hamiltonian parts of ``integral f(x, v) dx``.

    On the circle the products of exponentials integrate exactly, so each
    degree-p part is assembled from all mode tuples whose signed indices
    (plus the modulation index) sum to zero, with a coefficient
    ``a_p (2 pi)^(1-p/2) prod omega^(-1/2) / (i sqrt(2))^p`` per ordered
    arrangement and a sign per ubar slot.

    Parameters
    ----------
    nl : Nonlinearity
    spec : Spectrum
    max_degree : int
        Degrees above this are ignored.
    coupling_table : dict, optional
        Required off the circle: ``{p: [{"modes": [...], "integral": c}]}``
        listing eigenfunction product integrals for a real orthonormal
        basis.

    Returns
    -------
    PolyHamiltonian with real-valued parts.
    """
    degrees = [p for p in nl.degrees() if p <= max_degree]
    if not degrees:
        raise ValueError("max_degree below the lowest nonlinearity degree")
    if spec.params.d != 1 and coupling_table is None:
        raise UnsupportedManifoldError(
            "d >= 2 requires an eigenfunction coupling table")
    parts = []
    for p in degrees:
        if spec.params.d == 1:
            part = _circle_part(nl, spec, p)
        else:
            part = _table_part(nl, spec, p, coupling_table)
        if not part.is_zero():
            parts.append(part)
    return PolyHamiltonian(spec=spec, parts=parts)


def _circle_part(nl, spec, p):
    amps = nl.fourier_amplitudes(p)
    if not amps:
        return HomPoly.zero(p)
    mode_ids = spec.mode_ids
    mode_set = set(mode_ids)
    inv_sqrt_w = {mid: 1.0 / math.sqrt(spec.omega[spec.cluster_of(mid)])
                  for mid in mode_ids}
    slot = 1.0 / (1j * SQRT2)
    terms = {}
    # ordered tuples (k_1..k_p) with sum + h = 0; the last index is forced
    for head in _ordered_tuples(mode_ids, p - 1):
        partial = sum(head)
        for h, a_h in amps.items():
            last = -h - partial
            if last not in mode_set:
                continue
            ks = head + (last,)
            base = a_h * (2 * math.pi) ** (1 - p / 2) * slot ** p
            for k in ks:
                base *= inv_sqrt_w[k]
            for choice in range(2 ** p):
                u_modes, ubar_modes = [], []
                sign = 1.0
                for j, k in enumerate(ks):
                    if (choice >> j) & 1:
                        ubar_modes.append(-k)
                        sign = -sign
                    else:
                        u_modes.append(k)
                kk = key(u_modes, ubar_modes)
                terms[kk] = terms.get(kk, 0j) + sign * base
    scale = max((abs(c) for c in terms.values()), default=0.0)
    terms = {k: c for k, c in terms.items() if abs(c) > 1e-14 * scale}
    return HomPoly(p, terms)


def _ordered_tuples(items, length):
    if length == 0:
        yield ()
        return
    for head in _ordered_tuples(items, length - 1):
        for x in items:
            yield head + (x,)


def _table_part(nl, spec, p, coupling_table):
    rows = (coupling_table or {}).get(p) or (coupling_table or {}).get(str(p))
    if rows is None:
        raise UnsupportedManifoldError(
            f"coupling table has no entries for degree {p}")
    a_p = nl.coefficients.get(p, 0.0)
    if nl.modulation.get(p):
        raise UnsupportedManifoldError(
            "x-modulated coefficients need their own coupling entries")
    slot = 1.0 / (1j * SQRT2)
    terms = {}
    for row in rows:
        ks = tuple(row["modes"])
        if len(ks) != p:
            raise ValueError("coupling entry arity does not match degree")
        base = a_p * float(row["integral"]) * slot ** p
        for k in ks:
            base /= math.sqrt(spec.omega[spec.cluster_of(k)])
        # real basis: the conjugate amplitude lives on the same mode id
        for choice in range(2 ** p):
            u_modes, ubar_modes = [], []
            sign = 1.0
            for j, k in enumerate(ks):
                if (choice >> j) & 1:
                    ubar_modes.append(k)
                    sign = -sign
                else:
                    u_modes.append(k)
            kk = key(u_modes, ubar_modes)
            terms[kk] = terms.get(kk, 0j) + sign * base
    scale = max((abs(c) for c in terms.values()), default=0.0)
    return HomPoly(p, {k: c for k, c in terms.items()
                       if abs(c) > 1e-14 * scale})


# ----------------------------------------------------------------------
# observables
# ----------------------------------------------------------------------

def actions(state, spec):
    """Cluster actions ``J_n = sum_{modes in n} |u|^2`` (all >= 0)."""
    out = {n: 0.0 for n in spec.clusters()}
    for m, c in state.amplitudes.items():
        out[spec.cluster_of(m)] += abs(c) ** 2
    return out


def weighted_energy(state, s, spec):
    """``sum_n n^(2s) J_n`` (the squared H^s norm in this convention)."""
    if s < 0:
        raise ValueError("s must be >= 0")
    total = 0.0
    for m, c in state.amplitudes.items():
        total += spec.cluster_of(m) ** (2 * s) * abs(c) ** 2
    return total


def sobolev_norm(state, s, spec):
    """H^s norm: square root of the cluster-weighted action sum."""
    return math.sqrt(weighted_energy(state, s, spec))


# ----------------------------------------------------------------------
# grid oracle helpers (quadrature cross-checks)
# ----------------------------------------------------------------------

def field_on_grid(coeffs, spec, n_points):
    """Evaluate ``sum_k c_k exp(ikx)/sqrt(2 pi)`` on a uniform grid."""
    x = np.linspace(0.0, 2 * math.pi, n_points, endpoint=False)
    w = np.zeros(n_points, dtype=complex)
    for mid, c in coeffs.items():
        w += c * np.exp(1j * mid * x) / math.sqrt(2 * math.pi)
    return x, w


def nonlinear_energy_quadrature(nl, state, spec, n_points=None):
    """Grid quadrature of ``integral f(x, v) dx`` with ``v`` from ``state``.

    Trapezoid on a uniform grid is exact for trigonometric polynomials once
    ``n_points`` exceeds the total bandwidth, so this is an independent
    oracle for the assembled Hamiltonian parts.
    """
    if spec.params.d != 1:
        raise UnsupportedManifoldError("grid quadrature is circle-only")
    pmax = max(nl.degrees())
    hmax = max((max(abs(h) for h in table) if table else 0
                for table in nl.modulation.values()), default=0)
    if n_points is None:
        n_points = 2 * (pmax * spec.n_max + hmax) + 8
    rs = from_complex(state, spec)
    x, v = field_on_grid(rs.v, spec, n_points)
    fx = nl.value(x, v.real)
    return float(np.sum(fx) * (2 * math.pi / n_points))
