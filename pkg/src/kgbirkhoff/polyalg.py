"""Sparse algebra of homogeneous polynomials in conjugate mode variables.

A monomial is a product of mode amplitudes ``u_a`` and their conjugates
``ubar_b``, stored as a canonical pair of sorted multisets of mode ids.  A
:class:`HomPoly` maps such keys to complex coefficients; all multilinear
symmetrization factors are absorbed into the coefficient, so every monomial
has exactly one representation.

Conventions (complex coordinates ``u = (p + i q)/sqrt(2)``):

* Poisson bracket: ``{F, G} = i * sum_k (dG/du_k dF/dubar_k
  - dG/dubar_k dF/du_k)``, so that ``{P, G2} = -i * Omega * P`` per monomial
  with ``Omega = sum(omega over u slots) - sum(omega over ubar slots)``.
* A polynomial is real valued iff ``coeff(A|B) == conj(coeff(B|A))`` for
  every key, with ``(B|A)`` the key with u and ubar multisets swapped.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple

# Coefficients smaller than CANCEL_TOL times the operand scale are treated as
# cancellation debris and dropped by the arithmetic routines.
CANCEL_TOL = 1e-15


class MonomialKey(NamedTuple):
    """Canonical monomial: sorted multisets of u-mode and ubar-mode ids."""

    u_modes: tuple
    ubar_modes: tuple

    @property
    def degree(self):
        return len(self.u_modes) + len(self.ubar_modes)

    @property
    def bidegree(self):
        """Number of u slots (the holomorphic degree)."""
        return len(self.u_modes)

    def swapped(self):
        """Key with u and ubar multisets exchanged."""
        return MonomialKey(self.ubar_modes, self.u_modes)


def key(u_modes=(), ubar_modes=()):
    """Build a canonical :class:`MonomialKey` from unsorted mode iterables."""
    return MonomialKey(tuple(sorted(u_modes)), tuple(sorted(ubar_modes)))


class HomPoly:
    """Degree-homogeneous sparse polynomial ``sum_k c_k u^A ubar^B``.

    Parameters
    ----------
    degree : int
        Common degree of every stored monomial.
    terms : mapping, optional
        ``MonomialKey -> complex``.  Exact-zero coefficients are dropped;
        keys of the wrong degree raise ``ValueError``.

    Instances are treated as immutable after construction.
    """

    __slots__ = ("degree", "terms")

    def __init__(self, degree, terms=None):
        if degree < 0:
            raise ValueError("degree must be >= 0")
        self.degree = int(degree)
        clean = {}
        for k, c in (terms or {}).items():
            if not isinstance(k, MonomialKey):
                k = MonomialKey(tuple(k[0]), tuple(k[1]))
            if k.degree != self.degree:
                raise ValueError(
                    f"key {k} has degree {k.degree}, expected {self.degree}")
            c = complex(c)
            if c != 0:
                clean[k] = c
        self.terms = clean

    # ------------------------------------------------------------------
    @classmethod
    def zero(cls, degree):
        return cls(degree, {})

    @classmethod
    def monomial(cls, u_modes, ubar_modes, coeff=1.0):
        k = key(u_modes, ubar_modes)
        return cls(k.degree, {k: coeff})

    def is_zero(self):
        return not self.terms

    def coeff(self, u_modes, ubar_modes):
        return self.terms.get(key(u_modes, ubar_modes), 0j)

    def max_abs_coeff(self):
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def __len__(self):
        return len(self.terms)

    def __repr__(self):
        return f"HomPoly(degree={self.degree}, n_terms={len(self.terms)})"

    # -- linear structure ----------------------------------------------
    def __add__(self, other):
        if other.degree != self.degree:
            raise ValueError("cannot add polynomials of different degree")
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, 0j) + c
        tol = CANCEL_TOL * max(self.max_abs_coeff(), other.max_abs_coeff())
        return HomPoly(self.degree, _pruned(out, tol))

    def __sub__(self, other):
        return self + (-other)

    def __neg__(self):
        return HomPoly(self.degree, {k: -c for k, c in self.terms.items()})

    def __mul__(self, scalar):
        scalar = complex(scalar)
        return HomPoly(self.degree,
                       {k: scalar * c for k, c in self.terms.items()})

    __rmul__ = __mul__

    def conjugate(self):
        """Complex conjugate polynomial: swapped keys, conjugated coefficients."""
        return HomPoly(self.degree,
                       {k.swapped(): c.conjugate()
                        for k, c in self.terms.items()})

    def map_coeffs(self, fn):
        """New polynomial with ``coeff -> fn(key, coeff)`` (zeros dropped)."""
        return HomPoly(self.degree,
                       {k: fn(k, c) for k, c in self.terms.items()})


def _pruned(terms, tol):
    if tol <= 0:
        return terms
    return {k: c for k, c in terms.items() if abs(c) > tol}


def norm_inf(p):
    """Largest coefficient magnitude of ``p`` (0 for the zero polynomial)."""
    return p.max_abs_coeff()


# ----------------------------------------------------------------------
# mu / S combinatorial weights
# ----------------------------------------------------------------------

def mu_S(clusters):
    """Combinatorial weights of a cluster index tuple.

    Parameters
    ----------
    clusters : tuple of int
        Cluster indices ``(n_1, ..., n_{k+1})``, length at least 2.

    Returns
    -------
    (max, max2, mu, S) : tuple
        Largest, second and third largest elements (``mu = 1`` by convention
        for length-2 tuples) and the gap weight
        ``S = sum_l [n_l - sum_{j != l} n_j]_+ + mu``.
    """
    ns = tuple(clusters)
    if len(ns) < 2:
        raise ValueError("cluster tuple must have length >= 2")
    srt = sorted(ns, reverse=True)
    top, second = srt[0], srt[1]
    mu = 1 if len(ns) == 2 else srt[2]
    total = sum(ns)
    s = sum(max(n - (total - n), 0) for n in ns) + mu
    return top, second, mu, s


# ----------------------------------------------------------------------
# multiset helpers (tuples kept sorted)
# ----------------------------------------------------------------------

def _remove_one(modes, m):
    i = modes.index(m)
    return modes[:i] + modes[i + 1:]


def _merge(a, b):
    return tuple(sorted(a + b))


# ----------------------------------------------------------------------
# calculus
# ----------------------------------------------------------------------

def gradient(p, which, mode):
    """Formal partial derivative of ``p``.

    Parameters
    ----------
    p : HomPoly
    which : {"u", "ubar"}
        Differentiate with respect to ``u_mode`` or ``ubar_mode``.
    mode : int

    Returns
    -------
    HomPoly of degree ``p.degree - 1``, with multiplicity factors from
    repeated modes.
    """
    if which not in ("u", "ubar"):
        raise ValueError("which must be 'u' or 'ubar'")
    out = {}
    for k, c in p.terms.items():
        modes = k.u_modes if which == "u" else k.ubar_modes
        mult = modes.count(mode)
        if mult == 0:
            continue
        if which == "u":
            nk = MonomialKey(_remove_one(k.u_modes, mode), k.ubar_modes)
        else:
            nk = MonomialKey(k.u_modes, _remove_one(k.ubar_modes, mode))
        out[nk] = out.get(nk, 0j) + mult * c
    return HomPoly(max(p.degree - 1, 0), _pruned(out, 0.0))


def poisson_bracket(f, g):
    """Poisson bracket ``{f, g}`` in complex mode coordinates.

    Computed by exact combinatorial differentiation of the monomials:
    within each monomial pair the integer multiplicity weights are summed
    exactly before multiplying by the complex coefficients, so structural
    cancellations (equal cluster multisets against an action, for instance)
    yield exact zeros.

    Returns
    -------
    HomPoly of degree ``f.degree + g.degree - 2``.  Degree underflow with
    no contraction gives the zero polynomial.
    """
    out_degree = max(f.degree + g.degree - 2, 0)
    acc = {}
    fitems = [(k, c, Counter(k.u_modes), Counter(k.ubar_modes))
              for k, c in f.terms.items()]
    gitems = [(k, c, Counter(k.u_modes), Counter(k.ubar_modes))
              for k, c in g.terms.items()]
    for kf, cf, f_u, f_ub in fitems:
        for kg, cg, g_u, g_ub in gitems:
            weights = {}
            # i * dG/du_k * dF/dubar_k
            for m, mg in g_u.items():
                mf = f_ub.get(m, 0)
                if mf:
                    nk = MonomialKey(
                        _merge(_remove_one(kg.u_modes, m), kf.u_modes),
                        _merge(kg.ubar_modes, _remove_one(kf.ubar_modes, m)))
                    weights[nk] = weights.get(nk, 0) + mg * mf
            # - i * dG/dubar_k * dF/du_k
            for m, mg in g_ub.items():
                mf = f_u.get(m, 0)
                if mf:
                    nk = MonomialKey(
                        _merge(kg.u_modes, _remove_one(kf.u_modes, m)),
                        _merge(_remove_one(kg.ubar_modes, m), kf.ubar_modes))
                    weights[nk] = weights.get(nk, 0) - mg * mf
            if not weights:
                continue
            base = 1j * cf * cg
            for nk, w in weights.items():
                if w:
                    acc[nk] = acc.get(nk, 0j) + base * w
    tol = CANCEL_TOL * f.max_abs_coeff() * g.max_abs_coeff()
    return HomPoly(out_degree, _pruned(acc, tol))


# ----------------------------------------------------------------------
# states and evaluation
# ----------------------------------------------------------------------

@dataclass
class State:
    """Complex amplitude per mode id (finite support)."""

    amplitudes: dict = field(default_factory=dict)

    def get(self, mode):
        return self.amplitudes.get(mode, 0j)

    def copy(self):
        return State(dict(self.amplitudes))

    def norm2(self):
        """Squared l2 norm ``sum |u_mode|^2``."""
        return sum(abs(c) ** 2 for c in self.amplitudes.values())


def evaluate(p, state):
    """Evaluate ``p`` at ``state`` (ubar slots take conjugate amplitudes)."""
    amps = state.amplitudes
    total = 0j
    for k, c in p.terms.items():
        val = c
        for m in k.u_modes:
            val *= amps.get(m, 0j)
            if val == 0:
                break
        else:
            for m in k.ubar_modes:
                val *= amps.get(m, 0j).conjugate()
                if val == 0:
                    break
        if val != 0:
            total += val
    return total


def vector_field(p, state):
    """Hamiltonian vector field ``X_p = i * grad_ubar(p)`` at ``state``.

    Returns a :class:`State` whose amplitude at mode ``k`` is
    ``i * dP/dubar_k`` evaluated at ``state``.
    """
    amps = state.amplitudes
    out = {}
    for k, c in p.terms.items():
        uprod = c
        for m in k.u_modes:
            uprod *= amps.get(m, 0j)
        if uprod == 0:
            continue
        counts = Counter(k.ubar_modes)
        for m, mult in counts.items():
            val = uprod * mult
            for m2, mult2 in counts.items():
                rem = mult2 - 1 if m2 == m else mult2
                if rem:
                    val *= amps.get(m2, 0j).conjugate() ** rem
            if val != 0:
                out[m] = out.get(m, 0j) + 1j * val
    return State(out)


# ----------------------------------------------------------------------
# reality
# ----------------------------------------------------------------------

def reality_check(p, rel_tol=1e-12):
    """True iff ``p`` is real valued: ``coeff(A|B) == conj(coeff(B|A))``.

    The comparison allows a relative slack of ``rel_tol`` times the largest
    coefficient (rounding from bracket accumulation order).
    """
    scale = p.max_abs_coeff()
    if scale == 0.0:
        return True
    tol = rel_tol * scale
    for k, c in p.terms.items():
        partner = p.terms.get(k.swapped(), 0j)
        if abs(c - partner.conjugate()) > tol:
            return False
    return True


def symmetrize_real(p):
    """Project ``p`` onto real-valued polynomials: ``(p + conj(p)) / 2``."""
    return (p + p.conjugate()) * 0.5


# ----------------------------------------------------------------------
# weighted class norm
# ----------------------------------------------------------------------

@dataclass
class WeightReport:
    """Finite-truncation estimate of the weighted multilinear class norm."""

    nu: float
    N: int
    best_constant: float
    argmax_key: MonomialKey | None


def class_norm(p, spec, nu, N):
    """Weighted norm constant ``max_key |c| * S^N / mu^(nu + N)``.

    The cluster tuple of each key is formed from the clusters of its modes,
    u slots first then ubar slots (mu and S are permutation symmetric, so
    the order is immaterial).

    Parameters
    ----------
    p : HomPoly
    spec : Spectrum
        Supplies the mode id -> cluster map.
    nu : float
    N : int, >= 0
    """
    if N < 0:
        raise ValueError("N must be >= 0")
    best = 0.0
    argmax = None
    for k in p.terms:
        clusters = tuple(spec.cluster_of(m) for m in k.u_modes) + \
            tuple(spec.cluster_of(m) for m in k.ubar_modes)
        _, _, mu, s = mu_S(clusters)
        val = abs(p.terms[k]) * s ** N / mu ** (nu + N)
        if val > best:
            best, argmax = val, k
    return WeightReport(nu=float(nu), N=int(N), best_constant=best,
                        argmax_key=argmax)


# ----------------------------------------------------------------------
# JSON serialization
# ----------------------------------------------------------------------

def poly_to_dict(p):
    """JSON-ready dict: ``{"degree": d, "terms": [{u, ubar, re, im}, ...]}``.

    Terms are sorted by key for byte-stable output.
    """
    terms = []
    for k in sorted(p.terms):
        c = p.terms[k]
        terms.append({"u": list(k.u_modes), "ubar": list(k.ubar_modes),
                      "re": c.real, "im": c.imag})
    return {"degree": p.degree, "terms": terms}


def poly_from_dict(d):
    terms = {}
    for t in d["terms"]:
        k = key(t["u"], t["ubar"])
        terms[k] = terms.get(k, 0j) + complex(t["re"], t["im"])
    return HomPoly(d["degree"], terms)


def poly_to_json(p, **kwargs):
    kwargs.setdefault("sort_keys", True)
    return json.dumps(poly_to_dict(p), **kwargs)


def poly_from_json(s):
    return poly_from_dict(json.loads(s))
