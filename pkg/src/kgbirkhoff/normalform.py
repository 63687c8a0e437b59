"""Resonant splitting, homological equation, Lie transforms, normal form.

The quadratic Hamiltonian ``G2 = sum_modes omega |u|^2`` is kept implicit
throughout: its bracket with a homogeneous polynomial acts diagonally on
monomials, multiplying each coefficient by ``-i * Omega`` with ``Omega`` the
key's small divisor.  A monomial is resonant when the cluster multisets of
its u and ubar slots coincide; resonance is decided by that combinatorial
test alone, never by comparing ``Omega`` against a threshold.

The iteration normalizes one degree per step: solve ``{F, G2} + Q = Z`` at
the lowest unnormalized degree, push the time-1 flow of ``F`` through every
part (truncating above the working degree), repeat.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

from .polyalg import (
    HomPoly,
    MonomialKey,
    norm_inf,
    poisson_bracket,
    reality_check,
)

# Non-resonant divisors below HARD_FLOOR_REL * max(omega) abort the solve:
# the mass sits in or near the exceptional set.
HARD_FLOOR_REL = 1e-10


class NearResonantMassError(RuntimeError):
    """A combinatorially non-resonant divisor is numerically degenerate."""

    def __init__(self, clusters_plus, clusters_minus, divisor, floor,
                 step=None):
        self.clusters_plus = tuple(clusters_plus)
        self.clusters_minus = tuple(clusters_minus)
        self.divisor = divisor
        self.floor = floor
        self.step = step
        where = f" at step {step}" if step is not None else ""
        super().__init__(
            f"near-resonant mass{where}: divisor {divisor:.3e} below floor "
            f"{floor:.3e} for clusters +{self.clusters_plus} "
            f"-{self.clusters_minus}")


@dataclass
class SplitResult:
    """Exact partition of a polynomial into resonant and non-resonant parts."""

    resonant: HomPoly
    nonresonant: HomPoly


def _cluster_multisets(k, spec):
    plus = Counter(spec.cluster_of(m) for m in k.u_modes)
    minus = Counter(spec.cluster_of(m) for m in k.ubar_modes)
    return plus, minus


def is_resonant_key(k, spec):
    """Equal cluster multisets on the u and ubar sides."""
    plus, minus = _cluster_multisets(k, spec)
    return plus == minus


def resonant_split(p, spec):
    """Partition ``p`` by the cluster-multiset test (no arithmetic).

    Mode ids map to clusters first; equality is of cluster multisets, not of
    mode sets, so on the circle ``u(+3) ubar(-3)`` pairs are resonant.  Odd
    degrees are entirely non-resonant.
    """
    res, non = {}, {}
    for k, c in p.terms.items():
        (res if is_resonant_key(k, spec) else non)[k] = c
    return SplitResult(resonant=HomPoly(p.degree, res),
                       nonresonant=HomPoly(p.degree, non))


def key_divisor(k, spec):
    """Small divisor of a key: sum(omega, u slots) - sum(omega, ubar slots)."""
    return (sum(spec.omega[spec.cluster_of(m)] for m in k.u_modes)
            - sum(spec.omega[spec.cluster_of(m)] for m in k.ubar_modes))


def bracket_with_G2(p, spec):
    """``{p, G2}``: multiplies each coefficient by ``-i * Omega``.

    Agrees coefficient-exactly with ``poisson_bracket(p, g2)`` for the
    explicit quadratic ``g2 = sum omega u ubar``.
    """
    return HomPoly(p.degree,
                   {k: -1j * key_divisor(k, spec) * c
                    for k, c in p.terms.items()})


def g2_poly(spec):
    """The quadratic Hamiltonian as an explicit polynomial (for oracles)."""
    return HomPoly(2, {MonomialKey((mid,), (mid,)): spec.omega_by_mode[i]
                       for i, mid in enumerate(spec.mode_ids)})


def action_poly(spec, cluster):
    """Cluster action ``J_n = sum_{modes in n} u ubar`` as a polynomial."""
    return HomPoly(2, {MonomialKey((mid,), (mid,)): 1.0
                       for mid in spec.modes_in_cluster(cluster)})


def solve_homological(q, spec, *, step=None):
    """Solve ``{F, G2} + Q = Z`` with ``Z`` the resonant part of ``Q``.

    Each non-resonant key of ``Q`` with coefficient ``c`` and divisor
    ``Omega`` contributes ``c / (i * Omega)`` to ``F``, so that
    ``bracket_with_G2(F) = -nonresonant(Q)`` coefficient-exactly.  ``F`` is
    supported on non-resonant keys only (the minimal solution).

    Raises
    ------
    NearResonantMassError
        If a non-resonant key's divisor falls below
        ``HARD_FLOOR_REL * max(omega)``.
    ValueError
        If ``Q`` fails the reality check.
    """
    if not reality_check(q):
        raise ValueError("homological right-hand side must be real valued")
    split = resonant_split(q, spec)
    floor = HARD_FLOOR_REL * spec.max_omega
    f_terms = {}
    for k, c in split.nonresonant.terms.items():
        omega = key_divisor(k, spec)
        if abs(omega) < floor:
            plus = tuple(spec.cluster_of(m) for m in k.u_modes)
            minus = tuple(spec.cluster_of(m) for m in k.ubar_modes)
            raise NearResonantMassError(plus, minus, abs(omega), floor,
                                        step=step)
        f_terms[k] = c / (1j * omega)
    return HomPoly(q.degree, f_terms), split.resonant


# ----------------------------------------------------------------------
# Lie transforms
# ----------------------------------------------------------------------

def _as_part_dict(parts):
    if isinstance(parts, dict):
        out = dict(parts)
    else:
        out = {}
        for p in parts:
            if p.degree in out:
                raise ValueError(f"duplicate degree {p.degree} in parts")
            out[p.degree] = p
    for d, p in out.items():
        if d != p.degree:
            raise ValueError("part listed under wrong degree")
    return out


def _add_into(parts, p):
    if p.is_zero():
        return
    if p.degree in parts:
        parts[p.degree] = parts[p.degree] + p
    else:
        parts[p.degree] = p


def lie_transform(parts, f, max_degree, spec):
    """Pull back a Hamiltonian through the time-1 flow of ``f``.

    Computes the degree components of ``sum_n (1/n!) (ad f)^n H`` truncated
    above ``max_degree``, where ``H`` is ``G2`` plus the given parts and
    ``(ad f) h = {f, h}``.  The quadratic term itself is left implicit; its
    chain ``{f, G2}, {f, {f, G2}}/2, ...`` is included in the output.

    Parameters
    ----------
    parts : dict or list of HomPoly
        Homogeneous parts of degree >= 3 (each degree at most once).
    f : HomPoly
        Generator, degree >= 3 so each bracket raises the degree.
    max_degree : int
        Truncation degree; higher-degree output is discarded.
    spec : Spectrum

    Returns
    -------
    list of HomPoly, sorted by degree (zero parts omitted).
    """
    if f.degree <= 2:
        raise ValueError("generator degree must be >= 3 for a finite series")
    parts = _as_part_dict(parts)
    out = dict(parts)

    step = f.degree - 2

    def push_chain(term, n0):
        # accumulate term/n0! + {f, term}/(n0+1)! + ...; each bracket raises
        # the degree by `step`, so gate before computing it
        n = n0
        fact = math.factorial(n0)
        while not term.is_zero() and term.degree <= max_degree:
            _add_into(out, term * (1.0 / fact))
            if term.degree + step > max_degree:
                break
            term = poisson_bracket(f, term)
            n += 1
            fact *= n

    if not f.is_zero():
        push_chain(bracket_with_G2(f, spec), 1)
        for p in parts.values():
            if p.degree + step <= max_degree and not p.is_zero():
                push_chain(poisson_bracket(f, p), 1)
    return [out[d] for d in sorted(out) if not out[d].is_zero()]


# ----------------------------------------------------------------------
# the Birkhoff iteration
# ----------------------------------------------------------------------

@dataclass
class StepDiagnostics:
    step: int
    degree: int
    residual: float           # |transformed - resonant part| at the degree
    min_divisor_used: float
    max_divisor_used: float
    generator_terms: int
    normalized_terms: int


@dataclass
class NormalFormResult:
    """Output of the normal-form iteration.

    ``z_parts`` are the normalized (resonant) parts per degree,
    ``generators`` the per-step generators in application order (lowest
    degree first); degrees at and above ``dropped_degree`` were discarded
    into the unrepresented remainder.
    """

    spec: object
    r0: int
    z_parts: list = field(default_factory=list)
    generators: list = field(default_factory=list)
    dropped_degree: int = 0
    diagnostics: list = field(default_factory=list)

    def z_part(self, degree):
        for p in self.z_parts:
            if p.degree == degree:
                return p
        return HomPoly.zero(degree)


def birkhoff(parts, spec, r0):
    """Normalize a Hamiltonian degree by degree up to order ``r0``.

    Starting from ``G2`` plus the given parts (degrees ``3 .. r0+2``), each
    step ``r = 0..r0-1`` solves the homological equation at degree ``r+3``,
    replaces that degree by its resonant projection and pushes the
    generator's time-1 flow through all parts, truncated at degree
    ``r0+2``.  Every normalized part commutes with all cluster actions by
    construction (checked by :func:`check_action_commutation`).

    Returns
    -------
    NormalFormResult
    """
    if r0 < 1:
        raise ValueError("r0 must be >= 1")
    parts = _as_part_dict(parts)
    max_degree = r0 + 2
    for d, p in parts.items():
        if d < 3 or d > max_degree:
            raise ValueError(f"input degree {d} outside 3..{max_degree}")
        if not reality_check(p):
            raise ValueError(f"degree-{d} input part is not real valued")

    generators = []
    diagnostics = []
    current = dict(parts)
    for r in range(r0):
        deg = r + 3
        q = current.get(deg, HomPoly.zero(deg))
        try:
            f, y = solve_homological(q, spec, step=r + 1)
        except NearResonantMassError:
            raise
        divisors = [abs(key_divisor(k, spec)) for k in f.terms]
        transformed = lie_transform(current, f, max_degree, spec)
        current = {p.degree: p for p in transformed}
        # the transformed degree equals {F,G2} + Q = Y up to rounding;
        # store the exact resonant projection and log the residue
        residual = norm_inf(current.get(deg, HomPoly.zero(deg)) - y)
        if y.is_zero():
            current.pop(deg, None)
        else:
            current[deg] = y
        generators.append(f)
        diagnostics.append(StepDiagnostics(
            step=r + 1, degree=deg, residual=residual,
            min_divisor_used=min(divisors, default=math.inf),
            max_divisor_used=max(divisors, default=0.0),
            generator_terms=len(f), normalized_terms=len(y)))
        for d in current:
            if d > max_degree:
                raise AssertionError("truncation failed to cap the degree")
    z_parts = [current[d] for d in sorted(current)]
    return NormalFormResult(spec=spec, r0=r0, z_parts=z_parts,
                            generators=generators,
                            dropped_degree=max_degree + 1,
                            diagnostics=diagnostics)


def check_action_commutation(z, spec):
    """Largest coefficient of ``{J_a, z}`` over all clusters ``a``.

    Exactly zero for resonant ``z``: the bracket's integer slot counts
    cancel cluster by cluster before touching the coefficients.
    """
    worst = 0.0
    for a in spec.clusters():
        residual = norm_inf(poisson_bracket(action_poly(spec, a), z))
        worst = max(worst, residual)
    return worst
