"""Acceptance suite: every headline guarantee as a runnable check.

Each criterion returns a :class:`CriterionResult` with the measured
numbers; :func:`run_all` executes the list in order.  All randomness is
seeded, so reruns are bit-identical.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    IntegratorConfig,
    apply_transform,
    drift_experiment,
    integrate,
    near_identity_check,
    random_unit_state,
)
from .kgmodel import Nonlinearity, PolyHamiltonian, g2_value, taylor_hamiltonian
from .normalform import (
    birkhoff,
    check_action_commutation,
    g2_poly,
    resonant_split,
    solve_homological,
)
from .polyalg import (
    HomPoly,
    MonomialKey,
    State,
    class_norm,
    evaluate,
    key,
    norm_inf,
    poisson_bracket,
    reality_check,
    symmetrize_real,
)
from .spectrum import SphereParams, build_sphere_spectrum, divisor_bound_scan


@dataclass
class CriterionResult:
    index: int
    name: str
    passed: bool
    elapsed: float
    details: dict = field(default_factory=dict)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        info = ", ".join(f"{k}={_fmt(v)}" for k, v in self.details.items())
        return f"[{status}] {self.index:2d} {self.name}: {info}"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def _timed(fn):
    def wrapper():
        t0 = time.time()
        result = fn()
        result.elapsed = time.time() - t0
        return result
    wrapper.__name__ = fn.__name__
    return wrapper


# ----------------------------------------------------------------------
# shared fixtures
# ----------------------------------------------------------------------

def _cubic_benchmark(n_max=8, r0=2):
    spec = build_sphere_spectrum(SphereParams(d=1, m=1.0), n_max)
    ham = taylor_hamiltonian(Nonlinearity({3: 1.0}), spec, max_degree=3)
    nf = birkhoff(ham.parts, spec, r0=r0)
    return spec, ham, nf


def _random_real_poly(spec, degree, n_terms, rng):
    terms = {}
    for _ in range(n_terms):
        ell = int(rng.integers(0, degree + 1))
        u = rng.choice(spec.mode_ids, size=ell)
        ub = rng.choice(spec.mode_ids, size=degree - ell)
        c = complex(rng.normal(), rng.normal())
        k = key(u.tolist(), ub.tolist())
        terms[k] = terms.get(k, 0j) + c
    return symmetrize_real(HomPoly(degree, terms))


# ----------------------------------------------------------------------
# criteria
# ----------------------------------------------------------------------

@_timed
def homological_exactness():
    """50 random real non-resonant right-hand sides solve exactly."""
    spec = build_sphere_spectrum(SphereParams(d=1, m=1.0), 6)
    g2 = g2_poly(spec)
    rng = np.random.default_rng(101)
    worst = 0.0
    reality_ok = True
    for i in range(50):
        degree = int(rng.integers(3, 6))
        q = _random_real_poly(spec, degree, 10, rng)
        q = resonant_split(q, spec).nonresonant
        if q.is_zero():
            continue
        f, z = solve_homological(q, spec)
        resid = norm_inf(poisson_bracket(f, g2) + q - z) / norm_inf(q)
        worst = max(worst, resid)
        reality_ok = reality_ok and reality_check(f) and reality_check(z)
    passed = worst <= 1e-12 and reality_ok
    return CriterionResult(1, "homological exactness", passed, 0.0,
                           {"worst_rel_residual": worst,
                            "reality": reality_ok})


@_timed
def normal_form_commutation():
    """Cubic benchmark: Z commutes with every action, degree-3 part empty."""
    spec, ham, nf = _cubic_benchmark(n_max=8, r0=2)
    residual = max((check_action_commutation(z, spec) for z in nf.z_parts),
                   default=0.0)
    deg3_empty = nf.z_part(3).is_zero()
    generators_real = all(reality_check(g) for g in nf.generators)
    passed = residual == 0.0 and deg3_empty and generators_real
    return CriterionResult(2, "normal-form commutation", passed, 0.0,
                           {"commutation_residual": residual,
                            "degree3_empty": deg3_empty,
                            "z4_terms": len(nf.z_part(4))})


@_timed
def second_order_oracle():
    """Degree-4 normalized part matches resonant(Q4 + 1/2 {F3, Q3})."""
    spec = build_sphere_spectrum(SphereParams(d=1, m=1.0), 4)
    ham = taylor_hamiltonian(Nonlinearity({3: 1.0, 4: 0.5}), spec,
                             max_degree=4)
    nf = birkhoff(ham.parts, spec, r0=2)
    q3, q4 = ham.part(3), ham.part(4)
    f3, _ = solve_homological(q3, spec)
    oracle = resonant_split(q4 + 0.5 * poisson_bracket(f3, q3),
                            spec).resonant
    rel = norm_inf(nf.z_part(4) - oracle) / norm_inf(oracle)
    passed = rel <= 1e-10
    return CriterionResult(3, "second-order oracle", passed, 0.0,
                           {"rel_difference": rel})


@_timed
def remainder_order():
    """|G(T(u)) - (G2+Z)(u)| scales with exponent r0+3 under halving."""
    spec, ham, nf = _cubic_benchmark(n_max=8, r0=2)
    rng = np.random.default_rng(42)
    amps = [0.1, 0.05, 0.025]
    resids = []
    for amp in amps:
        vals = []
        for _ in range(4):
            z = rng.normal(size=16) + 1j * rng.normal(size=16)
            z /= np.linalg.norm(z)
            u = State({m: amp * complex(z[i])
                       for i, m in enumerate(spec.mode_ids)})
            tu = apply_transform(nf.generators, u, spec=spec)
            lhs = ham.value(tu)
            rhs = g2_value(u, spec) + sum(evaluate(zp, u).real
                                          for zp in nf.z_parts)
            vals.append(abs(lhs - rhs))
        resids.append(float(np.mean(vals)))
    slope = float(np.polyfit(np.log(amps), np.log(resids), 1)[0])
    passed = 4.5 <= slope <= 5.5
    return CriterionResult(4, "remainder order", passed, 0.0,
                           {"exponent": slope, "residuals": resids})


@_timed
def near_identity():
    """Transform and inverse are quadratically close to the identity."""
    spec, ham, nf = _cubic_benchmark(n_max=8, r0=2)
    fit = near_identity_check(nf.generators, [0.1, 0.05, 0.025], spec=spec,
                              n_directions=4, seed=7)
    passed = (1.8 <= fit.forward_exponent <= 2.2
              and 1.8 <= fit.inverse_exponent <= 2.2)
    return CriterionResult(5, "near-identity transform", passed, 0.0,
                           {"forward_exponent": fit.forward_exponent,
                            "inverse_exponent": fit.inverse_exponent})


@_timed
def drift_scaling():
    """Transformed actions drift slower than raw ones, inside the bound."""
    spec, ham, nf = _cubic_benchmark(n_max=8, r0=2)
    cfg = IntegratorConfig(dt=1e-3, t_end=1.0)
    table = drift_experiment(ham, nf, [0.1, 0.05, 0.025], r=1, s=2.0,
                             cfg=cfg, seed=2024, transform_samples=120)
    bound_ok = all(row.raw_bound_ok for row in table.rows)
    passed = (table.transformed_exponent >= 2.5
              and table.transformed_exponent - table.raw_exponent >= 0.5
              and bound_ok)
    return CriterionResult(6, "drift scaling", passed, 0.0,
                           {"raw_exponent": table.raw_exponent,
                            "transformed_exponent": table.transformed_exponent,
                            "bound_10eps3_ok": bound_ok})


@_timed
def resonant_conservation():
    """The G2+Z flow conserves every action to integrator accuracy."""
    spec, ham, nf = _cubic_benchmark(n_max=8, r0=2)
    zham = PolyHamiltonian(spec=spec, parts=list(nf.z_parts))
    unit = random_unit_state(spec, 2.0, seed=99)
    u0 = State({m: 0.05 * c for m, c in unit.amplitudes.items()})
    cfg = IntegratorConfig(dt=1e-3, t_end=100.0)
    traj = integrate(u0, zham, cfg, observe_every=200)
    drift = float(np.max(np.abs(traj.actions - traj.actions[0])))
    passed = drift <= 1e-8
    return CriterionResult(7, "resonant-truncation conservation", passed,
                           0.0, {"max_action_drift": drift})


@_timed
def small_divisor_positivity():
    """Every sign split has a positive empirical divisor constant."""
    spec = build_sphere_spectrum(SphereParams(d=1, m=1.0), 50)
    min_c = math.inf
    n_flagged = 0
    for k in (1, 2, 3):
        for ell in range(0, k + 2):
            rep = divisor_bound_scan(spec, k, ell, nu_bar=k + 2)
            min_c = min(min_c, rep.min_weighted)
            n_flagged += len(rep.flagged)
    passed = min_c > 0 and n_flagged == 0
    return CriterionResult(8, "small-divisor positivity", passed, 0.0,
                           {"min_c": min_c, "flagged": n_flagged})


@_timed
def algebra_properties():
    """Bracket laws and the dense-oracle equivalence."""
    rng = np.random.default_rng(17)
    modes = [1, -1, 2]
    worst = {"antisym": 0.0, "jacobi": 0.0, "leibniz": 0.0, "oracle": 0.0}
    reality_ok = True

    def rand_poly(degree, n_terms=6):
        terms = {}
        for _ in range(n_terms):
            ell = int(rng.integers(0, degree + 1))
            u = rng.choice(modes, size=ell)
            ub = rng.choice(modes, size=degree - ell)
            c = complex(rng.normal(), rng.normal())
            k = key(u.tolist(), ub.tolist())
            terms[k] = terms.get(k, 0j) + c
        return HomPoly(degree, terms)

    for _ in range(12):
        f = rand_poly(int(rng.integers(2, 4)))
        g = rand_poly(int(rng.integers(2, 4)))
        h = rand_poly(int(rng.integers(2, 4)))
        scale = (norm_inf(f) * norm_inf(g)) or 1.0
        worst["antisym"] = max(worst["antisym"], norm_inf(
            poisson_bracket(f, g) + poisson_bracket(g, f)) / scale)
        jac = (poisson_bracket(poisson_bracket(f, g), h)
               + poisson_bracket(poisson_bracket(g, h), f)
               + poisson_bracket(poisson_bracket(h, f), g))
        jscale = (norm_inf(f) * norm_inf(g) * norm_inf(h)) or 1.0
        worst["jacobi"] = max(worst["jacobi"], norm_inf(jac) / jscale)
        lhs = poisson_bracket(f, _poly_product(g, h))
        rhs = _poly_product(poisson_bracket(f, g), h) \
            + _poly_product(g, poisson_bracket(f, h))
        worst["leibniz"] = max(worst["leibniz"],
                               norm_inf(lhs - rhs) / jscale)
        fr, gr = symmetrize_real(f), symmetrize_real(g)
        reality_ok = reality_ok and reality_check(poisson_bracket(fr, gr))
        worst["oracle"] = max(worst["oracle"], _oracle_gap(f, g, modes))

    passed = all(v <= 1e-12 for v in worst.values()) and reality_ok
    return CriterionResult(9, "algebra property suite", passed, 0.0,
                           {**worst, "reality_closure": reality_ok})


@_timed
def tameness_witness():
    """Weighted class norm of the cubic part is stable under refinement."""
    reports = {}
    for n_max in (8, 16):
        spec = build_sphere_spectrum(SphereParams(d=1, m=1.0), n_max)
        ham = taylor_hamiltonian(Nonlinearity({3: 1.0}), spec, max_degree=3)
        reports[n_max] = class_norm(ham.part(3), spec, nu=1, N=4)
    growth = reports[16].best_constant / reports[8].best_constant - 1.0
    passed = growth <= 0.10
    return CriterionResult(10, "tameness witness", passed, 0.0,
                           {"constant_8": reports[8].best_constant,
                            "constant_16": reports[16].best_constant,
                            "growth": growth})


# ----------------------------------------------------------------------
# helpers: product and dense oracle
# ----------------------------------------------------------------------

def _poly_product(f, g):
    """Product by key concatenation (degrees add)."""
    out = {}
    for kf, cf in f.terms.items():
        for kg, cg in g.terms.items():
            nk = key(kf.u_modes + kg.u_modes, kf.ubar_modes + kg.ubar_modes)
            out[nk] = out.get(nk, 0j) + cf * cg
    return HomPoly(f.degree + g.degree, out)


def _dense(p, modes):
    """Exponent-vector representation over an explicit mode list."""
    idx = {m: i for i, m in enumerate(modes)}
    out = {}
    for k, c in p.terms.items():
        eu = [0] * len(modes)
        eb = [0] * len(modes)
        for m in k.u_modes:
            eu[idx[m]] += 1
        for m in k.ubar_modes:
            eb[idx[m]] += 1
        kk = (tuple(eu), tuple(eb))
        out[kk] = out.get(kk, 0j) + c
    return out


def _dense_diff(dense, slot, i):
    """Partial derivative of a dense polynomial (slot: 0 = u, 1 = ubar)."""
    out = {}
    for (eu, eb), c in dense.items():
        exps = eu if slot == 0 else eb
        if exps[i] == 0:
            continue
        new = list(exps)
        new[i] -= 1
        kk = (tuple(new), eb) if slot == 0 else (eu, tuple(new))
        out[kk] = out.get(kk, 0j) + exps[i] * c
    return out


def _dense_bracket(da, db, n_modes):
    out = {}
    for i in range(n_modes):
        for (x, y, sign) in ((_dense_diff(db, 0, i), _dense_diff(da, 1, i),
                              1j),
                             (_dense_diff(db, 1, i), _dense_diff(da, 0, i),
                              -1j)):
            for (eu1, eb1), c1 in x.items():
                for (eu2, eb2), c2 in y.items():
                    kk = (tuple(a + b for a, b in zip(eu1, eu2)),
                          tuple(a + b for a, b in zip(eb1, eb2)))
                    out[kk] = out.get(kk, 0j) + sign * c1 * c2
    return out


def _oracle_gap(f, g, modes):
    """Max coefficient gap between the sparse bracket and the dense oracle."""
    sparse = _dense(poisson_bracket(f, g), modes)
    oracle = _dense_bracket(_dense(f, modes), _dense(g, modes), len(modes))
    scale = (norm_inf(f) * norm_inf(g)) or 1.0
    gap = 0.0
    for kk in set(sparse) | set(oracle):
        gap = max(gap, abs(sparse.get(kk, 0j) - oracle.get(kk, 0j)))
    return gap / scale


ALL_CRITERIA = [
    homological_exactness,
    normal_form_commutation,
    second_order_oracle,
    remainder_order,
    near_identity,
    drift_scaling,
    resonant_conservation,
    small_divisor_positivity,
    algebra_properties,
    tameness_witness,
]


def run_all(indices=None, printer=print):
    """Run the acceptance criteria (all by default), one line each."""
    results = []
    for i, fn in enumerate(ALL_CRITERIA, start=1):
        if indices and i not in indices:
            continue
        result = fn()
        results.append(result)
        if printer:
            printer(result.line() + f"  ({result.elapsed:.1f}s)")
    return results
