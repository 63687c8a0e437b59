import math

import numpy as np
import pytest

from kgbirkhoff import (
    HomPoly,
    NearResonantMassError,
    Nonlinearity,
    SphereParams,
    State,
    birkhoff,
    bracket_with_G2,
    build_sphere_spectrum,
    check_action_commutation,
    evaluate,
    g2_poly,
    g2_value,
    generator_flow,
    key,
    lie_transform,
    norm_inf,
    poisson_bracket,
    reality_check,
    resonant_split,
    solve_homological,
    symmetrize_real,
    taylor_hamiltonian,
)
from kgbirkhoff.normalform import action_poly, is_resonant_key
from kgbirkhoff.acceptance import _poly_product

from test_polyalg import random_poly


# ----------------------------------------------------------------------
# resonant split
# ----------------------------------------------------------------------

def test_split_examples(spec8):
    assert is_resonant_key(key([3, 5], [5, 3]), spec8)
    assert not is_resonant_key(key([3, 5], [5, 4]), spec8)
    # clusters are |Fourier index| on the circle: modes differ, clusters match
    assert is_resonant_key(key([3, 5], [-3, 5]), spec8)


def test_split_is_exact_partition(spec6, rng):
    p = random_poly(rng, 4, list(spec6.mode_ids), n_terms=20)
    sp = resonant_split(p, spec6)
    back = dict(sp.resonant.terms)
    back.update(sp.nonresonant.terms)
    assert back == p.terms
    assert not set(sp.resonant.terms) & set(sp.nonresonant.terms)


def test_odd_degree_entirely_nonresonant(spec6, rng):
    p = random_poly(rng, 3, list(spec6.mode_ids), n_terms=15)
    assert resonant_split(p, spec6).resonant.is_zero()


# ----------------------------------------------------------------------
# bracket with the quadratic part
# ----------------------------------------------------------------------

def test_bracket_g2_resonant_key_zero(spec8):
    p = HomPoly.monomial([3, -5], [-3, 5], 2.0 + 1j)
    assert bracket_with_G2(p, spec8).is_zero()


def test_bracket_g2_multiplier(spec4):
    p = HomPoly.monomial([1, 2], [3, 4], 1.0)
    b = bracket_with_G2(p, spec4)
    omega = [math.sqrt(n * n + 1) for n in range(1, 5)]
    target = -1j * (omega[0] + omega[1] - omega[2] - omega[3])
    assert b.terms[key([1, 2], [3, 4])] == pytest.approx(target)


def test_bracket_g2_matches_generic_bracket(spec6, rng):
    g2 = g2_poly(spec6)
    for _ in range(20):
        p = random_poly(rng, int(rng.integers(2, 5)),
                        list(spec6.mode_ids), n_terms=8)
        gap = norm_inf(bracket_with_G2(p, spec6) - poisson_bracket(p, g2))
        assert gap <= 1e-13 * norm_inf(p)


# ----------------------------------------------------------------------
# homological equation
# ----------------------------------------------------------------------

def test_homological_zero(spec6):
    f, z = solve_homological(HomPoly.zero(3), spec6)
    assert f.is_zero() and z.is_zero()


def test_homological_purely_resonant(spec6):
    q = symmetrize_real(HomPoly.monomial([3, -5], [-3, 5], 1.0))
    f, z = solve_homological(q, spec6)
    assert f.is_zero()
    assert norm_inf(z - q) == 0.0


def test_homological_residual(spec6, rng):
    g2 = g2_poly(spec6)
    for _ in range(10):
        q = symmetrize_real(random_poly(rng, 3, list(spec6.mode_ids),
                                        n_terms=12))
        f, z = solve_homological(q, spec6)
        resid = norm_inf(poisson_bracket(f, g2) + q - z)
        assert resid <= 1e-12 * norm_inf(q)
        assert reality_check(f) and reality_check(z)


def test_homological_requires_real_input(spec6):
    q = HomPoly.monomial([1, 2], [3], 1.0)      # not conjugate symmetric
    with pytest.raises(ValueError):
        solve_homological(q, spec6)


def test_homological_near_resonant_mass():
    # m = 2 on the circle: 2 omega_1 - omega_4 = 0 exactly
    spec = build_sphere_spectrum(SphereParams(d=1, m=2.0), 4)
    q = symmetrize_real(HomPoly.monomial([1, 1], [4], 1.0))
    with pytest.raises(NearResonantMassError) as err:
        solve_homological(q, spec)
    assert err.value.clusters_plus == (1, 1)
    assert err.value.clusters_minus == (4,)


# ----------------------------------------------------------------------
# Lie transform
# ----------------------------------------------------------------------

def test_lie_transform_zero_generator(spec6, rng):
    h = symmetrize_real(random_poly(rng, 3, list(spec6.mode_ids)))
    out = lie_transform([h], HomPoly.zero(3), 6, spec6)
    assert len(out) == 1
    assert norm_inf(out[0] - h) == 0.0


def test_lie_transform_rejects_low_degree(spec6):
    with pytest.raises(ValueError):
        lie_transform([], HomPoly.monomial([1], [1], 1.0), 6, spec6)


def test_lie_transform_first_order_kills_nonresonant(spec6, rng):
    q = symmetrize_real(random_poly(rng, 3, list(spec6.mode_ids),
                                    n_terms=10))
    f, _ = solve_homological(q, spec6)
    out = lie_transform([], f, q.degree, spec6)
    # H = G2 alone: the degree-(deg q) component is {F, G2} = -nonres(q)
    deg_part = [p for p in out if p.degree == q.degree]
    assert len(deg_part) == 1
    assert norm_inf(deg_part[0] + q) <= 1e-12 * norm_inf(q)


def test_lie_transform_matches_numeric_flow(spec4, rng):
    # |(G2+H)(flow(u)) - (G2 + lie_transform(H))(u)| = O(|u|^(max_deg+1))
    nl = Nonlinearity({3: 1.0})
    ham = taylor_hamiltonian(nl, spec4, max_degree=3)
    h3 = ham.part(3)
    f = 0.5 * h3
    max_degree = 5
    out = lie_transform([h3], f, max_degree, spec4)
    rng_dir = np.random.default_rng(5)
    z = rng_dir.normal(size=8) + 1j * rng_dir.normal(size=8)
    z /= np.linalg.norm(z)
    errs = []
    for amp in (0.2, 0.1):
        u = State({m: amp * complex(z[i])
                   for i, m in enumerate(spec4.mode_ids)})
        fu = generator_flow(f, u, 1.0, spec=spec4)
        lhs = g2_value(fu, spec4) + evaluate(h3, fu).real
        rhs = g2_value(u, spec4) + sum(evaluate(p, u).real for p in out)
        errs.append(abs(lhs - rhs))
    ratio = errs[0] / errs[1]
    # halving the amplitude scales the defect by ~2^(max_degree+1)
    assert 2 ** (max_degree + 0.4) <= ratio <= 2 ** (max_degree + 1.6)


# ----------------------------------------------------------------------
# the full iteration
# ----------------------------------------------------------------------

def test_birkhoff_zero_hamiltonian(spec6):
    nf = birkhoff([], spec6, r0=2)
    assert all(p.is_zero() for p in nf.z_parts)
    assert all(g.is_zero() for g in nf.generators)
    assert nf.dropped_degree == 5


def test_birkhoff_cubic_r1(spec4):
    ham = taylor_hamiltonian(Nonlinearity({3: 1.0}), spec4, max_degree=3)
    nf = birkhoff(ham.parts, spec4, r0=1)
    assert nf.z_part(3).is_zero()
    assert len(nf.generators) == 1
    assert not nf.generators[0].is_zero()
    assert nf.dropped_degree == 4


def test_birkhoff_cubic_r2_structure(spec4):
    ham = taylor_hamiltonian(Nonlinearity({3: 1.0}), spec4, max_degree=3)
    nf = birkhoff(ham.parts, spec4, r0=2)
    z4 = nf.z_part(4)
    assert not z4.is_zero()         # the transformed quartic part survives
    assert all(is_resonant_key(k, spec4) for k in z4.terms)
    assert all(reality_check(g) for g in nf.generators)
    assert all(reality_check(z) for z in nf.z_parts)
    assert all(p.degree <= 4 for p in nf.z_parts)
    assert [d.residual <= 1e-12 for d in nf.diagnostics]


def test_birkhoff_rejects_complex_input(spec4):
    bad = HomPoly.monomial([1, 1], [2], 1.0)
    with pytest.raises(ValueError):
        birkhoff([bad], spec4, r0=1)


def test_birkhoff_near_resonant_mass_propagates_step():
    spec = build_sphere_spectrum(SphereParams(d=1, m=2.0), 4)
    q = symmetrize_real(HomPoly.monomial([1, 1], [4], 1.0))
    with pytest.raises(NearResonantMassError) as err:
        birkhoff([q], spec, r0=1)
    assert err.value.step == 1


def test_birkhoff_insertion_order_independent(spec4, rng):
    ham = taylor_hamiltonian(Nonlinearity({3: 1.0}), spec4, max_degree=3)
    h3 = ham.part(3)
    items = list(h3.terms.items())
    rng.shuffle(items)
    h3_shuffled = HomPoly(3, dict(items))
    a = birkhoff([h3], spec4, r0=2).z_part(4)
    b = birkhoff([h3_shuffled], spec4, r0=2).z_part(4)
    assert norm_inf(a - b) <= 1e-12 * norm_inf(a)


# ----------------------------------------------------------------------
# action commutation
# ----------------------------------------------------------------------

def test_commutation_resonant_exact_zero(spec8):
    z = symmetrize_real(HomPoly.monomial([3, -5], [-3, 5], 1.7))
    assert check_action_commutation(z, spec8) == 0.0


def test_commutation_nonresonant_positive(spec4):
    z = HomPoly.monomial([1, 2], [3, 4], 1.0)
    for a in (1, 2, 3, 4):
        residual = norm_inf(poisson_bracket(action_poly(spec4, a), z))
        assert residual > 0.5


def test_commutation_action_square(spec4):
    j1 = action_poly(spec4, 1)
    z = _poly_product(j1, j1)
    assert check_action_commutation(z, spec4) == 0.0
