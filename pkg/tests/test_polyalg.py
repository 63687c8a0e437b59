import json
import math

import numpy as np
import pytest

from kgbirkhoff import (
    HomPoly,
    State,
    class_norm,
    evaluate,
    gradient,
    key,
    mu_S,
    norm_inf,
    poisson_bracket,
    poly_from_json,
    poly_to_dict,
    poly_to_json,
    reality_check,
    symmetrize_real,
    vector_field,
)
from kgbirkhoff.acceptance import _dense, _dense_bracket, _poly_product


def random_poly(rng, degree, modes, n_terms=6):
    terms = {}
    for _ in range(n_terms):
        ell = int(rng.integers(0, degree + 1))
        u = rng.choice(modes, size=ell).tolist()
        ub = rng.choice(modes, size=degree - ell).tolist()
        terms[key(u, ub)] = complex(rng.normal(), rng.normal())
    return HomPoly(degree, terms)


# ----------------------------------------------------------------------
# mu / S weights
# ----------------------------------------------------------------------

def test_mu_S_examples():
    assert mu_S((2, 5, 7)) == (7, 5, 2, 2)
    assert mu_S((4, 9))[2] == 1          # pair convention
    top, second, mu, s = mu_S((1, 1, 10))
    assert (top, second, mu) == (10, 1, 1)
    assert s == 8 + 1                    # [10 - 2]_+ + mu


def test_mu_S_rejects_short_tuples():
    with pytest.raises(ValueError):
        mu_S((3,))


def test_mu_S_order_and_bounds(rng):
    for _ in range(200):
        n = int(rng.integers(2, 7))
        t = tuple(int(x) for x in rng.integers(1, 30, size=n))
        top, second, mu, s = mu_S(t)
        assert s >= mu >= 1
        assert mu <= second <= top
        perm = tuple(rng.permutation(t))
        assert mu_S(perm) == (top, second, mu, s)


# ----------------------------------------------------------------------
# polynomial container
# ----------------------------------------------------------------------

def test_homopoly_prunes_exact_zeros():
    p = HomPoly(2, {key([1], [1]): 0.0, key([2], [2]): 1.0})
    assert len(p) == 1


def test_homopoly_rejects_wrong_degree_keys():
    with pytest.raises(ValueError):
        HomPoly(3, {key([1], [1]): 1.0})


def test_add_cancels():
    p = HomPoly.monomial([1], [2], 1.5)
    q = p + (-p)
    assert q.is_zero()


# ----------------------------------------------------------------------
# calculus
# ----------------------------------------------------------------------

def test_gradient_first_order():
    p = HomPoly.monomial([1], [2], 1.0)          # u_1 ubar_2
    g = gradient(p, "u", 1)
    assert g.terms == {key([], [2]): 1.0}


def test_gradient_power_rule():
    p = HomPoly.monomial([1, 1], [], 1.0)        # u_1^2
    g = gradient(p, "u", 1)
    assert g.terms == {key([1], []): 2.0}


def test_gradient_ubar_with_multiplicity():
    p = HomPoly.monomial([1], [1, 2], 1.0)       # u_1 ubar_1 ubar_2
    g = gradient(p, "ubar", 1)
    assert g.terms == {key([1], [2]): 1.0}


def test_bracket_self_action_commutes():
    j = HomPoly.monomial([1], [1], 1.0)
    assert poisson_bracket(j, j).is_zero()


def test_bracket_with_quadratic_diagonal():
    # {M, sum omega u ubar} = -i Omega M with the plus sign on u slots
    omega = {1: 1.3, 2: 2.7, 3: 0.4, 4: 5.0}
    g2 = HomPoly(2, {key([m], [m]): w for m, w in omega.items()})
    m = HomPoly.monomial([1, 2], [3, 4], 1.0)
    b = poisson_bracket(m, g2)
    target = -1j * (omega[1] + omega[2] - omega[3] - omega[4])
    assert b.terms == {key([1, 2], [3, 4]): target}


def test_bracket_one_mode_brute_force():
    # {ubar_a^2, u_a^2} = 4i u_a ubar_a; swapping arguments flips the sign
    f = HomPoly.monomial([], [7, 7], 1.0)
    g = HomPoly.monomial([7, 7], [], 1.0)
    assert poisson_bracket(f, g).terms == {key([7], [7]): 4j}
    assert poisson_bracket(g, f).terms == {key([7], [7]): -4j}


def test_bracket_degree_bookkeeping(rng):
    modes = [1, -1, 2, -2, 3]
    for _ in range(20):
        f = random_poly(rng, int(rng.integers(2, 5)), modes)
        g = random_poly(rng, int(rng.integers(2, 5)), modes)
        b = poisson_bracket(f, g)
        if not b.is_zero():
            assert b.degree == f.degree + g.degree - 2


def test_bracket_degree_underflow_returns_zero():
    f = HomPoly.monomial([1], [], 1.0)
    g = HomPoly.monomial([2], [], 1.0)
    assert poisson_bracket(f, g).is_zero()


def test_bracket_antisymmetry_and_jacobi(rng):
    modes = [1, -1, 2, -2, 3, -3]
    for _ in range(10):
        f = random_poly(rng, 3, modes)
        g = random_poly(rng, 2, modes)
        h = random_poly(rng, 3, modes)
        anti = poisson_bracket(f, g) + poisson_bracket(g, f)
        assert norm_inf(anti) <= 1e-12 * norm_inf(f) * norm_inf(g)
        jac = (poisson_bracket(poisson_bracket(f, g), h)
               + poisson_bracket(poisson_bracket(g, h), f)
               + poisson_bracket(poisson_bracket(h, f), g))
        scale = norm_inf(f) * norm_inf(g) * norm_inf(h)
        assert norm_inf(jac) <= 1e-12 * scale


def test_bracket_leibniz(rng):
    modes = [1, -1, 2]
    for _ in range(10):
        f = random_poly(rng, 3, modes, n_terms=4)
        g = random_poly(rng, 2, modes, n_terms=4)
        h = random_poly(rng, 2, modes, n_terms=4)
        lhs = poisson_bracket(f, _poly_product(g, h))
        rhs = _poly_product(poisson_bracket(f, g), h) \
            + _poly_product(g, poisson_bracket(f, h))
        scale = norm_inf(f) * norm_inf(g) * norm_inf(h)
        assert norm_inf(lhs - rhs) <= 1e-12 * scale


def test_bracket_matches_dense_oracle(rng):
    modes = [1, -1, 2]
    for _ in range(12):
        f = random_poly(rng, int(rng.integers(2, 4)), modes, n_terms=5)
        g = random_poly(rng, int(rng.integers(2, 4)), modes, n_terms=5)
        sparse = _dense(poisson_bracket(f, g), modes)
        oracle = _dense_bracket(_dense(f, modes), _dense(g, modes),
                                len(modes))
        scale = norm_inf(f) * norm_inf(g)
        for kk in set(sparse) | set(oracle):
            assert abs(sparse.get(kk, 0j) - oracle.get(kk, 0j)) \
                <= 1e-12 * scale


# ----------------------------------------------------------------------
# evaluation
# ----------------------------------------------------------------------

def test_evaluate_modulus_squared():
    p = HomPoly.monomial([1], [1], 1.0)
    assert evaluate(p, State({1: 3 + 4j})) == pytest.approx(25.0)


def test_evaluate_real_polynomial_is_real(rng):
    modes = [1, -1, 2, -2]
    for _ in range(10):
        p = symmetrize_real(random_poly(rng, 3, modes))
        st = State({m: complex(rng.normal(), rng.normal()) for m in modes})
        val = evaluate(p, st)
        assert abs(val.imag) <= 1e-12 * max(abs(val), 1.0)


def test_vector_field_example():
    p = HomPoly.monomial([1, 1], [2], 1.0)       # u_1^2 ubar_2
    x = vector_field(p, State({1: 1.0, 2: 1j}))
    assert set(x.amplitudes) == {2}
    assert x.amplitudes[2] == pytest.approx(1j)


def test_vector_field_multiplicity():
    p = HomPoly.monomial([], [1, 1], 1.0)        # ubar_1^2
    x = vector_field(p, State({1: 2.0}))
    # i * d/dubar_1 = i * 2 ubar_1 = 4i at u_1 = 2
    assert x.amplitudes[1] == pytest.approx(4j)


# ----------------------------------------------------------------------
# reality
# ----------------------------------------------------------------------

def test_reality_examples():
    assert reality_check(HomPoly.monomial([1], [1], 1.0))
    assert not reality_check(HomPoly.monomial([1], [1], 1j))
    p = HomPoly(2, {key([1, 2], []): 2 + 1j, key([], [1, 2]): 2 - 1j})
    assert reality_check(p)


def test_symmetrize_real_projects(rng):
    modes = [1, -1, 2]
    p = random_poly(rng, 3, modes)
    q = symmetrize_real(p)
    assert reality_check(q)
    # already-real polynomials are fixed points
    assert norm_inf(symmetrize_real(q) - q) <= 1e-15 * norm_inf(q)


def test_reality_closed_under_bracket(rng):
    modes = [1, -1, 2, -2]
    for _ in range(10):
        f = symmetrize_real(random_poly(rng, 3, modes))
        g = symmetrize_real(random_poly(rng, 3, modes))
        assert reality_check(poisson_bracket(f, g))


# ----------------------------------------------------------------------
# class norm
# ----------------------------------------------------------------------

def test_class_norm_zero(spec8):
    rep = class_norm(HomPoly.zero(3), spec8, nu=0, N=1)
    assert rep.best_constant == 0.0


def test_class_norm_single_key(spec8):
    p = HomPoly.monomial([2], [5, 7], 1.0)
    rep = class_norm(p, spec8, nu=0, N=1)
    # S = mu = 2 for clusters (2, 5, 7), so S/mu = 1
    assert rep.best_constant == pytest.approx(1.0)
    assert rep.argmax_key == key([2], [5, 7])


def test_class_norm_slot_order_immaterial(spec8):
    a = class_norm(HomPoly.monomial([2, 7], [5], 1.0), spec8, nu=1, N=2)
    b = class_norm(HomPoly.monomial([5], [2, 7], 1.0), spec8, nu=1, N=2)
    assert a.best_constant == pytest.approx(b.best_constant)


# ----------------------------------------------------------------------
# serialization
# ----------------------------------------------------------------------

def test_json_round_trip(rng):
    p = random_poly(rng, 3, [1, -1, 2], n_terms=8)
    q = poly_from_json(poly_to_json(p))
    assert q.degree == p.degree
    assert norm_inf(q - p) == 0.0


def test_json_is_byte_stable(rng):
    p = random_poly(rng, 3, [1, -1, 2], n_terms=8)
    assert poly_to_json(p) == poly_to_json(poly_from_json(poly_to_json(p)))
    terms = poly_to_dict(p)["terms"]
    assert terms == sorted(terms, key=lambda t: (t["u"], t["ubar"]))


def test_json_format_shape():
    p = HomPoly.monomial([2, 1], [3], 0.5 - 2j)
    doc = json.loads(poly_to_json(p))
    assert doc == {"degree": 3,
                   "terms": [{"u": [1, 2], "ubar": [3],
                              "re": 0.5, "im": -2.0}]}
