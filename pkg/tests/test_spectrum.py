import math

import numpy as np
import pytest

from kgbirkhoff import (
    DivisorQuery,
    SphereParams,
    build_sphere_spectrum,
    divisor_bound_scan,
    mass_scan,
    small_divisor,
)
from kgbirkhoff.spectrum import divisor_scan_rows


def test_frequencies_circle():
    spec = build_sphere_spectrum(SphereParams(d=1, m=1.0), 3)
    assert spec.omega[1] == pytest.approx(math.sqrt(2))
    assert spec.omega[2] == pytest.approx(math.sqrt(5))
    assert spec.omega[3] == pytest.approx(math.sqrt(10))


def test_lambda_is_n_on_circle():
    spec = build_sphere_spectrum(SphereParams(d=1, m=0.3), 10)
    for n in spec.clusters():
        assert spec.omega[n] == pytest.approx(math.sqrt(n * n + 0.09))


def test_small_mass_limit_d3():
    spec = build_sphere_spectrum(SphereParams(d=3, m=1e-9), 1)
    assert spec.omega[1] == pytest.approx(math.sqrt(3), rel=1e-12)


def test_invalid_parameters():
    with pytest.raises(ValueError):
        SphereParams(d=0, m=1.0)
    with pytest.raises(ValueError):
        SphereParams(d=1, m=0.0)
    with pytest.raises(ValueError):
        build_sphere_spectrum(SphereParams(d=1, m=1.0), 0)


def test_circle_modes_two_per_cluster():
    spec = build_sphere_spectrum(SphereParams(d=1, m=1.0), 5)
    for n in spec.clusters():
        assert sorted(spec.modes_in_cluster(n)) == [-n, n]
    assert 0 not in spec.mode_ids


def test_sphere_multiplicities():
    spec = build_sphere_spectrum(SphereParams(d=2, m=1.0), 4)
    for n in spec.clusters():
        assert len(spec.modes_in_cluster(n)) == 2 * n + 1
    cp = spec.cluster_params
    assert cp.alpha == pytest.approx(0.5)
    # every lambda_n sits inside its fitted interval
    for n in spec.clusters():
        lam = math.sqrt(n * (n + 1))
        assert abs(lam - (n + cp.alpha)) <= cp.c0 / n ** cp.delta + 1e-12


def test_omega_strictly_increasing():
    spec = build_sphere_spectrum(SphereParams(d=1, m=2.5), 40)
    om = [spec.omega[n] for n in spec.clusters()]
    assert all(b > a for a, b in zip(om, om[1:]))


def test_gap_asymptotics_circle():
    spec = build_sphere_spectrum(SphereParams(d=1, m=1.0), 60)
    # omega_{n+1} - omega_n -> 1 with defect O(1/n)
    for n in range(5, 60):
        gap = spec.omega[n + 1] - spec.omega[n] if n < 60 else None
    defects = [(abs(spec.omega[n + 1] - spec.omega[n] - 1.0), n)
               for n in range(5, 60)]
    assert all(d * n <= 2.0 for d, n in defects)


# ----------------------------------------------------------------------
# small divisors
# ----------------------------------------------------------------------

def test_small_divisor_examples():
    spec = build_sphere_spectrum(SphereParams(d=1, m=1.0), 4)
    val = small_divisor(spec, DivisorQuery((1, 1, 2), ell=2))
    assert val == pytest.approx(2 * math.sqrt(2) - math.sqrt(5))
    assert small_divisor(spec, DivisorQuery((3, 3), ell=1)) == 0.0
    val = small_divisor(spec, DivisorQuery((3, 1, 2, 2), ell=2))
    assert val == pytest.approx(math.sqrt(10) + math.sqrt(2)
                                - 2 * math.sqrt(5))


def test_small_divisor_range_error():
    spec = build_sphere_spectrum(SphereParams(d=1, m=1.0), 4)
    with pytest.raises(ValueError):
        small_divisor(spec, DivisorQuery((1, 5), ell=1))


def test_divisor_query_validation():
    with pytest.raises(ValueError):
        DivisorQuery((1,), ell=1)
    with pytest.raises(ValueError):
        DivisorQuery((1, 2), ell=3)
    with pytest.raises(ValueError):
        DivisorQuery((0, 2), ell=1)


def test_small_divisor_antisymmetry(rng):
    spec = build_sphere_spectrum(SphereParams(d=1, m=1.7), 12)
    for _ in range(50):
        k = int(rng.integers(1, 4))
        clusters = tuple(int(x) for x in rng.integers(1, 13, size=k + 1))
        ell = int(rng.integers(0, k + 2))
        a = small_divisor(spec, DivisorQuery(clusters, ell))
        b = small_divisor(spec, DivisorQuery(clusters[::-1], k + 1 - ell))
        assert a == pytest.approx(-b, abs=1e-13)


def test_pair_divisor_zero_iff_equal():
    spec = build_sphere_spectrum(SphereParams(d=1, m=1.0), 10)
    for a in spec.clusters():
        for b in spec.clusters():
            val = small_divisor(spec, DivisorQuery((a, b), ell=1))
            assert (val == 0.0) == (a == b)


# ----------------------------------------------------------------------
# scans
# ----------------------------------------------------------------------

def test_divisor_scan_positive_min():
    spec = build_sphere_spectrum(SphereParams(d=1, m=1.0), 20)
    rep = divisor_bound_scan(spec, k=2, ell=1, nu_bar=2.0)
    assert rep.min_weighted > 0
    assert rep.argmin is not None
    plus, minus = rep.argmin
    assert len(plus) == 1 and len(minus) == 2
    assert not rep.flagged


def test_divisor_scan_excludes_equal_multisets():
    spec = build_sphere_spectrum(SphereParams(d=1, m=1.0), 20)
    rep = divisor_bound_scan(spec, k=1, ell=1, nu_bar=2.0)
    assert rep.n_tuples == 20 * 20 - 20
    assert rep.min_weighted > 0


def test_divisor_scan_sign_pattern_symmetry():
    spec = build_sphere_spectrum(SphereParams(d=1, m=0.8), 15)
    a = divisor_bound_scan(spec, k=2, ell=1, nu_bar=3.0)
    b = divisor_bound_scan(spec, k=2, ell=2, nu_bar=3.0)
    assert a.min_weighted == pytest.approx(b.min_weighted)


def test_divisor_scan_flags_exceptional_mass():
    # at m = 2 on the circle, 2 omega_1 = omega_4 exactly:
    # 4 (1 + m^2) == 16 + m^2 at m^2 = 4
    assert 4 * (1 + 4) == 16 + 4
    spec = build_sphere_spectrum(SphereParams(d=1, m=2.0), 8)
    rep = divisor_bound_scan(spec, k=2, ell=2, nu_bar=2.0)
    flagged = {(f["plus"], f["minus"]) for f in rep.flagged}
    assert ((1, 1), (4,)) in flagged


def test_divisor_scan_rows_sorted():
    spec = build_sphere_spectrum(SphereParams(d=1, m=1.0), 12)
    rows = divisor_scan_rows(spec, k=2, ell=1, nu_bar=2.0, max_rows=25)
    weighted = [w for *_, w in rows]
    assert weighted == sorted(weighted)
    assert len(rows) == 25
    rep = divisor_bound_scan(spec, k=2, ell=1, nu_bar=2.0)
    assert weighted[0] == pytest.approx(rep.min_weighted)


def test_mass_scan_three_masses():
    rows = mass_scan(1, 2, [0.5, 1.0, 1.5], 30)
    assert len(rows) == 3
    assert all(r["c"] > 0 for r in rows)


def test_mass_scan_tiny_truncation_hand_enumeration():
    # n_max = 2, k = 1: the only non-resonant patterns are (1,2) and (2,1)
    # plus the all-plus / all-minus sums
    rows = mass_scan(1, 1, [1.0], 2, nu_bar=2.0)
    w1, w2 = math.sqrt(2), math.sqrt(5)
    expected = min(w2 - w1, 2 * w1, w1 + w2, 2 * w2)
    assert rows[0]["c"] == pytest.approx(expected)


def test_mass_scan_pair_convention():
    # k = 1 uses mu = 1, so c is the smallest |omega_a - omega_b| pattern
    rows = mass_scan(1, 1, [1.0], 10, nu_bar=5.0)
    spec = build_sphere_spectrum(SphereParams(d=1, m=1.0), 10)
    gaps = [spec.omega[n + 1] - spec.omega[n] for n in range(1, 10)]
    assert rows[0]["c"] == pytest.approx(min(min(gaps), 2 * spec.omega[1]))


def test_mass_scan_monotone_in_n_max():
    small = mass_scan(1, 2, [1.3], 12)[0]["c"]
    large = mass_scan(1, 2, [1.3], 24)[0]["c"]
    assert large <= small + 1e-15


def test_mass_scan_validation():
    with pytest.raises(ValueError):
        mass_scan(1, 2, [], 10)
    with pytest.raises(ValueError):
        mass_scan(1, 2, [0.0], 10)
