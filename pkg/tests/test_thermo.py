import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mixlimit.roots import SolverError, expand_bracket, newton_decreasing
from mixlimit.thermo import (ConstraintError, DomainError, MixtureSpec, ThermoFamily,
                             chemical_potentials, default_spec, eos_closed_form, eos_pressure,
                             fractions, free_energy, gbar, gbar_eval, gm, gm_eval, hessian,
                             mix_entropy, pi_m, potentials_to_densities, thermo_point)

SPEC = default_spec()
pos = st.floats(0.05, 3.0)
m_values = st.sampled_from([1.0, 10.0, 100.0, 1e3, 1e4])


def rho2():
    return st.tuples(pos, pos).map(np.array)


# ---------------------------------------------------------------- root finding

def test_newton_decreasing_sqrt2():
    x = newton_decreasing(lambda x: (2.0 - x * x, -2 * x), np.array([0.0]), np.array([3.0]))
    assert x[0] == pytest.approx(math.sqrt(2.0), rel=1e-15)


def test_expand_bracket_finds_far_root():
    lo, hi = expand_bracket(lambda x: 1e3 - x, np.array([0.0]))
    assert lo[0] < 1e3 < hi[0]


def test_expand_bracket_reports_failure():
    with pytest.raises(SolverError):
        expand_bracket(lambda x: np.ones_like(x), np.array([0.0]), maxexpand=5)


# ---------------------------------------------------------------- spec and family

def test_spec_derived_quantities(spec):
    assert spec.rho_min == 0.5 and spec.rho_max == 1.0
    assert spec.gamma == 2.0 >= 9 / 5
    assert spec.beta == pytest.approx(4 / 3)
    assert spec.nu == pytest.approx(0.1)


@pytest.mark.parametrize("kw", [dict(alpha=(1.0, 2.0)), dict(M=(-1.0, 2.0)), dict(RT=0.0),
                                dict(eta_visc=-1.0), dict(family="cubic")])
def test_spec_rejects_invalid(kw):
    with pytest.raises(ValueError):
        default_spec(**kw)


def test_gbar_eval_examples():
    s1 = default_spec(vbar=(1.0, 2.0))
    assert gbar_eval(s1, 0, 1.0) == pytest.approx((0.0, 1.0, -0.5))
    assert gbar_eval(s1, 1, 4.0) == pytest.approx((4.0, 1.0, -0.125))


def test_gbar_small_s_limit(spec):
    g, g1, _ = gbar(spec, np.array([1e-12]))
    assert np.all(g < -20) and np.all(g1 > 1e11)


def test_gbar_domain(spec):
    with pytest.raises(DomainError):
        gbar(spec, np.array([0.0]))


@pytest.mark.parametrize("m", [1.0, 10.0, 1e4])
def test_gm_at_zero(spec, m):
    fam = ThermoFamily(spec, m)
    for i in range(2):
        g, g1, g2 = gm_eval(fam, i, 0.0)
        assert g == 0.0 and g1 == pytest.approx(spec.vbar[i])
        assert g2 == pytest.approx(gbar_eval(spec, i, 1.0)[2] / m)


def test_gm_infinite_is_affine():
    fam = ThermoFamily(default_spec(vbar=(2.0, 1.0)), math.inf)
    assert gm_eval(fam, 0, 3.0) == (6.0, 2.0, 0.0)


def test_gm_m100_close_to_affine(spec):
    fam = ThermoFamily(spec, 100.0)
    g, _, _ = gm_eval(fam, 0, 5.0)
    sup = 0.5  # |g''| on [1, 1.05], right branch, alpha = 2, vbar = 1
    assert abs(g - 5.0) <= 0.5 * sup * 25 / 100


def test_gm_domain(spec):
    with pytest.raises(DomainError):
        gm(ThermoFamily(spec, 10.0), np.array(-10.0))


@given(st.floats(-0.99, 50.0), m_values)
def test_family_monotone_concave(ratio, m):
    fam = ThermoFamily(SPEC, m)
    _, g1, g2 = gm(fam, np.array(ratio * m))
    assert np.all(g1 > 0) and np.all(g2 < 0)
    assert g1[0] < g1[1]  # ordering (A') for vbar = (1, 2)


# ---------------------------------------------------------------- fractions and entropy

def test_fractions_example(spec):
    x, y, n = fractions(spec, np.array([0.3, 0.2]))
    assert x == pytest.approx([0.75, 0.25]) and y == pytest.approx([0.6, 0.4])
    assert n == pytest.approx(0.4)


def test_fractions_single_species_and_symmetry(spec):
    x, _, _ = fractions(spec, np.array([0.7, 0.0]))
    assert list(x) == [1.0, 0.0]
    s = default_spec(M=(1.0, 1.0))
    x, y, _ = fractions(s, np.array([0.4, 0.4]))
    assert list(x) == [0.5, 0.5] == list(y)


def test_fractions_degenerate(spec):
    with pytest.raises(DomainError):
        fractions(spec, np.zeros(2))


def test_mix_entropy_example(spec):
    k, _, _ = mix_entropy(spec, np.array([0.3, 0.2]))
    assert k == pytest.approx(0.3 * math.log(0.75) + 0.1 * math.log(0.25), rel=1e-14)
    assert k == pytest.approx(-0.224934, abs=1e-6)


def test_mix_entropy_single_species():
    s = MixtureSpec(M=(1.0,), vbar=(1.0,), alpha=(2.0,))
    assert mix_entropy(s, np.array([0.8]))[0] == 0.0


def test_mix_entropy_rejects_zero(spec):
    with pytest.raises(DomainError):
        mix_entropy(spec, np.array([0.5, 0.0]))


@given(rho2())
def test_entropy_homogeneity(rho):
    k, Dk, D2k = mix_entropy(SPEC, rho)
    assert abs(Dk @ rho - k) <= 1e-10 * (1 + abs(k))
    assert np.max(np.abs(D2k @ rho)) <= 1e-10


# ---------------------------------------------------------------- EOS

@pytest.mark.parametrize("rho,p", [((0.3, 0.2), 0.7), ((0.6, 0.2), 1.0), ((0.8, 0.6), 4.0)])
def test_eos_examples(spec, rho, p):
    assert eos_pressure(spec, np.array(rho)) == pytest.approx(p, rel=1e-14)


@given(st.tuples(st.floats(0.01, 20.0), st.floats(0.01, 20.0)).map(np.array))
def test_eos_matches_closed_form(rho):
    p = eos_pressure(SPEC, rho)
    assert abs(p - eos_closed_form(SPEC, rho)) <= 1e-10 * p


def test_eos_bracket_holds(spec, rng):
    rho = rng.uniform(0.05, 2.0, size=(500, 2))
    p = eos_pressure(spec, rho)
    vr = rho.sum(axis=1)
    a = np.log(spec.vbar)[None, :] + np.log(vr)[:, None]
    t = np.where(a <= 0, a, 2 * a)
    assert np.all(np.log(p) >= t.min(axis=1) - 1e-12)
    assert np.all(np.log(p) <= t.max(axis=1) + 1e-12)


def test_pi_m_examples(spec):
    on = np.array([0.6, 0.2])
    for m in (10.0, 1e4, math.inf):
        assert pi_m(ThermoFamily(spec, m), on) == pytest.approx(0.0, abs=1e-12)
    assert pi_m(ThermoFamily(spec, 10.0), np.array([0.8, 0.6])) == pytest.approx(30.0)
    # w = rho . vbar = sqrt(1.03) gives p_hat = w^2 = 1.03
    rho = np.array([math.sqrt(1.03), 0.0])
    assert pi_m(ThermoFamily(spec, 100.0), rho) == pytest.approx(3.0, rel=1e-9)


def test_pi_m_infinite_off_surface(spec):
    with pytest.raises(ConstraintError):
        pi_m(ThermoFamily(spec, math.inf), np.array([0.5, 0.5]))


# ---------------------------------------------------------------- free energy and potentials

@pytest.mark.parametrize("m", [1.0, 100.0, 1e4, math.inf])
def test_free_energy_on_surface_is_entropy(spec, m):
    rho = np.array([0.4, 0.3])
    assert free_energy(ThermoFamily(spec, m), rho) == pytest.approx(mix_entropy(spec, rho)[0])


def test_chemical_potentials_on_surface(spec):
    rho = np.array([0.4, 0.3])
    x, _, _ = fractions(spec, rho)
    mu = chemical_potentials(ThermoFamily(spec, 100.0), rho)
    assert mu == pytest.approx(np.log(x) / spec.M, abs=1e-13)


def test_chemical_potentials_infinite_needs_p(spec):
    rho = np.array([0.4, 0.3])
    with pytest.raises(ValueError):
        chemical_potentials(ThermoFamily(spec, math.inf), rho)
    x, _, _ = fractions(spec, rho)
    mu = chemical_potentials(ThermoFamily(spec, math.inf), rho, p=2.0)
    assert mu == pytest.approx(2.0 * spec.vbar + np.log(x) / spec.M)


def test_coercivity_uniform_in_m(spec):
    big = np.array([[3.0, 2.0], [10.0, 5.0], [30.0, 1.0]])
    vals = [free_energy(ThermoFamily(spec, m), big) / np.linalg.norm(big, axis=1) ** spec.gamma
            for m in (1.0, 10.0, 100.0)]
    assert np.min(vals) > 0.05


@given(rho2(), m_values)
def test_gibbs_duhem(rho, m):
    fam = ThermoFamily(SPEC, m)
    pi = pi_m(fam, rho)
    res = -free_energy(fam, rho) + rho @ chemical_potentials(fam, rho) - pi
    assert abs(res) <= 1e-9 * (1 + abs(pi))


@given(rho2(), m_values)
def test_gradient_matches_fd(rho, m):
    fam = ThermoFamily(SPEC, m)
    mu = chemical_potentials(fam, rho)
    h = 1e-5
    fd = np.array([(free_energy(fam, rho + h * e) - free_energy(fam, rho - h * e)) / (2 * h)
                   for e in np.eye(2)])
    assert np.max(np.abs(mu - fd)) / (1 + np.max(np.abs(mu))) <= 1e-6


def test_hessian_matches_fd_and_is_spd(spec, rng):
    for m in (1.0, 100.0, 1e4):
        fam = ThermoFamily(spec, m)
        for _ in range(100):
            rho = rng.uniform(0.1, 2.0, size=2)
            p = eos_pressure(spec, rho)
            if not (0.2 <= p <= 50) or abs(p - 1) < 1e-3:
                continue
            H = hessian(fam, rho)
            assert np.array_equal(H, H.T)
            assert np.linalg.eigvalsh(H)[0] > 0
            h = 1e-5
            fd = np.column_stack([(chemical_potentials(fam, rho + h * e)
                                   - chemical_potentials(fam, rho - h * e)) / (2 * h)
                                  for e in np.eye(2)])
            assert np.max(np.abs(H - fd)) <= 1e-5 * np.max(np.abs(H))


@given(rho2(), m_values)
def test_potentials_round_trip(rho, m):
    fam = ThermoFamily(SPEC, m)
    back = potentials_to_densities(fam, chemical_potentials(fam, rho))
    assert np.max(np.abs(back - rho)) <= 1e-8 * np.max(rho)


def test_potentials_to_densities_reference_example():
    s = default_spec(M=(1.0, 1.0), vbar=(1.0, 1.0))
    fam = ThermoFamily(s, 10.0)
    rho = potentials_to_densities(fam, np.log([0.5, 0.5]))
    x, _, _ = fractions(s, rho)
    assert x == pytest.approx([0.5, 0.5]) and float(pi_m(fam, rho)) == pytest.approx(0.0, abs=1e-12)


def test_thermo_point_invariants(spec):
    pt = thermo_point(ThermoFamily(spec, 100.0), np.array([0.5, 0.4]))
    assert pt.x.sum() == pytest.approx(1.0)
    _, g1, _ = gbar(spec, np.array(pt.p_hat))
    assert pt.rho @ g1 == pytest.approx(1.0, abs=1e-12)
    assert -pt.f + pt.rho @ pt.mu == pytest.approx(pt.pi_m)
