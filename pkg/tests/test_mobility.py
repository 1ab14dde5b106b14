import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mixlimit.mobility import (MobilityKind, c_eta, flux_from_gradq, mobility, onsager_reduced)
from mixlimit.thermo import default_spec
from mixlimit.transform import make_basis

KINDS = [MobilityKind("uniform", 0.7), MobilityKind("maxwell-stefan", d=1.3),
         MobilityKind("sum", 0.7, 1.3)]
rho3 = st.lists(st.floats(0.01, 5.0), min_size=3, max_size=3).map(np.array)


def test_kind_validation():
    with pytest.raises(ValueError):
        MobilityKind("fick", 1.0)
    with pytest.raises(ValueError):
        MobilityKind("uniform", -1.0)


def test_ms_toy_example():
    M = mobility(MobilityKind("maxwell-stefan", d=1.0), np.array([0.5, 0.5]))
    assert np.allclose(M, [[0.25, -0.25], [-0.25, 0.25]])


def test_uniform_formula():
    M = mobility(MobilityKind("uniform", 2.0), np.array([0.1, 0.2, 0.3]))
    assert np.allclose(M, 2.0 * (np.eye(3) - 1 / 3))


@pytest.mark.parametrize("kind", KINDS)
@given(rho=rho3)
def test_structure(kind, rho):
    M = mobility(kind, rho)
    assert np.array_equal(M, M.T) or np.max(np.abs(M - M.T)) <= 1e-15 * np.abs(M).max()
    assert np.max(np.abs(M.sum(axis=1))) <= 1e-14 * (1 + np.abs(M).max())
    assert np.linalg.eigvalsh(0.5 * (M + M.T))[0] >= -1e-12 * np.abs(M).max()


@pytest.mark.parametrize("kind", [KINDS[0], KINDS[2]])
@given(rho=rho3)
def test_uniform_floor(kind, rho):
    M = mobility(kind, rho)
    Q, _ = np.linalg.qr(np.column_stack([np.ones(3), np.eye(3)[:, :2]]))
    perp = Q[:, 1:]
    assert np.linalg.eigvalsh(perp.T @ M @ perp)[0] >= kind.lambda0 - 1e-10


def test_lipschitz(rng):
    kind = MobilityKind("maxwell-stefan", d=1.0)
    for _ in range(200):
        a = rng.uniform(0.1, 1.0, 3)
        b = a + rng.normal(scale=1e-3, size=3)
        L = kind.d * (1 + 2 * np.sqrt(3))
        assert np.linalg.norm(mobility(kind, a) - mobility(kind, b), 2) <= L * np.linalg.norm(a - b)


def test_degenerate_rejected():
    with pytest.raises(ValueError):
        mobility(KINDS[1], np.zeros(2))


def test_reduced_examples():
    spec = default_spec()
    b = make_basis(spec.vbar)
    Mt = onsager_reduced(b, MobilityKind("maxwell-stefan", d=1.0), np.array([0.5, 0.5]))
    assert Mt.shape == (1, 1) and Mt[0, 0] == pytest.approx(0.25)
    lam = 0.8
    Mt = onsager_reduced(b, MobilityKind("uniform", lam), np.array([0.5, 0.5]))
    Pi = b.Pi
    expect = lam * Pi.T @ Pi - lam / 2 * np.outer(Pi.T @ np.ones(2), np.ones(2) @ Pi)
    assert np.allclose(Mt, expect)


@pytest.mark.parametrize("vbar", [[1.0, 2.0], [1.0, 2.0, 3.0], [0.5, 1.0, 4.0]])
def test_reduced_floor(rng, vbar):
    b = make_basis(vbar)
    kind = MobilityKind("sum", 0.3, 0.5)
    ce = c_eta(b)
    for rho in rng.uniform(0.05, 2.0, (1000, len(vbar))):
        assert np.linalg.eigvalsh(onsager_reduced(b, kind, rho))[0] >= kind.lambda0 / ce - 1e-12


def test_c_eta_tight_n2():
    b = make_basis([1.0, 2.0])
    Mt = onsager_reduced(b, MobilityKind("uniform", 1.0), np.array([0.3, 0.3]))
    assert Mt[0, 0] == pytest.approx(1.0 / c_eta(b))


def test_flux(rng):
    spec = default_spec(M=(1.0, 2.0, 3.0), vbar=(1.0, 2.0, 3.0), alpha=2.0)
    b = make_basis(spec.vbar)
    kind = KINDS[2]
    rho = rng.uniform(0.1, 1.0, 3)
    assert np.allclose(flux_from_gradq(b, kind, rho, np.zeros(2)), 0.0)
    g = rng.normal(size=2)
    J = flux_from_gradq(b, kind, rho, g)
    assert abs(J.sum()) <= 1e-14
    Mt = onsager_reduced(b, kind, rho)
    assert -J @ (b.Pi @ g) == pytest.approx(g @ Mt @ g)
    assert g @ Mt @ g >= 0
    gd = rng.normal(size=(2, 4))
    Jd = flux_from_gradq(b, kind, rho, gd)
    assert Jd.shape == (3, 4) and np.max(np.abs(Jd.sum(axis=0))) <= 1e-14
