"""Transfer of structure from f_e to its transform over the catalog corpus."""
import numpy as np
import pytest
from hypothesis import given, strategies as st

from anisolag import checks
from anisolag.fields import get_field
from anisolag.lagrangian import catalog_lagrangian, parse_lagrangian, transform

from conftest import CATALOG_EUCLIDEAN, CATALOG_FIELDS

N = 2_000
PAIRS = [(f, e, p) for f in CATALOG_FIELDS for e, p in CATALOG_EUCLIDEAN]


def build(field_name, name, params):
    fld = get_field(field_name)
    f_e = catalog_lagrangian(name, fld, **params)
    return fld, f_e, transform(f_e, fld)


@pytest.mark.parametrize("field_name,name,params", PAIRS)
def test_representation_when_kernel_invariant(field_name, name, params):
    fld, f_e, f = build(field_name, name, params)
    if not checks.check_kernel_invariance(f_e, fld, N, 1e-12).passed:
        assert name == "euclidean_norm_sq"
        return
    assert checks.check_representation(f_e, f, fld, N, 1e-9).passed
    assert checks.check_costonker(f, fld, N, 1e-9).passed


@pytest.mark.parametrize("field_name,name,params", PAIRS)
def test_growth_and_coercivity_transfer(field_name, name, params):
    fld, f_e, f = build(field_name, name, params)
    cert = f_e.certificate
    if cert is None:
        return
    hyp = checks.check_euclidean_growth(f_e, fld, cert, N)
    assert hyp.passed
    rep = checks.check_growth_transfer(f_e, f, fld, cert, N)
    assert rep.parts["upper"].passed and rep.parts["lower"].passed


@pytest.mark.parametrize("field_name,name,params", PAIRS)
def test_u_independence_and_convexity_transfer(field_name, name, params):
    fld, f_e, f = build(field_name, name, params)
    if not f_e.uses_u:
        assert checks.check_u_independence(f, fld, N).passed
    for mode in ("gradient", "joint"):
        if checks.check_convexity(f_e, fld, N, mode=mode).passed:
            assert checks.check_convexity(f, fld, N, mode=mode).passed


@pytest.mark.parametrize("field_name", CATALOG_FIELDS)
def test_transform_is_continuous(field_name):
    fld, _, f = build(field_name, "area", {})
    assert checks.check_continuity(f, fld, segments=50).passed


def test_continuity_detects_a_jump():
    fld = get_field("euclidean")
    step = parse_lagrangian("max(min(1e9*z1, 1), 0)")
    assert not checks.check_continuity(step, fld, segments=200).passed


@given(st.floats(1.0, 4.0), st.integers(0, 2**16), st.sampled_from(CATALOG_FIELDS))
def test_p_dirichlet_representation_property(p, seed, field_name):
    fld = get_field(field_name)
    f_e = catalog_lagrangian("p_dirichlet", fld, p=p)
    f = transform(f_e, fld)
    assert checks.check_representation(f_e, f, fld, 200, 1e-9, seed).passed
    assert checks.check_costonker(f, fld, 200, 1e-9, seed).passed


@given(st.integers(0, 2**16))
def test_transform_of_range_quadratic_is_f1(seed):
    fld = get_field("degenerate_pair")
    rng = np.random.default_rng(seed)
    x = fld.sample_points(50, rng)
    eta = 5 * rng.standard_normal((50, 2))
    f = transform(catalog_lagrangian("p_dirichlet", fld, p=2), fld)
    f1 = parse_lagrangian("2*((z1+z2)/2)^2")
    a, b = f(x, np.zeros(50), eta), f1(x, np.zeros(50), eta)
    assert np.all(np.abs(a - b) <= 1e-12 * (1 + np.abs(b)))
