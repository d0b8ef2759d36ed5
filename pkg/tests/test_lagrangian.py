import math

import numpy as np
import pytest

from anisolag import checks
from anisolag.errors import InputError, LookupFailure, ParseError, UnknownIdentifierError
from anisolag.fields import get_field
from anisolag.lagrangian import (ANISOTROPIC, EUCLIDEAN, GrowthCertificate, canonical_source, catalog_lagrangian,
                                 lagrangian_from_json, parse_lagrangian, transform, transform_spec)

DP = get_field("degenerate_pair")
F1 = "2*((z1+z2)/2)^2"
F2 = "2*((z1+z2)/2)^2 + exp((z1-z2)^2) - 1"
N = 2_000


def test_parse_examples():
    f1 = parse_lagrangian(F1)
    assert f1.kind == ANISOTROPIC and not f1.uses_u
    assert f1(np.zeros((1, 2)), [0.0], [[1.0, 1.0]])[0] == 2.0
    zero = parse_lagrangian("0")
    assert zero(np.zeros((3, 2)), np.ones(3), np.ones((3, 2))).tolist() == [0.0, 0.0, 0.0]
    f2 = parse_lagrangian(F2)
    assert f2(np.zeros((1, 2)), [0.0], [[1.0, -1.0]])[0] == pytest.approx(math.exp(4) - 1)


def test_parse_errors():
    with pytest.raises(ParseError):
        parse_lagrangian("z1 +* z2")
    with pytest.raises(UnknownIdentifierError):
        parse_lagrangian("z3^2", dim=2)
    with pytest.raises(InputError):
        parse_lagrangian("u + z1", arity="without-u")
    with pytest.raises(InputError):
        parse_lagrangian("   ")


def test_canonical_source_round_trip():
    lag = parse_lagrangian(F2)
    again = parse_lagrangian(canonical_source(lag))
    assert again.tree == lag.tree


def test_json_forms():
    lag = lagrangian_from_json({"kind": "anisotropic", "arity": "without-u", "source": F1})
    assert lag.to_json()["source"] == F1
    cat = lagrangian_from_json({"catalog": "p_dirichlet", "params": {"p": 2}}, DP)
    assert cat.kind == EUCLIDEAN and cat.to_json() == {"catalog": "p_dirichlet", "params": {"p": 2}}
    t = transform(cat, DP)
    rebuilt = lagrangian_from_json(transform_spec(cat, DP))
    x = DP.sample_points(5, np.random.default_rng(0))
    eta = np.random.default_rng(1).standard_normal((5, 2))
    assert np.array_equal(t(x, np.zeros(5), eta), rebuilt(x, np.zeros(5), eta))
    with pytest.raises(LookupFailure):
        catalog_lagrangian("nosuch", DP)
    with pytest.raises(InputError):
        catalog_lagrangian("p_dirichlet")


def test_transform_examples():
    rng = np.random.default_rng(0)
    x = DP.sample_points(1000, rng)
    eta = 3 * rng.standard_normal((1000, 2))
    u = rng.standard_normal(1000)
    f = transform(catalog_lagrangian("p_dirichlet", DP, p=2), DP)
    assert np.allclose(f(x, u, eta), parse_lagrangian(F1)(x, u, eta), rtol=1e-12, atol=1e-12)
    assert np.array_equal(transform(catalog_lagrangian("zero", DP), DP)(x, u, eta), np.zeros(1000))
    e2 = get_field("euclidean")
    x2 = e2.sample_points(1000, rng)
    g = transform(catalog_lagrangian("p_dirichlet", e2, p=2), e2)
    assert np.allclose(g(x2, u, eta), np.sum(eta**2, axis=1), rtol=1e-12)
    assert f.kind == ANISOTROPIC and not f.uses_u
    assert transform(catalog_lagrangian("dirichlet_plus_u", DP), DP).uses_u


def test_kernel_invariance_examples():
    assert checks.check_kernel_invariance(catalog_lagrangian("p_dirichlet", DP), DP, N).passed
    bad = checks.check_kernel_invariance(catalog_lagrangian("euclidean_norm_sq", DP), DP, N)
    assert not bad.passed
    w = bad.witness
    assert abs(w["xi"][1]) > 0 and w["projected_xi"][1] == 0.0
    two_xi1 = parse_lagrangian("2*z1^2", EUCLIDEAN, dim=2)
    assert checks.check_kernel_invariance(two_xi1, DP, N).passed


def test_costonker_examples():
    assert checks.check_costonker(parse_lagrangian(F1), DP, N).passed
    rep = checks.check_costonker(parse_lagrangian(F2), DP, N)
    assert not rep.passed
    for name in ("euclidean", "euclidean:3"):
        f = get_field(name)
        assert checks.check_costonker(parse_lagrangian("exp(z1) + z2^2"), f, N).passed


def test_costonker_witness_direction():
    f2 = parse_lagrangian(F2)
    x = np.array([[0.5, 0.5]])
    val = f2(x, [0.0], [[1.0, -1.0]])[0]
    assert val == pytest.approx(math.exp(4) - 1)
    # (1, -1) is orthogonal to the range span{(1, 1)}, so C xi_eta = 0 and f2 there is 0.
    assert f2(x, [0.0], [[0.0, 0.0]])[0] == 0.0


def test_representation_examples():
    f_e = catalog_lagrangian("p_dirichlet", DP, p=2)
    assert checks.check_representation(f_e, parse_lagrangian(F1), DP, N).passed
    assert checks.check_representation(f_e, parse_lagrangian(F2), DP, N).passed
    sq = catalog_lagrangian("euclidean_norm_sq", DP)
    assert not checks.check_representation(sq, transform(sq, DP), DP, N).passed


def test_growth_transfer_examples():
    f1 = parse_lagrangian(F1)
    cert = GrowthCertificate(0, 0, 1, 1, 2)
    assert checks.check_growth_transfer(catalog_lagrangian("p_dirichlet", DP), f1, DP, cert, N).passed
    glob = checks.check_growth(f1, DP, cert, N, on_range=False)
    assert not glob.parts["lower"].passed
    eta = np.array(glob.parts["lower"].witness["eta"])
    assert abs(eta[0] + eta[1]) < abs(eta[0] - eta[1])  # witness leans towards (1, -1)
    zero = catalog_lagrangian("anisotropic_zero", DP)
    assert checks.check_growth_transfer(None, zero, DP, GrowthCertificate(0, 0, 0, 0, 2), N).passed


def test_convexity_examples():
    assert checks.check_convexity(parse_lagrangian(F1), DP, N).passed
    assert checks.check_convexity(parse_lagrangian(F2), DP, N).passed
    rep = checks.check_convexity(parse_lagrangian("-(z1^2 + z2^2)"), DP, N)
    assert not rep.passed
    with pytest.raises(InputError):
        checks.check_convexity(parse_lagrangian(F1), DP, 10, mode="nope")


def test_certificate_validation():
    with pytest.raises(InputError):
        GrowthCertificate(-1, 0, 0, 0, 2)
    with pytest.raises(InputError):
        GrowthCertificate(0, 0, 0, 0, 0.5)
    c = GrowthCertificate(1, 2, 3, 4, 2)
    assert GrowthCertificate.from_json(c.to_json()) == c


def test_reports_are_seeded():
    f = parse_lagrangian(F2)
    a = checks.check_costonker(f, DP, 500, seed=7).to_dict()
    b = checks.check_costonker(f, DP, 500, seed=7).to_dict()
    assert a == b and a["seed"] == 7
