import copy
import csv
import io
import json
import math
from importlib import resources

import numpy as np
import pytest

from anisolag import gamma
from anisolag.errors import HypothesisError, InputError, OptimizationError
from anisolag.fields import get_field, seq_example
from anisolag.functional import FunctionalSpec
from anisolag.grid import GridDomain, sample
from anisolag.lagrangian import GrowthCertificate, parse_lagrangian

SQ = parse_lagrangian("z1^2 + z2^2")
UNIT = GridDomain((0, 0), (1, 1), 17)


def bundled(name):
    return json.loads(resources.files("anisolag").joinpath("data", f"{name}.json").read_text())


@pytest.fixture(scope="module")
def example22():
    return gamma.run_gamma_experiment(gamma.config_from_json(bundled("example22")))


def test_minimize_examples():
    e2 = get_field("euclidean", domain=((0, 0), (1, 1)))
    u, energy = gamma.minimize(FunctionalSpec(SQ, e2), UNIT, "0")
    assert energy <= 1e-8 and np.max(np.abs(u.values)) <= 1e-6
    e1 = get_field("euclidean:1", domain=((0,), (1,)))
    line = GridDomain((0,), (1,), 33)
    u, energy = gamma.minimize(FunctionalSpec(parse_lagrangian("z1^2"), e1), line, "x1")
    assert abs(energy - 1.0) <= 1e-6
    assert np.allclose(u.values, line.axes[0], atol=1e-6)
    dp = get_field("degenerate_pair")
    _, energy = gamma.minimize(FunctionalSpec(parse_lagrangian("2*((z1+z2)/2)^2"), dp), UNIT, "x2")
    assert abs(energy) <= 1e-10


def test_minimize_keeps_boundary_and_lowers_energy():
    fld = get_field("grushin", domain=((-1, -1), (1, 1)))
    grid = GridDomain((-1, -1), (1, 1), 17)
    spec = FunctionalSpec(SQ, fld)
    bc = "sin(x1) + x2^2"
    u, energy = gamma.minimize(spec, grid, bc)
    start = sample(grid, bc)
    mask = gamma.boundary_mask(grid)
    assert np.array_equal(u.values[mask], start.values[mask])
    assert energy <= gamma.element_energy(spec, start)
    assert energy == pytest.approx(gamma.element_energy(spec, u), rel=1e-14)


def test_minimize_with_u_term():
    fld = get_field("euclidean:1", domain=((0,), (1,)))
    line = GridDomain((0,), (1,), 65)
    # u'' = u with u(0) = 0, u(1) = 1 has u = sinh(x)/sinh(1) and energy coth(1).
    u, energy = gamma.minimize(FunctionalSpec(parse_lagrangian("z1^2 + u^2"), fld), line, "x1")
    assert np.allclose(u.values, np.sinh(line.axes[0]) / np.sinh(1.0), atol=1e-4)
    assert energy == pytest.approx(1 / math.tanh(1.0), rel=1e-4)


def test_minimize_rejections():
    e2 = get_field("euclidean", domain=((0, 0), (1, 1)))
    with pytest.raises(HypothesisError):
        gamma.minimize(FunctionalSpec(parse_lagrangian("-(z1^2 + z2^2)"), e2), UNIT, "0")
    with pytest.raises(HypothesisError, match="coercive"):
        gamma.minimize(FunctionalSpec(parse_lagrangian("z1^2"), e2), UNIT, "0", cert=GrowthCertificate(0, 0, 1, 1, 2))
    with pytest.raises(OptimizationError):
        gamma.minimize(FunctionalSpec(parse_lagrangian("-u"), e2), UNIT, "0")


def test_element_energy_is_exact_on_bilinear_data():
    fld = seq_example(4, domain=((0, 0), (1, 1)))
    u = sample(UNIT, "x1*x2")
    assert gamma.element_energy(FunctionalSpec(SQ, fld), u) == pytest.approx(1 / 3 + 1 / 48, rel=1e-14)


def test_aitken():
    assert gamma.aitken_limit([1.0, 0.5, 0.25]) == pytest.approx(0.0, abs=1e-15)
    assert gamma.aitken_limit([2.0, 2.0, 2.0]) == 2.0
    assert gamma.aitken_limit([1.0, 2.0]) == 2.0
    seq = [3 + 1 / h**2 for h in (8, 16, 32)]
    assert gamma.aitken_limit(seq) == pytest.approx(3.0, abs=1e-14)
    assert gamma.aitken_limit([1.0, 2.0, 4.0]) == 4.0  # growing differences are not extrapolated


def test_example22_energies(example22):
    r = example22
    exact = [1 / 3 + 1 / (3 * h * h) for h in r.h_values]
    assert np.allclose(r.energies, exact, rtol=1e-8)
    assert r.limit_energy == pytest.approx(1 / 3, rel=1e-8)
    assert r.energy_converged and all(r.monotonicity.values())
    assert r.passed


def test_example22_bump_probe(example22):
    rec = {c["probe"]: c for c in example22.recovery_checks}["bump"]
    d = 1 / 64
    quad = 2 * (math.pi * d) ** 2 / 3
    for h, v in zip(example22.h_values, rec["F_h"]):
        exact = math.pi**2 / 4 * (1 + 1 / h**2)
        assert abs(v - exact) <= quad * exact + 1e-8
    scaled = [g * h * h for g, h in zip(rec["gaps"], example22.h_values)]
    assert (max(scaled) - min(scaled)) / max(scaled) <= 0.05
    assert scaled[0] == pytest.approx(rec["F_limit"] * 1.0, rel=1e-12)  # gap(h) = F(u) / h^2 here


def test_example22_liminf(example22):
    assert all(c["margin"] >= -1e-8 for c in example22.liminf_checks)
    assert len(example22.liminf_checks) == 5 * (1 + 2 * 2)


def test_constant_sequence():
    r = gamma.run_gamma_experiment(gamma.config_from_json(bundled("constant_sequence")))
    assert r.passed
    assert all(c["margin"] == 0.0 for c in r.liminf_checks)
    assert all(g == 0.0 for c in r.recovery_checks for g in c["gaps"])


def test_adversarial():
    r = gamma.run_gamma_experiment(gamma.config_from_json(bundled("adversarial")))
    assert not r.passed and not r.energy_converged
    rec = {c["probe"]: c for c in r.recovery_checks}
    assert not any(c["pass"] for c in r.recovery_checks)
    # Probing the argmin of the doubled candidate, the gap is the true limit energy 1/3.
    assert rec[gamma.MINIMIZER_PROBE]["extrapolated_gap"] == pytest.approx(1 / 3, rel=1e-2)


def test_pointwise_table():
    cfg = bundled("example22")
    cfg.update(probes={"x2": "x2", "const": "1", "x1": "x1"}, minimizer_probe=False, grid=dict(cfg["grid"], resolution=17))
    config = gamma.config_from_json(cfg)
    table = gamma.pointwise_table(config)
    hs = config.h_values
    assert np.allclose(table["x2"]["F_h"], [1 / h**2 for h in hs], rtol=1e-12) and table["x2"]["F_limit"] == 0.0
    assert table["const"]["F_h"] == [0.0] * len(hs)
    assert np.allclose(table["x1"]["F_h"], 1.0) and table["x1"]["F_limit"] == pytest.approx(1.0)
    rows = list(csv.reader(io.StringIO(gamma.pointwise_vs_gamma_table(config))))
    assert rows[0] == ["h", "E_h", "F_h[x2]", "F_h[const]", "F_h[x1]"]
    assert rows[-1][0] == "limit" and len(rows) == len(hs) + 2


def test_report_csv(example22):
    rows = list(csv.reader(io.StringIO(example22.to_csv())))
    assert rows[0][:2] == ["h", "E_h"] and rows[-1][0] == "limit"
    assert len(rows) == len(example22.h_values) + 2


def test_determinism():
    cfg = gamma.config_from_json(bundled("adversarial"))
    a = json.dumps(gamma.run_gamma_experiment(cfg).to_dict(), sort_keys=True)
    b = json.dumps(gamma.run_gamma_experiment(cfg).to_dict(), sort_keys=True)
    assert a == b


def test_config_validation():
    base = bundled("example22")
    bad = copy.deepcopy(base)
    bad["h_values"] = [4, 2]
    with pytest.raises(InputError):
        gamma.config_from_json(bad)
    bad = copy.deepcopy(base)
    del bad["boundary"]
    with pytest.raises(InputError):
        gamma.config_from_json(bad)
    bad = copy.deepcopy(base)
    bad["candidate_limit"]["p"] = 3
    with pytest.raises(InputError):
        gamma.config_from_json(bad)
    bad = copy.deepcopy(base)
    bad["alphas"] = ["1/h^3"]
    with pytest.raises(InputError):
        gamma.config_from_json(bad)
    bad = copy.deepcopy(base)
    bad["sequence"] = {"family": "nosuch", "lagrangian": "z1^2"}
    with pytest.raises(Exception):
        gamma.config_from_json(bad)


def test_minimize_failure_names_h():
    cfg = bundled("constant_sequence")
    cfg["sequence"]["specs"][0]["lagrangian"] = {"source": "-(z1^2 + z2^2)"}
    cfg["candidate_limit"]["lagrangian"] = {"source": "-(z1^2 + z2^2)"}
    with pytest.raises(HypothesisError, match="h=1"):
        gamma.run_gamma_experiment(gamma.config_from_json(cfg))
