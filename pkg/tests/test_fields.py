import numpy as np
import pytest

from anisolag import fields
from anisolag.errors import DimensionError, DomainError, InputError, LookupFailure
from anisolag.fields import evaluate, get_field


def test_catalog_contents():
    names = fields.catalog()
    for required in ("euclidean", "grushin", "heisenberg", "cc_example", "seq_example", "degenerate_pair"):
        assert required in names
    with pytest.raises(LookupFailure):
        get_field("nosuch")


def test_eval_examples():
    assert np.array_equal(evaluate(get_field("euclidean"), [0.3, -0.2]), np.eye(2))
    cc = get_field("cc_example")
    assert np.array_equal(evaluate(cc, [-0.5, 0.0]), [[1, 0], [0, 0]])
    assert np.array_equal(evaluate(cc, [0.5, 0.0]), [[1, 0], [0, 0.5]])
    assert np.array_equal(evaluate(get_field("degenerate_pair"), [0.2, 0.7]), [[1, 0], [1, 0]])
    assert np.allclose(evaluate(get_field("seq_example:5"), [0.1, 0.1]), [[1, 0], [0, 0.2]])
    assert np.array_equal(evaluate(get_field("seq_example_limit"), [0.1, 0.1]), [[1, 0], [0, 0]])
    assert np.array_equal(evaluate(get_field("grushin"), [0.0, 0.4]), [[1, 0], [0, 0]])
    assert np.allclose(evaluate(get_field("heisenberg"), [0.2, 0.4, 0.0]), [[1, 0, -0.2], [0, 1, 0.1]])


def test_cc_example_right_limit_at_zero():
    assert np.array_equal(evaluate(get_field("cc_example"), [0.0, 0.3]), [[1, 0], [0, 0]])


def test_domain_errors():
    with pytest.raises(DomainError):
        evaluate(get_field("degenerate_pair"), [1.5, 0.5])
    with pytest.raises(DimensionError):
        evaluate(get_field("euclidean:3"), [0.0, 0.0])
    assert evaluate(get_field("degenerate_pair"), [1.0, 0.0]).shape == (2, 2)  # closed box accepted


def test_estimate_lipschitz():
    assert fields.estimate_lipschitz(get_field("euclidean"), 200) == 0.0
    assert fields.estimate_lipschitz(get_field("grushin"), 400) >= 0.99
    assert fields.estimate_lipschitz(get_field("cc_example"), 400) <= 1.0 + 1e-12


def test_lipschitz_hints_hold():
    for name in fields.catalog():
        f = get_field(name)
        if f.lipschitz_hint is not None:
            assert fields.estimate_lipschitz(f, 200, seed=1) <= 1.05 * f.lipschitz_hint + 1e-12, name


def test_lic_detector():
    rng = np.random.default_rng(0)
    dp = get_field("degenerate_pair")
    assert np.all(fields.rank_profile(dp, dp.sample_points(500, rng)) < dp.m)
    cc = get_field("cc_example", domain=((-1.0, -1.0), (-1e-3, 1.0)))
    assert np.all(fields.rank_profile(cc, cc.sample_points(500, rng)) < cc.m)
    for name in ("euclidean", "grushin", "heisenberg"):
        f = get_field(name)
        pts = f.sample_points(500, rng)
        pts = pts[np.abs(pts[:, 0]) > 1e-6]
        assert np.all(fields.rank_profile(f, pts) == f.m), name


def test_sequence_convergence_rate():
    seq = fields.get_sequence("seq_example")
    pts = np.stack(np.meshgrid(np.linspace(-1, 1, 9), np.linspace(-1, 1, 9)), -1).reshape(-1, 2)
    lim = seq.limit.matrices(pts)
    for h in (1, 2, 3, 10, 100):
        gap = np.max(np.linalg.norm(seq[h].matrices(pts) - lim, ord=2, axis=(1, 2)))
        assert gap == 1.0 / h


def test_custom_field_and_json():
    f = fields.field_from_json({"custom": {"n": 2, "m": 1, "domain": {"lo": [0, 0], "hi": [1, 1]},
                                           "entries": [["1", "x1^2"]]}})
    assert np.allclose(evaluate(f, [0.5, 0.5]), [[1.0, 0.25]])
    assert fields.field_from_json(fields.field_to_json(f)).spec == f.spec
    g = fields.field_from_json({"name": "seq_example", "params": {"h": 3}, "domain": {"lo": [0, 0], "hi": [1, 1]}})
    assert g.lo == (0.0, 0.0)
    assert fields.field_from_json(fields.field_to_json(g)).spec == g.spec
    with pytest.raises(InputError):
        fields.field_from_json({"custom": {"n": 2, "m": 1, "domain": {"lo": [0, 0], "hi": [1, 1]},
                                           "entries": [["u", "1"]]}})
    with pytest.raises(DimensionError):
        fields.field_from_json({"custom": {"n": 2, "m": 1, "domain": {"lo": [0, 0], "hi": [1, 1]},
                                           "entries": [["1"]]}})
