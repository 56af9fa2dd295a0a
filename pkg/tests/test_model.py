import numpy as np
import pytest

from finslergreen.fieldexpr import parse
from finslergreen.hamiltonian import hamiltonian
from finslergreen.model import (
    LatticeSite,
    ModelError,
    ModelSpec,
    check_hypotheses,
    dyadic_site,
    is_translation_invariant,
    matrix_entry,
    offsets,
    onsite_u,
    onsite_uh,
    pair_v,
)


def test_offsets_radius():
    assert offsets(2, 1) == [(-1, 0), (0, -1), (0, 1), (1, 0)]
    assert len(offsets(2, np.sqrt(2))) == 8
    assert len(offsets(3, 1)) == 6


def test_pair_v(model_a, model_b):
    x = np.array([0.3, -1.2])
    assert pair_v(model_a, x, (1, 0)) == pytest.approx(0.4, rel=1e-15)
    assert pair_v(model_a, x, (-1, 0)) == pair_v(model_a, x, (1, 0))
    assert pair_v(model_b, [0.0, 0.0], (0, 1)) == pytest.approx(0.44, rel=1e-15)
    assert pair_v(model_b, x, (0, -1)) == pair_v(model_b, x, (0, 1))
    with pytest.raises(ModelError):
        pair_v(model_a, x, (1, 1))


def test_onsite_u(model_a, model_b):
    assert onsite_u(model_a, [0.0, 0.0]) == pytest.approx(2.6, rel=1e-15)
    assert onsite_u(model_b, [0.0, 0.0]) == pytest.approx(2.76, rel=1e-15)
    rng = np.random.default_rng(3)
    for m in (model_a, model_b):
        for x in rng.uniform(-3, 3, size=(20, 2)):
            assert hamiltonian(m, x, np.zeros(2)) == pytest.approx(-m.dpp(x), abs=1e-14)


def test_onsite_uh(model_a, model_b):
    for h in (1.0, 0.5, 0.125):
        assert onsite_uh(model_a, [0.4, 0.1], h) == pytest.approx(2.6, rel=1e-15)
    expected = 1 + 0.2 * (2 * 2 * (1 + 0.1 * np.cos(0.25)) + 2 * 2.2)
    assert onsite_uh(model_b, [0.0, 0.0], 0.5) == pytest.approx(expected, rel=1e-15)
    assert expected == pytest.approx(2.757513, abs=5e-7)


def test_onsite_uh_second_order(model_b):
    x = np.array([0.7, -0.3])
    u = onsite_u(model_b, x)
    for h in (0.25, 0.125, 0.0625):
        ratio = (onsite_uh(model_b, x, h) - u) / (onsite_uh(model_b, x, h / 2) - u)
        assert 3.5 <= ratio <= 4.5


def test_matrix_entry_cases(model_a):
    h = 0.25
    x = LatticeSite((3, -1), h)
    assert matrix_entry(model_a, x, x) == pytest.approx(2.6)
    assert matrix_entry(model_a, x, LatticeSite((4, -1), h)) == pytest.approx(-0.4)
    assert matrix_entry(model_a, x, LatticeSite((4, 0), h)) == 0.0
    assert matrix_entry(model_a, x, LatticeSite((5, -1), h)) == 0.0
    with pytest.raises(ModelError):
        matrix_entry(model_a, x, LatticeSite((3, -1), 0.5))


@pytest.mark.parametrize("name", ["model_a", "model_b"])
def test_matrix_symmetry_and_dominance(name, request):
    m = request.getfixturevalue(name)
    rng = np.random.default_rng(7)
    h = 0.125
    for _ in range(1000):
        k = rng.integers(-40, 40, size=2)
        step = rng.integers(-1, 2, size=2)
        x, y = LatticeSite(tuple(k), h), LatticeSite(tuple(k + step), h)
        assert matrix_entry(m, x, y) == matrix_entry(m, y, x)
    for _ in range(200):
        k = rng.integers(-40, 40, size=2)
        x = LatticeSite(tuple(k), h)
        off = sum(abs(matrix_entry(m, x, LatticeSite(tuple(k + np.array(e)), h))) for e in offsets(2, 1))
        assert off < matrix_entry(m, x, x)


def test_dyadic_sites():
    s = dyadic_site((3, -2), 3)
    np.testing.assert_array_equal(s.point, [0.375, -0.25])
    assert LatticeSite.from_point([0.375, -0.25], 0.125).k == (3, -2)
    with pytest.raises(ModelError):
        LatticeSite.from_point([1 / 3, 0.0], 0.125)


def test_model_validation():
    one = parse("1", 2)
    with pytest.raises(ModelError):
        ModelSpec(2, 1.0, -0.2, one, {})
    with pytest.raises(ModelError):
        ModelSpec(2, 1.0, 0.2, one, {(1, 1): one})
    with pytest.raises(ModelError):
        ModelSpec(2, 1.0, 0.2, one, {(1, 0): one, (-1, 0): one})
    with pytest.raises(ModelError):
        ModelSpec(2, 1.0, 0.2, parse("1", 3), {})
    # missing offsets default to zero pair curvature
    m = ModelSpec(2, 1.0, 0.2, one, {(1, 0): one})
    assert pair_v(m, [0, 0], (0, 1)) == 0.0


def test_translation_invariance(model_a, model_b):
    assert is_translation_invariant(model_a)
    assert not is_translation_invariant(model_b)
    # constant but written with variables: caught by sampled gradients
    m = ModelSpec(2, 1.0, 0.2, parse("1 + 0*x1", 2), {(1, 0): parse("2", 2), (0, 1): parse("2", 2)})
    assert not m.structurally_constant
    assert is_translation_invariant(m)


def test_check_hypotheses(model_a, model_b):
    ra = check_hypotheses(model_a, n_samples=2048)
    assert ra.ok, ra.violations
    rb = check_hypotheses(model_b, n_samples=2048)
    assert rb.ok, rb.violations
    assert rb.inf_dpp == pytest.approx(0.8, abs=1e-3)
    assert rb.sup_dpp == pytest.approx(1.2, abs=1e-3)
    assert any(line == "status = pass" for line in rb.lines())
    w = parse("2*(1 + 0.1*cos(x1))", 2)
    bad = ModelSpec(2, 1.0, 0.2, parse("1 + 0.6*sin(x1 + x2)", 2), {(1, 0): w, (0, 1): w})
    rep = check_hypotheses(bad, n_samples=2048)
    assert not rep.ok
    assert any("2 inf dpp > sup dpp" in v for v in rep.violations)
    weak = ModelSpec(2, 1.0, 0.2, parse("1", 2), {(1, 0): parse("0.5", 2), (0, 1): parse("2", 2)})
    assert any("unit offsets" in v for v in check_hypotheses(weak, n_samples=256).violations)
