import logging
import math

import numpy as np
import pytest

from finslergreen.asymptotics import (
    SWEEP_COLUMNS,
    AsymptoticsRefused,
    convergence_sweep,
    geometry,
    green_leading,
    green_leading_bordered,
    green_oz,
    oracle_value,
    prop72_residual,
    rate_summary,
)
from finslergreen.model import ModelError

from conftest import F_AXIS, SPEED_AXIS


def test_model_a_prefactor_closed_form(model_a, geom_a):
    detG = F_AXIS**2 * (F_AXIS * SPEED_AXIS / 0.8)
    C = math.sqrt(detG) / (F_AXIS * SPEED_AXIS)
    est = green_leading(model_a, [1, 0], [0, 0], 0.25, geom_a)
    assert est.prefactor == pytest.approx(C, rel=1e-9)
    assert est.value == pytest.approx(C * math.exp(-F_AXIS / 0.25) / math.sqrt(2 * math.pi * F_AXIS / 0.25), rel=1e-9)
    assert est.delta == pytest.approx(1.0, abs=1e-6)
    assert est.route == "G-Jacobi"
    rec = est.record()
    assert rec["pv_x"] == pytest.approx(F_AXIS * SPEED_AXIS, rel=1e-10)
    assert rec["detG_x"] == pytest.approx(detG, rel=1e-9)


def test_model_b_against_lattice(model_b, geom_b):
    h = 1 / 16
    est = green_leading(model_b, [1, 0], [0, 0], h, geom_b)
    ref = oracle_value(model_b, [1, 0], [0, 0], h, "lattice")
    assert abs(ref / est.value - 1) <= 0.1


@pytest.mark.parametrize("fixture", ["geom_a", "geom_b"])
def test_routes_agree(fixture, request):
    g = request.getfixturevalue(fixture)
    m = request.getfixturevalue("model_a" if fixture == "geom_a" else "model_b")
    for h in (0.25, 1 / 16):
        a = green_leading(m, [1, 0], [0, 0], h, g)
        b = green_leading_bordered(m, [1, 0], [0, 0], h, g)
        assert abs(b.value / a.value - 1) <= 1e-6
    assert prop72_residual(g, 2) <= 1e-5


def test_bordered_axis_value(model_a, geom_a):
    b = green_leading_bordered(model_a, [1, 0], [0, 0], 0.25, geom_a)
    assert geom_a.bordered == pytest.approx(SPEED_AXIS**2 * 0.8 / SPEED_AXIS, rel=1e-9)
    assert geom_a.bordered**-0.5 == pytest.approx(SPEED_AXIS**-0.5 / math.sqrt(0.8), rel=1e-9)
    plus = green_leading_bordered(model_a, [1, 0], [0, 0], 0.25, geom_a, sign=+1)
    assert plus.value / b.value == pytest.approx(geom_a.bordered, rel=1e-12)


def test_oz_model_a(model_a, geom_a):
    oz = green_oz(model_a, [1, 0], 0.25)
    assert oz.prefactor_ti1 == pytest.approx(SPEED_AXIS**-0.5 / math.sqrt(0.8), rel=1e-12)
    assert oz.prefactor_ti1 == pytest.approx(0.880464, abs=1e-6)
    assert abs(oz.value_ti1 / oz.value_ti2 - 1) <= 1e-8
    est = green_leading(model_a, [1, 0], [0, 0], 0.25, geom_a)
    assert abs(oz.value_ti2 / est.value - 1) <= 1e-6
    for z in ([1, 1], [0.3, -1.7]):
        o = green_oz(model_a, z, 0.125)
        assert abs(o.value_ti1 / o.value_ti2 - 1) <= 1e-8


def test_oz_rejects(model_b, model_a):
    with pytest.raises(ValueError):
        green_oz(model_b, [1, 0], 0.25)
    with pytest.raises(ValueError):
        green_oz(model_a, [0, 0], 0.25)


def test_symmetry(model_b):
    a = green_leading(model_b, [1, 0.5], [0, 0], 0.125)
    b = green_leading(model_b, [0, 0], [1, 0.5], 0.125)
    assert a.value == pytest.approx(b.value, rel=1e-8)


def test_delta_tends_to_one(model_b):
    devs = [abs(geometry(model_b, [r, 0], [0, 0]).delta - 1) for r in (1.0, 0.5, 0.25)]
    assert devs[0] > devs[1] > devs[2]


def test_refusals(model_a, adversarial, caplog):
    with pytest.raises(AsymptoticsRefused):
        geometry(model_a, [0, 0], [0, 0])
    with pytest.raises(ModelError):
        green_leading(model_a, [1 / 3, 0], [0, 0], 0.125)
    with pytest.raises(AsymptoticsRefused) as info:
        geometry(adversarial, [2, 0], [0, 0])
    assert len(info.value.solutions) >= 2
    with caplog.at_level(logging.WARNING):
        green_leading(model_a, [0.25, 0], [0, 0], 0.125)
    assert "asymptotic regime" in caplog.text


def test_sweep_rows(model_a, geom_a):
    rows = convergence_sweep(model_a, [1, 0], [0, 0], range(2, 4), geom=geom_a)
    assert [r["n"] for r in rows] == [2, 3]
    assert set(SWEEP_COLUMNS) <= set(rows[0])
    par = convergence_sweep(model_a, [1, 0], [0, 0], range(2, 4), geom=geom_a, workers=2)
    assert par == rows
    s = rate_summary(rows)
    assert s["monotone"]
    assert len(s["error_ratios"]) == 1
