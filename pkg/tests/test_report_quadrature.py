import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochlp.quadrature import (
    clustered_rule,
    fd_derivative,
    gauss_legendre,
    loglog_slope,
    midpoint_doubling,
    multi_indices,
    shell_integral,
    sphere_rule,
)
from stochlp.report import CheckReport, dumps, format_float, write_csv


def test_float_format_roundtrips():
    for x in (0.1, 1 / 3, 1e-300, -2.5e17, math.pi):
        assert float(format_float(x)) == x
    assert format_float(float("nan")) == "NaN"


def test_dumps_stable_and_typed():
    doc = {"b": np.float64(0.1), "a": [np.int64(3), True, None], "c": np.array([1.5, 2.0])}
    assert dumps(doc) == dumps(dict(doc))
    text = dumps(doc)
    assert '"b": 0.10000000000000001' in text and "[3, true, null]" in text


def test_csv_written(tmp_path):
    write_csv(tmp_path / "t.csv", [{"x": 0.1, "ok": True}, {"x": 2.0, "extra": "a"}])
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "x,ok,extra"
    assert lines[1] == "0.10000000000000001,true,"


def test_report_bool_and_summary():
    r = CheckReport("x", False)
    assert not r and r.summary_line() == "[FAIL] x"


@settings(max_examples=20, deadline=None)
@given(k=st.integers(0, 15), a=st.floats(-3, 0), b=st.floats(0.1, 3))
def test_gauss_legendre_exact_for_polynomials(k, a, b):
    x, w = gauss_legendre(8, a, b)
    assert np.sum(w * x ** k) == pytest.approx((b ** (k + 1) - a ** (k + 1)) / (k + 1), rel=1e-11, abs=1e-12)


def test_clustered_rule_integrates_singularity():
    # int_0^1 (1 - x)^{-1/2} dx = 2
    x, w = clustered_rule(0.0, 1.0, "right", levels=40, rule="gauss", order=6)
    assert np.sum(w / np.sqrt(1 - x)) == pytest.approx(2.0, rel=1e-6)


def test_midpoint_doubling():
    val = midpoint_doubling(lambda r: np.cos(r), 0.0, 1.0)
    assert val == pytest.approx(math.sin(1.0), rel=1e-9)


def test_sphere_rule_and_shell():
    for d in (1, 2, 3):
        pts, w = sphere_rule(d)
        area = {1: 2.0, 2: 2 * math.pi, 3: 4 * math.pi}[d]
        assert np.sum(w) == pytest.approx(area, rel=1e-12)
    # int_{1 <= |xi| < 2} 1 dxi in d = 2 is 3 pi
    assert shell_integral(lambda p: np.ones(len(p)), 1.0, 2) == pytest.approx(3 * math.pi, rel=1e-10)


def test_fd_derivative_polynomial():
    xi = np.array([[0.5], [3.0]])
    d2 = fd_derivative(lambda p: p[..., 0] ** 3, xi, (2,))
    np.testing.assert_allclose(d2, 6 * xi[:, 0], rtol=1e-6)


def test_multi_indices_and_slope():
    assert sorted(multi_indices(2, 1)) == [(0, 0), (0, 1), (1, 0)]
    x = np.logspace(0, 2, 5)
    assert loglog_slope(x, 3 * x ** -1.5) == pytest.approx(-1.5, abs=1e-12)
