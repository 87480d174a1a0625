import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conformal4 import hyperdual as hd

FUNCS = [
    (hd.sin, math.sin),
    (hd.cos, math.cos),
    (hd.exp, math.exp),
    (hd.tanh, math.tanh),
    (hd.sinh, math.sinh),
    (hd.cosh, math.cosh),
]


def fd2(f, x, h=1e-3):
    d1 = (f(x - 2 * h) - 8 * f(x - h) + 8 * f(x + h) - f(x + 2 * h)) / (12 * h)
    d2 = (-f(x - 2 * h) + 16 * f(x - h) - 30 * f(x) + 16 * f(x + h) - f(x + 2 * h)) / (12 * h * h)
    return d1, d2


@pytest.mark.parametrize("jf,mf", FUNCS)
@given(x=st.floats(-2.0, 2.0))
def test_unary_derivatives_match_fourth_order_differences(jf, mf, x):
    j = jf(hd.Jet.variables(np.array([x]))[0])
    d1, d2 = fd2(mf, x)
    assert j.v == pytest.approx(mf(x), abs=1e-14)
    assert j.d[0] == pytest.approx(d1, abs=1e-9)
    assert j.h[0, 0] == pytest.approx(d2, abs=1e-6)


@given(x=st.floats(0.2, 3.0), y=st.floats(0.2, 3.0))
def test_mixed_partials_of_a_product(x, y):
    X, Y = hd.Jet.variables(np.array([x, y]))
    f = hd.log(X) * hd.sqrt(Y) + X**3 / Y
    # d^2/dxdy of log(x) sqrt(y) + x^3/y
    exact = 1.0 / (x * 2.0 * math.sqrt(y)) - 3.0 * x * x / (y * y)
    assert f.h[0, 1] == pytest.approx(exact, rel=1e-12)
    assert f.h[1, 0] == pytest.approx(f.h[0, 1], rel=1e-14)


def test_where_selects_whole_jets():
    X = hd.Jet.variables(np.array([[0.5], [2.0]]))[0]
    out = hd.where(hd.value(X) > 1.0, X * X, 3.0 * X)
    assert out.v.tolist() == [1.5, 4.0]
    assert out.d[:, 0].tolist() == [3.0, 4.0]
    assert out.h[:, 0, 0].tolist() == [0.0, 2.0]
