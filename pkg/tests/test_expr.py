import numpy as np
import pytest

from densym.errors import ExpressionError
from densym.expr import compile_expression


@pytest.mark.parametrize("text, r, expected", [
    ("a - b*r", 1.0, -0.4),
    ("sigma*sqrt(r)", 4.0, 0.6),
    ("r^2 + 1", 3.0, 10.0),
    ("r**2", 3.0, 9.0),
    ("-r/2", 1.0, -0.5),
    ("+r", 2.0, 2.0),
    ("exp(log(r))", 2.5, 2.5),
    ("(1 + r)*(1 - r)", 0.5, 0.75),
    ("2", 7.0, 2.0),
])
def test_evaluates(text, r, expected):
    f = compile_expression(text, {"a": 0.1, "b": 0.5, "sigma": 0.3})
    assert float(f(r)) == pytest.approx(expected, rel=1e-15, abs=1e-15)


def test_vectorised_and_shape_preserving():
    f = compile_expression("3")
    r = np.linspace(0, 1, 5)
    assert f(r).shape == r.shape
    np.testing.assert_array_equal(compile_expression("r*r")(r), r * r)


def test_power_is_right_associative():
    assert float(compile_expression("2^3^2")(0.0)) == 512.0


@pytest.mark.parametrize("text", [
    "r +", "unknown*r", "__import__('os')", "r.real", "sin(r)", "sqrt(r, 2)", "r if r else 1",
    "[r]", "r < 1", "lambda: r", "sqrt(x=r)",
])
def test_rejects(text):
    with pytest.raises(ExpressionError):
        compile_expression(text)


def test_domain_errors_give_nan_not_warnings():
    f = compile_expression("sqrt(r)")
    with np.errstate(all="raise"):
        assert np.isnan(f(-1.0))
