import numpy as np
import pytest

from stekhom.expr import ExpressionError, compile_expression, parse_weight


def test_constants_and_functions():
    f = compile_expression("1 + 0.5*sin(2*pi*x)")
    pts = np.array([[0.25, 0.0], [0.75, 0.3]])
    assert np.allclose(f(pts), [1.5, 0.5])
    g = compile_expression("x**2 + y*z - cos(0)")
    assert np.allclose(g(np.array([[1.0, 2.0, 3.0]])), [6.0])


def test_parse_weight_constant():
    w = parse_weight("2")
    assert w.is_constant and w.constant == 2.0
    assert not parse_weight("1+x").is_constant


@pytest.mark.parametrize("bad", ["__import__('os')", "x.real", "open('f')", "lambda: 1",
                                 "[1, 2]", "x if x else y", "q + 1", "1 +"])
def test_rejects_unsafe_or_invalid(bad):
    with pytest.raises(ExpressionError):
        compile_expression(bad)


def test_z_on_planar_chart_is_an_error():
    f = compile_expression("z")
    with pytest.raises(ExpressionError):
        f(np.array([[0.0, 0.0]]))
