import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from capflow.fd import composite_weights, diff_matrices, fd_weights, interp_row


def test_centred_second_difference():
    c = fd_weights(0.0, [-1.0, 0.0, 1.0], 2)
    assert np.allclose(c[0], [0, 1, 0])
    assert np.allclose(c[1], [-0.5, 0, 0.5])
    assert np.allclose(c[2], [1, -2, 1])


@given(st.lists(st.floats(-1, 1), min_size=5, max_size=5, unique=True), st.floats(-1, 1))
def test_weights_exact_on_polynomials(nodes, x0):
    x = np.array(sorted(nodes))
    if np.min(np.diff(x)) < 0.05:
        return
    c = fd_weights(x0, x, 2)
    for p in range(5):
        f = x**p
        d1 = p * x0 ** (p - 1) if p >= 1 else 0.0
        d2 = p * (p - 1) * x0 ** (p - 2) if p >= 2 else 0.0
        assert c[0] @ f == pytest.approx(x0**p, abs=1e-8)
        assert c[1] @ f == pytest.approx(d1, abs=1e-6)
        assert c[2] @ f == pytest.approx(d2, abs=1e-5)


@pytest.mark.parametrize("order", [2, 4, 6])
def test_diff_matrix_convergence(order):
    errs = []
    for n in (40, 80):
        x = np.linspace(0, 1, n + 1)
        D1, D2 = diff_matrices(x, range(n + 1), order)
        f = np.sin(3 * x)
        errs.append((np.max(np.abs(D1 @ f - 3 * np.cos(3 * x))), np.max(np.abs(D2 @ f + 9 * np.sin(3 * x)))))
    e1 = np.log2(errs[0][0] / errs[1][0])
    e2 = np.log2(errs[0][1] / errs[1][1])
    assert e1 > order - 0.3 and e2 > order - 0.3


def test_interp_row():
    x = np.linspace(0, 1, 11)
    idx, w = interp_row(x, 0.33, 4)
    assert len(idx) == 4 and w @ (x[idx] ** 3) == pytest.approx(0.33**3)


def test_composite_weights_exact_and_positive():
    h = np.pi / 20
    nodes = (np.arange(20) + 0.5) * h
    edges = np.arange(21) * h
    w = composite_weights(nodes, edges, 4)
    assert np.all(w > 0)
    for p in range(5):
        assert w @ nodes**p == pytest.approx(np.pi ** (p + 1) / (p + 1), rel=1e-12)
    assert w @ np.sin(nodes) == pytest.approx(2.0, abs=1e-6)
