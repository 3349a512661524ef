import numpy as np
import pytest

from qmixlab.autodiff import Tensor


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def finite_diff_grads(fn, tensors, h=1e-5):
    """Central finite differences of a scalar-valued fn() wrt each tensor.

    ``fn`` must recompute the forward pass from the tensors' current data;
    it is called with no arguments and returns a float.
    """
    grads = {}
    for name, t in tensors.items():
        g = np.zeros_like(t.data)
        flat_p = t.data.ravel()
        flat_g = g.ravel()
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + h
            up = fn()
            flat_p[i] = orig - h
            down = fn()
            flat_p[i] = orig
            flat_g[i] = (up - down) / (2.0 * h)
        grads[name] = g
    return grads


def max_rel_error(analytic, numeric, floor=1e-6):
    err = 0.0
    for name in analytic:
        a, b = np.asarray(analytic[name]), np.asarray(numeric[name])
        denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
        err = max(err, float(np.max(np.abs(a - b) / denom)))
    return err


def assert_grads_close(analytic, numeric, tol=1e-4):
    err = max_rel_error(analytic, numeric)
    assert err < tol, f"max relative gradient error {err:.3e} >= {tol}"


def tensor_map(**arrays):
    return {k: Tensor(v, requires_grad=True) for k, v in arrays.items()}
