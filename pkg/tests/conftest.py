"""Shared numeric test helpers."""

import numpy as np


def central_diff(f, x, h=1e-5):
    """Scalar central finite difference, the gradient oracle."""
    return (f(x + h) - f(x - h)) / (2.0 * h)


def numeric_grad(loss_fn, arr, h=1e-5):
    """Elementwise central differences of ``loss_fn()`` w.r.t. ``arr`` (mutated in place)."""
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        fp = loss_fn()
        flat[i] = keep - h
        fm = loss_fn()
        flat[i] = keep
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def assert_close_rel(actual, expected, rel=1e-5, abs_floor=1e-8):
    actual = np.asarray(actual, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    tol = np.maximum(rel * np.abs(expected), abs_floor)
    diff = np.abs(actual - expected)
    worst = np.argmax(diff - tol)
    assert np.all(diff <= tol), (
        f"mismatch: worst |{actual.reshape(-1)[worst]} - {expected.reshape(-1)[worst]}| "
        f"= {diff.reshape(-1)[worst]:.3e} > tol {tol.reshape(-1)[worst]:.3e}"
    )
