"""Initialize rational coefficients by approximating a target activation.

The fit runs in two phases over an evenly spaced grid on [lo, hi]:

1. Linearized least squares. With Q_tilde(x) = 1 + sum_k b_k x^k (the
   absolute value dropped), P(x_i) - y_i * Q_tilde(x_i) ~ 0 is linear in
   all coefficients, so one lstsq solve gives a strong starting point.
   A rank-deficient system falls back to a ridge solve (lambda = 1e-8).
2. Gradient refinement on the true safe form. Adam-style gradient
   descent on the grid mean squared error, using the analytic
   coefficient derivatives, repairs whatever the dropped absolute value
   distorted and polishes the tail. The best iterate (by grid RMS) wins.

Fits are deterministic given the spec and independent of each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .rational import RationalCoefficients, rational_forward_batch
from .tensor import gelu_reference
from .rational import rational_batch_grads

__all__ = ["FitSpec", "FitResult", "TARGETS", "fit_rational", "degree_study", "out_of_range_report"]


def _relu(x):
    return np.maximum(x, 0.0)


def _identity(x):
    return np.asarray(x, dtype=np.float64)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


def _swish(x):
    x = np.asarray(x, dtype=np.float64)
    return x * _sigmoid(x)


def _tanh(x):
    return np.tanh(np.asarray(x, dtype=np.float64))


TARGETS = {
    "gelu": gelu_reference,
    "relu": _relu,
    "identity": _identity,
    "swish": _swish,
    "tanh": _tanh,
    "sigmoid": _sigmoid,
}


@dataclass(frozen=True)
class FitSpec:
    target: str = "gelu"
    m: int = 5
    n: int = 4
    lo: float = -3.0
    hi: float = 3.0
    grid_points: int = 1000
    max_iterations: int = 5000
    tolerance: float = 1e-9

    def __post_init__(self):
        if self.target not in TARGETS:
            raise DomainError(f"unknown target {self.target!r}; choose one of {sorted(TARGETS)}")
        if self.m < 0 or self.n < 0:
            raise DomainError("degrees must be non-negative")
        if not (self.lo < self.hi):
            raise DomainError(f"empty fit range [{self.lo}, {self.hi}]")
        if self.grid_points < 2 * (self.m + self.n + 1):
            raise DomainError(f"grid_points must be at least 2*(m+n+1) = {2 * (self.m + self.n + 1)}")
        if self.tolerance <= 0:
            raise DomainError("tolerance must be positive")
        if self.max_iterations < 0:
            raise DomainError("max_iterations must be non-negative")


@dataclass(frozen=True)
class FitResult:
    coeffs: RationalCoefficients
    max_abs_error: float
    rms_error: float
    converged: bool


def _grid_errors(coeffs: RationalCoefficients, xs: np.ndarray, ys: np.ndarray):
    resid = rational_forward_batch(xs, coeffs) - ys
    return float(np.max(np.abs(resid))), float(np.sqrt(np.mean(resid**2)))


def _linear_phase(xs, ys, m, n) -> np.ndarray:
    # columns: x^0..x^m for the a_j, then -y*x^1..-y*x^n for the b_k
    cols = [xs**j for j in range(m + 1)] + [-ys * xs**k for k in range(1, n + 1)]
    design = np.stack(cols, axis=1)
    try:
        theta, _, _, _ = np.linalg.lstsq(design, ys, rcond=None)
    except np.linalg.LinAlgError:
        # SVD refused to converge; ridge keeps the solve well-posed
        lam = 1e-8
        gram = design.T @ design + lam * np.eye(design.shape[1])
        theta = np.linalg.solve(gram, design.T @ ys)
    return theta


def _refine(theta0, xs, ys, m, n, max_iterations, tolerance, lr=2e-3):
    """Adam on grid MSE of the safe form; returns (best_theta, converged).

    Converged means the grid RMS plateaued: no relative improvement of at
    least ``tolerance`` over ``patience`` consecutive checks. Running out
    of iterations while still improving reports False with the best iterate.
    """
    theta = theta0.copy()
    mom = np.zeros_like(theta)
    vel = np.zeros_like(theta)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    npts = xs.size
    check_every, patience = 50, 10

    def rms_of(t):
        c = RationalCoefficients(tuple(t[: m + 1]), tuple(t[m + 1 :]))
        return _grid_errors(c, xs, ys)[1]

    best = theta.copy()
    best_rms = rms_of(theta)
    converged = False
    checks_without_gain = 0

    for it in range(1, max_iterations + 1):
        c = RationalCoefficients(tuple(theta[: m + 1]), tuple(theta[m + 1 :]))
        value, _, d_num, d_den = rational_batch_grads(xs, c)
        resid = value - ys
        grad = np.empty_like(theta)
        for j in range(m + 1):
            grad[j] = 2.0 * np.dot(resid, d_num[j]) / npts
        for k in range(n):
            grad[m + 1 + k] = 2.0 * np.dot(resid, d_den[k]) / npts

        mom = beta1 * mom + (1 - beta1) * grad
        vel = beta2 * vel + (1 - beta2) * grad * grad
        mhat = mom / (1 - beta1**it)
        vhat = vel / (1 - beta2**it)
        theta = theta - lr * mhat / (np.sqrt(vhat) + eps)

        if it % check_every == 0:
            rms = rms_of(theta)
            if rms < best_rms * (1.0 - tolerance):
                best_rms = rms
                best = theta.copy()
                checks_without_gain = 0
            else:
                if rms < best_rms:
                    best_rms = rms
                    best = theta.copy()
                checks_without_gain += 1
                if checks_without_gain >= patience:
                    converged = True
                    break

    final_rms = rms_of(theta)
    if final_rms < best_rms:
        best = theta
    return best, converged


def fit_rational(spec: FitSpec) -> FitResult:
    """Least-squares fit of the safe rational form to ``spec.target`` on its grid."""
    xs = np.linspace(spec.lo, spec.hi, spec.grid_points)
    ys = np.asarray(TARGETS[spec.target](xs), dtype=np.float64)

    theta = _linear_phase(xs, ys, spec.m, spec.n)
    lin_coeffs = RationalCoefficients(tuple(theta[: spec.m + 1]), tuple(theta[spec.m + 1 :]))
    lin_max, lin_rms = _grid_errors(lin_coeffs, xs, ys)

    converged = True
    if spec.max_iterations > 0:
        theta_ref, converged = _refine(theta, xs, ys, spec.m, spec.n, spec.max_iterations, spec.tolerance)
        ref_coeffs = RationalCoefficients(tuple(theta_ref[: spec.m + 1]), tuple(theta_ref[spec.m + 1 :]))
        ref_max, ref_rms = _grid_errors(ref_coeffs, xs, ys)
        if ref_rms <= lin_rms:
            return FitResult(ref_coeffs, ref_max, ref_rms, converged)
    return FitResult(lin_coeffs, lin_max, lin_rms, converged)


def degree_study(specs: list[FitSpec]) -> list[dict]:
    """Sweep (m, n) over {4,5}x{4,5} for each spec; rows suit CSV export."""
    if not specs:
        raise DomainError("degree_study needs at least one spec")
    rows = []
    for base in specs:
        for m in (4, 5):
            for n in (4, 5):
                spec = FitSpec(
                    target=base.target,
                    m=m,
                    n=n,
                    lo=base.lo,
                    hi=base.hi,
                    grid_points=base.grid_points,
                    max_iterations=base.max_iterations,
                    tolerance=base.tolerance,
                )
                res = fit_rational(spec)
                rows.append(
                    {
                        "target": spec.target,
                        "m": m,
                        "n": n,
                        "max_abs_error": res.max_abs_error,
                        "rms_error": res.rms_error,
                        "converged": res.converged,
                    }
                )
    return rows


def out_of_range_report(coeffs: RationalCoefficients, points=(-100.0, -10.0, 10.0, 100.0)) -> dict[float, float]:
    """F(x) far outside the fit range. Values are finite by construction (Q >= 1)
    but carry no closeness guarantee; approximation only holds on the fit grid."""
    xs = np.asarray(points, dtype=np.float64)
    vals = rational_forward_batch(xs, coeffs)
    return {float(x): float(v) for x, v in zip(xs, vals)}
