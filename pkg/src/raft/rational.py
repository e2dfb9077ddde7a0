"""Safe rational activation functions.

A rational activation is the ratio of two polynomials

    F(x) = P(x) / Q(x),
    P(x) = a_0 + a_1 x + ... + a_m x^m,
    Q(x) = 1 + |b_1 x + b_2 x^2 + ... + b_n x^n|,

with every a_j and b_k trainable. The absolute value in Q makes the
function pole-free: Q(x) >= 1 for every real x, so F is finite and
|F(x)| <= |P(x)| no matter where training drives the coefficients.
Both polynomials are evaluated with Horner's scheme.

The denominator has no constant coefficient: a b_0 inside the absolute
value would be redundant with the leading 1 and non-identifiable, so
coefficients are b_1..b_n.

Gradients are analytic. With S(x) = sum_k b_k x^k and sign(0) := 0
(the standard subgradient choice at the |.| kink):

    dF/dx   = (P'(x) Q(x) - P(x) Q'(x)) / Q(x)^2,  Q'(x) = sign(S) S'(x)
    dF/da_j = x^j / Q(x)
    dF/db_k = -P(x) sign(S) x^k / Q(x)^2

Everything here is pure and stateless; safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

__all__ = [
    "RationalCoefficients",
    "RationalEval",
    "identity_coefficients",
    "rational_forward",
    "rational_backward",
    "rational_forward_batch",
    "rational_batch_grads",
    "save_coefficients",
    "load_coefficients",
]


@dataclass(frozen=True)
class RationalCoefficients:
    """Numerator coefficients a_0..a_m and denominator coefficients b_1..b_n."""

    numerator: tuple[float, ...]
    denominator: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "numerator", tuple(float(a) for a in self.numerator))
        object.__setattr__(self, "denominator", tuple(float(b) for b in self.denominator))
        if len(self.numerator) < 1:
            raise DomainError("numerator needs at least the constant coefficient a_0")
        vals = self.numerator + self.denominator
        if not all(math.isfinite(v) for v in vals):
            raise DomainError("coefficients must be finite")

    @property
    def m(self) -> int:
        return len(self.numerator) - 1

    @property
    def n(self) -> int:
        return len(self.denominator)

    def to_flat(self) -> list[float]:
        """Flat serialization [a_0..a_m, b_1..b_n]; pair with (m, n) header."""
        return list(self.numerator) + list(self.denominator)

    @classmethod
    def from_flat(cls, flat, m: int, n: int) -> "RationalCoefficients":
        flat = [float(v) for v in flat]
        if m < 0 or n < 0:
            raise DomainError(f"degrees must be non-negative, got m={m}, n={n}")
        if len(flat) != m + 1 + n:
            raise DomainError(f"flat list has {len(flat)} entries, expected {m + 1 + n} for (m={m}, n={n})")
        return cls(tuple(flat[: m + 1]), tuple(flat[m + 1 :]))


@dataclass
class RationalEval:
    """Value and all first derivatives of F at one point."""

    value: float
    d_input: float
    d_numerator: list[float] = field(default_factory=list)
    d_denominator: list[float] = field(default_factory=list)


def identity_coefficients(m: int = 5, n: int = 4) -> RationalCoefficients:
    """Coefficients embedding f(x) = x exactly: a_1 = 1, all else zero."""
    if m < 1:
        raise DomainError("identity embedding needs m >= 1")
    num = [0.0] * (m + 1)
    num[1] = 1.0
    return RationalCoefficients(tuple(num), (0.0,) * n)


def save_coefficients(coeffs: RationalCoefficients, path) -> None:
    """Write the flat-list coefficient format: (m, n) header plus [a_0..a_m, b_1..b_n]."""
    import json

    payload = {"m": coeffs.m, "n": coeffs.n, "coefficients": coeffs.to_flat()}
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")


def load_coefficients(path) -> RationalCoefficients:
    import json

    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    try:
        return RationalCoefficients.from_flat(payload["coefficients"], int(payload["m"]), int(payload["n"]))
    except KeyError as e:
        raise DomainError(f"coefficient file {path} is missing field {e}") from e


def _check_finite_scalar(x: float) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"input must be finite, got {x}")
    return x


def _horner(coeffs_high_to_low, x):
    acc = 0.0
    for c in coeffs_high_to_low:
        acc = acc * x + c
    return acc


def rational_forward(x: float, coeffs: RationalCoefficients) -> float:
    """Evaluate F(x) = P(x) / (1 + |S(x)|) at a scalar point."""
    x = _check_finite_scalar(x)
    p = _horner(coeffs.numerator[::-1], x)
    # S(x) = x * (b_1 + x * (b_2 + ...)): Horner with the implicit zero constant term
    s = _horner(coeffs.denominator[::-1] + (0.0,), x)
    return p / (1.0 + abs(s))


def rational_backward(x: float, coeffs: RationalCoefficients) -> RationalEval:
    """Evaluate F(x) together with dF/dx, dF/da_j, dF/db_k."""
    x = _check_finite_scalar(x)
    m, n = coeffs.m, coeffs.n

    powers = [1.0]
    for _ in range(max(m, n)):
        powers.append(powers[-1] * x)

    p = sum(a * powers[j] for j, a in enumerate(coeffs.numerator))
    dp = sum(j * a * powers[j - 1] for j, a in enumerate(coeffs.numerator) if j >= 1)
    s = sum(b * powers[k] for k, b in enumerate(coeffs.denominator, start=1))
    ds = sum(k * b * powers[k - 1] for k, b in enumerate(coeffs.denominator, start=1))

    sgn = 0.0 if s == 0.0 else math.copysign(1.0, s)
    q = 1.0 + abs(s)
    dq = sgn * ds

    value = p / q
    d_input = (dp * q - p * dq) / (q * q)
    d_num = [powers[j] / q for j in range(m + 1)]
    d_den = [-p * sgn * powers[k] / (q * q) for k in range(1, n + 1)]
    return RationalEval(value=value, d_input=d_input, d_numerator=d_num, d_denominator=d_den)


def _eval_batch(xs: np.ndarray, coeffs: RationalCoefficients):
    """Vectorized P, S, Q on an array; returns (p, s, q)."""
    p = np.zeros_like(xs)
    for a in coeffs.numerator[::-1]:
        p = p * xs + a
    s = np.zeros_like(xs)
    for b in coeffs.denominator[::-1]:
        s = (s + b) * xs
    return p, s, 1.0 + np.abs(s)


def rational_forward_batch(xs, coeffs: RationalCoefficients) -> np.ndarray:
    """Elementwise F over an array, shape-preserving."""
    xs = np.asarray(xs)
    if xs.dtype.kind != "f":
        xs = xs.astype(np.float64)
    if not np.all(np.isfinite(xs)):
        raise DomainError("batch input must be finite")
    p, _, q = _eval_batch(xs, coeffs)
    return p / q


def rational_batch_grads(xs: np.ndarray, coeffs: RationalCoefficients):
    """Vectorized forward plus everything backward needs.

    Returns (value, d_input, d_num, d_den) where d_num[j] and d_den[k]
    have xs's shape; callers contract them against the upstream gradient.
    """
    xs = np.asarray(xs)
    m, n = coeffs.m, coeffs.n
    p, s, q = _eval_batch(xs, coeffs)

    dp = np.zeros_like(xs)
    for j in range(m, 0, -1):
        dp = dp * xs + j * coeffs.numerator[j]
    ds = np.zeros_like(xs)
    for k in range(n, 0, -1):
        ds = ds * xs + k * coeffs.denominator[k - 1]

    sgn = np.sign(s)
    q2 = q * q
    value = p / q
    d_input = (dp * q - p * sgn * ds) / q2

    pow_j = np.ones_like(xs)
    d_num = []
    for _ in range(m + 1):
        d_num.append(pow_j / q)
        pow_j = pow_j * xs
    neg_p_sgn_over_q2 = -p * sgn / q2
    pow_k = xs
    d_den = []
    for _ in range(n):
        d_den.append(neg_p_sgn_over_q2 * pow_k)
        pow_k = pow_k * xs
    return value, d_input, d_num, d_den
