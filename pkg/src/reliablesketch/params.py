"""Parameter derivation for the double-exponential layer layout.

Layer widths and thresholds both shrink geometrically::

    w_i = ceil(W * (R_w - 1) / R_w**i)
    lambda_i = floor(Lambda * (R_lambda - 1) / R_lambda**i)

Ratios are converted to exact fractions from their decimal spelling, so
``2.5`` means exactly 5/2 and floor/ceil never wobble on float noise.
"""

from __future__ import annotations

import math
from fractions import Fraction


def _exact(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(repr(float(x)))


def _check_ratio(name: str, r) -> Fraction:
    q = _exact(r)
    if q <= 1:
        raise ValueError(f"{name} must be > 1, got {r}")
    return q


def _ceil(q: Fraction) -> int:
    return -((-q.numerator) // q.denominator)


def _floor(q: Fraction) -> int:
    return q.numerator // q.denominator


def layer_width(total_buckets: int, r_w, i: int) -> int:
    """Width of layer ``i`` (1-based) out of ``total_buckets``."""
    if i < 1:
        raise ValueError("layer index is 1-based")
    if total_buckets < 1:
        raise ValueError("total_buckets must be positive")
    r = _check_ratio("r_w", r_w)
    return max(1, _ceil(total_buckets * (r - 1) / r**i))


def layer_threshold(lambda_cap: int, r_lambda, i: int) -> int:
    """Lock threshold of layer ``i`` (1-based); may be 0 for deep layers."""
    if i < 1:
        raise ValueError("layer index is 1-based")
    if lambda_cap < 0:
        raise ValueError("lambda_cap must be non-negative")
    r = _check_ratio("r_lambda", r_lambda)
    return _floor(lambda_cap * (r - 1) / r**i)


def layer_thresholds(lambda_cap: int, r_lambda, depth: int) -> list[int]:
    """Thresholds for layers 1..depth with the zero tail trimmed."""
    out = []
    for i in range(1, depth + 1):
        t = layer_threshold(lambda_cap, r_lambda, i)
        if t == 0:
            break
        out.append(t)
    return out


def _recommended_constant(r_w, r_lambda) -> Fraction:
    rw = _check_ratio("r_w", r_w)
    rl = _check_ratio("r_lambda", r_lambda)
    return (rw * rl) ** 2 / ((rw - 1) * (rl - 1))


def derive_lambda(total_buckets: int, n_hint: int, r_w=2, r_lambda=2.5) -> int:
    """Error threshold implied by a bucket budget and an expected stream total."""
    if total_buckets < 1 or n_hint < 1:
        raise ValueError("total_buckets and n_hint must be positive")
    c = _recommended_constant(r_w, r_lambda)
    return max(1, _ceil(c * n_hint / total_buckets))


def derive_W(lambda_cap: int, n_hint: int, r_w=2, r_lambda=2.5) -> int:
    """Recommended total bucket count for a target error threshold."""
    if lambda_cap < 1 or n_hint < 1:
        raise ValueError("lambda_cap and n_hint must be positive")
    c = _recommended_constant(r_w, r_lambda)
    return max(1, _ceil(c * n_hint / lambda_cap))


def derive_W_proof(lambda_cap: int, n_hint: int, r_w=2, r_lambda=2.5) -> int:
    """Bucket count with the (much larger) constant used by the worst-case analysis."""
    if lambda_cap < 1 or n_hint < 1:
        raise ValueError("lambda_cap and n_hint must be positive")
    rw = _check_ratio("r_w", r_w)
    rl = _check_ratio("r_lambda", r_lambda)
    c = 4 * (rw * rl) ** 6 / ((rw - 1) * (rl - 1))
    return _ceil(c * n_hint / lambda_cap)


def stash_size_hint(failure_prob: float, r_w=2, r_lambda=2.5) -> int:
    """SpaceSaving size 6 R_w^3 R_lambda^4 ln(1/failure_prob) from the worst-case bound.

    Far larger than needed in practice; the default stash is 64 entries.
    """
    if not 0 < failure_prob < 1:
        raise ValueError("failure_prob must be in (0, 1)")
    rw = float(_check_ratio("r_w", r_w))
    rl = float(_check_ratio("r_lambda", r_lambda))
    return math.ceil(6 * rw**3 * rl**4 * math.log(1 / failure_prob))
