"""
Naive re-implementation of the TDB judgment chain.

Written with plain loops and lists and sharing no code with
:mod:`lane_change_impact.impact`, so the two can be checked against each
other on random inputs. Not meant for production use.
"""

from __future__ import annotations

import math
from typing import Any


def reference_tdb(
    follower_t: list[float],
    follower_v: list[float],
    reference_t: list[float],
    reference_v: list[float],
    T_lb: float,
    T_s: float,
    T_ub: float,
    dt: float,
) -> tuple[list[float], list[float]]:
    """Pre and post TDB by summing trapezoids sample by sample."""
    follower = {round(t * 10): v for t, v in zip(follower_t, follower_v, strict=True)}
    reference = {round(t * 10): v for t, v in zip(reference_t, reference_v, strict=True)}
    steps = round(dt * 10)
    s = round(T_s * 10)
    lb = round(T_lb * 10)
    ub = round(T_ub * 10)

    def integral(start: int) -> float:
        total = 0.0
        for f in range(start, start + steps):
            left = follower[f] - reference[f]
            right = follower[f + 1] - reference[f + 1]
            total += (left + right) / 2 * 0.1
        return total

    pre = []
    start = s - steps
    while start >= lb:
        pre.insert(0, integral(start))
        start -= steps
    post = []
    start = s
    while start + steps <= ub:
        post.append(integral(start))
        start += steps
    return pre, post


def reference_band(pre: list[float]) -> dict[str, float]:
    positive = [v for v in pre if v >= 0]
    negative = [v for v in pre if v < 0]

    def mean_std(values: list[float]) -> tuple[float, float]:
        if not values:
            return 0.0, 0.0
        mean = sum(values) / len(values)
        return mean, math.sqrt(sum((v - mean) ** 2 for v in values) / len(values))

    mu_pos, sigma_pos = mean_std(positive)
    mu_neg, sigma_neg = mean_std(negative)
    return {"mu_pos": mu_pos, "sigma_pos": sigma_pos, "mu_neg": mu_neg, "sigma_neg": sigma_neg}


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= 1e-12 * max(1.0, abs(b))


def _edges(band: dict[str, float], sign: str) -> tuple[float, float]:
    return band["mu_" + sign] - band["sigma_" + sign], band["mu_" + sign] + band["sigma_" + sign]


def reference_theta(values: list[float], band: dict[str, float]) -> list[int]:
    theta = []
    for v in values:
        lo, hi = _edges(band, "pos" if v >= 0 else "neg")
        inside = (lo <= v <= hi) or _close(v, lo) or _close(v, hi)
        theta.append(0 if inside else 1)
    return theta


def _run_lengths(theta: list[int]) -> list[tuple[int, int]]:
    # For every index, rescan to see if a run starts there
    runs = []
    for i in range(len(theta)):
        if theta[i] == 1 and (i == 0 or theta[i - 1] == 0):
            length = 0
            while i + length < len(theta) and theta[i + length] == 1:
                length += 1
            runs.append((i + 1, length))
    return runs


def reference_judgment(
    theta_pre: list[int], theta_post: list[int], T_s: float = 0.0, dt: float = 0.5
) -> dict[str, Any]:
    """Ω*, adjusted pre Θ, K_A and the verdict from raw Θ sequences."""
    omega_star = 0
    for _, length in _run_lengths(theta_pre):
        if length > omega_star:
            omega_star = length

    adjusted = list(theta_pre)
    for start, length in _run_lengths(theta_pre):
        if length <= omega_star:
            for k in range(start - 1, start - 1 + length):
                adjusted[k] = 0

    K_A = []
    for start, length in _run_lengths(theta_post):
        if length > omega_star:
            K_A.extend(range(start, start + length))

    if K_A:
        upsilon = 1
        t_s = T_s + (K_A[0] - 1) * dt
        t_e = T_s + K_A[-1] * dt
        T_A = (K_A[-1] - K_A[0] + 1) * dt
    else:
        upsilon, t_s, t_e, T_A = 0, None, None, 0.0

    return {
        "omega_star": omega_star,
        "adjusted_pre": adjusted,
        "K_A": K_A,
        "upsilon": upsilon,
        "t_s": t_s,
        "t_e": t_e,
        "T_A": T_A,
    }


def reference_ctdb(value: float, band: dict[str, float]) -> float:
    lo_neg, hi_neg = _edges(band, "neg")
    lo_pos, hi_pos = _edges(band, "pos")
    own = (lo_pos, hi_pos) if value >= 0 else (lo_neg, hi_neg)
    if any(_close(value, edge) for edge in own):
        return 0.0
    if value < lo_neg:
        return value - lo_neg
    if hi_neg < value < 0:
        return value - hi_neg
    if 0 < value < lo_pos:
        return value - lo_pos
    if value > hi_pos:
        return value - hi_pos
    return 0.0


def reference_quantifier(
    pre: list[float], post: list[float], T_s: float = 0.0, dt: float = 0.5
) -> dict[str, Any]:
    """Whole chain from TDB values: band, Θ, runs, verdict and magnitude."""
    band = reference_band(pre)
    theta_pre = reference_theta(pre, band)
    theta_post = reference_theta(post, band)
    result = reference_judgment(theta_pre, theta_post, T_s, dt)
    ctdb = [reference_ctdb(v, band) for v in post]
    w_A = 0.0
    for k in result["K_A"]:
        w_A += ctdb[k - 1]
    result.update(band=band, theta_pre=theta_pre, theta_post=theta_post, ctdb=ctdb, w_A=w_A)
    return result
