"""Pure-Python twin of the compiled kernel extension.

Every function here must return bit-identical results to gamesync._kernels;
tests/test_kernels.py enforces parity over randomized inputs.
"""

import math

BACKEND = "pure"

_U64 = (1 << 64) - 1
_RNG_MULT = 0x2545F4914F6CDD1D


def rng_step(state):
    """One xorshift64* step: returns (next_state, output).

    state must be a nonzero unsigned 64-bit integer.
    """
    x = state
    x ^= x >> 12
    x = (x ^ (x << 25)) & _U64
    x ^= x >> 27
    return x, (x * _RNG_MULT) & _U64


def predict(px, py, vx, vy, at, t):
    """First-order extrapolation of position from time `at` to `t` (ms)."""
    dt = (t - at) / 1000.0
    return px + vx * dt, py + vy * dt


def converge_blend(sx, sy, t0, window, px, py, vx, vy, at, t):
    """Blend from snapshot (sx, sy) taken at t0 toward predict(..., t).

    Linear in t, complete at t0 + window; window <= 0 snaps immediately.
    """
    dt = (t - at) / 1000.0
    tx = px + vx * dt
    ty = py + vy * dt
    if window <= 0 or t >= t0 + window:
        return tx, ty
    u = (t - t0) / window
    return sx + (tx - sx) * u, sy + (ty - sy) * u


def ewma(estimate, sample, alpha):
    """One smoothing step: (1 - alpha) * estimate + alpha * sample.

    Computed incrementally as estimate + alpha * (sample - estimate), which
    keeps the result inside [min, max] of the inputs even in float
    arithmetic (the expanded form can overshoot by an ulp).
    """
    return estimate + (sample - estimate) * alpha


def dist(ax, ay, bx, by):
    """Euclidean distance between two points."""
    dx = bx - ax
    dy = by - ay
    return math.sqrt(dx * dx + dy * dy)
