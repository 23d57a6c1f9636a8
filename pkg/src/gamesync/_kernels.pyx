# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of gamesync._kernels_py.

Same functions, same argument order, bit-identical results. Compiled with
-ffp-contract=off so no FMA contraction can change float outcomes.
"""

from libc.math cimport sqrt

BACKEND = "compiled"

cdef unsigned long long _RNG_MULT = 0x2545F4914F6CDD1DULL


def rng_step(unsigned long long state):
    """One xorshift64* step: returns (next_state, output)."""
    cdef unsigned long long x = state
    x ^= x >> 12
    x ^= x << 25
    x ^= x >> 27
    return x, x * _RNG_MULT


def predict(double px, double py, double vx, double vy, double at, double t):
    """First-order extrapolation of position from time `at` to `t` (ms)."""
    cdef double dt = (t - at) / 1000.0
    return px + vx * dt, py + vy * dt


def converge_blend(double sx, double sy, double t0, double window,
                   double px, double py, double vx, double vy,
                   double at, double t):
    """Blend from snapshot (sx, sy) taken at t0 toward predict(..., t)."""
    cdef double dt = (t - at) / 1000.0
    cdef double tx = px + vx * dt
    cdef double ty = py + vy * dt
    cdef double u
    if window <= 0 or t >= t0 + window:
        return tx, ty
    u = (t - t0) / window
    return sx + (tx - sx) * u, sy + (ty - sy) * u


def ewma(double estimate, double sample, double alpha):
    """One smoothing step: (1 - alpha) * estimate + alpha * sample.

    Incremental form, same as the pure twin: stays inside [min, max] of the
    inputs in float arithmetic.
    """
    return estimate + (sample - estimate) * alpha


def dist(double ax, double ay, double bx, double by):
    """Euclidean distance between two points."""
    cdef double dx = bx - ax
    cdef double dy = by - ay
    return sqrt(dx * dx + dy * dy)
