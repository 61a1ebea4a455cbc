"""Hot numerical kernels with a selectable backend.

The componentwise proximal solve is the inner loop of the sparse
training phase: every entry needs its own bracketed Newton iteration,
with a data-dependent iteration count, so there is no closed-form
vectorization.  Two interchangeable implementations live here:

* ``numba``: compiled scalar loops (default whenever numba imports),
* ``numpy``: a masked, vectorized safeguarded-Newton iteration.

Select with ``QUTSPARSE_BACKEND=numpy`` or ``=numba``; the default
``auto`` prefers numba.  Both backends are individually deterministic
and agree to roughly 1e-12; ``benchmarks/bench_kernels.py`` compares
their speed.
"""

import math
import os

import numpy as np

_FLAG = os.environ.get("QUTSPARSE_BACKEND", "auto").strip().lower()
if _FLAG not in ("auto", "numba", "numpy"):
    raise ValueError(
        "QUTSPARSE_BACKEND must be 'auto', 'numba' or 'numpy', got %r" % _FLAG
    )

HAS_NUMBA = False
if _FLAG != "numpy":
    try:
        from numba import njit

        HAS_NUMBA = True
    except ImportError:
        HAS_NUMBA = False


def _solve_jump_py(lam, nu):
    # Monotone reformulation t**(1 - nu/2) + t**(nu/2) = sqrt(2*lam*(1-nu)).
    # AM-GM puts the root inside (0, lam*(1-nu)/2], and both powers are
    # increasing there, so plain bisection is safe.
    target = math.sqrt(2.0 * lam * (1.0 - nu))
    lo = 0.0
    hi = lam * (1.0 - nu) / 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        g = mid ** (1.0 - 0.5 * nu) + mid ** (0.5 * nu)
        if g < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _prox_root_py(z, lam, nu, kappa):
    # Stationarity theta - z + lam*(1 + nu*t)/(1 + t)**2 = 0, t = theta**(1-nu),
    # has exactly one root in [kappa, z] once z exceeds the threshold; the
    # lower end excludes the spurious local max.  Newton from z, clipped to a
    # shrinking sign bracket with bisection fallback.
    lo = kappa
    hi = z
    theta = z
    one_m = 1.0 - nu
    for _ in range(100):
        t = theta ** one_m
        d = 1.0 + t
        h = theta - z + lam * (1.0 + nu * t) / (d * d)
        if h > 0.0:
            hi = theta
        else:
            lo = theta
        if abs(h) < 1e-14 * (1.0 + z):
            break
        hp = 1.0 - lam * one_m * theta ** (-nu) * ((2.0 - nu) + nu * t) / (d * d * d)
        if hp > 0.0:
            cand = theta - h / hp
        else:
            cand = 0.5 * (lo + hi)
        if cand <= lo or cand >= hi:
            cand = 0.5 * (lo + hi)
        if abs(cand - theta) < 1e-15 * (1.0 + theta):
            theta = cand
            break
        theta = cand
    return theta


def _prox_magnitudes_py(z, lam, nu, phi, kappa):
    out = np.zeros_like(z)
    for i in range(z.size):
        if z[i] > phi:
            out[i] = _prox_root_py(z[i], lam, nu, kappa)
    return out


def _prox_magnitudes_np(z, lam, nu, phi, kappa):
    """Vectorized counterpart of the scalar loop: all active entries run
    safeguarded Newton in lockstep until the slowest one converges."""
    out = np.zeros_like(z)
    act = z > phi
    if not np.any(act):
        return out
    za = z[act]
    lo = np.full_like(za, kappa)
    hi = za.copy()
    theta = za.copy()
    one_m = 1.0 - nu
    tol_h = 1e-14 * (1.0 + float(np.max(za)))
    for _ in range(100):
        t = theta ** one_m
        d = 1.0 + t
        h = theta - za + lam * (1.0 + nu * t) / (d * d)
        pos = h > 0.0
        hi = np.where(pos, theta, hi)
        lo = np.where(pos, lo, theta)
        mid = 0.5 * (lo + hi)
        hp = 1.0 - lam * one_m * theta ** (-nu) * ((2.0 - nu) + nu * t) / (d * d * d)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            cand = np.where(hp > 0.0, theta - h / hp, mid)
        cand = np.where(~np.isfinite(cand) | (cand <= lo) | (cand >= hi), mid, cand)
        delta = float(np.max(np.abs(cand - theta)))
        theta = cand
        if float(np.max(np.abs(h))) < tol_h or delta < 1e-15 * (1.0 + float(np.max(theta))):
            break
    out[act] = theta
    return out


if HAS_NUMBA:
    _solve_jump_nb = njit(cache=True)(_solve_jump_py)
    _prox_root_nb = njit(cache=True)(_prox_root_py)

    @njit(cache=True)
    def _prox_magnitudes_nb(z, lam, nu, phi, kappa):
        out = np.zeros_like(z)
        for i in range(z.size):
            if z[i] > phi:
                out[i] = _prox_root_nb(z[i], lam, nu, kappa)
        return out

    BACKEND = "numba"
    _solve_jump_impl = _solve_jump_nb
    _prox_root_impl = _prox_root_nb
    _prox_magnitudes_impl = _prox_magnitudes_nb
else:
    BACKEND = "numpy"
    _solve_jump_impl = _solve_jump_py
    _prox_root_impl = _prox_root_py
    _prox_magnitudes_impl = _prox_magnitudes_np


def solve_jump(lam, nu):
    """Positive root of the jump equation for 0 < nu < 1, lam > 0."""
    return float(_solve_jump_impl(lam, nu))


def prox_root(z, lam, nu, kappa):
    """Root of the prox stationarity equation for a magnitude z above the
    threshold."""
    return float(_prox_root_impl(z, lam, nu, kappa))


def prox_magnitudes(z, lam, nu, phi, kappa):
    """Componentwise prox on an array of nonnegative magnitudes."""
    return _prox_magnitudes_impl(np.ascontiguousarray(z, dtype=np.float64), lam, nu, phi, kappa)
