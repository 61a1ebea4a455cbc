"""Nonconvex sparsity penalty, its thresholding constants, and the exact
proximal operator.

The penalty ``|t| / (1 + |t|**(1 - nu))`` interpolates between half the
absolute value at nu = 1 and an l0-like shape as nu drops toward 0.  Its
univariate prox is a thresholding rule with a discontinuity: below the
threshold the minimizer is exactly 0, just above it the minimizer jumps
to a positive value.  Threshold and jump solve a two-equation system
that only depends on (lam, nu), so they are computed once and cached.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._kernels import prox_magnitudes, prox_root, solve_jump


@dataclass(frozen=True)
class PenaltySpec:
    """Regularization level, shape parameter, and the derived thresholding
    constants.  Immutable so specs can be shared across workers."""

    lam: float
    nu: float
    threshold: float
    jump: float


def _validate(lam, nu):
    if not np.isfinite(lam) or lam < 0.0:
        raise ValueError("lam must be a finite nonnegative real, got %r" % lam)
    if not (0.0 < nu <= 1.0):
        raise ValueError("nu must lie in (0, 1], got %r" % nu)


def penalty_value(theta, nu):
    """Elementwise penalty.  Works on scalars and arrays; nu = 1 reduces to
    |theta| / 2 because |theta|**0 evaluates to 1."""
    _validate(0.0, nu)
    a = np.abs(theta)
    return a / (1.0 + a ** (1.0 - nu))


def penalty_slope(theta, nu):
    """Derivative of the penalty for theta != 0, with the subgradient choice
    0 at theta = 0 (np.sign supplies it)."""
    _validate(0.0, nu)
    t = np.abs(theta) ** (1.0 - nu)
    return np.sign(theta) * (1.0 + nu * t) / (1.0 + t) ** 2


@lru_cache(maxsize=4096)
def _threshold_pair(lam, nu):
    # The backtracking line search revisits the same dyadic ladder of
    # effective lam values, so caching removes nearly all bisection work.
    if lam == 0.0:
        return 0.0, 0.0
    if nu == 1.0:
        return 0.5 * lam, 0.0
    kappa = solve_jump(lam, nu)
    phi = 0.5 * kappa + lam / (1.0 + kappa ** (1.0 - nu))
    return phi, kappa


def solve_threshold(lam, nu):
    """Thresholding constants for one (lam, nu) pair.

    Returns a PenaltySpec whose ``threshold`` is the largest magnitude
    mapped to zero and whose ``jump`` is the right-limit of the prox at
    the threshold.  nu = 1 gives the soft-threshold pair (lam/2, 0).
    """
    _validate(lam, nu)
    lam = float(lam)
    nu = float(nu)
    phi, kappa = _threshold_pair(lam, nu)
    return PenaltySpec(lam=lam, nu=nu, threshold=phi, jump=kappa)


def _signed(mag, y):
    return mag if y >= 0.0 else -mag


def prox(y, spec):
    """Exact scalar prox: argmin over theta of
    0.5*(y - theta)**2 + lam * penalty(theta).

    Ties at |y| == threshold resolve to 0.
    """
    y = float(y)
    if spec.lam == 0.0:
        return y
    z = abs(y)
    if z <= spec.threshold:
        return 0.0
    if spec.nu == 1.0:
        return _signed(z - 0.5 * spec.lam, y)
    return _signed(prox_root(z, spec.lam, spec.nu, spec.jump), y)


def prox_vector(v, spec, step=1.0):
    """Componentwise prox with effective regularization ``step * lam``.

    This is the shape used inside a proximal gradient iteration, where the
    step size scales the penalty seen by the univariate problems.  Returns
    an array of v's shape with exact zeros below the effective threshold.
    """
    if step <= 0.0 or not np.isfinite(step):
        raise ValueError("step must be positive and finite, got %r" % step)
    v = np.asarray(v, dtype=np.float64)
    eff = step * spec.lam
    if eff == 0.0:
        return v.copy()
    if spec.nu == 1.0:
        return np.sign(v) * np.maximum(np.abs(v) - 0.5 * eff, 0.0)
    phi, kappa = _threshold_pair(eff, spec.nu)
    mags = prox_magnitudes(np.abs(v).ravel(), eff, spec.nu, phi, kappa)
    return (np.sign(v).ravel() * mags).reshape(v.shape)
