"""Automatic regularization level from a Monte Carlo null quantile.

Under the all-features-irrelevant null, the smallest regularization that
zeroes the first weight matrix is a computable statistic of (X, Y).  The
regularization level is set to an upper quantile of that statistic with
the response replaced by null draws, so the probability of keeping any
feature on pure noise is capped at alpha.  For regression the statistic
is scale-free (the square-root loss divides the residual norm out), so
the null draws need no variance estimate.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import ceil

import numpy as np

from .losses import TaskSpec
from .network import ACTIVATION_DERIV_SUP, Architecture


@dataclass
class QutEstimate:
    lambda_qut: float
    alpha: float
    n_mc: int
    seed: object
    samples: np.ndarray

    def to_dict(self):
        seed = self.seed if isinstance(self.seed, int) else list(self.seed)
        return {
            "lambda_qut": float(self.lambda_qut),
            "alpha": float(self.alpha),
            "n_mc": int(self.n_mc),
            "seed": seed,
            "samples": [float(s) for s in self.samples],
        }


def depth_scale(arch):
    """Multiplier carrying the network depth into the null statistic:
    (sup activation derivative)**(L-1) times the square root of the
    product of the hidden widths past the first."""
    kappa = ACTIVATION_DERIV_SUP[arch.activation]
    extra = 1.0
    for h in arch.hidden[1:]:
        extra *= float(h)
    return kappa ** (arch.n_layers - 1) * float(np.sqrt(extra))


def null_statistic(X, Y, task, arch):
    """Largest first-layer gradient magnitude attainable at the null model,
    for one response matrix.  Row norm is l1 across outputs; regression
    divides by the centered-response norm."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    Yc = Y - np.mean(Y, axis=0)
    G = X.T @ Yc
    stat = float(np.max(np.sum(np.abs(G), axis=1)))
    if task.kind == "regression":
        denom = float(np.linalg.norm(Yc))
        if denom == 0.0:
            raise ValueError("constant response; the null statistic is undefined")
        stat /= denom
    return stat * depth_scale(arch)


def sample_null(task, Y, rng):
    """One null response draw: standard normal columns for regression,
    one-hot rows with class probabilities from Y's proportions for
    classification."""
    Y = np.asarray(Y, dtype=np.float64)
    n, m = Y.shape
    if task.kind == "regression":
        return rng.standard_normal((n, m))
    p = np.mean(Y, axis=0)
    p = p / np.sum(p)
    idx = rng.choice(m, size=n, p=p)
    return np.eye(m)[idx]


def _chunk_stats(X, Y, task, arch, seeds):
    out = np.empty(len(seeds))
    for i, s in enumerate(seeds):
        rng = np.random.default_rng(s)
        out[i] = null_statistic(X, sample_null(task, Y, rng), task, arch)
    return out


def compute_qut(X, Y, task, arch, alpha=0.05, n_mc=1000, seed=0, jobs=1):
    """Monte Carlo estimate of the null quantile.

    Every draw uses its own counter-derived generator, so the result is
    identical for any jobs value; jobs only chunks the evaluation.  The
    quantile is the plain ascending order statistic at ceil((1-alpha)*n_mc),
    no interpolation.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must be inside (0, 1)")
    if n_mc < 1:
        raise ValueError("n_mc must be positive")
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    children = np.random.SeedSequence(seed).spawn(n_mc)
    jobs = max(1, int(jobs))
    if jobs == 1:
        samples = _chunk_stats(X, Y, task, arch, children)
    else:
        bounds = np.linspace(0, n_mc, jobs + 1).astype(int)
        chunks = [children[a:b] for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        with ThreadPoolExecutor(max_workers=len(chunks)) as ex:
            parts = list(ex.map(lambda c: _chunk_stats(X, Y, task, arch, c), chunks))
        samples = np.concatenate(parts)
    k = ceil((1.0 - alpha) * n_mc)
    lam = float(np.sort(samples)[k - 1])
    return QutEstimate(lambda_qut=lam, alpha=alpha, n_mc=n_mc, seed=seed, samples=samples)
