"""Log-space probability kernels and reproducible random streams.

All pmf evaluators are pure functions of their arguments and return log
probabilities (``-inf`` where the pmf is zero).  Random variates come from
independent counter-seeded streams so that parallel workers can draw
reproducibly without sharing generator state.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln, xlog1py, xlogy

__all__ = [
    "DomainError",
    "binom_logpmf",
    "ztbinom_logpmf",
    "pois_logpmf",
    "poisbinom_logpmf",
    "poisbinom_logpmf_batch",
    "pdetect",
    "normal_logpdf",
    "beta_logpdf",
    "invgamma_logpdf",
    "sample_invgamma",
    "logsumexp",
    "rng_streams",
]


class DomainError(ValueError):
    """Argument outside the support or parameter space of a distribution."""


def binom_logpmf(y, trials, p):
    """Log pmf of a binomial count ``y`` out of ``trials`` with success prob ``p``."""
    y = np.asarray(y)
    trials = np.asarray(trials)
    if np.any(y < 0) or np.any(y > trials):
        raise DomainError(f"binomial count outside 0..{trials}: {y}")
    p = np.asarray(p, dtype=float)
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise DomainError(f"success probability outside [0,1]: {p}")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (
            gammaln(trials + 1.0)
            - gammaln(y + 1.0)
            - gammaln(trials - y + 1.0)
            + xlogy(y, p)
            + xlog1py(trials - y, -p)
        )
    return out if out.ndim else float(out)


def pdetect(p, occasions):
    """Probability of at least one success in ``occasions`` trials: 1-(1-p)^J.

    Computed as ``-expm1(J*log1p(-p))`` so tiny ``p`` does not cancel.
    """
    p = np.asarray(p, dtype=float)
    out = -np.expm1(occasions * np.log1p(-p))
    return out if out.ndim else float(out)


def ztbinom_logpmf(y, trials, p):
    """Log pmf of a zero-truncated binomial (support 1..trials)."""
    y = np.asarray(y)
    if np.any(y < 1):
        raise DomainError(f"zero-truncated support starts at 1, got {y}")
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr <= 0.0):
        raise DomainError("zero-truncated binomial needs p > 0")
    with np.errstate(divide="ignore"):
        out = binom_logpmf(y, trials, p) - np.log(pdetect(p_arr, trials))
    return out if np.ndim(out) else float(out)


def pois_logpmf(n, lam):
    """Log pmf of a Poisson count.  ``lam == 0`` puts all mass at ``n == 0``."""
    n = np.asarray(n)
    if np.any(n < 0):
        raise DomainError(f"Poisson count must be >= 0, got {n}")
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0.0):
        raise DomainError(f"Poisson intensity must be >= 0, got {lam}")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = xlogy(n, lam) - lam - gammaln(n + 1.0)
    return out if out.ndim else float(out)


def poisbinom_logpmf(n, probs):
    """Log probability of exactly ``n`` successes among independent Bernoulli trials.

    Dynamic program over trials keeping only outcomes 0..n (states above n can
    never fall back, so truncation is exact).  Mass is carried in linear space
    and rescaled whenever it drifts toward the underflow threshold; the
    accumulated log scale is added back at the end.  Cost O(len(probs) * n).
    """
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1:
        raise DomainError("probs must be a 1-d sequence")
    if np.any(probs < 0.0) or np.any(probs > 1.0):
        raise DomainError("trial probabilities must lie in [0,1]")
    n = int(n)
    if n < 0:
        raise DomainError(f"success count must be >= 0, got {n}")
    if n > probs.size:
        return -np.inf
    q = np.zeros(n + 1)
    q[0] = 1.0
    log_scale = 0.0
    for p in probs:
        nxt = q * (1.0 - p)
        nxt[1:] += q[:-1] * p
        q = nxt
        top = q.max()
        if top < 1e-280:
            if top == 0.0:
                return -np.inf
            q /= top
            log_scale += math.log(top)
    if q[n] == 0.0:
        return -np.inf
    return math.log(q[n]) + log_scale


def poisbinom_logpmf_batch(n, shared_probs, batch_probs):
    """Vectorized Poisson-binomial log pmf for many trial sets at once.

    Row ``r`` of the result is ``poisbinom_logpmf(n, concat(shared_probs,
    batch_probs[r]))``.  The prefix DP over the shared trials is computed once
    and broadcast across rows; rescaling is per row.
    """
    shared_probs = np.asarray(shared_probs, dtype=float)
    batch_probs = np.asarray(batch_probs, dtype=float)
    if batch_probs.ndim != 2:
        raise DomainError("batch_probs must be 2-d (rows of trial probabilities)")
    reps, extra = batch_probs.shape
    n = int(n)
    if n < 0:
        raise DomainError(f"success count must be >= 0, got {n}")
    if n > shared_probs.size + extra:
        return np.full(reps, -np.inf)

    q0 = np.zeros(n + 1)
    q0[0] = 1.0
    shared_scale = 0.0
    for p in shared_probs:
        nxt = q0 * (1.0 - p)
        nxt[1:] += q0[:-1] * p
        q0 = nxt
        top = q0.max()
        if 0.0 < top < 1e-280:
            q0 /= top
            shared_scale += math.log(top)

    q = np.tile(q0, (reps, 1))
    log_scale = np.full(reps, shared_scale)
    for m in range(extra):
        p = batch_probs[:, m][:, None]
        nxt = q * (1.0 - p)
        nxt[:, 1:] += q[:, :-1] * p
        q = nxt
        if (m + 1) % 64 == 0:
            top = q.max(axis=1)
            live = top > 0.0
            np.divide(q, np.where(live, top, 1.0)[:, None], out=q)
            log_scale += np.where(live, np.log(np.where(live, top, 1.0)), 0.0)
    with np.errstate(divide="ignore"):
        return np.log(q[:, n]) + log_scale


def normal_logpdf(x, mean, var):
    """Log density of N(mean, var)."""
    x = np.asarray(x, dtype=float)
    out = -0.5 * (np.log(2.0 * np.pi * var) + (x - mean) ** 2 / var)
    return out if out.ndim else float(out)


def beta_logpdf(x, a, b):
    """Log density of Beta(a, b); -inf outside (0,1)."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(
            (x > 0.0) & (x < 1.0),
            xlogy(a - 1.0, x)
            + xlog1py(b - 1.0, -x)
            + gammaln(a + b)
            - gammaln(a)
            - gammaln(b),
            -np.inf,
        )
    return out if out.ndim else float(out)


def invgamma_logpdf(x, shape, rate):
    """Log density of the inverse gamma IG(shape, rate) ~ x^(-shape-1) e^(-rate/x)."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(
            x > 0.0,
            shape * np.log(rate)
            - gammaln(shape)
            - (shape + 1.0) * np.log(np.where(x > 0.0, x, 1.0))
            - rate / np.where(x > 0.0, x, 1.0),
            -np.inf,
        )
    return out if out.ndim else float(out)


def sample_invgamma(rng, shape, rate):
    """Inverse gamma draw as the reciprocal of a Gamma(shape, rate) variate."""
    return 1.0 / rng.gamma(shape, 1.0 / rate)


def logsumexp(values):
    """Stable log(sum(exp(values))); -inf for an all--inf input."""
    values = np.asarray(values, dtype=float)
    top = values.max()
    if not np.isfinite(top):
        return float(top) if top < 0 else float(top)
    return float(top + np.log(np.sum(np.exp(values - top))))


def rng_streams(seed, *stream_id):
    """Independent reproducible generator for (seed, stream_id...).

    Streams are distinguished through the seed-sequence spawn key, so any two
    distinct ids give non-overlapping state regardless of draw counts.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream_id))
    return np.random.default_rng(ss)
