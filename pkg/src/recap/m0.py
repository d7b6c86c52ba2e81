"""Homogeneous closed-population model (M0): shared detection probability.

Stage 1 targets the zero-truncated likelihood of the observed counts and
draws the membership probability from its prior; the sample-size model is
binomial (or its Poisson limit) in closed form, so the look-up table needs no
Monte Carlo.  A conventional single-chain sampler on the full conditional
posterior is included as a ground-truth oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial

import numpy as np
from scipy.special import expit, gammaln, log_expit, logit

from .data import CaptureHistory
from .dist import beta_logpdf, binom_logpmf, pdetect, pois_logpmf, ztbinom_logpmf
from .engine import (
    Block,
    Chain,
    FitConfig,
    FitResult,
    NModelSpec,
    precompute_lookup,
    run_stage1,
    run_stage2_pprb,
    run_stage3,
)

__all__ = [
    "M0Params",
    "M0Priors",
    "m0_stage1_logtarget",
    "m0_n_logpmf",
    "m0_stage3_sample",
    "m0_single_stage_fit",
    "m0_power_to_detect",
    "m0_psibar",
    "fit_m0",
]


@dataclass(frozen=True)
class M0Params:
    p: float
    psi: float


@dataclass(frozen=True)
class M0Priors:
    """Beta priors for detection and membership probabilities."""

    p_a: float = 1.0
    p_b: float = 1.0
    psi_a: float = 1.0
    psi_b: float = 1.0

    def __post_init__(self):
        if min(self.p_a, self.p_b, self.psi_a, self.psi_b) <= 0.0:
            raise ValueError("Beta hyperparameters must be positive")


def _count_stats(data: CaptureHistory):
    """(log binomial coefficient sum, total detections) for the fast likelihood."""
    values, counts = np.unique(data.y, return_counts=True)
    lchoose = (
        gammaln(data.J + 1.0) - gammaln(values + 1.0) - gammaln(data.J - values + 1.0)
    )
    return float((counts * lchoose).sum()), float((counts * values).sum())


def _zt_loglik(theta: float, data: CaptureHistory, lchoose_sum: float, total: float) -> float:
    """Zero-truncated binomial log likelihood at logit-scale detection theta."""
    lp = log_expit(theta)
    lq = log_expit(-theta)
    miss_all = data.J * lq
    if miss_all >= 0.0:  # detection probability underflowed to zero
        return -math.inf
    log_pdet = math.log(-math.expm1(miss_all))
    return lchoose_sum + total * lp + (data.n * data.J - total) * lq - data.n * log_pdet


def m0_stage1_logtarget(params: M0Params, data: CaptureHistory, priors: M0Priors) -> float:
    """Observed-data log density: zero-truncated likelihood plus detection prior.

    Membership enters stage 1 only through its prior (a separate prior-draw
    block), so it does not appear here.
    """
    if not (0.0 < params.p < 1.0):
        return -np.inf
    ll = float(np.sum(ztbinom_logpmf(data.y, data.J, params.p)))
    return ll + beta_logpdf(params.p, priors.p_a, priors.p_b)


def m0_n_logpmf(params: M0Params, n: int, spec: NModelSpec, J: int) -> float:
    """Conditional log pmf of the observed sample size.

    Under homogeneous detection the Poisson-binomial collapses to a binomial,
    so the 'poisbinom' kind is evaluated with the binomial formula.
    """
    q = params.psi * pdetect(params.p, J)
    if spec.kind in ("binomial", "poisbinom"):
        if n > spec.M:
            return -np.inf
        return binom_logpmf(n, spec.M, q)
    return pois_logpmf(n, spec.M * q)


def m0_psibar(p: float, psi: float, J: int) -> float:
    """Membership probability of an undetected individual."""
    miss = math.exp(J * math.log1p(-p)) if p < 1.0 else 0.0
    return psi * miss / (psi * miss + 1.0 - psi)


def m0_stage3_sample(params: M0Params, n: int, spec: NModelSpec, J: int, rng) -> int:
    """Draw the undetected count from its full conditional."""
    if n > spec.M:
        raise ValueError(f"observed count {n} exceeds superpopulation {spec.M}")
    w = m0_psibar(params.p, params.psi, J)
    if spec.kind in ("binomial", "poisbinom"):
        return int(rng.binomial(spec.M - n, w))
    return int(rng.poisson(w * (spec.M - n)))


def m0_power_to_detect(chain: Chain, J: int) -> float:
    """Posterior mean probability that a population member is seen at least once."""
    return float(np.mean(pdetect(chain.column("p"), J)))


# ---------------------------------------------------------------------------
# Stage-1 model
# ---------------------------------------------------------------------------


class M0Stage1:
    """Componentwise stage-1 sampler: random walk on logit(p), prior draws for psi."""

    name = "m0"

    def __init__(self, data: CaptureHistory, priors: M0Priors):
        self.data = data
        self.priors = priors
        self._lchoose_sum, self._total = _count_stats(data)

    def _theta_target(self, theta: float) -> float:
        # Beta prior plus the logit Jacobian gives exponents (a, b) on (p, 1-p).
        pr = self.priors.p_a * log_expit(theta) + self.priors.p_b * log_expit(-theta)
        return _zt_loglik(theta, self.data, self._lchoose_sum, self._total) + pr

    def init_state(self) -> dict:
        p0 = min(max(float(self.data.y.mean()) / self.data.J, 0.01), 0.99)
        return {"theta_p": float(logit(p0)), "psi": 0.5}

    def log_target(self, state: dict) -> float:
        return self._theta_target(state["theta_p"])

    def _update_p(self, state, rng, scale):
        theta = state["theta_p"]
        prop = theta + scale * rng.standard_normal()
        delta = self._theta_target(prop) - self._theta_target(theta)
        accept = math.log(rng.random()) < delta
        if accept:
            state = dict(state)
            state["theta_p"] = prop
        return state, int(accept), 1

    def _update_psi(self, state, rng, scale):
        state = dict(state)
        state["psi"] = rng.beta(self.priors.psi_a, self.priors.psi_b)
        return state, 0, 0

    def blocks(self, scales: dict) -> list:
        return [
            Block(name="p", kind="mh", update=self._update_p, scale=scales.get("p", 0.5)),
            Block(name="psi", kind="prior", update=self._update_psi),
        ]

    def record(self, state: dict) -> dict:
        return {"p": float(expit(state["theta_p"])), "psi": state["psi"]}


# ---------------------------------------------------------------------------
# Single-stage oracle: joint Metropolis-Hastings on (p, psi) for the full
# conditional posterior, with the undetected count drawn every iteration.
# ---------------------------------------------------------------------------


class M0SingleStage:
    """Joint (p, psi) sampler for the full posterior including the sample size."""

    name = "m0-single"

    def __init__(self, data: CaptureHistory, priors: M0Priors, spec: NModelSpec):
        if spec.kind != "binomial":
            raise ValueError("single-stage reference sampler supports the binomial sample-size model")
        if spec.M < data.n:
            raise ValueError(f"superpopulation {spec.M} smaller than observed count {data.n}")
        self.data = data
        self.priors = priors
        self.spec = spec
        self._lchoose_sum, self._total = _count_stats(data)

    def _target(self, theta_p: float, theta_psi: float) -> float:
        data, priors = self.data, self.priors
        p = expit(theta_p)
        psi = expit(theta_psi)
        ll = _zt_loglik(theta_p, data, self._lchoose_sum, self._total)
        q = psi * pdetect(p, data.J)
        ll += binom_logpmf(data.n, self.spec.M, q)
        ll += priors.p_a * log_expit(theta_p) + priors.p_b * log_expit(-theta_p)
        ll += priors.psi_a * log_expit(theta_psi) + priors.psi_b * log_expit(-theta_psi)
        return ll

    def init_state(self) -> dict:
        p0 = min(max(float(self.data.y.mean()) / self.data.J, 0.01), 0.99)
        return {"theta_p": float(logit(p0)), "theta_psi": 0.0, "N0": 0}

    def log_target(self, state: dict) -> float:
        return self._target(state["theta_p"], state["theta_psi"])

    def _update_joint(self, state, rng, scale):
        cur = (state["theta_p"], state["theta_psi"])
        step = scale * rng.standard_normal(2)
        prop = (cur[0] + step[0], cur[1] + step[1])
        delta = self._target(*prop) - self._target(*cur)
        accept = math.log(rng.random()) < delta
        if accept:
            state = dict(state)
            state["theta_p"], state["theta_psi"] = prop
        return state, int(accept), 1

    def _update_n0(self, state, rng, scale):
        params = M0Params(p=float(expit(state["theta_p"])), psi=float(expit(state["theta_psi"])))
        state = dict(state)
        state["N0"] = m0_stage3_sample(params, self.data.n, self.spec, self.data.J, rng)
        return state, 0, 0

    def blocks(self, scales: dict) -> list:
        return [
            Block(name="joint", kind="mh", update=self._update_joint, scale=scales.get("joint", 0.3)),
            Block(name="N0", kind="gibbs", update=self._update_n0),
        ]

    def record(self, state: dict) -> dict:
        return {
            "p": float(expit(state["theta_p"])),
            "psi": float(expit(state["theta_psi"])),
            "N0": int(state["N0"]),
            "N": self.data.n + int(state["N0"]),
        }


def m0_single_stage_fit(
    data: CaptureHistory, priors: M0Priors, spec: NModelSpec, config: FitConfig
) -> Chain:
    """Fit the homogeneous model with one conventional chain (ground truth)."""
    return run_stage1(M0SingleStage(data, priors, spec), config)


# ---------------------------------------------------------------------------
# Three-stage pipeline
# ---------------------------------------------------------------------------


def _m0_n_eval(draw, rng, n, spec, J):
    return m0_n_logpmf(M0Params(p=draw["p"], psi=draw["psi"]), n, spec, J)


def _m0_n0_draw(draw, rng, n, spec, J):
    return m0_stage3_sample(M0Params(p=draw["p"], psi=draw["psi"]), n, spec, J, rng)


def fit_m0(data: CaptureHistory, priors: M0Priors, config: FitConfig) -> FitResult:
    """Stage 1 -> look-up table -> resampling stage -> abundance draws."""
    spec = config.n_model
    if spec.M < data.n:
        raise ValueError(f"superpopulation {spec.M} smaller than observed count {data.n}")
    stage1 = run_stage1(M0Stage1(data, priors), config)
    evaluator = partial(_m0_n_eval, n=data.n, spec=spec, J=data.J)
    lookup = precompute_lookup(stage1, evaluator, config.workers, config.seed)
    stage2 = run_stage2_pprb(stage1, lookup, config.K2, config.seed)
    sampler = partial(_m0_n0_draw, n=data.n, spec=spec, J=data.J)
    stage3 = run_stage3(stage2, sampler, data.n, config.workers, config.seed)
    power = m0_power_to_detect(stage3, data.J)
    return FitResult(
        stage1=stage1,
        lookup=lookup,
        stage2=stage2,
        stage3=stage3,
        extras={"power_to_detect": power},
    )
