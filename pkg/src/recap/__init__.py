"""Recursive Bayesian capture-recapture abundance estimation.

Fits homogeneous (M0), heterogeneous (Mh), and spatial (SCR) closed-population
models in three computing stages: a Markov chain on the observed detections, a
parallel precompute of the conditional pmf of the observed sample size at every
stage-1 draw, a tuning-free resampling stage that assimilates the sample size,
and a post-hoc abundance stage.
"""

from .data import (
    CaptureHistory,
    DataError,
    Region,
    ScrData,
    SimTruth,
    builtin_hare,
    builtin_salamander,
    builtin_sim_demo,
    load_capture_csv,
    load_scr_csv,
    simulate_m0,
    simulate_scr,
    write_capture_csv,
    write_scr_csv,
)
from .dist import (
    DomainError,
    binom_logpmf,
    pdetect,
    pois_logpmf,
    poisbinom_logpmf,
    rng_streams,
    ztbinom_logpmf,
)
from .engine import (
    Chain,
    FitConfig,
    FitResult,
    InitializationError,
    LookupTable,
    NModelSpec,
    NumericalError,
    load_chain,
    precompute_lookup,
    run_stage1,
    run_stage2_pprb,
    run_stage3,
    save_chain,
    summarize,
)
from .m0 import (
    M0Params,
    M0Priors,
    fit_m0,
    m0_n_logpmf,
    m0_power_to_detect,
    m0_single_stage_fit,
    m0_stage1_logtarget,
    m0_stage3_sample,
)

__version__ = "0.1.0"
