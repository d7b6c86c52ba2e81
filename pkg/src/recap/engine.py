"""Three-stage recursive sampling machinery.

Stage 1 runs a single componentwise Markov chain on the observed-data
posterior.  Between stages, the conditional log pmf of the observed sample
size is evaluated at every stage-1 draw (embarrassingly parallel, one
reproducible stream per draw index).  Stage 2 resamples stage-1 draws through
a tuning-free Metropolis-Hastings step whose ratio is a difference of two
look-up table entries.  Stage 3 attaches the undetected-count draw to each
stage-2 state, again in parallel.

The machinery is model agnostic: a stage-1 model supplies its initial state,
its block update rules, a log-target for the initialization check, and the
mapping from sampler state to recorded chain columns.
"""

from __future__ import annotations

import json
import math
import multiprocessing
import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .dist import rng_streams

__all__ = [
    "InitializationError",
    "NumericalError",
    "NModelSpec",
    "FitConfig",
    "Block",
    "Chain",
    "LookupTable",
    "run_stage1",
    "precompute_lookup",
    "run_stage2_pprb",
    "run_stage3",
    "summarize",
    "ess_batch_means",
    "save_chain",
    "load_chain",
]

N_MODEL_KINDS = ("binomial", "poisbinom", "poisson")

# Spawn-key namespaces so the per-stage streams never collide.
_STREAM_STAGE1 = 1
_STREAM_STAGE2 = 2
_STREAM_LOOKUP = 3
_STREAM_STAGE3 = 4

_ADAPT_WINDOW = 50
_ADAPT_TARGET = 0.44


class InitializationError(RuntimeError):
    """Sampler could not start (non-finite log target at the initial state)."""


class NumericalError(RuntimeError):
    """A stage produced values no sampler can recover from."""


@dataclass(frozen=True)
class NModelSpec:
    """Which conditional distribution models the observed sample size.

    ``kind`` is one of 'binomial', 'poisbinom', 'poisson'; ``M`` is the
    superpopulation bound.
    """

    kind: str
    M: int

    def __post_init__(self):
        if self.kind not in N_MODEL_KINDS:
            raise ValueError(f"unknown sample-size model {self.kind!r}; options: {N_MODEL_KINDS}")
        if self.M < 1:
            raise ValueError(f"superpopulation size must be >= 1, got {self.M}")


@dataclass
class FitConfig:
    """Iteration counts, Monte Carlo sizes, proposal scales, seeds, workers."""

    n_model: NModelSpec
    K1: int = 100_000
    K2: int = 100_000
    burn_in: float = 0.1
    mc_draws_n: int | None = None  # model-specific default when None
    mc_draws_psibar: int = 1000
    proposal_scales: dict = field(default_factory=dict)
    adapt: bool = True
    seed: int = 0
    workers: int = 1
    scr_intensity: str = "per-trap"  # or "shared-z"

    def __post_init__(self):
        if self.K1 < 1 or self.K2 < 1:
            raise ValueError("iteration counts must be >= 1")
        if not (0.0 <= self.burn_in < 1.0):
            raise ValueError("burn-in fraction must lie in [0,1)")
        if self.mc_draws_n is not None and self.mc_draws_n < 1:
            raise ValueError("mc_draws_n must be >= 1")
        if self.mc_draws_psibar < 1:
            raise ValueError("mc_draws_psibar must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.scr_intensity not in ("per-trap", "shared-z"):
            raise ValueError("scr_intensity must be 'per-trap' or 'shared-z'")


@dataclass
class Block:
    """One parameter block of the stage-1 sampler.

    ``update(state, rng, scale) -> (state, n_accepted, n_proposed)``.
    Gibbs and prior-draw blocks report (0, 0) and ignore ``scale``.
    """

    name: str
    kind: str  # "mh" | "gibbs" | "prior"
    update: object
    scale: float = 1.0


@dataclass(eq=False)
class Chain:
    """Posterior draws, one array per named parameter (scalars (K,), vectors (K,d))."""

    columns: dict
    meta: dict

    @property
    def K(self) -> int:
        return int(next(iter(self.columns.values())).shape[0])

    def column(self, name: str) -> np.ndarray:
        return self.columns[name]

    def draw(self, k: int) -> dict:
        return {name: col[k] for name, col in self.columns.items()}

    def take(self, idx: np.ndarray, meta: dict | None = None) -> "Chain":
        cols = {name: col[idx] for name, col in self.columns.items()}
        return Chain(columns=cols, meta=dict(self.meta if meta is None else meta))


@dataclass(eq=False)
class FitResult:
    """Everything a three-stage fit produces, stage by stage."""

    stage1: Chain
    lookup: "LookupTable"
    stage2: Chain
    stage3: Chain
    extras: dict = field(default_factory=dict)


@dataclass(eq=False)
class LookupTable:
    """Conditional log pmf of the observed sample size at every stage-1 draw."""

    logpmf_n: np.ndarray

    def __post_init__(self):
        self.logpmf_n = np.asarray(self.logpmf_n, dtype=float)
        if np.any(np.isnan(self.logpmf_n)) or np.any(self.logpmf_n == np.inf):
            raise NumericalError("look-up table entries must be finite or -inf")

    @property
    def K(self) -> int:
        return int(self.logpmf_n.size)


# ---------------------------------------------------------------------------
# Stage 1
# ---------------------------------------------------------------------------


def run_stage1(model, config: FitConfig) -> Chain:
    """Run the componentwise stage-1 chain and return K1 post-burn-in draws.

    Gaussian random-walk blocks may adapt their scale during burn-in toward
    0.44 acceptance; scales freeze afterwards so the retained chain targets a
    fixed kernel.
    """
    rng = rng_streams(config.seed, _STREAM_STAGE1)
    state = model.init_state()
    lt = model.log_target(state)
    if not np.isfinite(lt):
        raise InitializationError(f"non-finite log target at initialization ({lt})")

    blocks = model.blocks(dict(config.proposal_scales))
    n_burn = int(round(config.burn_in * config.K1))
    total = n_burn + config.K1

    acc = {b.name: 0 for b in blocks if b.kind == "mh"}
    prop = {b.name: 0 for b in blocks if b.kind == "mh"}
    win_acc = dict(acc)
    win_prop = dict(prop)
    windows_done = 0

    columns = None
    for it in range(total):
        for b in blocks:
            state, a, p = b.update(state, rng, b.scale)
            if b.kind == "mh":
                if it < n_burn:
                    win_acc[b.name] += a
                    win_prop[b.name] += p
                else:
                    acc[b.name] += a
                    prop[b.name] += p
        if config.adapt and it < n_burn and (it + 1) % _ADAPT_WINDOW == 0:
            windows_done += 1
            step = min(1.0, 2.0 / math.sqrt(windows_done))
            for b in blocks:
                if b.kind != "mh" or win_prop[b.name] == 0:
                    continue
                rate = win_acc[b.name] / win_prop[b.name]
                b.scale *= math.exp((rate - _ADAPT_TARGET) * step)
                win_acc[b.name] = 0
                win_prop[b.name] = 0
        if it >= n_burn:
            rec = model.record(state)
            if columns is None:
                columns = {
                    name: np.empty((config.K1,) + np.shape(val), dtype=np.asarray(val).dtype)
                    for name, val in rec.items()
                }
            row = it - n_burn
            for name, val in rec.items():
                columns[name][row] = val

    meta = {
        "model": getattr(model, "name", type(model).__name__),
        "stage": 1,
        "seed": config.seed,
        "K": config.K1,
        "burn_in": n_burn,
        "acceptance": {
            name: (acc[name] / prop[name] if prop[name] else 0.0) for name in acc
        },
        "accept_counts": dict(acc),
        "proposal_counts": dict(prop),
        "scales": {b.name: b.scale for b in blocks if b.kind == "mh"},
    }
    return Chain(columns=columns, meta=meta)


# ---------------------------------------------------------------------------
# Parallel per-index evaluation (look-up table, stage 3)
# ---------------------------------------------------------------------------

_WORKER_CTX = None
_CHUNK_MIN = 64


def _worker_init(columns, fn, seed, space, what):
    global _WORKER_CTX
    _WORKER_CTX = (columns, fn, seed, space, what)


def _worker_chunk(span):
    columns, fn, seed, space, what = _WORKER_CTX
    start, stop = span
    out = []
    for k in range(start, stop):
        draw = {name: col[k] for name, col in columns.items()}
        rng = rng_streams(seed, space, k)
        try:
            out.append(fn(draw, rng))
        except Exception as exc:  # propagate with the offending index
            raise RuntimeError(f"{what} failed at index {k}: {exc}") from None
    return start, out


def _indexed_eval(columns, fn, seed, space, K, workers, what):
    """fn(draw_k, stream_k) for k in 0..K-1, split over a worker pool.

    Every index owns its stream, so the result is invariant to the worker
    count and chunking.
    """
    if workers <= 1 or K < 2 * _CHUNK_MIN:
        _worker_init(columns, fn, seed, space, what)
        try:
            return _worker_chunk((0, K))[1]
        finally:
            _reset_ctx()
    chunk = max(_CHUNK_MIN, -(-K // (workers * 16)))
    spans = [(s, min(s + chunk, K)) for s in range(0, K, chunk)]
    position = {s: i for i, (s, _) in enumerate(spans)}
    results = [None] * len(spans)
    with multiprocessing.get_context("fork").Pool(
        workers, initializer=_worker_init, initargs=(columns, fn, seed, space, what)
    ) as pool:
        for start, vals in pool.imap_unordered(_worker_chunk, spans):
            results[position[start]] = vals
    out = []
    for vals in results:
        out.extend(vals)
    return out


def _reset_ctx():
    global _WORKER_CTX
    _WORKER_CTX = None


def precompute_lookup(chain: Chain, n_logpmf, workers: int = 1, seed: int = 0) -> LookupTable:
    """Evaluate the conditional log pmf of n at every stage-1 draw.

    ``n_logpmf(draw, stream) -> float`` must be pure given the draw and its
    per-index stream; entries of -inf are stored as is.
    """
    vals = _indexed_eval(
        chain.columns, n_logpmf, seed, _STREAM_LOOKUP, chain.K, workers, "n-model evaluation"
    )
    return LookupTable(logpmf_n=np.array(vals, dtype=float))


# ---------------------------------------------------------------------------
# Stage 2
# ---------------------------------------------------------------------------


def run_stage2_pprb(chain: Chain, table: LookupTable, K2: int, seed: int = 0) -> Chain:
    """Resample stage-1 draws through the sample-size Metropolis ratio.

    Proposals are uniform draws (with replacement) from the stage-1 sample;
    the acceptance ratio is exp(table[proposal] - table[current]).  The
    returned chain materializes the selected draws plus a ``draw_index``
    column locating each state in the stage-1 chain.
    """
    t = table.logpmf_n
    if table.K != chain.K:
        raise ValueError(f"table length {table.K} does not match chain length {chain.K}")
    if not np.any(t > -np.inf):
        raise NumericalError("n impossible under every stage-1 draw")
    rng = rng_streams(seed, _STREAM_STAGE2)
    K1 = chain.K
    cur = int(rng.integers(K1))
    proposals = rng.integers(K1, size=K2)
    log_u = np.log(rng.random(K2))
    tl = t.tolist()
    props = proposals.tolist()
    us = log_u.tolist()
    idx = np.empty(K2, dtype=np.int64)
    accepted = 0
    t_cur = tl[cur]
    for k in range(K2):
        j = props[k]
        t_j = tl[j]
        if t_j > -np.inf and (t_cur == -np.inf or us[k] <= t_j - t_cur):
            cur = j
            t_cur = t_j
            accepted += 1
        idx[k] = cur
    meta = dict(chain.meta)
    meta.update(
        {
            "stage": 2,
            "K": K2,
            "seed2": seed,
            "acceptance": {"pprb": accepted / K2},
            "accept_counts": {"pprb": accepted},
            "proposal_counts": {"pprb": K2},
        }
    )
    out = chain.take(idx, meta=meta)
    out.columns["draw_index"] = idx
    return out


# ---------------------------------------------------------------------------
# Stage 3
# ---------------------------------------------------------------------------


def run_stage3(chain2: Chain, n0_sampler, n: int, workers: int = 1, seed: int = 0) -> Chain:
    """Attach undetected-count draws: N0 from its full conditional, N = n + N0."""
    vals = _indexed_eval(
        chain2.columns, n0_sampler, seed, _STREAM_STAGE3, chain2.K, workers, "N0 sampling"
    )
    n0 = np.array(vals, dtype=np.int64)
    columns = dict(chain2.columns)
    columns["N0"] = n0
    columns["N"] = n + n0
    meta = dict(chain2.meta)
    meta["stage"] = 3
    return Chain(columns=columns, meta=meta)


# ---------------------------------------------------------------------------
# Summaries
# ---------------------------------------------------------------------------


def ess_batch_means(x: np.ndarray) -> float:
    """Effective sample size from batch means with floor(sqrt(K)) batches."""
    x = np.asarray(x, dtype=float)
    K = x.size
    s2 = float(np.var(x, ddof=1))
    if s2 == 0.0:
        return float(K)
    nb = int(math.floor(math.sqrt(K)))
    b = K // nb
    means = x[K - nb * b :].reshape(nb, b).mean(axis=1)
    asym_var = b * float(np.var(means, ddof=1))
    if asym_var == 0.0:
        return float(K)
    return K * s2 / asym_var


def summarize(chain: Chain, columns: list | None = None) -> dict:
    """Posterior summary per column: moments, quantiles, ESS, integer PMFs."""
    if chain.K < 10:
        raise ValueError(f"need at least 10 draws to summarize, got {chain.K}")
    if columns is None:
        columns = [name for name, col in chain.columns.items() if col.ndim == 1]
    out = {"K": chain.K, "columns": {}, "pmf": {}}
    for name in columns:
        col = chain.columns[name]
        if col.ndim != 1:
            continue
        x = col.astype(float)
        q = np.quantile(x, [0.025, 0.5, 0.975])
        out["columns"][name] = {
            "mean": float(x.mean()),
            "sd": float(x.std(ddof=1)),
            "q025": float(q[0]),
            "q50": float(q[1]),
            "q975": float(q[2]),
            "ess": ess_batch_means(x),
        }
        if np.issubdtype(col.dtype, np.integer):
            values, freq = np.unique(col, return_counts=True)
            out["pmf"][name] = {int(v): float(c / col.size) for v, c in zip(values, freq)}
    return out


# ---------------------------------------------------------------------------
# Chain files: CSV of draws plus a JSON metadata sidecar
# ---------------------------------------------------------------------------


def _expanded_frame(chain: Chain) -> pd.DataFrame:
    cols = {}
    for name, arr in chain.columns.items():
        if arr.ndim == 1:
            cols[name] = arr
        else:
            for j in range(arr.shape[1]):
                cols[f"{name}_{j + 1}"] = arr[:, j]
    return pd.DataFrame(cols)


def meta_path(path) -> str:
    return str(path) + ".meta.json"


def save_chain(chain: Chain, path) -> None:
    frame = _expanded_frame(chain)
    frame.to_csv(path, index=False, float_format="%.17g")
    meta = dict(chain.meta)
    meta["columns"] = {
        name: (1 if arr.ndim == 1 else int(arr.shape[1])) for name, arr in chain.columns.items()
    }
    meta["dtypes"] = {name: str(arr.dtype) for name, arr in chain.columns.items()}
    with open(meta_path(path), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_chain(path) -> Chain:
    with open(meta_path(path), "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    frame = pd.read_csv(path)
    dims = meta.pop("columns")
    dtypes = meta.pop("dtypes", {})
    columns = {}
    for name, dim in dims.items():
        dtype = np.dtype(dtypes.get(name, "float64"))
        if dim == 1:
            columns[name] = frame[name].to_numpy().astype(dtype)
        else:
            block = [frame[f"{name}_{j + 1}"].to_numpy() for j in range(dim)]
            columns[name] = np.column_stack(block).astype(dtype)
    return Chain(columns=columns, meta=meta)


def default_workers() -> int:
    env = os.environ.get("RECAP_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1
