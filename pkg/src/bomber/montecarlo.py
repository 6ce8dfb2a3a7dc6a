"""Monte Carlo missions against rate-1 Poisson enemy arrivals.

Each run draws, per encounter round, one Exp(1) inter-arrival time and one
uniform; the encounter is survived when the uniform falls below ``a(y)``.
Every run consumes exactly one pair of draws per round whether or not it is
still flying, so two estimates made with the same seed use common random
numbers run by run.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .model import (
    DomainError,
    ModelParams,
    Region,
    UnsupportedRegionError,
    classify_region,
    closed_form_K,
    closed_form_P,
)
from .solver import SolutionGrid, numeric_K

log = logging.getLogger(__name__)

_CLAMP_SLACK = 1e-12


# ------------------------------------------------------------ policies


@dataclass(frozen=True)
class SpendAll:
    name = "spend-all"

    def __call__(self, x, t):
        return np.asarray(x, dtype=float)


@dataclass(frozen=True)
class Fractional:
    c: float

    def __post_init__(self):
        if not 0.0 <= self.c <= 1.0:
            raise DomainError("fraction must lie in [0, 1]")

    @property
    def name(self):
        return f"fractional({self.c:g})"

    def __call__(self, x, t):
        return self.c * np.asarray(x, dtype=float)


@dataclass(frozen=True, eq=False)
class GridInterpolated:
    grid: SolutionGrid
    name = "grid"

    def __call__(self, x, t):
        return np.asarray(numeric_K(self.grid, x, t))


@dataclass(frozen=True, eq=False)
class ClosedForm:
    """Exact optimal allocation on R1 and R2.

    Beyond R2 there is no closed form: the allocation comes from ``fallback``
    when one is given, otherwise an :class:`UnsupportedRegionError` is raised.
    """

    params: ModelParams
    fallback: SolutionGrid | None = None
    name = "closed-form"

    def __call__(self, x, t):
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        x, t = np.broadcast_arrays(x, t)
        out = np.empty(x.shape)
        pos = t > 0
        outside = np.zeros(x.shape, dtype=bool)
        if np.any(pos):
            outside[pos] = np.asarray(classify_region(x[pos], t[pos], self.params)) == Region.OUTSIDE
        if np.any(outside):
            if self.fallback is None:
                raise UnsupportedRegionError("closed-form policy undefined beyond R2 and no grid given")
            out[outside] = numeric_K(self.fallback, x[outside], t[outside])
        inside = ~outside
        out[inside] = closed_form_K(x[inside], t[inside], self.params)
        return out


def policy_name(policy):
    return getattr(policy, "name", getattr(policy, "__name__", type(policy).__name__))


# ------------------------------------------------------------ simulation


@dataclass(frozen=True)
class SimConfig:
    n_runs: int = 100_000
    seed: int = 0
    n_streams: int = 1

    def __post_init__(self):
        if self.n_runs < 1 or self.n_streams < 1:
            raise DomainError("n_runs and n_streams must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class SimResult:
    p_hat: float
    stderr: float
    n_runs: int
    survivors: int


def stream_rng(seed, stream):
    """Counter-based generator for one stream: Philox keyed by (seed, stream)."""
    return np.random.Generator(np.random.Philox(key=[seed, stream]))


def _allocate(policy, x, t):
    y = np.asarray(policy(x, t), dtype=float)
    clipped = np.clip(y, 0.0, x)
    if np.any(np.abs(clipped - y) > _CLAMP_SLACK):
        log.warning("policy %s returned allocations outside [0, x]; clamped", policy_name(policy))
    return clipped


def simulate_batch(policy, x0, t0, params, rng, n):
    """Survival indicators for ``n`` missions started at ``(x0, t0)``."""
    p = params if isinstance(params, ModelParams) else ModelParams(params)
    if x0 < 0 or t0 < 0:
        raise DomainError("missions need x0 >= 0 and t0 >= 0")
    ammo = np.full(n, float(x0))
    left = np.full(n, float(t0))
    flying = np.ones(n, dtype=bool)
    survived = np.ones(n, dtype=bool)
    while flying.any():
        gap = rng.standard_exponential(n)
        draw = rng.random(n)
        left = left - gap
        flying &= left > 0
        idx = np.flatnonzero(flying)
        if idx.size == 0:
            break
        y = _allocate(policy, ammo[idx], left[idx])
        killed = draw[idx] >= 1.0 - p.v * np.exp(-y)
        ammo[idx] = np.maximum(ammo[idx] - y, 0.0)
        survived[idx[killed]] = False
        flying[idx[killed]] = False
    return survived


def simulate_mission(policy, x0, t0, params, rng) -> bool:
    """One mission; True when every encounter before time runs out is survived."""
    return bool(simulate_batch(policy, x0, t0, params, rng, 1)[0])


def _worker_count():
    cap = os.environ.get("BOMBER_THREADS")
    return max(1, int(cap)) if cap else 1


def estimate_survival(policy, x0, t0, params, cfg: SimConfig | None = None) -> SimResult:
    """Fraction of ``cfg.n_runs`` missions that survive.

    Runs are split into ``cfg.n_streams`` contiguous blocks, one generator per
    stream, so the result depends only on ``(seed, n_streams, n_runs)`` and not
    on how many worker threads execute the streams.
    """
    cfg = cfg or SimConfig()
    sizes = [cfg.n_runs // cfg.n_streams + (1 if k < cfg.n_runs % cfg.n_streams else 0)
             for k in range(cfg.n_streams)]

    def run(k):
        if sizes[k] == 0:
            return 0
        return int(simulate_batch(policy, x0, t0, params, stream_rng(cfg.seed, k), sizes[k]).sum())

    workers = min(_worker_count(), cfg.n_streams)
    if workers == 1:
        counts = [run(k) for k in range(cfg.n_streams)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            counts = list(pool.map(run, range(cfg.n_streams)))
    survivors = sum(counts)
    p_hat = survivors / cfg.n_runs
    return SimResult(p_hat, math.sqrt(p_hat * (1.0 - p_hat) / cfg.n_runs), cfg.n_runs, survivors)


def result_row(policy, x0, t0, params, cfg: SimConfig, result: SimResult):
    """Flat record for CSV/JSON export; ``analytic_P`` is None beyond R2."""
    p = params if isinstance(params, ModelParams) else ModelParams(params)
    try:
        analytic = float(closed_form_P(x0, t0, p))
    except UnsupportedRegionError:
        analytic = None
    return {
        "policy": policy_name(policy),
        "x": float(x0),
        "t": float(t0),
        "u": p.u,
        "n_runs": cfg.n_runs,
        "seed": cfg.seed,
        "p_hat": result.p_hat,
        "stderr": result.stderr,
        "analytic_P": analytic,
    }
