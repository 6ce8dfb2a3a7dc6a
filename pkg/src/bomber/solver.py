"""Numerical solution of the survival integral equation on an (x, t) grid.

With ``Pbar = e^t P`` the equation becomes the family of ODEs

    d Pbar(x, t) / dt = max_{0 <= y <= x} a(y) Pbar(x - y, t),   Pbar(x, 0) = 1,

which is marched forward in ``t``.  The right-hand side at ``x`` only looks
at ammunition levels ``<= x``, so every grid column is computed from the
previous one alone.  The inner maximisation scans the ``y`` grid (where
``x - y`` falls on grid nodes) and refines the best cell by golden-section
search on a monotone cubic (PCHIP) interpolant of the current slice.
"""

from __future__ import annotations

import logging
import math
import os
import warnings
from dataclasses import dataclass

import numba
import numpy as np
from numba import njit, prange

from .model import T_CAP, DomainError, ModelParams, survival_kernel
from .search import maximize

log = logging.getLogger(__name__)

# numba falls back to another threading layer on its own; the notice is noise
warnings.filterwarnings("ignore", message="The TBB threading layer requires")

SCHEMES = ("rk4", "euler")
INTERPOLATIONS = ("pchip", "linear")
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class SolverError(ArithmeticError):
    """Non-finite values appeared while marching."""

    def __init__(self, step):
        super().__init__(f"non-finite value in time march at step {step}")
        self.step = step


@dataclass(frozen=True)
class GridSpec:
    x_max: float = 5.0
    t_max: float = 5.0
    nx: int = 2001
    nt: int = 2001
    scheme: str = "rk4"
    interpolation: str = "pchip"
    refine_tol: float = 1e-7

    def __post_init__(self):
        if not (self.x_max > 0 and self.t_max > 0):
            raise DomainError("x_max and t_max must be positive")
        if self.t_max > T_CAP:
            raise DomainError(f"t_max is capped at {T_CAP} (e^t overflows beyond)")
        if int(self.nx) != self.nx or int(self.nt) != self.nt or self.nx < 2 or self.nt < 2:
            raise DomainError("nx and nt must be integers >= 2")
        object.__setattr__(self, "scheme", self.scheme.lower())
        if self.scheme not in SCHEMES:
            raise DomainError(f"scheme must be one of {SCHEMES}")
        if self.interpolation not in INTERPOLATIONS:
            raise DomainError(f"interpolation must be one of {INTERPOLATIONS}")
        if not self.refine_tol > 0:
            raise DomainError("refine_tol must be positive")

    @property
    def dx(self):
        return self.x_max / (self.nx - 1)

    @property
    def dt(self):
        return self.t_max / (self.nt - 1)

    @property
    def x(self):
        return np.linspace(0.0, self.x_max, self.nx)

    @property
    def t(self):
        return np.linspace(0.0, self.t_max, self.nt)


@dataclass(frozen=True, eq=False)
class SolutionGrid:
    """Solved grid; ``pbar[i, j]`` and ``kstar[i, j]`` sit at ``(x[i], t[j])``."""

    spec: GridSpec
    params: ModelParams
    pbar: np.ndarray
    kstar: np.ndarray

    @property
    def x(self):
        return self.spec.x

    @property
    def t(self):
        return self.spec.t

    @property
    def p(self):
        return np.exp(np.log(self.pbar) - self.t[None, :])


# ---------------------------------------------------------------- numba kernels


@njit(cache=True)
def _pchip_slopes(y, h, out):
    n = y.shape[0]
    if n == 2:
        d = (y[1] - y[0]) / h
        out[0] = d
        out[1] = d
        return
    d_prev = (y[1] - y[0]) / h
    for k in range(1, n - 1):
        d_next = (y[k + 1] - y[k]) / h
        if d_prev * d_next <= 0.0:
            out[k] = 0.0
        else:
            out[k] = 2.0 / (1.0 / d_prev + 1.0 / d_next)
        d_prev = d_next
    out[0] = _pchip_edge((y[1] - y[0]) / h, (y[2] - y[1]) / h)
    out[n - 1] = _pchip_edge((y[n - 1] - y[n - 2]) / h, (y[n - 2] - y[n - 3]) / h)


@njit(cache=True)
def _pchip_edge(d0, d1):
    m = 0.5 * (3.0 * d0 - d1)
    if m * d0 <= 0.0:
        return 0.0
    if d0 * d1 < 0.0 and abs(m) > 3.0 * abs(d0):
        return 3.0 * d0
    return m


@njit(cache=True)
def _interp(y, slopes, h, z, linear):
    n = y.shape[0]
    if z <= 0.0:
        return y[0]
    r = z / h
    nearest = int(r + 0.5)
    # queries within round-off of a node return the node value exactly
    if abs(r - nearest) <= 4e-16 * max(1.0, r) and nearest <= n - 1:
        return y[nearest]
    j = int(r)
    if j >= n - 1:
        j = n - 2
    tau = (z - j * h) / h
    if tau >= 1.0:
        return y[j + 1]
    if linear:
        return y[j] + tau * (y[j + 1] - y[j])
    t2 = tau * tau
    t3 = t2 * tau
    return ((2.0 * t3 - 3.0 * t2 + 1.0) * y[j] + (t3 - 2.0 * t2 + tau) * h * slopes[j]
            + (3.0 * t2 - 2.0 * t3) * y[j + 1] + (t3 - t2) * h * slopes[j + 1])


@njit(cache=True)
def _interp_many(y, slopes, h, zs, linear):
    out = np.empty(zs.shape[0])
    for k in range(zs.shape[0]):
        out[k] = _interp(y, slopes, h, zs[k], linear)
    return out


@njit(cache=True)
def _maximand(y, xi, v, vals, slopes, h, linear):
    z = xi - y
    if z < 0.0:
        z = 0.0
    return (1.0 - v * math.exp(-y)) * _interp(vals, slopes, h, z, linear)


_BLOCK = 32


@njit(cache=True)
def _full_scan(i, vals, a_grid):
    best = -1.0
    kb = 0
    for k in range(i + 1):
        w = a_grid[k] * vals[i - k]
        if w >= best:
            best = w
            kb = k
    return best, kb


@njit(cache=True)
def _pruned_scan(i, vals, a_grid, run_max, guess):
    """Same result as ``_full_scan`` (largest maximising node), skipping hopeless blocks.

    For a block k in [lo, hi], a(k) <= a_grid[hi] and vals[i - k] <= run_max[i - lo],
    so a block whose bound falls below a known value cannot hold the maximum.
    """
    floor = -1.0
    for k in range(max(guess - 2, 0), min(guess + 2, i) + 1):
        floor = max(floor, a_grid[k] * vals[i - k])
    best = -1.0
    kb = i
    hi = i
    while hi >= 0:
        lo = max(hi - _BLOCK + 1, 0)
        if a_grid[hi] * run_max[i - lo] >= max(floor, best):
            for k in range(hi, lo - 1, -1):
                w = a_grid[k] * vals[i - k]
                if w > best:
                    best = w
                    kb = k
        hi = lo - 1
    return best, kb


@njit(cache=True)
def _best_allocation(i, vals, a_grid, h, v, linear, tol, slopes, run_max, guess):
    best, kb = _pruned_scan(i, vals, a_grid, run_max, guess)
    yb = kb * h
    if i == 0:
        return best, yb
    xi = i * h
    lo = max(kb - 1, 0) * h
    hi = min(kb + 1, i) * h
    c = hi - _INV_PHI * (hi - lo)
    d = lo + _INV_PHI * (hi - lo)
    fc = _maximand(c, xi, v, vals, slopes, h, linear)
    fd = _maximand(d, xi, v, vals, slopes, h, linear)
    while hi - lo > tol:
        if fc <= fd:
            lo = c
            c = d
            fc = fd
            d = lo + _INV_PHI * (hi - lo)
            fd = _maximand(d, xi, v, vals, slopes, h, linear)
        else:
            hi = d
            d = c
            fd = fc
            c = hi - _INV_PHI * (hi - lo)
            fc = _maximand(c, xi, v, vals, slopes, h, linear)
    yr = 0.5 * (lo + hi)
    fr = _maximand(yr, xi, v, vals, slopes, h, linear)
    if fr > best:
        return fr, yr
    return best, yb


@njit(cache=True, parallel=True)
def _rhs(vals, a_grid, h, v, linear, tol, slopes, run_max, guess, out_val, out_arg):
    n = vals.shape[0]
    if not linear:
        _pchip_slopes(vals, h, slopes)
    m = -np.inf
    for i in range(n):
        m = max(m, vals[i])
        run_max[i] = m
    # each i reads and writes only its own entries, so thread scheduling cannot change the result
    for i in prange(n):
        ii = np.int64(i)
        val, arg = _best_allocation(ii, vals, a_grid, h, v, linear, tol, slopes, run_max, guess[ii])
        out_val[ii] = val
        out_arg[ii] = arg
        guess[ii] = min(np.int64(round(arg / h)), ii)


@njit(cache=True)
def _march(pbar, kstar, a_grid, h, dt, v, rk4, linear, tol):
    """Rows of ``pbar``/``kstar`` are time levels."""
    nt, nx = pbar.shape
    slopes = np.zeros(nx)
    k1 = np.empty(nx)
    k2 = np.empty(nx)
    k3 = np.empty(nx)
    k4 = np.empty(nx)
    work = np.empty(nx)
    scratch = np.empty(nx)
    run_max = np.empty(nx)
    guess = np.arange(nx)
    pbar[0, :] = 1.0
    for j in range(nt - 1):
        cur = pbar[j]
        _rhs(cur, a_grid, h, v, linear, tol, slopes, run_max, guess, k1, kstar[j])
        if rk4:
            for i in range(nx):
                work[i] = cur[i] + 0.5 * dt * k1[i]
            _rhs(work, a_grid, h, v, linear, tol, slopes, run_max, guess, k2, scratch)
            for i in range(nx):
                work[i] = cur[i] + 0.5 * dt * k2[i]
            _rhs(work, a_grid, h, v, linear, tol, slopes, run_max, guess, k3, scratch)
            for i in range(nx):
                work[i] = cur[i] + dt * k3[i]
            _rhs(work, a_grid, h, v, linear, tol, slopes, run_max, guess, k4, scratch)
            for i in range(nx):
                pbar[j + 1, i] = cur[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        else:
            for i in range(nx):
                pbar[j + 1, i] = cur[i] + dt * k1[i]
        for i in range(nx):
            if not math.isfinite(pbar[j + 1, i]):
                return j + 1
    _rhs(pbar[nt - 1], a_grid, h, v, linear, tol, slopes, run_max, guess, k1, kstar[nt - 1])
    return -1


def _configure_threads():
    cap = os.environ.get("BOMBER_THREADS")
    if cap:
        numba.set_num_threads(max(1, min(int(cap), numba.config.NUMBA_NUM_THREADS)))


# ---------------------------------------------------------------- public API


def solve_integral_equation(params, spec: GridSpec | None = None) -> SolutionGrid:
    """March the transformed equation from t = 0 to ``spec.t_max``."""
    params = params if isinstance(params, ModelParams) else ModelParams(params)
    spec = spec or GridSpec()
    _configure_threads()
    x = spec.x
    a_grid = 1.0 - params.v * np.exp(-x)
    pbar = np.empty((spec.nt, spec.nx))
    kstar = np.empty((spec.nt, spec.nx))
    log.debug("solving u=%g on %dx%d grid (%s)", params.u, spec.nx, spec.nt, spec.scheme)
    bad = _march(pbar, kstar, a_grid, spec.dx, spec.dt, params.v, spec.scheme == "rk4",
                 spec.interpolation == "linear", spec.refine_tol)
    if bad >= 0:
        raise SolverError(bad)
    return SolutionGrid(spec, params, np.ascontiguousarray(pbar.T), np.ascontiguousarray(kstar.T))


def interpolate(values, x_query, x_max, method="pchip"):
    """Interpolate node values on a uniform grid over ``[0, x_max]``.

    PCHIP is monotone between nodes, so it never undershoots the smaller of
    two neighbouring node values.
    """
    values = np.ascontiguousarray(values, dtype=float)
    if values.ndim != 1 or values.size < 2:
        raise ValueError("need at least two node values")
    if method not in INTERPOLATIONS:
        raise ValueError(f"method must be one of {INTERPOLATIONS}")
    q = np.asarray(x_query, dtype=float)
    if np.any(q < 0) or np.any(q > x_max) or np.any(np.isnan(q)):
        raise DomainError(f"query outside [0, {x_max}]")
    h = x_max / (values.size - 1)
    slopes = np.zeros_like(values)
    linear = method == "linear"
    if not linear:
        _pchip_slopes(values, h, slopes)
    out = _interp_many(values, slopes, h, q.ravel(), linear).reshape(q.shape)
    return float(out) if out.ndim == 0 else out


def inner_max(x, pbar_slice, params, n_scan=1001, tol=1e-10):
    """Maximise y -> a(y) pbar_slice(x - y) over [0, x]; returns ``(y*, value)``.

    ``pbar_slice`` must accept numpy arrays.  Ties go to the largest ``y``.
    """
    params = params if isinstance(params, ModelParams) else ModelParams(params)
    if x < 0:
        raise DomainError("inner_max needs x >= 0")
    if x == 0:
        return 0.0, float(params.u * np.asarray(pbar_slice(np.zeros(1)))[0])

    def g(y):
        y = np.clip(y, 0.0, x)
        return np.asarray(survival_kernel(y, params)) * np.asarray(pbar_slice(x - y))

    y, val = maximize(g, [0.0], [float(x)], n_scan=n_scan, tol=tol)
    return float(y[0]), float(val[0])


def _bilinear(grid: SolutionGrid, field, x, t):
    spec = grid.spec
    x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
    if (np.any(x < 0) or np.any(x > spec.x_max) or np.any(t < 0) or np.any(t > spec.t_max)
            or np.any(np.isnan(x)) or np.any(np.isnan(t))):
        raise DomainError("state outside the solved grid")
    fx = x / spec.dx
    ft = t / spec.dt
    i = np.minimum(fx.astype(int), spec.nx - 2)
    j = np.minimum(ft.astype(int), spec.nt - 2)
    wx = fx - i
    wt = ft - j
    out = ((1 - wx) * (1 - wt) * field[i, j] + wx * (1 - wt) * field[i + 1, j]
           + (1 - wx) * wt * field[i, j + 1] + wx * wt * field[i + 1, j + 1])
    return out


def numeric_P(grid: SolutionGrid, x, t):
    """Survival probability read off the grid: e^{-t} times bilinear Pbar."""
    pbar = _bilinear(grid, grid.pbar, x, t)
    out = np.exp(np.log(pbar) - np.asarray(t, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def numeric_K(grid: SolutionGrid, x, t):
    """Optimal allocation read off the grid by bilinear interpolation of kstar."""
    out = _bilinear(grid, grid.kstar, x, t)
    return float(out) if np.ndim(out) == 0 else out
