"""Closed-form mathematics of the doubly-continuous Bomber Problem.

Enemies arrive as a rate-1 Poisson process over the remaining time ``t``.
Firing ``y`` units at an encounter survives it with probability
``a(y) = 1 - (1 - u) exp(-y)``.  On the spend-it-all region ``x <= f_u(t)``
and the band ``f_u(t) < x <= 2 f_u(t)`` the optimal allocation ``K`` and the
optimal survival probability ``P`` are known exactly; this module evaluates
them together with the auxiliary functions used to establish them.

Every function accepts scalars or numpy arrays (broadcast together) and
returns a float for scalar input.  ``u = 0`` is handled by its own branch
using the exact limiting formulas rather than by evaluating at tiny ``u``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .quadrature import QuadratureConfig, integrate

__all__ = [
    "DomainError",
    "UnsupportedRegionError",
    "ModelParams",
    "State",
    "Region",
    "QuadratureConfig",
    "survival_kernel",
    "growth_factor",
    "boundary_f",
    "boundary_f_inverse",
    "classify_region",
    "closed_form_K",
    "closed_form_P",
    "closed_form_Pbar",
    "unimodal_argmax",
    "g1",
    "q_integrand",
    "q2",
]

# largest t for which e^t is representable
T_CAP = 700.0


class DomainError(ValueError):
    """An argument lies outside the domain of the requested function."""


class UnsupportedRegionError(DomainError):
    """No closed form exists for the requested state (x > 2 f_u(t))."""


@dataclass(frozen=True)
class ModelParams:
    u: float
    v: float = field(init=False)

    def __post_init__(self):
        u = float(self.u)
        if not (0.0 <= u < 1.0):
            raise DomainError(f"u must satisfy 0 <= u < 1, got {self.u!r}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", 1.0 - u)


@dataclass(frozen=True)
class State:
    x: float
    t: float

    def __post_init__(self):
        if not (self.x >= 0 and self.t >= 0):
            raise DomainError(f"state needs x >= 0 and t >= 0, got ({self.x}, {self.t})")


class Region(enum.IntEnum):
    R1 = 1
    R2 = 2
    OUTSIDE = 3


def _out(arr):
    arr = np.asarray(arr)
    return float(arr) if arr.ndim == 0 else arr


def _params(params):
    return params if isinstance(params, ModelParams) else ModelParams(params)


def survival_kernel(y, params):
    """Probability of surviving one encounter when firing ``y`` units."""
    p = _params(params)
    y = np.asarray(y, dtype=float)
    if np.any(y < 0) or np.any(np.isnan(y)):
        raise DomainError("allocation y must be >= 0")
    return _out(1.0 - p.v * np.exp(-y))


def growth_factor(s, params):
    """(e^{su} - 1)/u, with limit ``s`` at u = 0."""
    p = _params(params)
    s = np.asarray(s, dtype=float)
    if p.u == 0.0:
        return _out(s)
    return _out(np.expm1(s * p.u) / p.u)


def boundary_f(t, params):
    """Spend-it-all boundary f_u(t); strictly decreasing from +inf to 0."""
    p = _params(params)
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise DomainError("boundary_f needs t > 0")
    with np.errstate(over="ignore"):
        if p.u == 0.0:
            return _out(np.log1p(1.0 / t))
        return _out(np.log1p(p.u / np.expm1(t * p.u)))


def boundary_f_inverse(x, params):
    """Time at which the boundary passes through ammunition level ``x``."""
    p = _params(params)
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("boundary_f_inverse needs x > 0")
    with np.errstate(over="ignore"):
        if p.u == 0.0:
            return _out(1.0 / np.expm1(x))
        return _out(np.log1p(p.u / np.expm1(x)) / p.u)


def classify_region(x, t, params, tol=0.0):
    """Region tag(s) of the state(s) ``(x, t)``.

    ``tol`` widens both boundaries (x <= f + tol is R1) for callers that
    want slack against round-off; the default uses exact comparisons.
    Scalars give a :class:`Region`, arrays an int array of Region values.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("classify_region needs x >= 0")
    f = np.asarray(boundary_f(t, params))
    codes = np.where(x <= f + tol, Region.R1, np.where(x <= 2.0 * f + tol, Region.R2, Region.OUTSIDE))
    if codes.ndim == 0:
        return Region(int(codes))
    return codes.astype(int)


def _regions_allow_t0(x, t, params):
    # f_u(0+) = +inf, so the t = 0 line belongs to R1
    x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
    if np.any(t < 0) or np.any(x < 0):
        raise DomainError("states need x >= 0 and t >= 0")
    if np.any(t > T_CAP):
        raise DomainError(f"t above {T_CAP} overflows e^t")
    codes = np.full(x.shape, int(Region.R1))
    pos = t > 0
    if np.any(pos):
        codes[pos] = classify_region(x[pos], t[pos], params)
    return x, t, codes


def closed_form_K(x, t, params):
    """Optimal allocation: x on R1, (x + f_u(t))/2 on R2."""
    x, t, codes = _regions_allow_t0(x, t, params)
    if np.any(codes == Region.OUTSIDE):
        raise UnsupportedRegionError("no closed form for K outside R2 (x > 2 f_u(t))")
    k = x.copy()
    r2 = codes == Region.R2
    if np.any(r2):
        k[r2] = 0.5 * (x[r2] + boundary_f(t[r2], params))
    return _out(k)


def q_integrand(y, s, params):
    """Integrand of the band-region survival integral."""
    p = _params(params)
    y = np.asarray(y, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(y < 0) or np.any(s < 0):
        raise DomainError("q_integrand needs y >= 0 and s >= 0")
    damp = np.exp(-0.5 * y)
    if p.u == 0.0:
        return _out((np.sqrt(s + 1.0) - damp * np.sqrt(s)) ** 2)
    em1 = np.expm1(s * p.u)
    return _out((np.sqrt(em1 + p.u) - p.v * damp * np.sqrt(em1)) ** 2 / p.u)


def _q2_many(y, s, params, quad):
    """1 + a(y)/(e^y - 1) + integral of q(y, .) from f^{-1}(y) to s, no domain checks."""
    p = _params(params)
    y = np.atleast_1d(np.asarray(y, dtype=float)).ravel()
    s = np.atleast_1d(np.asarray(s, dtype=float)).ravel()
    start = np.asarray(boundary_f_inverse(y, p), dtype=float).reshape(y.shape)
    # rounding can put s a few ulps below the boundary time; the integral is then ~0
    upper = np.maximum(s, start)
    vals, _ = integrate(lambda r, own: np.asarray(q_integrand(y[own], r, p)), start, upper, quad)
    return 1.0 + (1.0 - p.v * np.exp(-y)) / np.expm1(y) + vals


def q2(y, s, params, quad: QuadratureConfig | None = None):
    """Transformed survival value e^s P(y, s) on the band region, by quadrature."""
    y, s = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(s, dtype=float))
    if np.any(~(y > 0)):
        raise DomainError("q2 needs y > 0")
    start = np.asarray(boundary_f_inverse(y, params))
    if np.any(s < start * (1.0 - 1e-14)):
        raise DomainError("q2 needs s >= boundary_f_inverse(y)")
    return _out(_q2_many(y, s, params, quad).reshape(y.shape))


def closed_form_Pbar(x, t, params, quad: QuadratureConfig | None = None):
    """e^t P(x, t) on R1 and R2."""
    p = _params(params)
    x, t, codes = _regions_allow_t0(x, t, p)
    if np.any(codes == Region.OUTSIDE):
        raise UnsupportedRegionError("no closed form for P outside R2 (x > 2 f_u(t))")
    out = np.empty(x.shape)
    r1 = codes == Region.R1
    a = 1.0 - p.v * np.exp(-x)
    out[r1] = 1.0 + a[r1] * np.asarray(growth_factor(t[r1], p))
    r2 = ~r1
    if np.any(r2):
        out[r2] = _q2_many(x[r2], t[r2], p, quad)
    return _out(out)


def closed_form_P(x, t, params, quad: QuadratureConfig | None = None):
    """Optimal survival probability on R1 and R2."""
    pbar = np.asarray(closed_form_Pbar(x, t, params, quad))
    t = np.broadcast_to(np.asarray(t, dtype=float), pbar.shape)
    return _out(np.exp(np.log(pbar) - t))


def unimodal_argmax(x, B):
    """Maximiser over [0, x] of y -> a(y) (1 + B a(x - y)) (independent of u)."""
    x = np.asarray(x, dtype=float)
    B = np.asarray(B, dtype=float)
    if np.any(x < 0):
        raise DomainError("unimodal_argmax needs x >= 0")
    if np.any(~(B > 0)):
        raise DomainError("unimodal_argmax needs B > 0")
    y = 0.5 * (x + np.log1p(1.0 / B))
    return _out(np.clip(y, 0.0, x))


def g1(y, s, x, params):
    """a(y) [1 + a(x - y) (e^{su} - 1)/u]: value of firing y then spending the rest."""
    p = _params(params)
    y, s, x = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (y, s, x)))
    if np.any(y < 0) or np.any(y > x):
        raise DomainError("g1 needs 0 <= y <= x")
    if np.any(s < 0):
        raise DomainError("g1 needs s >= 0")
    a_y = 1.0 - p.v * np.exp(-y)
    a_rest = 1.0 - p.v * np.exp(-(x - y))
    return _out(a_y * (1.0 + a_rest * np.asarray(growth_factor(s, p))))
