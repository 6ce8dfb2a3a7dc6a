"""Mechanical checks of the exact solution and of the numerical solver.

Nothing here re-proves anything; each check evaluates the relevant identity
or inequality numerically and reports how far from it the numbers are.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import model
from .model import (
    DomainError,
    ModelParams,
    Region,
    State,
    boundary_f,
    boundary_f_inverse,
    classify_region,
    closed_form_K,
    closed_form_P,
    q2,
    survival_kernel,
)
from .quadrature import QuadratureConfig, integrate
from .search import maximize
from .solver import SolutionGrid


@dataclass(frozen=True)
class ResidualReport:
    state: State
    lhs: float
    rhs: float
    residual: float


@dataclass(frozen=True)
class BoundaryEstimate:
    t: float
    x_detected: float
    x_analytic: float
    gap: float


@dataclass
class DerivativeReport:
    passed: bool
    min_derivative: float
    n_checked: int
    y: np.ndarray = field(repr=False)
    derivative: np.ndarray = field(repr=False)


@dataclass
class MonotoneReport:
    passed: bool
    n_pairs: int
    min_slope_r1: float
    max_slope_r1: float
    min_slope_r2: float
    max_slope_r2: float
    numeric_decreases: int | None = None


def _params(params):
    return params if isinstance(params, ModelParams) else ModelParams(params)


# ------------------------------------------------------------ fixed-point residual


def residual_check(P_fn, x, t, params, quad: QuadratureConfig | None = None,
                   n_scan=33, y_tol=1e-8):
    """Evaluate both sides of the survival integral equation for candidate ``P_fn``.

    ``P_fn(x, t)`` must accept numpy arrays.  The right side
    ``e^{-t} (1 + int_0^t max_y a(y) P(x - y, s) e^s ds)`` is integrated by
    adaptive Gauss-Kronrod in ``s``; the inner maximum uses a ``y`` scan plus
    golden-section refinement.  ``x`` and ``t`` may be arrays, in which case
    all states are integrated together and a list of reports is returned.
    """
    p = _params(params)
    xs, ts = np.broadcast_arrays(np.atleast_1d(np.asarray(x, dtype=float)),
                                 np.atleast_1d(np.asarray(t, dtype=float)))
    xs = xs.ravel()
    ts = ts.ravel()
    if np.any(xs < 0) or np.any(ts < 0):
        raise DomainError("residual_check needs x >= 0 and t >= 0")

    def outer(s, owner):
        xo = xs[owner]

        def g(y):
            y = np.minimum(y, xo[:, None])
            rest = np.maximum(xo[:, None] - y, 0.0)
            ss = np.broadcast_to(s[:, None], y.shape)
            return np.asarray(survival_kernel(y, p)) * np.asarray(P_fn(rest, ss))

        _, best = maximize(g, np.zeros_like(xo), xo, n_scan=n_scan, tol=y_tol)
        return best * np.exp(s)

    integral, _ = integrate(outer, np.zeros_like(ts), ts, quad)
    rhs = np.exp(-ts) * (1.0 + integral)
    lhs = np.asarray(P_fn(xs, ts), dtype=float).reshape(xs.shape)
    reports = [ResidualReport(State(float(a), float(b)), float(l), float(r), float(abs(l - r)))
               for a, b, l, r in zip(xs, ts, lhs, rhs)]
    if np.ndim(x) == 0 and np.ndim(t) == 0:
        return reports[0]
    return reports


def closed_form_residual(x, t, params, quad: QuadratureConfig | None = None):
    """Residual of the exact solution; states must lie in R1 or R2."""
    p = _params(params)
    codes = np.atleast_1d(classify_region(x, t, p))
    if np.any(codes == Region.OUTSIDE):
        raise DomainError("the closed form is only a candidate solution on R1 and R2")
    return residual_check(lambda a, b: closed_form_P(a, b, p, quad), x, t, p, quad)


# ------------------------------------------------------------ boundary detection


def _kstar_column(grid: SolutionGrid, t):
    spec = grid.spec
    if not (0 < t <= spec.t_max):
        raise DomainError(f"t must lie in (0, {spec.t_max}]")
    ft = t / spec.dt
    j = min(int(ft), spec.nt - 2)
    w = ft - j
    if w == 0.0:
        return grid.kstar[:, j]
    return (1.0 - w) * grid.kstar[:, j] + w * grid.kstar[:, j + 1]


def boundary_detect(grid: SolutionGrid, t, tol=None) -> BoundaryEstimate:
    """Largest grid ``x`` at time ``t`` where the solver spends (within ``tol``) everything.

    The spend-it-all set is an interval starting at 0, so bisection on the
    predicate ``x - kstar(x, t) <= tol`` finds its right end.  ``tol``
    defaults to half a grid step.
    """
    tol = 0.5 * grid.spec.dx if tol is None else tol
    col = _kstar_column(grid, t)
    x = grid.x
    spends_all = x - col <= tol
    analytic = float(boundary_f(t, grid.params))
    if not spends_all[0]:
        detected = 0.0
    elif spends_all[-1]:
        detected = float(x[-1])
    else:
        lo, hi = 0, x.size - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if spends_all[mid]:
                lo = mid
            else:
                hi = mid
        detected = float(x[lo])
    return BoundaryEstimate(float(t), detected, analytic, abs(detected - analytic))


# ------------------------------------------------------------ interior derivative


def _fd_derivative(fn, y, lo, hi, h):
    d = np.empty_like(y)
    central = (y - h >= lo) & (y + h <= hi)
    fwd = ~central & (y - h < lo)
    bwd = ~central & ~fwd
    yc, hc = y[central], h[central]
    d[central] = (fn(yc + hc) - fn(yc - hc)) / (2 * hc)
    yf, hf = y[fwd], h[fwd]
    d[fwd] = (-3 * fn(yf) + 4 * fn(yf + hf) - fn(yf + 2 * hf)) / (2 * hf)
    yb, hb = y[bwd], h[bwd]
    d[bwd] = (3 * fn(yb) - 4 * fn(yb - hb) + fn(yb - 2 * hb)) / (2 * hb)
    return d


def interior_derivative(x, s, params, n_samples=50, quad=None, step_scale=1e-5):
    """Finite-difference derivative in ``y`` of a(y) q2(x - y, s) on [0, x - f_u(s)].

    Central differences with step ``step_scale * max(1, |y|)``; second-order
    one-sided stencils where the central one would leave the interval.
    Returns ``(y, derivative)``; both empty when the interval is empty.
    """
    p = _params(params)
    quad = quad or QuadratureConfig(abs_tol=1e-14, rel_tol=1e-14, max_subdivisions=200)
    y_max = x - float(boundary_f(s, p))
    if y_max <= 0:
        return np.empty(0), np.empty(0)

    def g2(y):
        y = np.clip(y, 0.0, y_max)
        return np.asarray(survival_kernel(y, p)) * np.asarray(q2(x - y, s, p, quad))

    y = np.linspace(0.0, y_max, n_samples)
    h = step_scale * np.maximum(1.0, np.abs(y))
    h = np.minimum(h, y_max / 4)
    return y, _fd_derivative(g2, y, 0.0, y_max, h)


def check_interior_derivative_positive(x, s, params, n_samples=50, quad=None,
                                       slack=1e-8) -> DerivativeReport:
    """Spot-check that firing more at (x, s) helps while the rest stays past the boundary."""
    y, d = interior_derivative(x, s, params, n_samples, quad)
    if y.size == 0:
        return DerivativeReport(True, float("inf"), 0, y, d)
    return DerivativeReport(bool(np.all(d > -slack)), float(d.min()), int(y.size), y, d)


# ------------------------------------------------------------ monotonicity of K


def check_monotone_K_in_x(params, t_samples, x_samples=None, n_x=1000,
                          grid: SolutionGrid | None = None) -> MonotoneReport:
    """Closed-form K must increase strictly in x on R1 and R2 at every sampled t.

    With ``grid``, numeric kstar columns are scanned too and the number of
    decreases is reported without affecting ``passed``.
    """
    p = _params(params)
    passed = True
    pairs = 0
    slopes = {Region.R1: [], Region.R2: []}
    for t in np.atleast_1d(np.asarray(t_samples, dtype=float)):
        f = float(boundary_f(t, p))
        xs = (np.linspace(0.0, 2.0 * f, n_x) if x_samples is None
              else np.sort(np.asarray(x_samples, dtype=float)))
        xs = xs[xs <= 2.0 * f]
        k = np.asarray(closed_form_K(xs, t, p))
        dk = np.diff(k)
        passed &= bool(np.all(dk > 0))
        pairs += dk.size
        dxs = np.diff(xs)
        both = np.asarray(classify_region(xs, t, p))
        for reg in (Region.R1, Region.R2):
            same = (both[:-1] == reg) & (both[1:] == reg) & (dxs > 0)
            slopes[reg].extend((dk[same] / dxs[same]).tolist())
    numeric = None
    if grid is not None:
        numeric = int(np.sum(np.diff(grid.kstar, axis=0) < -1e-12))

    def ext(vals, fn):
        return float(fn(vals)) if vals else float("nan")

    return MonotoneReport(passed, pairs,
                          ext(slopes[Region.R1], np.min), ext(slopes[Region.R1], np.max),
                          ext(slopes[Region.R2], np.min), ext(slopes[Region.R2], np.max),
                          numeric)


# ------------------------------------------------------------ u -> 0 limits


LIMIT_OPS = {
    "survival_kernel": lambda p, y: model.survival_kernel(y, p),
    "growth_factor": lambda p, s: model.growth_factor(s, p),
    "boundary_f": lambda p, t: model.boundary_f(t, p),
    "boundary_f_inverse": lambda p, x: model.boundary_f_inverse(x, p),
    "closed_form_K": lambda p, x, t: model.closed_form_K(x, t, p),
    "closed_form_P": lambda p, x, t: model.closed_form_P(x, t, p),
    "g1": lambda p, y, s, x: model.g1(y, s, x, p),
    "q_integrand": lambda p, y, s: model.q_integrand(y, s, p),
    "q2": lambda p, y, s: model.q2(y, s, p),
}


def check_u_zero_limit(op_id, inputs, eps=1e-8):
    """Max |op(u=eps) - op(u=0)| over the given keyword inputs."""
    if not (0 < eps <= 1e-6):
        raise DomainError("eps must lie in (0, 1e-6]")
    op = LIMIT_OPS[op_id]
    small = np.asarray(op(ModelParams(eps), **inputs), dtype=float)
    zero = np.asarray(op(ModelParams(0.0), **inputs), dtype=float)
    return float(np.max(np.abs(small - zero)))


# ------------------------------------------------------------ sampling helpers


def sample_band_states(params, n, rng, t_range=(0.05, 5.0), regions=(Region.R1, Region.R2)):
    """Random states from the requested regions (x uniform on (0, 2 f_u(t)])."""
    p = _params(params)
    t = rng.uniform(*t_range, size=n)
    f = np.asarray(boundary_f(t, p))
    want = set(int(r) for r in regions)
    if want == {int(Region.R1)}:
        x = f * rng.uniform(0.0, 1.0, size=n)
    elif want == {int(Region.R2)}:
        x = f * (1.0 + rng.uniform(0.0, 1.0, size=n))
    else:
        x = 2.0 * f * rng.uniform(0.0, 1.0, size=n)
    return x, t


# ------------------------------------------------------------ report


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""


@dataclass
class VerificationReport:
    u: float
    checks: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def add(self, name, value, threshold, passed=None, detail=""):
        ok = value <= threshold if passed is None else passed
        self.checks.append(CheckResult(name, bool(ok), float(value), float(threshold), detail))

    def to_json(self):
        return json.dumps({"u": self.u, "passed": self.passed,
                           "checks": [asdict(c) for c in self.checks]}, indent=2)

    def to_text(self):
        lines = [f"verification for u={self.u:g}"]
        for c in self.checks:
            mark = "PASS" if c.passed else "FAIL"
            extra = f" ({c.detail})" if c.detail else ""
            lines.append(f"  [{mark}] {c.name}: {c.value:.3e} <= {c.threshold:.3e}{extra}")
        lines.append("all checks passed" if self.passed else "some checks FAILED")
        return "\n".join(lines)


def run_verification(params, grid: SolutionGrid | None = None, quick=False, seed=0,
                     quad: QuadratureConfig | None = None) -> VerificationReport:
    """Run the verification battery for one ``u``.

    ``grid`` (if given) enables the solver-based checks; ``quick`` shrinks
    sample counts for CI smoke runs.
    """
    p = _params(params)
    rng = np.random.default_rng(seed)
    rep = VerificationReport(p.u)
    n_states = 10 if quick else 100

    x, t = sample_band_states(p, n_states, rng)
    res = closed_form_residual(x, t, p, quad)
    rep.add("fixed-point residual (closed form)", max(r.residual for r in res), 1e-6,
            detail=f"{n_states} states")

    tt = np.linspace(0.0, 10.0, 101)
    dev = np.max(np.abs(np.asarray(closed_form_P(0.0, tt, p)) - np.exp(-p.v * tt)))
    rep.add("x=0 survival law", dev, 1e-12)

    tb = rng.uniform(0.05, 5.0, size=n_states)
    xb = np.asarray(boundary_f(tb, p))
    inv = np.asarray(boundary_f_inverse(xb, p))
    splice = np.max(np.abs(np.asarray(model.q_integrand(xb, inv, p))
                           - np.asarray(survival_kernel(xb, p)) * np.exp(p.u * inv)))
    rep.add("q splice continuity", splice, 1e-10)
    r1 = 1.0 + np.asarray(survival_kernel(xb, p)) * np.asarray(model.growth_factor(tb, p))
    r2 = np.asarray(model._q2_many(xb, tb, p, quad))
    rep.add("P branch continuity", float(np.max(np.abs(np.exp(-tb) * (r1 - r2)))), 1e-8)

    n_deriv = 5 if quick else 50
    worst = np.inf
    xr, tr = sample_band_states(p, n_deriv, rng, regions=(Region.R2,))
    for xi, ti in zip(xr, tr):
        s = rng.uniform(float(boundary_f_inverse(xi, p)), ti)
        worst = min(worst, check_interior_derivative_positive(xi, s, p, n_samples=50).min_derivative)
    rep.add("interior derivative positive", -worst, 1e-8, passed=worst > -1e-8,
            detail=f"min derivative {worst:.3e}")

    mono = check_monotone_K_in_x(p, np.linspace(0.1, 5.0, 10), grid=grid)
    rep.add("closed-form K strictly increasing in x", 0.0 if mono.passed else 1.0, 0.0,
            passed=mono.passed,
            detail=f"R1 slopes [{mono.min_slope_r1:.6f}, {mono.max_slope_r1:.6f}], "
                   f"R2 slopes [{mono.min_slope_r2:.6f}, {mono.max_slope_r2:.6f}]")

    if grid is not None:
        dx = grid.spec.dx
        for tb in (0.25, 0.5, 1.0, 2.0, 4.0):
            if tb <= grid.spec.t_max:
                est = boundary_detect(grid, tb)
                rep.add(f"spend-it-all boundary gap at t={tb:g}", est.gap, 2 * dx,
                        detail=f"detected {est.x_detected:.6f}, f_u(t) {est.x_analytic:.6f}")
        err_p, err_k, viol = solver_agreement(grid)
        rep.add("solver vs closed-form P", err_p, 1e-4)
        rep.add("solver vs closed-form K", err_k, 2 * dx)
        rep.add("K < x - 2dx beyond f_u(t) + 4dx", viol, 0, detail="violations")
        if mono.numeric_decreases is not None:
            rep.add("numeric kstar decreases in x (informational)", mono.numeric_decreases,
                    np.inf, passed=True)
    return rep


def solver_agreement(grid: SolutionGrid, quad: QuadratureConfig | None = None):
    """Max |P_num - P|, max |K_num - K| over R1 and R2 nodes (t > 0), and the
    number of nodes with x >= f_u(t) + 4dx where kstar >= x - 2dx."""
    p = grid.params
    X, T = np.meshgrid(grid.x, grid.t[1:], indexing="ij")
    f = np.asarray(boundary_f(T, p))
    band = X <= 2.0 * f
    pn = grid.p[:, 1:][band]
    kn = grid.kstar[:, 1:][band]
    err_p = float(np.max(np.abs(pn - np.asarray(closed_form_P(X[band], T[band], p, quad)))))
    err_k = float(np.max(np.abs(kn - np.asarray(closed_form_K(X[band], T[band], p)))))
    dx = grid.spec.dx
    beyond = X >= f + 4 * dx
    viol = int(np.sum(grid.kstar[:, 1:][beyond] >= X[beyond] - 2 * dx))
    return err_p, err_k, viol
