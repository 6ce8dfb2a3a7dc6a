import logging
import math

import numpy as np
import pytest

from bomber.model import (
    DomainError,
    ModelParams,
    UnsupportedRegionError,
    boundary_f,
    closed_form_P,
)
from bomber.montecarlo import (
    ClosedForm,
    Fractional,
    GridInterpolated,
    SimConfig,
    SpendAll,
    estimate_survival,
    policy_name,
    result_row,
    simulate_batch,
    simulate_mission,
    stream_rng,
)
from bomber.solver import GridSpec, solve_integral_equation


class _FakeRng:
    """Deterministic stand-in that replays scripted gaps and uniforms."""

    def __init__(self, gaps, draws):
        self.gaps = list(gaps)
        self.draws = list(draws)

    def standard_exponential(self, n):
        return np.full(n, self.gaps.pop(0))

    def random(self, n):
        return np.full(n, self.draws.pop(0))


def test_no_encounter_before_deadline_survives():
    # first gap exceeds t: a uniform that would kill is never used
    rng = _FakeRng([5.0], [0.999999])
    assert simulate_mission(SpendAll(), 0.0, 2.0, 0.0, rng) is True


def test_u0_spend_all_second_encounter_fatal():
    # first encounter survived with all ammo spent, second one meets a(0) = 0
    rng = _FakeRng([0.5, 0.5], [0.0, 0.0])
    assert simulate_mission(SpendAll(), 1.0, 2.0, 0.0, rng) is False


def test_u0_spend_all_single_encounter_survives():
    rng = _FakeRng([0.5, 5.0], [0.0, 0.5])
    assert simulate_mission(SpendAll(), 1.0, 2.0, 0.0, rng) is True


@pytest.mark.parametrize("u", [0.0, 0.5])
def test_zero_ammo_law(u):
    t = 1.5
    res = estimate_survival(SpendAll(), 0.0, t, u, SimConfig(n_runs=100_000, seed=3))
    assert abs(res.p_hat - math.exp(-(1 - u) * t)) <= 4 * res.stderr
    assert closed_form_P(0.0, t, u) == pytest.approx(math.exp(-(1 - u) * t), abs=1e-12)


def test_closed_form_policy_r1_state():
    u, x, t = 0.3, 0.4, 2.0
    res = estimate_survival(ClosedForm(ModelParams(u)), x, t, u, SimConfig(n_runs=200_000, seed=1))
    assert abs(res.p_hat - closed_form_P(x, t, u)) <= 4 * res.stderr


def test_spend_all_not_better_than_optimal_beyond_band():
    u, t = 0.3, 1.0
    x = 3 * float(boundary_f(t, u))
    g = solve_integral_equation(u, GridSpec(x_max=x + 0.1, t_max=t, nx=201, nt=201))
    cfg = SimConfig(n_runs=100_000, seed=9)
    spend = estimate_survival(SpendAll(), x, t, u, cfg)
    best = estimate_survival(GridInterpolated(g), x, t, u, cfg)
    assert spend.p_hat <= best.p_hat + 4 * best.stderr


def test_deterministic_and_single_run():
    cfg = SimConfig(n_runs=1, seed=42)
    a = estimate_survival(Fractional(0.5), 1.0, 2.0, 0.3, cfg)
    b = estimate_survival(Fractional(0.5), 1.0, 2.0, 0.3, cfg)
    assert a == b and a.n_runs == 1 and a.survivors in (0, 1)


def test_worker_count_does_not_change_result(monkeypatch):
    cfg = SimConfig(n_runs=10_001, seed=5, n_streams=4)
    monkeypatch.setenv("BOMBER_THREADS", "1")
    a = estimate_survival(SpendAll(), 0.8, 2.0, 0.3, cfg)
    monkeypatch.setenv("BOMBER_THREADS", "4")
    b = estimate_survival(SpendAll(), 0.8, 2.0, 0.3, cfg)
    assert a == b


def test_streams_are_distinct():
    a = stream_rng(0, 0).random(4)
    b = stream_rng(0, 1).random(4)
    c = stream_rng(1, 0).random(4)
    assert not np.array_equal(a, b) and not np.array_equal(a, c)
    assert np.array_equal(a, stream_rng(0, 0).random(4))


@pytest.mark.parametrize("policy", [SpendAll(), Fractional(0.4), ClosedForm(ModelParams(0.3))])
def test_more_ammo_never_hurts_pathwise(policy):
    u, t = 0.3, 1.5
    f = float(boundary_f(t, u))
    xs = np.linspace(0.0, 2 * f, 6)
    outcomes = [simulate_batch(policy, x, t, u, stream_rng(17, 0), 5000) for x in xs]
    for lo, hi in zip(outcomes, outcomes[1:]):
        assert not np.any(lo & ~hi)


def test_ammo_nonincreasing_along_path():
    seen = []

    def spy(x, t):
        seen.append((np.array(x, copy=True), np.array(t, copy=True)))
        return 0.3 * np.asarray(x)

    simulate_mission(spy, 2.0, 20.0, 0.9, stream_rng(0, 0))
    ammo = [float(a[0]) for a, _ in seen]
    left = [float(b[0]) for _, b in seen]
    assert len(ammo) >= 2
    assert all(b <= a for a, b in zip(ammo, ammo[1:]))
    assert all(b < a for a, b in zip(left, left[1:]))


def test_out_of_range_policy_is_clamped(caplog):
    with caplog.at_level(logging.WARNING, logger="bomber.montecarlo"):
        res = estimate_survival(lambda x, t: 2 * np.asarray(x) + 1, 1.0, 1.0, 0.3,
                                SimConfig(n_runs=500))
    assert "clamped" in caplog.text
    ref = estimate_survival(SpendAll(), 1.0, 1.0, 0.3, SimConfig(n_runs=500))
    assert res == ref


def test_closed_form_outside_needs_grid():
    with pytest.raises(UnsupportedRegionError):
        ClosedForm(ModelParams(0.3))(9.0, 9.0)
    g = solve_integral_equation(0.3, GridSpec(x_max=2.0, t_max=4.0, nx=81, nt=81))
    y = ClosedForm(ModelParams(0.3), fallback=g)(2.0, 4.0)
    assert 0 < float(y) < 2.0


def test_config_and_policy_validation():
    with pytest.raises(DomainError):
        SimConfig(n_runs=0)
    with pytest.raises(DomainError):
        SimConfig(seed=-1)
    with pytest.raises(DomainError):
        Fractional(1.5)
    with pytest.raises(DomainError):
        simulate_batch(SpendAll(), -1.0, 1.0, 0.3, stream_rng(0, 0), 3)


def test_result_row():
    cfg = SimConfig(n_runs=1000, seed=2)
    res = estimate_survival(SpendAll(), 0.2, 1.0, 0.3, cfg)
    row = result_row(SpendAll(), 0.2, 1.0, 0.3, cfg, res)
    assert list(row) == ["policy", "x", "t", "u", "n_runs", "seed", "p_hat", "stderr", "analytic_P"]
    assert row["analytic_P"] == pytest.approx(closed_form_P(0.2, 1.0, 0.3))
    assert result_row(SpendAll(), 9.0, 9.0, 0.3, cfg, res)["analytic_P"] is None
    assert res.stderr == pytest.approx(math.sqrt(res.p_hat * (1 - res.p_hat) / 1000))
    assert policy_name(Fractional(0.25)) == "fractional(0.25)"
