from fractions import Fraction

import numpy as np
import pytest

from gkdv_lab.dynamics import (
    BlowupVerdict,
    SimState,
    SolverConfig,
    SplitStepper,
    dealias,
    int_power,
    run,
    run_refined,
    step,
)
from gkdv_lab.errors import ContractError, DomainOverflowError
from gkdv_lab.functionals import StrichartzAccumulator, canonical_pairs, interval_increments
from gkdv_lab.ground_state import ground_state_profile, soliton
from gkdv_lab.spectral import (
    Field,
    Grid1D,
    SpectralField,
    airy_propagate,
    critical_exponent,
    evaluate,
    forward_transform,
    rescale,
)


def small_q(grid, a=0.1, k=5):
    return Field(grid, a * ground_state_profile(grid.x, k))


def single_state(f, dt, k=5):
    return SimState(f, 0.0, dt, StrichartzAccumulator(k, f.grid))


# -- configuration and verdict contracts --------------------------------------


def test_config_rejects_subcritical_power():
    with pytest.raises(ContractError, match="k must be >= 4"):
        SolverConfig(k=3)


@pytest.mark.parametrize("kw", [
    {"dt_init": 0.0},
    {"dt_floor": 0.1, "dt_init": 0.01},
    {"cfl_safety": 1.5},
    {"dealias_pad": 2},
    {"norm_growth_cap": 0},
    {"report_every": 0},
])
def test_config_validation(kw):
    with pytest.raises(ContractError):
        SolverConfig(k=5, **kw)


def test_config_default_pad_and_round_trip():
    cfg = SolverConfig(k=6)
    assert cfg.dealias_pad == Fraction(4)
    back = SolverConfig.from_mapping(cfg.to_mapping())
    assert back == cfg
    with pytest.raises(ContractError):
        SolverConfig.from_mapping({"k": 5, "bogus": 1})


def test_verdict_invariants():
    with pytest.raises(ContractError):
        BlowupVerdict(True, 1.0, 1.0, 0.0, "completed")
    with pytest.raises(ContractError):
        BlowupVerdict(False, 1.0, 1.0, 0.0, "exploded")
    assert BlowupVerdict(False, 1.0, 1.0, 0.0, "dt-floor").inconclusive
    assert not BlowupVerdict(False, 1.0, 1.0, 0.0, "completed").inconclusive


# -- dealiasing -------------------------------------------------------------


def test_dealias_idempotent_and_keeps_low_modes():
    g = Grid1D(64, 10.0)
    rng = np.random.default_rng(3)
    f = Field(g, rng.normal(size=64))
    once = dealias(forward_transform(f), Fraction(7, 2), k=5)
    twice = dealias(once, Fraction(7, 2), k=5)
    assert np.array_equal(once.coeffs, twice.coeffs)
    m = np.abs(np.fft.fftfreq(64, d=1 / 64))
    c = forward_transform(f).coeffs
    assert np.array_equal(once.coeffs[m < 64 / 7], c[m < 64 / 7])
    assert not np.any(once.coeffs[m >= 64 / 7])


def test_dealias_rejects_small_pad():
    g = Grid1D(16, 1.0)
    with pytest.raises(ContractError):
        dealias(SpectralField(g, np.zeros(16, complex)), 2, k=5)


def test_high_mode_contributes_nothing_after_dealias():
    k, n = 5, 32
    g = Grid1D(n, 2 * np.pi)
    stepper = SplitStepper(g, SolverConfig(k=k))
    for M in range(1, n // 2):
        if stepper.mask[M] == 0:
            c = np.zeros(n // 2 + 1, complex)
            c[M] = -0.5j * n  # exact coefficients of sin(M x)
            assert not np.any(stepper.rhs(c))
    # a kept mode does act: sin(x)^6 has harmonics 2 and 4 inside the band
    assert np.abs(stepper.rhs(np.fft.rfft(np.sin(g.x)))[[2, 4]]).min() > 1e-3


def test_int_power():
    u = np.linspace(-1.3, 1.3, 11)
    for e in (1, 2, 5, 6, 9):
        assert np.allclose(int_power(u, e), u**e, rtol=1e-14, atol=0)


def test_dealiased_product_matches_direct_convolution():
    # band-limited field on n = 32; the exact coefficients of u^(k+1) come
    # from a direct convolution of the coefficient sequence
    k, n = 5, 32
    g = Grid1D(n, 2 * np.pi)
    cfg = SolverConfig(k=k)
    stepper = SplitStepper(g, cfg)
    rng = np.random.default_rng(11)
    kept = np.flatnonzero(stepper.mask)
    half = np.zeros(n // 2 + 1, complex)
    half[kept] = rng.normal(size=kept.size) + 1j * rng.normal(size=kept.size)
    half[0] = half[0].real
    full = np.zeros(2 * n, complex)  # coefficient of mode m stored at m + n
    for m in kept:
        full[n + m] = half[m]
        full[n - m] = np.conj(half[m])
    seq = full.copy()
    for _ in range(k):
        seq = np.convolve(seq, full)
    # the (k+1)-fold convolution is centred at index (k+1) * n
    centre = (k + 1) * n
    exact = np.array([seq[centre + m] for m in range(n // 2 + 1)]) / n**k
    u = np.fft.irfft(half, n=n)
    grid_product = np.fft.rfft(u ** (k + 1))
    assert np.allclose(grid_product[kept], exact[kept], rtol=0, atol=1e-11 * np.abs(exact).max())


# -- single steps -------------------------------------------------------------


def test_zero_field_is_fixed():
    g = Grid1D(64, 10.0)
    cfg = SolverConfig(k=5)
    out = step(single_state(g.zeros(), 1e-2), cfg)
    assert not np.any(out.field.values)
    assert out.time == pytest.approx(1e-2)


def test_linear_hook_matches_airy():
    g = Grid1D(512, 40.0)
    f = Field(g, np.exp(-g.x**2))
    cfg = SolverConfig(k=5, nonlinear=False, t_end=0.7, report_every=0.7)
    state, verdict, _ = run(f, cfg)
    assert verdict.reason == "completed"
    assert np.max(np.abs(state.field.values - airy_propagate(f, 0.7).values)) <= 1e-12


def _one_step_and_reference(dt):
    k = 5
    g = Grid1D(2048, 60.0)
    u0 = soliton(k, 1.0, g)
    cfg = SolverConfig(k=k)
    one = step(single_state(u0, dt), cfg).field
    s = step(step(single_state(u0, dt / 2), cfg), cfg)
    # Richardson estimate of the one-step error from step doubling
    estimate = 4.0 / 3.0 * (one - s.field).l2()
    exact_error = (one - soliton(k, 1.0, g, x0=dt)).l2()
    return estimate, exact_error


@pytest.mark.parametrize("dt", [1e-3, 1e-4])
def test_one_step_error_matches_richardson_estimate(dt):
    estimate, exact_error = _one_step_and_reference(dt)
    assert exact_error == pytest.approx(estimate, rel=0.1)


def test_one_step_error_is_third_order():
    big = _one_step_and_reference(1e-3)[1]
    small = _one_step_and_reference(1e-4)[1]
    assert 10**2.7 <= big / small <= 10**3.3


def test_one_step_on_soliton():
    _, exact_error = _one_step_and_reference(1e-3)
    assert exact_error <= 1e-7


def test_non_finite_step_is_rolled_back():
    g = Grid1D(64, 10.0)
    f = Field(g, 1e70 * np.exp(-g.x**2))
    cfg = SolverConfig(k=5)
    state = single_state(f, 1e-2)
    out = step(state, cfg)
    assert out.field is f and out.time == 0.0
    assert out.dt == pytest.approx(5e-3)
    assert out.events[-1][1] == "non-finite"


def test_step_below_floor_is_contract_error():
    g = Grid1D(64, 10.0)
    cfg = SolverConfig(k=5, dt_floor=1e-4)
    with pytest.raises(ContractError):
        step(single_state(g.zeros(), 1e-5), cfg)


def test_run_rejects_data_touching_the_edge():
    g = Grid1D(64, 10.0)
    with pytest.raises(DomainOverflowError):
        run(Field(g, np.ones(64)), SolverConfig(k=5))


# -- trajectories -------------------------------------------------------------


def test_conservation_small_data():
    g = Grid1D(1024, 60.0)
    cfg = SolverConfig(k=5, t_end=1.0, report_every=0.25, keep_snapshots=False)
    _, verdict, reports = run(small_q(g), cfg)
    assert verdict.reason == "completed"
    m0, e0 = reports[0].mass, reports[0].energy
    for r in reports:
        assert abs(r.mass - m0) <= 1e-10 * m0
        assert abs(r.energy - e0) <= 1e-6 * abs(e0)
    assert [r.time for r in reports] == [0.0, 0.25, 0.5, 0.75, 1.0]


def test_reports_are_ordered_and_streamed():
    g = Grid1D(256, 40.0)
    seen = []
    cfg = SolverConfig(k=5, t_end=0.3, report_every=0.1)
    state, _, reports = run(small_q(g), cfg, on_report=lambda r, f: seen.append((r.time, f)))
    assert [r.time for r in reports] == [t for t, _ in seen]
    assert all(a[0] < b[0] for a, b in zip(seen, seen[1:]))
    assert len(state.snapshots) == len(reports) == 4
    times = [e[0] for e in state.events]
    assert times == sorted(times)


def test_scaling_covariance():
    k, lam, t = 5, 2.0, 0.2
    g = Grid1D(1024, 60.0)
    u0 = Field(g, 0.3 * np.exp(-g.x**2))

    def evolve(f, t_end):
        cfg = SolverConfig(k=k, t_end=t_end, dt_init=t_end / 8, dt_floor=1e-10,
                           error_target=1e-9, report_every=t_end, keep_snapshots=False)
        return run(f, cfg)[0].field

    a = evolve(u0, t)
    b = evolve(rescale(u0, lam, k), t / lam**3)
    # lam^(2/k) a(lam x), read off the trigonometric interpolant of a
    y = lam * g.x
    inside = np.abs(y) < 0.5 * g.length
    pred = np.zeros(g.n_points)
    pred[inside] = lam ** (2 / k) * evaluate(a, y[inside])
    err = np.sqrt(np.sum((b.values - pred) ** 2) * g.dx)
    assert err <= 1e-5
    # the nonlinearity is visible at this amplitude
    linear = airy_propagate(u0, t)
    assert (a - linear).l2() > 20 * err


def test_small_data_disperses():
    k = 5
    g = Grid1D(1024, 80.0)
    cfg = SolverConfig(k=k, t_end=5.0, report_every=1.0, keep_snapshots=False)
    state, verdict, reports = run(small_q(g), cfg)
    assert verdict.reason == "completed" and not verdict.fired
    assert reports[-1].hsk_norm == pytest.approx(reports[0].hsk_norm, rel=1e-2)


def test_small_data_strichartz_increments_halve():
    k = 5
    g = Grid1D(1024, 80.0)
    cfg = SolverConfig(k=k, t_end=5.0, report_every=1.0, keep_snapshots=False)
    state, _, _ = run(small_q(g), cfg)
    inc = interval_increments(state.strichartz_acc, canonical_pairs(k)[0], [0, 1, 2, 3, 4, 5])
    assert all(b <= a / 2 for a, b in zip(inc, inc[1:])), inc


def test_small_data_strichartz_increments_decrease():
    k = 5
    g = Grid1D(1024, 80.0)
    cfg = SolverConfig(k=k, t_end=5.0, report_every=1.0, keep_snapshots=False)
    state, _, _ = run(small_q(g), cfg)
    inc = interval_increments(state.strichartz_acc, canonical_pairs(k)[0], [0, 1, 2, 3, 4, 5])
    assert all(b < a for a, b in zip(inc, inc[1:])), inc
    assert inc[-1] <= inc[0] / 2


def test_soliton_transport():
    k = 5
    g = Grid1D(2048, 60.0)
    dt = 2.5e-4
    cfg = SolverConfig(k=k, t_end=2.0, dt_init=dt, dt_floor=dt / 10, adaptive=False,
                       report_every=1.0, keep_snapshots=False)
    state, verdict, _ = run(soliton(k, 1.0, g), cfg)
    assert verdict.reason == "completed"
    assert (state.field - soliton(k, 1.0, g, x0=2.0)).l2() <= 1e-3


def test_run_refined_agrees_on_small_data():
    k = 5
    g = Grid1D(256, 40.0)
    cfg = SolverConfig(k=k, t_end=0.2, report_every=0.1, keep_snapshots=False)
    base, fine, agree, verdict = run_refined(small_q, g, cfg)
    assert agree and not verdict.fired
    assert fine[0].field.grid == g.refined(2)


def test_hs_norm_conserved_by_linear_flow():
    g = Grid1D(512, 40.0)
    f = Field(g, np.exp(-g.x**2))
    cfg = SolverConfig(k=5, nonlinear=False, t_end=1.0, report_every=0.5)
    _, verdict, reports = run(f, cfg)
    assert verdict.hs_growth_factor == pytest.approx(1.0, abs=1e-12)
    s = critical_exponent(5)
    assert {round(r.hsk_norm, 12) for r in reports} == {round(reports[0].hsk_norm, 12)}
    assert s == pytest.approx(0.1)
