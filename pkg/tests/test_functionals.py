import math
import random
from fractions import Fraction

import numpy as np
import pytest
from scipy import integrate

from gkdv_lab.errors import ContractError
from gkdv_lab.functionals import (
    CSV_HEADER,
    NormReport,
    StrichartzAccumulator,
    canonical_pairs,
    energy,
    fmt,
    interval_increments,
    is_admissible,
    mass,
    mixed_norm_xt,
    sobolev_norm,
    threshold_check,
)
from gkdv_lab.ground_state import ground_state_functionals, ground_state_profile
from gkdv_lab.spectral import Field, Grid1D, airy_propagate, critical_exponent, fractional_derivative


def gaussian(grid, width=1.0):
    return Field(grid, np.exp(-((grid.x / width) ** 2)))


def test_mass_and_energy_of_zero():
    z = Grid1D(32, 5.0).zeros()
    assert mass(z) == 0.0 and energy(z, 5) == 0.0


def test_mass_of_sine():
    g = Grid1D(64, 2 * np.pi)
    assert mass(Field(g, np.sin(g.x))) == pytest.approx(np.pi, rel=1e-14)


def test_mass_of_q_k4_against_quadrature():
    oracle, _ = integrate.quad(lambda x: ground_state_profile(x, 4) ** 2, -60, 60,
                               epsabs=1e-13, epsrel=1e-12, limit=200, points=[0.0])
    assert oracle == pytest.approx(math.sqrt(3) * math.pi / 2, rel=1e-10)
    g = Grid1D(2048, 80.0)
    assert mass(Field(g, ground_state_profile(g.x, 4))) == pytest.approx(oracle, rel=1e-10)


@pytest.mark.parametrize("k", [4, 5, 6, 8])
def test_energy_mass_ratio_of_q(k):
    g = Grid1D(4096, 100.0)
    q = Field(g, ground_state_profile(g.x, k))
    m, e = mass(q), energy(q, k)
    if k == 4:
        assert abs(e) <= 1e-8
    assert e / m == pytest.approx((k - 4) / (k + 4), abs=1e-6)


def test_energy_quadrature_oracle_k5():
    # independent quadrature of the energy density with the analytic derivative
    k = 5

    def dq(x):
        h = 1e-5
        return (ground_state_profile(x + h, k) - ground_state_profile(x - h, k)) / (2 * h)

    dens = lambda x: dq(x) ** 2 - 2 / (k + 2) * ground_state_profile(x, k) ** (k + 2)
    oracle, _ = integrate.quad(dens, -50, 50, limit=400, epsabs=1e-12)
    g = Grid1D(4096, 100.0)
    assert energy(Field(g, ground_state_profile(g.x, k)), k) == pytest.approx(oracle, rel=1e-6)


def test_sobolev_norm_of_sine():
    g = Grid1D(64, 2 * np.pi)
    f = Field(g, np.sin(g.x))
    for s in (-0.5, 0.0, 0.1, 1.0, 2.0):
        assert sobolev_norm(f, s) == pytest.approx(math.sqrt(math.pi), rel=1e-14)


def test_sobolev_zero_is_sqrt_mass_on_mean_zero():
    g = Grid1D(256, 20.0)
    f = Field(g, g.x * np.exp(-g.x**2))
    assert sobolev_norm(f, 0) == pytest.approx(math.sqrt(mass(f)), rel=1e-13)


def test_sobolev_norm_matches_physical_space():
    g = Grid1D(512, 30.0)
    f = gaussian(g)
    s = 0.3
    direct = math.sqrt(np.sum(fractional_derivative(f, s).values ** 2) * g.dx)
    assert sobolev_norm(f, s) == pytest.approx(direct, rel=1e-12)


# -- admissibility ----------------------------------------------------------


def test_admissible_examples():
    assert is_admissible(Fraction(15, 2), 15, 6)
    assert is_admissible(9, 9, 6)
    assert not is_admissible(5, 10, 5)
    assert is_admissible("25/4", "25/2", 5)


def test_admissible_rejects_nonpositive():
    with pytest.raises(ContractError):
        is_admissible(0, 3, 5)


@pytest.mark.parametrize("k", [5, 6, 8])
def test_canonical_pairs_are_admissible(k):
    p1, p2, p3 = canonical_pairs(k)
    assert is_admissible(p1[0], p1[1], k)
    assert is_admissible(p3[0], p3[1], k)
    assert p2 == (5, 10, Fraction(k - 4, 2 * k))
    assert p3[2] == Fraction(2, 3 * k)


def test_random_violations_rejected():
    rng = random.Random(7)
    for k in (5, 6, 8):
        n = 0
        while n < 10:
            p, q = Fraction(rng.randint(1, 60), rng.randint(1, 6)), Fraction(rng.randint(1, 60), rng.randint(1, 6))
            if 2 / p + 1 / q == Fraction(2, k):
                continue
            assert not is_admissible(p, q, k)
            n += 1


# -- space-time norms ---------------------------------------------------------


def test_constant_trajectory_is_separable():
    g = Grid1D(128, 20.0)
    f = gaussian(g)
    k = 5
    acc = StrichartzAccumulator(k, g)
    for t in np.linspace(0, 2.0, 11):
        acc.add(t, f)
    for p, q, s in canonical_pairs(k):
        pf, qf = float(p), float(q)
        ds = fractional_derivative(f, float(s)).values if s else f.values
        closed = 2.0 ** (1 / qf) * (np.sum(np.abs(ds) ** pf) * g.dx) ** (1 / pf)
        assert mixed_norm_xt(acc, p, q, s) == pytest.approx(closed, rel=1e-12)


def test_zero_trajectory():
    g = Grid1D(32, 5.0)
    acc = StrichartzAccumulator(5, g)
    acc.add(0.0, g.zeros())
    acc.add(1.0, g.zeros())
    assert all(v == 0 for v in acc.norms().values())


def test_airy_gaussian_matches_4x_time_oversampling():
    k = 5
    g = Grid1D(512, 40.0)
    f = gaussian(g)
    pair = canonical_pairs(k)[0]
    accs = []
    for n in (64, 256):
        acc = StrichartzAccumulator(k, g, tracked_pairs=[pair])
        for t in np.linspace(0, 1, n + 1):
            acc.add(float(t), airy_propagate(f, float(t)))
        accs.append(acc.norm(*pair))
    assert accs[0] == pytest.approx(accs[1], rel=1e-2)


def test_diagonal_pair_matches_direct_space_time_quadrature():
    k = 6
    g = Grid1D(256, 30.0)
    f = gaussian(g)
    p, q, s = canonical_pairs(k)[2]
    times = np.linspace(0, 0.5, 21)
    acc = StrichartzAccumulator(k, g, tracked_pairs=[(p, q, s)])
    slabs = []
    for t in times:
        u = airy_propagate(f, float(t))
        acc.add(float(t), u)
        slabs.append(np.abs(fractional_derivative(u, float(s)).values) ** float(q))
    slabs = np.array(slabs)
    direct = (np.sum(np.trapezoid(slabs, times, axis=0)) * g.dx) ** (1 / float(p))
    assert acc.norm(p, q, s) == pytest.approx(direct, rel=1e-12)


def test_mixed_norm_monotone_in_interval():
    g = Grid1D(256, 30.0)
    f = gaussian(g)
    acc = StrichartzAccumulator(5, g)
    last = None
    for t in np.linspace(0, 1, 9):
        acc.add(float(t), airy_propagate(f, float(t)))
        if len(acc.times) >= 2:
            vals = acc.norms()
            if last is not None:
                assert all(vals[key] >= last[key] for key in vals)
            last = vals


def test_accumulator_contracts():
    g = Grid1D(32, 5.0)
    acc = StrichartzAccumulator(5, g)
    acc.add(0.0, g.zeros())
    with pytest.raises(ContractError):
        acc.norm(*canonical_pairs(5)[0])  # one sample only
    with pytest.raises(ContractError):
        acc.add(0.0, g.zeros())
    acc.add(1.0, g.zeros())
    with pytest.raises(ContractError):
        acc.norm(4, 4, 0)


def test_interval_increments():
    g = Grid1D(128, 20.0)
    f = gaussian(g)
    acc = StrichartzAccumulator(5, g)
    pair = canonical_pairs(5)[0]
    for t in np.linspace(0, 2, 9):
        acc.add(float(t), f)
        if t in (1.0, 2.0):
            acc.record()
    inc = interval_increments(acc, pair, [0, 1, 2])
    cumulative = [h[1][pair] for h in acc.history]
    assert inc == pytest.approx([cumulative[0], cumulative[1] - cumulative[0]])


def test_summary_json_ready():
    g = Grid1D(32, 5.0)
    acc = StrichartzAccumulator(5, g, truncated=True)
    acc.add(0.0, g.zeros())
    acc.add(0.5, g.zeros())
    rows = acc.summary()
    assert rows[0]["pair"] == [6.25, 12.5, 0.0]
    assert all(r["truncation_flag"] for r in rows)


# -- reports and thresholds ---------------------------------------------------


def test_norm_report_row_and_validation():
    r = NormReport(0.1, 1.0, -0.5, 2.0, 1e-3, 0.25)
    assert r.row()[0] == "0.10000000000000001"
    assert len(r.row()) == len(CSV_HEADER)
    with pytest.raises(ContractError):
        NormReport(0.0, -1.0, 0.0, 0.0, 0.0)


def test_fmt_round_trips():
    for x in (0.1, 1 / 3, 1e-300, -2.5e17, math.pi):
        assert float(fmt(x)) == x


def _q_ratios(u0, k):
    """Direct evaluation of both threshold ratios with quadrature Q functionals."""
    s = critical_exponent(k)
    q = ground_state_functionals(k)
    m0 = mass(u0)
    v, dx = u0.values, u0.grid.dx
    # fourth-order periodic central difference
    du = (8 * (np.roll(v, -1) - np.roll(v, 1)) - (np.roll(v, -2) - np.roll(v, 2))) / (12 * dx)
    g0 = np.sum(du**2) * dx
    e0 = energy(u0, k)
    me = (e0 / q["energy"]) ** s * (m0 / q["mass"]) ** (1 - s)
    gm = (g0 / q["grad_sq"]) ** (s / 2) * (m0 / q["mass"]) ** ((1 - s) / 2)
    return me, gm


def test_threshold_half_q_below():
    g = Grid1D(4096, 100.0)
    u0 = Field(g, 0.5 * ground_state_profile(g.x, 5))
    rep = threshold_check(u0, 5)
    me, gm = _q_ratios(u0, 5)
    assert rep.below_threshold
    assert rep.me_product_ratio == pytest.approx(me, rel=1e-5)
    assert rep.grad_mass_ratio == pytest.approx(gm, rel=1e-5)


def test_threshold_q_is_boundary():
    g = Grid1D(4096, 100.0)
    rep = threshold_check(Field(g, ground_state_profile(g.x, 5)), 5)
    assert rep.me_product_ratio == pytest.approx(1.0, abs=1e-6)
    assert rep.grad_mass_ratio == pytest.approx(1.0, abs=1e-6)
    assert not rep.below_threshold


def test_threshold_negative_energy_flagged():
    g = Grid1D(2048, 60.0)
    rep = threshold_check(Field(g, 1.2 * ground_state_profile(g.x, 5)), 5)
    assert rep.negative_energy and not rep.below_threshold
    assert math.isnan(rep.me_product_ratio)
