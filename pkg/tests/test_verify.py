from __future__ import annotations

import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from couette_ep import FrequencyGrid, ModeCoord, PlasmaParams, make_initial, propagate_grid
from couette_ep.dynamics import coeffs, energy, energy_tilde, SymPair
from couette_ep.errors import DegenerateData, SeriesTooShort
from couette_ep.fields import resolved_n_xi
from couette_ep.verify import (
    SLOPE_TARGETS,
    NormSeries,
    VerificationReport,
    check_lemma_energy,
    check_lower_growth,
    check_upper_growth,
    check_upper_px_phi,
    check_upper_py,
    compute_series,
    dyadic_windows,
    envelope_slope,
    japanese,
    lower_bound_functional,
    sample_modes,
)

from .oracle import oracle_r

UPPER = [check_upper_px_phi, check_upper_py, check_upper_growth]
SMALL = FrequencyGrid(k_max=2, xi_min=-8.0, xi_max=8.0, n_xi=129)


def _truncate(series: NormSeries, t_end: float) -> NormSeries:
    sel = series.times <= t_end + 1e-12
    cut = {name: getattr(series, name)[sel] for name in
           ("times", "pux", "puy", "qu", "eta", "phi", "sym_weighted", "energy_ratio_min",
            "energy_ratio_max", "r_norm")}
    return replace(series, **cut)


@pytest.fixture(scope="module")
def small_ion():
    params = PlasmaParams.all_ones("ion")
    prop = propagate_grid(SMALL, params, np.linspace(0.0, 40.0, 161))
    return params, prop


@pytest.fixture(scope="module")
def single_mode_runs():
    """k = +-1 Gaussian-in-xi data on the resolved grid, two time samplings."""
    params = PlasmaParams.all_ones("ion")
    grid = FrequencyGrid(k_values=(-1, 1), n_xi=resolved_n_xi(-32.0, 32.0, 200.0, params))
    spec = make_initial(grid, "single_mode", k=1, gaussian=True)
    out = {}
    for n_outputs in (401, 801):
        prop = propagate_grid(grid, params, np.linspace(0.0, 200.0, n_outputs))
        out[n_outputs] = compute_series(spec, prop)
    return params, spec, out


# --------------------------------------------------------------------------
# envelope regression


@pytest.mark.parametrize(
    "start, end, expected",
    [
        (20.0, 200.0, [(20.0, 40.0), (40.0, 80.0), (80.0, 160.0), (160.0, 200.0)]),
        (10.0, 40.0, [(10.0, 20.0), (20.0, 40.0)]),
        (5.0, 5.0, []),
    ],
)
def test_dyadic_windows(start, end, expected):
    assert dyadic_windows(start, end) == expected


@pytest.mark.parametrize("power", [-1.5, -0.5, 0.5, 1.0])
def test_envelope_slope_recovers_power_under_modulation(power):
    t = np.linspace(0.0, 200.0, 4001)
    values = np.where(t > 0, t, 1.0) ** power * (1.0 + 0.5 * np.cos(3.0 * t) ** 2)
    slope, pts = envelope_slope(t, values, 20.0)
    assert slope == pytest.approx(power, abs=0.02)
    assert len(pts) == 4


def test_envelope_slope_needs_two_windows():
    t = np.linspace(0.0, 30.0, 61)
    slope, pts = envelope_slope(t, np.ones_like(t), 20.0)
    assert slope is None and len(pts) == 1


def test_japanese_bracket():
    assert japanese(0.0) == 1.0
    assert japanese(3.0) == pytest.approx(math.sqrt(10.0))


# --------------------------------------------------------------------------
# report semantics


@settings(max_examples=60, deadline=None)
@given(st.floats(-1e3, 1e3, allow_nan=False))
def test_pass_iff_margin_nonnegative(margin):
    rep = VerificationReport(name="x", species="ion", bound=1.0, observed=0.5, margin=margin, passed=False)
    assert rep.passed == (margin >= 0.0)
    assert rep.status == ("pass" if margin >= 0.0 else "fail")


def test_degenerate_status_is_kept():
    rep = VerificationReport(name="x", species="ion", bound=math.nan, observed=math.nan, margin=math.nan,
                             passed=False, status="degenerate")
    assert rep.status == "degenerate" and not rep.passed
    json.dumps(rep.as_dict(), allow_nan=False)


# --------------------------------------------------------------------------
# upper checks


@pytest.mark.parametrize("check", UPPER)
def test_zero_data_is_vacuous_pass(small_ion, check):
    params, prop = small_ion
    spec = make_initial(SMALL, "gaussian_bump", amplitude=0.0)
    series = compute_series(spec, prop)
    for name in ("pux", "puy", "qu", "eta", "phi"):
        assert np.all(getattr(series, name) == 0.0)
    rep = check(series, spec, params)
    assert rep.passed and rep.details["vacuous"]


@pytest.mark.parametrize("check", UPPER + [check_lower_growth])
def test_short_series_rejected(small_ion, check):
    params, prop = small_ion
    spec = make_initial(SMALL, "gaussian_bump")
    series = _truncate(compute_series(spec, prop), 5.0)
    with pytest.raises(SeriesTooShort):
        check(series, spec, params)


@pytest.mark.parametrize("check", UPPER)
def test_upper_sup_monotone_in_t_max(small_ion, check):
    params, prop = small_ion
    spec = make_initial(SMALL, "random_band", seed=4)
    series = compute_series(spec, prop)
    short = check(_truncate(series, 20.0), spec, params, fit_start=10.0)
    full = check(series, spec, params, fit_start=10.0)
    assert short.observed <= full.observed
    assert short.t_max == 20.0 and full.t_max == 40.0
    assert full.window == (10.0, 40.0)


def test_upper_reports_are_reproducible(small_ion):
    params, prop = small_ion
    spec = make_initial(SMALL, "random_band", seed=9)
    a = check_upper_py(compute_series(spec, prop), spec, params, fit_start=10.0).as_dict()
    b = check_upper_py(compute_series(spec, prop), spec, params, fit_start=10.0).as_dict()
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_px_phi_ratio_stable_under_t_max_doubling(runs):
    params, spec, _, long_run = runs.get("ion", keep_propagator=False)
    _, short_spec, _, short_run = runs.get("ion", t_max=100.0, n_outputs=201, keep_propagator=False)
    a = check_upper_px_phi(short_run, short_spec, params).observed
    b = check_upper_px_phi(long_run, spec, params).observed
    assert math.isfinite(b)
    assert abs(b - a) / a < 0.05


def test_py_ratio_stable_under_grid_doubling(runs):
    params, spec, _, coarse = runs.get("ion", keep_propagator=False)
    _, fine_spec, _, fine = runs.get("ion", refine=2, keep_propagator=False)
    a = check_upper_py(coarse, spec, params).observed
    b = check_upper_py(fine, fine_spec, params).observed
    assert abs(b - a) / b < 0.05


def test_py_default_slope(runs):
    params, spec, _, series = runs.get("ion", keep_propagator=False)
    rep = check_upper_py(series, spec, params)
    target, tol = SLOPE_TARGETS["upper_py"]
    assert abs(rep.slope - target) <= tol


def test_px_phi_envelope_has_inverse_t_correction(runs):
    # pux carries a <t>^-1 |F| part next to the <t>^-1/2 part: the envelope
    # is steeper early and relaxes toward -1/2, and a two-term model fits it
    # far better than a pure t^-1/2 law
    _, _, _, series = runs.get("ion", keep_propagator=False)
    y = series.pux + series.phi
    early, _ = envelope_slope(series.times, y, 20.0, 80.0)
    late, _ = envelope_slope(series.times, y, 50.0, 200.0)
    assert early < late < -0.5
    _, pts = envelope_slope(series.times, y, 10.0, 200.0)
    t, v = np.array(pts).T
    two = np.vstack([t**-0.5, t**-1.0]).T
    coef = np.linalg.lstsq(two, v, rcond=None)[0]
    one = np.linalg.lstsq(two[:, :1], v, rcond=None)[0]
    resid_two = np.max(np.abs(two @ coef - v) / v)
    resid_one = np.max(np.abs(two[:, :1] @ one - v) / v)
    assert np.all(coef > 0.0)
    assert resid_two * 4.0 < resid_one


def test_single_mode_growth_slope(single_mode_runs):
    params, spec, series = single_mode_runs
    rep = check_upper_growth(series[401], spec, params)
    assert rep.window == (20.0, 200.0)
    assert rep.slope == pytest.approx(0.5, abs=0.1)


def test_growth_constant_stable_under_time_refinement(single_mode_runs):
    params, spec, series = single_mode_runs
    coarse = check_upper_growth(series[401], spec, params).observed
    fine = check_upper_growth(series[801], spec, params).observed
    assert coarse <= fine * (1.0 + 1e-12)
    assert (fine - coarse) / fine < 0.05


# --------------------------------------------------------------------------
# lower bound


def test_r_equals_initial_state_without_forcing(small_ion):
    params, prop = small_ion
    spec = make_initial(SMALL, "gaussian_bump", fields="psi")
    assert np.all(spec.f_hat == 0.0)
    a_in = spec.symmetrized(params)
    for t in (0.0, 3.5, 40.0):
        np.testing.assert_array_equal(lower_bound_functional(spec, prop, t), a_in)


def test_r_at_zero_is_initial_state(small_ion):
    params, prop = small_ion
    spec = make_initial(SMALL, "random_band", seed=2)
    np.testing.assert_allclose(lower_bound_functional(spec, prop, 0.0), spec.symmetrized(params),
                               rtol=0, atol=1e-15)


@pytest.mark.parametrize("species", ["ion", "electron"])
def test_r_matches_fine_trapezoid_at_t10(species):
    params = PlasmaParams.all_ones(species)
    grid = FrequencyGrid(k_values=(-2, 1, 3, 8), n_xi=resolved_n_xi(-32.0, 32.0, 200.0, params))
    prop = propagate_grid(grid, params, np.linspace(0.0, 200.0, 401))
    spec = make_initial(grid, "gaussian_bump")
    r = lower_bound_functional(spec, prop, 10.0)
    a_in = spec.symmetrized(params)
    for i, k in enumerate(grid.k_list):
        for x in (0.0, 0.75, 1.5, -3.0):
            j = int(np.argmin(np.abs(grid.xi - x)))
            ref = oracle_r(int(k), grid.xi[j], params, a_in[i, j], spec.f_hat[i, j], 10.0)
            assert np.max(np.abs(r[i, j] - ref)) < 1e-6, (k, x)


@pytest.mark.parametrize("order", [0.0, 0.5, 1.0])
def test_r_norm_order_is_a_parameter(small_ion, order):
    params, prop = small_ion
    spec = make_initial(SMALL, "gaussian_bump", fields="psi")
    series = compute_series(spec, prop, r_order=order)
    _, XI = SMALL.mesh()
    a_in = spec.symmetrized(params)
    expected = math.sqrt(SMALL.integrate((1.0 + XI**2) ** -order * np.sum(np.abs(a_in) ** 2, axis=-1)))
    assert series.r_norm[0] == pytest.approx(expected, rel=1e-13)
    rep = check_lower_growth(series, spec, params)
    assert rep.details["r_weight"] == f"<xi>^-{2 * order:g}"


def test_zero_data_is_degenerate(small_ion):
    params, prop = small_ion
    spec = make_initial(SMALL, "gaussian_bump", amplitude=0.0)
    with pytest.raises(DegenerateData):
        check_lower_growth(compute_series(spec, prop), spec, params)


def test_homogeneous_data_has_constant_r(small_ion):
    params, prop = small_ion
    spec = make_initial(SMALL, "gaussian_bump", fields="psi")
    series = compute_series(spec, prop)
    np.testing.assert_allclose(series.r_norm, series.r_norm[0], rtol=1e-14)
    rep = check_lower_growth(series, spec, params)
    assert rep.passed and rep.observed > 0.0
    assert rep.details["r_weight"] == "<xi>^-1"


# --------------------------------------------------------------------------
# energy lemma


def test_cross_term_vanishes_at_critical_time():
    params = PlasmaParams.all_ones("ion")
    mode = ModeCoord(1, 0.0)
    assert coeffs(0.0, mode, params).h == 0.0
    state = SymPair(0.3 + 0.2j, -0.7 + 0.1j)
    assert energy(state, 0.0, mode, params) == energy_tilde(state, 0.0, mode, params)


def _sup_h_over_gamma(params, k=1):
    u = np.concatenate([np.linspace(0.0, 50.0, 2001), np.geomspace(50.0, 1e9, 400)])
    vals = []
    for x in u:
        c = coeffs(0.0, ModeCoord(k, float(x)), params)
        vals.append(abs(c.h) / c.gamma)
    return max(vals)


def test_electron_h_over_gamma_limit_from_below():
    # the deficit shrinks like m_minus^(-1/3)
    bound = math.sqrt(2.0) / 4.0
    sups = [_sup_h_over_gamma(PlasmaParams(species="electron", m_minus=m)) for m in (1.0, 1e4, 1e8, 1e12)]
    assert all(s <= bound + 1e-12 for s in sups)
    assert all(b >= a for a, b in zip(sups, sups[1:]))
    assert bound - sups[-1] < 1e-4


@pytest.mark.parametrize("k", [1, 8, 1000])
def test_electron_h_over_gamma_at_unit_mass_stays_below_limit(k):
    # at fixed m_minus the k -> infinity limit does not reach sqrt(2)/4
    s = _sup_h_over_gamma(PlasmaParams.all_ones("electron"), k)
    assert s < math.sqrt(2.0) / 4.0 - 0.05


@pytest.mark.parametrize("species", ["ion", "electron"])
def test_lemma_small_sample_passes(species):
    params = PlasmaParams.all_ones(species)
    modes = sample_modes(10, 8, 16.0, seed=1)
    rep = check_lemma_energy(modes, params, t_max=20.0, n_outputs=201)
    assert rep.passed, rep.details["margins"]
    assert rep.details["worst"]["max_det_error"] < 1e-6


def test_lemma_report_reproducible():
    params = PlasmaParams.all_ones("electron")
    modes = sample_modes(5, 8, 16.0, seed=7)
    a = check_lemma_energy(modes, params, t_max=10.0, n_outputs=101, seed=3).as_dict()
    b = check_lemma_energy(modes, params, t_max=10.0, n_outputs=101, seed=3).as_dict()
    assert a == b


def test_sample_modes_respect_bounds():
    modes = sample_modes(500, 8, 16.0, seed=0)
    assert all(1 <= abs(m.k) <= 8 and abs(m.xi) <= 16.0 for m in modes)
    assert {m.k > 0 for m in modes} == {True, False}
