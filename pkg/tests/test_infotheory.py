import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from greenmachine.errors import FitFailed, InvalidArgument
from greenmachine.infotheory import (LOG2E, TWO_LOG2E, PiePoint, analytic_pies, dolinar_pie,
                                     gm_ppm_pie, helstrom_pe, heterodyne_pie, homodyne_pie,
                                     lowpass, lowpass_fit, mutual_information,
                                     mutual_information_std, pie_from_transition,
                                     superadditivity_check, symbol_receiver_ceiling)


def _erasure_matrix(n, eps):
    return np.column_stack([np.full(n, eps), (1 - eps) * np.eye(n)])


def test_identity_channel_is_log2n():
    assert mutual_information(np.eye(16)) == pytest.approx(4.0, abs=1e-12)


@pytest.mark.parametrize("eps", [0.0, 0.1, 0.5, 0.99])
def test_erasure_channel(eps):
    assert mutual_information(_erasure_matrix(8, eps)) == pytest.approx((1 - eps) * 3, abs=1e-12)


def test_uniform_rows_give_zero():
    assert mutual_information(np.full((4, 5), 0.2)) == pytest.approx(0, abs=1e-15)
    assert pie_from_transition(np.full((4, 5), 0.2), 4, 0.01) == pytest.approx(0, abs=1e-12)


def test_ideal_erasure_pie_at_operating_point():
    n, nbar = 16, 0.00146
    tm = _erasure_matrix(n, np.exp(-n * nbar))
    assert pie_from_transition(tm, n, nbar) == pytest.approx(3.954, abs=5e-4)
    assert gm_ppm_pie(nbar, n) == pytest.approx(3.9536, abs=1e-4)


def test_gm_ppm_small_nbar_limit():
    assert gm_ppm_pie(1e-12, 64) == pytest.approx(6.0, rel=1e-9)


def test_bad_priors_and_nbar():
    with pytest.raises(InvalidArgument):
        mutual_information(np.eye(3), [0.5, 0.5])
    with pytest.raises(InvalidArgument):
        mutual_information(np.eye(2), [0.6, 0.6])
    with pytest.raises(InvalidArgument):
        pie_from_transition(np.eye(2), 2, 0.0)


def test_nonuniform_priors():
    # binary symmetric channel with skewed prior, checked against H(Y) - H(Y|X)
    p = np.array([[0.9, 0.1], [0.2, 0.8]])
    pri = np.array([0.3, 0.7])
    py = pri @ p
    h = lambda v: -np.sum(v * np.log2(v))
    expected = h(py) - np.sum(pri * [h(r) for r in p])
    assert mutual_information(p, pri) == pytest.approx(expected, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_mi_bounds_and_data_processing(k, seed):
    rng = np.random.default_rng(seed)
    n = 2**k
    p = rng.dirichlet(np.full(n + 1, 0.3), size=n)
    mi = mutual_information(p)
    assert -1e-12 <= mi <= k + 1e-12
    a, b = rng.choice(n + 1, 2, replace=False)
    merged = np.delete(p, b, axis=1)
    merged[:, a - (a > b)] += p[:, b]
    assert mutual_information(merged) <= mi + 1e-12


def test_mi_std_zero_for_deterministic_channel():
    assert mutual_information_std(np.eye(4), 1000) == pytest.approx(0, abs=1e-12)
    assert mutual_information_std(_erasure_matrix(4, 0.5), 1000) > 0


def test_analytic_examples():
    ap = analytic_pies(0.001)
    assert ap.holevo_bpsk == pytest.approx(10.966, abs=1e-3)
    assert ap.holevo_unrestricted == pytest.approx(np.log2(1000) + LOG2E)
    assert analytic_pies(1.0).helstrom_pe == pytest.approx(0.10247, abs=1e-5)
    assert helstrom_pe(1.0, "standard") == pytest.approx(0.5 * (1 - np.sqrt(1 - np.exp(-4))))
    with pytest.raises(InvalidArgument):
        helstrom_pe(1.0, "other")
    with pytest.raises(InvalidArgument):
        analytic_pies(0.0)


def test_small_nbar_limits():
    assert heterodyne_pie(1e-8) == pytest.approx(LOG2E, rel=1e-6)
    assert homodyne_pie(1e-8) == pytest.approx(TWO_LOG2E, rel=1e-6)
    assert dolinar_pie(1e-7, "standard") == pytest.approx(TWO_LOG2E, rel=1e-3)
    # the "paper" overlap uses a quarter of the energy, so its limit is a quarter
    assert dolinar_pie(1e-7, "paper") == pytest.approx(TWO_LOG2E / 4, rel=1e-3)


def test_closed_form_orderings():
    nb = np.logspace(-6, 0, 200)
    assert np.all(homodyne_pie(nb) >= heterodyne_pie(nb))
    hol = np.log2(1 / nb) + LOG2E
    for n in (2, 16, 1024, 2**20):
        assert np.all(gm_ppm_pie(nb, n) < hol)


@pytest.mark.parametrize("conv", ["paper", "standard"])
def test_dolinar_pie_bounded(conv):
    nb = np.concatenate([np.logspace(-8, 1, 2000), [10.0]])
    assert np.max(dolinar_pie(nb, conv)) <= TWO_LOG2E + 1e-6


def test_heterodyne_closed_form_example():
    assert heterodyne_pie(0.0075) == pytest.approx(np.log2(1.015) / 0.015, rel=1e-12)
    assert heterodyne_pie(0.0075) == pytest.approx(1.4320, abs=1e-4)


def test_superadditivity_verdicts():
    assert superadditivity_check(PiePoint(0.00146, 3.15, 0.005, "gm")) == "superadditive"
    assert superadditivity_check(PiePoint(0.001, 2.0, 0.01, "gm")) == "not"
    assert superadditivity_check(PiePoint(1e-3, 2.89, 0.02, "gm")) == "inconclusive"
    with pytest.raises(InvalidArgument):
        superadditivity_check(PiePoint(1e-3, 2.89, float("nan"), "gm"))


def test_ceiling_uses_best_receiver():
    assert symbol_receiver_ceiling(1e-4) == pytest.approx(dolinar_pie(1e-4, "standard"))
    assert symbol_receiver_ceiling(1e-4) > homodyne_pie(1e-4)


def test_lowpass_fit_recovers_noiseless_parameters():
    f = np.logspace(1, 7, 13)
    pts = np.column_stack([f, lowpass(f, 2.18, 1.99e6, 1.68)])
    fit = lowpass_fit(pts)
    assert fit.a == pytest.approx(2.18, rel=1e-6)
    assert fit.f0 == pytest.approx(1.99e6, rel=1e-6)
    assert fit.s == pytest.approx(1.68, rel=1e-6)
    assert np.all(np.diff(fit(f)) < 0)


def test_lowpass_fit_constant_points_fail():
    f = np.logspace(1, 5, 9)
    with pytest.raises(FitFailed):
        lowpass_fit(np.column_stack([f, np.full(f.size, 2.0)]))


def test_lowpass_fit_input_checks():
    with pytest.raises(FitFailed):
        lowpass_fit([(10, 1), (100, 1), (1000, 0.5)])
    with pytest.raises(FitFailed):
        lowpass_fit([(10, 1), (20, 1), (30, 0.5), (90, 0.2)])


def test_lowpass_fit_noise_recovery():
    # eight points per decade; coarser grids leave the exponent poorly pinned
    f = np.logspace(1, 7, 49)
    clean = lowpass(f, 2.18, 1.99e6, 1.68)
    worst = np.zeros(3)
    for seed in range(100):
        y = clean * (1 + 0.05 * np.random.default_rng(seed).standard_normal(f.size))
        fit = lowpass_fit(np.column_stack([f, y]))
        rel = np.abs(np.array([fit.a, fit.f0, fit.s]) / [2.18, 1.99e6, 1.68] - 1)
        worst = np.maximum(worst, rel)
    assert np.all(worst < 0.15), worst
