import math

import numpy as np
import pytest
from scipy import stats

from microplate_doe.errors import DegenerateData, NonConvergence, UnknownTerm
from microplate_doe.mixed import (
    ChipDataset,
    MixedModelSpec,
    build_model_matrix,
    chips_from_run_table,
    detect_estimability,
    f_tests,
    fitted_means_and_lsd,
    reml_fit,
    row_pseudo_values,
    simulate_response,
    variance_csv,
)
from microplate_doe.scenarios import PAPER_COMPONENTS, PAPER_EFFECTS, PAPER_INTERCEPT, usable_effects


def dataset(levels, plate, y, factors):
    n = len(y)
    one = np.ones(n, dtype=np.int64)
    return ChipDataset(
        factors, one, np.asarray(plate), one, one, one,
        np.asarray(levels, dtype=np.int64).reshape(n, len(factors)), np.asarray(y, dtype=float),
    )


def paper_data(sc, seed, missing=0, **override):
    comps = dict(PAPER_COMPONENTS, **override)
    return simulate_response(
        sc.run_table, usable_effects(sc, PAPER_EFFECTS), comps, seed=seed,
        intercept=PAPER_INTERCEPT, column_words=sc.column_words, missing=missing,
    )


@pytest.fixture(scope="module")
def paper_fit(request):
    from microplate_doe.scenarios import load_scenario

    sc = load_scenario("paper")
    return sc, reml_fit(sc.model_spec(), paper_data(sc, 1, missing=17))


def test_one_way_matches_anova():
    y = np.array([3.1, 4.0, 7.9, 6.2, 1.0, 1.7, 5.5, 6.9])
    groups = np.repeat(np.arange(1, 5), 2)
    data = dataset(np.ones((8, 1)), groups, y, "a")
    spec = MixedModelSpec((), (), row_effects=False, random_terms=("plate",))
    fit = reml_fit(spec, data)
    means = y.reshape(4, 2).mean(axis=1)
    msb = 2 * np.sum((means - y.mean()) ** 2) / 3
    msw = np.sum((y.reshape(4, 2) - means[:, None]) ** 2) / 4
    assert fit.component("residual").estimate == pytest.approx(msw, rel=1e-6)
    assert fit.component("plate").estimate == pytest.approx((msb - msw) / 2, rel=1e-6)
    assert fit.fixed("intercept") == pytest.approx(y.mean(), rel=1e-10)


def split_plot(seed=0):
    """8 whole plots with a between them, b and c crossed within each."""
    rng = np.random.default_rng(seed)
    plots = np.repeat(np.arange(1, 9), 4)
    a = np.repeat([-1, 1], 16)
    b = np.tile([-1, 1, -1, 1], 8)
    c = np.tile([-1, -1, 1, 1], 8)
    y = 10 + 1.5 * a - 0.8 * b + 0.3 * c + rng.normal(0, 2, 8)[plots - 1] + rng.normal(0, 1, 32)
    return dataset(np.column_stack([a, b, c]), plots, y, "abc"), a, b, c, plots, y


def test_split_plot_matches_anova():
    data, a, b, c, plots, y = split_plot()
    spec = MixedModelSpec(("a", "b", "c"), (), row_effects=False, random_terms=("plate",))
    fit = reml_fit(spec, data)
    pm = np.array([y[plots == i].mean() for i in range(1, 9)])
    pa = np.repeat([pm[:4].mean(), pm[4:].mean()], 4)
    ms_whole = 4 * np.sum((pm - pa) ** 2) / 6
    bhat = np.mean(y * b)
    chat = np.mean(y * c)
    resid = y - pm[plots - 1] - bhat * b - chat * c
    ms_sub = np.sum(resid**2) / 22
    assert ms_whole > ms_sub
    assert fit.component("residual").estimate == pytest.approx(ms_sub, rel=1e-6)
    assert fit.component("plate").estimate == pytest.approx((ms_whole - ms_sub) / 4, rel=1e-6)
    tests = {t.term: t for t in f_tests(fit)}
    assert tests["a"].den_df == pytest.approx(6, rel=1e-6)
    assert tests["b"].den_df == pytest.approx(22, rel=1e-6)
    assert tests["c"].den_df == pytest.approx(22, rel=1e-6)
    assert tests["b"].F == pytest.approx(bhat**2 / (ms_sub / 32), rel=1e-6)


def test_gls_equals_ols_on_complete_data(paper):
    data = paper_data(paper, 4)
    fit = reml_fit(paper.model_spec(), data)
    X = build_model_matrix(paper.model_spec(), data).X
    ols = np.linalg.lstsq(X, data.response, rcond=None)[0]
    assert np.allclose(fit.beta, ols, rtol=1e-8, atol=1e-8 * np.abs(ols).max())


def test_constant_response(paper):
    data = simulate_response(paper.run_table, {}, {}, seed=0, intercept=5.0, column_words=paper.column_words)
    assert np.all(data.response == 5.0)
    fit = reml_fit(paper.model_spec(), data)
    assert all(c.estimate == 0 for c in fit.components if c.estimable)
    assert fit.fixed("intercept") == pytest.approx(5.0)


def test_paper_estimability(paper):
    flags = detect_estimability(paper.model_spec(), paper_data(paper, 2, missing=17))
    assert flags == dict(week=False, plate=False, tube=True, column=True, row=True, residual=True)


def test_estimable_without_between_plate_effects(paper):
    spec = MixedModelSpec(("a", "c", "d", "ah", "cd"), paper.column_words)
    flags = detect_estimability(spec, paper_data(paper, 2))
    assert all(flags.values())


def test_single_group_not_estimable(paper):
    data = paper_data(paper, 2)
    one_week = data.subset(data.week == 1)
    spec = MixedModelSpec(("a", "c", "d"), (), row_effects=False, random_terms=("week", "tube"))
    flags = detect_estimability(spec, one_week)
    assert flags["week"] is False and flags["tube"] is True


def test_nonestimable_components_are_flagged(paper_fit):
    _, fit = paper_fit
    for name in ("week", "plate"):
        c = fit.component(name)
        assert not c.estimable and c.estimate is None and c.se is None
    assert "plate,gamma,0,," in variance_csv(fit)
    assert all(c.estimate >= 0 and c.se >= 0 for c in fit.components if c.estimable)


def test_between_plate_terms_not_testable(paper_fit):
    _, fit = paper_fit
    tests = {t.term: t for t in f_tests(fit)}
    assert {t for t, v in tests.items() if not v.testable} == {"g", "h", "gh"}
    for t in tests.values():
        if t.testable:
            assert 0 <= t.p_value <= 1 and t.den_df > 0
    assert tests["column"].num_df == 7 and tests["row"].num_df == 7


def test_whole_plot_term_uses_tube_df(paper_fit):
    _, fit = paper_fit
    tests = {t.term: t for t in f_tests(fit)}
    # these treatment words vary between tubes, so their denominators stay
    # near the tube stratum's few df instead of the residual's hundreds
    for t in ("a", "c", "d", "ah", "cd"):
        assert 3 < tests[t].den_df < 20


def test_history_non_decreasing(paper_fit):
    _, fit = paper_fit
    h = np.array(fit.history)
    assert np.all(np.diff(h) >= -1e-9 * np.abs(h[1:]))


def test_gh_means_without_lsd(paper_fit):
    _, fit = paper_fit
    table = fitted_means_and_lsd(fit, "gh")
    assert len(table.means) == 4 and not table.lsd_available
    assert "unavailable" in table.to_csv()
    cd = fitted_means_and_lsd(fit, "cd")
    assert cd.lsd_available


def test_cd_means_reproduce_injected_pattern(paper_fit):
    _, fit = paper_fit
    table = fitted_means_and_lsd(fit, "cd")
    e = PAPER_EFFECTS
    for lbl, m in zip(table.levels, table.means):
        c = 1 if lbl[1] == "+" else -1
        d = 1 if lbl[3] == "+" else -1
        expect = PAPER_INTERCEPT + c * e["c"] + d * e["d"] + c * d * e["cd"]
        assert abs(m - expect) < table.lsd


def test_column_and_row_means(paper_fit):
    _, fit = paper_fit
    for term in ("column", "row"):
        t = fitted_means_and_lsd(fit, term)
        assert t.levels == [str(i) for i in range(1, 9)] and t.lsd_available
    with pytest.raises(UnknownTerm):
        fitted_means_and_lsd(fit, "xy")


def test_textbook_lsd():
    rng = np.random.default_rng(8)
    n = 6
    a = np.repeat([-1, 1], n)
    y = 2.0 * a + rng.normal(size=2 * n)
    data = dataset(a[:, None], np.arange(2 * n), y, "a")
    spec = MixedModelSpec(("a",), (), row_effects=False, random_terms=())
    fit = reml_fit(spec, data)
    s2 = np.sum((y - np.where(a > 0, y[a > 0].mean(), y[a < 0].mean())) ** 2) / (2 * n - 2)
    table = fitted_means_and_lsd(fit, "a", alpha=0.10)
    expect = stats.t.ppf(0.95, 2 * n - 2) * math.sqrt(s2 * 2 / n)
    assert table.lsd == pytest.approx(expect, rel=1e-8)
    assert table.means == pytest.approx([y[a < 0].mean(), y[a > 0].mean()])


def test_null_term_gives_p_one():
    rng = np.random.default_rng(2)
    e = rng.normal(0, 1e3, 10)
    y = np.concatenate([e, e])
    a = np.repeat([-1, 1], 10)
    data = dataset(a[:, None], np.arange(20), y, "a")
    fit = reml_fit(MixedModelSpec(("a",), (), row_effects=False, random_terms=()), data)
    assert f_tests(fit)[0].p_value == pytest.approx(1.0)


def test_degenerate_and_nonconvergence(paper):
    data = dataset(np.array([[-1], [1]]), [1, 2], [1.0, 2.0], "a")
    with pytest.raises(DegenerateData):
        reml_fit(MixedModelSpec(("a",), (), row_effects=False, random_terms=()), data)
    with pytest.raises(NonConvergence) as exc:
        reml_fit(paper.model_spec(), paper_data(paper, 3), max_iter=1)
    assert "theta" in exc.value.diagnostics


def test_fit_is_deterministic(paper):
    data = paper_data(paper, 6, missing=17)
    a = reml_fit(paper.model_spec(), data)
    b = reml_fit(paper.model_spec(), data)
    assert np.array_equal(a.theta, b.theta) and np.array_equal(a.beta, b.beta)


def test_simulate_residual_only(paper):
    data = simulate_response(paper.run_table, {}, {"residual": 1.0}, seed=12)
    assert len(data) == 256
    assert np.var(data.response, ddof=1) == pytest.approx(1.0, abs=0.2)


def test_simulate_week_only(paper):
    data = simulate_response(paper.run_table, {}, {"week": 4.0}, seed=12)
    weeks = [data.response[data.week == w] for w in (1, 2)]
    assert all(np.ptp(v) == 0 for v in weeks)
    assert weeks[0][0] != weeks[1][0]


def test_simulate_determinism_and_missing(paper):
    a = paper_data(paper, 21, missing=17)
    b = paper_data(paper, 21, missing=17)
    assert a.to_csv() == b.to_csv()
    assert a.n_missing == 17 and len(a.observed()) == 239
    assert paper_data(paper, 22).to_csv() != a.to_csv()


def test_simulate_effects_land_on_words(paper):
    data = simulate_response(paper.run_table, {"cd": 2.0, "p1": 1.0, "q3": -1.0}, {}, seed=0,
                             column_words=paper.column_words)
    expect = 2 * data.word_values("cd") + data.word_values(paper.column_words[0])
    expect -= row_pseudo_values(data.row, 8)[:, 2]
    assert np.allclose(data.response, expect)


def test_csv_round_trip(paper):
    a = paper_data(paper, 5, missing=17)
    b = ChipDataset.from_csv(a.to_csv())
    assert b.factors == a.factors and b.n_missing == 17
    assert b.to_csv() == a.to_csv()


def test_chip_indices(paper):
    chips = chips_from_run_table(paper.run_table)
    assert len(chips) == 256
    assert len(np.unique(chips.groups("column"))) == 32
    assert len(np.unique(chips.groups("row"))) == 32
    assert len(np.unique(chips.groups("tube"))) == 16
    assert len(np.unique(chips.groups("plate"))) == 4


def test_row_pseudo_factors_orthogonal():
    q = row_pseudo_values(np.arange(1, 9), 8)
    assert np.array_equal(q.T @ q, 8 * np.eye(7))
    assert np.all(q.sum(axis=0) == 0)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_optimum_not_beaten_by_bounded_quasi_newton(paper, seed):
    from scipy.optimize import minimize

    from microplate_doe.mixed import _reml_parts, indicator

    fit = reml_fit(paper.model_spec(), paper_data(paper, seed, missing=17))
    obs = fit.data
    Zs = [indicator(obs.groups(t)) for t in ("tube", "column", "row")]
    crit = lambda th: -_reml_parts(th, Zs, fit.mm.X, obs.response, need_info=False)["ll"]  # noqa: E731
    start = np.array([5.0, 5.0, 5.0, 150.0])
    res = minimize(crit, start, method="L-BFGS-B", bounds=[(0, None)] * 3 + [(1e-6, None)])
    assert fit.loglik >= -res.fun - 1e-6
