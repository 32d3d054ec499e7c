import datetime as dt
import math

import numpy as np
import pytest

from bigwinners.distributions import LogNormalParams, sample
from bigwinners.empirical import (
    ReturnSample,
    fit_macroscopic,
    kde_mode,
    load_panel,
    qq_data,
    summarize_index,
    tail_filter,
    top_contribution,
    total_returns,
)
from bigwinners.errors import DataError, InsufficientDataError, ParseError

from conftest import bootstrap_se


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

class TestLoadPanel:
    def test_three_ticker_fixture(self, price_csv):
        path = price_csv(
            [
                ("AAA", "2006-01-02", 10.0),
                ("AAA", "2021-12-30", 25.0),
                ("BBB", "2006-01-02", 5.0),
                ("BBB", "2021-12-30", 4.0),
                ("CCC", "2006-01-02", 1.0),
                ("CCC", "2021-12-30", 9.0),
            ]
        )
        panel = load_panel(path)
        assert panel.tickers == ("AAA", "BBB", "CCC")
        assert panel.window == (dt.date(2006, 1, 2), dt.date(2021, 12, 30))

    def test_negative_price_names_row(self, price_csv):
        path = price_csv(
            [("AAA", "2006-01-02", 10.0), ("AAA", "2007-01-02", -3.0)]
        )
        with pytest.raises(DataError, match="line 3"):
            load_panel(path)

    def test_bad_date_is_parse_error_with_line(self, price_csv):
        path = price_csv([("AAA", "02/01/2006", 10.0)])
        with pytest.raises(ParseError, match="line 2"):
            load_panel(path)

    def test_wrong_header_rejected(self, price_csv):
        path = price_csv([("AAA", "2006-01-02", 1.0)], header="sym,when,px")
        with pytest.raises(ParseError, match="line 1"):
            load_panel(path)

    def test_out_of_order_dates_sorted_and_flagged(self, price_csv):
        path = price_csv(
            [
                ("AAA", "2007-01-02", 12.0),
                ("AAA", "2006-01-02", 10.0),
            ]
        )
        panel = load_panel(path)
        dates, prices = panel.series["AAA"]
        assert list(prices) == [10.0, 12.0]
        assert any("sorted" in note for note in panel.notes)

    def test_duplicate_row_rejected(self, price_csv):
        path = price_csv(
            [("AAA", "2006-01-02", 10.0), ("AAA", "2006-01-02", 10.5)]
        )
        with pytest.raises(DataError, match="duplicate"):
            load_panel(path)


# ---------------------------------------------------------------------------
# Total returns
# ---------------------------------------------------------------------------

class TestTotalReturns:
    def test_simple_ratio(self, price_csv):
        path = price_csv(
            [("AAA", "2006-01-02", 10.0), ("AAA", "2021-12-30", 25.0)]
        )
        sample_ = total_returns(load_panel(path))
        assert sample_.rho[0] == pytest.approx(2.5)

    def test_missing_window_start_excluded(self, price_csv):
        path = price_csv(
            [
                ("AAA", "2006-01-02", 10.0),
                ("AAA", "2021-12-30", 25.0),
                ("LATE", "2008-05-01", 4.0),
                ("LATE", "2021-12-30", 8.0),
            ]
        )
        sample_ = total_returns(load_panel(path))
        assert sample_.tickers == ("AAA",)
        assert ("LATE", "insufficient window coverage") in sample_.excluded

    def test_endpoint_tolerance(self, price_csv):
        # 9 days from the window start is accepted, 11 is not.
        path = price_csv(
            [
                ("NEAR", "2006-01-10", 2.0),
                ("NEAR", "2021-12-30", 5.0),
                ("FAR", "2006-01-12", 2.0),
                ("FAR", "2021-12-30", 5.0),
            ]
        )
        window = (dt.date(2006, 1, 1), dt.date(2021, 12, 30))
        sample_ = total_returns(load_panel(path), window=window)
        assert sample_.tickers == ("NEAR",)

    def test_synthetic_gbm_bit_exact(self, price_csv):
        # Prices built as exp(running sum) make rho equal exp(total) exactly.
        rng = np.random.default_rng(3)
        increments = rng.normal(0.0005, 0.01, 30)
        rows = [("GBM", "2006-01-02", repr(1.0))]
        running = 0.0
        day = dt.date(2006, 1, 3)
        for j, r in enumerate(increments):
            running += r
            rows.append(("GBM", (day + dt.timedelta(days=j)).isoformat(), repr(math.exp(running))))
        path = price_csv(rows)
        sample_ = total_returns(load_panel(path))
        assert sample_.rho[0] == math.exp(running)


# ---------------------------------------------------------------------------
# Winner contribution
# ---------------------------------------------------------------------------

class TestTopContribution:
    def test_hand_computed(self):
        s = ReturnSample(rho=np.arange(1.0, 11.0))
        assert top_contribution(s, 0.10) == pytest.approx(100 * (1 - 5.0 / 5.5))

    def test_all_equal_is_zero(self):
        s = ReturnSample(rho=np.full(20, 3.0))
        assert top_contribution(s, 0.25) == pytest.approx(0.0)

    def test_monotone_in_pct(self):
        rng = np.random.default_rng(4)
        s = ReturnSample(rho=rng.lognormal(0.5, 1.0, 200))
        t5 = top_contribution(s, 0.05)
        t10 = top_contribution(s, 0.10)
        t25 = top_contribution(s, 0.25)
        assert t5 <= t10 <= t25

    def test_preconditions(self):
        s = ReturnSample(rho=np.array([1.0]))
        with pytest.raises(InsufficientDataError):
            top_contribution(s, 0.1)
        with pytest.raises(Exception):
            top_contribution(ReturnSample(rho=np.array([1.0, 2.0])), 1.5)


# ---------------------------------------------------------------------------
# KDE mode
# ---------------------------------------------------------------------------

class TestKdeMode:
    def test_normal_sample(self):
        x = np.random.default_rng(10).normal(3, 1, 100_000)
        r = kde_mode(x)
        assert r.mode == pytest.approx(3.0, abs=0.05)
        assert r.stable
        assert not r.log_scale

    def test_constant_sample(self):
        r = kde_mode([1.0, 1.0, 1.0, 1.0, 1.0])
        assert r.mode == 1.0
        assert r.stable

    def test_broad_lognormal_sample(self):
        x = np.random.default_rng(11).lognormal(0.95, 1.02, 10_000)
        r = kde_mode(x)
        assert r.mode == pytest.approx(math.exp(0.95 - 1.02**2), abs=0.15)
        assert r.log_scale

    def test_converges_with_sample_size(self):
        true_mode = math.exp(0.95 - 1.02**2)
        err = {}
        for n, seed in ((1000, 12), (100_000, 13)):
            x = np.random.default_rng(seed).lognormal(0.95, 1.02, n)
            err[n] = abs(kde_mode(x).mode - true_mode)
        assert err[100_000] < err[1000]

    def test_mode_within_sample_range(self):
        x = np.random.default_rng(14).lognormal(0.0, 2.0, 5000)
        r = kde_mode(x)
        assert x.min() <= r.mode <= x.max()

    def test_bimodal_flagged_unstable(self):
        rng = np.random.default_rng(15)
        x = np.concatenate([rng.normal(-3, 0.5, 5000), rng.normal(3, 0.5, 5000)])
        assert not kde_mode(x).stable

    def test_too_few_points(self):
        with pytest.raises(InsufficientDataError):
            kde_mode([1.0, 2.0, 3.0, 4.0])


# ---------------------------------------------------------------------------
# Tail filter
# ---------------------------------------------------------------------------

class TestTailFilter:
    def test_hand_computed(self):
        s = ReturnSample(rho=np.array([0.1, 0.2, 1.0]))
        out = tail_filter(s)
        assert list(out.rho) == [0.2, 1.0]
        assert out.removed == 1

    def test_boundary_is_strict(self):
        s = ReturnSample(rho=np.array([math.exp(-2.0), 1.0]))
        out = tail_filter(s)
        assert list(out.rho) == [1.0]

    def test_identity_when_nothing_below(self):
        s = ReturnSample(rho=np.array([1.5, 2.0, 3.0]))
        out = tail_filter(s)
        assert np.array_equal(out.rho, s.rho)
        assert out.removed == 0

    def test_idempotent(self):
        rng = np.random.default_rng(16)
        s = ReturnSample(rho=rng.lognormal(0.0, 1.5, 500))
        once = tail_filter(s)
        twice = tail_filter(once)
        assert np.array_equal(once.rho, twice.rho)
        assert twice.removed == 0


# ---------------------------------------------------------------------------
# Index summary
# ---------------------------------------------------------------------------

class TestSummarizeIndex:
    def test_small_sample(self):
        s = ReturnSample(rho=np.array([1.0, 2.0, 3.0, 4.0]))
        summary = summarize_index(s)
        assert summary.mean == pytest.approx(2.5)
        assert summary.median == pytest.approx(2.5)
        assert summary.mean_over_median == pytest.approx(1.0)
        assert summary.mode is None  # below the KDE size floor

    def test_constant_sample(self):
        s = ReturnSample(rho=np.array([2.0, 2.0, 2.0]))
        summary = summarize_index(s)
        assert summary.mean_over_median == pytest.approx(1.0)
        assert summary.top5 == pytest.approx(0.0)
        assert summary.top25 == pytest.approx(0.0)

    def test_synthetic_lognormal_ratio(self):
        p = LogNormalParams(0.95, 1.02)
        rho = sample(p, 498, 17)
        summary = summarize_index(ReturnSample(rho=rho))
        target = math.exp(0.5 * 1.02**2)
        se = bootstrap_se(rho, lambda b: np.mean(b) / np.median(b), seed=18)
        assert abs(summary.mean_over_median - target) <= 3 * se

    def test_permutation_invariant(self):
        rng = np.random.default_rng(19)
        rho = rng.lognormal(0.5, 0.9, 300)
        tickers = tuple(f"T{i:03d}" for i in range(300))
        s1 = ReturnSample(rho=rho, tickers=tickers)
        perm = rng.permutation(300)
        s2 = ReturnSample(rho=rho[perm], tickers=tuple(tickers[i] for i in perm))
        a = summarize_index(s1)
        b = summarize_index(s2)
        assert a.mean == pytest.approx(b.mean)
        assert a.top5 == pytest.approx(b.top5)
        assert a.top25 == pytest.approx(b.top25)
        assert (a.mode is None) == (b.mode is None)


# ---------------------------------------------------------------------------
# Macroscopic fit
# ---------------------------------------------------------------------------

class TestFitMacroscopic:
    def test_recovery_with_table_targets(self):
        rho = sample(LogNormalParams(0.95, 1.02), 100_000, 20)
        s = tail_filter(ReturnSample(rho=rho))
        params, moments, c = fit_macroscopic(s)
        assert params.mu == pytest.approx(0.95, abs=0.02)
        assert params.sigma == pytest.approx(1.02, abs=0.02)
        assert c == pytest.approx(1.35, abs=0.03)

    def test_degenerate_sample(self):
        s = ReturnSample(rho=np.full(10, 2.0))
        params, moments, c = fit_macroscopic(s)
        assert params.degenerate
        assert moments is None and c is None

    def test_mixture_recovered_after_filter(self):
        # 10% delisting-like mass far below the cutoff plus a log-normal body.
        rng = np.random.default_rng(21)
        body = rng.lognormal(0.95, 1.02, 18_000)
        crash = rng.lognormal(-4.0, 0.3, 2_000)
        s = tail_filter(ReturnSample(rho=np.concatenate([body, crash])))
        params, _, _ = fit_macroscopic(s)
        assert params.mu == pytest.approx(0.95, abs=0.05)
        assert params.sigma == pytest.approx(1.02, abs=0.05)


# ---------------------------------------------------------------------------
# QQ data
# ---------------------------------------------------------------------------

class TestQQData:
    def test_self_fit_within_ks_band(self):
        from scipy import stats

        p = LogNormalParams(0.5, 0.8)
        rho = sample(p, 10_000, 17)
        s = ReturnSample(rho=rho)
        fit, _, _ = fit_macroscopic(s)
        pairs = qq_data(s, fit)
        u_theo = stats.norm.cdf(pairs[:, 0], fit.mu, fit.sigma)
        u_emp = stats.norm.cdf(pairs[:, 1], fit.mu, fit.sigma)
        assert np.max(np.abs(u_theo - u_emp)) <= 1.63 / math.sqrt(len(s))

    def test_two_point_sample_rejected(self):
        with pytest.raises(InsufficientDataError):
            qq_data(ReturnSample(rho=np.array([1.0, 2.0])), LogNormalParams(0.0, 1.0))

    def test_heavy_tails_show_monotone_departure(self):
        # ln rho drawn Laplace but fitted normal: QQ residuals split by tail.
        rng = np.random.default_rng(22)
        log_rho = rng.laplace(0.5, 0.7, 20_000)
        s = ReturnSample(rho=np.exp(log_rho))
        fit, _, _ = fit_macroscopic(s)
        pairs = qq_data(s, fit)
        resid = pairs[:, 1] - pairs[:, 0]
        k = len(resid) // 20
        assert np.mean(resid[:k]) < 0 < np.mean(resid[-k:])

    def test_pairs_are_sorted(self):
        rho = sample(LogNormalParams(0.2, 0.6), 500, 23)
        pairs = qq_data(ReturnSample(rho=rho), LogNormalParams(0.2, 0.6))
        assert np.all(np.diff(pairs[:, 0]) >= 0)
        assert np.all(np.diff(pairs[:, 1]) >= 0)
