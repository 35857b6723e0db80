import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from seqmart.calibration import (
    CalibrationSpec,
    GamblerParams,
    Scenario,
    binomial_range,
    clopper_pearson,
    compare_stopping_rules,
    derive_seed,
    ks_distance,
    run_calibration,
)
from seqmart.core import Status, TestConfig, run_sequential_test
from seqmart.simulators import IblParams, session_to_trials, simulate_ibl_session

CFG = TestConfig(300.0)


def _reports_equal(a, b):
    for f in dataclasses.fields(a):
        x, y = getattr(a, f.name), getattr(b, f.name)
        if isinstance(x, np.ndarray):
            assert np.array_equal(x, y)
        else:
            assert x == y, f.name


class TestSeeds:
    def test_frozen_values(self):
        # pinned so that reports stay reproducible across releases
        assert derive_seed(0, 0) == 15793235383387715774
        assert derive_seed(42, 7) == 10473664704035447458
        assert derive_seed(2**63, 1) == 17151744107517912418

    def test_definition(self):
        ss = np.random.SeedSequence([123, 4])
        assert derive_seed(123, 4) == int(ss.generate_state(1, np.uint64)[0])

    def test_distinct(self):
        seeds = {derive_seed(m, i) for m in range(5) for i in range(500)}
        assert len(seeds) == 2500


class TestKs:
    def test_normal_quantiles(self):
        n = 1000
        x = stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
        assert ks_distance(x) <= 0.5 / n + 1e-12

    def test_point_mass(self):
        assert ks_distance(np.zeros(10)) == pytest.approx(0.5, abs=1e-15)

    def test_too_few(self):
        with pytest.raises(ValueError):
            ks_distance([0.3])

    @given(st.lists(st.floats(-8, 8), min_size=2, max_size=50))
    def test_matches_scipy(self, xs):
        assert ks_distance(xs) == pytest.approx(stats.kstest(xs, "norm").statistic, abs=1e-12)


class TestIntervals:
    def test_binomial_range_example(self):
        lo, hi = binomial_range(0.05, 2000, 0.99)
        assert lo == pytest.approx(0.038, abs=1e-3) and hi == pytest.approx(0.063, abs=1e-3)

    @given(st.integers(1, 500), st.data())
    def test_clopper_pearson(self, n, data):
        k = data.draw(st.integers(0, n))
        lo, hi = clopper_pearson(k, n)
        assert 0 <= lo <= k / n <= hi <= 1
        ref = stats.binomtest(k, n).proportion_ci(0.95, method="exact")
        assert lo == pytest.approx(ref.low, abs=1e-9) and hi == pytest.approx(ref.high, abs=1e-9)


class TestSpec:
    def test_defaults(self):
        s = CalibrationSpec("ibl_visible", 3, CFG)
        assert s.scenario is Scenario.IBL_VISIBLE and s.scenario_params.w_a == 1.0
        assert isinstance(CalibrationSpec("gambler_fair_odds", 1, CFG).scenario_params, GamblerParams)

    @pytest.mark.parametrize("kw", [dict(n_runs=0), dict(master_seed=-1), dict(scenario="coin")])
    def test_invalid(self, kw):
        args = dict(scenario="ibl_blind", n_runs=2, test_config=CFG) | kw
        with pytest.raises(ValueError):
            CalibrationSpec(**args)


class TestRunCalibration:
    def test_single_run(self):
        r = run_calibration(CalibrationSpec("ibl_blind", 1, CFG, master_seed=9))
        assert r.n_runs == 1 and len(r.runs) == 1 and r.ks_distance is None
        assert len(r.z_samples) == 1 and r.mean_stop_index == 469.0

    def test_reproducible(self):
        spec = CalibrationSpec("ibl_visible", 60, CFG, master_seed=5)
        _reports_equal(run_calibration(spec), run_calibration(spec))

    def test_runs_use_derived_seeds(self):
        spec = CalibrationSpec("ibl_blind", 20, CFG, master_seed=11)
        rep = run_calibration(spec)
        for rec in rep.runs[::7]:
            p = IblParams(seed=derive_seed(11, rec.index))
            out = run_sequential_test(session_to_trials(simulate_ibl_session(p), p), CFG)
            assert rec.seed == p.seed and rec.z == out.z and rec.status is out.status

    def test_prefix_stable(self):
        # run i depends only on (master_seed, i)
        a = run_calibration(CalibrationSpec("ibl_blind", 10, CFG, master_seed=3))
        b = run_calibration(CalibrationSpec("ibl_blind", 25, CFG, master_seed=3))
        assert a.runs == b.runs[:10]

    def test_invariants(self):
        r = run_calibration(CalibrationSpec("walk_self_phacking", 100, TestConfig(50.0), master_seed=2))
        assert 0 <= r.rejection_rate <= 1 and 0 <= r.not_stopped_rate <= 1
        stopped = sum(x.stop_index is not None for x in r.runs)
        assert len(r.z_samples) == stopped
        assert r.not_stopped_rate == (100 - stopped) / 100 > 0
        assert r.rejection_ci95[0] <= r.rejection_rate <= r.rejection_ci95[1]
        assert r.rejection_rate == sum(x.status is Status.REJECTED for x in r.runs) / 100

    def test_null_level(self):
        r = run_calibration(CalibrationSpec("ibl_blind", 1000, CFG, master_seed=1234))
        lo, hi = binomial_range(0.05, 1000, 0.999)
        assert lo <= r.rejection_rate <= hi
        assert r.ks_distance < 0.07

    def test_power_monotone_in_stimulus_weight(self):
        rates = [run_calibration(CalibrationSpec("ibl_visible", 600, CFG, 77, IblParams(w_a=w))).rejection_rate
                 for w in (0.0, 0.5, 1.0)]
        assert rates[0] <= rates[1] <= rates[2]
        assert rates[2] > 0.2

    def test_gambler_scenario(self):
        r = run_calibration(CalibrationSpec("gambler_fair_odds", 50, TestConfig(1.0), 0, GamblerParams(0.25)))
        assert r.n_runs == 50 and r.not_stopped_rate == 0.0

    def test_errors_carry_run_index(self):
        spec = CalibrationSpec("walk_state_dependent", 2, TestConfig(10.0))
        # params of a type no simulator accepts
        object.__setattr__(spec, "scenario_params", object())
        with pytest.raises(RuntimeError, match="run 0"):
            run_calibration(spec)


class TestCompareStoppingRules:
    def test_ibl_blind_no_pathology(self):
        c = compare_stopping_rules(CalibrationSpec("ibl_blind", 400, CFG, master_seed=8), 500)
        lo, hi = binomial_range(0.05, 400, 0.999)
        assert lo <= c.fixed_horizon.rejection_rate <= hi
        assert lo <= c.fixed_variance.rejection_rate <= hi
        assert c.fixed_variance_not_stopped_rate == 0.0

    def test_state_dependent_walk(self):
        c = compare_stopping_rules(CalibrationSpec("walk_state_dependent", 300, TestConfig(100.0), master_seed=8), 10_000)
        assert c.fixed_horizon.negative_fraction > 0.9
        assert abs(c.fixed_variance.positive_fraction - 0.5) < 4 * math.sqrt(0.25 / 300)

    def test_self_phacking_walk(self):
        c = compare_stopping_rules(CalibrationSpec("walk_self_phacking", 300, TestConfig(100.0), master_seed=8), 1000)
        assert c.ever_significant_rate > 0.2
        assert c.fixed_variance.rejection_rate <= 0.07
        assert c.fixed_t == 1000 and c.n_runs == 300

    def test_reproducible(self):
        spec = CalibrationSpec("walk_state_dependent", 30, TestConfig(100.0), master_seed=1)
        assert compare_stopping_rules(spec, 2000) == compare_stopping_rules(spec, 2000)

    def test_rejects_gambler(self):
        with pytest.raises(ValueError):
            compare_stopping_rules(CalibrationSpec("gambler_fair_odds", 2, CFG), 10)

    def test_bad_horizon(self):
        with pytest.raises(ValueError):
            compare_stopping_rules(CalibrationSpec("ibl_blind", 2, CFG), 0)
