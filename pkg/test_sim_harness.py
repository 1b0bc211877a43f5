import math

import numpy as np
import pytest

from errors import ConfigurationError, ExperimentError
from channel_model import KappaLaw, SystemConfig
from sim_harness import (METRICS, Experiment, ExperimentCase, builtin_experiments,
                         estimate_mean, find_experiment, run_case, run_experiment)


def _experiment(outputs, trials=10, M=8, L=2, N=1, snr=(0.0, 10.0, 20.0), law=None, **case_fields):
    config = SystemConfig(M=M, L=L, N=N, snr_grid_db=snr)
    case = ExperimentCase(label="case", config=config, kappa_law=law or KappaLaw.rayleigh(),
                          outputs=outputs, **case_fields)
    return Experiment(name="test", trials=trials, cases=[case])


def _by_metric(rows):
    table = {}
    for row in rows:
        table.setdefault(row.metric, []).append(row)
    return table


class TestEstimateMean:

    def test_single_sample_has_zero_width(self):
        assert estimate_mean([2.5]) == (2.5, 0.0)

    def test_normal_half_width(self):
        mean, half_width = estimate_mean([1.0, 2.0, 3.0])
        assert mean == 2.0
        assert half_width == pytest.approx(1.96 / math.sqrt(3))


class TestRunExperiment:

    def test_identity_fixture(self):
        experiment = _experiment(("c_dpc",), trials=1, M=2, L=2, snr=(10 * math.log10(2.0),),
                                 fixed_channel=np.eye(2, dtype=complex))
        [row] = run_experiment(experiment)
        assert row.mean == pytest.approx(2.0, abs=1e-9)
        assert row.half_width_95 == 0.0
        assert row.trials == 1
        assert row.experiment == "test/case"

    def test_row_layout(self):
        rows = run_experiment(_experiment(("c_dpc", "c_zf"), trials=4), seed=5)
        assert len(rows) == 3 * 2
        assert [row.snr_db for row in rows] == [0.0, 0.0, 10.0, 10.0, 20.0, 20.0]
        assert all(row.seed == 5 and row.trials == 4 for row in rows)

    def test_same_seed_same_table(self):
        experiment = _experiment(("c_dpc", "c_zf", "loss_mc"), trials=6)
        assert run_experiment(experiment, seed=3) == run_experiment(experiment, seed=3)
        assert run_experiment(experiment, seed=3) != run_experiment(experiment, seed=4)

    def test_worker_count_does_not_change_results(self):
        experiment = _experiment(("c_dpc", "c_zf", "loss_analytic"), trials=8,
                                 law=KappaLaw.lognormal(9.0, 5.0))
        serial = run_experiment(experiment, workers=1, seed=11)
        parallel = run_experiment(experiment, workers=3, seed=11)
        assert serial == parallel

    def test_capacities_increase_with_snr(self):
        rows = run_experiment(_experiment(("c_dpc", "c_zf", "c_bd"), trials=20, M=8, L=2, N=2,
                                          snr=(-10.0, 0.0, 10.0, 20.0)), seed=1)
        for metric, metric_rows in _by_metric(rows).items():
            means = [row.mean for row in metric_rows]
            assert all(b > a for a, b in zip(means, means[1:])), metric

    def test_precoders_agree_at_low_snr(self):
        rows = run_experiment(_experiment(("gap_zf",), trials=30, M=8, L=4, snr=(-10.0, 20.0)), seed=2)
        low, high = rows
        assert 0 <= low.mean < high.mean

    def test_snr_free_metrics_repeat_across_the_grid(self):
        rows = run_experiment(_experiment(("loss_mc", "condition_number_db"), trials=5), seed=8)
        for metric_rows in _by_metric(rows).values():
            assert len({row.mean for row in metric_rows}) == 1

    def test_half_width_shrinks_with_trials(self):
        experiment = _experiment(("c_zf",), trials=1, snr=(10.0,))
        case = experiment.cases[0]
        [small] = run_case("test", case, 400, seed=6)
        [large] = run_case("test", case, 800, seed=6)
        assert 0.6 <= large.half_width_95 / small.half_width_95 <= 0.82

    def test_weighted_metrics(self):
        config = SystemConfig(M=16, L=2, N=1, snr_grid_db=(0.0, 20.0), weights=(0.6, 0.4))
        law = KappaLaw(kind="lognormal", mean_db=9.0, var_db=5.0, pinned_db=(9.0, None))
        case = ExperimentCase(label="w", config=config, kappa_law=law,
                              outputs=("weighted_gap", "weighted_loss"))
        rows = run_experiment(Experiment(name="weighted", trials=2, cases=[case]), seed=4)
        table = _by_metric(rows)
        assert all(-1e-12 <= row.mean <= 0.5 for row in table["weighted_gap"])
        assert all(row.mean >= 0 for row in table["weighted_loss"])

    def test_per_trial_rows(self):
        experiment = _experiment(("c_dpc", "c_zf"), trials=3, snr=(0.0, 10.0), per_trial=True)
        rows = run_experiment(experiment, seed=9)
        assert len(rows) == 3 * 2 * 2
        assert [row.experiment for row in rows[::4]] == ["test/case#0", "test/case#1", "test/case#2"]
        assert all(row.trials == 1 and row.half_width_95 == 0.0 for row in rows)
        pooled = _by_metric(run_experiment(_experiment(("c_dpc", "c_zf"), trials=3, snr=(0.0, 10.0)), seed=9))
        per_trial = [row.mean for row in rows if row.metric == "c_zf" and row.snr_db == 10.0]
        assert pooled["c_zf"][1].mean == pytest.approx(np.mean(per_trial), rel=1e-12)

    def test_failures_beyond_budget(self):
        experiment = _experiment(("c_zf",), trials=4, M=2, L=2, snr=(0.0,),
                                 fixed_channel=np.zeros((2, 2), dtype=complex))
        with pytest.raises(ExperimentError) as excinfo:
            run_experiment(experiment)
        assert excinfo.value.failures == 4
        assert excinfo.value.trials == 4

    def test_invalid_experiment(self):
        with pytest.raises(ConfigurationError):
            run_experiment(_experiment(("c_dpc", "throughput")))
        with pytest.raises(ConfigurationError):
            run_experiment(_experiment(("weighted_gap",), M=8, L=2, N=2))

    @pytest.mark.slow
    def test_strong_los_lowers_linear_capacities(self):
        laws = {"rayleigh": KappaLaw.rayleigh(), "k1": KappaLaw.fixed(1.0), "k20": KappaLaw.fixed(20.0)}
        zf, bd = {}, {}
        for label, law in laws.items():
            zf[label] = _by_metric(run_experiment(_experiment(("c_zf", "gap_zf"), trials=300, M=64, L=8,
                                                              snr=(20.0, 30.0), law=law), seed=12))
            bd[label] = _by_metric(run_experiment(_experiment(("c_bd",), trials=300, M=64, L=4, N=2,
                                                              snr=(20.0,), law=law), seed=12))
        assert zf["k20"]["c_zf"][0].mean < zf["k1"]["c_zf"][0].mean
        assert bd["k20"]["c_bd"][0].mean < bd["k1"]["c_bd"][0].mean
        assert zf["k20"]["gap_zf"][1].mean > zf["rayleigh"]["gap_zf"][1].mean

    @pytest.mark.slow
    def test_strong_los_worsens_conditioning(self):
        means = {}
        for label, law in (("rayleigh", KappaLaw.rayleigh()), ("k20", KappaLaw.fixed(20.0))):
            [row] = run_experiment(_experiment(("condition_number_db",), trials=2000, M=64, L=8,
                                               snr=(20.0,), law=law), seed=12)
            means[label] = row.mean
        assert means["k20"] >= means["rayleigh"] + 10.0


class TestBuiltinExperiments:

    def test_presets(self):
        experiments = {e.name: e for e in builtin_experiments()}
        assert set(experiments) == {"fig1", "fig2", "fig3", "fig4"}
        for experiment in experiments.values():
            assert experiment.violations() == []
            for case in experiment.cases:
                assert set(case.outputs) <= set(METRICS)

    def test_fig1_kappa_cases(self):
        fig1 = find_experiment("fig1")
        values = {case.kappa_law.value_db for case in fig1.cases}
        assert values == {-math.inf, 1.0, 20.0}
        assert {(case.config.L, case.config.N) for case in fig1.cases} == {(8, 1), (4, 2)}
        assert all(case.config.M == 64 for case in fig1.cases)

    def test_fig2_antenna_counts(self):
        fig2 = find_experiment("fig2")
        assert {case.config.M for case in fig2.cases} == {64, 32}
        assert all(case.kappa_law.kind == "lognormal" for case in fig2.cases)

    def test_fig3_compares_monte_carlo_and_closed_form(self):
        zf_case = find_experiment("fig3").cases[0]
        assert {"loss_mc", "loss_analytic"} <= set(zf_case.outputs)
        assert (zf_case.config.M, zf_case.config.L, zf_case.config.N) == (64, 8, 1)

    def test_fig4_weights(self):
        fig4 = find_experiment("fig4")
        [case] = fig4.cases
        assert case.config.user_weights() == (0.6, 0.4)
        assert (case.config.M, case.config.L, case.config.N) == (32, 2, 1)
        assert case.kappa_law.pinned_db == (9.0, None)
        assert case.per_trial
        assert case.to_dict()['per_trial'] is True
        assert fig4.trials == 3

    def test_fig4_weighted_gap_per_realization(self):
        fig4 = find_experiment("fig4")
        rows = run_experiment(fig4, seed=2024)
        gaps = {}
        for row in rows:
            if row.metric == "weighted_gap":
                gaps.setdefault(row.experiment, []).append((row.snr_db, row.mean))
        assert sorted(gaps) == [f"fig4/mu-0.6-0.4#{trial}" for trial in range(3)]
        for realization, curve in gaps.items():
            snrs = [snr for snr, _ in curve]
            values = [gap for _, gap in curve]
            assert snrs == [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]
            assert all(-1e-9 <= gap <= 0.1 for gap in values), realization
            assert all(later <= earlier + 1e-5 for earlier, later in zip(values, values[1:])), realization

    def test_unknown_name(self):
        assert find_experiment("nosuch") is None
