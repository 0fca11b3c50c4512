import csv

import numpy as np
import pytest

from bdris import harness
from bdris.harness import (
    ConfigError,
    ResultRecord,
    csv_bytes,
    emit_csv,
    load_config,
    m_sweep_summary,
    parse_config,
    run_experiment,
    write_susceptance_csv,
)
from bdris.qstem import SusceptanceMatrix


class TestParseConfig:
    def test_minimal_applies_scenario_defaults(self):
        config = parse_config("experiment = rate_vs_snr\n")
        assert config.experiment == "rate_vs_snr"
        assert config.geometry.tx_pos == (0.0, 0.0, 1.5)
        assert config.geometry.ris_pos == (5.0, 3.0, 3.0)
        assert config.geometry.rx_pos == (50.0, 0.0, 1.5)
        assert config.params.rician_k == 2.0
        assert config.params.alpha_ris == 2.0
        assert config.params.alpha_direct == 4.0
        assert config.trials == 200
        assert config.direct_blocked is True
        assert config.snr_mode == "reference"

    def test_sections_and_comments(self):
        text = """
        # scenario
        experiment = m_sweep   # sweep the element count
        [params]
        n_t = 2
        n_r = 2
        rician_k = 0
        [grids]
        m_grid = 8, 32
        """
        config = parse_config(text)
        assert config.params.n_t == 2
        assert config.m_grid == (8, 32)
        assert config.apply_path_loss is False  # unit-variance default for m_sweep
        assert config.snr_mode == "rho"

    def test_zero_trials_rejected(self):
        with pytest.raises(ConfigError, match="trials"):
            parse_config("experiment = rate_vs_snr\ntrials = 0\n")

    def test_duplicate_key_names_key_and_lines(self):
        with pytest.raises(ConfigError, match="duplicate key 'trials'"):
            parse_config("experiment = rate_vs_snr\ntrials = 5\ntrials = 6\n")

    def test_unknown_key_reports_line(self):
        with pytest.raises(ConfigError, match="line 2: unknown key 'budget'"):
            parse_config("experiment = rate_vs_snr\nbudget = 3\n")

    def test_malformed_number_reports_line(self):
        with pytest.raises(ConfigError, match="line 2: invalid value for 'trials'"):
            parse_config("experiment = rate_vs_snr\ntrials = many\n")

    def test_missing_experiment(self):
        with pytest.raises(ConfigError, match="experiment"):
            parse_config("trials = 5\n")

    def test_unknown_experiment(self):
        with pytest.raises(ConfigError, match="unknown experiment"):
            parse_config("experiment = warp_drive\n")

    def test_bad_designs_rejected(self):
        with pytest.raises(ConfigError, match="unknown designs"):
            parse_config("experiment = rate_vs_snr\ndesigns = max_det_symmetric, psychic\n")

    def test_phase_correction_needs_direct_link(self):
        with pytest.raises(ConfigError, match="direct_blocked"):
            parse_config("experiment = rate_vs_snr\ndesigns = max_det_phase_corrected\n")

    def test_q_grid_bounds_checked(self):
        with pytest.raises(ConfigError, match="outside"):
            parse_config("experiment = qstem_sweep\nm = 8\nq_grid = 1, 9\n")

    def test_det_family_needs_two_streams(self):
        with pytest.raises(ConfigError, match="r >= 2"):
            parse_config("experiment = det_family\nn_t = 1\n")

    def test_malformed_lines(self):
        with pytest.raises(ConfigError, match="line 1"):
            parse_config("this is not a config\n")
        with pytest.raises(ConfigError, match="section"):
            parse_config("[oops\nexperiment = rate_vs_snr\n")

    def test_bool_values(self):
        config = parse_config(
            "experiment = rate_vs_snr\ndirect_blocked = off\n"
            "designs = max_det_symmetric\n"
        )
        assert config.direct_blocked is False
        with pytest.raises(ConfigError, match="boolean"):
            parse_config("experiment = rate_vs_snr\ndirect_blocked = maybe\n")


def tiny_config(text):
    return parse_config(text)


class TestRunRateVsSnr:
    CONFIG = """
    experiment = rate_vs_snr
    trials = 4
    master_seed = 11
    n_t = 2
    n_r = 2
    m = 8
    snr_grid_db = 0, 20
    designs = unitary_baseline, max_det_symmetric, random_symmetric
    """

    def test_structure_and_invariants(self):
        config = tiny_config(self.CONFIG)
        records = run_experiment(config)
        assert len(records) == 4 * 2 * 3
        assert all(not rec.error for rec in records)
        for rec in records:
            if rec.design == "max_det_symmetric":
                assert abs(rec.abs_det - rec.d_max) / rec.d_max <= 1e-8
            assert rec.rate_bits >= 0.0

    def test_reference_snr_calibration(self):
        config = tiny_config(self.CONFIG)
        records = [r for r in run_experiment(config) if r.design == "unitary_baseline"]
        # 20 dB rows carry a 100x larger rho, so rates must be strictly higher
        by_trial = {}
        for rec in records:
            by_trial.setdefault(rec.trial, {})[rec.sweep_value] = rec.rate_bits
        for rates in by_trial.values():
            assert rates[20.0] > rates[0.0]

    def test_byte_identical_reruns_and_thread_invariance(self):
        config = tiny_config(self.CONFIG)
        first = csv_bytes(run_experiment(config))
        second = csv_bytes(run_experiment(config))
        threaded = csv_bytes(run_experiment(config, threads=3))
        assert first == second == threaded

    def test_error_column_instead_of_abort(self, monkeypatch):
        config = tiny_config(self.CONFIG)

        def explode(channels, theta_zero_tol=1e-12):
            raise RuntimeError("synthetic failure")

        monkeypatch.setattr(harness.designs, "solve_maxdet", explode)
        records = run_experiment(config)
        failed = [r for r in records if r.design == "max_det_symmetric"]
        assert failed and all("synthetic failure" in r.error for r in failed)
        assert all(r.rate_bits is None for r in failed)
        ok = [r for r in records if r.design == "unitary_baseline"]
        assert ok and all(not r.error for r in ok)


class TestRunDirectLinkSweep:
    CONFIG = """
    experiment = direct_link_sweep
    trials = 3
    master_seed = 5
    n_t = 2
    n_r = 2
    m = 8
    snr_grid_db = 10
    direct_scale_grid = 0.001, 1, 20
    designs = max_det_symmetric, max_det_phase_corrected
    """

    def test_reference_rows_forced_and_phase_helps(self):
        records = run_experiment(tiny_config(self.CONFIG))
        designs_seen = {rec.design for rec in records}
        assert {"identity", "no_ris"} <= designs_seen
        assert all(not rec.error for rec in records)
        # phase-corrected never loses to the uncorrected design, per trial and scale
        uncorrected = {(r.trial, r.sweep_value): r.rate_bits
                       for r in records if r.design == "max_det_symmetric"}
        for rec in records:
            if rec.design == "max_det_phase_corrected":
                assert rec.rate_bits >= uncorrected[(rec.trial, rec.sweep_value)] - 1e-12

    def test_no_ris_rate_independent_of_theta_designs(self):
        records = run_experiment(tiny_config(self.CONFIG))
        # no-RIS rows must scale with the direct link only
        rows = [r for r in records if r.design == "no_ris" and r.trial == 0]
        rates = {r.sweep_value: r.rate_bits for r in rows}
        assert rates[0.001] < rates[1.0] < rates[20.0]
        assert all(r.abs_det == 0.0 for r in rows)


class TestRunQstemSweep:
    CONFIG = """
    experiment = qstem_sweep
    trials = 3
    master_seed = 7
    n_t = 2
    n_r = 2
    m = 8
    snr_grid_db = 10
    q_grid = 1, 2, 3, 4
    """

    def test_exact_recovery_at_minimum_stems(self):
        records = run_experiment(tiny_config(self.CONFIG))
        assert all(not rec.error for rec in records)
        full = {r.trial: r.rate_bits for r in records if r.design == "max_det_fully_connected"}
        ideal = {r.trial: r.rate_bits for r in records if r.design == "max_det_symmetric"}
        for rec in records:
            if rec.design == "qstem" and rec.sweep_value >= 3:  # q >= 2r - 1
                assert rec.qstem_residual < 1e-8
                assert rec.rate_bits == pytest.approx(full[rec.trial], abs=1e-6)
                assert rec.rate_bits == pytest.approx(ideal[rec.trial], abs=1e-6)

    def test_residual_monotone_per_trial(self):
        records = run_experiment(tiny_config(self.CONFIG))
        for trial in range(3):
            residuals = [r.qstem_residual for r in records
                         if r.design == "qstem" and r.trial == trial]
            assert all(b <= a + 1e-12 for a, b in zip(residuals, residuals[1:]))

    def test_mean_rate_nondecreasing_in_q(self):
        config = tiny_config(
            "experiment = qstem_sweep\ntrials = 30\nmaster_seed = 13\n"
            "snr_grid_db = 10\nq_grid = 1, 2, 3, 4, 5, 6, 7, 8, 9, 10\n"
        )
        records = run_experiment(config, threads=4)
        by_q = {}
        for rec in records:
            if rec.design == "qstem":
                by_q.setdefault(rec.sweep_value, []).append(rec.rate_bits)
        means = [np.mean(by_q[q]) for q in sorted(by_q)]
        assert all(b >= a - 1e-9 for a, b in zip(means, means[1:]))
        # saturation: from q = 2r - 1 on, nothing changes
        assert means[-1] == pytest.approx(means[6], abs=1e-6)


class TestRunMSweep:
    CONFIG = """
    experiment = m_sweep
    trials = 40
    master_seed = 3
    n_t = 2
    n_r = 2
    rician_k = 0
    m_grid = 8, 32
    snr_grid_db = 10
    """

    def test_summary_grows_with_m(self):
        records = run_experiment(tiny_config(self.CONFIG))
        summary = m_sweep_summary(records)
        assert set(summary) == {8, 32}
        means = {m: np.mean([r.sigma_min_h for r in records
                             if r.design == "max_det_symmetric" and r.sweep_value == m])
                 for m in (8, 32)}
        assert means[32] > means[8]

    def test_summary_rejects_other_experiments(self):
        records = run_experiment(tiny_config(TestRunQstemSweep.CONFIG))
        with pytest.raises(ValueError, match="m_sweep"):
            m_sweep_summary(records)


class TestRunDetFamily:
    CONFIG = """
    experiment = det_family
    trials = 2
    master_seed = 9
    n_t = 2
    n_r = 2
    m = 16
    rician_k = 0
    phi_grid = 0, 0.3926990816987241, 0.7853981633974483, 1.1780972450961724, 1.5707963267948966
    """

    def test_rotations_preserve_det_and_majorize_maxdet(self):
        records = run_experiment(tiny_config(self.CONFIG))
        assert all(not rec.error for rec in records)
        for trial in range(2):
            rows = [r for r in records if r.trial == trial]
            dets = [r.abs_det for r in rows if r.design == "rotated"]
            assert len(dets) == 5
            assert max(dets) - min(dets) <= 1e-8 * max(dets)
            rate_base = [r.rate_bits for r in rows if r.design == "unitary_baseline"][0]
            for r in rows:
                if r.design == "rotated":
                    assert r.rate_bits <= rate_base + 1e-9


class TestCsvOutput:
    def test_empty_records_rejected(self, tmp_path):
        target = tmp_path / "out.csv"
        with pytest.raises(ValueError):
            emit_csv([], target)
        assert not target.exists()

    def test_single_record_two_lines(self, tmp_path):
        rec = ResultRecord(
            experiment="rate_vs_snr", trial=0, design="identity", sweep_value=0.0,
            rate_bits=1.25, abs_det=0.5, d_max=1.0, rate_gap_bound_bits=0.1,
        )
        target = tmp_path / "one.csv"
        emit_csv([rec], target)
        lines = target.read_text().splitlines()
        assert len(lines) == 2
        assert lines[0].startswith("experiment,trial,design,sweep_value,rate_bits")

    def test_round_trip_preserves_floats(self, tmp_path):
        config = tiny_config(TestRunRateVsSnr.CONFIG)
        records = run_experiment(config)
        target = tmp_path / "run.csv"
        emit_csv(records, target)
        with open(target, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == len(records)
        for row, rec in zip(rows, records):
            assert float(row["rate_bits"]) == rec.rate_bits
            assert float(row["abs_det"]) == rec.abs_det
            assert int(row["trial"]) == rec.trial
            assert row["qstem_residual"] == ""

    def test_rfc4180_quoting_of_error_field(self, tmp_path):
        rec = ResultRecord(
            experiment="rate_vs_snr", trial=0, design="identity", sweep_value=0.0,
            rate_bits=None, abs_det=None, d_max=None, rate_gap_bound_bits=None,
            error='ValueError: bad, "quoted" value',
        )
        target = tmp_path / "err.csv"
        emit_csv([rec], target)
        with open(target, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0]["error"] == 'ValueError: bad, "quoted" value'

    def test_susceptance_csv_header(self, tmp_path):
        b = SusceptanceMatrix(b=np.zeros((4, 4)), q=2, z0=50.0)
        target = tmp_path / "b.csv"
        write_susceptance_csv(b, target)
        lines = target.read_text().splitlines()
        assert lines[0] == "# qstem q=2 M=4 Z0=50"
        assert len(lines) == 5


class TestLoadConfig(object):
    def test_reads_file(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text("experiment = rate_vs_snr\ntrials = 2\n")
        assert load_config(path).trials == 2
