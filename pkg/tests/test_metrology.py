"""Fisher-information engine: classical/quantum FI, SNL, sweeps, comparisons."""

import json
import math

import numpy as np
import pytest

from tmsvfisher import (
    ConfigError,
    FisherReport,
    FockCutoff,
    InterferometerConfig,
    LossModel,
    OutcomeDistribution,
    SqueezingParams,
    classical_fisher,
    click_povm_from,
    ideal_pnr_povm,
    max_cfi_over_phase,
    pnr_click_ratio,
    quantum_fisher_mixed,
    quantum_fisher_pure,
    shot_noise_limit,
    sub_snl_fraction,
    sweep_fisher,
)
from tmsvfisher.metrology import (
    P_FLOOR,
    default_phase_grid,
    golden_section_max,
    outcome_distribution,
)


def _config(z=0.2, loss=None, phase=0.0, max_photons=8):
    return InterferometerConfig(
        SqueezingParams(z), loss or LossModel(), phase, FockCutoff(max_photons)
    )


def _pnr(max_photons=8):
    return ideal_pnr_povm(max_photons, max_photons)


class TestClassicalFisher:
    def test_constant_distribution_gives_zero(self):
        probs = np.full((2, 2), 0.25)
        dist = OutcomeDistribution(probs, np.zeros((2, 2)), 0.3)
        assert classical_fisher(dist) == 0.0

    def test_binary_half_angle_distribution(self):
        for th in (0.2, 1.0, 2.5):
            p = np.array([math.cos(th / 2) ** 2, math.sin(th / 2) ** 2])
            dp = np.array([-0.5 * math.sin(th), 0.5 * math.sin(th)])
            dist = OutcomeDistribution(p, dp, th)
            assert classical_fisher(dist) == pytest.approx(1.0, abs=1e-12)

    def test_against_log_likelihood_curvature(self):
        # oracle: FI = -E[d^2/dtheta^2 log p] via central second differences
        cfg = _config(0.3, LossModel.symmetric(0.85), math.pi / 4)
        pnr = _pnr()
        dist = outcome_distribution(cfg, pnr, pnr)
        fi = classical_fisher(dist)
        h = 1e-4
        p0 = dist.probs
        pp = outcome_distribution(_config(0.3, LossModel.symmetric(0.85), cfg.phase + h), pnr, pnr).probs
        pm = outcome_distribution(_config(0.3, LossModel.symmetric(0.85), cfg.phase - h), pnr, pnr).probs
        live = p0 > 1e-10
        curv = np.sum(p0[live] * (np.log(pp[live]) - 2 * np.log(p0[live]) + np.log(pm[live])) / h**2)
        assert fi == pytest.approx(-curv, rel=1e-3)

    def test_negative_probability_rejected(self):
        with pytest.raises(ConfigError):
            OutcomeDistribution(np.array([-0.1, 1.1]), np.zeros(2), 0.0)


class TestQuantumFisher:
    def test_fock_state_has_zero_qfi(self):
        d = 8
        psi = np.zeros(d)
        psi[3] = 1.0
        dpsi = 1j * 3 * psi  # generator n acting on |3>
        assert quantum_fisher_pure(psi, dpsi) == pytest.approx(0.0, abs=1e-12)

    def test_coherent_state_qfi_is_four_nbar(self):
        alpha = 0.6
        d = 25
        ks = np.arange(d)
        from scipy.special import gammaln

        psi = np.exp(-abs(alpha) ** 2 / 2 + ks * np.log(alpha) - 0.5 * gammaln(ks + 1))
        dpsi = 1j * ks * psi
        assert quantum_fisher_pure(psi, dpsi) == pytest.approx(4 * alpha**2, abs=1e-8)

    def test_pure_and_mixed_branches_agree(self):
        # rank-1 density built from the same vector family
        rng = np.random.default_rng(8)
        v = rng.normal(size=12) + 1j * rng.normal(size=12)
        v /= np.linalg.norm(v)
        g = np.diag(np.arange(12.0))  # number-like generator
        dv = 1j * g @ v
        rho = np.outer(v, v.conj())
        drho = np.outer(dv, v.conj()) + np.outer(v, dv.conj())
        qp = quantum_fisher_pure(v, dv)
        qm = quantum_fisher_mixed(rho, drho)
        assert qm == pytest.approx(qp, rel=1e-8)

    def test_non_hermitian_rejected(self):
        rho = np.eye(3, dtype=complex)
        rho[0, 1] = 0.5
        with pytest.raises(ConfigError):
            quantum_fisher_mixed(rho / np.trace(rho).real, np.zeros((3, 3), dtype=complex))


class TestShotNoiseLimit:
    def test_zero_squeezing(self):
        assert shot_noise_limit(0.0) == 0.0

    def test_experimental_mean_photon_number(self):
        z = SqueezingParams.from_mean_photons(3.631e-3)
        assert shot_noise_limit(z) == pytest.approx(3.631e-3, rel=1e-12)

    def test_formula_value(self):
        assert shot_noise_limit(0.5) == pytest.approx(2.0 / 3.0, rel=1e-12)


class TestSweep:
    def test_vacuum_input_gives_zero_information(self):
        grid = np.linspace(0, 2 * math.pi, 16, endpoint=False)
        rep = sweep_fisher(_config(0.0), grid, _pnr(), _pnr())
        assert np.max(np.abs(rep.cfi)) < 1e-12
        assert np.max(np.abs(rep.qfi)) < 1e-12

    def test_phase_parity_for_symmetric_loss(self):
        cfg = _config(0.25, LossModel.symmetric(0.8))
        thetas = np.array([0.3, 1.1, 2.0])
        rep_p = sweep_fisher(cfg, thetas, _pnr(), _pnr(), compute_qfi=False)
        rep_m = sweep_fisher(cfg, -thetas, _pnr(), _pnr(), compute_qfi=False)
        assert np.max(np.abs(rep_p.cfi - rep_m.cfi)) < 1e-9

    def test_cfi_bounded_by_qfi(self):
        grid = np.linspace(0, 2 * math.pi, 24, endpoint=False)
        for loss in (LossModel(), LossModel(0.9, 0.8, 0.85, 0.95)):
            rep = sweep_fisher(_config(0.3, loss), grid, _pnr(), _pnr())
            assert np.all(rep.cfi <= rep.qfi * (1 + 1e-8) + 1e-12)

    def test_click_coarse_graining_loses_information(self):
        grid = np.linspace(0, 2 * math.pi, 24, endpoint=False)
        cfg = _config(0.3, LossModel.symmetric(0.9))
        pnr = _pnr()
        click = click_povm_from(pnr)
        rep_pnr = sweep_fisher(cfg, grid, pnr, pnr, compute_qfi=False)
        rep_click = sweep_fisher(cfg, grid, click, click, compute_qfi=False)
        assert np.all(rep_click.cfi <= rep_pnr.cfi + 1e-10)

    def test_analytic_derivative_matches_finite_difference(self):
        cfg = _config(0.3, LossModel(0.9, 0.8, 0.85, 0.95))
        pnr = _pnr()
        h = 1e-5
        for th in (0.4, 1.3, 2.7):
            dist = outcome_distribution(
                InterferometerConfig(cfg.squeezing, cfg.loss, th, cfg.cutoff), pnr, pnr
            )
            pp = outcome_distribution(
                InterferometerConfig(cfg.squeezing, cfg.loss, th + h, cfg.cutoff), pnr, pnr
            ).probs
            pm = outcome_distribution(
                InterferometerConfig(cfg.squeezing, cfg.loss, th - h, cfg.cutoff), pnr, pnr
            ).probs
            dp_fd = (pp - pm) / (2 * h)
            live = dist.probs > P_FLOOR
            fi_fd = float(np.sum(dp_fd[live] ** 2 / dist.probs[live]))
            fi = classical_fisher(dist)
            assert fi == pytest.approx(fi_fd, rel=1e-6)

    def test_lossless_pnr_max_cfi_approaches_qfi(self):
        cfg = _config(0.3)
        pnr = _pnr()
        _, max_cfi = max_cfi_over_phase(cfg, pnr, pnr)
        grid = np.linspace(0, 2 * math.pi, 64, endpoint=False)
        rep = sweep_fisher(cfg, grid, pnr, pnr)
        assert max_cfi >= 0.99 * np.max(rep.qfi)

    def test_empty_grid_rejected(self):
        with pytest.raises(ConfigError):
            sweep_fisher(_config(0.2), np.array([]), _pnr(), _pnr())

    def test_metadata_carries_provenance(self):
        grid = np.linspace(0, 2 * math.pi, 8, endpoint=False)
        rep = sweep_fisher(_config(0.2), grid, _pnr(), _pnr(), compute_qfi=False)
        for key in ("z", "n_bar", "eta_p_s", "config_hash", "version"):
            assert key in rep.metadata


class TestSubSnlFraction:
    def test_all_below_gives_zero(self):
        grid = default_phase_grid(1024)
        rep = FisherReport(grid, np.full(grid.size, 0.1), None, snl=1.0)
        assert sub_snl_fraction(rep) == 0.0

    def test_grid_refinement_stable(self):
        cfg = _config(0.25, LossModel.symmetric(0.9))
        pnr = _pnr()
        fracs = []
        for n in (2048, 4096):
            rep = sweep_fisher(cfg, default_phase_grid(n), pnr, pnr, compute_qfi=False)
            fracs.append(sub_snl_fraction(rep))
        assert abs(fracs[0] - fracs[1]) <= 0.002

    def test_lossless_fraction_exceeds_lossy(self):
        pnr = _pnr(6)
        frs = []
        for loss in (LossModel(), LossModel.symmetric(0.7)):
            cfg = _config(0.1, loss, max_photons=6)
            rep = sweep_fisher(cfg, default_phase_grid(1024), pnr, pnr, compute_qfi=False)
            frs.append(sub_snl_fraction(rep))
        assert frs[0] > frs[1]

    def test_zero_snl_rejected(self):
        grid = default_phase_grid(1024)
        rep = FisherReport(grid, np.zeros(grid.size), None, snl=0.0)
        with pytest.raises(ConfigError):
            sub_snl_fraction(rep)


class TestGoldenSection:
    def test_locates_quadratic_maximum(self):
        x, fx = golden_section_max(lambda x: -(x - 1.3) ** 2 + 2.0, 0.0, 3.0)
        assert x == pytest.approx(1.3, abs=1e-5)
        assert fx == pytest.approx(2.0, abs=1e-9)


class TestPnrClickRatio:
    def test_single_pair_regime_ratio_near_one(self):
        out = pnr_click_ratio(
            [1e-4], LossModel.symmetric(0.9), FockCutoff(6), coarse_points=64
        )
        assert out["ratio"][0] <= 1 + 1e-2
        assert out["ratio"][0] >= 1 - 1e-9

    def test_ratio_at_least_one_and_increasing(self):
        out = pnr_click_ratio(
            [0.05, 0.5, 2.0], LossModel.symmetric(0.9), FockCutoff(8), coarse_points=64
        )
        assert np.all(out["ratio"] >= 1 - 1e-9)
        assert np.all(np.diff(out["ratio"]) > 0)


class TestReportSerialization:
    def test_csv_columns_and_rows(self, tmp_path):
        grid = np.linspace(0, 2 * math.pi, 8, endpoint=False)
        rep = sweep_fisher(_config(0.2), grid, _pnr(), _pnr())
        path = tmp_path / "report.csv"
        rep.to_csv(path)
        lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
        assert lines[0] == "phase,cfi,qfi,snl,cfi_per_photon,qfi_per_photon"
        assert len(lines) == 1 + grid.size
        first = lines[1].split(",")
        assert float(first[0]) == grid[0]
        assert float(first[3]) == rep.snl

    def test_csv_metadata_header(self, tmp_path):
        grid = np.linspace(0, 2 * math.pi, 4, endpoint=False)
        rep = sweep_fisher(_config(0.2), grid, _pnr(), _pnr(), compute_qfi=False)
        path = tmp_path / "report.csv"
        rep.to_csv(path)
        header = [ln for ln in path.read_text().splitlines() if ln.startswith("#")]
        assert any("config_hash" in ln for ln in header)

    def test_json_round_trip(self, tmp_path):
        grid = np.linspace(0, 2 * math.pi, 8, endpoint=False)
        rep = sweep_fisher(_config(0.2), grid, _pnr(), _pnr())
        path = tmp_path / "report.json"
        rep.to_json(path)
        back = json.loads(path.read_text())
        assert np.allclose(back["cfi"], rep.cfi)
        assert np.allclose(back["qfi"], rep.qfi)
        assert back["snl"] == rep.snl
        assert back["metadata"]["config_hash"] == rep.metadata["config_hash"]

    def test_per_photon_normalization(self):
        grid = np.linspace(0, 2 * math.pi, 8, endpoint=False)
        rep = sweep_fisher(_config(0.2), grid, _pnr(), _pnr(), compute_qfi=False)
        assert np.allclose(rep.cfi_per_photon, rep.cfi / rep.snl)
