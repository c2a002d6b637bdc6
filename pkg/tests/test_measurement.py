"""Combiner sampling, observation model, SNR calibration, pre-whitening."""

import numpy as np
import pytest

from nfbpd.channel import SystemConfig, generate_channel, sample_paths
from nfbpd.errors import NumericalError
from nfbpd.measurement import (MeasurementEnsemble, observe, prewhiten,
                               sample_combiners, sigma_for_snr)
from nfbpd.polar import build_dictionary, build_grid


@pytest.fixture(scope="module")
def cfg():
    return SystemConfig(num_antennas=32, num_subcarriers=8,
                        carrier_freq=100e9, bandwidth=10e9)


@pytest.fixture(scope="module")
def pdict(cfg):
    return build_dictionary(cfg, build_grid(cfg, 16, 3, 0.8))


def make_channel(cfg, seed=1):
    rng = np.random.default_rng(seed)
    return generate_channel(cfg, sample_paths(cfg, 3, 5.0, 30.0, rng))


class TestSampleCombiners:
    def test_entry_magnitudes(self, cfg):
        ens = sample_combiners(cfg, 4, 2, np.random.default_rng(0))
        np.testing.assert_allclose(np.abs(ens.combiners), 1 / np.sqrt(32))
        assert ens.stacked.shape == (8, 32)

    def test_qpsk_entries(self, cfg):
        ens = sample_combiners(cfg, 4, 2, np.random.default_rng(0), kind="qpsk")
        np.testing.assert_allclose(np.abs(ens.combiners), 1 / np.sqrt(32))
        phases = np.angle(ens.combiners * np.sqrt(32))
        steps = np.round(phases / (np.pi / 2))
        np.testing.assert_allclose(phases, steps * np.pi / 2, atol=1e-12)

    def test_seed_determinism(self, cfg):
        a = sample_combiners(cfg, 3, 2, np.random.default_rng(5))
        b = sample_combiners(cfg, 3, 2, np.random.default_rng(5))
        np.testing.assert_array_equal(a.combiners, b.combiners)

    def test_entry_mean_clt_bound(self):
        # 3-sigma CLT bound on the empirical mean of +-1/sqrt(N) entries
        wide = SystemConfig(num_antennas=1000, num_subcarriers=2,
                            carrier_freq=100e9, bandwidth=10e9)
        rng = np.random.default_rng(12)
        draws = sample_combiners(wide, 10, 10, rng).combiners.real.ravel()
        assert draws.size == 100_000
        bound = 3 * (1 / np.sqrt(1000)) / np.sqrt(draws.size)
        assert abs(draws.mean()) < bound

    def test_rejects_oversized_measurement_block(self, cfg):
        with pytest.raises(ValueError):
            sample_combiners(cfg, 9, 4, np.random.default_rng(0))  # 36 > 32

    def test_rejects_unknown_kind(self, cfg):
        with pytest.raises(ValueError):
            sample_combiners(cfg, 2, 2, np.random.default_rng(0), kind="gaussian")


class TestObserve:
    def test_noiseless_is_exact(self, cfg):
        chan = make_channel(cfg)
        ens = sample_combiners(cfg, 4, 2, np.random.default_rng(2))
        obs = observe(ens, chan, 0.0, np.random.default_rng(3))
        np.testing.assert_array_equal(obs.raw, ens.stacked @ chan.matrix)

    def test_linearity_in_channel(self, cfg):
        chan = make_channel(cfg)
        ens = sample_combiners(cfg, 4, 2, np.random.default_rng(2))
        y1 = observe(ens, chan, 0.0, np.random.default_rng(0)).raw
        y2 = observe(ens, 2.0 * chan.matrix, 0.0, np.random.default_rng(0)).raw
        np.testing.assert_allclose(y2, 2.0 * y1, rtol=1e-12)

    def test_pure_noise_energy(self, cfg):
        # H = 0: E||column||^2 = sigma^2 tr(blockdiag A_p A_p^H); 500 draws
        ens = sample_combiners(cfg, 4, 2, np.random.default_rng(7))
        sigma = 0.8
        gram_trace = sum(np.trace(a @ a.conj().T).real for a in ens.combiners)
        rng = np.random.default_rng(8)
        h0 = np.zeros((32, 8))
        energies = [np.linalg.norm(observe(ens, h0, sigma, rng).raw[:, 0]) ** 2
                    for _ in range(500)]
        assert np.mean(energies) == pytest.approx(sigma**2 * gram_trace, rel=0.1)

    def test_rejects_negative_sigma(self, cfg):
        ens = sample_combiners(cfg, 2, 2, np.random.default_rng(0))
        with pytest.raises(ValueError):
            observe(ens, make_channel(cfg), -1.0, np.random.default_rng(0))


class TestSigmaForSnr:
    def test_zero_db_closed_form(self, cfg):
        chan = make_channel(cfg)
        ens = sample_combiners(cfg, 4, 2, np.random.default_rng(2))
        sigma = sigma_for_snr(ens, chan, 0.0)
        energy = np.linalg.norm(chan.matrix) ** 2
        assert sigma**2 == pytest.approx(energy / (8 * 8), rel=1e-12)

    def test_infinite_snr_gives_zero_sigma(self, cfg):
        chan = make_channel(cfg)
        ens = sample_combiners(cfg, 4, 2, np.random.default_rng(2))
        assert sigma_for_snr(ens, chan, np.inf) == 0.0
        assert sigma_for_snr(ens, chan, 60.0) < sigma_for_snr(ens, chan, 0.0)

    def test_realized_snr_within_half_db(self, cfg, pdict):
        # whitened-noise energy over 200 draws vs the 5 dB target
        chan = make_channel(cfg)
        ens = sample_combiners(cfg, 4, 2, np.random.default_rng(2))
        sigma = sigma_for_snr(ens, chan, 5.0)
        h0 = np.zeros_like(chan.matrix)
        rng = np.random.default_rng(3)
        energies = []
        for _ in range(200):
            obs = observe(ens, h0, sigma, rng)
            prewhiten(ens, obs)
            energies.append(np.linalg.norm(obs.whitened) ** 2)
        realized = 10 * np.log10(np.linalg.norm(chan.matrix) ** 2 / np.mean(energies))
        assert realized == pytest.approx(5.0, abs=0.5)

    def test_precombining_convention(self, cfg):
        chan = make_channel(cfg)
        ens = sample_combiners(cfg, 4, 2, np.random.default_rng(2))
        s_pre = sigma_for_snr(ens, chan, 0.0, convention="precombining")
        energy = np.linalg.norm(chan.matrix) ** 2
        assert s_pre**2 == pytest.approx(energy / (8 * 4 * 32), rel=1e-12)

    def test_rejects_zero_channel(self, cfg):
        ens = sample_combiners(cfg, 2, 2, np.random.default_rng(0))
        with pytest.raises(ValueError):
            sigma_for_snr(ens, np.zeros((32, 8)), 5.0)


class TestPrewhiten:
    def test_orthonormal_rows_make_whitening_identity(self, cfg):
        # rows of an orthonormal combiner give C proportional to I
        rng = np.random.default_rng(4)
        q, _ = np.linalg.qr(rng.standard_normal((32, 32))
                            + 1j * rng.standard_normal((32, 32)))
        comb = np.stack([q[:4].conj(), q[4:8].conj()])
        ens = MeasurementEnsemble(cfg=cfg, combiners=comb,
                                  stacked=comb.reshape(8, 32))
        chan = make_channel(cfg)
        obs = observe(ens, chan, 0.3, np.random.default_rng(5))
        prewhiten(ens, obs)
        np.testing.assert_allclose(obs.whitened, obs.raw, atol=1e-10)

    def test_whitening_identity_sigma_free(self, cfg):
        # D^-1 blockdiag{A_p A_p^H} D^-H = I to 1e-8
        ens = sample_combiners(cfg, 4, 2, np.random.default_rng(6))
        obs = observe(ens, make_channel(cfg), 0.1, np.random.default_rng(7))
        prewhiten(ens, obs)
        for p in range(4):
            gram = ens.combiners[p] @ ens.combiners[p].conj().T
            dinv = ens.whitener_inv_blocks[p]
            np.testing.assert_allclose(dinv @ gram @ dinv.conj().T, np.eye(2),
                                       atol=1e-8)
            d = ens.whitener_blocks[p]
            np.testing.assert_allclose(d @ d.conj().T, gram, atol=1e-10)

    def test_per_block_equals_monolithic(self, cfg, pdict):
        # assembling the per-block Hermitian square root reproduces the
        # square root of the full block-diagonal matrix
        ens = sample_combiners(cfg, 4, 2, np.random.default_rng(8))
        obs = observe(ens, make_channel(cfg), 0.1, np.random.default_rng(9))
        prewhiten(ens, obs, pdict)
        full = np.zeros((8, 8), dtype=complex)
        for p in range(4):
            blk = ens.combiners[p] @ ens.combiners[p].conj().T
            full[2 * p:2 * p + 2, 2 * p:2 * p + 2] = blk
        w, v = np.linalg.eigh(full)
        d_inv_mono = (v / np.sqrt(w)) @ v.conj().T
        psi_mono = d_inv_mono @ (ens.stacked @ pdict.matrix)
        assert np.max(np.abs(psi_mono - ens.psi)) < 1e-8

    def test_whitened_noise_covariance(self, cfg):
        # sample covariance of whitened pure-noise columns approaches
        # sigma^2 I (10% Frobenius-relative here; the tight 5% check is in
        # the acceptance suite)
        ens = sample_combiners(cfg, 4, 2, np.random.default_rng(10))
        sigma = 0.7
        h0 = np.zeros((32, 8))
        rng = np.random.default_rng(11)
        cols = []
        for _ in range(500):
            obs = observe(ens, h0, sigma, rng)
            prewhiten(ens, obs)
            cols.append(obs.whitened)
        stack = np.concatenate(cols, axis=1)
        cov = stack @ stack.conj().T / stack.shape[1]
        target = sigma**2 * np.eye(8)
        rel = np.linalg.norm(cov - target) / np.linalg.norm(target)
        assert rel < 0.10

    def test_rank_deficient_combiner_rejected(self, cfg):
        comb = np.zeros((1, 2, 32), dtype=complex)
        comb[0, 0] = 1 / np.sqrt(32)
        comb[0, 1] = comb[0, 0]  # duplicate row -> singular block
        ens = MeasurementEnsemble(cfg=cfg, combiners=comb,
                                  stacked=comb.reshape(2, 32))
        obs = observe(ens, make_channel(cfg), 0.0, np.random.default_rng(0))
        with pytest.raises(NumericalError):
            prewhiten(ens, obs)

    def test_psi_shape_and_cache(self, cfg, pdict):
        ens = sample_combiners(cfg, 4, 2, np.random.default_rng(12))
        obs = observe(ens, make_channel(cfg), 0.0, np.random.default_rng(0))
        prewhiten(ens, obs, pdict)
        assert ens.psi.shape == (8, 48)
        first = ens.psi
        obs2 = observe(ens, make_channel(cfg, seed=2), 0.0, np.random.default_rng(1))
        prewhiten(ens, obs2, pdict)
        assert ens.psi is first  # cached across observations
