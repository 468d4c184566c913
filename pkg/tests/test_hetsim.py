import numpy as np
import pytest

from homsim import fockspace as fs
from homsim import hetsim
from homsim import recordio
from homsim.wavepacket import FilterSpec, PulseTrainConfig

KAPPA = 2 * np.pi * 4.35e6


def short_train(delta_tau=0.0, pulses=2):
    return PulseTrainConfig(
        delta_tau=delta_tau, pulses_per_sequence=pulses,
        sequence_period=4e-6, kappa_a=KAPPA, kappa_b=KAPPA,
    )


class TestHusimiSampler:
    def test_vacuum_moments(self):
        rng = np.random.default_rng(1)
        a, b = hetsim.sample_husimi(fs.vacuum(), rng, size=40000)
        assert np.mean(np.abs(a) ** 2) == pytest.approx(1.0, abs=0.03)
        assert np.mean(np.abs(b) ** 2) == pytest.approx(1.0, abs=0.03)
        # variance 1/2 per quadrature
        assert np.var(a.real) == pytest.approx(0.5, abs=0.02)
        assert np.var(a.imag) == pytest.approx(0.5, abs=0.02)

    def test_single_photon_power(self):
        rng = np.random.default_rng(2)
        a, _ = hetsim.sample_husimi(fs.fock(1, 0), rng, size=40000)
        assert np.mean(np.abs(a) ** 2) == pytest.approx(2.0, abs=0.05)

    def test_noon_cross_power(self):
        rng = np.random.default_rng(3)
        a, b = hetsim.sample_husimi(fs.noon_state(), rng, size=60000)
        cross = np.mean(np.abs(a) ** 2 * np.abs(b) ** 2)
        assert cross == pytest.approx(3.0, abs=0.12)
        # marginal powers carry one photon + vacuum each
        assert np.mean(np.abs(a) ** 2) == pytest.approx(2.0, abs=0.05)

    def test_acceptance_rate_matches_analytic_bound(self):
        sampler = hetsim.FockStateSampler(
            {(2, 0): 1 / np.sqrt(2), (0, 2): 1 / np.sqrt(2)}
        )
        rng = np.random.default_rng(4)
        sampler.sample(30000, rng)
        rate = sampler.accepted / sampler.proposals_used
        assert rate == pytest.approx(sampler.acceptance_bound, rel=0.05)
        assert sampler.acceptance_bound == 0.5

    def test_cutoff_guard(self):
        rng = np.random.default_rng(0)
        big = fs.fock(0, 0, cutoff=4)
        with pytest.raises(ValueError, match="cutoff"):
            hetsim.sample_husimi(big, rng)

    def test_phase_coherence_moment(self):
        # superposition state has a nonzero <a† b> anti-normal moment
        state = fs.apply_beam_splitter(fs.prepare_input(0.0, 1 / np.sqrt(2)))
        rng = np.random.default_rng(5)
        a, b = hetsim.sample_husimi(state, rng, size=60000)
        got = np.mean(np.conj(a) * b)
        want = fs.moment_expectation(state, (1, 0, 0, 1))  # <a† b>, noise-free
        assert got.real == pytest.approx(want.real, abs=0.03)
        assert got.imag == pytest.approx(want.imag, abs=0.03)


class TestPulseState:
    def test_single_temporal_mode_matches_fockspace(self):
        terms = hetsim._pulse_state_terms(1.0, 1.0, np.array([1.0]), 1)
        expected = fs.apply_beam_splitter(fs.prepare_input(1.0, 1.0))
        for (na, nb), amp in terms.items():
            assert amp == pytest.approx(expected.amplitude(na, nb), abs=1e-12)

    @pytest.mark.parametrize("phi", [0.0, 1.1])
    def test_superposition_terms_match_fockspace(self, phi):
        beta_b = np.exp(1j * phi) / np.sqrt(2)
        terms = hetsim._pulse_state_terms(-1j / np.sqrt(2), beta_b, np.array([1.0]), 1)
        expected = fs.apply_beam_splitter(fs.prepare_input(-1j / np.sqrt(2), beta_b))
        total = 0.0
        for (na, nb), amp in terms.items():
            assert amp == pytest.approx(expected.amplitude(na, nb), abs=1e-12)
            total += abs(amp) ** 2
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_distinguishable_limit_occupations(self):
        # nearly orthogonal wavepackets: the six two-photon terms of
        # independent routing, each pair of photons split across outputs
        # with probability 1/2
        c = np.array([0.0, 1.0])
        terms = hetsim._pulse_state_terms(1.0, 1.0, c, 2)
        occs = {occ: abs(amp) ** 2 for occ, amp in terms.items()}
        # modes (a1, a2, b1, b2)
        assert occs[(1, 1, 0, 0)] == pytest.approx(0.25, abs=1e-12)
        assert occs[(0, 0, 1, 1)] == pytest.approx(0.25, abs=1e-12)
        assert occs[(1, 0, 0, 1)] == pytest.approx(0.25, abs=1e-12)
        assert occs[(0, 1, 1, 0)] == pytest.approx(0.25, abs=1e-12)
        assert sum(occs.values()) == pytest.approx(1.0, abs=1e-12)


class TestRecordSynthesis:
    def test_same_seed_bit_identical(self):
        cfg = hetsim.ScenarioConfig(train=short_train(), shots=24, seed=99)
        noise = hetsim.NoiseModel(added_noise_photons_a=2, added_noise_photons_b=2)
        b1 = hetsim.simulate_records(cfg, noise).generate_batch(0)
        b2 = hetsim.simulate_records(cfg, noise).generate_batch(0)
        assert np.array_equal(b1.samples_a, b2.samples_a)
        assert np.array_equal(b1.samples_b, b2.samples_b)

    def test_different_seeds_differ(self):
        noise = hetsim.NoiseModel()
        cfg1 = hetsim.ScenarioConfig(train=short_train(), shots=4, seed=1)
        cfg2 = hetsim.ScenarioConfig(train=short_train(), shots=4, seed=2)
        b1 = hetsim.simulate_records(cfg1, noise).generate_batch(0)
        b2 = hetsim.simulate_records(cfg2, noise).generate_batch(0)
        assert not np.array_equal(b1.samples_a, b2.samples_a)

    def test_calibration_vacuum_unit(self):
        noise = hetsim.NoiseModel(added_noise_photons_a=0, added_noise_photons_b=0)
        stream = hetsim.calibration_records(noise, shots=64, seed=5, train=short_train())
        powers = []
        for batch in stream:
            powers.append(np.mean(np.abs(batch.samples_a.astype(np.complex128)) ** 2))
        measured = np.mean(powers)
        expected = noise.vacuum_unit_per_sample
        assert measured == pytest.approx(expected, rel=0.02)

    def test_calibration_added_noise_scaling(self):
        noise0 = hetsim.NoiseModel(added_noise_photons_a=0, added_noise_photons_b=0)
        noise10 = hetsim.NoiseModel(added_noise_photons_a=10, added_noise_photons_b=10)
        p = {}
        for tag, noise in (("0", noise0), ("10", noise10)):
            batch = hetsim.calibration_records(
                noise, shots=64, seed=5, train=short_train()
            ).generate_batch(0)
            p[tag] = np.mean(np.abs(batch.samples_a.astype(np.complex128)) ** 2)
        assert p["10"] / p["0"] == pytest.approx(11.0, rel=0.03)

    def test_calibration_odd_moments_vanish(self):
        noise = hetsim.NoiseModel(added_noise_photons_a=3, added_noise_photons_b=3)
        batch = hetsim.calibration_records(
            noise, shots=128, seed=6, train=short_train()
        ).generate_batch(0)
        s = batch.samples_a.astype(np.complex128).ravel()
        n = s.size
        mean = np.mean(s)
        sigma1 = np.sqrt(np.mean(np.abs(s) ** 2) / n)
        assert abs(mean) < 5 * sigma1
        third = np.mean(s ** 2 * np.conj(s))
        sigma3 = np.sqrt(np.mean(np.abs(s) ** 6) / n)
        assert abs(third) < 5 * sigma3

    def test_matched_mode_power_unfiltered(self):
        # both sources on at zero delay: each output mode carries one photon,
        # so the matched projection has anti-normal power 2; an orthogonal
        # (strongly delayed) filter sees only vacuum (power 1); a single
        # source leaves half a photon per output (power 1.5)
        train = short_train(pulses=1)
        noise = hetsim.NoiseModel(
            added_noise_photons_a=0, added_noise_photons_b=0, filter=None
        )

        def matched_power(cfg, offset=0):
            synth = hetsim.simulate_records(cfg, noise)
            modes, _ = synth.pulses[0]
            tpl = modes.temporal[0]
            vals = []
            for batch in synth:
                seg = batch.samples_a[:, modes.i0 + offset: modes.i0 + offset + tpl.size]
                amp = seg.astype(np.complex128) @ np.conj(tpl) * synth.dt
                vals.append(np.abs(amp) ** 2)
            vals = np.concatenate(vals)
            return np.mean(vals), 5 * np.std(vals) / np.sqrt(vals.size)

        noon_cfg = hetsim.ScenarioConfig(train=train, shots=4096, seed=11)
        mean, tol = matched_power(noon_cfg)
        assert mean == pytest.approx(2.0, abs=tol)
        mean, tol = matched_power(noon_cfg, offset=120)  # delayed ≫ 1/κ: vacuum only
        assert mean == pytest.approx(1.0, abs=tol)
        single_cfg = hetsim.ScenarioConfig(
            source_b_on=False, beta_b=0.0, train=train, shots=4096, seed=11
        )
        mean, tol = matched_power(single_cfg)
        assert mean == pytest.approx(1.5, abs=tol)

    def test_pulse_train_must_fit(self):
        train = PulseTrainConfig(
            pulses_per_sequence=20, sequence_period=10.3e-6, kappa_a=KAPPA, kappa_b=KAPPA
        )
        cfg = hetsim.ScenarioConfig(train=train, shots=1)
        with pytest.raises(ValueError, match="fit inside"):
            hetsim.simulate_records(cfg, hetsim.NoiseModel())

    def test_relative_gain_scales_channel_b(self):
        train = short_train()
        noise1 = hetsim.NoiseModel(relative_gain=1.0)
        noise2 = hetsim.NoiseModel(relative_gain=2.0)
        cfg = hetsim.ScenarioConfig(train=train, shots=8, seed=3)
        b1 = hetsim.simulate_records(cfg, noise1).generate_batch(0)
        b2 = hetsim.simulate_records(cfg, noise2).generate_batch(0)
        np.testing.assert_allclose(b2.samples_b, 2.0 * b1.samples_b, rtol=1e-5)
        np.testing.assert_allclose(b2.samples_a, b1.samples_a, rtol=1e-7)


class TestRecordIO:
    def test_round_trip(self, tmp_path):
        cfg = hetsim.ScenarioConfig(train=short_train(), shots=10, seed=42)
        noise = hetsim.NoiseModel(added_noise_photons_a=1, added_noise_photons_b=1)
        synth = hetsim.simulate_records(cfg, noise, scenario_tag="unit")
        path = tmp_path / "records.bin"
        batches = list(synth)
        with recordio.RecordWriter(
            path, dt=synth.dt, n_samples=synth.n_samples, scenario_tag="unit",
            sidecar={"scenario": cfg.to_dict(), "noise": hetsim.noise_model_to_dict(noise)},
        ) as writer:
            for batch in batches:
                writer.write(batch)

        header = recordio.read_header(path)
        assert header["shots"] == 10
        assert header["scenario_tag"] == "unit"
        assert header["dt"] == synth.dt

        back = list(recordio.iter_record_batches(path, batch_size=4))
        gathered_a = np.concatenate([b.samples_a for b in back])
        orig_a = np.concatenate([b.samples_a for b in batches])
        assert np.array_equal(gathered_a, orig_a)
        gathered_b = np.concatenate([b.samples_b for b in back])
        orig_b = np.concatenate([b.samples_b for b in batches])
        assert np.array_equal(gathered_b, orig_b)

        sidecar = recordio.read_sidecar(path)
        round_cfg = hetsim.ScenarioConfig.from_dict(sidecar["scenario"])
        assert round_cfg == cfg
        round_noise = hetsim.noise_model_from_dict(sidecar["noise"])
        assert round_noise == noise

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOTMAGIC" + b"\0" * 100)
        with pytest.raises(ValueError, match="magic"):
            recordio.read_header(path)
