import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from homsim import fockspace as fs


def random_state(rng, cutoff=3, max_total=None):
    n = cutoff + 1
    amps = rng.normal(size=n * n) + 1j * rng.normal(size=n * n)
    if max_total is not None:
        na, nb = np.divmod(np.arange(n * n), n)
        amps[na + nb > max_total] = 0.0
    amps /= np.linalg.norm(amps)
    return fs.TwoModeState(amps, cutoff)


class TestPrepareInput:
    def test_fock_case(self):
        state = fs.prepare_input(1.0, 1.0)
        assert state.amplitude(1, 1) == pytest.approx(1.0)

    def test_both_idle(self):
        state = fs.prepare_input(0.0, 0.0)
        assert state.amplitude(0, 0) == pytest.approx(1.0)

    @pytest.mark.parametrize("phi", [0.0, 0.7, np.pi, 4.2])
    def test_superposition_inputs(self, phi):
        beta_a = -1j / np.sqrt(2)
        beta_b = np.exp(1j * phi) / np.sqrt(2)
        state = fs.prepare_input(beta_a, beta_b)
        # ((|0> - i|1>) ⊗ (|0> + e^{iφ}|1>)) / 2
        assert state.amplitude(0, 0) == pytest.approx(0.5)
        assert state.amplitude(0, 1) == pytest.approx(0.5 * np.exp(1j * phi))
        assert state.amplitude(1, 0) == pytest.approx(-0.5j)
        assert state.amplitude(1, 1) == pytest.approx(-0.5j * np.exp(1j * phi))

    def test_amplitude_bound(self):
        with pytest.raises(ValueError):
            fs.prepare_input(1.2, 0.0)


class TestBeamSplitter:
    def test_two_photon_coalescence(self):
        out = fs.apply_beam_splitter(fs.prepare_input(1.0, 1.0))
        noon = fs.noon_state()
        # equal up to a global phase
        assert abs(out.overlap(noon)) == pytest.approx(1.0, abs=1e-12)
        assert out.amplitude(1, 1) == pytest.approx(0.0, abs=1e-12)

    def test_vacuum_invariance(self):
        out = fs.apply_beam_splitter(fs.vacuum())
        assert out.amplitude(0, 0) == pytest.approx(1.0)

    @pytest.mark.parametrize("phi", np.linspace(0, 2 * np.pi, 9))
    def test_superposition_output_matches_printed_state(self, phi):
        inp = fs.prepare_input(-1j / np.sqrt(2), np.exp(1j * phi) / np.sqrt(2))
        out = fs.apply_beam_splitter(inp)
        expected = fs.superposition_output_state(phi)
        np.testing.assert_allclose(out.amplitudes, expected.amplitudes, atol=1e-12)

    def test_norm_and_photon_number_preserved(self):
        rng = np.random.default_rng(7)
        u = fs.BeamSplitterConfig().unitary(3)
        for _ in range(20):
            state = random_state(rng, max_total=3)
            out = fs.apply_beam_splitter(state)
            assert np.sum(np.abs(out.amplitudes) ** 2) == pytest.approx(1.0, abs=1e-12)
        # block-diagonality in total photon number
        na, nb = np.divmod(np.arange(16), 4)
        total = na + nb
        for i in range(16):
            for j in range(16):
                if total[i] != total[j]:
                    assert abs(u[i, j]) < 1e-12

    def test_cutoff_overflow_raises(self):
        state = fs.fock(2, 2)  # total photon number 4 > cutoff 3
        with pytest.raises(ValueError, match="truncate"):
            fs.apply_beam_splitter(state)

    def test_double_application_is_swap_with_local_phases(self):
        # U² sends a -> i b, b -> i a: swap composed with e^{iπ/2 (n_a+n_b)}
        cutoff = 3
        u = fs.BeamSplitterConfig().unitary(cutoff)
        u2 = u @ u
        n = cutoff + 1
        swap = np.zeros((n * n, n * n))
        for na in range(n):
            for nb in range(n):
                swap[nb * n + na, na * n + nb] = 1.0
        num_a, num_b = fs.number_operators(cutoff)
        phase = fs.expm(1j * np.pi / 2 * (num_a + num_b))
        v = swap @ phase
        # compare up to a global phase, restricted to the exactly represented
        # total-photon sectors (n_a + n_b <= cutoff); higher blocks truncate
        na, nb = np.divmod(np.arange((cutoff + 1) ** 2), cutoff + 1)
        keep = (na + nb) <= cutoff
        ratio = u2[0, 0] / v[0, 0]
        np.testing.assert_allclose(
            u2[np.ix_(keep, keep)], (ratio * v)[np.ix_(keep, keep)], atol=1e-10
        )

    def test_real_convention_differs_by_local_phases(self):
        out_sym = fs.apply_beam_splitter(fs.prepare_input(1.0, 1.0))
        out_real = fs.apply_beam_splitter(
            fs.prepare_input(1.0, 1.0), fs.BeamSplitterConfig(convention="real")
        )
        # same output populations, phases differ
        np.testing.assert_allclose(
            np.abs(out_sym.amplitudes), np.abs(out_real.amplitudes), atol=1e-12
        )


class TestMoments:
    def test_noon_moment_table(self):
        noon = fs.noon_state()
        assert fs.moment_expectation(noon, (1, 1, 1, 1)) == pytest.approx(0.0, abs=1e-12)
        assert fs.moment_expectation(noon, (2, 2, 0, 0)) == pytest.approx(1.0)
        assert fs.moment_expectation(noon, (0, 0, 2, 2)) == pytest.approx(1.0)
        assert fs.moment_expectation(noon, (0, 2, 2, 0)) == pytest.approx(1.0)
        assert fs.moment_expectation(noon, (1, 1, 0, 0)) == pytest.approx(1.0)

    def test_moment_against_direct_sum(self):
        # oracle: direct loop over Fock amplitudes with ladder factors
        rng = np.random.default_rng(3)
        state = random_state(rng)
        idx = (1, 1, 2, 1)

        def lowered(amps, cutoff, pow_a, pow_b):
            n = cutoff + 1
            grid = amps.reshape(n, n).copy()
            for _ in range(pow_a):
                out = np.zeros_like(grid)
                for na in range(1, n):
                    out[na - 1] += np.sqrt(na) * grid[na]
                grid = out
            for _ in range(pow_b):
                out = np.zeros_like(grid)
                for nb in range(1, n):
                    out[:, nb - 1] += np.sqrt(nb) * grid[:, nb]
                grid = out
            return grid.reshape(-1)

        n_, m_, k_, l_ = idx
        bra = lowered(state.amplitudes, 3, n_, k_)
        ket = lowered(state.amplitudes, 3, m_, l_)
        expected = np.vdot(bra, ket)
        assert fs.moment_expectation(state, idx) == pytest.approx(expected, abs=1e-12)

    @given(st.integers(0, 2), st.integers(0, 2), st.integers(0, 2), st.integers(0, 2),
           st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_conjugation_symmetry(self, n, m, k, l, seed):
        rng = np.random.default_rng(seed)
        state = random_state(rng)
        rho = state.density_matrix()
        lhs = fs.moment_expectation(rho, (n, m, k, l))
        rhs = fs.moment_expectation(rho, (m, n, l, k))
        assert lhs == pytest.approx(np.conj(rhs), abs=1e-10)

    def test_odd_moments_vanish_for_number_diagonal_mixtures(self):
        rng = np.random.default_rng(11)
        probs = rng.random(16)
        probs /= probs.sum()
        rho = fs.DensityMatrix(np.diag(probs.astype(complex)), 3)
        for idx in [(1, 0, 0, 0), (0, 1, 1, 1), (2, 1, 0, 0), (1, 0, 2, 0), (2, 2, 1, 0)]:
            if (idx[0] + idx[1] + idx[2] + idx[3]) % 2 == 1:
                assert fs.moment_expectation(rho, idx) == pytest.approx(0.0, abs=1e-12)
        # also any unbalanced even moment on a number-diagonal state
        assert fs.moment_expectation(rho, (2, 0, 0, 0)) == pytest.approx(0.0, abs=1e-12)

    def test_index_bounds(self):
        with pytest.raises(ValueError):
            fs.moment_expectation(fs.noon_state(), (4, 0, 0, 0))


class TestFidelityAndNegativity:
    def test_fidelity_pure_match(self):
        noon = fs.noon_state()
        assert fs.fidelity(noon.density_matrix(), noon) == pytest.approx(1.0)

    def test_fidelity_maximally_mixed(self):
        noon = fs.noon_state(cutoff=2)
        rho = fs.DensityMatrix(np.eye(9, dtype=complex) / 9.0, cutoff=2)
        assert fs.fidelity(rho, noon) == pytest.approx(1.0 / 9.0)

    def test_fidelity_cutoff_mismatch(self):
        with pytest.raises(ValueError):
            fs.fidelity(fs.noon_state(cutoff=2).density_matrix(), fs.noon_state(cutoff=3))

    def test_negativity_noon(self):
        # brute-force oracle: loop-based partial transpose
        rho = fs.noon_state().density_matrix()
        n = 4
        pt = np.zeros((16, 16), dtype=complex)
        for na in range(n):
            for nb in range(n):
                for ma in range(n):
                    for mb in range(n):
                        pt[na * n + nb, ma * n + mb] = rho.matrix[ma * n + nb, na * n + mb]
        ev = np.linalg.eigvalsh(pt)
        oracle = -ev[ev < 0].sum()
        assert oracle == pytest.approx(0.5, abs=1e-12)
        assert fs.negativity(rho) == pytest.approx(0.5, abs=1e-12)

    def test_negativity_product_state(self):
        rng = np.random.default_rng(5)
        amps_a = rng.normal(size=4) + 1j * rng.normal(size=4)
        amps_b = rng.normal(size=4) + 1j * rng.normal(size=4)
        amps = np.kron(amps_a, amps_b)
        amps /= np.linalg.norm(amps)
        rho = fs.TwoModeState(amps, 3).density_matrix()
        assert fs.negativity(rho) == pytest.approx(0.0, abs=1e-9)

    @pytest.mark.parametrize("theta", [0.3, 1.1, 2.9])
    def test_negativity_invariant_under_local_phase(self, theta):
        rho = fs.superposition_output_state(0.4).density_matrix()
        num_a, _ = fs.number_operators(3)
        u = fs.expm(1j * theta * num_a)
        rotated = fs.DensityMatrix(u @ rho.matrix @ u.conj().T, 3)
        assert fs.negativity(rotated) == pytest.approx(fs.negativity(rho), abs=1e-10)

    def test_trace_distance(self):
        noon = fs.noon_state().density_matrix()
        assert fs.trace_distance(noon, noon) == pytest.approx(0.0, abs=1e-12)
        vac = fs.vacuum().density_matrix()
        assert fs.trace_distance(noon, vac) == pytest.approx(1.0, abs=1e-12)


class TestValidationAndSerialization:
    def test_density_matrix_rejects_non_hermitian(self):
        mat = np.eye(16, dtype=complex) / 16.0
        mat[0, 1] = 0.1
        with pytest.raises(ValueError, match="Hermitian"):
            fs.DensityMatrix(mat, 3)

    def test_density_matrix_rejects_bad_trace(self):
        with pytest.raises(ValueError, match="trace"):
            fs.DensityMatrix(np.eye(16, dtype=complex), 3)

    def test_density_matrix_rejects_negative_eigenvalue(self):
        mat = np.diag(np.array([1.2, -0.2] + [0.0] * 14, dtype=complex))
        with pytest.raises(ValueError, match="negative eigenvalue"):
            fs.DensityMatrix(mat, 3)

    def test_state_json_round_trip(self):
        state = fs.superposition_output_state(1.3)
        back = fs.TwoModeState.from_json(state.to_json())
        np.testing.assert_allclose(back.amplitudes, state.amplitudes, atol=1e-15)

    def test_density_json_round_trip(self):
        rho = fs.noon_state().density_matrix()
        back = fs.DensityMatrix.from_json(rho.to_json())
        np.testing.assert_allclose(back.matrix, rho.matrix, atol=1e-15)

    def test_states_are_immutable(self):
        state = fs.noon_state()
        with pytest.raises(AttributeError):
            state.cutoff = 5
        with pytest.raises(ValueError):
            state.amplitudes[0] = 1.0
