"""Synthesis of dual-channel heterodyne measurement records.

Per pulse pair the beam-splitter output state is expanded over an
orthonormal set of spatial x temporal modes (at most four when the two
source wavepackets are delayed against each other).  Joint mode amplitudes
are drawn from the state's Husimi Q distribution, whose samples carry
exactly the anti-normally-ordered moments a heterodyne chain measures.  The
record is then white detection noise in which the sampled modes' vacuum
projections are replaced by the Q draws plus independent amplifier noise:

    S = F[ W - Σ_k <ξ_k, W> ξ_k + Σ_k (α_k + η_k) ξ_k ],

with W white of power (1 + n̄)/dt (vacuum floor plus amplifier quanta),
η_k ~ CN(0, n̄), and F the detection low-pass.  Every linear functional of S
then has the exact anti-normal statistics of signal-plus-calibrated-noise,
which is what the correlation and tomography estimators assume.

Synthesis is batched and deterministically seeded: batch i of a run draws
from SeedSequence((seed, stream, i)) with a fixed batch size, so identical
configurations reproduce bit-identical records and batches may be generated
in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import signal

from . import fockspace
from .recordio import RecordBatch
from .wavepacket import FilterSpec, PulseTrainConfig, TemporalMode, mode_amplitude

GENERATION_BATCH_SIZE = 1024
_REJECTION_SLACK = 1e-9


@dataclass(frozen=True)
class NoiseModel:
    """Detection-chain model: added quanta per channel, band filter, relative gain.

    `filter=None` disables band filtering (full-Nyquist detection), mainly for
    exact-unit tests; `dt` is then the sample interval.
    """

    added_noise_photons_a: float = 10.0
    added_noise_photons_b: float = 10.0
    filter: FilterSpec | None = field(default_factory=FilterSpec)
    relative_gain: float = 1.0
    dt: float = 10e-9

    def __post_init__(self):
        if self.added_noise_photons_a < 0 or self.added_noise_photons_b < 0:
            raise ValueError("added noise photon numbers must be non-negative")
        if self.relative_gain <= 0:
            raise ValueError("relative gain must be positive")

    @property
    def sample_interval(self) -> float:
        return self.filter.dt if self.filter is not None else self.dt

    @property
    def vacuum_unit_per_sample(self) -> float:
        """Per-sample power of a filtered unit-white vacuum record."""
        if self.filter is None:
            return 1.0 / self.dt
        return self.filter.vacuum_unit_per_sample


@dataclass(frozen=True)
class ScenarioConfig:
    """Source settings and timing for one simulated run."""

    source_a_on: bool = True
    source_b_on: bool = True
    beta_a: complex = 1.0
    beta_b: complex = 1.0
    phi: float = 0.0
    train: PulseTrainConfig = field(default_factory=PulseTrainConfig)
    shots: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.shots < 1:
            raise ValueError("shots must be >= 1")
        for name, beta in (("beta_a", self.beta_a), ("beta_b", self.beta_b)):
            if abs(beta) > 1 + 1e-12:
                raise ValueError(f"|{name}| exceeds 1")

    @property
    def effective_beta_a(self) -> complex:
        return complex(self.beta_a) if self.source_a_on else 0.0

    @property
    def effective_beta_b(self) -> complex:
        return complex(self.beta_b) * np.exp(1j * self.phi) if self.source_b_on else 0.0

    def output_state(self, cutoff: int = fockspace.DEFAULT_CUTOFF) -> fockspace.TwoModeState:
        """Ideal beam-splitter output over the two spatial modes (δτ = 0 picture)."""
        prepared = fockspace.prepare_input(
            self.effective_beta_a, self.effective_beta_b, cutoff
        )
        return fockspace.apply_beam_splitter(prepared)

    def to_dict(self) -> dict:
        return {
            "source_a_on": self.source_a_on,
            "source_b_on": self.source_b_on,
            "beta_a": [self.beta_a.real, complex(self.beta_a).imag],
            "beta_b": [complex(self.beta_b).real, complex(self.beta_b).imag],
            "phi": self.phi,
            "train": {
                "t_r": self.train.t_r,
                "pulses_per_sequence": self.train.pulses_per_sequence,
                "sequence_period": self.train.sequence_period,
                "delta_tau": self.train.delta_tau,
                "kappa_a": self.train.kappa_a,
                "kappa_b": self.train.kappa_b,
            },
            "shots": self.shots,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioConfig":
        train = PulseTrainConfig(**doc["train"])
        return cls(
            source_a_on=doc["source_a_on"],
            source_b_on=doc["source_b_on"],
            beta_a=complex(*doc["beta_a"]),
            beta_b=complex(*doc["beta_b"]),
            phi=doc["phi"],
            train=train,
            shots=doc["shots"],
            seed=doc["seed"],
        )


def noise_model_to_dict(noise: NoiseModel) -> dict:
    doc = {
        "added_noise_photons_a": noise.added_noise_photons_a,
        "added_noise_photons_b": noise.added_noise_photons_b,
        "relative_gain": noise.relative_gain,
        "dt": noise.dt,
        "filter": None,
    }
    if noise.filter is not None:
        doc["filter"] = {
            "bandwidth": noise.filter.bandwidth,
            "dt": noise.filter.dt,
            "n_taps": noise.filter.n_taps,
            "window": noise.filter.window,
        }
    return doc


def noise_model_from_dict(doc: dict) -> NoiseModel:
    filt = FilterSpec(**doc["filter"]) if doc.get("filter") else None
    return NoiseModel(
        added_noise_photons_a=doc["added_noise_photons_a"],
        added_noise_photons_b=doc["added_noise_photons_b"],
        relative_gain=doc["relative_gain"],
        filter=filt,
        dt=doc.get("dt", 10e-9),
    )


class FockStateSampler:
    """Husimi Q rejection sampler for a sparse multimode Fock superposition.

    The proposal is the diagonal mixture D(α) = Σ_j |c_j|² Π_k Q_{n_jk}(α_k)
    (per-mode Fock Husimi factors, sampled exactly via Gamma radii), which
    dominates the target: Q <= N·D pointwise by Cauchy-Schwarz, with N the
    number of Fock terms.  The acceptance probability is therefore exactly
    1/N.
    """

    def __init__(self, terms: dict[tuple[int, ...], complex]):
        items = [(occ, c) for occ, c in terms.items() if abs(c) > 1e-14]
        if not items:
            raise ValueError("state has no support")
        norm = np.sqrt(sum(abs(c) ** 2 for _, c in items))
        self.occupations = np.array([occ for occ, _ in items], dtype=np.int64)
        self.coeffs = np.array([c / norm for _, c in items], dtype=complex)
        self.n_modes = self.occupations.shape[1]
        self.n_terms = len(items)
        factorials = np.vectorize(math.factorial)(self.occupations).astype(float)
        self._inv_sqrt_fact = 1.0 / np.sqrt(factorials)
        self._probs = np.abs(self.coeffs) ** 2
        self.proposals_used = 0
        self.accepted = 0

    @property
    def acceptance_bound(self) -> float:
        return 1.0 / self.n_terms

    def _monomials(self, conj_alpha: np.ndarray) -> np.ndarray:
        """m_j(ᾱ) = Π_k ᾱ_k^{n_jk} / sqrt(n_jk!), shape (draws, terms)."""
        draws = conj_alpha.shape[0]
        out = np.ones((draws, self.n_terms), dtype=complex)
        for k in range(self.n_modes):
            col = conj_alpha[:, k]
            powers = {n: col ** n for n in np.unique(self.occupations[:, k])}
            for j in range(self.n_terms):
                n = self.occupations[j, k]
                out[:, j] *= powers[n] * self._inv_sqrt_fact[j, k]
        return out

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        """Draw `size` joint mode amplitude vectors, shape (size, n_modes)."""
        out = np.empty((size, self.n_modes), dtype=complex)
        filled = 0
        while filled < size:
            want = size - filled
            budget = max(64, int(1.2 * want * self.n_terms))
            term = rng.choice(self.n_terms, size=budget, p=self._probs)
            shapes = self.occupations[term].astype(float) + 1.0
            radii2 = rng.gamma(shape=shapes)
            phases = rng.uniform(0.0, 2.0 * np.pi, size=shapes.shape)
            alpha = np.sqrt(radii2) * np.exp(1j * phases)
            mono = self._monomials(np.conj(alpha))
            num = np.abs(mono @ self.coeffs) ** 2
            den = (np.abs(mono) ** 2) @ self._probs
            ratio = num / (self.n_terms * den)
            if np.any(ratio > 1.0 + _REJECTION_SLACK):
                raise AssertionError(
                    f"rejection envelope violated: max ratio {ratio.max():.3e}"
                )
            accept = rng.uniform(size=budget) < ratio
            took = min(int(accept.sum()), want)
            out[filled: filled + took] = alpha[accept][:took]
            filled += took
            self.proposals_used += budget
            self.accepted += int(accept.sum())
        return out


def _two_mode_terms(state: fockspace.TwoModeState) -> dict[tuple[int, ...], complex]:
    n = state.cutoff + 1
    grid = state.grid()
    return {
        (na, nb): complex(grid[na, nb])
        for na in range(n)
        for nb in range(n)
        if abs(grid[na, nb]) > 1e-14
    }


def sample_husimi(state: fockspace.TwoModeState, rng: np.random.Generator,
                  size: int | None = None):
    """Husimi Q samples (alpha_a, alpha_b) of a two-mode state (cutoff <= 3)."""
    if state.cutoff > 3:
        raise ValueError("husimi sampling supports cutoff <= 3")
    sampler = FockStateSampler(_two_mode_terms(state))
    draws = sampler.sample(size or 1, rng)
    if size is None:
        return complex(draws[0, 0]), complex(draws[0, 1])
    return draws[:, 0], draws[:, 1]


class _PulseModes:
    """Grid-sampled orthonormal temporal modes of one pulse pair.

    Channel modes are indexed (a,ξ1), (b,ξ1) and, when the delayed source-B
    wavepacket is not parallel to ξ1 on the grid, (a,ξ2), (b,ξ2) with ξ2 the
    Gram-Schmidt complement.  The mode arrays are normalized on the sample
    grid so each pulse carries exactly one photon per excited source.
    """

    def __init__(self, train: PulseTrainConfig, dt: float, start_sample: float):
        self.dt = dt
        tail_a = -2.0 * np.log(1e-9) / train.kappa_a
        tail_b = -2.0 * np.log(1e-9) / train.kappa_b
        t_a = start_sample * dt
        t_b = t_a + train.delta_tau
        lo = min(t_a, t_b)
        hi = max(t_a + tail_a, t_b + tail_b)
        self.i0 = int(np.floor(lo / dt))
        length = int(np.ceil(hi / dt)) - self.i0 + 1
        times = (self.i0 + np.arange(length)) * dt

        xi_a = np.asarray(mode_amplitude(TemporalMode(train.kappa_a, t_a), times))
        xi_b = np.asarray(mode_amplitude(TemporalMode(train.kappa_b, t_b), times))
        xi_a = xi_a / np.sqrt(np.sum(np.abs(xi_a) ** 2) * dt)
        xi_b = xi_b / np.sqrt(np.sum(np.abs(xi_b) ** 2) * dt)
        overlap = complex(np.vdot(xi_a, xi_b) * dt)
        resid2 = 1.0 - abs(overlap) ** 2
        if resid2 > 1e-12:
            xi_2 = (xi_b - overlap * xi_a) / np.sqrt(resid2)
            self.temporal = np.stack([xi_a, xi_2])
            self.b_coeffs = np.array([overlap, np.sqrt(resid2)])
        else:
            self.temporal = xi_a[None, :]
            self.b_coeffs = np.array([overlap / abs(overlap)])
        self.n_temporal = self.temporal.shape[0]


def _pulse_state_terms(beta_a: complex, beta_b: complex,
                       b_coeffs: np.ndarray, n_temporal: int):
    """Beam-splitter output over (a,ξ1..) x (b,ξ1..) modes as a Fock dict.

    Creation-operator expansion of
      (α_a + β_a (a_1† + i b_1†)/√2)(α_b + β_b Σ_m c_m (i a_m† + b_m†)/√2)|0>.
    Mode order: a_1..a_M, b_1..b_M.
    """
    alpha_a = np.sqrt(max(0.0, 1.0 - abs(beta_a) ** 2))
    alpha_b = np.sqrt(max(0.0, 1.0 - abs(beta_b) ** 2))
    s = 1.0 / np.sqrt(2.0)
    m = n_temporal

    def creations_a():
        # (coefficient, mode index) pairs of the source-A photon operator
        return [(beta_a * s, 0), (1j * beta_a * s, m)]

    def creations_b():
        out = []
        for k in range(m):
            c = beta_b * b_coeffs[k] * s
            out.append((1j * c, k))
            out.append((c, m + k))
        return out

    terms: dict[tuple[int, ...], complex] = {tuple([0] * (2 * m)): 1.0 + 0.0j}

    def apply(factor_terms, const):
        nonlocal terms
        new: dict[tuple[int, ...], complex] = {}
        for occ, amp in terms.items():
            if const != 0.0:
                new[occ] = new.get(occ, 0.0) + const * amp
            for coef, mode in factor_terms:
                if coef == 0.0:
                    continue
                lifted = list(occ)
                lifted[mode] += 1
                key = tuple(lifted)
                new[key] = new.get(key, 0.0) + coef * np.sqrt(lifted[mode]) * amp
        terms = new

    apply(creations_b(), alpha_b)
    apply(creations_a(), alpha_a)
    return {occ: c for occ, c in terms.items() if abs(c) > 1e-14}


class RecordSynthesizer:
    """Deterministic batched generator of heterodyne records for one scenario."""

    def __init__(self, cfg: ScenarioConfig, noise: NoiseModel,
                 batch_size: int = GENERATION_BATCH_SIZE, stream: int = 0,
                 scenario_tag: str = ""):
        self.cfg = cfg
        self.noise = noise
        self.batch_size = batch_size
        self.stream = stream
        self.scenario_tag = scenario_tag
        filt = noise.filter
        self.dt = noise.sample_interval
        n_taps = filt.n_taps if filt is not None else 1
        train = cfg.train
        self.n_samples = int(round(train.sequence_period / self.dt))
        lead = n_taps * self.dt + max(0.0, -train.delta_tau)
        self.lead_samples = lead / self.dt
        last = (self.lead_samples + (train.pulses_per_sequence - 1) * train.t_r / self.dt)
        tail = -2.0 * np.log(1e-9) / min(train.kappa_a, train.kappa_b) / self.dt
        if last + max(0.0, train.delta_tau) / self.dt + tail + n_taps > self.n_samples:
            raise ValueError("pulse train does not fit inside the sequence record")

        any_source = cfg.source_a_on or cfg.source_b_on
        self.pulses = []
        if any_source:
            for p in range(train.pulses_per_sequence):
                start = self.lead_samples + p * train.t_r / self.dt
                modes = _PulseModes(train, self.dt, start)
                terms = _pulse_state_terms(
                    cfg.effective_beta_a, cfg.effective_beta_b,
                    modes.b_coeffs, modes.n_temporal,
                )
                self.pulses.append((modes, FockStateSampler(terms)))

    @property
    def n_batches(self) -> int:
        return (self.cfg.shots + self.batch_size - 1) // self.batch_size

    def batch_rng(self, batch_index: int) -> np.random.Generator:
        seq = np.random.SeedSequence(
            entropy=(int(self.cfg.seed) & ((1 << 64) - 1), self.stream, batch_index)
        )
        return np.random.default_rng(seq)

    def generate_batch(self, batch_index: int) -> RecordBatch:
        first = batch_index * self.batch_size
        count = min(self.batch_size, self.cfg.shots - first)
        if count <= 0:
            raise IndexError("batch index beyond configured shots")
        rng = self.batch_rng(batch_index)
        filt = self.noise.filter
        half_len = (filt.n_taps - 1) if filt is not None else 0
        t_ext = self.n_samples + half_len
        noise_scales = {
            "a": np.sqrt((1.0 + self.noise.added_noise_photons_a) / (2.0 * self.dt)),
            "b": np.sqrt((1.0 + self.noise.added_noise_photons_b) / (2.0 * self.dt)),
        }
        amp_scales = {
            "a": np.sqrt(self.noise.added_noise_photons_a / 2.0),
            "b": np.sqrt(self.noise.added_noise_photons_b / 2.0),
        }
        ext = {}
        for ch in ("a", "b"):
            w = rng.standard_normal((count, t_ext)) + 1j * rng.standard_normal((count, t_ext))
            ext[ch] = w * noise_scales[ch]

        # vacuum projections come from the pristine noise, injections afterwards,
        # so a pulse's replacement never shadows its neighbours' tails
        injections = []
        for modes, sampler in self.pulses:
            m = modes.n_temporal
            draws = sampler.sample(count, rng)  # (count, 2m): a-modes then b-modes
            eta = (
                rng.standard_normal((count, 2 * m)) + 1j * rng.standard_normal((count, 2 * m))
            )
            eta[:, :m] *= amp_scales["a"]
            eta[:, m:] *= amp_scales["b"]
            # extended-array window of this pulse (centered filter alignment)
            start = modes.i0 + half_len // 2
            stop = start + modes.temporal.shape[1]
            tpl = modes.temporal
            for ci, ch in enumerate(("a", "b")):
                win = ext[ch][:, start:stop]
                proj = (win @ tpl.conj().T) * self.dt  # (count, m) vacuum components
                coeff = draws[:, ci * m:(ci + 1) * m] + eta[:, ci * m:(ci + 1) * m] - proj
                injections.append((ch, start, stop, coeff, tpl))
        for ch, start, stop, coeff, tpl in injections:
            ext[ch][:, start:stop] += coeff @ tpl

        out = {}
        if filt is not None:
            taps = filt.taps.astype(complex)
            for ch in ("a", "b"):
                out[ch] = signal.fftconvolve(ext[ch], taps[None, :], mode="valid", axes=1)
        else:
            out = ext
        out["b"] = out["b"] * self.noise.relative_gain
        return RecordBatch(
            shot_ids=np.arange(first, first + count, dtype=np.int64),
            samples_a=out["a"].astype(np.complex64),
            samples_b=out["b"].astype(np.complex64),
            dt=self.dt,
            scenario_tag=self.scenario_tag,
        )

    def __iter__(self):
        for i in range(self.n_batches):
            yield self.generate_batch(i)


def simulate_records(cfg: ScenarioConfig, noise: NoiseModel,
                     batch_size: int = GENERATION_BATCH_SIZE,
                     scenario_tag: str = "scenario"):
    """Stream of RecordBatch objects; deterministic for a given (cfg, noise)."""
    return RecordSynthesizer(cfg, noise, batch_size=batch_size, scenario_tag=scenario_tag)


def calibration_records(noise: NoiseModel, shots: int, seed: int,
                        train: PulseTrainConfig | None = None,
                        batch_size: int = GENERATION_BATCH_SIZE):
    """Vacuum-input records (both sources idle) for noise characterization."""
    cfg = ScenarioConfig(
        source_a_on=False, source_b_on=False, beta_a=0.0, beta_b=0.0,
        train=train or PulseTrainConfig(), shots=shots, seed=seed,
    )
    return RecordSynthesizer(cfg, noise, batch_size=batch_size, stream=1,
                             scenario_tag="calibration")


def pulse_mode_layout(cfg: ScenarioConfig, noise: NoiseModel):
    """Per-pulse grid modes as used by the synthesizer (for matched filtering)."""
    synth = RecordSynthesizer(cfg, noise)
    return synth
