"""Single-pass, bounded-memory estimation of correlation functions.

Record batches stream through `LagAccumulator`s that keep, per error bucket
(shot_id mod n_buckets), frequency-domain sums of per-record lag products
plus per-time column sums.  Memory is set by the record length and lag grid,
not by the shot count, and accumulators merge by addition (compensated
double-double sums keep merged results bit-identical to single-pass ones).

`g2_cross_estimate` subtracts the independent-channel noise floor,

    G²_ab = <|Sa|²|Sb|²> - <|Sa|²> N0_b - N0_a <|Sb|²> + N0_a N0_b,

and `g2_auto_estimate` performs the full Gaussian-noise deconvolution of
same-channel products including the lagged noise correlation N(τ) and the
first-order signal coherence, exactly cancelling pure noise at every lag.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.fft import next_fast_len

from .histogram import CorrelationHistogram
from .recordio import RecordBatch
from .wavepacket import PulseTrainConfig

DEFAULT_BUCKETS = 32


class _DdSum:
    """Vectorized compensated (double-double) accumulator.

    Addition error is tracked in a low word, so the float64 readout is
    insensitive to how partial sums were associated; merged partitions
    reproduce single-pass results bitwise.
    """

    def __init__(self, shape, dtype=np.float64):
        self.hi = np.zeros(shape, dtype=dtype)
        self.lo = np.zeros(shape, dtype=dtype)

    def add(self, x) -> None:
        s = self.hi + x
        bb = s - self.hi
        err = (self.hi - (s - bb)) + (x - bb)
        self.hi = s
        self.lo = self.lo + err

    def merge(self, other: "_DdSum") -> None:
        self.add(other.hi)
        self.add(other.lo)

    def value(self) -> np.ndarray:
        return self.hi + self.lo


class LagAccumulator:
    """Streaming per-bucket lag sums for one channel pair.

    Accumulates, per bucket g: record count, per-time column sums of
    |S_x(t)|² and |S_y(t)|², the rfft-domain sum of per-record intensity
    cross-correlations Σ_t I_x(t) I_y(t+τ), and (optionally, for the auto
    estimator) the fft-domain sum of field correlations Σ_t S*(t+τ)S(t).
    """

    def __init__(self, n_samples: int, dt: float, n_buckets: int = DEFAULT_BUCKETS,
                 with_field_corr: bool = False):
        self.n_samples = n_samples
        self.dt = dt
        self.n_buckets = n_buckets
        self.with_field_corr = with_field_corr
        self.fft_len = next_fast_len(2 * n_samples - 1)
        self.n_records = _DdSum(n_buckets)
        self.colsum_x = _DdSum((n_buckets, n_samples))
        self.colsum_y = _DdSum((n_buckets, n_samples))
        self.int_corr_f = _DdSum((n_buckets, self.fft_len // 2 + 1), np.complex128)
        self.field_corr_f = (
            _DdSum((n_buckets, self.fft_len), np.complex128) if with_field_corr else None
        )

    def _bucket_sums(self, per_record: np.ndarray, shot_ids: np.ndarray) -> np.ndarray:
        out = np.zeros((self.n_buckets,) + per_record.shape[1:], dtype=per_record.dtype)
        buckets = shot_ids % self.n_buckets
        first = int(buckets[0])
        if np.array_equal(buckets, (first + np.arange(len(buckets))) % self.n_buckets):
            for g in range(self.n_buckets):
                rows = per_record[(g - first) % self.n_buckets:: self.n_buckets]
                if rows.size:
                    out[g] = rows.sum(axis=0)
        else:
            for g in range(self.n_buckets):
                rows = per_record[buckets == g]
                if rows.size:
                    out[g] = rows.sum(axis=0)
        return out

    def ingest(self, x: np.ndarray, y: np.ndarray, shot_ids: np.ndarray) -> None:
        """Add one batch; x, y are (B, T) complex records of the two channels."""
        if x.shape[1] != self.n_samples:
            raise ValueError("record length differs from accumulator configuration")
        ix = np.abs(x.astype(np.complex128)) ** 2
        iy = ix if y is x else np.abs(y.astype(np.complex128)) ** 2
        shot_ids = np.asarray(shot_ids)

        counts = np.bincount(shot_ids % self.n_buckets, minlength=self.n_buckets)
        self.n_records.add(counts.astype(float))
        self.colsum_x.add(self._bucket_sums(ix, shot_ids))
        self.colsum_y.add(self._bucket_sums(iy, shot_ids) if iy is not ix
                          else self._bucket_sums(ix, shot_ids))

        fx = np.fft.rfft(ix, self.fft_len, axis=1)
        fy = fx if iy is ix else np.fft.rfft(iy, self.fft_len, axis=1)
        self.int_corr_f.add(self._bucket_sums(np.conj(fx) * fy, shot_ids))

        if self.with_field_corr:
            fs = np.fft.fft(x.astype(np.complex128), self.fft_len, axis=1)
            self.field_corr_f.add(self._bucket_sums(np.conj(fs) * fs, shot_ids))

    def merge(self, other: "LagAccumulator") -> None:
        if (other.n_samples, other.n_buckets, other.with_field_corr) != (
            self.n_samples, self.n_buckets, self.with_field_corr
        ):
            raise ValueError("accumulator configurations differ")
        self.n_records.merge(other.n_records)
        self.colsum_x.merge(other.colsum_x)
        self.colsum_y.merge(other.colsum_y)
        self.int_corr_f.merge(other.int_corr_f)
        if self.with_field_corr:
            self.field_corr_f.merge(other.field_corr_f)

    # -- finalized per-bucket views ------------------------------------

    def lag_indices(self, tau_grid: np.ndarray) -> np.ndarray:
        lags = np.round(np.asarray(tau_grid) / self.dt).astype(int)
        if np.max(np.abs(np.asarray(tau_grid) - lags * self.dt)) > 1e-12:
            raise ValueError("tau grid points must be integer multiples of dt")
        if np.max(np.abs(lags)) >= self.n_samples:
            raise ValueError("tau grid exceeds the record span")
        return lags

    def intensity_corr(self, lags: np.ndarray) -> np.ndarray:
        """Per-bucket Σ_records Σ_t I_x(t) I_y(t+j) at the requested lags."""
        full = np.fft.irfft(self.int_corr_f.value(), self.fft_len, axis=1)
        return full[:, lags % self.fft_len]

    def field_corr(self, lags: np.ndarray) -> np.ndarray:
        """Per-bucket Σ_records Σ_t S*(t+j) S(t)."""
        if not self.with_field_corr:
            raise ValueError("field correlation was not accumulated")
        full = np.conj(np.fft.ifft(self.field_corr_f.value(), self.fft_len, axis=1))
        return full[:, lags % self.fft_len]

    def window_sums(self, lags: np.ndarray):
        """Per-bucket sums of column intensities over the valid-t window of each lag."""
        cx = np.cumsum(self.colsum_x.value(), axis=1)
        cy = np.cumsum(self.colsum_y.value(), axis=1)
        t = self.n_samples
        sx = np.empty((self.n_buckets, len(lags)))
        sy = np.empty((self.n_buckets, len(lags)))
        for i, j in enumerate(lags):
            if j >= 0:
                sx[:, i] = cx[:, t - 1 - j]
                sy[:, i] = cy[:, t - 1] - (cy[:, j - 1] if j > 0 else 0.0)
            else:
                sx[:, i] = cx[:, t - 1] - cx[:, -j - 1]
                sy[:, i] = cy[:, t - 1 + j]
        return sx, sy

    def valid_counts(self, lags: np.ndarray) -> np.ndarray:
        return (self.n_samples - np.abs(lags)).astype(float)


@dataclass
class ChannelNoise:
    """Per-sample stationary noise statistics of one detection channel."""

    n0: float
    n_tau: np.ndarray          # complex, <h*(t+τ)h(t)> on the lag grid
    fourth: np.ndarray         # <|h(t)|²|h(t+τ)|²> on the lag grid
    n0_stderr: float = 0.0

    def gaussian_fourth(self) -> np.ndarray:
        return self.n0 ** 2 + np.abs(self.n_tau) ** 2


@dataclass
class NoiseCalibration:
    """Vacuum-run noise characterization used by the deconvolving estimators."""

    dt: float
    tau_grid: np.ndarray
    channel_a: ChannelNoise
    channel_b: ChannelNoise
    cross_corr: np.ndarray | None = None   # <h_a*(t+τ) h_b(t)>, diagnostic
    cross_sigma: float = 0.0
    n_records: int = 0
    vacuum_unit: float | None = None
    mode_moments: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        zero = np.flatnonzero(np.abs(self.tau_grid) < self.dt / 2)
        for name, ch in (("a", self.channel_a), ("b", self.channel_b)):
            if zero.size and abs(ch.n_tau[zero[0]] - ch.n0) > 1e-6 * max(ch.n0, 1e-30):
                raise ValueError(f"channel {name}: N_tau(0) must equal N0")
            # statistical headroom: the true |N(τ)| never exceeds N0
            if np.any(np.abs(ch.n_tau) > ch.n0 * 1.05):
                raise ValueError(f"channel {name}: |N_tau| exceeds N0")
        if self.vacuum_unit is not None:
            floor = 0.9 * self.vacuum_unit
            if self.channel_a.n0 < floor or self.channel_b.n0 < floor:
                raise ValueError("calibrated noise power below the vacuum floor")

    def channel(self, name: str) -> ChannelNoise:
        return {"a": self.channel_a, "b": self.channel_b}[name]


def measure_noise(cal_records, tau_grid: np.ndarray,
                  vacuum_unit: float | None = None,
                  n_buckets: int = DEFAULT_BUCKETS) -> NoiseCalibration:
    """Estimate N0, N(τ) and fourth-order noise moments from vacuum records."""
    tau_grid = np.asarray(tau_grid, dtype=float)
    acc_a = acc_b = acc_ab = None
    dt = None
    cross_field = 0.0 + 0.0j
    cross_field_sq = 0.0
    cross_samples = 0
    for batch in cal_records:
        if acc_a is None:
            dt = batch.dt
            t = batch.n_samples
            acc_a = LagAccumulator(t, dt, n_buckets, with_field_corr=True)
            acc_b = LagAccumulator(t, dt, n_buckets, with_field_corr=True)
            acc_ab = LagAccumulator(t, dt, n_buckets)
        acc_a.ingest(batch.samples_a, batch.samples_a, batch.shot_ids)
        acc_b.ingest(batch.samples_b, batch.samples_b, batch.shot_ids)
        acc_ab.ingest(batch.samples_a, batch.samples_b, batch.shot_ids)
        # zero-lag cross-channel field moment for the independence check
        prod = np.conj(batch.samples_a.astype(np.complex128)) * batch.samples_b
        cross_field += prod.sum()
        cross_field_sq += float(np.sum(np.abs(prod) ** 2))
        cross_samples += prod.size
    if acc_a is None:
        raise ValueError("no calibration records supplied")

    lags = acc_a.lag_indices(tau_grid)
    if (acc_a.n_records.value().sum() * acc_a.n_samples) < 4 * len(lags):
        raise ValueError("too few calibration samples for the requested lag grid")

    channels = {}
    for name, acc in (("a", acc_a), ("b", acc_b)):
        counts = acc.valid_counts(lags)[None, :] * acc.n_records.value()[:, None]
        total_counts = counts.sum(axis=0)
        n_tau = acc.field_corr(lags).sum(axis=0) / total_counts
        fourth = acc.intensity_corr(lags).sum(axis=0) / total_counts
        n_samples_total = acc.n_records.value().sum() * acc.n_samples
        n0 = float(acc.colsum_x.value().sum() / n_samples_total)
        # force the zero-lag bin to the independently averaged power
        center = np.argmin(np.abs(lags))
        if lags[center] == 0:
            n_tau[center] = n0
        bucket_n0 = acc.colsum_x.value().sum(axis=1) / (
            acc.n_records.value() * acc.n_samples
        )
        n0_err = float(np.std(bucket_n0, ddof=1) / np.sqrt(acc.n_buckets))
        channels[name] = ChannelNoise(n0=n0, n_tau=n_tau, fourth=fourth.real,
                                      n0_stderr=n0_err)

    # cross-channel independence diagnostic at the measured lags
    counts = acc_ab.valid_counts(lags)[None, :] * acc_ab.n_records.value()[:, None]
    cross_fourth = acc_ab.intensity_corr(lags).sum(axis=0) / counts.sum(axis=0)
    indep = channels["a"].n0 * channels["b"].n0
    bucket_cross = acc_ab.intensity_corr(lags) / np.maximum(counts, 1.0)
    cross_sigma = float(np.mean(np.std(bucket_cross, axis=0, ddof=1))
                        / np.sqrt(acc_ab.n_buckets))
    gauss = {
        name: float(ch.fourth[np.argmin(np.abs(lags))] / (2 * ch.n0 ** 2))
        for name, ch in channels.items()
    }
    diag = {
        "gaussian_fourth_ratio": gauss,
        "cross_intensity_excess": float(np.mean(cross_fourth.real - indep)),
    }
    n_rec = int(acc_a.n_records.value().sum())
    return NoiseCalibration(
        dt=dt, tau_grid=tau_grid,
        channel_a=channels["a"], channel_b=channels["b"],
        cross_corr=cross_fourth - indep, cross_sigma=cross_sigma,
        n_records=n_rec, vacuum_unit=vacuum_unit, diagnostics=diag,
    )


def _pair_counts(tau_grid: np.ndarray, train: PulseTrainConfig) -> np.ndarray:
    n_near = np.round(np.asarray(tau_grid) / train.t_r).astype(int)
    counts = train.pulses_per_sequence - np.abs(n_near)
    if np.any(counts < 1):
        raise ValueError("tau grid reaches lags with no contributing pulse pairs")
    return counts.astype(float)


def _estimate_gain_sq(acc: LagAccumulator, cal: NoiseCalibration) -> float:
    """Relative channel gain² from the deconvolved power balance."""
    n_rec = acc.n_records.value().sum()
    t = acc.n_samples
    pa = acc.colsum_x.value().sum() / n_rec - t * cal.channel_a.n0
    pb = acc.colsum_y.value().sum() / n_rec - t * cal.channel_b.n0
    if pa <= 0 or pb <= 0:
        return 1.0
    return float(pb / pa)


@dataclass
class G2Result:
    histogram: CorrelationHistogram
    gain_sq: float


def _finalize_cross(acc: LagAccumulator, cal: NoiseCalibration,
                    tau_grid: np.ndarray, train: PulseTrainConfig,
                    gain_mode) -> G2Result:
    lags = acc.lag_indices(tau_grid)
    n0a, n0b = cal.channel_a.n0, cal.channel_b.n0
    xc = acc.intensity_corr(lags)
    sx, sy = acc.window_sums(lags)
    counts = acc.valid_counts(lags)[None, :] * acc.n_records.value()[:, None]
    gsum = xc - n0b * sx - n0a * sy + counts * n0a * n0b

    gain_sq = _resolve_gain(acc, cal, gain_mode)
    pair = _pair_counts(tau_grid, train)[None, :]
    per_bucket = gsum * acc.dt / (acc.n_records.value()[:, None] * pair * gain_sq)
    return _bucket_result(per_bucket, acc, tau_grid, "cross", train, gain_sq)


def _finalize_auto(acc: LagAccumulator, cal: NoiseCalibration,
                   tau_grid: np.ndarray, train: PulseTrainConfig,
                   channel: str, gain_mode) -> G2Result:
    lags = acc.lag_indices(tau_grid)
    noise = cal.channel(channel)
    cal_lags = np.round(cal.tau_grid / cal.dt).astype(int)
    lag_to_pos = {int(l): i for i, l in enumerate(cal_lags)}
    try:
        pos = np.array([lag_to_pos[int(j)] for j in lags])
    except KeyError as exc:
        raise ValueError(f"calibration does not cover lag {exc} samples") from exc
    n_tau = noise.n_tau[pos]
    n0 = noise.n0

    xc = acc.intensity_corr(lags)
    coh = acc.field_corr(lags)
    sx, sy = acc.window_sums(lags)
    counts = acc.valid_counts(lags)[None, :] * acc.n_records.value()[:, None]
    gsum = (
        xc
        - n0 * (sx + sy)
        - 2.0 * np.real(n_tau[None, :] * np.conj(coh))
        + counts * (n0 ** 2 + np.abs(n_tau[None, :]) ** 2)
    )

    gain_sq = _resolve_gain(acc, cal, gain_mode) if channel == "b" else 1.0
    pair = _pair_counts(tau_grid, train)[None, :]
    per_bucket = gsum * acc.dt / (acc.n_records.value()[:, None] * pair * gain_sq ** 2)
    return _bucket_result(per_bucket, acc, tau_grid, "auto", train, gain_sq)


def _resolve_gain(acc, cal, gain_mode) -> float:
    if gain_mode == "balance":
        return _estimate_gain_sq(acc, cal)
    if gain_mode == "none":
        return 1.0
    return float(gain_mode) ** 2


def _bucket_result(per_bucket, acc, tau_grid, kind, train, gain_sq) -> G2Result:
    weights = acc.n_records.value()
    total = (per_bucket * weights[:, None]).sum(axis=0) / weights.sum()
    occupied = weights > 0
    n_occ = int(occupied.sum())
    if n_occ >= 2:
        spread = np.std(per_bucket[occupied], axis=0, ddof=1)
        stderr = spread / np.sqrt(n_occ)
    else:
        stderr = np.zeros_like(total)
    meta = {
        "normalized": False,
        "t_r": train.t_r,
        "delta_tau": train.delta_tau,
        "pulses_per_sequence": train.pulses_per_sequence,
        "dt": acc.dt,
        "n_records": float(weights.sum()),
        "gain_sq": gain_sq,
    }
    hist = CorrelationHistogram(np.asarray(tau_grid, float), total, stderr, kind, meta)
    return G2Result(histogram=hist, gain_sq=gain_sq)


def g2_cross_estimate(records, cal: NoiseCalibration, tau_grid: np.ndarray,
                      train: PulseTrainConfig, reference_width: float | None = None,
                      gain_mode="balance",
                      n_buckets: int = DEFAULT_BUCKETS) -> CorrelationHistogram:
    """Noise-subtracted G²_ab(τ) per pulse pair from a record stream."""
    acc = None
    for batch in records:
        if acc is None:
            _check_batch(batch, cal)
            acc = LagAccumulator(batch.n_samples, batch.dt, n_buckets)
        acc.ingest(batch.samples_a, batch.samples_b, batch.shot_ids)
    if acc is None:
        raise ValueError("no records supplied")
    result = _finalize_cross(acc, cal, tau_grid, train, gain_mode)
    if reference_width is not None:
        result.histogram.meta["reference_width"] = reference_width
    return result.histogram


def g2_auto_estimate(records, cal: NoiseCalibration, tau_grid: np.ndarray,
                     train: PulseTrainConfig, channel: str = "a",
                     reference_width: float | None = None, gain_mode="balance",
                     n_buckets: int = DEFAULT_BUCKETS) -> CorrelationHistogram:
    """Gaussian-deconvolved same-channel G²(τ) per pulse pair."""
    if channel not in ("a", "b"):
        raise ValueError("channel must be 'a' or 'b'")
    acc = None
    gain_acc = None
    for batch in records:
        if acc is None:
            _check_batch(batch, cal)
            acc = LagAccumulator(batch.n_samples, batch.dt, n_buckets,
                                 with_field_corr=True)
            gain_acc = LagAccumulator(batch.n_samples, batch.dt, n_buckets)
        x = batch.samples_a if channel == "a" else batch.samples_b
        acc.ingest(x, x, batch.shot_ids)
        if gain_mode == "balance":
            gain_acc.ingest(batch.samples_a, batch.samples_b, batch.shot_ids)
    if acc is None:
        raise ValueError("no records supplied")
    if gain_mode == "balance" and channel == "b":
        gain_mode = np.sqrt(_estimate_gain_sq(gain_acc, cal))
    result = _finalize_auto(acc, cal, tau_grid, train, channel, gain_mode)
    if reference_width is not None:
        result.histogram.meta["reference_width"] = reference_width
    return result.histogram


def _check_batch(batch: RecordBatch, cal: NoiseCalibration) -> None:
    if abs(batch.dt - cal.dt) > 1e-15:
        raise ValueError("records and calibration have different sample intervals")


def normalize_and_offset(hist: CorrelationHistogram,
                         quiet_margin: float = 200e-9) -> CorrelationHistogram:
    """Scale to unit cross-pulse peak integrals and subtract the quiet offset.

    The offset is the inverse-variance-weighted mean over quiet windows
    (lags away from every repetition peak, the ±δτ features, and their
    images around each peak); its standard deviation is recorded in the
    metadata along with the applied scale.  The scale maps the mean peak
    integral to the configured reference width, so independent-photon peaks
    read one; applying the function twice is a no-op.
    """
    meta = dict(hist.meta)
    t_r = meta["t_r"]
    delta_tau = meta.get("delta_tau", 0.0)
    n_pulses = meta["pulses_per_sequence"]
    ref_width = meta.get("reference_width")
    if ref_width is None:
        raise ValueError("histogram lacks reference_width metadata")
    tau = hist.tau
    values = hist.values.copy()
    stderr = hist.stderr.copy()
    dt = tau[1] - tau[0]

    # quiet windows: away from n·t_r, and from ±δτ and n·t_r ± δτ features
    dist_peak = np.abs(tau - np.round(tau / t_r) * t_r)
    quiet = dist_peak > quiet_margin
    if abs(delta_tau) > 0:
        for feature in (delta_tau, -delta_tau):
            dist = np.abs(tau - feature - np.round((tau - feature) / t_r) * t_r)
            quiet &= dist > quiet_margin
    if not np.any(quiet):
        raise ValueError("no quiet window available for offset estimation")

    w = 1.0 / np.clip(stderr[quiet], 1e-300, None) ** 2
    if not np.all(np.isfinite(w)) or np.all(stderr[quiet] == 0):
        w = np.ones(quiet.sum())
    offset = float(np.sum(values[quiet] * w) / np.sum(w))
    offset_std = float(np.sqrt(1.0 / np.sum(w))) if np.all(stderr[quiet] > 0) else 0.0
    values -= offset

    n_max = n_pulses // 2
    integrals = []
    peaks_used = []
    for n in range(-n_max, n_max + 1):
        if n == 0:
            continue
        window = np.abs(tau - n * t_r) <= t_r / 2
        if window.sum() < int(0.9 * t_r / dt):
            continue
        integrals.append(np.sum(values[window]) * dt)
        peaks_used.append(n)
    if len(integrals) < 2:
        raise ValueError("histogram covers too few repetition peaks to normalize")
    mean_integral = float(np.mean(integrals))
    if mean_integral <= 0:
        raise ValueError("non-positive mean peak integral; cannot normalize")
    scale = ref_width / mean_integral

    meta.update(
        normalized=True,
        scale=scale * meta.get("scale", 1.0) if meta.get("normalized") else scale,
        offset=offset * scale,
        offset_std=offset_std * scale,
        peaks_used=peaks_used,
        reference_width=ref_width,
    )
    return CorrelationHistogram(tau, values * scale, stderr * scale, hist.kind, meta)
