"""Delta traces, reference tracking, detection and classification.

The detector compares every new estimate against a running reference of the
unperturbed network (superposition model: difference; chain model: ratio).
A tone exceeding k-sigma marks a candidate; only K consecutive exceedances
at the same tone confirm a detection, so one-off impulsive outliers are
absorbed.  Confirmed detections are classified by comparing peak sets of the
frequency responses (distributed faults shift them) and of the time-domain
responses (load changes create no new echoes).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.signal

from .tlcore import FrequencyGrid, Spectrum, rmatsolve

_DEFAULT_VELOCITY = 1.0 / math.sqrt(0.4e-6 * 0.1e-9)

CLASS_NONE = "none"
CLASS_IMPEDANCE = "impedance_variation"
CLASS_LOCALIZED = "localized_fault"
CLASS_DISTRIBUTED = "distributed_fault"


def _values_of(source) -> np.ndarray:
    return source.values if hasattr(source, "values") else np.asarray(source)


def _grid_of(source, grid: FrequencyGrid | None) -> FrequencyGrid:
    if hasattr(source, "grid"):
        return source.grid
    if grid is None:
        raise ValueError("a FrequencyGrid is required for plain arrays")
    return grid


# ---------------------------------------------------------------------------
# delta traces

@dataclass
class DeltaTrace:
    """Per-tone increment of an estimate against the unperturbed reference."""

    model: str  # "sup" | "chain"
    grid: FrequencyGrid
    values: np.ndarray  # (nf, n, n)

    def deviation(self) -> np.ndarray:
        """Distance from the no-anomaly value (0 for sup, I for chain)."""
        if self.model == "sup":
            return self.values
        return self.values - np.eye(self.values.shape[-1])

    @property
    def n_channels(self) -> int:
        return self.values.shape[-1]


def delta(estimated, reference, model: str = "sup") -> DeltaTrace:
    """Delta_sup = A - A_ref, Delta_ch = A @ A_ref^-1 (matrix ratio)."""
    if model not in ("sup", "chain"):
        raise ValueError("model must be 'sup' or 'chain'")
    x = _values_of(estimated)
    ref = reference.mean if isinstance(reference, ReferenceState) \
        else _values_of(reference)
    grid = _grid_of(estimated, None)
    if x.shape != ref.shape:
        raise ValueError("estimate and reference shapes differ")
    if model == "sup":
        return DeltaTrace("sup", grid, x - ref)
    return DeltaTrace("chain", grid, rmatsolve(x, ref, "chain delta"))


# ---------------------------------------------------------------------------
# reference tracking and the detection step

@dataclass
class DetectorConfig:
    model: str = "sup"
    k_sigma: float = 3.0
    confirm_steps: int = 5  # K consecutive exceedances
    ema_alpha: float = 0.05
    warmup: int = 50
    tone_slack: int = 1


@dataclass
class ReferenceState:
    """Running unperturbed reference: per-tone mean, error power, candidate."""

    mean: np.ndarray | None = None
    var: np.ndarray | None = None  # E|X - mean|^2 per entry
    count: int = 0
    pending_tone: int | None = None
    pending_hits: int = 0
    confirmed: bool = False
    _m2: np.ndarray | None = field(default=None, repr=False)

    def reference_spectrum(self, quantity: str, grid: FrequencyGrid,
                           meta: dict | None = None) -> Spectrum:
        if self.mean is None:
            raise ValueError("reference not initialized")
        return Spectrum(quantity, grid, self.mean.copy(), meta=dict(meta or {}))

    def _ingest(self, x: np.ndarray, alpha: float, warmup: int):
        if self.mean is None:
            self.mean = x.astype(complex).copy()
            self.var = np.zeros(x.shape)
            self._m2 = np.zeros(x.shape)
            self.count = 1
            return
        self.count += 1
        if self.count <= warmup:
            d = x - self.mean
            self.mean = self.mean + d / self.count
            self._m2 = self._m2 + np.abs(d) ** 2 * (self.count - 1) / self.count
            self.var = self._m2 / self.count
        else:
            d = x - self.mean
            self.mean = self.mean + alpha * d
            self.var = (1.0 - alpha) * self.var + alpha * np.abs(d) ** 2


def _deviation_and_sigma(x: np.ndarray, state: ReferenceState, model: str):
    """Model deviation of x from the reference and its per-entry noise std."""
    if model == "sup":
        dev = x - state.mean
        sigma = np.sqrt(state.var)
    else:
        n = x.shape[-1]
        inv_ref = rmatsolve(np.broadcast_to(np.eye(n), x.shape).copy(),
                            state.mean, "chain deviation")
        dev = (x - state.mean) @ inv_ref
        sigma = np.sqrt(state.var @ (np.abs(inv_ref) ** 2))
    return dev, sigma


def detect_step(estimated, state: ReferenceState,
                config: DetectorConfig = DetectorConfig()):
    """Feed one estimate to the detector; returns (state, detected_flag)."""
    x = _values_of(estimated)
    if state.confirmed:
        return state, True
    if state.mean is None or state.count < config.warmup:
        state._ingest(x, config.ema_alpha, config.warmup)
        return state, False

    dev, sigma = _deviation_and_sigma(x, state, config.model)
    mag = np.abs(dev)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(mag > 0, mag / np.where(sigma > 0, sigma, np.nan), 0.0)
    ratio = np.where(np.isnan(ratio) & (mag > 0), np.inf, np.nan_to_num(ratio))
    per_tone = ratio.reshape(ratio.shape[0], -1).max(axis=1)
    n_star = int(np.argmax(per_tone))
    exceeded = per_tone[n_star] > config.k_sigma

    if state.pending_tone is not None:
        # confirmation watches the tone of the first exceedance; the global
        # argmax may wander between resonances of a strong anomaly
        lo = max(0, state.pending_tone - config.tone_slack)
        hi = state.pending_tone + config.tone_slack + 1
        if float(per_tone[lo:hi].max()) > config.k_sigma:
            state.pending_hits += 1
            if state.pending_hits >= config.confirm_steps:
                state.confirmed = True
                return state, True
            return state, False
        state.pending_tone = None
        state.pending_hits = 0

    if exceeded:
        state.pending_tone = n_star
        state.pending_hits = 1
        return state, False

    state._ingest(x, config.ema_alpha, config.warmup)
    return state, False


# ---------------------------------------------------------------------------
# time-domain transform and peak finding

@dataclass
class TimeTrace:
    """Distance-indexed magnitude trace of an inverse-transformed spectrum."""

    magnitude: np.ndarray
    sample_step_m: float  # spacing of trace samples (after zero padding)
    bin_m: float  # resolution bin v / (2 count delta_f) in reflectometry
    velocity: float
    mode: str  # "reflect" | "end_to_end"

    @property
    def distances(self) -> np.ndarray:
        return np.arange(self.magnitude.size) * self.sample_step_m


def to_time_domain(source, velocity: float = _DEFAULT_VELOCITY, *,
                   grid: FrequencyGrid | None = None, mode: str = "reflect",
                   window: str = "hann", pad_factor: int = 4,
                   entry: tuple[int, int] = (0, 0)) -> TimeTrace:
    """Hermitian extension (DC = 0), window, inverse FFT, magnitude.

    Reflectometry maps time to one-way distance d = v t / 2; end-to-end uses
    d = v t.  Zero padding interpolates the trace for sub-bin peak reads.
    """
    if velocity <= 0:
        raise ValueError("velocity must be positive")
    if pad_factor < 1:
        raise ValueError("pad_factor must be >= 1")
    g = _grid_of(source, grid)
    x = source.deviation() if isinstance(source, DeltaTrace) else _values_of(source)
    if x.ndim == 3:
        x = x[:, entry[0], entry[1]]
    nf = g.count
    if x.shape != (nf,):
        raise ValueError("spectrum length does not match the grid")

    if window == "hann":
        w = np.hanning(nf)
    elif window in ("rect", "none"):
        w = np.ones(nf)
    else:
        raise ValueError(f"unknown window {window!r}")
    xw = x * w

    n_base = 2 * (nf + 1)
    n_fft = pad_factor * n_base
    spec = np.zeros(n_fft, dtype=complex)
    spec[1:nf + 1] = xw
    spec[n_fft - nf:] = np.conj(xw[::-1])
    wsum = float(w.sum())
    x_t = np.fft.ifft(spec) * (n_fft / (2.0 * wsum if wsum > 0 else 1.0))

    dt = 1.0 / (n_fft * g.delta_f)
    factor = 0.5 if mode == "reflect" else 1.0
    if mode not in ("reflect", "end_to_end"):
        raise ValueError(f"unknown mode {mode!r}")
    return TimeTrace(np.abs(x_t), velocity * dt * factor,
                     factor * velocity / (nf * g.delta_f), velocity, mode)


@dataclass(frozen=True)
class Peak:
    position: float  # meters (time traces) or axis units of the input
    amplitude: float
    method: str = "classical"


def _parabolic_offset(y0: float, y1: float, y2: float) -> float:
    denom = y0 - 2.0 * y1 + y2
    if denom == 0.0:
        return 0.0
    return float(np.clip(0.5 * (y0 - y2) / denom, -0.5, 0.5))


def find_peaks(trace, min_prominence: float, min_separation: float = 1.0,
               scale: float | None = None, offset: float = 0.0) -> list[Peak]:
    """Prominence-gated local maxima with quadratic sub-bin refinement.

    ``min_separation`` is in samples of the input.  Positions are reported in
    meters for a TimeTrace, else in ``offset + index * scale`` units.
    """
    if isinstance(trace, TimeTrace):
        values = trace.magnitude
        scale = trace.sample_step_m
    else:
        values = np.asarray(trace, dtype=float)
        scale = 1.0 if scale is None else scale
    if values.size == 0:
        return []
    idx, props = scipy.signal.find_peaks(
        values, prominence=min_prominence,
        distance=max(1, int(round(min_separation))))
    peaks = []
    for i in idx:
        if 0 < i < values.size - 1:
            d = _parabolic_offset(values[i - 1], values[i], values[i + 1])
            amp = values[i] - 0.25 * (values[i - 1] - values[i + 1]) * d
        else:
            d, amp = 0.0, values[i]
        peaks.append(Peak(offset + (i + d) * scale, float(amp)))
    return peaks


# ---------------------------------------------------------------------------
# root-MUSIC super-resolution delays

@dataclass(frozen=True)
class DelayEstimate:
    delay_s: float
    distance_m: float
    method: str = "root_music"


@dataclass
class RootMusicResult:
    estimates: list[DelayEstimate]
    fallback: bool = False


def root_music_delays(source, model_order: int,
                      velocity: float = _DEFAULT_VELOCITY, *,
                      grid: FrequencyGrid | None = None,
                      subarray: int | None = None,
                      entry: tuple[int, int] = (0, 0),
                      mode: str = "reflect") -> RootMusicResult:
    """Delays of the exponential components of a delta spectrum.

    Forward-backward spatial smoothing over the tone sequence, eigenspace
    split at ``model_order``, polynomial rooting; the roots nearest the unit
    circle map to delays tau (distance v tau / 2 in reflectometry).  A
    rank-deficient smoothed covariance falls back to classical peak finding
    on the time trace and flags the result.
    """
    g = _grid_of(source, grid)
    x = source.deviation() if isinstance(source, DeltaTrace) else _values_of(source)
    if x.ndim == 3:
        x = x[:, entry[0], entry[1]]
    nf = x.size
    if model_order == 0:
        return RootMusicResult([])
    if model_order < 0 or model_order >= nf // 2:
        raise ValueError("model_order must be in [0, count/2)")
    L = subarray or max(model_order + 1, nf // 2)
    L = min(max(L, model_order + 1), nf - 1)

    m_snap = nf - L + 1
    hankel = np.lib.stride_tricks.sliding_window_view(x, L).T  # (L, m_snap)
    R = hankel @ hankel.conj().T / m_snap
    J = np.eye(L)[::-1]
    R = 0.5 * (R + J @ R.conj() @ J)

    evals, evecs = np.linalg.eigh(R)
    tol = max(float(evals[-1]), 0.0) * 1e-10
    rank = int(np.sum(evals > tol))
    if rank < model_order:
        factor = 0.5 if mode == "reflect" else 1.0
        trace = to_time_domain(x, velocity, grid=g, mode=mode)
        peaks = find_peaks(trace, 0.05 * float(trace.magnitude.max() or 1.0))
        ests = [DelayEstimate(p.position / (factor * velocity), p.position,
                              "classical") for p in peaks]
        return RootMusicResult(ests, fallback=True)

    noise = evecs[:, :L - model_order]
    poly = np.zeros(2 * L - 1, dtype=complex)
    for k in range(noise.shape[1]):
        v = noise[:, k]
        poly += np.convolve(v, np.conj(v[::-1]))
    roots = np.roots(poly[::-1])
    inside = roots[np.abs(roots) <= 1.0 + 1e-9]
    inside = inside[np.argsort(np.abs(np.abs(inside) - 1.0))][:model_order]

    period = 1.0 / g.delta_f
    factor = 0.5 if mode == "reflect" else 1.0
    ests = []
    for z in inside:
        # the noise polynomial is built from v * conj(reversed v), which puts
        # the signal roots of e^{-j 2 pi f tau} at angle +2 pi df tau
        tau = (np.angle(z) / (2.0 * np.pi * g.delta_f)) % period
        ests.append(DelayEstimate(float(tau), float(tau * velocity * factor)))
    ests.sort(key=lambda e: e.delay_s)
    return RootMusicResult(ests)


# ---------------------------------------------------------------------------
# classification (confirmed detections)

@dataclass
class ClassifierConfig:
    velocity: float = _DEFAULT_VELOCITY
    pad_factor: int = 4
    window: str = "hann"
    thr2_bins: float = 2.0  # frequency-peak displacement => distributed
    thr3_bins: float = 1.5  # first delta peak on an existing echo => load?
    thr4_bins: float = 1.5  # new time-domain peak => localized fault
    freq_prominence_db: float = 3.0  # on 20 log10 |Y(f)|
    time_prominence_rel: float = 0.10
    static_prominence_rel: float = 0.05  # echoes of the before/after traces
    echo_dominance_ratio: float = 1.5  # downstream echo vs first delta peak
    separation_bins: float = 2.0  # minimum peak spacing, resolution bins
    max_distance_m: float | None = None  # drop peaks beyond the network extent
    entry: tuple[int, int] = (0, 0)
    mode: str = "reflect"


@dataclass
class DetectionReport:
    detected: bool
    anomaly_class: str = CLASS_NONE
    n_max: int | None = None
    d_hat_m: float | None = None
    low_confidence: bool = False
    evidence: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.anomaly_class != CLASS_NONE and not self.detected:
            raise ValueError("a classified report must be a detection")

    def to_dict(self) -> dict:
        return {
            "detected": self.detected,
            "class": self.anomaly_class,
            "n_max": self.n_max,
            "d_hat_m": self.d_hat_m,
            "low_confidence": self.low_confidence,
            "evidence": self.evidence,
        }


def _nearest(value: float, targets: list[float]) -> float:
    return min(abs(value - t) for t in targets) if targets else math.inf


def _nearest_gap(sources: list[float], targets: list[float]) -> float:
    """Largest distance from any source to its nearest target."""
    if not sources:
        return 0.0
    if not targets:
        return math.inf
    return max(_nearest(s, targets) for s in sources)


def classify(before, after, delta_trace: DeltaTrace,
             config: ClassifierConfig = ClassifierConfig(),
             n_max: int | None = None) -> DetectionReport:
    """Algorithmic triage of a confirmed detection.

    Distributed faults are recognized either by frequency-response peaks
    displaced beyond thr2 or by their time-domain signature: the delta trace
    is dominated by echoes at existing (unperturbed) echo positions beyond a
    first peak that lies on no such position, because everything past the
    degraded span is seen through it.  Otherwise, a first delta-trace echo
    landing on an existing echo, with no new echoes appearing, is an
    impedance (load) variation; anything else is a localized fault.
    """
    g = _grid_of(before, None)
    i, j = config.entry
    xb = np.abs(_values_of(before)[:, i, j])
    xa = np.abs(_values_of(after)[:, i, j])

    def freq_peaks(x):
        top = float(x.max())
        if top <= 0.0:
            return []
        db = 20.0 * np.log10(np.maximum(x / top, 1e-12))
        return find_peaks(db, config.freq_prominence_db)

    fpb, fpa = freq_peaks(xb), freq_peaks(xa)
    freq_disp = _nearest_gap([p.position for p in fpb],
                             [p.position for p in fpa])

    kw = dict(grid=g, mode=config.mode, window=config.window,
              pad_factor=config.pad_factor)
    td = to_time_domain(delta_trace, config.velocity, entry=config.entry, **kw)
    # the static responses keep their flat baseline out of the transform so
    # that echo peaks are not buried under the t = 0 skirt
    vb = _values_of(before)[:, i, j]
    va = _values_of(after)[:, i, j]
    tb = to_time_domain(vb - vb.mean(), config.velocity, **kw)
    ta = to_time_domain(va - va.mean(), config.velocity, **kw)
    sep = max(1.0, config.separation_bins * td.bin_m / td.sample_step_m)

    def peaks_of(trace, rel):
        top = float(trace.magnitude.max())
        if top <= 0.0:
            return []
        found = find_peaks(trace, rel * top, sep)
        if config.max_distance_m is not None:
            found = [p for p in found if p.position <= config.max_distance_m]
        return found

    dp = peaks_of(td, config.time_prominence_rel)
    bp = peaks_of(tb, config.static_prominence_rel)
    ap = peaks_of(ta, config.static_prominence_rel)
    d_hat = dp[0].position if dp else None

    evidence = {
        "freq_peaks_before_hz": [(p.position + 1.0) * g.delta_f for p in fpb],
        "freq_peaks_after_hz": [(p.position + 1.0) * g.delta_f for p in fpa],
        "freq_displacement_bins": freq_disp if math.isfinite(freq_disp) else None,
        "delta_peaks_m": [p.position for p in dp],
        "time_peaks_before_m": [p.position for p in bp],
        "time_peaks_after_m": [p.position for p in ap],
    }

    if fpb and freq_disp > config.thr2_bins:
        return DetectionReport(True, CLASS_DISTRIBUTED, n_max, d_hat,
                               False, evidence)

    if not dp or not bp:
        return DetectionReport(True, CLASS_LOCALIZED, n_max, d_hat,
                               True, evidence)

    existing = [p.position for p in bp]
    on_existing = _nearest(d_hat, existing) < config.thr3_bins * td.bin_m

    if not on_existing:
        dominant = max(dp, key=lambda p: p.amplitude)
        if dominant.position > d_hat \
                and _nearest(dominant.position, existing) \
                < config.thr3_bins * td.bin_m \
                and dominant.amplitude >= config.echo_dominance_ratio \
                * dp[0].amplitude:
            return DetectionReport(True, CLASS_DISTRIBUTED, n_max, d_hat,
                                   False, evidence)

    if on_existing:
        new_disp = _nearest_gap([p.position for p in ap], existing)
        if new_disp < config.thr4_bins * td.bin_m:
            return DetectionReport(True, CLASS_IMPEDANCE, n_max, d_hat,
                                   False, evidence)
    return DetectionReport(True, CLASS_LOCALIZED, n_max, d_hat, False, evidence)
