"""Measurement simulation: true network responses -> noisy estimates.

The signal chain is abstracted to additive, zero-mean complex Gaussian
estimation error on the measured quantity itself.  Two noise models:

* ``PhysicalNoise`` derives the per-tone error power from transmitter and
  receiver noise (dBc) plus a decaying network-noise floor.  The admittance
  error is the reflection-coefficient error propagated through the exact
  (linearized) rho -> Yin map, which concentrates noise where |1 - rho| is
  small, as a real reflectometer does.
* ``DirectQnr`` pins the per-tone quantity-to-noise ratio directly
  (``qnr_db = inf`` means noiseless).

Mains-level sensing averages M estimates, dividing the error power by M;
symbol-level sensing is a single-shot estimate per step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tlcore import Spectrum, reflection_coefficient, solve_stack


@dataclass(frozen=True)
class DirectQnr:
    qnr_db: float

    def __post_init__(self):
        if math.isnan(self.qnr_db) or self.qnr_db == -math.inf:
            raise ValueError("qnr_db must be a number or +inf")


@dataclass(frozen=True)
class PhysicalNoise:
    tx_dbc: float = -50.0
    rx_dbc: float = -60.0
    network_floor_db: float | None = -30.0  # at the pivot; None disables
    network_slope_db_per_decade: float = 35.0
    network_pivot_hz: float = 10e3
    # residual far-end traffic leaking into the echo estimate; full-duplex
    # reflectometry suffers it, half-duplex end-to-end reception does not
    soi_dbc: float | None = -45.0

    def __post_init__(self):
        if self.tx_dbc >= 0 or self.rx_dbc >= 0:
            raise ValueError("dBc noise levels must be negative")
        if self.soi_dbc is not None and self.soi_dbc >= 0:
            raise ValueError("dBc noise levels must be negative")

    def network_power(self, f_hz: np.ndarray) -> np.ndarray:
        """Network-noise-to-signal power ratio per tone."""
        f = np.asarray(f_hz, dtype=float)
        if self.network_floor_db is None:
            return np.zeros_like(f)
        level = self.network_floor_db - self.network_slope_db_per_decade * \
            np.log10(np.maximum(f / self.network_pivot_hz, 1.0))
        return 10.0 ** (level / 10.0)


NoiseModel = DirectQnr | PhysicalNoise


@dataclass(frozen=True)
class SymbolSensing:
    """Per-OFDM-symbol estimates (single shot, catches transient anomalies)."""

    symbols_per_estimate: int = 1


@dataclass(frozen=True)
class MainsSensing:
    """Estimates every `half_periods` mains half-cycles, averaged M times."""

    half_periods: int = 1
    averages: int = 1

    def __post_init__(self):
        if self.averages < 1:
            raise ValueError("averages must be >= 1")


MeasurementPlan = SymbolSensing | MainsSensing


def plan_averages(plan: MeasurementPlan) -> int:
    return plan.averages if isinstance(plan, MainsSensing) else 1


def _rho_error_power(model: PhysicalNoise, rho: np.ndarray, f_hz: np.ndarray,
                     include_soi: bool = True) -> np.ndarray:
    ptx = 10.0 ** (model.tx_dbc / 10.0)
    prx = 10.0 ** (model.rx_dbc / 10.0)
    ppl = model.network_power(f_hz)
    power = np.abs(rho) ** 2 * ptx + prx + ppl[:, None, None]
    if include_soi and model.soi_dbc is not None:
        power = power + 10.0 ** (model.soi_dbc / 10.0)
    return power


def _admittance_error_maps(true_spec: Spectrum):
    """(M1, M2, rho) of the linearized error map E_Y = M1 E_rho M2."""
    y0 = true_spec.meta.get("y0")
    if y0 is None:
        raise ValueError("admittance spectrum lacks its reference ('y0' meta)")
    rho = reflection_coefficient(true_spec, y0).values
    eye = np.eye(true_spec.n_channels)
    inv_one_minus = solve_stack(eye - rho,
                                np.broadcast_to(eye, rho.shape).copy(),
                                "noise propagation")
    return 2.0 * inv_one_minus, inv_one_minus @ np.asarray(y0), rho


def noise_std(true_spec: Spectrum, model: NoiseModel,
              plan: MeasurementPlan) -> np.ndarray:
    """Per-tone, per-entry standard deviation of the total complex error."""
    x0 = true_spec.values
    m = plan_averages(plan)
    if isinstance(model, DirectQnr):
        if model.qnr_db == math.inf:
            return np.zeros(x0.shape)
        return np.abs(x0) * 10.0 ** (-model.qnr_db / 20.0) / math.sqrt(m)
    f = true_spec.grid.tones
    if true_spec.quantity == "h":
        var = _rho_error_power(model, x0, f, include_soi=False)
    elif true_spec.quantity == "rho":
        var = _rho_error_power(model, x0, f)
    elif true_spec.quantity == "yin":
        m1, m2, rho = _admittance_error_maps(true_spec)
        var_rho = _rho_error_power(model, rho, f)
        var = (np.abs(m1) ** 2) @ var_rho @ (np.abs(m2) ** 2)
    else:
        raise ValueError(f"no physical noise model for {true_spec.quantity!r}")
    return np.sqrt(var / m)


@dataclass
class EstimatedSpectrum:
    """A noisy estimate plus the noise metadata it was drawn with."""

    spectrum: Spectrum
    noise_sigma: np.ndarray  # same shape as values
    model: NoiseModel
    plan: MeasurementPlan
    realized_qnr_db: float

    @property
    def values(self) -> np.ndarray:
        return self.spectrum.values

    @property
    def grid(self):
        return self.spectrum.grid

    @property
    def quantity(self) -> str:
        return self.spectrum.quantity

    @property
    def n_channels(self) -> int:
        return self.spectrum.n_channels


def _unit_complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) \
        / math.sqrt(2.0)


def simulate_measurement(true_spec: Spectrum, model: NoiseModel,
                         plan: MeasurementPlan, seed) -> EstimatedSpectrum:
    """Draw one estimate X~ = X0 + X_N; deterministic for a given seed."""
    rng = seed if isinstance(seed, np.random.Generator) \
        else np.random.default_rng(seed)
    x0 = true_spec.values
    m = plan_averages(plan)

    if isinstance(model, PhysicalNoise) and true_spec.quantity == "yin":
        # what a reflectometer does: estimate rho noisily, then apply the
        # exact rho -> Yin map; sigma stays the first-order error estimate
        m1, m2, rho = _admittance_error_maps(true_spec)
        sig_rho = np.sqrt(_rho_error_power(model, rho, true_spec.grid.tones) / m)
        e_rho = sig_rho * _unit_complex_normal(rng, x0.shape)
        y0 = np.asarray(true_spec.meta["y0"])
        eye = np.eye(true_spec.n_channels)
        rho_est = rho + e_rho
        values = (eye + rho_est) @ solve_stack(eye - rho_est, y0,
                                               "admittance estimate")
        x_n = values - x0
        sigma = np.sqrt((np.abs(m1) ** 2) @ (sig_rho ** 2) @ (np.abs(m2) ** 2))
    else:
        sigma = noise_std(true_spec, model, plan)
        x_n = sigma * _unit_complex_normal(rng, x0.shape)
        values = x0 + x_n
    p_sig = float(np.sum(np.abs(x0) ** 2))
    p_err = float(np.sum(np.abs(x_n) ** 2))
    qnr = math.inf if p_err == 0.0 else 10.0 * math.log10(p_sig / p_err)
    est = Spectrum(true_spec.quantity, true_spec.grid, values,
                   meta=dict(true_spec.meta))
    return EstimatedSpectrum(est, sigma, model, plan, qnr)


@dataclass
class QnrReport:
    per_tone_db: np.ndarray
    aggregate_db: float
    excluded_tones: list[int]


def qnr_of(estimated, true_spec: Spectrum) -> QnrReport:
    """Quantity-to-noise ratio |X0|^2 / E|X_N|^2, averaged over realizations.

    ``estimated`` is one estimate or a list of them; tones where the true
    quantity is exactly zero are excluded and flagged.
    """
    estimates = estimated if isinstance(estimated, (list, tuple)) else [estimated]
    if not estimates:
        raise ValueError("need at least one realization")
    x0 = true_spec.values
    p_sig = np.mean(np.abs(x0) ** 2, axis=(1, 2))
    p_err = np.zeros_like(p_sig)
    for est in estimates:
        p_err += np.mean(np.abs(est.values - x0) ** 2, axis=(1, 2))
    p_err /= len(estimates)

    excluded = [int(k) for k in np.nonzero(p_sig == 0.0)[0]]
    valid = p_sig > 0.0
    per_tone = np.full(p_sig.shape, np.nan)
    with np.errstate(divide="ignore"):
        ratio = np.where(p_err[valid] > 0.0, p_sig[valid] / p_err[valid], np.inf)
        per_tone[valid] = 10.0 * np.log10(ratio)
    if not np.any(valid):
        aggregate = math.nan
    elif np.all(p_err[valid] == 0.0):
        aggregate = math.inf
    else:
        finite = per_tone[valid]
        aggregate = float(np.mean(finite[np.isfinite(finite)]))
    return QnrReport(per_tone, aggregate, excluded)
