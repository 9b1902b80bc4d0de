"""Frequency-domain transmission-line math for power-line networks.

Everything here works on a fixed tone grid (DC excluded, coupling networks
block it).  Lines are described by per-unit-length RLGC matrices; a cable with
``n_channels == 2`` models a three-conductor line in the conductor domain
(third wire as reference), which yields 2x2 matrix-valued line quantities.

Sign convention for the reflection coefficient: ``rho = +1`` for a short and
``rho = -1`` for an open termination (admittance form, the negative of the
usual voltage-reflection convention).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

DEFAULT_DELTA_F_HZ = 4.3e3
DEFAULT_TONE_COUNT = 116  # 4.3 kHz .. ~500 kHz

QUANTITIES = ("yin", "rho", "h")


class NumericError(RuntimeError):
    """A per-tone linear-algebra failure (singular system, bad eig)."""

    def __init__(self, message: str, tones: list[int] | None = None):
        self.tones = list(tones) if tones else []
        if self.tones:
            message = f"{message} (tone indices: {self.tones})"
        super().__init__(message)


@dataclass(frozen=True)
class FrequencyGrid:
    """Tone grid f_k = k * delta_f for k = 1..count."""

    delta_f: float = DEFAULT_DELTA_F_HZ
    count: int = DEFAULT_TONE_COUNT

    def __post_init__(self):
        if self.delta_f <= 0:
            raise ValueError("delta_f must be positive")
        if self.count < 2:
            raise ValueError("need at least 2 tones")

    @property
    def tones(self) -> np.ndarray:
        return np.arange(1, self.count + 1) * self.delta_f

    @property
    def f_max(self) -> float:
        return self.count * self.delta_f


@dataclass(frozen=True)
class CableSpec:
    """Per-unit-length cable constants.

    R scales with sqrt(f/f_ref) (skin effect) and G with f/f_ref (dielectric
    loss); L and C are frequency-flat.  For ``n_channels == 2`` the mutual
    inductance/capacitance is ``mutual_ratio`` times the self term, with the
    Maxwell sign convention for the capacitance matrix.
    """

    n_channels: int = 1
    r0_ohm_per_m: float = 0.05
    l_h_per_m: float = 0.4e-6
    g0_s_per_m: float = 1.0e-9
    c_f_per_m: float = 0.1e-9
    f_ref_hz: float = 500e3
    mutual_ratio: float = 0.0

    def __post_init__(self):
        if self.n_channels not in (1, 2):
            raise ValueError("n_channels must be 1 or 2")
        if min(self.l_h_per_m, self.c_f_per_m) <= 0:
            raise ValueError("L and C must be positive")
        if min(self.r0_ohm_per_m, self.g0_s_per_m) < 0:
            raise ValueError("R and G must be non-negative")
        if not 0.0 <= self.mutual_ratio < 1.0:
            raise ValueError("mutual_ratio must be in [0, 1)")

    @property
    def velocity(self) -> float:
        """Nominal (lossless, self-term) propagation speed in m/s."""
        return 1.0 / np.sqrt(self.l_h_per_m * self.c_f_per_m)

    @property
    def z_char(self) -> float:
        """Nominal characteristic impedance sqrt(L/C) in ohm."""
        return float(np.sqrt(self.l_h_per_m / self.c_f_per_m))

    def scaled(self, r0=1.0, l=1.0, g0=1.0, c=1.0) -> "CableSpec":
        """New spec with multiplied constants (cable degradation model)."""
        return replace(
            self,
            r0_ohm_per_m=self.r0_ohm_per_m * r0,
            l_h_per_m=self.l_h_per_m * l,
            g0_s_per_m=self.g0_s_per_m * g0,
            c_f_per_m=self.c_f_per_m * c,
        )

    def rlgc(self, f_hz: np.ndarray):
        """R(f), L, G(f), C as (nf, n, n) arrays."""
        f = np.asarray(f_hz, dtype=float)
        n = self.n_channels
        r = self.r0_ohm_per_m * np.sqrt(f / self.f_ref_hz)
        g = self.g0_s_per_m * (f / self.f_ref_hz)
        eye = np.eye(n)
        if n == 1:
            lmat = self.l_h_per_m * eye
            cmat = self.c_f_per_m * eye
        else:
            m = self.mutual_ratio
            lmat = self.l_h_per_m * np.array([[1.0, m], [m, 1.0]])
            cmat = self.c_f_per_m * np.array([[1.0, -m], [-m, 1.0]])
        R = r[:, None, None] * eye
        G = g[:, None, None] * eye
        L = np.broadcast_to(lmat, (f.size, n, n)).copy()
        C = np.broadcast_to(cmat, (f.size, n, n)).copy()
        return R, L, G, C


@dataclass(frozen=True)
class LineParams:
    """Propagation matrix Gamma (1/m) and characteristic admittance Y_C (S) per tone."""

    grid: FrequencyGrid
    gamma: np.ndarray  # (nf, n, n) complex
    y_c: np.ndarray  # (nf, n, n) complex

    @property
    def n_channels(self) -> int:
        return self.gamma.shape[-1]


def _positive_real_sqrt(w: np.ndarray) -> np.ndarray:
    """Complex sqrt with the branch forced onto Re >= 0."""
    s = np.sqrt(w)
    return np.where(s.real < 0, -s, s)


def _eig_stack(mats: np.ndarray, what: str):
    """Batched eigendecomposition with per-tone error reporting."""
    try:
        return np.linalg.eig(mats)
    except np.linalg.LinAlgError:
        bad = []
        for k in range(mats.shape[0]):
            try:
                np.linalg.eig(mats[k])
            except np.linalg.LinAlgError:
                bad.append(k)
        raise NumericError(f"eigendecomposition failed for {what}", bad) from None


@lru_cache(maxsize=128)
def propagation_params(cable: CableSpec, grid: FrequencyGrid) -> LineParams:
    """Gamma = sqrt((R+jwL)(G+jwC)) and Y_C per tone, Re(eig(Gamma)) >= 0."""
    f = grid.tones
    w = 2.0 * np.pi * f
    R, L, G, C = cable.rlgc(f)
    Z = R + 1j * w[:, None, None] * L
    Y = G + 1j * w[:, None, None] * C
    if cable.n_channels == 1:
        gam = _positive_real_sqrt(Z[:, 0, 0] * Y[:, 0, 0])
        yc = Y[:, 0, 0] / gam
        return LineParams(grid, gam.reshape(-1, 1, 1), yc.reshape(-1, 1, 1))
    M = Z @ Y
    vals, vecs = _eig_stack(M, "gamma")
    s = _positive_real_sqrt(vals)
    try:
        inv_vecs = np.linalg.inv(vecs)
    except np.linalg.LinAlgError:
        raise NumericError("defective propagation eigensystem",
                           _singular_tones(vecs)) from None
    gam = vecs @ (s[..., None] * inv_vecs)
    yc = np.linalg.solve(Z, gam)
    return LineParams(grid, gam, yc)


def _singular_tones(mats: np.ndarray) -> list[int]:
    dets = np.linalg.det(mats)
    scale = np.max(np.abs(mats), axis=(-2, -1)) ** mats.shape[-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        bad = np.abs(dets) <= 1e-13 * np.maximum(scale, 1e-300)
    return [int(k) for k in np.nonzero(bad)[0]]


def solve_stack(A: np.ndarray, B: np.ndarray, what: str) -> np.ndarray:
    """Batched solve A @ X = B; singular tones raise NumericError."""
    try:
        return np.linalg.solve(A, B)
    except np.linalg.LinAlgError:
        raise NumericError(f"singular system while computing {what}",
                           _singular_tones(A)) from None


def rmatsolve(B: np.ndarray, A: np.ndarray, what: str) -> np.ndarray:
    """Batched right-solve B @ A^-1."""
    Bt = np.swapaxes(B, -1, -2)
    At = np.swapaxes(A, -1, -2)
    return np.swapaxes(solve_stack(At, Bt, what), -1, -2)


def _matfun(gamma: np.ndarray, length: float, fun) -> np.ndarray:
    """fun(gamma * length) for a stack of 2x2 matrices via eigendecomposition."""
    vals, vecs = _eig_stack(gamma, "matrix function")
    d = fun(vals * length)
    return vecs @ (d[..., None] * np.linalg.inv(vecs))


def section_abcd(params: LineParams, length: float) -> np.ndarray:
    """Chain matrix of a uniform section: [[A, B], [C, D]], shape (nf, 2n, 2n).

    With V, I at the near end expressed in terms of the far end:
    A = cosh(Gamma l), B = sinh(Gamma l) Y_C^-1, C = Y_C sinh(Gamma l),
    D = Y_C cosh(Gamma l) Y_C^-1 (equals cosh(Gamma^T l) for reciprocal lines).
    """
    n = params.n_channels
    nf = params.gamma.shape[0]
    M = np.empty((nf, 2 * n, 2 * n), dtype=complex)
    if n == 1:
        gl = params.gamma[:, 0, 0] * length
        yc = params.y_c[:, 0, 0]
        ch, sh = np.cosh(gl), np.sinh(gl)
        M[:, 0, 0] = ch
        M[:, 0, 1] = sh / yc
        M[:, 1, 0] = yc * sh
        M[:, 1, 1] = ch
        return M
    if length == 0.0:
        M[:] = np.eye(2 * n)
        return M
    coshG = _matfun(params.gamma, length, np.cosh)
    sinhG = _matfun(params.gamma, length, np.sinh)
    yc = params.y_c
    inv_yc = np.linalg.inv(yc)
    M[:, :n, :n] = coshG
    M[:, :n, n:] = sinhG @ inv_yc
    M[:, n:, :n] = yc @ sinhG
    M[:, n:, n:] = yc @ coshG @ inv_yc
    return M


def shunt_abcd(y_shunt: np.ndarray, nf: int, n: int) -> np.ndarray:
    """Chain matrix of a shunt admittance stamp [[I, 0], [Y, I]]."""
    y = np.asarray(y_shunt, dtype=complex)
    if y.ndim == 2:
        y = np.broadcast_to(y, (nf, n, n))
    M = np.zeros((nf, 2 * n, 2 * n), dtype=complex)
    M[:] = np.eye(2 * n)
    M[:, n:, :n] = y
    return M


@dataclass
class Spectrum:
    """Matrix-valued frequency response on a tone grid.

    ``values`` has shape (count, n, n); scalar (count,) input is promoted.
    ``meta`` carries port/pair labels and, for port quantities, the reference
    admittance under key ``"y0"`` (needed to map between yin and rho).
    """

    quantity: str
    grid: FrequencyGrid
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.quantity not in QUANTITIES:
            raise ValueError(f"unknown quantity {self.quantity!r}")
        v = np.asarray(self.values, dtype=complex)
        if v.ndim == 1:
            v = v.reshape(-1, 1, 1)
        if v.ndim != 3 or v.shape[1] != v.shape[2]:
            raise ValueError("values must have shape (count, n, n)")
        if v.shape[0] != self.grid.count:
            raise ValueError("one value per tone required")
        self.values = v

    @property
    def n_channels(self) -> int:
        return self.values.shape[-1]

    def entry(self, row: int = 0, col: int = 0) -> np.ndarray:
        return self.values[:, row, col]


def as_reference(y0, grid: FrequencyGrid, n: int) -> np.ndarray:
    """Normalize a reference admittance to a (nf, n, n) stack."""
    if np.isscalar(y0):
        return np.broadcast_to(complex(y0) * np.eye(n), (grid.count, n, n)).copy()
    arr = np.asarray(y0, dtype=complex)
    if arr.ndim == 1:
        out = np.zeros((grid.count, n, n), dtype=complex)
        for i in range(n):
            out[:, i, i] = arr
        return out
    if arr.shape != (grid.count, n, n):
        raise ValueError("reference admittance shape mismatch")
    return arr.copy()


def characteristic_reference(cable: CableSpec, grid: FrequencyGrid,
                             diagonal: bool = True) -> np.ndarray:
    """Reference admittance matched to a cable: diag(Y_C) per tone by default."""
    yc = propagation_params(cable, grid).y_c
    if not diagonal or cable.n_channels == 1:
        return yc.copy()
    out = np.zeros_like(yc)
    idx = np.arange(cable.n_channels)
    out[:, idx, idx] = yc[:, idx, idx]
    return out


def reflection_coefficient(yin: Spectrum, y0) -> Spectrum:
    """rho = (I + Yin Y0^-1)^-1 (Yin Y0^-1 - I); +1 short, -1 open."""
    if yin.quantity != "yin":
        raise ValueError("expected an input-admittance spectrum")
    n = yin.n_channels
    ref = as_reference(y0, yin.grid, n)
    T = rmatsolve(yin.values, ref, "Yin * Y0^-1")
    eye = np.eye(n)
    rho = solve_stack(eye + T, T - eye, "reflection coefficient")
    return Spectrum("rho", yin.grid, rho, meta={**yin.meta, "y0": ref})


def admittance_from_reflection(rho: Spectrum, y0=None) -> Spectrum:
    """Invert the reflection map: Yin = (I + rho)(I - rho)^-1 Y0."""
    n = rho.n_channels
    ref = as_reference(y0 if y0 is not None else rho.meta["y0"], rho.grid, n)
    eye = np.eye(n)
    inner = solve_stack(eye - rho.values, ref, "admittance reconstruction")
    return Spectrum("yin", rho.grid, (eye + rho.values) @ inner,
                    meta={**rho.meta, "y0": ref})
