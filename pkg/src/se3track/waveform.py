"""OFDM MIMO radar front end: UPA steering vectors, resource-element grid,
line-of-sight channel vector, measurement synthesis and real augmentation.

The radar is mono-static, so one (theta, phi) pair feeds both the Tx and Rx
arrays.  Steering entries carry a leading +1 and a negative sign on every
subsequent element; the sign pattern is part of the model and the analytic
derivatives in `jacobians` depend on it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateRange, ShapeMismatch

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class UpaConfig:
    """Antenna counts of the transmit and receive uniform planar arrays."""

    nt_x: int = 2
    nt_y: int = 2
    nr_x: int = 2
    nr_y: int = 2

    def __post_init__(self):
        if min(self.nt_x, self.nt_y, self.nr_x, self.nr_y) < 1:
            raise ValueError("antenna counts must be >= 1")

    @property
    def n_t(self) -> int:
        return self.nt_x * self.nt_y

    @property
    def n_r(self) -> int:
        return self.nr_x * self.nr_y


@dataclass(frozen=True)
class ReGrid:
    """Sensing resource elements: (subcarrier, symbol) index pairs plus the
    OFDM numerology they live on.

    t_sym is the full symbol duration including the cyclic prefix, so
    t_sym > 1/f0 always holds.
    """

    pairs: np.ndarray  # (M, 2) int array of (ell_m, k_m)
    f0: float = 15e3  # subcarrier spacing, Hz
    t_sym: float = 1.0 / 15e3 / 0.93  # symbol duration, s
    fc: float = 2.4e9  # center frequency, Hz

    def __post_init__(self):
        pairs = np.atleast_2d(np.asarray(self.pairs, dtype=int))
        if pairs.shape[0] < 1 or pairs.shape[1] != 2:
            raise ValueError("grid needs at least one (subcarrier, symbol) pair")
        if len({tuple(p) for p in pairs}) != len(pairs):
            raise ValueError("resource-element pairs must be distinct")
        if self.t_sym <= 1.0 / self.f0:
            raise ValueError("symbol duration must exceed 1/f0 (cyclic prefix)")
        object.__setattr__(self, "pairs", pairs)

    @property
    def m(self) -> int:
        return self.pairs.shape[0]

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.fc


def diagonal_lattice(n_subcarriers: int, n_symbols: int, m: int) -> np.ndarray:
    """(ell, k) pairs walking the grid diagonally, spreading delay and Doppler
    observability across the full span of both indices."""
    if m > n_subcarriers * n_symbols:
        raise ValueError("more resource elements requested than the grid holds")
    idx = np.arange(m)
    return np.stack([idx % n_subcarriers, idx % n_symbols], axis=1)


@dataclass(frozen=True)
class PhysicalParams:
    """Radar-visible parameters: delay, azimuth, polar angle, Doppler and the
    complex line-of-sight gain."""

    tau: float
    phi: float
    theta: float
    mu: float
    b: complex

    def vector(self) -> np.ndarray:
        return np.array([self.tau, self.phi, self.theta, self.mu])


@dataclass(frozen=True)
class PilotMatrix:
    """Per-RE transmit vectors; row m is x_m with |x_m|^2 = power."""

    rows: np.ndarray  # (M, N_T) complex
    power: float = 1.0


def _steering_axis(n: int, phase: float) -> np.ndarray:
    """[1, -e^{j pi u}, ..., -e^{j pi (n-1) u}] / sqrt(n)."""
    a = np.exp(1j * np.pi * phase * np.arange(n))
    a[1:] = -a[1:]
    return a / np.sqrt(n)


def steering_vector(theta: float, phi: float, nx: int, ny: int) -> np.ndarray:
    """Unit-norm UPA response a_y kron a_x at polar angle theta, azimuth phi."""
    sin_t = np.sin(theta)
    ax = _steering_axis(nx, sin_t * np.cos(phi))
    ay = _steering_axis(ny, sin_t * np.sin(phi))
    return np.kron(ay, ax)


def omega_vector(tau: float, mu: float, grid: ReGrid) -> np.ndarray:
    """Unit-modulus delay/Doppler phasors, one per resource element."""
    ell = grid.pairs[:, 0]
    k = grid.pairs[:, 1]
    return np.exp(-2j * np.pi * ell * grid.f0 * tau) * np.exp(
        2j * np.pi * mu * k * grid.t_sym
    )


def amplitude_constant(fc: float, sigma_rcs: float) -> float:
    """Range-independent gain factor sqrt(lambda^2 * rcs / (4 pi)^3)."""
    lam = SPEED_OF_LIGHT / fc
    return np.sqrt(lam * lam * sigma_rcs / (4.0 * np.pi) ** 3)


def channel_gain(rho: float, phase: float, a_const: float) -> complex:
    """Inverse-square LOS gain a * e^{j phase} / rho^2."""
    if rho < 1e-3:
        raise DegenerateRange(f"range {rho:.3e} m below 1 mm")
    return a_const * np.exp(1j * phase) / (rho * rho)


def channel_vector(zeta: PhysicalParams, upa: UpaConfig, grid: ReGrid) -> np.ndarray:
    """Stacked LOS channel b * omega kron conj(a_T) kron a_R, length M*N_T*N_R."""
    a_t = steering_vector(zeta.theta, zeta.phi, upa.nt_x, upa.nt_y)
    a_r = steering_vector(zeta.theta, zeta.phi, upa.nr_x, upa.nr_y)
    om = omega_vector(zeta.tau, zeta.mu, grid)
    return zeta.b * np.kron(om, np.kron(a_t.conj(), a_r))


def apply_pilots(h: np.ndarray, pilots: PilotMatrix, n_r: int) -> np.ndarray:
    """Noiseless measurement (X kron I_{N_R}) h, returned as an M*N_R vector."""
    m, n_t = pilots.rows.shape
    if h.shape != (m * n_t * n_r,):
        raise ShapeMismatch(
            f"channel length {h.shape} inconsistent with M={m}, N_T={n_t}, N_R={n_r}"
        )
    blocks = h.reshape(m, n_t, n_r)
    return np.einsum("mt,mtr->mr", pilots.rows, blocks).ravel()


def synthesize_measurement(
    h: np.ndarray,
    pilots: PilotMatrix,
    n_r: int,
    sigma_z: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Received vector y = (X kron I) h + z with z circularly-symmetric
    complex Gaussian of per-component variance sigma_z^2."""
    y = apply_pilots(h, pilots, n_r)
    if sigma_z > 0.0:
        noise = rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)
        y = y + sigma_z / np.sqrt(2.0) * noise
    return y


def augment(y: np.ndarray) -> np.ndarray:
    """Stack [Re(y); Im(y)].  The augmented noise covariance of a circularly
    symmetric complex noise of variance sigma_z^2 is (sigma_z^2/2) I."""
    return np.concatenate([y.real, y.imag], axis=0)


def build_pilot_matrix(
    upa: UpaConfig, grid: ReGrid, power: float, rng: np.random.Generator
) -> PilotMatrix:
    """Per-RE pilot vectors drawn uniformly on the complex sphere of radius
    sqrt(power); deterministic under a fixed generator state."""
    if power <= 0.0:
        raise ValueError("pilot power must be positive")
    raw = rng.standard_normal((grid.m, upa.n_t)) + 1j * rng.standard_normal(
        (grid.m, upa.n_t)
    )
    rows = raw / np.linalg.norm(raw, axis=1, keepdims=True) * np.sqrt(power)
    return PilotMatrix(rows=rows, power=power)
