"""Analytic derivatives of the radar measurement chain.

Two halves are chained: the channel derivative with respect to the physical
parameters (complex, structured through Hadamard masks on the Kronecker
channel vector) and the parameter derivative with respect to the pose (real
4x6, right-perturbation convention).  Every formula here is pinned by a
central-finite-difference test; do not change signs without re-running it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AzimuthSingularity, DegenerateRange, PolarSingularity
from .se3 import Pose, adjoint, exp_map, right_jacobian
from .waveform import SPEED_OF_LIGHT, PhysicalParams, ReGrid, UpaConfig

# sign-permutation relating the polar-angle mask to the azimuth mask
_MASK_ROTATION = np.array([
    [0.0, -1.0, 0.0, 0.0],
    [0.0, 0.0, -1.0, 0.0],
    [0.0, 0.0, 0.0, -1.0],
    [-1.0, 0.0, 0.0, 0.0],
])


@dataclass(frozen=True)
class ConstantSelectors:
    """Geometry-independent index masks for the channel derivatives.

    ell/k are the subcarrier and symbol indices of each channel entry; n1 has
    one column per array axis (Ty, Tx, Ry, Rx) holding that axis' element
    index; n2 = n1 @ rotation maps the azimuth angle function onto the polar
    one.  All index vectors are raw integers (no normalization): they scale
    phase derivatives, not amplitudes.
    """

    ell: np.ndarray
    k: np.ndarray
    n1: np.ndarray
    n2: np.ndarray

    @staticmethod
    def angle_basis(phi: float) -> np.ndarray:
        return np.array([np.cos(phi), -np.sin(phi), -np.cos(phi), np.sin(phi)])


def build_selectors(upa: UpaConfig, grid: ReGrid) -> ConstantSelectors:
    ones = [np.ones(n) for n in (grid.m, upa.nt_y, upa.nt_x, upa.nr_y, upa.nr_x)]
    idx = [
        np.asarray(grid.pairs[:, 0], dtype=float),
        np.asarray(grid.pairs[:, 1], dtype=float),
        np.arange(upa.nt_y, dtype=float),
        np.arange(upa.nt_x, dtype=float),
        np.arange(upa.nr_y, dtype=float),
        np.arange(upa.nr_x, dtype=float),
    ]

    def expand(position: int, values: np.ndarray) -> np.ndarray:
        factors = list(ones)
        factors[position] = values
        out = factors[0]
        for f in factors[1:]:
            out = np.kron(out, f)
        return out

    ell = expand(0, idx[0])
    k = expand(0, idx[1])
    n1 = np.stack([expand(p, idx[p + 1]) for p in range(1, 5)], axis=1)
    return ConstantSelectors(ell=ell, k=k, n1=n1, n2=n1 @ _MASK_ROTATION)


def jac_h_wrt_zeta(
    zeta: PhysicalParams,
    upa: UpaConfig,
    grid: ReGrid,
    sel: ConstantSelectors,
) -> np.ndarray:
    """Channel derivative d h / d [tau, phi, theta, mu], complex (M*N_T*N_R, 4).

    The delay column folds the inverse-square amplitude dependence |b| ~
    tau^-2 into a complex offset on the subcarrier indices.  The angle
    columns carry a global minus sign relative to the index masks: the
    steering entries of the transmit array appear conjugated in the channel,
    which flips the sign picked up by each element index.
    """
    from .waveform import channel_vector

    v = channel_vector(zeta, upa, grid)  # includes the gain b
    ell_eff = sel.ell + 1.0 / (1j * np.pi * grid.f0 * zeta.tau)
    f_phi = sel.angle_basis(zeta.phi)
    j_tau = -2j * np.pi * grid.f0 * v * ell_eff
    j_phi = -1j * np.pi * np.sin(zeta.theta) * v * (sel.n1 @ f_phi)
    j_theta = -1j * np.pi * np.cos(zeta.theta) * v * (sel.n2 @ f_phi)
    j_mu = 2j * np.pi * grid.t_sym * v * sel.k
    return np.stack([j_tau, j_phi, j_theta, j_mu], axis=1)


def jac_zeta_wrt_pose(
    T_sp: Pose,
    v_p_local: np.ndarray,
    v_s_local: np.ndarray,
    fc: float,
) -> np.ndarray:
    """Parameter derivative d zeta / d T, real 4x6 in right-perturbation
    convention: zeta(T * Exp(eps delta)) ~ zeta(T) + J @ (eps delta)."""
    R, r = T_sp.R, T_sp.r
    x, y, z = r
    rho2 = float(r @ r)
    rho = np.sqrt(rho2)
    if rho < 1e-3:
        raise DegenerateRange(f"range {rho:.3e} m below 1 mm")
    xy2 = x * x + y * y
    if xy2 < 1e-9:
        raise AzimuthSingularity("target on the array z-axis (x^2 + y^2 ~ 0)")
    if rho2 - z * z < 1e-9:
        raise PolarSingularity("polar angle derivative undefined (rho^2 ~ z^2)")

    rR = r @ R  # row vector r^T R
    out = np.zeros((4, 6))
    out[0, :3] = 2.0 / (SPEED_OF_LIGHT * rho) * rR
    out[1, :3] = (x * R[1, :] - y * R[0, :]) / xy2
    out[2, :3] = -(R[2, :] - z / rho2 * rR) / np.sqrt(rho2 - z * z)
    scale = 2.0 * fc / (SPEED_OF_LIGHT * rho)
    radial = float((R @ v_p_local - v_s_local) @ r)
    out[3, :3] = scale * (v_p_local - v_s_local @ R - radial / rho2 * rR)
    out[3, 3:] = scale * (-rR @ _skew(v_p_local))
    return out


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


@dataclass(frozen=True)
class JacobianBundle:
    """Immutable snapshot of every derivative one filter step consumes.

    H equals the augmented measurement-vs-parameter derivative chained with
    psi; the bundle keeps both factors so the control path can reuse them.
    """

    J_h_zeta: np.ndarray  # complex (M N_T N_R, 4)
    J_zeta_T: np.ndarray  # real (4, 6), a.k.a. psi
    F: np.ndarray
    G: np.ndarray
    Psi: np.ndarray
    H: np.ndarray


def jac_state_F(xi_p: np.ndarray, dt: float) -> np.ndarray:
    """Transition Jacobian w.r.t. the previous relative pose:
    Ad_{Exp(-xi_p dt)}."""
    return adjoint(exp_map(-np.asarray(xi_p, dtype=float), dt))


def jac_control_G(T_sp_pred: Pose, xi_s: np.ndarray, dt: float) -> np.ndarray:
    """Transition Jacobian w.r.t. the control-noise twist:
    -Ad_{T_pred}^{-1} J_r(xi_s dt) dt, evaluated at the predicted pose."""
    return -adjoint(T_sp_pred.inverse()) @ right_jacobian(np.asarray(xi_s) * dt) * dt
