"""Extended Kalman filter on SE(3).

The state is the relative pose T_sp with a 6x6 covariance in its right
tangent space.  Prediction runs the relative rigid-body transition with the
known control twist; correction linearizes the stacked OFDM radar measurement
around the prediction and applies the gain through the right-plus retraction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import SingularInnovation
from .jacobians import jac_control_G, jac_h_wrt_zeta, jac_state_F, jac_zeta_wrt_pose, build_selectors, ConstantSelectors
from .kinematics import UpaOffset, evolve_relative, extract_params, local_velocity
from .se3 import Pose, right_plus
from .waveform import (
    PhysicalParams,
    PilotMatrix,
    ReGrid,
    UpaConfig,
    apply_pilots,
    augment,
    channel_vector,
)


@dataclass(frozen=True)
class RadarModel:
    """Everything the filter knows about its own sensor: array layout, RE
    grid, transmitted pilots, array offset, channel constants and the noise
    level.  The channel phase is treated as known (drawn once per episode).
    """

    upa: UpaConfig
    grid: ReGrid
    pilots: PilotMatrix
    offset: UpaOffset
    a_const: float
    phase: float
    sigma_z: float
    xi_p_nominal: np.ndarray
    selectors: ConstantSelectors = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "selectors", build_selectors(self.upa, self.grid))

    @property
    def n_aug(self) -> int:
        return 2 * self.grid.m * self.upa.n_r

    def c_z_aug(self) -> np.ndarray:
        """Augmented noise covariance (sigma_z^2 / 2) I."""
        return 0.5 * self.sigma_z**2 * np.eye(self.n_aug)

    def zeta(self, T_sp: Pose, xi_s_next: np.ndarray) -> PhysicalParams:
        return extract_params(
            T_sp, xi_s_next, self.xi_p_nominal, self.offset, self.grid,
            self.a_const, self.phase,
        )

    def g_aug(self, T_sp: Pose, xi_s_next: np.ndarray) -> np.ndarray:
        """Noiseless augmented measurement at the given pose and control."""
        h = channel_vector(self.zeta(T_sp, xi_s_next), self.upa, self.grid)
        return augment(apply_pilots(h, self.pilots, self.upa.n_r))

    def jac_y_zeta_aug(self, zeta: PhysicalParams) -> np.ndarray:
        """Real (2 M N_R, 4) derivative of the augmented measurement w.r.t.
        the physical parameters."""
        jh = jac_h_wrt_zeta(zeta, self.upa, self.grid, self.selectors)
        jy = np.stack(
            [apply_pilots(jh[:, i], self.pilots, self.upa.n_r) for i in range(4)],
            axis=1,
        )
        return np.concatenate([jy.real, jy.imag], axis=0)

    def psi(self, T_sp: Pose, xi_s_next: np.ndarray) -> np.ndarray:
        """Parameter-vs-pose Jacobian at (T_sp, next control)."""
        v_s = local_velocity(xi_s_next, self.offset.s)
        v_p = local_velocity(self.xi_p_nominal, np.zeros(3))
        return jac_zeta_wrt_pose(T_sp, v_p, v_s, self.grid.fc)

    def jac_H(self, T_sp: Pose, xi_s_next: np.ndarray) -> np.ndarray:
        """Measurement Jacobian H = J_zeta^ybar @ J_T^zeta, real (2MN_R, 6)."""
        zeta = self.zeta(T_sp, xi_s_next)
        return self.jac_y_zeta_aug(zeta) @ self.psi(T_sp, xi_s_next)

    def jacobian_bundle(self, T_sp_pred: Pose, xi_s: np.ndarray,
                        xi_s_next: np.ndarray, dt: float):
        """All derivatives of one filter step at the predicted pose."""
        from .jacobians import JacobianBundle

        zeta = self.zeta(T_sp_pred, xi_s_next)
        j_h = jac_h_wrt_zeta(zeta, self.upa, self.grid, self.selectors)
        psi = self.psi(T_sp_pred, xi_s_next)
        return JacobianBundle(
            J_h_zeta=j_h,
            J_zeta_T=psi,
            F=jac_state_F(self.xi_p_nominal, dt),
            G=jac_control_G(T_sp_pred, xi_s, dt),
            Psi=psi,
            H=self.jac_y_zeta_aug(zeta) @ psi,
        )


@dataclass(frozen=True)
class FilterState:
    """Pose estimate with right-tangent covariance, symmetrized on entry."""

    T_hat: Pose
    P: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "P", 0.5 * (self.P + self.P.T))


@dataclass(frozen=True)
class ParamPosterior:
    zeta_hat: PhysicalParams
    V: np.ndarray


def predict(
    state: FilterState,
    xi_s: np.ndarray,
    xi_p_nominal: np.ndarray,
    Xi_w: np.ndarray,
    C_w: np.ndarray,
    dt: float,
) -> FilterState:
    """Time update: propagate the pose with zero noise and the covariance as
    P' = F P F^T + G Xi_w G^T + C_w."""
    T_pred = evolve_relative(state.T_hat, xi_s, xi_p_nominal, np.zeros(6), dt)
    F = jac_state_F(xi_p_nominal, dt)
    G = jac_control_G(T_pred, xi_s, dt)
    P_pred = F @ state.P @ F.T + G @ Xi_w @ G.T + C_w
    return FilterState(T_hat=T_pred, P=P_pred)


def predict_params(
    state_pred: FilterState, model: RadarModel, xi_s_next: np.ndarray
) -> ParamPosterior:
    """A-priori physical-parameter estimate with linearized covariance
    V = Psi P Psi^T."""
    zeta_hat = model.zeta(state_pred.T_hat, xi_s_next)
    psi = model.psi(state_pred.T_hat, xi_s_next)
    return ParamPosterior(zeta_hat=zeta_hat, V=psi @ state_pred.P @ psi.T)


def update(
    state_pred: FilterState,
    y_aug: np.ndarray,
    H: np.ndarray,
    c_z_aug: np.ndarray,
    g_pred: np.ndarray,
) -> FilterState:
    """Measurement update with right-plus retraction of the correction.

    The covariance is downdated as P - K S K^T, then symmetrized and
    projected back onto the PSD cone (negative eigenvalues clipped at zero).
    """
    S = H @ state_pred.P @ H.T + c_z_aug
    scale = float(np.mean(np.diag(S)))
    try:
        chol = cho_factor(S + 1e-12 * scale * np.eye(S.shape[0]), lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularInnovation("innovation covariance Cholesky failed") from exc
    diag = np.diag(chol[0])
    if (diag.max() / diag.min()) ** 2 > 1e12:
        raise SingularInnovation("innovation covariance condition number > 1e12")
    K = cho_solve(chol, H @ state_pred.P).T  # P H^T S^-1
    T_new = right_plus(state_pred.T_hat, K @ (y_aug - g_pred))
    P_new = state_pred.P - K @ S @ K.T
    P_new = 0.5 * (P_new + P_new.T)
    w, v = np.linalg.eigh(P_new)
    if w[0] < 0.0:
        P_new = (v * np.clip(w, 0.0, None)) @ v.T
    return FilterState(T_hat=T_new, P=P_new)
