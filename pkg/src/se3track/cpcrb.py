"""Recursive Fisher information and the conditional posterior Cramer-Rao
bound on the pose manifold.

The per-epoch information recursion (Woodbury form)

    I_n = H^T C_zbar^-1 H + (C_w' + F I_{n-1}^-1 F^T)^-1

lower-bounds the tracking MSE conditionally on past measurements; the second
summand alone is the prior-information term E, which is what the control
optimizer works against.  C_w' widens the additive pose noise with the
control noise transported by an adjoint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import IllConditioned


@dataclass(frozen=True)
class FimState:
    """Pose Fisher information, symmetric positive definite."""

    I_T: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "I_T", 0.5 * (self.I_T + self.I_T.T))


def _chol_inverse(mat: np.ndarray, what: str) -> np.ndarray:
    """PD inverse via Cholesky with a condition-number guard."""
    try:
        chol = cho_factor(mat, lower=True)
    except np.linalg.LinAlgError as exc:
        raise IllConditioned(f"{what} is not positive definite") from exc
    diag = np.diag(chol[0])
    if (diag.max() / diag.min()) ** 2 > 1e14:
        raise IllConditioned(f"{what} condition number exceeds 1e14")
    return cho_solve(chol, np.eye(mat.shape[0]))


def process_noise_prime(
    Xi_w: np.ndarray, C_w: np.ndarray, Ad_inv: np.ndarray, dt: float
) -> np.ndarray:
    """Widened process noise dt^2 Ad^-1 Xi_w Ad^-T + C_w."""
    return dt * dt * Ad_inv @ Xi_w @ Ad_inv.T + C_w


def prior_information(
    I_prev: FimState, F: np.ndarray, C_w_prime: np.ndarray
) -> np.ndarray:
    """Measurement-free information E = (C_w' + F I_prev^-1 F^T)^-1."""
    cov_prev = _chol_inverse(I_prev.I_T, "previous FIM")
    return _chol_inverse(C_w_prime + F @ cov_prev @ F.T, "propagated covariance")


def fim_step(
    I_prev: FimState,
    F: np.ndarray,
    H: np.ndarray,
    C_w_prime: np.ndarray,
    C_z_aug: np.ndarray,
) -> tuple[FimState, np.ndarray]:
    """One recursion step; returns the new FIM and the prior term E."""
    E = prior_information(I_prev, F, C_w_prime)
    info_meas = H.T @ _chol_inverse(C_z_aug, "measurement noise") @ H
    return FimState(I_T=info_meas + E), E


def cpcrb_pose(I: FimState) -> np.ndarray:
    """Pose bound: inverse of the information matrix."""
    return _chol_inverse(I.I_T, "pose FIM")


def cpcrb_params(I: FimState, Psi: np.ndarray) -> np.ndarray:
    """Physical-parameter bound Psi I^-1 Psi^T via reparameterization."""
    return Psi @ cpcrb_pose(I) @ Psi.T
