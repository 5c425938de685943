"""SE(3)/SO(3) primitives: hat/vee, Exp/Log, adjoint, right Jacobian.

Conventions used throughout the package:
  * twists are 6-vectors ordered [nu; omega] (linear first, angular second),
  * poses are (R, r) with R a 3x3 rotation matrix and r in meters,
  * perturbations are applied on the right: T (+) delta = T * Exp(delta),
  * all 6x6 matrices (adjoint, covariances, Jacobians) use the same ordering.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import polar

from .errors import AngleNearPi, NotPSD

# series switchover thresholds (double precision cancellation)
_EXP_EPS = 1e-8
_LOG_EPS = 1e-6
_ORTHO_DRIFT = 1e-9


def skew(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix [v]_x with [v]_x w = v x w."""
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def unskew(m: np.ndarray) -> np.ndarray:
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def hat(xi: np.ndarray) -> np.ndarray:
    """4x4 Lie-algebra matrix of a twist: [[skew(omega), nu], [0, 0]]."""
    out = np.zeros((4, 4))
    out[:3, :3] = skew(xi[3:])
    out[:3, 3] = xi[:3]
    return out


def vee(m: np.ndarray) -> np.ndarray:
    return np.concatenate([m[:3, 3], unskew(m[:3, :3])])


def _rot_coeffs(theta: float) -> tuple[float, float, float]:
    """(sin t / t, (1-cos t)/t^2, (t - sin t)/t^3) with small-angle series."""
    if theta < _EXP_EPS:
        t2 = theta * theta
        a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0
        b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0
        c = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
        return a, b, c
    t2 = theta * theta
    return (
        np.sin(theta) / theta,
        (1.0 - np.cos(theta)) / t2,
        (theta - np.sin(theta)) / (t2 * theta),
    )


def so3_exp(omega: np.ndarray) -> np.ndarray:
    theta = float(np.linalg.norm(omega))
    a, b, _ = _rot_coeffs(theta)
    w = skew(omega)
    return np.eye(3) + a * w + b * (w @ w)


def so3_log(rot: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a rotation matrix; raises near the pi branch cut."""
    tr = float(np.trace(rot))
    if tr <= -1.0 + 1e-6:
        raise AngleNearPi(f"rotation angle within 1e-3 of pi (trace={tr:.9f})")
    theta = np.arccos(np.clip((tr - 1.0) / 2.0, -1.0, 1.0))
    axis_vec = unskew(rot - rot.T)
    if theta < _LOG_EPS:
        # theta/(2 sin theta) ~ 1/2 + theta^2/12
        return (0.5 + theta * theta / 12.0) * axis_vec
    return theta / (2.0 * np.sin(theta)) * axis_vec


@dataclass(frozen=True)
class Pose:
    """Rigid-body configuration (R, r) on SE(3).

    Acts on points as R x + r.  The rotation is re-orthonormalized via polar
    decomposition whenever round-off drift exceeds 1e-9.
    """

    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    r: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.asarray(self.R, dtype=float)
        r = np.asarray(self.r, dtype=float)
        drift = np.abs(R.T @ R - np.eye(3)).max()
        if drift > _ORTHO_DRIFT:
            R, _ = polar(R)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "r", r)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "Pose":
        return cls(m[:3, :3].copy(), m[:3, 3].copy())

    def matrix(self) -> np.ndarray:
        out = np.eye(4)
        out[:3, :3] = self.R
        out[:3, 3] = self.r
        return out

    def inverse(self) -> "Pose":
        return Pose(self.R.T, -self.R.T @ self.r)

    def compose(self, other: "Pose") -> "Pose":
        return Pose(self.R @ other.R, self.R @ other.r + self.r)

    def __matmul__(self, other: "Pose") -> "Pose":
        return self.compose(other)


def exp_map(xi: np.ndarray, dt: float = 1.0) -> Pose:
    """Closed-form SE(3) exponential of xi*dt."""
    v = np.asarray(xi, dtype=float) * dt
    nu, omega = v[:3], v[3:]
    theta = float(np.linalg.norm(omega))
    a, b, c = _rot_coeffs(theta)
    w = skew(omega)
    w2 = w @ w
    rot = np.eye(3) + a * w + b * w2
    vmat = np.eye(3) + b * w + c * w2
    return Pose(rot, vmat @ nu)


def log_map(pose: Pose) -> np.ndarray:
    """Twist xi with exp_map(xi) = pose.  Raises AngleNearPi near the cut."""
    omega = so3_log(pose.R)
    theta = float(np.linalg.norm(omega))
    w = skew(omega)
    if theta < _LOG_EPS:
        vinv = np.eye(3) - 0.5 * w + (1.0 / 12.0 + theta * theta / 720.0) * (w @ w)
    else:
        coef = (1.0 / (theta * theta)
                - (1.0 + np.cos(theta)) / (2.0 * theta * np.sin(theta)))
        vinv = np.eye(3) - 0.5 * w + coef * (w @ w)
    return np.concatenate([vinv @ pose.r, omega])


def adjoint(pose: Pose) -> np.ndarray:
    """Ad_T = [[R, [r]_x R], [0, R]]; satisfies Exp(Ad_T xi) = T Exp(xi) T^-1."""
    out = np.zeros((6, 6))
    out[:3, :3] = pose.R
    out[:3, 3:] = skew(pose.r) @ pose.R
    out[3:, 3:] = pose.R
    return out


def ad(xi: np.ndarray) -> np.ndarray:
    """Little adjoint ad_xi = [[skew(omega), skew(nu)], [0, skew(omega)]]."""
    out = np.zeros((6, 6))
    w = skew(xi[3:])
    out[:3, :3] = w
    out[:3, 3:] = skew(xi[:3])
    out[3:, 3:] = w
    return out


def right_jacobian(xi: np.ndarray) -> np.ndarray:
    """SE(3) right Jacobian J_r(xi) = sum_k (-ad_xi)^k / (k+1)!.

    Exp(xi + delta) = Exp(xi) Exp(J_r(xi) delta) + O(|delta|^2).  The series
    converges to machine precision in ~30 terms for |xi| < pi; tiny twists get
    the explicit two-term truncation.
    """
    a = ad(np.asarray(xi, dtype=float))
    norm = np.linalg.norm(xi)
    if norm < 1e-6:
        return np.eye(6) - 0.5 * a
    out = np.eye(6)
    term = np.eye(6)
    for k in range(1, 40):
        term = term @ (-a) / (k + 1)
        out = out + term
        if np.abs(term).max() < 1e-17:
            break
    return out


def right_plus(pose: Pose, delta: np.ndarray) -> Pose:
    return pose @ exp_map(delta)


def right_minus(pose2: Pose, pose1: Pose) -> np.ndarray:
    """Tangent delta with pose1 (+) delta = pose2."""
    return log_map(pose1.inverse() @ pose2)


def sample_twist(cov: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Zero-mean Gaussian twist with the given 6x6 covariance."""
    if not np.any(cov):
        return np.zeros(6)
    try:
        chol = np.linalg.cholesky(cov + 1e-12 * np.eye(6))
    except np.linalg.LinAlgError as exc:
        raise NotPSD("twist covariance is not PSD") from exc
    return chol @ rng.standard_normal(6)


def act(pose: Pose, x: np.ndarray) -> np.ndarray:
    """Apply a pose to homogeneous coordinates (last component 1 for points,
    0 for free vectors)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (4,) or x[3] not in (0.0, 1.0):
        raise ValueError("expected a homogeneous 4-vector with last entry 0 or 1")
    out = np.empty(4)
    out[:3] = pose.R @ x[:3] + x[3] * pose.r
    out[3] = x[3]
    return out
