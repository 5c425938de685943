"""Bound-driven control design.

Minimizing log det of the pose bound over the next control twist reduces,
through a block-determinant separation, to maximizing a single quadratic form
xi' P_bar xi + 2 c' xi under velocity/acceleration ball constraints.  That
QCQP is homogenized, relaxed to a small SDP, and a feasible twist is
recovered by Gaussian randomization.

The only part of the parameter Jacobian that depends on the next control is
the Doppler row's platform-velocity term c12 = M S xi, with S mapping a twist
to the velocity of the array midpoint; everything else is frozen at the
predicted pose.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cpcrb import _chol_inverse
from .errors import IllConditioned, NoFeasibleSample, SchurViolation, Se3TrackError
from .kinematics import local_velocity
from .sdp import solve_trace_sdp
from .se3 import Pose, skew
from .waveform import SPEED_OF_LIGHT

# twist components the control problem leaves free / pins to zero:
# horizontal velocity and yaw rate stay, nu_z / omega_x / omega_y vanish
# (fixed altitude, no tilting)
FREE_COMPONENTS = (0, 1, 5)
ZEROED_COMPONENTS = (2, 3, 4)
_LIFTED_FREE = (0, 1, 5, 6)


def midpoint_velocity_matrix(s: np.ndarray) -> np.ndarray:
    """3x6 map S with S xi = nu + omega x s, the array-midpoint velocity."""
    return np.hstack([np.eye(3), -skew(s)])


@dataclass(frozen=True)
class ConstraintSet:
    """Motion limits and the geometry they are evaluated in."""

    v_lin: float  # horizontal speed bound, m/s
    v_ang: float  # yaw rate bound, rad/s
    a_lin: float  # per-epoch linear velocity change bound, m/s
    a_ang: float  # per-epoch yaw rate change bound, rad/s
    v_mid: float  # per-epoch global midpoint-velocity change bound, m/s
    xi_prev: np.ndarray  # control applied during the current epoch
    s: np.ndarray  # array midpoint in the body frame
    R1: np.ndarray  # platform attitude at the current epoch
    R2: np.ndarray  # platform attitude at the previous epoch


@dataclass(frozen=True)
class PsiPartition:
    """Control-independent pieces of the parameter Jacobian.

    Psi = [[B, 0], [(c11 + c12)^T, c2^T]]; c12 = M S xi is the only block the
    next control enters.
    """

    B: np.ndarray
    c11: np.ndarray
    c12: np.ndarray
    c2: np.ndarray
    M: np.ndarray
    S: np.ndarray

    def psi1(self) -> np.ndarray:
        out = np.zeros((4, 6))
        out[:3, :3] = self.B
        out[3, :3] = self.c11
        out[3, 3:] = self.c2
        return out


def partition_psi(
    psi: np.ndarray,
    T_sp: Pose,
    v_p_local: np.ndarray,
    v_s_local: np.ndarray,
    fc: float,
    s: np.ndarray,
) -> PsiPartition:
    """Split Psi into its control-independent blocks plus the c12 term that
    was evaluated with the placeholder platform velocity v_s_local."""
    r = T_sp.r
    rho = float(np.linalg.norm(r))
    proj = np.eye(3) - np.outer(r, r) / (rho * rho)
    scale = 2.0 * fc / (SPEED_OF_LIGHT * rho)
    M = -scale * T_sp.R.T @ proj
    c11 = scale * T_sp.R.T @ proj @ T_sp.R @ v_p_local
    c12 = M @ v_s_local
    return PsiPartition(
        B=psi[:3, :3].copy(),
        c11=c11,
        c12=c12,
        c2=psi[3, 3:].copy(),
        M=M,
        S=midpoint_velocity_matrix(s),
    )


@dataclass(frozen=True)
class QuadraticForm:
    """Objective of the separated problem: maximize xi' P_bar xi + 2 c' xi."""

    P_bar: np.ndarray
    c: np.ndarray
    c0: float


def _balanced_pd_inverse(mat: np.ndarray, what: str) -> np.ndarray:
    """PD inverse after diagonal equilibration.

    The physical parameters span ~17 decades of scale (seconds vs hertz), so
    raw condition numbers are meaningless; balance first and apply the
    conditioning guard where it is informative.
    """
    d = np.sqrt(np.diag(mat))
    if np.any(d <= 0.0) or not np.all(np.isfinite(d)):
        raise IllConditioned(f"{what} has a non-positive diagonal")
    balanced = mat / np.outer(d, d)
    return _chol_inverse(balanced, what) / np.outer(d, d)


def build_quadratic_form(
    E: np.ndarray, A_tilde: np.ndarray, part: PsiPartition
) -> QuadraticForm:
    """Fold the prior FIM and the parameter-domain information into the
    control-dependent quadratic via the block-determinant separation."""
    E_inv = _chol_inverse(E, "prior information FIM")
    E11 = E_inv[:3, :3]
    E12 = E_inv[:3, 3:]
    psi1 = part.psi1()
    D0 = psi1 @ E_inv @ psi1.T
    W = _balanced_pd_inverse(A_tilde, "parameter information") + D0
    A_bar = W[:3, :3]
    a_vec = W[:3, 3]
    A_bar_inv = _balanced_pd_inverse(A_bar, "leading block of A~^-1 + D0")
    MS = part.M @ part.S
    c = MS.T @ (E11 @ part.c11 + E12 @ part.c2 - E11 @ part.B.T @ A_bar_inv @ a_vec)
    P_bar = MS.T @ (E11 - E11 @ part.B.T @ A_bar_inv @ part.B @ E11) @ MS
    sign_bar, logdet_bar = np.linalg.slogdet(A_bar)
    sign_w, logdet_w = np.linalg.slogdet(W)
    if sign_bar <= 0 or sign_w <= 0:
        raise IllConditioned("determinant separation lost positive definiteness")
    c0 = float(np.exp(logdet_bar - logdet_w))
    return QuadraticForm(P_bar=0.5 * (P_bar + P_bar.T), c=c, c0=c0)


@dataclass(frozen=True)
class QcqpInstance:
    """Homogenization-ready QCQP: objective (Q0, c) and the five motion
    constraints with their previous-twist offsets."""

    Q0: np.ndarray
    c: np.ndarray
    S: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    b3: np.ndarray
    v1: float  # v_lin^2
    v2: float  # v_ang^2
    a1: float  # a_lin^2
    a2: float  # a_ang^2
    v3: float  # v_mid^2
    R1: np.ndarray
    R2: np.ndarray
    Q1: np.ndarray = field(init=False)
    Q2: np.ndarray = field(init=False)
    Q3: np.ndarray = field(init=False)

    def __post_init__(self):
        q1 = np.zeros((6, 6))
        q1[0, 0] = q1[1, 1] = 1.0
        q2 = np.zeros((6, 6))
        q2[5, 5] = 1.0
        object.__setattr__(self, "Q1", q1)
        object.__setattr__(self, "Q2", q2)
        object.__setattr__(self, "Q3", self.S.T @ self.S)

    def objective(self, xi: np.ndarray) -> float:
        return float(xi @ self.Q0 @ xi + 2.0 * self.c @ xi)

    def objective_batch(self, xis: np.ndarray) -> np.ndarray:
        return np.einsum("ni,ij,nj->n", xis, self.Q0, xis) + 2.0 * xis @ self.c

    def constraint_values(self, xi: np.ndarray) -> np.ndarray:
        """Five constraint residuals, feasible iff all <= 0."""
        return self.constraint_values_batch(np.asarray(xi)[None, :])[0]

    def constraint_values_batch(self, xis: np.ndarray) -> np.ndarray:
        """(N, 5) residuals for a stack of twists."""
        xy = xis[:, :2]
        wz = xis[:, 5]
        mid_delta = xis @ (self.R1 @ self.S).T - self.R2 @ self.b3
        return np.stack(
            [
                np.sum(xy * xy, axis=1) - self.v1,
                wz * wz - self.v2,
                np.sum((xy - self.b1[:2]) ** 2, axis=1) - self.a1,
                (wz - self.b2[5]) ** 2 - self.a2,
                np.sum(mid_delta * mid_delta, axis=1) - self.v3,
            ],
            axis=1,
        )

    def feasible_mask(self, xis: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        pinned = np.abs(xis[:, list(ZEROED_COMPONENTS)]).max(axis=1) <= 1e-12
        bounds = np.array([self.v1, self.v2, self.a1, self.a2, self.v3])
        ok = np.all(
            self.constraint_values_batch(xis) <= tol * np.maximum(1.0, bounds),
            axis=1,
        )
        return pinned & ok

    def is_feasible(self, xi: np.ndarray, tol: float = 1e-9) -> bool:
        return bool(self.feasible_mask(np.asarray(xi, dtype=float)[None, :], tol)[0])


def assemble_qcqp(qf: QuadraticForm, cons: ConstraintSet) -> QcqpInstance:
    S = midpoint_velocity_matrix(cons.s)
    xi_prev = np.asarray(cons.xi_prev, dtype=float)
    b1 = np.zeros(6)
    b1[:2] = xi_prev[:2]
    b2 = np.zeros(6)
    b2[5] = xi_prev[5]
    return QcqpInstance(
        Q0=qf.P_bar,
        c=qf.c,
        S=S,
        b1=b1,
        b2=b2,
        b3=S @ xi_prev,
        v1=cons.v_lin**2,
        v2=cons.v_ang**2,
        a1=cons.a_lin**2,
        a2=cons.a_ang**2,
        v3=cons.v_mid**2,
        R1=np.asarray(cons.R1, dtype=float),
        R2=np.asarray(cons.R2, dtype=float),
    )


@dataclass(frozen=True)
class HomogenizedSdp:
    """Lifted 7x7 matrices: objective Q[0], inequality Q[1..5] (bounds folded
    to 1), equality selectors Q[6..8]."""

    Q: tuple

    @property
    def objective(self) -> np.ndarray:
        return self.Q[0]


def _lift(quad: np.ndarray, lin: np.ndarray, const: float) -> np.ndarray:
    out = np.zeros((7, 7))
    out[:6, :6] = quad
    out[:6, 6] = lin
    out[6, :6] = lin
    out[6, 6] = const
    return out


def homogenize(q: QcqpInstance) -> HomogenizedSdp:
    """Lift the QCQP to homogeneous form and check the PSD structure the
    relaxation relies on (Schur complements of the acceleration blocks)."""
    mats = [
        _lift(q.Q0, q.c, 0.0),
        _lift(q.Q1, np.zeros(6), 0.0) / q.v1,
        _lift(q.Q2, np.zeros(6), 0.0) / q.v2,
        _lift(q.Q1, -q.b1, float(q.b1 @ q.b1)) / q.a1,
        _lift(q.Q2, -q.b2, float(q.b2 @ q.b2)) / q.a2,
        _lift(q.Q3, -q.S.T @ q.R1.T @ q.R2 @ q.b3, float(q.b3 @ q.b3)) / q.v3,
    ]
    for idx in ZEROED_COMPONENTS:
        sel = np.zeros((6, 6))
        sel[idx, idx] = 1.0
        mats.append(_lift(sel, np.zeros(6), 0.0))
    for i in (1, 2, 3, 4, 6, 7, 8):
        w = np.linalg.eigvalsh(mats[i])
        if w[0] < -1e-6 * max(1.0, np.abs(mats[i]).max()):
            raise SchurViolation(f"lifted constraint {i} not PSD (min eig {w[0]:.2e})")
    return HomogenizedSdp(Q=tuple(mats))


def solve_sdp(sdp: HomogenizedSdp, tol: float = 1e-7):
    """Solve the relaxation on the free coordinates; returns the PSD lifted
    matrix (embedded back into 7x7) and the certified upper bound.

    The equality selectors pin three coordinates to zero, so the SDP is
    reduced to the remaining 4x4 block, which restores a strict interior.
    """
    ix = np.ix_(_LIFTED_FREE, _LIFTED_FREE)
    C = sdp.Q[0][ix]
    a_ineq = [sdp.Q[i][ix] for i in range(1, 6)]
    a_eq = np.zeros((4, 4))
    a_eq[3, 3] = 1.0
    sol = solve_trace_sdp(C, a_ineq, np.ones(5), a_eq, 1.0, tol=tol)
    Z = np.zeros((7, 7))
    Z[ix] = sol.Z
    return Z, sol.upper_bound


def clip_to_constraints(cons: ConstraintSet) -> np.ndarray:
    """Previous twist with pinned components zeroed and velocities scaled
    into their bounds; the hold/fallback control."""
    xi = np.asarray(cons.xi_prev, dtype=float).copy()
    xi[list(ZEROED_COMPONENTS)] = 0.0
    speed = np.linalg.norm(xi[:2])
    if speed > cons.v_lin:
        xi[:2] *= cons.v_lin / speed
    if abs(xi[5]) > cons.v_ang:
        xi[5] *= cons.v_ang / abs(xi[5])
    return xi


def randomize_extract(
    Z: np.ndarray,
    q: QcqpInstance,
    cons: ConstraintSet,
    n_samples: int = 200,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Recover a feasible twist from the relaxation by Gaussian randomization.

    Samples N(0, Z), rescales each draw to homogeneous coordinate 1, zeroes
    the pinned components, and pulls infeasible candidates back toward a
    feasible anchor by bisection.  Returns the best feasible candidate by the
    QCQP objective.
    """
    if rng is None:
        rng = np.random.default_rng()
    anchor = clip_to_constraints(cons)
    if not q.is_feasible(anchor):
        anchor = np.zeros(6)
        if not q.is_feasible(anchor):
            raise NoFeasibleSample("neither held twist nor zero twist feasible")

    w, v = np.linalg.eigh(0.5 * (Z + Z.T))
    root = v * np.sqrt(np.clip(w, 0.0, None))
    draws = root @ rng.standard_normal((7, n_samples))
    keep = np.abs(draws[6]) > 1e-12
    cands = (draws[:6, keep] / draws[6, keep]).T
    if Z[6, 6] > 1e-12:
        cands = np.vstack([Z[:6, 6][None, :] / Z[6, 6], cands])
    cands[:, list(ZEROED_COMPONENTS)] = 0.0

    # pull infeasible candidates back toward the anchor by joint bisection
    feas = q.feasible_mask(cands)
    if not feas.all():
        bad = cands[~feas]
        lo = np.zeros(len(bad))
        hi = np.ones(len(bad))
        span = bad - anchor
        for _ in range(20):
            mid = 0.5 * (lo + hi)
            ok = q.feasible_mask(anchor + mid[:, None] * span)
            lo = np.where(ok, mid, lo)
            hi = np.where(ok, hi, mid)
        cands[~feas] = anchor + lo[:, None] * span

    cands = np.vstack([anchor, cands])
    objs = q.objective_batch(cands)
    return cands[int(np.argmax(objs))]


def optimize_control(
    E: np.ndarray,
    T_pred: Pose,
    model,
    cons: ConstraintSet,
    rng: np.random.Generator,
    n_samples: int = 200,
    sdp_tol: float = 1e-7,
) -> np.ndarray:
    """Full chain from prior information to the next control twist.

    The parameter-domain information A~ and the Psi blocks are evaluated at
    the predicted pose with the held control standing in for the unknown next
    one; only the c12 block keeps its exact control dependence.
    """
    zeta_pred = model.zeta(T_pred, cons.xi_prev)
    j_aug = model.jac_y_zeta_aug(zeta_pred)
    a_tilde = 2.0 / model.sigma_z**2 * j_aug.T @ j_aug
    psi = model.psi(T_pred, cons.xi_prev)
    part = partition_psi(
        psi,
        T_pred,
        local_velocity(model.xi_p_nominal, np.zeros(3)),
        local_velocity(cons.xi_prev, model.offset.s),
        model.grid.fc,
        model.offset.s,
    )
    qf = build_quadratic_form(E, a_tilde, part)
    q = assemble_qcqp(qf, cons)
    sdp = homogenize(q)
    Z, _ = solve_sdp(sdp, tol=sdp_tol)
    return randomize_extract(Z, q, cons, n_samples=n_samples, rng=rng)


def optimize_control_or_hold(
    E: np.ndarray,
    T_pred: Pose,
    model,
    cons: ConstraintSet,
    rng: np.random.Generator,
    n_samples: int = 200,
    sdp_tol: float = 1e-7,
) -> np.ndarray:
    """optimize_control with the documented fallback: on any solver or
    geometry failure, hold the previous twist clipped into the constraints."""
    try:
        return optimize_control(E, T_pred, model, cons, rng, n_samples, sdp_tol)
    except Se3TrackError:
        return clip_to_constraints(cons)
