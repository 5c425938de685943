"""Small dense semidefinite-program solver.

Solves trace-constrained SDPs of the fixed shape produced by the homogenized
control problem:

    maximize    <C, Z>
    subject to  <A_i, Z> <= b_i   (inequalities)
                <A_eq, Z> = b_eq  (single equality, the homogenization pin)
                Z >= 0

via a barrier method on the dual

    minimize    sum_i y_i b_i + y_eq b_eq
    subject to  S(y) = sum_i y_i A_i + y_eq A_eq - C >= 0,   y_i >= 0.

On the central path at barrier parameter t, Z = S(y)^-1 / t is strictly
primal feasible and the duality gap equals (n + m_ineq) / t, so the dual
objective is a certified upper bound on the primal optimum.  The problems
here are tiny (n = 4, m = 5); dense Newton steps are exact and cheap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import Infeasible, MaxIterations

_MAX_NEWTON = 60
_T_GROWTH = 20.0
_DECREMENT_TOL = 1e-16  # keeps the centering error below the path margins
_DECREMENT_OK = 1e-6  # stage accepted if the fp floor is at least this low


@dataclass(frozen=True)
class SdpSolution:
    Z: np.ndarray
    objective: float  # <C, Z> at the returned primal point
    upper_bound: float  # dual objective, certified bound on the optimum
    gap: float
    newton_steps: int


def _try_cholesky(mat: np.ndarray) -> np.ndarray | None:
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        return None


def solve_trace_sdp(
    C: np.ndarray,
    a_ineq: list[np.ndarray],
    b_ineq: np.ndarray,
    a_eq: np.ndarray,
    b_eq: float,
    tol: float = 1e-7,
) -> SdpSolution:
    """Maximize <C, Z> under trace constraints and Z PSD.

    Requires sum(A_i) + A_eq positive definite, which holds whenever the
    inequality set bounds every diagonal entry (compact feasible set).
    """
    n = C.shape[0]
    m = len(a_ineq)
    mats = np.stack([np.asarray(a, dtype=float) for a in a_ineq] + [np.asarray(a_eq, dtype=float)])
    b = np.concatenate([np.asarray(b_ineq, dtype=float), [float(b_eq)]])

    scale = max(1.0, float(np.abs(C).max()))
    C_s = C / scale

    def s_matrix(yv: np.ndarray) -> np.ndarray:
        return np.tensordot(yv, mats, axes=1) - C_s

    # strictly feasible dual start: uniform multipliers, doubled for margin
    total = mats.sum(axis=0)
    kappa = 1.0
    for _ in range(80):
        if _try_cholesky(kappa * total - C_s) is not None:
            kappa *= 2.0
            break
        kappa *= 4.0
    else:
        raise Infeasible("no strictly feasible dual start (sum of A_i not PD?)")
    y = np.full(m + 1, kappa)

    nu = n + m  # barrier complexity; duality gap on the path is nu / t
    target_t = 2.0 * nu * scale / tol
    t = 1.0
    steps = 0
    while True:
        best_decrement = np.inf
        plateau = 0
        for _ in range(_MAX_NEWTON):
            S = s_matrix(y)
            chol = _try_cholesky(S)
            if chol is None:
                raise MaxIterations("dual iterate left the PSD cone")
            Sinv = np.linalg.inv(S)
            WA = Sinv @ mats  # stack of S^-1 A_k
            grad = t * b - np.einsum("kii->k", WA)
            grad[:m] -= 1.0 / y[:m]
            hess = np.einsum("kij,lji->kl", WA, WA)
            hess[np.arange(m), np.arange(m)] += 1.0 / y[:m] ** 2
            hess[np.arange(m + 1), np.arange(m + 1)] += 1e-13
            try:
                step = np.linalg.solve(hess, -grad)
            except np.linalg.LinAlgError as exc:
                raise MaxIterations("singular Newton system") from exc
            decrement = float(-grad @ step)
            if decrement < _DECREMENT_TOL:
                break
            # quadratic convergence bottoms out at an fp floor that grows
            # with t; once the decrement stops shrinking the stage is done
            if decrement < 0.25 * best_decrement:
                plateau = 0
            else:
                plateau += 1
                if plateau >= 2 and best_decrement < _DECREMENT_OK:
                    break
            best_decrement = min(best_decrement, decrement)

            def f_of(yv: np.ndarray, chol_s: np.ndarray) -> float:
                return (
                    t * float(b @ yv)
                    - 2.0 * float(np.log(np.diag(chol_s)).sum())
                    - float(np.log(yv[:m]).sum())
                )

            f0 = f_of(y, chol)
            noise = 1e-12 * (abs(f0) + 1.0)  # fp allowance at large t
            alpha = 1.0
            while alpha > 1e-14:
                y_new = y + alpha * step
                if np.all(y_new[:m] > 0.0):
                    chol_new = _try_cholesky(s_matrix(y_new))
                    if chol_new is not None:
                        if f_of(y_new, chol_new) <= f0 - 0.25 * alpha * decrement + noise:
                            break
                alpha *= 0.5
            else:
                if min(best_decrement, decrement) < _DECREMENT_OK:
                    break  # fp floor reached; the stage is centered enough
                raise MaxIterations("line search failed")
            y = y + alpha * step
            steps += 1
        else:
            if best_decrement > _DECREMENT_OK:
                raise MaxIterations("Newton did not converge at a barrier stage")
        if t >= target_t:
            break
        t = min(t * _T_GROWTH, target_t)

    Z = np.linalg.inv(s_matrix(y)) / t
    Z = 0.5 * (Z + Z.T)
    eq_val = float(np.sum(np.asarray(a_eq) * Z))
    if eq_val > 0.0:
        Z = Z * (float(b_eq) / eq_val)
    primal = float(np.sum(C * Z))
    dual = float(b @ y) * scale
    return SdpSolution(
        Z=Z,
        objective=primal,
        upper_bound=dual,
        gap=dual - primal,
        newton_steps=steps,
    )
