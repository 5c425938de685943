"""Self-check batteries behind the `check` CLI subcommand.

Each battery returns a CheckResult with a pass flag and a human-readable
detail string.  The `corrupt` hook lets tests verify that a broken Jacobian
is actually caught; it receives (name, matrix) and returns the matrix the
battery will compare against finite differences.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from . import control as ctl
from . import cpcrb, ekf, se3
from .jacobians import jac_control_G, jac_state_F, jac_zeta_wrt_pose
from .kinematics import UpaOffset, evolve_relative, local_velocity
from .scenario import ScenarioConfig, episode_rng, monte_carlo, run_episode
from .waveform import (
    SPEED_OF_LIGHT,
    PhysicalParams,
    ReGrid,
    UpaConfig,
    build_pilot_matrix,
    channel_vector,
    diagonal_lattice,
)


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str
    seconds: float


def _random_zeta(rng):
    return PhysicalParams(
        tau=rng.uniform(5e-7, 2e-6),
        phi=rng.uniform(-3.0, 3.0),
        theta=rng.uniform(0.2, 2.9),
        mu=rng.uniform(-100.0, 100.0),
        b=rng.uniform(0.5, 2.0) * np.exp(1j * rng.uniform(-np.pi, np.pi)),
    )


def _random_pose(rng):
    base = se3.exp_map(rng.uniform(-0.5, 0.5, 6))
    return se3.Pose(base.R, base.r + np.array([120.0, 90.0, 80.0]) + rng.uniform(-40, 40, 3))


def _fd_pose(fun, pose, eps=1e-6):
    cols = []
    for k in range(6):
        d = np.zeros(6)
        d[k] = 1.0
        cols.append(
            (fun(se3.right_plus(pose, eps * d)) - fun(se3.right_plus(pose, -eps * d)))
            / (2 * eps)
        )
    return np.stack(cols, axis=-1)


def jacobian_battery(n_cases: int = 200, seed: int = 0, corrupt=None) -> CheckResult:
    """Central-difference match of every analytic derivative on random
    non-singular geometry; relative error must stay below 1e-4."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    upa = UpaConfig(2, 2, 2, 2)
    grid = ReGrid(pairs=diagonal_lattice(32, 10, 8), fc=2.4e9)
    pilots = build_pilot_matrix(upa, grid, 1.0, rng)
    model = ekf.RadarModel(
        upa=upa, grid=grid, pilots=pilots,
        offset=UpaOffset(np.array([0.2, 0.3, 0.1])),
        a_const=1.0, phase=0.3, sigma_z=0.0,
        xi_p_nominal=np.array([-4.0, 0, 0, 0, 0, 0]),
    )
    apply = corrupt if corrupt is not None else (lambda name, m: m)
    worst = {"J_h": 0.0, "J_zeta": 0.0, "F": 0.0, "G": 0.0, "H": 0.0}
    dt = 0.25
    steps = [1e-12, 1e-6, 1e-6, 1e-3]
    from .jacobians import build_selectors, jac_h_wrt_zeta

    sel = build_selectors(upa, grid)
    for _ in range(n_cases):
        zeta = _random_zeta(rng)
        jh = apply("J_h", jac_h_wrt_zeta(zeta, upa, grid, sel))
        vals = zeta.vector()
        for i in range(4):
            hi, lo = vals.copy(), vals.copy()
            hi[i] += steps[i]
            lo[i] -= steps[i]

            def zeta_at(v):
                b = zeta.b * (zeta.tau / v[0]) ** 2 if i == 0 else zeta.b
                return PhysicalParams(tau=v[0], phi=v[1], theta=v[2], mu=v[3], b=b)

            num = (
                channel_vector(zeta_at(hi), upa, grid)
                - channel_vector(zeta_at(lo), upa, grid)
            ) / (2 * steps[i])
            worst["J_h"] = max(
                worst["J_h"], np.linalg.norm(num - jh[:, i]) / np.linalg.norm(num)
            )

        pose = _random_pose(rng)
        v_p = rng.uniform(-4, 4, 3)
        v_s = rng.uniform(-6, 6, 3)
        jz = apply("J_zeta", jac_zeta_wrt_pose(pose, v_p, v_s, grid.fc))

        def zeta_of(Tq):
            x, y, z = Tq.r
            rho = np.linalg.norm(Tq.r)
            return np.array([
                2 * rho / SPEED_OF_LIGHT,
                np.arctan2(y, x),
                np.arccos(np.clip(z / rho, -1, 1)),
                2 * ((Tq.R @ v_p - v_s) @ Tq.r / rho) * grid.fc / SPEED_OF_LIGHT,
            ])

        num = _fd_pose(zeta_of, pose)
        scale = np.maximum(np.abs(num), 1e-12 + np.abs(jz))
        scale = np.maximum(scale, [[1e-9], [1e-6], [1e-6], [1e-4]])
        worst["J_zeta"] = max(worst["J_zeta"], (np.abs(num - jz) / scale).max())

        xi_s = rng.uniform(-2, 2, 6)
        xi_p = np.concatenate([rng.uniform(-4, 4, 3), np.zeros(3)])
        T_next = evolve_relative(pose, xi_s, xi_p, np.zeros(6), dt)
        F = apply("F", jac_state_F(xi_p, dt))
        num = _fd_pose(
            lambda Tq: se3.right_minus(
                evolve_relative(Tq, xi_s, xi_p, np.zeros(6), dt), T_next
            ),
            pose,
        )
        worst["F"] = max(worst["F"], np.abs(num - F).max() / max(1.0, np.abs(F).max()))

        G = apply("G", jac_control_G(T_next, xi_s, dt))
        eps = 1e-6
        cols = []
        for k in range(6):
            d = np.zeros(6)
            d[k] = 1.0
            cols.append(
                (
                    se3.right_minus(evolve_relative(pose, xi_s, xi_p, eps * d, dt), T_next)
                    - se3.right_minus(evolve_relative(pose, xi_s, xi_p, -eps * d, dt), T_next)
                )
                / (2 * eps)
            )
        num = np.stack(cols, axis=-1)
        worst["G"] = max(worst["G"], np.abs(num - G).max() / max(1.0, np.abs(G).max()))

        xi_next = np.concatenate([rng.uniform(-6, 6, 3), rng.uniform(-0.15, 0.15, 3)])
        H = apply("H", model.jac_H(pose, xi_next))
        num = _fd_pose(lambda Tq: model.g_aug(Tq, xi_next), pose, eps=1e-7)
        rel = np.linalg.norm(num - H) / np.linalg.norm(num)
        worst["H"] = max(worst["H"], rel)

    bad = {k: v for k, v in worst.items() if v >= 1e-4}
    detail = ", ".join(f"{k}={v:.2e}" for k, v in worst.items())
    return CheckResult("jacobian-fd", not bad, detail, time.perf_counter() - t0)


def lie_battery(n: int = 1000, seed: int = 0) -> CheckResult:
    """Exp/Log round trips, the adjoint group identity and the right-Jacobian
    finite-difference check."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst_rt = worst_adj = worst_jr = 0.0
    for _ in range(n):
        xi = rng.uniform(-1, 1, 6) * (np.pi / np.sqrt(6) * 0.95)
        worst_rt = max(worst_rt, np.abs(se3.log_map(se3.exp_map(xi)) - xi).max())
        pose = se3.exp_map(rng.uniform(-1, 1, 6))
        delta = rng.uniform(-0.5, 0.5, 6)
        lhs = se3.exp_map(se3.adjoint(pose) @ delta).matrix()
        rhs = (pose @ se3.exp_map(delta) @ pose.inverse()).matrix()
        worst_adj = max(worst_adj, np.abs(lhs - rhs).max())
        d = rng.standard_normal(6)
        d /= np.linalg.norm(d)
        eps = 1e-6
        num = se3.right_minus(se3.exp_map(xi + eps * d), se3.exp_map(xi)) / eps
        worst_jr = max(worst_jr, np.linalg.norm(num - se3.right_jacobian(xi) @ d))
    ok = worst_rt < 1e-9 and worst_adj < 1e-9 and worst_jr < 1e-5
    detail = f"roundtrip={worst_rt:.2e}, adjoint={worst_adj:.2e}, J_r={worst_jr:.2e}"
    return CheckResult("lie-core", ok, detail, time.perf_counter() - t0)


def reformulation_battery(n: int = 100, seed: int = 0) -> CheckResult:
    """Determinant-separation identity between the log-det objective and the
    quadratic surrogate, with the control-dependent block built independently
    from the raw partition."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        pose = _random_pose(rng)
        v_p = rng.uniform(-4, 4, 3)
        v_s = rng.uniform(-6, 6, 3)
        s = np.array([0.2, 0.3, 0.1])
        psi = jac_zeta_wrt_pose(pose, v_p, v_s, 2.4e9)
        part = ctl.partition_psi(psi, pose, v_p, v_s, 2.4e9, s)
        a = rng.standard_normal((6, 6))
        E = a @ a.T + 6 * np.eye(6)
        a4 = rng.standard_normal((4, 4))
        A_tilde = a4 @ a4.T + 4 * np.eye(4)
        qf = ctl.build_quadratic_form(E, A_tilde, part)
        E_inv = np.linalg.inv(E)
        psi1 = part.psi1()
        D0 = psi1 @ E_inv @ psi1.T
        W0 = np.linalg.inv(A_tilde) + D0
        for _ in range(3):
            xi = rng.uniform(-3, 3, 6)
            psi2 = np.zeros((4, 6))
            psi2[3, :3] = part.M @ part.S @ xi
            D = psi2 @ E_inv @ (psi1 + psi2).T + psi1 @ E_inv @ psi2.T
            lhs = -np.linalg.slogdet(W0 + D)[1]
            rhs = -np.linalg.slogdet(W0)[1] - np.log(
                1.0 + qf.c0 * (xi @ qf.P_bar @ xi + 2.0 * qf.c @ xi)
            )
            worst = max(worst, abs(lhs - rhs) / max(1.0, abs(lhs)))
    return CheckResult(
        "reformulation", worst < 1e-8, f"worst rel dev={worst:.2e}",
        time.perf_counter() - t0,
    )


def _random_instance(rng):
    pose = _random_pose(rng)
    v_p = rng.uniform(-4, 4, 3)
    v_s = rng.uniform(-6, 6, 3)
    s = np.array([0.2, 0.3, 0.1])
    psi = jac_zeta_wrt_pose(pose, v_p, v_s, 2.4e9)
    part = ctl.partition_psi(psi, pose, v_p, v_s, 2.4e9, s)
    a = rng.standard_normal((6, 6))
    E = 2.0 * (a @ a.T + 6 * np.eye(6))
    a4 = rng.standard_normal((4, 4))
    A_tilde = 2.0 * (a4 @ a4.T + 4 * np.eye(4))
    qf = ctl.build_quadratic_form(E, A_tilde, part)
    yaw = rng.uniform(-0.03, 0.03)
    R2 = se3.so3_exp(rng.uniform(-0.3, 0.3, 3))
    cons = ctl.ConstraintSet(
        v_lin=6.0, v_ang=0.15, a_lin=2.0, a_ang=0.05, v_mid=0.5,
        xi_prev=np.array([2.0, 1.0, 0, 0, 0, 0.05]), s=s,
        R1=R2 @ se3.so3_exp(np.array([0.0, 0.0, yaw])), R2=R2,
    )
    return ctl.assemble_qcqp(qf, cons), cons


def sdr_battery(n: int = 20, seed: int = 0, n_feasible: int = 10_000) -> CheckResult:
    """Relaxation soundness: small duality gap, bound dominates sampled
    feasible twists, extraction feasible and close to a grid oracle."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst_gap = 0.0
    ok = True
    notes = []
    done = 0
    while done < n:
        q, cons = _random_instance(rng)
        sdp = ctl.homogenize(q)
        ix = np.ix_(ctl._LIFTED_FREE, ctl._LIFTED_FREE)
        from .sdp import solve_trace_sdp

        a_eq = np.zeros((4, 4))
        a_eq[3, 3] = 1.0
        sol = solve_trace_sdp(
            sdp.Q[0][ix], [sdp.Q[i][ix] for i in range(1, 6)], np.ones(5),
            a_eq, 1.0, tol=1e-7,
        )
        worst_gap = max(worst_gap, abs(sol.gap))
        Z = np.zeros((7, 7))
        Z[ix] = sol.Z
        xi = ctl.randomize_extract(Z, q, cons, n_samples=200, rng=rng)
        if not q.is_feasible(xi, tol=1e-9):
            ok = False
            notes.append("extracted twist infeasible")
        # random feasible twists must sit below the certified bound
        samples = np.zeros((n_feasible, 6))
        samples[:, 0] = rng.uniform(-6, 6, n_feasible)
        samples[:, 1] = rng.uniform(-6, 6, n_feasible)
        samples[:, 5] = rng.uniform(-0.15, 0.15, n_feasible)
        feas = q.feasible_mask(samples)
        if feas.any():
            best = q.objective_batch(samples[feas]).max()
            if best > sol.upper_bound + 1e-7 * max(1.0, abs(best)):
                ok = False
                notes.append(f"bound violated by {best - sol.upper_bound:.2e}")
        # 21^3 grid oracle over the free variables
        ax = np.linspace(-6, 6, 21)
        wz = np.linspace(-0.15, 0.15, 21)
        gx, gy, gw = np.meshgrid(ax, ax, wz, indexing="ij")
        pts = np.zeros((gx.size, 6))
        pts[:, 0] = gx.ravel()
        pts[:, 1] = gy.ravel()
        pts[:, 5] = gw.ravel()
        mask = q.feasible_mask(pts)
        if not mask.any():
            continue
        objs = q.objective_batch(pts[mask])
        span = objs.max() - objs.min()
        if q.objective(xi) < objs.max() - 0.05 * max(span, 1e-12):
            ok = False
            notes.append(f"extraction {objs.max() - q.objective(xi):.2e} below grid best")
        done += 1
    detail = f"worst |gap|={worst_gap:.2e}"
    if notes:
        detail += "; " + "; ".join(notes[:3])
    return CheckResult("sdr-soundness", ok and worst_gap < 1e-7, detail, time.perf_counter() - t0)


def cpcrb_battery(n: int = 100, seed: int = 0) -> CheckResult:
    """Woodbury form vs the textbook block recursion, plus the prior-term
    ordering along a simulated episode."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        a = rng.standard_normal((6, 6))
        I_prev = a @ a.T + 6 * np.eye(6)
        F = np.linalg.qr(rng.standard_normal((6, 6)))[0]
        H = rng.standard_normal((10, 6))
        cwp = rng.standard_normal((6, 6))
        cwp = 0.1 * (cwp @ cwp.T + 6 * np.eye(6))
        cz = rng.standard_normal((10, 10))
        cz = cz @ cz.T + 10 * np.eye(10)
        state, _ = cpcrb.fim_step(cpcrb.FimState(I_prev), F, H, cwp, cz)
        cwi = np.linalg.inv(cwp)
        d11 = F.T @ cwi @ F
        d12 = F.T @ cwi
        d22 = cwi + H.T @ np.linalg.inv(cz) @ H
        ref = d22 - d12.T @ np.linalg.inv(I_prev + d11) @ d12
        worst = max(worst, np.abs(state.I_T - ref).max() / np.abs(ref).max())
    cfg = ScenarioConfig(policy="parallel", n_epochs=100, mc_runs=1)
    trace = run_episode(cfg, episode_rng(cfg.seed, "parallel", 0))
    gap_ok = (not trace.failed) and bool(np.all(trace.prior_gap >= -1e-9))
    ok = worst < 1e-9 and gap_ok
    detail = f"recursion dev={worst:.2e}, episode prior-gap min={np.nanmin(trace.prior_gap):.2e}"
    return CheckResult("cpcrb-recursion", ok, detail, time.perf_counter() - t0)


def nees_battery(episodes: int = 100, epochs: int = 50, seed: int = 0) -> CheckResult:
    """Filter consistency: time-averaged NEES within a factor two of the
    6-DOF chi-square mean, and exact tracking in the noiseless setup."""
    t0 = time.perf_counter()
    cfg = ScenarioConfig(policy="parallel", n_epochs=epochs, mc_runs=episodes, seed=seed)
    agg = monte_carlo(cfg)
    nees = float(np.mean(agg.mean_nees))
    noiseless = replace(
        cfg, mc_runs=1, xi_w_std=(0.0,) * 6, c_w_std=(0.0,) * 6,
        noiseless_measurements=True, perfect_init=True,
    )
    trace = run_episode(noiseless, episode_rng(noiseless.seed, "parallel", 0))
    max_err = float(np.nanmax(np.linalg.norm(trace.pos_est - trace.pos_true, axis=1)))
    ok = 3.0 <= nees <= 12.0 and max_err < 1e-6 and not trace.failed
    detail = f"mean NEES={nees:.2f} (target [3, 12]), noiseless max err={max_err:.2e} m"
    return CheckResult("filter-consistency", ok, detail, time.perf_counter() - t0)


FAST_CHECKS = ("lie-core", "jacobian-fd", "reformulation", "cpcrb-recursion", "sdr-soundness")
FULL_CHECKS = FAST_CHECKS + ("filter-consistency",)


def run_checks(level: str = "fast", seed: int = 0, corrupt=None) -> list:
    """Execute the battery set for the level; `corrupt` reaches the Jacobian
    battery only (test hook)."""
    selected = FULL_CHECKS if level == "full" else FAST_CHECKS
    results = []
    for name in selected:
        if name == "lie-core":
            results.append(lie_battery(seed=seed))
        elif name == "jacobian-fd":
            results.append(jacobian_battery(seed=seed, corrupt=corrupt))
        elif name == "reformulation":
            results.append(reformulation_battery(seed=seed))
        elif name == "cpcrb-recursion":
            results.append(cpcrb_battery(seed=seed))
        elif name == "sdr-soundness":
            results.append(sdr_battery(seed=seed))
        elif name == "filter-consistency":
            results.append(nees_battery(seed=seed))
    return results
