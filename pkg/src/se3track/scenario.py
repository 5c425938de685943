"""Episode orchestration: ground-truth simulation, filter + bound + controller
loop, the three trajectory policies, and Monte-Carlo aggregation.

Timeline convention: the control twist xi^n acts between epochs n-1 and n.
After the truth propagates and the filter predicts, the controller picks
xi^{n+1}; the epoch-n measurement then depends on that next control through
the Doppler shift, so the update and the information recursion use it too.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from multiprocessing import Pool

import numpy as np

from . import cpcrb, ekf
from .control import ConstraintSet, clip_to_constraints, optimize_control_or_hold
from .errors import AllEpisodesFailed, EpisodeFailed, Se3TrackError
from .jacobians import jac_state_F
from .kinematics import UpaOffset, extract_params
from .se3 import Pose, adjoint, exp_map, right_minus, sample_twist, so3_exp
from .waveform import (
    ReGrid,
    UpaConfig,
    amplitude_constant,
    augment,
    build_pilot_matrix,
    channel_vector,
    diagonal_lattice,
    synthesize_measurement,
)

POLICIES = ("optimized", "parallel", "diagonal")


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete, picklable description of one experiment."""

    # arrays
    nt_x: int = 2
    nt_y: int = 2
    nr_x: int = 2
    nr_y: int = 2
    # OFDM numerology and sensing grid
    n_subcarriers: int = 32
    n_symbols: int = 10
    n_re: int = 32
    f0: float = 15e3
    fc: float = 2.4e9
    cp_fraction: float = 0.07
    # radar constants
    sigma_rcs: float = 0.5
    pilot_power: float = 1.0
    snr_db: float = 10.0  # per-RE receive SNR at the initial range
    sigma_z: float = 0.0  # explicit noise std; 0 means derive from snr_db
    # timeline
    dt: float = 0.25
    n_epochs: int = 200
    mc_runs: int = 50
    seed: int = 20240521
    threads: int = 1
    # motion constraints
    v_lin: float = 6.0
    v_ang: float = 0.15
    a_lin: float = 2.0
    a_ang: float = 0.05
    v_mid: float = 0.5
    # noise (standard deviations, twist ordering [nu; omega])
    xi_w_std: tuple = (0.05, 0.05, 0.05, 0.005, 0.005, 0.005)
    c_w_std: tuple = (0.01, 0.01, 0.01, 0.01, 0.01, 0.01)
    # initial geometry
    r_ws0: tuple = (200.0, 0.0, 150.0)
    uav_rot_y_deg: float = 180.0
    r_wp0: tuple = (200.0, 150.0, 0.0)
    r_wp0_est: tuple = (200.0, 170.0, 0.0)
    gu_speed: float = 4.0
    gu_heading_deg: float = 180.0
    xi_s0: tuple = (0.0, 1.0, 0.0, 0.0, 0.0, 0.0)
    upa_offset: tuple = (0.2, 0.3, 0.1)
    p0_diag: tuple = (25.0, 25.0, 25.0, 0.01, 0.01, 0.01)
    # policy and solver knobs
    policy: str = "optimized"
    perfect_init: bool = False
    noiseless_measurements: bool = False  # zero realized noise, model keeps sigma_z
    sdp_tol: float = 1e-7
    n_randomization: int = 200

    def __post_init__(self):
        if self.n_epochs < 1 or self.mc_runs < 1 or self.dt <= 0:
            raise ValueError("n_epochs, mc_runs must be >= 1 and dt > 0")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")

    # derived pieces -------------------------------------------------

    def upa(self) -> UpaConfig:
        return UpaConfig(self.nt_x, self.nt_y, self.nr_x, self.nr_y)

    def grid(self) -> ReGrid:
        t_sym = (1.0 / self.f0) / (1.0 - self.cp_fraction)
        return ReGrid(
            pairs=diagonal_lattice(self.n_subcarriers, self.n_symbols, self.n_re),
            f0=self.f0,
            t_sym=t_sym,
            fc=self.fc,
        )

    def R_ws0(self) -> np.ndarray:
        return so3_exp(np.array([0.0, math.radians(self.uav_rot_y_deg), 0.0]))

    def T_ws0(self) -> Pose:
        return Pose(self.R_ws0(), np.asarray(self.r_ws0, dtype=float))

    def T_wp0(self) -> Pose:
        return Pose(np.eye(3), np.asarray(self.r_wp0, dtype=float))

    def xi_p(self) -> np.ndarray:
        h = math.radians(self.gu_heading_deg)
        v_world = self.gu_speed * np.array([math.cos(h), math.sin(h), 0.0])
        # GU axes start aligned with the global frame, so body == world here
        return np.concatenate([v_world, np.zeros(3)])

    def a_const(self) -> float:
        return amplitude_constant(self.fc, self.sigma_rcs)

    def resolved_sigma_z(self) -> float:
        if self.sigma_z > 0.0:
            return self.sigma_z
        from .waveform import channel_gain

        rho0 = float(np.linalg.norm((self.T_ws0().inverse() @ self.T_wp0()).r))
        b0 = abs(channel_gain(rho0, 0.0, self.a_const()))
        upa = self.upa()
        snr = 10.0 ** (self.snr_db / 10.0)
        return math.sqrt(b0**2 * self.pilot_power / (upa.n_t * upa.n_r * snr))

    def constraint_bounds(self) -> dict:
        return dict(
            v_lin=self.v_lin, v_ang=self.v_ang, a_lin=self.a_lin,
            a_ang=self.a_ang, v_mid=self.v_mid,
        )


@dataclass
class EpisodeTrace:
    """Per-epoch record of one episode; NaN-filled past a failure."""

    pos_true: np.ndarray
    pos_est: np.ndarray
    zeta_true: np.ndarray
    zeta_est: np.ndarray
    cpcrb_zeta: np.ndarray
    logdet_cpcrb_T: np.ndarray
    prior_gap: np.ndarray  # min eig of (E^-1 - CPCRB(T)); >= 0 if info helps
    nees: np.ndarray
    xi: np.ndarray
    uav_world: np.ndarray
    gu_world: np.ndarray
    gu_world_est: np.ndarray
    failed: bool = False
    fail_epoch: int = -1
    fail_reason: str = ""


def _heuristic_target(cfg: ScenarioConfig, kind: str) -> np.ndarray:
    """Body-frame twist the heuristic policies ramp toward."""
    v_gu = cfg.xi_p()[:3]
    speed = np.linalg.norm(v_gu)
    direction = v_gu / speed
    if kind == "parallel":
        v_world = v_gu
    else:  # diagonal: 45 degrees off the target track, closing laterally
        offset = np.asarray(cfg.r_wp0) - np.asarray(cfg.r_ws0)
        lateral = offset - (offset @ direction) * direction
        lateral[2] = 0.0
        lateral /= np.linalg.norm(lateral)
        v_world = speed * (direction * math.cos(math.pi / 4) + lateral * math.sin(math.pi / 4))
    nu_body = cfg.R_ws0().T @ v_world
    return np.concatenate([nu_body, np.zeros(3)])


def heuristic_twist(cfg: ScenarioConfig, kind: str, epoch: int) -> np.ndarray:
    """Control xi^{epoch+1} of the ramped heuristic path.

    Ramping from the initial control keeps every per-epoch velocity change
    within 90% of the tighter of the acceleration and midpoint-velocity
    bounds, so the schedule is feasible by construction.
    """
    xi0 = np.asarray(cfg.xi_s0, dtype=float)
    target = _heuristic_target(cfg, kind)
    step_cap = 0.9 * min(cfg.a_lin, cfg.v_mid)
    n_ramp = max(1, math.ceil(np.linalg.norm(target - xi0) / step_cap))
    alpha = min(1.0, epoch / n_ramp)
    return xi0 + alpha * (target - xi0)


def policy_parallel(cfg: ScenarioConfig, epoch: int) -> np.ndarray:
    return heuristic_twist(cfg, "parallel", epoch)


def policy_diagonal(cfg: ScenarioConfig, epoch: int) -> np.ndarray:
    return heuristic_twist(cfg, "diagonal", epoch)


def policy_optimized(
    cfg: ScenarioConfig,
    E: np.ndarray,
    T_pred: Pose,
    model: ekf.RadarModel,
    cons: ConstraintSet,
    rng: np.random.Generator,
) -> np.ndarray:
    """Bound-driven control with the documented hold-previous fallback."""
    return optimize_control_or_hold(
        E, T_pred, model, cons, rng,
        n_samples=cfg.n_randomization, sdp_tol=cfg.sdp_tol,
    )


def build_model(cfg: ScenarioConfig, pilots, phase: float) -> ekf.RadarModel:
    return ekf.RadarModel(
        upa=cfg.upa(),
        grid=cfg.grid(),
        pilots=pilots,
        offset=UpaOffset(np.asarray(cfg.upa_offset, dtype=float)),
        a_const=cfg.a_const(),
        phase=phase,
        sigma_z=cfg.resolved_sigma_z(),
        xi_p_nominal=cfg.xi_p(),
    )


def run_episode(cfg: ScenarioConfig, rng: np.random.Generator) -> EpisodeTrace:
    """Simulate one episode: truth, measurements, filter, bound, controller."""
    n = cfg.n_epochs
    trace = EpisodeTrace(
        pos_true=np.full((n, 3), np.nan),
        pos_est=np.full((n, 3), np.nan),
        zeta_true=np.full((n, 4), np.nan),
        zeta_est=np.full((n, 4), np.nan),
        cpcrb_zeta=np.full((n, 4), np.nan),
        logdet_cpcrb_T=np.full(n, np.nan),
        prior_gap=np.full(n, np.nan),
        nees=np.full(n, np.nan),
        xi=np.full((n, 6), np.nan),
        uav_world=np.full((n, 3), np.nan),
        gu_world=np.full((n, 3), np.nan),
        gu_world_est=np.full((n, 3), np.nan),
    )

    try:
        phase = rng.uniform(-np.pi, np.pi)
        pilots = build_pilot_matrix(cfg.upa(), cfg.grid(), cfg.pilot_power, rng)
        model = build_model(cfg, pilots, phase)
    except Se3TrackError as exc:
        trace.failed = True
        trace.fail_epoch = 0
        trace.fail_reason = str(EpisodeFailed(f"setup: {type(exc).__name__}: {exc}"))
        return trace
    offset = model.offset
    xi_p = cfg.xi_p()
    Xi_w = np.diag(np.asarray(cfg.xi_w_std, dtype=float) ** 2)
    C_w = np.diag(np.asarray(cfg.c_w_std, dtype=float) ** 2)
    c_z_aug = model.c_z_aug()
    c_z_inv_scale = 2.0 / model.sigma_z**2

    T_ws = cfg.T_ws0()
    T_wp = cfg.T_wp0()
    T_sp = T_ws.inverse() @ T_wp
    if cfg.perfect_init:
        T_hat = T_sp
    else:
        T_hat = T_ws.inverse() @ Pose(np.eye(3), np.asarray(cfg.r_wp0_est, dtype=float))
    P0 = np.diag(np.asarray(cfg.p0_diag, dtype=float))
    state = ekf.FilterState(T_hat=T_hat, P=P0)
    fim = cpcrb.FimState(I_T=np.linalg.inv(P0))
    xi_curr = np.asarray(cfg.xi_s0, dtype=float)
    F = jac_state_F(xi_p, cfg.dt)

    for epoch in range(n):
        try:
            # ground truth: noisy control on the platform, drift on the target
            xi_noise = sample_twist(Xi_w, rng)
            w_noise = sample_twist(C_w, rng)
            T_ws_new = T_ws @ exp_map(xi_curr + xi_noise, cfg.dt)
            T_wp_new = T_wp @ exp_map(xi_p, cfg.dt) @ exp_map(w_noise)
            T_sp = T_ws_new.inverse() @ T_wp_new

            state_pred = ekf.predict(state, xi_curr, xi_p, Xi_w, C_w, cfg.dt)

            # prior information for bound and controller (adjoint of the
            # previous target world pose transports the control noise)
            C_w_prime = cpcrb.process_noise_prime(
                Xi_w, C_w, adjoint(T_wp.inverse()), cfg.dt
            )
            E = cpcrb.prior_information(fim, F, C_w_prime)

            cons = ConstraintSet(
                xi_prev=xi_curr,
                s=offset.s,
                R1=T_ws_new.R,
                R2=T_ws.R,
                **cfg.constraint_bounds(),
            )
            if cfg.policy == "parallel":
                xi_next = policy_parallel(cfg, epoch + 1)
            elif cfg.policy == "diagonal":
                xi_next = policy_diagonal(cfg, epoch + 1)
            else:
                xi_next = policy_optimized(cfg, E, state_pred.T_hat, model, cons, rng)

            zeta_true = extract_params(
                T_sp, xi_next, xi_p, offset, model.grid, model.a_const, phase
            )
            h = channel_vector(zeta_true, model.upa, model.grid)
            sigma_realized = 0.0 if cfg.noiseless_measurements else model.sigma_z
            y_aug = augment(
                synthesize_measurement(h, pilots, model.upa.n_r, sigma_realized, rng)
            )

            H = model.jac_H(state_pred.T_hat, xi_next)
            g_pred = model.g_aug(state_pred.T_hat, xi_next)
            state = ekf.update(state_pred, y_aug, H, c_z_aug, g_pred)

            fim = cpcrb.FimState(I_T=c_z_inv_scale * H.T @ H + E)
            psi_n = model.psi(state_pred.T_hat, xi_next)
            bound_T = cpcrb.cpcrb_pose(fim)
            bound_zeta = psi_n @ bound_T @ psi_n.T

            zeta_est = model.zeta(state.T_hat, xi_next)
            err = right_minus(T_sp, state.T_hat)
            trace.pos_true[epoch] = T_sp.r
            trace.pos_est[epoch] = state.T_hat.r
            trace.zeta_true[epoch] = zeta_true.vector()
            trace.zeta_est[epoch] = zeta_est.vector()
            trace.cpcrb_zeta[epoch] = np.diag(bound_zeta)
            trace.logdet_cpcrb_T[epoch] = np.linalg.slogdet(bound_T)[1]
            trace.prior_gap[epoch] = float(
                np.linalg.eigvalsh(np.linalg.inv(E) - bound_T)[0]
            )
            trace.nees[epoch] = float(err @ np.linalg.solve(state.P + 1e-15 * np.eye(6), err))
            trace.xi[epoch] = xi_next
            trace.uav_world[epoch] = T_ws_new.r
            trace.gu_world[epoch] = T_wp_new.r
            trace.gu_world_est[epoch] = T_ws_new.R @ state.T_hat.r + T_ws_new.r

            T_ws, T_wp = T_ws_new, T_wp_new
            xi_curr = xi_next
        except Se3TrackError as exc:
            # recorded, never raised: the surrounding runs keep going
            trace.failed = True
            trace.fail_epoch = epoch
            trace.fail_reason = str(
                EpisodeFailed(f"epoch {epoch}: {type(exc).__name__}: {exc}")
            )
            break
    return trace


@dataclass
class PolicyAggregate:
    """Across-run statistics per epoch for one policy."""

    policy: str
    epochs: np.ndarray
    rmse_pos: np.ndarray
    rmse_tau: np.ndarray
    rmse_phi: np.ndarray
    rmse_theta: np.ndarray
    rmse_mu: np.ndarray
    cpcrb_tau: np.ndarray
    cpcrb_phi: np.ndarray
    cpcrb_theta: np.ndarray
    cpcrb_mu: np.ndarray
    logdet_cpcrb_T: np.ndarray
    bias_pos: np.ndarray
    mean_nees: np.ndarray
    failures: int
    n_runs: int
    sample_trace: EpisodeTrace


def wrap_angle(delta: np.ndarray) -> np.ndarray:
    """Wrap angular residuals into (-pi, pi]."""
    return np.pi - np.mod(np.pi - delta, 2.0 * np.pi)


def episode_rng(seed: int, policy: str, run_idx: int) -> np.random.Generator:
    """Counter-style stream: independent of execution order and thread count."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(POLICIES.index(policy), run_idx))
    )


def _episode_task(args) -> EpisodeTrace:
    cfg, run_idx = args
    return run_episode(cfg, episode_rng(cfg.seed, cfg.policy, run_idx))


def monte_carlo(cfg: ScenarioConfig) -> PolicyAggregate:
    """Run mc_runs episodes of cfg.policy and aggregate the error metrics.

    Failed episodes are excluded from every statistic and counted; the run
    fails only if no episode survives.
    """
    tasks = [(cfg, run) for run in range(cfg.mc_runs)]
    if cfg.threads > 1:
        with Pool(processes=cfg.threads) as pool:
            traces = pool.map(_episode_task, tasks)
    else:
        traces = [_episode_task(t) for t in tasks]

    good = [t for t in traces if not t.failed]
    if not good:
        raise AllEpisodesFailed(
            f"all {cfg.mc_runs} episodes failed; first reason: {traces[0].fail_reason}"
        )

    pos_err = np.stack([t.pos_est - t.pos_true for t in good])  # (runs, n, 3)
    dz = np.stack([t.zeta_est - t.zeta_true for t in good])  # (runs, n, 4)
    dz[:, :, 1] = wrap_angle(dz[:, :, 1])
    dz[:, :, 2] = wrap_angle(dz[:, :, 2])
    bounds = np.stack([t.cpcrb_zeta for t in good])
    logdets = np.stack([t.logdet_cpcrb_T for t in good])
    nees = np.stack([t.nees for t in good])

    rmse_zeta = np.sqrt(np.mean(dz**2, axis=0))
    return PolicyAggregate(
        policy=cfg.policy,
        epochs=np.arange(1, cfg.n_epochs + 1),
        rmse_pos=np.sqrt(np.mean(np.sum(pos_err**2, axis=2), axis=0)),
        rmse_tau=rmse_zeta[:, 0],
        rmse_phi=rmse_zeta[:, 1],
        rmse_theta=rmse_zeta[:, 2],
        rmse_mu=rmse_zeta[:, 3],
        cpcrb_tau=np.mean(bounds[:, :, 0], axis=0),
        cpcrb_phi=np.mean(bounds[:, :, 1], axis=0),
        cpcrb_theta=np.mean(bounds[:, :, 2], axis=0),
        cpcrb_mu=np.mean(bounds[:, :, 3], axis=0),
        logdet_cpcrb_T=np.mean(logdets, axis=0),
        bias_pos=np.linalg.norm(np.mean(pos_err, axis=0), axis=1),
        mean_nees=np.mean(nees, axis=0),
        failures=len(traces) - len(good),
        n_runs=len(good),
        sample_trace=good[0],
    )


def run_policies(cfg: ScenarioConfig, policies=POLICIES) -> dict:
    """monte_carlo for each requested policy under the same master seed."""
    return {p: monte_carlo(replace(cfg, policy=p)) for p in policies}


def config_to_dict(cfg: ScenarioConfig) -> dict:
    out = asdict(cfg)
    for key, val in out.items():
        if isinstance(val, tuple):
            out[key] = list(val)
    return out
