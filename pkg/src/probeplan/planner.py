"""Ego controller: entropy-driven probing, KL influence toward per-mode
interaction targets, CVaR-capped per-mode solves, and joint-weight
blending, applied in a receding-horizon loop (only the first control of
each solve is executed).

Solver notes. Each per-mode problem is solved by multi-start over
constant-acceleration candidates followed by projected finite-difference
descent on a piecewise-constant acceleration parameterization; the lateral
channel follows a fixed lane-guidance law shared by every planner so
cross-planner comparisons isolate the longitudinal interaction machinery.
The CVaR cap enters as a quadratic penalty, and all Monte-Carlo quantities
inside one solve reuse fixed random streams (common random numbers), so
the objective is deterministic within a solve and the whole step is
bit-reproducible from its rng key.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .belief import (
    HierarchicalBelief,
    ModeTarget,
    entropy,
    joint_weights,
    max_entropy,
    update,
)
from .dynamics import VehicleState, double_integrator, propagate_cov, step_vehicle
from .errors import DegenerateEvidenceError, InvalidInputError
from .gaussmath import Gaussian, kl_divergence
from .human import GAP, VELOCITY, conflict_level
from .risk import cvar, draw_human_paths, path_costs, simulate_ego_path
from .seeding import (
    STREAM_MODE_ROLLOUT,
    STREAM_PROBE,
    derive_key,
    rng_from_keys,
)
from .world import (
    LANE_MERGE,
    ScenarioGeometry,
    ScenarioState,
    ego_progress,
    human_progress,
)

# Initial ego state uncertainty (position, velocity) for the predicted
# interaction distribution; grows over the horizon per the process noise.
INIT_POS_STD = 0.3
INIT_VEL_STD = 0.2

_FD_STEP = 0.05  # finite-difference probe, m/s^2 in segment space


@dataclass(frozen=True)
class PlannerConfig:
    """All planner tunables. Defaults follow the best-performing parameter
    set of the evaluation study (S=100, alpha=0.05, beta=5, lambda=0.5,
    gamma=0.95, eps=1e-5, 30 steps at 0.1 s)."""

    horizon_steps: int = 30
    dt: float = 0.1
    entropy_weight: float = 0.5
    cvar_level: float = 0.05
    rollout_count: int = 100
    risk_cap: float = 60.0
    mode_activation_eps: float = 1e-5
    accel_bounds: tuple[float, float] = (-3.0, 3.0)
    yaw_rate_bounds: tuple[float, float] = (-0.6, 0.6)
    discount: float = 0.95
    response_gain: float = 5.0
    accel_noise_var: float = 0.05
    obs_samples: int = 20
    ref_speed: float = 9.5
    obs_noise_std: float = 0.3
    features: tuple[str, ...] = (VELOCITY,)
    solver_iters: int = 6
    solver_step: float = 0.6
    solver_segments: int = 3
    solver_inits: int = 5
    penalty_weight: float = 100.0
    probe_grid_size: int = 7
    probe_lookahead_steps: int = 20
    literal_probe_sign: bool = False
    pi_weighted_entropy: bool = False
    probe_pi_weighted: bool = True
    adaptive_obs_samples: bool = True

    def __post_init__(self) -> None:
        if self.horizon_steps < 1:
            raise InvalidInputError("horizon_steps must be >= 1")
        if self.dt <= 0.0:
            raise InvalidInputError("dt must be positive")
        if self.entropy_weight < 0.0:
            raise InvalidInputError("entropy_weight must be nonnegative")
        if not 0.0 < self.cvar_level <= 1.0:
            raise InvalidInputError("cvar_level must lie in (0, 1]")
        if self.rollout_count < 1:
            raise InvalidInputError("rollout_count must be >= 1")
        if self.mode_activation_eps <= 0.0:
            raise InvalidInputError("mode_activation_eps must be positive")
        for name in ("accel_bounds", "yaw_rate_bounds"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise InvalidInputError(f"{name} must satisfy min < max")
        if self.obs_samples < 1 or self.probe_grid_size < 2:
            raise InvalidInputError("obs_samples >= 1 and probe_grid_size >= 2 required")
        if self.solver_segments < 1 or self.solver_iters < 0 or self.solver_inits < 2:
            raise InvalidInputError("invalid solver budget")

    @property
    def u_min(self) -> np.ndarray:
        return np.array([self.accel_bounds[0], self.yaw_rate_bounds[0]])

    @property
    def u_max(self) -> np.ndarray:
        return np.array([self.accel_bounds[1], self.yaw_rate_bounds[1]])


@dataclass(frozen=True)
class ModeDiag:
    """Per-mode planning record (one entry per mode target, active or not)."""

    intent_id: int
    mode_id: int
    omega: float
    active: bool
    cvar_pre: float
    cvar_solution: float = math.nan
    margin: float = math.nan
    infeasible: bool = False
    objective: float = math.nan
    j_probe: float = math.nan
    j_influence: float = math.nan
    evals: int = 0
    nu: np.ndarray | None = None


@dataclass(frozen=True)
class PlanDiagnostics:
    """Everything one receding-horizon step decided and why."""

    entropy_before: float
    expected_entropy_after: float
    modes: tuple[ModeDiag, ...]
    u_total: np.ndarray
    u_first: np.ndarray
    j_probe: float
    j_influence: float
    solver_evals: int
    blend_fallback: bool
    infeasible_any: bool


# ---------------------------------------------------------------------------
# Lane guidance (lateral channel)


def _guidance_yaw_rate(
    ego: VehicleState,
    human_x: float,
    geometry: ScenarioGeometry,
    cfg: PlannerConfig,
    committed: bool,
) -> tuple[float, bool]:
    if geometry.kind == LANE_MERGE:
        past_merge = ego_progress(geometry, ego) > 0.0
        gap_ok = abs(ego.x - human_x) >= geometry.merge_gap_min
        if past_merge and (gap_ok or committed):
            y_des = geometry.target_lane_y
            committed = committed or abs(ego.y - geometry.ramp_y) > 1.0
        else:
            y_des = geometry.ramp_y
    else:
        y_des = geometry.target_lane_y
    heading_des = math.atan2(1.2 * (y_des - ego.y), max(ego.v, 2.0))
    heading_des = min(0.35, max(-0.35, heading_des))
    yaw = 4.0 * (heading_des - ego.theta)
    lo, hi = cfg.yaw_rate_bounds
    return min(hi, max(lo, yaw)), committed


def lane_guidance(state: ScenarioState, cfg: PlannerConfig) -> np.ndarray:
    """Yaw-rate sequence (T,) steering the ego onto its target lane.

    Rolled out against a constant-velocity human; the merge onto the main
    lane is only commanded once past the merge point with an adequate
    longitudinal gap (or once the lane change is already committed).
    """
    yaw = np.empty(cfg.horizon_steps)
    ego = state.ego
    human_x = state.human.x
    human_vx = state.human.v * math.cos(state.human.theta)
    committed = abs(ego.y - state.geometry.ramp_y) > 1.0
    for t in range(cfg.horizon_steps):
        yaw[t], committed = _guidance_yaw_rate(ego, human_x, state.geometry, cfg, committed)
        ego = step_vehicle(ego, (0.0, yaw[t]), cfg.dt)
        human_x += human_vx * cfg.dt
    return yaw


# ---------------------------------------------------------------------------
# Predicted interaction distribution and influence objective


def _linear_terminal_state(
    s0: float, v0: float, accel: np.ndarray, dt: float
) -> tuple[float, float]:
    """Terminal (progress, speed) of the double-integrator planning model."""
    v_path = v0 + dt * np.cumsum(accel)
    v_prev = np.concatenate(([v0], v_path[:-1]))
    s_t = s0 + dt * float(np.sum(v_prev)) + 0.5 * dt * dt * float(np.sum(accel))
    return s_t, float(v_path[-1])


def _mode_human_advance(
    human: VehicleState,
    mode: ModeTarget,
    conflict: float,
    cfg: PlannerConfig,
) -> float:
    """Predicted human progress gain over the horizon if it follows the
    mode: speed relaxes toward the mode's velocity mean at a rate scaled
    by the current conflict level."""
    horizon = cfg.horizon_steps * cfg.dt
    mu = max(0.0, float(mode.target.mean[0]))
    rate = cfg.response_gain * conflict
    if rate < 1e-9:
        return human.v * horizon
    return mu * horizon + (human.v - mu) * (1.0 - math.exp(-rate * horizon)) / rate


def ego_horizon_covariance(cfg: PlannerConfig) -> np.ndarray:
    """Ego (position, velocity) covariance at the horizon end under the
    planning model; independent of the control sequence."""
    model = double_integrator(cfg.dt, cfg.accel_noise_var)
    sigma = np.diag([INIT_POS_STD**2, INIT_VEL_STD**2])
    for _ in range(cfg.horizon_steps):
        sigma = propagate_cov(sigma, model)
    return sigma


def predicted_interaction_gaussian(
    state: ScenarioState,
    accel_seq: np.ndarray,
    mode: ModeTarget,
    cfg: PlannerConfig,
    ego_sigma: np.ndarray | None = None,
) -> Gaussian:
    """Ego interaction-feature distribution (speed, lead) at the horizon
    end, given a longitudinal acceleration sequence and a mode hypothesis
    for the human."""
    accel_seq = np.asarray(accel_seq, dtype=float)
    if accel_seq.shape != (cfg.horizon_steps,):
        raise InvalidInputError("accel_seq length must equal the horizon")
    if ego_sigma is None:
        ego_sigma = ego_horizon_covariance(cfg)
    geometry = state.geometry
    s0 = ego_progress(geometry, state.ego)
    s_t, v_t = _linear_terminal_state(s0, state.ego.v, accel_seq, cfg.dt)
    c0 = conflict_level(
        state.ego, state.human, geometry, cfg.response_gain,
        geometry.risk_threshold, geometry.nominal_human_speed,
    )
    s_h = human_progress(geometry, state.human) + _mode_human_advance(
        state.human, mode, c0, cfg
    )
    horizon = cfg.horizon_steps * cfg.dt
    var_h_pos = float(mode.target.cov[0, 0]) * horizon * horizon
    cov = np.array(
        [
            [ego_sigma[1, 1], ego_sigma[0, 1]],
            [ego_sigma[0, 1], ego_sigma[0, 0] + var_h_pos],
        ]
    )
    return Gaussian(np.array([v_t, s_t - s_h]), cov)


def influence_objective(predicted: Gaussian, target: Gaussian) -> float:
    """Alignment of the predicted interaction distribution with a mode
    target: KL(predicted || target), evaluated at the horizon end."""
    return kl_divergence(predicted, target)


def probe_objective(expected_entropy: float, entropy_weight: float) -> float:
    """Probing term: entropy_weight * expected posterior entropy.

    Minimizing this drives the expected posterior uncertainty down. (The
    sign-flipped variant used for ablations lives behind
    PlannerConfig.literal_probe_sign in the solver, not here.)
    """
    if entropy_weight < 0.0:
        raise InvalidInputError("entropy_weight must be nonnegative")
    return entropy_weight * expected_entropy


# ---------------------------------------------------------------------------
# Observation prediction and expected posterior entropy


def probe_projection(
    state: ScenarioState, u_first: np.ndarray, cfg: PlannerConfig
) -> tuple[VehicleState, VehicleState, float]:
    """Project the encounter forward with the first control held fixed.

    A single 0.1 s step barely moves the conflict geometry, which would
    leave the probing objective with a vanishing gradient; holding the
    first planned control for ``probe_lookahead_steps`` exposes the
    response the control actually elicits. The human cruises during the
    projection (its reaction enters through the response-time relaxation).
    """
    steps = max(1, cfg.probe_lookahead_steps)
    ego = state.ego
    accel = float(u_first[0])
    for _ in range(steps):
        ego = step_vehicle(ego, (accel, 0.0), cfg.dt)
    human = state.human
    for _ in range(steps):
        human = step_vehicle(human, (0.0, 0.0), cfg.dt)
    return ego, human, steps * cfg.dt


def predicted_observation_mean(
    ego_ref: VehicleState,
    human_ref: VehicleState,
    geometry: ScenarioGeometry,
    mode: ModeTarget,
    cfg: PlannerConfig,
    response_time: float | None = None,
) -> np.ndarray:
    """Expected observation if the human follows ``mode``: its speed
    relaxes toward the mode's velocity mean at a rate set by the conflict
    level of the (possibly projected) reference configuration, integrated
    over ``response_time`` seconds."""
    if response_time is None:
        response_time = cfg.dt
    c = conflict_level(
        ego_ref, human_ref, geometry, cfg.response_gain,
        geometry.risk_threshold, geometry.nominal_human_speed,
    )
    relax = 1.0 - math.exp(-cfg.response_gain * c * response_time)
    v_pred = human_ref.v + relax * (float(mode.target.mean[0]) - human_ref.v)
    values = []
    for name in cfg.features:
        if name == VELOCITY:
            values.append(v_pred)
        elif name == GAP:
            step = v_pred * cfg.dt
            hx = human_ref.x + step * geometry.human_dir[0]
            hy = human_ref.y + step * geometry.human_dir[1]
            values.append(math.hypot(ego_ref.x - hx, ego_ref.y - hy))
        else:
            raise InvalidInputError(f"unknown observation feature {name!r}")
    return np.array(values)


def _flat_modes(b: HierarchicalBelief) -> tuple[list[ModeTarget], np.ndarray]:
    omega_rows = joint_weights(b)
    modes = list(b.targets.targets)
    flat = np.array(
        [omega_rows[t.intent_id - 1][t.mode_id - 1] for t in modes]
    )
    return modes, flat


def expected_posterior_entropy(
    b: HierarchicalBelief,
    u_seq: np.ndarray,
    state: ScenarioState,
    n_obs: int,
    rng: np.random.Generator,
    cfg: PlannerConfig,
) -> float:
    """Monte-Carlo estimate of the posterior belief entropy after one more
    observation, conditioned on applying the first planned control.

    Each draw samples a mode by joint weight, predicts the human response
    it implies, perturbs it with observation noise, runs the Bayesian
    update, and evaluates the entropy; degenerate-evidence draws fall back
    to the prior entropy.
    """
    if n_obs < 1:
        raise InvalidInputError("n_obs must be >= 1")
    u_first = np.asarray(u_seq, dtype=float).reshape(-1, 2)[0]
    ego_ref, human_ref, response_time = probe_projection(state, u_first, cfg)
    modes, omega = _flat_modes(b)
    omega = omega / omega.sum()
    # The probing estimator weighs each row's entropy by its intent mass
    # (probe_pi_weighted): probing should chase intent information, not
    # the mode-weight noise of intents the belief already rules out.
    weighted = cfg.probe_pi_weighted
    total = 0.0
    for _ in range(n_obs):
        idx = int(rng.choice(len(modes), p=omega))
        z = predicted_observation_mean(
            ego_ref, human_ref, state.geometry, modes[idx], cfg, response_time
        )
        if cfg.obs_noise_std > 0.0:
            z = z + rng.normal(0.0, cfg.obs_noise_std, size=z.shape)
        try:
            total += entropy(update(b, z), weighted)
        except DegenerateEvidenceError:
            total += entropy(b, weighted)
    return total / n_obs


# ---------------------------------------------------------------------------
# Per-mode constrained solve


@dataclass
class _StepContext:
    """Shared per-step precomputation for every mode solve."""

    cfg: PlannerConfig
    state: ScenarioState
    belief: HierarchicalBelief
    base_key: int
    guidance_yaw: np.ndarray
    ego_sigma: np.ndarray
    probe_grid: np.ndarray | None
    probe_entropy: np.ndarray | None
    entropy_weight: float
    human_paths: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)

    def paths_for(self, mode: ModeTarget) -> np.ndarray:
        key = (mode.intent_id, mode.mode_id)
        if key not in self.human_paths:
            stream = rng_from_keys(self.base_key, STREAM_MODE_ROLLOUT, *key)
            self.human_paths[key] = draw_human_paths(
                self.state.human, mode, self.cfg.rollout_count,
                self.cfg.horizon_steps, self.cfg.dt, stream,
            )
        return self.human_paths[key]

    def probe_term(self, first_accel: float) -> float:
        if self.probe_grid is None:
            return 0.0
        expected = float(np.interp(first_accel, self.probe_grid, self.probe_entropy))
        sign = -1.0 if self.cfg.literal_probe_sign else 1.0
        return sign * self.entropy_weight * expected


def _expand_segments(theta: np.ndarray, horizon: int) -> np.ndarray:
    seg_len = -(-horizon // theta.shape[0])  # ceil division
    return np.repeat(theta, seg_len)[:horizon]


def _segment_means(accel: np.ndarray, segments: int) -> np.ndarray:
    chunks = np.array_split(accel, segments)
    return np.array([float(np.mean(c)) for c in chunks])


@dataclass(frozen=True)
class ModeSolveResult:
    nu: np.ndarray
    objective: float
    cvar_value: float
    j_probe: float
    j_influence: float
    infeasible: bool
    evals: int


def _solve_mode(
    ctx: _StepContext,
    mode: ModeTarget,
    steer_target: Gaussian,
    warm_accel: np.ndarray | None,
) -> ModeSolveResult:
    cfg = ctx.cfg
    a_lo, a_hi = cfg.accel_bounds
    horizon = cfg.horizon_steps
    dt = cfg.dt
    state = ctx.state
    geometry = state.geometry
    paths = ctx.paths_for(mode)

    # KL(pred || target) decomposes into a control-independent constant
    # plus a quadratic in the predicted mean; precompute the fixed parts.
    c0 = conflict_level(
        state.ego, state.human, geometry, cfg.response_gain,
        geometry.risk_threshold, geometry.nominal_human_speed,
    )
    s_h = human_progress(geometry, state.human) + _mode_human_advance(
        state.human, mode, c0, cfg
    )
    s0 = ego_progress(geometry, state.ego)
    horizon_time = horizon * dt
    var_h_pos = float(mode.target.cov[0, 0]) * horizon_time * horizon_time
    cov_pred = np.array(
        [
            [ctx.ego_sigma[1, 1], ctx.ego_sigma[0, 1]],
            [ctx.ego_sigma[0, 1], ctx.ego_sigma[0, 0] + var_h_pos],
        ]
    )
    pred_stub = Gaussian(np.zeros(2), cov_pred)
    kl_at_zero = kl_divergence(pred_stub, steer_target)
    chol_q = np.linalg.cholesky(steer_target.cov)
    y0 = np.linalg.solve(chol_q, steer_target.mean)
    kl_const = kl_at_zero - 0.5 * float(y0 @ y0)

    def kl_fast(pred_mean: np.ndarray) -> float:
        y = np.linalg.solve(chol_q, steer_target.mean - pred_mean)
        return kl_const + 0.5 * float(y @ y)

    evals = 0
    history: list[tuple[float, float, np.ndarray]] = []  # (objective, cvar, accel)

    def evaluate(theta: np.ndarray) -> tuple[float, float, float, float]:
        nonlocal evals
        evals += 1
        accel = _expand_segments(np.clip(theta, a_lo, a_hi), horizon)
        plan = np.column_stack((accel, ctx.guidance_yaw))
        ego_xy, ego_speeds = simulate_ego_path(state.ego, plan, dt)
        cvar_val = cvar(
            path_costs(ego_xy, ego_speeds, paths, cfg.discount, cfg.ref_speed),
            cfg.cvar_level,
        )
        s_t, v_t = _linear_terminal_state(s0, state.ego.v, accel, dt)
        j_infl = kl_fast(np.array([v_t, s_t - s_h]))
        j_probe = ctx.probe_term(float(accel[0]))
        violation = max(0.0, cvar_val - cfg.risk_cap)
        obj = j_probe + j_infl + cfg.penalty_weight * violation * violation
        history.append((obj, cvar_val, accel))
        return obj, cvar_val, j_probe, j_infl

    segments = cfg.solver_segments
    candidates = [np.zeros(segments)]
    consts = np.linspace(a_lo, a_hi, cfg.solver_inits)
    for c in consts:
        candidates.append(np.full(segments, c))
    if warm_accel is not None:
        candidates.append(np.clip(_segment_means(warm_accel, segments), a_lo, a_hi))
    if ctx.probe_grid is not None and segments > 1:
        # Probe bursts: an extreme first segment with a steady tail. The
        # influence term cares mostly about the terminal state, so these
        # candidates let the probing term claim the first control cheaply.
        for c in consts:
            for burst in (a_lo, a_hi):
                theta = np.full(segments, c)
                theta[0] = burst
                candidates.append(theta)

    best_theta, best = None, None
    for theta in candidates:
        res = evaluate(theta)
        if best is None or res[0] < best[0]:
            best_theta, best = theta.copy(), res

    theta, current = best_theta, best
    for _ in range(cfg.solver_iters):
        grad = np.zeros(segments)
        for m in range(segments):
            h = _FD_STEP if theta[m] + _FD_STEP <= a_hi else -_FD_STEP
            probe = theta.copy()
            probe[m] += h
            grad[m] = (evaluate(probe)[0] - current[0]) / h
        scale = float(np.max(np.abs(grad)))
        if scale < 1e-12:
            break
        direction = grad / scale
        step = cfg.solver_step
        improved = False
        for _ in range(3):
            trial = np.clip(theta - step * direction, a_lo, a_hi)
            res = evaluate(trial)
            if res[0] < current[0] - 1e-12:
                theta, current = trial, res
                improved = True
                break
            step *= 0.5
        if not improved:
            break

    obj, cvar_val, j_probe, j_infl = current
    infeasible = False
    if cvar_val > cfg.risk_cap:
        feasible = [h for h in history if h[1] <= cfg.risk_cap]
        if feasible:
            obj, cvar_val, accel = min(feasible, key=lambda h: h[0])
        else:
            # Every evaluated candidate violates the cap: fall back to the
            # minimum-risk one and flag the solve; the loop re-solves next step.
            obj, cvar_val, accel = min(history, key=lambda h: h[1])
            infeasible = True
        s_t, v_t = _linear_terminal_state(s0, state.ego.v, accel, dt)
        j_infl = kl_fast(np.array([v_t, s_t - s_h]))
        j_probe = ctx.probe_term(float(accel[0]))
    else:
        accel = _expand_segments(np.clip(theta, a_lo, a_hi), horizon)

    nu = np.column_stack((accel, ctx.guidance_yaw))
    nu = np.clip(nu, ctx.cfg.u_min, ctx.cfg.u_max)
    return ModeSolveResult(
        nu=nu, objective=obj, cvar_value=cvar_val, j_probe=j_probe,
        j_influence=j_infl, infeasible=infeasible, evals=evals,
    )


def blend_controls(
    per_mode: Sequence[tuple[float, np.ndarray]],
    eps: float,
    u_min: np.ndarray | None = None,
    u_max: np.ndarray | None = None,
) -> tuple[np.ndarray, bool]:
    """Joint-weight blend of per-mode control sequences.

    Sums omega * nu over modes with omega > eps. When no mode clears the
    threshold the argmax-omega mode's sequence is returned unscaled
    (fallback flag set). The result is clamped to bounds when given.
    """
    if not per_mode:
        raise InvalidInputError("per_mode must be non-empty")
    active = [(w, nu) for w, nu in per_mode if w > eps]
    fallback = not active
    if fallback:
        w_best, u_total = max(per_mode, key=lambda p: p[0])
        u_total = np.array(u_total, dtype=float)
    else:
        u_total = np.zeros_like(np.asarray(active[0][1], dtype=float))
        for w, nu in active:
            u_total = u_total + w * np.asarray(nu, dtype=float)
    if u_min is not None and u_max is not None:
        u_total = np.clip(u_total, u_min, u_max)
    return u_total, fallback


# ---------------------------------------------------------------------------
# Receding-horizon planners


class ActivePlanner:
    """Full planner: probing + influence + per-mode CVaR-capped solves."""

    name = "ours"

    def __init__(self, cfg: PlannerConfig):
        self.cfg = cfg
        self._warm: dict[tuple[int, int], np.ndarray] = {}
        self._prev_accel: np.ndarray | None = None
        self._ego_sigma = ego_horizon_covariance(cfg)

    # Subclasses override these two hooks.
    def _entropy_weight(self) -> float:
        return self.cfg.entropy_weight

    def _influence_target(self, mode: ModeTarget, b: HierarchicalBelief) -> Gaussian:
        if mode.steer is None:
            raise InvalidInputError(
                f"mode ({mode.intent_id},{mode.mode_id}) has no steering target"
            )
        return mode.steer

    def _build_probe_grid(
        self, state: ScenarioState, b: HierarchicalBelief, key: int
    ) -> tuple[np.ndarray | None, np.ndarray | None]:
        cfg = self.cfg
        weight = self._entropy_weight()
        h_now = entropy(b, cfg.probe_pi_weighted)
        if weight <= 0.0 or h_now <= 1e-12:
            return None, None
        n_obs = cfg.obs_samples
        if cfg.adaptive_obs_samples and h_now > 0.75 * max_entropy(
            b.targets, cfg.probe_pi_weighted
        ):
            n_obs *= 2
        modes, omega = _flat_modes(b)
        omega = omega / omega.sum()
        rng = rng_from_keys(key, STREAM_PROBE)
        # Common random numbers: one draw set shared by every grid point.
        idxs = rng.choice(len(modes), size=n_obs, p=omega)
        noise = rng.normal(0.0, cfg.obs_noise_std, size=(n_obs, len(cfg.features)))
        grid = np.linspace(*cfg.accel_bounds, cfg.probe_grid_size)
        values = np.empty_like(grid)
        for gi, a0 in enumerate(grid):
            ego_ref, human_ref, response_time = probe_projection(
                state, np.array([a0, 0.0]), cfg
            )
            total = 0.0
            for j in range(n_obs):
                z = predicted_observation_mean(
                    ego_ref, human_ref, state.geometry, modes[int(idxs[j])],
                    cfg, response_time,
                ) + noise[j]
                try:
                    total += entropy(update(b, z), cfg.probe_pi_weighted)
                except DegenerateEvidenceError:
                    total += h_now
            values[gi] = total / n_obs
        return grid, values

    def plan_step(
        self,
        state: ScenarioState,
        b: HierarchicalBelief,
        rng: np.random.Generator | int,
    ) -> tuple[np.ndarray, PlanDiagnostics]:
        cfg = self.cfg
        base_key = rng if isinstance(rng, int) else derive_key(rng)
        guidance = lane_guidance(state, cfg)
        probe_grid, probe_entropy = self._build_probe_grid(state, b, base_key)
        ctx = _StepContext(
            cfg=cfg,
            state=state,
            belief=b,
            base_key=base_key,
            guidance_yaw=guidance,
            ego_sigma=self._ego_sigma,
            probe_grid=probe_grid,
            probe_entropy=probe_entropy,
            entropy_weight=self._entropy_weight(),
        )
        h_before = entropy(b, cfg.pi_weighted_entropy)

        omega_rows = joint_weights(b)
        modes = list(b.targets.targets)
        omegas = {
            (t.intent_id, t.mode_id): float(
                omega_rows[t.intent_id - 1][t.mode_id - 1]
            )
            for t in modes
        }
        active_keys = [k for k, w in omegas.items() if w > cfg.mode_activation_eps]
        solve_keys = active_keys or [max(omegas, key=omegas.get)]

        # Risk assessment of the reference plan (shifted previous solution,
        # or coasting) before any solve, one CVaR per mode.
        if self._prev_accel is not None:
            ref_accel = np.append(self._prev_accel[1:], self._prev_accel[-1])
        else:
            ref_accel = np.zeros(cfg.horizon_steps)
        ref_plan = np.column_stack((ref_accel, guidance))
        ego_xy, ego_speeds = simulate_ego_path(state.ego, ref_plan, cfg.dt)
        cvar_pre: dict[tuple[int, int], float] = {}
        for t in modes:
            key = (t.intent_id, t.mode_id)
            costs = path_costs(
                ego_xy, ego_speeds, ctx.paths_for(t), cfg.discount, cfg.ref_speed
            )
            cvar_pre[key] = cvar(costs, cfg.cvar_level)

        solve_results: dict[tuple[int, int], ModeSolveResult] = {}
        for key in solve_keys:
            mode = b.targets.get(*key)
            target = self._influence_target(mode, b)
            warm = self._warm.get(key)
            if warm is not None:
                warm = np.append(warm[1:], warm[-1])  # receding-horizon shift
            solve_results[key] = _solve_mode(ctx, mode, target, warm)
            self._warm[key] = solve_results[key].nu[:, 0]

        blended = [
            (omegas[key], solve_results[key].nu)
            for key in solve_keys
        ]
        u_total, blend_fallback = blend_controls(
            blended, cfg.mode_activation_eps, cfg.u_min, cfg.u_max
        )
        u_first = u_total[0].copy()

        mode_diags = []
        total_evals = 0
        w_probe = 0.0
        w_infl = 0.0
        for t in modes:
            key = (t.intent_id, t.mode_id)
            res = solve_results.get(key)
            if res is None:
                mode_diags.append(
                    ModeDiag(
                        intent_id=key[0], mode_id=key[1], omega=omegas[key],
                        active=False, cvar_pre=cvar_pre[key],
                    )
                )
            else:
                total_evals += res.evals
                w = omegas[key]
                w_probe += w * res.j_probe
                w_infl += w * res.j_influence
                mode_diags.append(
                    ModeDiag(
                        intent_id=key[0], mode_id=key[1], omega=w,
                        active=key in active_keys, cvar_pre=cvar_pre[key],
                        cvar_solution=res.cvar_value,
                        margin=cfg.risk_cap - res.cvar_value,
                        infeasible=res.infeasible, objective=res.objective,
                        j_probe=res.j_probe, j_influence=res.j_influence,
                        evals=res.evals, nu=res.nu,
                    )
                )

        self._prev_accel = u_total[:, 0].copy()
        if probe_grid is not None:
            h_after = float(np.interp(u_first[0], probe_grid, probe_entropy))
        else:
            h_after = math.nan
        diag = PlanDiagnostics(
            entropy_before=h_before,
            expected_entropy_after=h_after,
            modes=tuple(mode_diags),
            u_total=u_total,
            u_first=u_first,
            j_probe=w_probe,
            j_influence=w_infl,
            solver_evals=total_evals,
            blend_fallback=blend_fallback,
            infeasible_any=any(m.infeasible for m in mode_diags),
        )
        return u_first, diag


def solve_mode_control(
    state: ScenarioState,
    b: HierarchicalBelief,
    mode: ModeTarget,
    cfg: PlannerConfig,
    rng: np.random.Generator | int,
) -> tuple[np.ndarray, ModeSolveResult]:
    """Standalone per-mode solve (the unit the planner runs per active mode)."""
    if (mode.intent_id, mode.mode_id) not in {
        (t.intent_id, t.mode_id) for t in b.targets.targets
    }:
        raise InvalidInputError("mode is not part of the belief's target set")
    planner = ActivePlanner(cfg)
    base_key = rng if isinstance(rng, int) else derive_key(rng)
    guidance = lane_guidance(state, cfg)
    probe_grid, probe_entropy = planner._build_probe_grid(state, b, base_key)
    ctx = _StepContext(
        cfg=cfg, state=state, belief=b, base_key=base_key,
        guidance_yaw=guidance, ego_sigma=planner._ego_sigma,
        probe_grid=probe_grid, probe_entropy=probe_entropy,
        entropy_weight=cfg.entropy_weight,
    )
    if mode.steer is None:
        raise InvalidInputError("mode has no steering target")
    result = _solve_mode(ctx, mode, mode.steer, None)
    return result.nu, result
