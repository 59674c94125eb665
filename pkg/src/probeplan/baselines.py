"""Simplified stand-in planners for directional comparisons.

Both share the guidance law, rollout machinery, belief, and diagnostics of
the full planner so measured differences isolate the probing + influence +
per-mode risk-cap machinery, not implementation quality.
"""

from __future__ import annotations

import math

import numpy as np

from .belief import HierarchicalBelief, ModeTarget, entropy, joint_weights
from .errors import InvalidInputError
from .gaussmath import Gaussian
from .planner import (
    ActivePlanner,
    ModeDiag,
    PlanDiagnostics,
    _StepContext,
    blend_controls,
    lane_guidance,
    _expand_segments,
)
from .risk import cvar, path_costs, simulate_ego_path
from .seeding import derive_key
from .world import ScenarioState


class PassivePlanner(ActivePlanner):
    """Probing disabled; every mode solve tracks the most likely mode's
    interaction target. The reactive strategy: plan against the current
    belief without trying to change it."""

    name = "passive"

    def _entropy_weight(self) -> float:
        return 0.0

    def _influence_target(self, mode: ModeTarget, b: HierarchicalBelief) -> Gaussian:
        rows = joint_weights(b)
        best = None
        for t in b.targets.targets:
            w = float(rows[t.intent_id - 1][t.mode_id - 1])
            if best is None or w > best[0]:
                best = (w, t)
        target = best[1]
        if target.steer is None:
            raise InvalidInputError("argmax mode has no steering target")
        return target.steer


class ConservativePlanner(ActivePlanner):
    """Hedging stand-in: one control sequence minimizing the joint-weighted
    sum of per-mode CVaR values across all active modes. No probing, no
    influence shaping."""

    name = "conservative"

    def _entropy_weight(self) -> float:
        return 0.0

    def plan_step(
        self,
        state: ScenarioState,
        b: HierarchicalBelief,
        rng: np.random.Generator | int,
    ) -> tuple[np.ndarray, PlanDiagnostics]:
        cfg = self.cfg
        base_key = rng if isinstance(rng, int) else derive_key(rng)
        guidance = lane_guidance(state, cfg)
        ctx = _StepContext(
            cfg=cfg, state=state, belief=b, base_key=base_key,
            guidance_yaw=guidance, ego_sigma=self._ego_sigma,
            probe_grid=None, probe_entropy=None, entropy_weight=0.0,
        )
        h_before = entropy(b, cfg.pi_weighted_entropy)

        omega_rows = joint_weights(b)
        modes = list(b.targets.targets)
        omegas = {
            (t.intent_id, t.mode_id): float(omega_rows[t.intent_id - 1][t.mode_id - 1])
            for t in modes
        }
        active_keys = [k for k, w in omegas.items() if w > cfg.mode_activation_eps]
        hedge_keys = active_keys or [max(omegas, key=omegas.get)]
        hedge_paths = [(omegas[k], ctx.paths_for(b.targets.get(*k))) for k in hedge_keys]

        if self._prev_accel is not None:
            ref_accel = np.append(self._prev_accel[1:], self._prev_accel[-1])
        else:
            ref_accel = np.zeros(cfg.horizon_steps)
        ego_xy, ego_speeds = simulate_ego_path(
            state.ego, np.column_stack((ref_accel, guidance)), cfg.dt
        )
        cvar_pre = {
            (t.intent_id, t.mode_id): cvar(
                path_costs(ego_xy, ego_speeds, ctx.paths_for(t), cfg.discount, cfg.ref_speed),
                cfg.cvar_level,
            )
            for t in modes
        }

        a_lo, a_hi = cfg.accel_bounds
        evals = 0

        def mode_cvars(accel: np.ndarray) -> list[float]:
            plan = np.column_stack((accel, guidance))
            xy, speeds = simulate_ego_path(state.ego, plan, cfg.dt)
            return [
                cvar(path_costs(xy, speeds, paths, cfg.discount, cfg.ref_speed), cfg.cvar_level)
                for _, paths in hedge_paths
            ]

        def evaluate(theta: np.ndarray) -> float:
            nonlocal evals
            evals += 1
            accel = _expand_segments(np.clip(theta, a_lo, a_hi), cfg.horizon_steps)
            values = mode_cvars(accel)
            return sum(w * v for (w, _), v in zip(hedge_paths, values))

        segments = cfg.solver_segments
        candidates = [np.zeros(segments)]
        for c in np.linspace(a_lo, a_hi, cfg.solver_inits):
            candidates.append(np.full(segments, c))
        if self._prev_accel is not None:
            candidates.append(np.clip(
                np.array([float(np.mean(c)) for c in np.array_split(ref_accel, segments)]),
                a_lo, a_hi,
            ))
        best_theta, best = None, math.inf
        for theta in candidates:
            val = evaluate(theta)
            if val < best:
                best_theta, best = theta.copy(), val
        theta, current = best_theta, best
        for _ in range(cfg.solver_iters):
            grad = np.zeros(segments)
            for m in range(segments):
                h = 0.05 if theta[m] + 0.05 <= a_hi else -0.05
                probe = theta.copy()
                probe[m] += h
                grad[m] = (evaluate(probe) - current) / h
            scale = float(np.max(np.abs(grad)))
            if scale < 1e-12:
                break
            direction = grad / scale
            step = cfg.solver_step
            improved = False
            for _ in range(3):
                trial = np.clip(theta - step * direction, a_lo, a_hi)
                val = evaluate(trial)
                if val < current - 1e-12:
                    theta, current = trial, val
                    improved = True
                    break
                step *= 0.5
            if not improved:
                break

        accel = _expand_segments(np.clip(theta, a_lo, a_hi), cfg.horizon_steps)
        u_total = np.clip(
            np.column_stack((accel, guidance)), cfg.u_min, cfg.u_max
        )
        u_first = u_total[0].copy()
        self._prev_accel = u_total[:, 0].copy()

        final_cvars = dict(zip(hedge_keys, mode_cvars(u_total[:, 0])))
        mode_diags = []
        for t in modes:
            key = (t.intent_id, t.mode_id)
            if key in final_cvars:
                mode_diags.append(
                    ModeDiag(
                        intent_id=key[0], mode_id=key[1], omega=omegas[key],
                        active=key in active_keys, cvar_pre=cvar_pre[key],
                        cvar_solution=final_cvars[key],
                        margin=cfg.risk_cap - final_cvars[key],
                        objective=current, j_probe=0.0, j_influence=0.0,
                        evals=evals, nu=u_total,
                    )
                )
            else:
                mode_diags.append(
                    ModeDiag(
                        intent_id=key[0], mode_id=key[1], omega=omegas[key],
                        active=False, cvar_pre=cvar_pre[key],
                    )
                )
        diag = PlanDiagnostics(
            entropy_before=h_before,
            expected_entropy_after=math.nan,
            modes=tuple(mode_diags),
            u_total=u_total,
            u_first=u_first,
            j_probe=0.0,
            j_influence=0.0,
            solver_evals=evals,
            blend_fallback=not active_keys,
            infeasible_any=False,
        )
        return u_first, diag


class ZeroPlanner:
    """Test stub emitting zero controls with a schema-compatible diagnostic."""

    name = "zero"

    def __init__(self, cfg):
        self.cfg = cfg

    def plan_step(self, state, b, rng):
        cfg = self.cfg
        u_total = np.zeros((cfg.horizon_steps, 2))
        omega_rows = joint_weights(b)
        mode_diags = tuple(
            ModeDiag(
                intent_id=t.intent_id, mode_id=t.mode_id,
                omega=float(omega_rows[t.intent_id - 1][t.mode_id - 1]),
                active=False, cvar_pre=math.nan,
            )
            for t in b.targets.targets
        )
        diag = PlanDiagnostics(
            entropy_before=entropy(b, cfg.pi_weighted_entropy),
            expected_entropy_after=math.nan,
            modes=mode_diags,
            u_total=u_total,
            u_first=u_total[0].copy(),
            j_probe=0.0, j_influence=0.0, solver_evals=0,
            blend_fallback=False, infeasible_any=False,
        )
        return u_total[0].copy(), diag
