"""Glue layer: one Monte Carlo realization and full-state evaluation.

A realization fixes the deployment, the fading draw, and the broadcast
(noise-protected) anchor locations.  ``evaluate_state`` turns a decision state
into per-link ranging variances, per-user amplification factors and errors,
and the minimax objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .channel import ChannelRealization, draw_channels
from .positioning import geometry_factors, positioning_error
from .ranging import AssignmentState, RangingModel
from .scenario import Scenario, ScenarioConfig, generate_scenario


@dataclass(frozen=True)
class Realization:
    scenario: Scenario
    channels: ChannelRealization
    broadcast_positions: np.ndarray  # (J, 3) what users believe the anchors sit at
    seed: int


def make_realization(config: ScenarioConfig, seed: int) -> Realization:
    """Deterministically draw one deployment + channels + broadcast noise."""
    scenario = generate_scenario(config, seed)
    channels = draw_channels(scenario, rngmod.make_rng(seed, rngmod.STREAM_CHANNELS))
    bgen = rngmod.make_rng(seed, rngmod.STREAM_BROADCAST)
    bpos = scenario.anchor_positions()
    noise = bgen.standard_normal(bpos.shape)
    sig = np.sqrt([a.xi2_min_m2 for a in scenario.anchors])
    return Realization(
        scenario=scenario,
        channels=channels,
        broadcast_positions=bpos + sig[:, None] * noise,
        seed=int(seed),
    )


@dataclass
class PositioningReport:
    sigma2: np.ndarray  # (J, K) ranging variances
    lam: np.ndarray  # (J, K) amplification factors, NaN where not associated
    phi: np.ndarray  # (K,) per-user position errors
    objective: float  # max_k phi_k


def user_lambda(real: Realization, state: AssignmentState, k: int) -> np.ndarray:
    """Amplification factors of user ``k`` against its associated anchors."""
    idx = np.flatnonzero(state.assoc_x[:, k])
    gf = geometry_factors(real.scenario.users[k].position_m, real.broadcast_positions[idx])
    return gf.lam


def evaluate_state(
    real: Realization, state: AssignmentState, model: RangingModel
) -> PositioningReport:
    sc = real.scenario
    sigma2 = model.sigma2_matrix(real.channels, state)
    lam = np.full((sc.n_anchors, sc.n_users), np.nan)
    phi = np.empty(sc.n_users)
    for k in range(sc.n_users):
        idx = np.flatnonzero(state.assoc_x[:, k])
        lam_k = geometry_factors(sc.users[k].position_m, real.broadcast_positions[idx]).lam
        lam[idx, k] = lam_k
        phi[k] = positioning_error(lam_k, state.anchor_var_m2[idx] + sigma2[idx, k])
    return PositioningReport(sigma2=sigma2, lam=lam, phi=phi, objective=float(phi.max()))


def objective_value(real: Realization, state: AssignmentState, model: RangingModel) -> float:
    return evaluate_state(real, state, model).objective
