"""Geometry dilution factors, per-user position error, and privacy calibration.

Users form unit direction rows toward the anchor positions they were told
(the broadcast, noise-protected ones); the least-squares pseudo-inverse of
that matrix converts per-anchor range variances into a position error, with
the column norms acting as per-anchor amplification factors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError

_COND_LIMIT = 1e8


@dataclass(frozen=True)
class GeometryFactors:
    g_check: np.ndarray  # (n_anchors, 3) unit direction rows
    g_pinv: np.ndarray  # (3, n_anchors) least-squares inverse
    lam: np.ndarray  # (n_anchors,) column norms of g_pinv


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float
    delta: float
    sensitivity: float
    noise_var_m2: float


def geometry_factors(user_pos: np.ndarray, anchor_positions: np.ndarray) -> GeometryFactors:
    """Direction matrix, pseudo-inverse, and amplification factors for one user.

    ``anchor_positions`` are the broadcast (noisy) locations of the anchors the
    user ranges against; at least 3 are required and they must not be
    (near-)collinear.
    """
    anchors = np.asarray(anchor_positions, dtype=float)
    user = np.asarray(user_pos, dtype=float)
    if anchors.ndim != 2 or anchors.shape[1] != 3 or anchors.shape[0] < 3:
        raise ValueError("need at least 3 anchor positions of dimension 3")
    diff = user[None, :] - anchors
    dist = np.linalg.norm(diff, axis=1)
    if np.any(dist <= 0):
        raise DegenerateGeometryError("a ranging anchor coincides with the user")
    g_check = diff / dist[:, None]
    gram = g_check.T @ g_check
    if np.linalg.cond(gram) > _COND_LIMIT:
        raise DegenerateGeometryError(
            f"anchor geometry is degenerate (cond > {_COND_LIMIT:g}); "
            "anchors are collinear or nearly so"
        )
    g_pinv = np.linalg.solve(gram, g_check.T)
    lam = np.linalg.norm(g_pinv, axis=0)
    return GeometryFactors(g_check=g_check, g_pinv=g_pinv, lam=lam)


def positioning_error(lam: np.ndarray, total_var_m2: np.ndarray) -> float:
    """Root of the amplified per-anchor variances: sqrt(sum lam^2 * var)."""
    lam = np.asarray(lam, dtype=float)
    var = np.asarray(total_var_m2, dtype=float)
    if lam.shape != var.shape:
        raise ValueError(f"length mismatch: {lam.shape} vs {var.shape}")
    return float(np.sqrt(np.sum(lam**2 * var)))


def dp_noise_variance(epsilon: float, delta: float, sensitivity: float) -> float:
    """Gaussian noise variance meeting the (epsilon, delta) privacy bound at equality."""
    if epsilon <= 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    if not 0 < delta < 0.8:
        raise ValueError(f"delta must be in (0, 4/5), got {delta}")
    if sensitivity <= 0:
        raise ValueError(f"sensitivity must be > 0, got {sensitivity}")
    return float(-2.0 * sensitivity**2 / epsilon**2 * np.log(5.0 * delta / 4.0))


def min_anchor_variance_values(
    sensor_var_m2: float, eps_min: float, delta_min: float, sensitivity: float
) -> float:
    """Smallest total anchor error variance compatible with the privacy floor."""
    if sensitivity == 0.0:
        return float(sensor_var_m2)
    return float(sensor_var_m2 + dp_noise_variance(eps_min, delta_min, sensitivity))


def min_anchor_variance(anchor) -> float:
    """Per-anchor variance floor; honors a configured direct override."""
    if getattr(anchor, "xi2_min_m2", None) is not None:
        return float(anchor.xi2_min_m2)
    return min_anchor_variance_values(
        anchor.sensor_var_m2, anchor.eps_min, anchor.delta_min, anchor.dp_sensitivity
    )


def perturb_location(position, noise_var_m2: float, rng: np.random.Generator) -> np.ndarray:
    """Broadcast-ready location: truth plus isotropic per-axis Gaussian noise."""
    if noise_var_m2 < 0:
        raise ValueError(f"noise variance must be >= 0, got {noise_var_m2}")
    pos = np.asarray(position, dtype=float)
    if noise_var_m2 == 0.0:
        return pos.copy()
    return pos + rng.normal(0.0, np.sqrt(noise_var_m2), size=pos.shape)
