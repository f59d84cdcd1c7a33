"""Indoor channel model: LoS probability, pathloss, fading, and IRS beams.

Anchor-user links mix LoS and NLoS pathloss (blended in dB by the LoS
probability) with i.i.d. circularly-symmetric fading per subcarrier.  Links to
the reflecting panel are pure LoS with a deterministic planar-array response,
so the panel's contribution to a composite channel is one complex scalar per
(anchor, user, beam).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerology import center_shift, numerology_params
from .scenario import IrsPanel, Scenario


def los_probability(d2d_in_m: float, mode: str) -> float:
    """Line-of-sight probability at horizontal distance ``d2d_in_m``."""
    if d2d_in_m < 0:
        raise ValueError(f"distance must be >= 0, got {d2d_in_m}")
    d = float(d2d_in_m)
    if mode == "mixed":
        if d <= 1.2:
            p = 1.0
        elif d <= 6.5:
            p = np.exp(-(d - 1.2) / 4.7)
        else:
            p = 0.32 * np.exp(-(d - 6.5) / 32.6)
    elif mode == "open":
        if d <= 5.0:
            p = 1.0
        elif d <= 49.0:
            p = np.exp(-(d - 5.0) / 70.8)
        else:
            p = 0.54 * np.exp(-(d - 49.0) / 211.7)
    else:
        raise ValueError(f"unknown LoS mode {mode!r}")
    return float(min(1.0, max(0.0, p)))


def pathloss_db(d3d_m: float, carrier_hz: float, los: bool) -> float:
    """Indoor hotspot pathloss in dB.

    The printed constants take the carrier in GHz; carrier_hz is converted.
    NLoS is floored by the LoS value.
    """
    if d3d_m <= 0:
        raise ValueError(f"3D distance must be > 0, got {d3d_m}")
    f_ghz = carrier_hz / 1e9
    pl_los = 32.4 + 17.3 * np.log10(d3d_m) + 20.0 * np.log10(f_ghz)
    if los:
        return float(pl_los)
    pl_nlos = 17.3 + 38.3 * np.log10(d3d_m) + 24.9 * np.log10(f_ghz)
    return float(max(pl_los, pl_nlos))


def expected_pathloss_gain(d2d_in_m: float, d3d_m: float, carrier_hz: float, mode: str) -> float:
    """Linear power gain after blending LoS/NLoS pathloss in the dB domain."""
    p_los = los_probability(d2d_in_m, mode)
    pl = p_los * pathloss_db(d3d_m, carrier_hz, True) + (1.0 - p_los) * pathloss_db(
        d3d_m, carrier_hz, False
    )
    return float(10.0 ** (-pl / 10.0))


def steering_vector(azimuth: float, elevation: float, panel: IrsPanel) -> np.ndarray:
    """Planar-array response with half-wavelength spacing, unit-modulus entries.

    Flattened with the horizontal index slow and vertical fast, matching the
    Kronecker ordering of the codebook.
    """
    ph = np.pi * np.sin(azimuth) * np.cos(elevation) * np.arange(panel.elements_h)
    pv = np.pi * np.sin(elevation) * np.arange(panel.elements_v)
    return np.exp(1j * (ph[:, None] + pv[None, :])).reshape(-1)


def kronecker_codebook(panel: IrsPanel) -> np.ndarray:
    """Beam codebook of Kronecker products of horizontal/vertical DFT columns.

    Returns an (n_codewords, n_elements) array of unit-modulus coefficients.
    When the requested size exceeds the element count the DFT grids are
    oversampled; by default one codeword per element.
    """
    h, v = panel.elements_h, panel.elements_v
    n_cb = panel.codebook_size
    over = 1
    while h * over * v * over < n_cb:
        over += 1
    gh = np.exp(-2j * np.pi * np.outer(np.arange(h), np.arange(h * over)) / (h * over))
    gv = np.exp(-2j * np.pi * np.outer(np.arange(v), np.arange(v * over)) / (v * over))
    words = []
    for a in range(h * over):
        for b in range(v * over):
            words.append(np.kron(gh[:, a], gv[:, b]))
            if len(words) == n_cb:
                return np.array(words)
    return np.array(words)


@dataclass(frozen=True)
class ChannelRealization:
    """All random and geometric channel state for one Monte Carlo draw.

    ``direct[l]`` has shape (J, K, N_l) and is indexed by centered subcarrier
    index + the band-center shift of numerology ``l``.  Panel link vectors are
    frequency-flat; ``irs_cascade(theta)`` gives the composite scalar term.
    """

    direct: dict[int, np.ndarray]
    g_anchors: np.ndarray  # (J, M0) panel->anchor link
    g_users: np.ndarray  # (K, M0) panel->user link
    beta_direct: np.ndarray  # (J, K) linear pathloss gains, diagnostics
    codebook: np.ndarray  # (N_cb, M0)

    def irs_cascade(self, theta: np.ndarray) -> np.ndarray:
        """Composite panel term per (anchor, user) for beam coefficients theta."""
        if theta.shape[-1] != self.g_users.shape[1]:
            raise ValueError(
                f"beam has {theta.shape[-1]} coefficients, panel has {self.g_users.shape[1]}"
            )
        return np.einsum("km,m,jm->jk", self.g_users, theta, np.conj(self.g_anchors))

    def composite_abs2(self, l: int, theta: np.ndarray) -> np.ndarray:
        """|direct + cascade|^2 over the full grid of numerology ``l``: (J, K, N_l)."""
        casc = self.irs_cascade(theta)
        return np.abs(self.direct[l] + casc[:, :, None]) ** 2

    def state_norms(self, l_sel: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """Per-(user, anchor) channel 2-norms over each anchor's own grid."""
        casc = self.irs_cascade(theta)
        J, K = casc.shape
        out = np.empty((K, J))
        for j in range(J):
            l = int(l_sel[j])
            h = self.direct[l][j] + casc[j][:, None]
            out[:, j] = np.linalg.norm(h, axis=1)
        return out


def composite_channel(
    j: int, k: int, l: int, n_centered: int, theta: np.ndarray, realization: ChannelRealization, shift: int
) -> complex:
    """Single composite coefficient for anchor ``j``, user ``k``, subcarrier ``n``."""
    casc = realization.irs_cascade(theta)
    return complex(realization.direct[l][j, k, n_centered + shift] + casc[j, k])


def _angles_from(panel_pos: np.ndarray, node_pos: np.ndarray) -> tuple[float, float]:
    d = node_pos - panel_pos
    r = np.linalg.norm(d)
    az = float(np.arctan2(d[1], d[0]))
    el = float(np.arcsin(d[2] / r)) if r > 0 else 0.0
    return az, el


def draw_channels(scenario: Scenario, rng: np.random.Generator) -> ChannelRealization:
    """Draw one fading realization for every numerology grid of the scenario.

    Direct gains are i.i.d. CN(0, beta) per subcarrier and independent across
    numerology grids; panel links are deterministic LoS given the geometry.
    """
    apos = scenario.anchor_positions()
    upos = scenario.user_positions()
    J, K = len(apos), len(upos)

    beta = np.empty((J, K))
    for j in range(J):
        for k in range(K):
            dv = upos[k] - apos[j]
            d3 = float(np.linalg.norm(dv))
            d2 = float(np.hypot(dv[0], dv[1]))
            beta[j, k] = expected_pathloss_gain(d2, max(d3, 1e-3), scenario.carrier_hz, scenario.los_mode)

    direct: dict[int, np.ndarray] = {}
    for l in range(scenario.numerology_count):
        try:
            cfg = numerology_params(l, scenario.bandwidth_hz, scenario.comb_size)
        except Exception:
            continue  # numerology does not fit the band; never selectable
        z = rng.standard_normal((J, K, cfg.n_subcarriers, 2))
        u = (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)
        direct[l] = u * np.sqrt(beta)[:, :, None]

    ppos = np.array(scenario.irs.position_m)

    def g_vec(node: np.ndarray) -> np.ndarray:
        az, el = _angles_from(ppos, node)
        d = float(np.linalg.norm(node - ppos))
        b = 10.0 ** (-pathloss_db(max(d, 1e-3), scenario.carrier_hz, True) / 10.0)
        return steering_vector(az, el, scenario.irs) * np.sqrt(b)

    g_anchors = np.array([g_vec(p) for p in apos])
    g_users = np.array([g_vec(p) for p in upos])
    return ChannelRealization(
        direct=direct,
        g_anchors=g_anchors,
        g_users=g_users,
        beta_direct=beta,
        codebook=kronecker_codebook(scenario.irs),
    )


def grid_shift(scenario: Scenario, l: int) -> int:
    """Array offset turning a centered subcarrier index into a grid position."""
    return center_shift(l, scenario.bandwidth_hz)
