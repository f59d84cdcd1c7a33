"""Received PSDs and the delay-tracking ranging error variance.

The variance of a code-tracking loop driven by comb-mapped ranging symbols
reduces, after the small-discriminator expansion, to ratios of the spectral
moments in :mod:`nrpos.specfun`.  Two algebraically equivalent forms are
implemented:

  * ``ranging_variance_psd_form``   - assembles the normalized-PSD moment
    terms (numerator noise + interference moments over a squared slope term)
    exactly as the tracking-loop analysis writes them;
  * ``ranging_variance_power_form`` - factors every transmit power out of the
    moments, leaving coefficients that are affine in the interferer powers and
    inversely proportional to the own power.  This is the form the convex
    power step optimizes over.

Their agreement to ~1e-12 relative is the main correctness gate for the whole
analytic chain and is enforced by the acceptance suite.

The loop statistics produce a delay variance; it is converted to a range
variance (m^2) with the speed of light, which is the unit every downstream
consumer (position error, optimizer objective) works in.

A ``RangingModel`` caches the moment vectors/matrices per (numerology, comb
offset) key; caches are per-instance, so concurrent workers each build their
own model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization
from .numerology import NumerologyConfig, comb_offset, numerology_params, prs_subcarriers
from .scenario import Scenario
from .specfun import cross_spectral_moment_matrix, spectral_moment_vec

MOD_SYMBOL_VAR = 1.0  # unit-power normalized QAM symbols; power lives in p_j
SPEED_OF_LIGHT = 299792458.0  # delay variance -> range variance conversion


# ---------------------------------------------------------------------------
# Decision state
# ---------------------------------------------------------------------------


@dataclass
class AssignmentState:
    """All decision variables: association, numerology/offset, power, privacy, beam."""

    assoc_x: np.ndarray  # (J, K) 0/1
    numerology_u: np.ndarray  # (J, L) 0/1, row sums <= 1
    offset_v: np.ndarray  # (J, comb) 0/1, row sums <= 1
    power_w: np.ndarray  # (J,) per-subcarrier transmit power
    anchor_var_m2: np.ndarray  # (J,) total anchor location error variance
    beam_index: int = 0

    def selected_numerology(self, j: int) -> int:
        row = np.flatnonzero(self.numerology_u[j])
        return int(row[0]) if row.size else -1

    def selected_offset(self, j: int) -> int:
        row = np.flatnonzero(self.offset_v[j])
        return int(row[0]) if row.size else -1

    def numerology_vector(self) -> np.ndarray:
        return np.array([self.selected_numerology(j) for j in range(self.assoc_x.shape[0])])

    def offset_vector(self) -> np.ndarray:
        return np.array([self.selected_offset(j) for j in range(self.assoc_x.shape[0])])

    def copy(self) -> "AssignmentState":
        return AssignmentState(
            assoc_x=self.assoc_x.copy(),
            numerology_u=self.numerology_u.copy(),
            offset_v=self.offset_v.copy(),
            power_w=self.power_w.copy(),
            anchor_var_m2=self.anchor_var_m2.copy(),
            beam_index=self.beam_index,
        )

    def cache_key(self) -> tuple:
        return (
            tuple(self.numerology_vector().tolist()),
            tuple(self.offset_vector().tolist()),
            self.beam_index,
        )


def state_violations(scenario: Scenario, state: AssignmentState) -> list[str]:
    """Feasibility violations of a decision state (empty list when feasible)."""
    v: list[str] = []
    J = scenario.n_anchors
    if np.any(state.numerology_u.sum(axis=1) > 1):
        v.append("an anchor selects more than one numerology")
    if np.any(state.offset_v.sum(axis=1) > 1):
        v.append("an anchor selects more than one comb offset")
    if np.any(state.assoc_x.sum(axis=0) < 3):
        v.append("a user is associated with fewer than 3 anchors")
    for j in range(J):
        l = state.selected_numerology(j)
        if l < 0:
            continue
        cfg = numerology_params(l, scenario.bandwidth_hz, scenario.comb_size)
        if cfg.n_active * state.power_w[j] > scenario.anchors[j].p_max_w * (1 + 1e-9):
            v.append(f"anchor {j} exceeds its transmit power cap")
        if state.anchor_var_m2[j] < scenario.anchors[j].xi2_min_m2 * (1 - 1e-9):
            v.append(f"anchor {j} violates its privacy variance floor")
    return v


# ---------------------------------------------------------------------------
# Power-factored ranging coefficients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RangingCoefficients:
    """sigma^2_{j,k}(p) = (noise_num[j,k] + sum_{j'} cross_num[j,j',k] p_{j'}) / p_j."""

    noise_num: np.ndarray  # (J, K)
    cross_num: np.ndarray  # (J, J, K), zero on the j'=j diagonal

    def sigma2(self, power_w: np.ndarray) -> np.ndarray:
        num = self.noise_num + np.einsum("jpk,p->jk", self.cross_num, power_w)
        return num / power_w[:, None]


@dataclass
class RangingReport:
    sigma2: np.ndarray  # (J, K)
    coefficients: RangingCoefficients


class RangingModel:
    """Scenario-level moment caches and the sigma^2 evaluation pipeline."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.halfband = scenario.dll.frontend_bw_hz / 2.0
        self.loop_factor = scenario.dll.loop_factor
        self.noise_power_w = scenario.bandwidth_hz * scenario.noise_psd_w_per_hz
        self.numerologies: dict[int, NumerologyConfig] = {}
        for l in range(scenario.numerology_count):
            try:
                self.numerologies[l] = numerology_params(
                    l, scenario.bandwidth_hz, scenario.comb_size
                )
            except Exception:
                pass  # does not fit the band; not selectable
        self._q_cache: dict[tuple, np.ndarray] = {}
        self._c_cache: dict[tuple, np.ndarray] = {}
        self._coeff_cache: dict[tuple, RangingCoefficients] = {}
        self._habs2_cache: dict[tuple, np.ndarray] = {}
        self._channels_ref: ChannelRealization | None = None

    def _bind_channels(self, channels: ChannelRealization) -> None:
        # channel-dependent caches are valid for one realization at a time
        if channels is not self._channels_ref:
            self._habs2_cache.clear()
            self._coeff_cache.clear()
            self._channels_ref = channels

    # -- grid helpers ------------------------------------------------------

    def feasible_numerologies(self) -> list[int]:
        return sorted(self.numerologies)

    def subcarriers(self, l: int, i: int, m: int) -> np.ndarray:
        return prs_subcarriers(m, i, l, self.scenario.bandwidth_hz, self.scenario.comb_size)

    def _kappa(self, l: int, i: int, m: int) -> int:
        return comb_offset(m, i, l, self.scenario.bandwidth_hz, self.scenario.comb_size)

    def grid_index(self, l: int, centered: np.ndarray) -> np.ndarray:
        cfg = self.numerologies[l]
        shift = int(np.floor(self.scenario.bandwidth_hz / (2.0 * cfg.scs_hz)))
        return centered + shift

    def q_vector(self, l: int, i: int, m: int) -> np.ndarray:
        """Self moments of every active subcarrier of (l, i) at symbol m."""
        key = (l, self._kappa(l, i, m))
        if key not in self._q_cache:
            cfg = self.numerologies[l]
            centers = self.subcarriers(l, i, m) * cfg.scs_hz
            self._q_cache[key] = spectral_moment_vec(centers, cfg.symbol_s, self.halfband)
        return self._q_cache[key]

    def c_matrix(self, l_int: int, i_int: int, m_int: int, l_vic: int, i_vic: int, m_vic: int) -> np.ndarray:
        """Cross moments, interferer subcarriers on rows, victim on columns."""
        key = (l_int, self._kappa(l_int, i_int, m_int), l_vic, self._kappa(l_vic, i_vic, m_vic))
        if key not in self._c_cache:
            cfg_i = self.numerologies[l_int]
            cfg_v = self.numerologies[l_vic]
            rows = self.subcarriers(l_int, i_int, m_int) * cfg_i.scs_hz
            cols = self.subcarriers(l_vic, i_vic, m_vic) * cfg_v.scs_hz
            self._c_cache[key] = cross_spectral_moment_matrix(
                rows, cfg_i.symbol_s, cols, cfg_v.symbol_s, self.halfband
            )
        return self._c_cache[key]

    # -- channel-dependent pieces -------------------------------------------

    def _habs2(self, channels: ChannelRealization, l: int, beam_index: int) -> np.ndarray:
        self._bind_channels(channels)
        key = (l, beam_index)
        if key not in self._habs2_cache:
            theta = channels.codebook[beam_index]
            self._habs2_cache[key] = channels.composite_abs2(l, theta)
        return self._habs2_cache[key]

    def coefficients(
        self, channels: ChannelRealization, state: AssignmentState
    ) -> RangingCoefficients:
        """Power-factored numerators for every (anchor, user) pair.

        Depends on (U, V, beam) and the channels but not on powers, privacy
        levels, or the association, so it is memoized on that key.
        """
        self._bind_channels(channels)
        key = state.cache_key()
        if key in self._coeff_cache:
            return self._coeff_cache[key]

        J = self.scenario.n_anchors
        K = self.scenario.n_users
        l_sel = state.numerology_vector()
        i_sel = state.offset_vector()
        if np.any(l_sel < 0) or np.any(i_sel < 0):
            bad = int(np.flatnonzero((l_sel < 0) | (i_sel < 0))[0])
            raise ValueError(f"anchor {bad} has no numerology/offset selected")

        a = self.loop_factor
        noise = self.noise_power_w
        noise_num = np.zeros((J, K))
        cross_num = np.zeros((J, J, K))
        for j in range(J):
            l_v = int(l_sel[j])
            i_v = int(i_sel[j])
            cfg_v = self.numerologies[l_v]
            T_v = cfg_v.symbol_s
            window = 2**l_v
            habs_v = self._habs2(channels, l_v, state.beam_index)[j]  # (K, N)
            ownq = np.empty((window, K))
            sets_v = []
            for m in range(window):
                sub = self.grid_index(l_v, self.subcarriers(l_v, i_v, m))
                sets_v.append(sub)
                ownq[m] = habs_v[:, sub] @ self.q_vector(l_v, i_v, m)
            inv_ownq = 1.0 / ownq
            # own-noise numerator: a * B*N0 / (4 pi^2 T 2^l) * sum_m 1/ownq_m
            noise_num[j] = (
                SPEED_OF_LIGHT**2 * a * noise / (4 * np.pi**2 * T_v * window)
            ) * inv_ownq.sum(axis=0)

            for jp in range(J):
                if jp == j:
                    continue
                l_i = int(l_sel[jp])
                i_i = int(i_sel[jp])
                cfg_i = self.numerologies[l_i]
                align = max(2 ** (l_i - l_v), 1)
                habs_i = self._habs2(channels, l_i, state.beam_index)[jp]  # (K, N')
                acc = np.zeros(K)
                for m in range(window):
                    sub_v = sets_v[m]
                    hv = habs_v[:, sub_v]  # (K, Na)
                    msum = np.zeros(K)
                    for mp in range(m * align, (m + 1) * align):
                        cmat = self.c_matrix(l_i, i_i, mp, l_v, i_v, m)
                        sub_i = self.grid_index(l_i, self.subcarriers(l_i, i_i, mp))
                        msum += ((habs_i[:, sub_i] @ cmat) * hv).sum(axis=1)
                    acc += msum * inv_ownq[m] ** 2 / align
                cross_num[j, jp] = (
                    SPEED_OF_LIGHT**2 * a * cfg_i.symbol_s / (4 * np.pi**2 * T_v * window)
                ) * acc

        coeffs = RangingCoefficients(noise_num=noise_num, cross_num=cross_num)
        self._coeff_cache[key] = coeffs
        return coeffs

    def sigma2_matrix(self, channels: ChannelRealization, state: AssignmentState) -> np.ndarray:
        return self.coefficients(channels, state).sigma2(state.power_w)


# ---------------------------------------------------------------------------
# The two variance forms
# ---------------------------------------------------------------------------


def ranging_variance_power_form(
    j: int, k: int, state: AssignmentState, channels: ChannelRealization, model: RangingModel
) -> float:
    """Ranging variance via the power-factored coefficients."""
    coeffs = model.coefficients(channels, state)
    num = coeffs.noise_num[j, k] + float(coeffs.cross_num[j, :, k] @ state.power_w)
    return num / state.power_w[j]


def ranging_variance_psd_form(
    j: int, k: int, state: AssignmentState, channels: ChannelRealization, model: RangingModel
) -> float:
    """Ranging variance via the explicit normalized-PSD moment terms.

    Numerator: noise + interference moments weighted by the squared early-late
    window slope; denominator: 4 pi^2 * (received-PSD mass) * slope^2.  Kept
    deliberately close to the moment-by-moment write-up for cross-checking.
    """
    sc = model.scenario
    l_v = state.selected_numerology(j)
    i_v = state.selected_offset(j)
    if l_v < 0 or i_v < 0:
        raise ValueError(f"anchor {j} has no numerology/offset selected")
    cfg_v = model.numerologies[l_v]
    T = cfg_v.symbol_s
    D = sc.dll.early_late_spacing_chips
    p = state.power_w
    theta = channels.codebook[state.beam_index]
    habs_v = channels.composite_abs2(l_v, theta)[j, k]  # (N,)

    window = 2**l_v
    total = 0.0
    for m in range(window):
        sub_v = model.grid_index(l_v, model.subcarriers(l_v, i_v, m))
        hv = habs_v[sub_v]
        mass = float(hv.sum())
        alpha = 1.0 / (p[j] * mass)
        c_mass = np.pi * MOD_SYMBOL_VAR * p[j] * mass
        ownq = float(hv @ model.q_vector(l_v, i_v, m))
        a0 = sc.bandwidth_hz * sc.noise_psd_w_per_hz * alpha * np.pi * D**2 * T**3 * p[j] * ownq
        a2 = alpha * D * T**2 * p[j] * ownq
        a1 = 0.0
        for jp in range(sc.n_anchors):
            if jp == j:
                continue
            l_i = state.selected_numerology(jp)
            i_i = state.selected_offset(jp)
            cfg_i = model.numerologies[l_i]
            align = max(2 ** (l_i - l_v), 1)
            habs_i = channels.composite_abs2(l_i, theta)[jp, k]
            inner = 0.0
            for mp in range(m * align, (m + 1) * align):
                cmat = model.c_matrix(l_i, i_i, mp, l_v, i_v, m)
                sub_i = model.grid_index(l_i, model.subcarriers(l_i, i_i, mp))
                inner += float(habs_i[sub_i] @ cmat @ hv)
            a1 += (
                (1.0 / align)
                * cfg_i.symbol_s
                * MOD_SYMBOL_VAR
                * p[jp]
                * alpha
                * np.pi
                * D**2
                * T**3
                * p[j]
                * inner
            )
        if a2 == 0.0:
            raise ValueError("degenerate spectrum: zero discriminator slope")
        total += model.loop_factor * (a0 + a1) / (4 * np.pi**2 * c_mass * a2**2)
    return SPEED_OF_LIGHT**2 * total / window


# ---------------------------------------------------------------------------
# PSD evaluation (test/diagnostic path)
# ---------------------------------------------------------------------------


def psd_value(
    f,
    j: int,
    k: int,
    m: int,
    state: AssignmentState,
    channels: ChannelRealization,
    model: RangingModel,
    normalized: bool = False,
):
    """Received PSD from anchor ``j`` at user ``k`` on symbol ``m``.

    With ``normalized=True`` the curve is scaled to unit area over the whole
    frequency axis.
    """
    l = state.selected_numerology(j)
    i = state.selected_offset(j)
    if l < 0 or i < 0:
        raise ValueError(f"anchor {j} has no numerology/offset selected")
    cfg = model.numerologies[l]
    theta = channels.codebook[state.beam_index]
    hv = channels.composite_abs2(l, theta)[j, k]
    sub = model.subcarriers(l, i, m)
    gains = hv[model.grid_index(l, sub)]
    f = np.asarray(f, dtype=float)
    kern = np.sinc((f[..., None] - sub * cfg.scs_hz) * cfg.symbol_s) ** 2
    psd = cfg.symbol_s * MOD_SYMBOL_VAR * state.power_w[j] * (kern @ gains)
    if normalized:
        psd = psd / (MOD_SYMBOL_VAR * state.power_w[j] * gains.sum())
    return psd if psd.ndim else float(psd)


def interference_psd(
    f,
    j: int,
    k: int,
    m: int,
    state: AssignmentState,
    channels: ChannelRealization,
    model: RangingModel,
):
    """Aggregate received PSD at user ``k`` from every transmitter except ``j``."""
    l_v = state.selected_numerology(j)
    if l_v < 0:
        raise ValueError(f"anchor {j} has no numerology selected")
    f = np.asarray(f, dtype=float)
    out = np.zeros(f.shape if f.ndim else ())
    theta = channels.codebook[state.beam_index]
    for jp in range(model.scenario.n_anchors):
        if jp == j:
            continue
        l_i = state.selected_numerology(jp)
        i_i = state.selected_offset(jp)
        if l_i < 0 or i_i < 0:
            raise ValueError(f"anchor {jp} has no numerology/offset selected")
        cfg = model.numerologies[l_i]
        align = max(2 ** (l_i - l_v), 1)
        hv = channels.composite_abs2(l_i, theta)[jp, k]
        for mp in range(m * align, (m + 1) * align):
            sub = model.subcarriers(l_i, i_i, mp)
            gains = hv[model.grid_index(l_i, sub)]
            kern = np.sinc((f[..., None] - sub * cfg.scs_hz) * cfg.symbol_s) ** 2
            out = out + (1.0 / align) * cfg.symbol_s * MOD_SYMBOL_VAR * state.power_w[jp] * (
                kern @ gains
            )
    return out if np.ndim(out) else float(out)
