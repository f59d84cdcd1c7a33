"""Numerology parameters and the comb mapping of ranging symbols onto the grid.

A numerology ``l`` has subcarrier spacing 2^l * 15 kHz and symbol duration
T = 1/spacing.  Ranging symbols occupy every ``comb_size``-th subcarrier; the
per-symbol offset staggers across symbols so that consecutive symbols cover
disjoint residue classes.  Subcarrier indices are centered on the band
(shifted by -floor(B / (2*spacing))) so index*spacing is a physical frequency.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

BASE_SCS_HZ = 15_000.0


@dataclass(frozen=True)
class NumerologyConfig:
    index_l: int
    scs_hz: float
    symbol_s: float
    n_subcarriers: int
    n_active: int


@dataclass(frozen=True)
class CombAssignment:
    """One anchor's slot on the grid: offset residue, symbol index, numerology."""

    offset_index_i: int
    symbol_index_m: int
    numerology_l: int


def numerology_params(l: int, bandwidth_hz: float, comb_size: int) -> NumerologyConfig:
    """Grid parameters of numerology ``l`` inside ``bandwidth_hz``.

    The subcarrier count is the largest multiple of ``comb_size`` that fits.
    """
    if not 0 <= l <= 6:
        raise ConfigError(f"numerology index must be in [0, 6], got {l}")
    if comb_size < 1:
        raise ConfigError(f"comb_size must be >= 1, got {comb_size}")
    scs = 2.0**l * BASE_SCS_HZ
    groups = int(np.floor(bandwidth_hz / (comb_size * scs)))
    if groups < 1:
        raise ConfigError(
            f"bandwidth {bandwidth_hz:g} Hz holds no comb group at numerology {l} "
            f"(needs >= {comb_size * scs:g} Hz)"
        )
    n_sub = comb_size * groups
    return NumerologyConfig(
        index_l=l,
        scs_hz=scs,
        symbol_s=1.0 / scs,
        n_subcarriers=n_sub,
        n_active=groups,
    )


def symbol_offset(m: int, comb_size: int) -> int:
    """Per-symbol comb stagger; always an integer despite the half-step form."""
    r = m % comb_size
    twice = r + 3 * (r % 2)  # 2*(r/2 + 1.5) for odd r, 2*(r/2) for even r
    if twice % 2 != 0:
        raise ConfigError(f"non-integer comb stagger for m={m}, comb={comb_size}")
    return twice // 2


def center_shift(l: int, bandwidth_hz: float) -> int:
    """Index shift that centers the occupied grid on 0 Hz."""
    scs = 2.0**l * BASE_SCS_HZ
    return int(np.floor(bandwidth_hz / (2.0 * scs)))


def comb_offset(m: int, i: int, l: int, bandwidth_hz: float, comb_size: int) -> int:
    """Centered subcarrier offset of symbol ``m`` for offset choice ``i``."""
    if not 0 <= i < comb_size:
        raise ConfigError(f"offset index must be in [0, {comb_size - 1}], got {i}")
    return (i + symbol_offset(m, comb_size)) % comb_size - center_shift(l, bandwidth_hz)


def prs_subcarriers(m: int, i: int, l: int, bandwidth_hz: float, comb_size: int) -> np.ndarray:
    """Centered indices of the subcarriers carrying ranging symbol ``m``.

    Distinct offsets on the same symbol occupy disjoint residue classes mod
    ``comb_size``; the union over all offsets tiles the full grid.
    """
    cfg = numerology_params(l, bandwidth_hz, comb_size)
    kappa = comb_offset(m, i, l, bandwidth_hz, comb_size)
    return comb_size * np.arange(cfg.n_active, dtype=np.int64) + kappa


def subcarrier_frequency(
    n_index: int, m: int, i: int, l: int, bandwidth_hz: float, comb_size: int
) -> float:
    """Physical frequency (Hz, band-centered) of active subcarrier ``n_index``."""
    cfg = numerology_params(l, bandwidth_hz, comb_size)
    if not 0 <= n_index < cfg.n_active:
        raise ConfigError(f"n_index must be in [0, {cfg.n_active - 1}], got {n_index}")
    kappa = comb_offset(m, i, l, bandwidth_hz, comb_size)
    return (comb_size * n_index + kappa) * cfg.scs_hz
