"""Deployment configuration, random scenario generation, and strict JSON parsing.

A ``ScenarioConfig`` is a plain, JSON-compatible description of one deployment;
``generate_scenario`` turns it into an immutable ``Scenario`` with concrete
node positions.  Identical (config, seed) pairs yield bit-identical scenarios.
Every config field is addressable by a dotted path (used by parameter sweeps),
and unknown keys in a config file are errors.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import rng as rngmod
from .errors import ConfigError
from .numerology import BASE_SCS_HZ

Vec3 = tuple[float, float, float]

LOS_MODES = ("mixed", "open")


# ---------------------------------------------------------------------------
# Configuration blocks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IrsConfig:
    position_m: Vec3 = (50.0, 50.0, 3.0)
    elements_h: int = 5
    elements_v: int = 5
    codebook_size: int = 25


@dataclass(frozen=True)
class DllConfig:
    early_late_spacing_chips: float = 0.02
    frontend_bw_hz: float | None = None  # None -> 2 * bandwidth
    loop_bw_hz: float = 0.2
    coherent_time_s: float = 0.02


@dataclass(frozen=True)
class PrivacyConfig:
    sensor_var_m2: float = 0.0
    dp_sensitivity_m: float = 1.0
    eps_min: float = 1.0
    delta_min: float = 0.05
    # Direct floor on the anchor error variance; when None it is derived from
    # the (eps_min, delta_min, sensitivity) noise calibration instead.
    xi2_min_m2: float | None = 0.005


@dataclass(frozen=True)
class ScenarioConfig:
    n_anchors: int = 6
    n_users: int = 9
    area_m: tuple[float, float] = (100.0, 100.0)
    bandwidth_hz: float = 4e6
    carrier_hz: float = 3.5e9
    comb_size: int = 4
    numerology_count: int = 7
    los_mode: str = "open"
    ap_position_m: Vec3 = (30.0, 30.0, 3.0)
    # non-AP anchors draw their mount height uniformly from this range; a
    # degenerate range (h, h) pins them. Coplanar anchors make the vertical
    # geometry ill-conditioned, so the default keeps some spread.
    anchor_height_range_m: tuple[float, float] = (1.0, 3.0)
    user_height_m: float = 1.5
    ap_p_max_w: float = 0.22
    anchor_p_max_w: float = 0.05
    noise_psd_w_per_hz: float = 3.1812e-20
    irs: IrsConfig = field(default_factory=IrsConfig)
    dll: DllConfig = field(default_factory=DllConfig)
    privacy: PrivacyConfig = field(default_factory=PrivacyConfig)


# ---------------------------------------------------------------------------
# Generated deployment types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Anchor:
    position_m: Vec3
    sensor_var_m2: float
    p_max_w: float
    dp_sensitivity: float
    eps_min: float
    delta_min: float
    xi2_min_m2: float
    is_ap: bool = False


@dataclass(frozen=True)
class UserNode:
    position_m: Vec3


@dataclass(frozen=True)
class IrsPanel:
    position_m: Vec3
    elements_h: int
    elements_v: int
    codebook_size: int

    @property
    def n_elements(self) -> int:
        return self.elements_h * self.elements_v


@dataclass(frozen=True)
class DllParams:
    early_late_spacing_chips: float
    frontend_bw_hz: float
    loop_bw_hz: float
    coherent_time_s: float

    @property
    def loop_factor(self) -> float:
        """B_L * (1 - 0.5 * B_L * T_coh); must be positive for a stable loop."""
        return self.loop_bw_hz * (1.0 - 0.5 * self.loop_bw_hz * self.coherent_time_s)


@dataclass(frozen=True)
class Scenario:
    """One immutable deployment; safe to share across concurrent workers."""

    anchors: tuple[Anchor, ...]
    users: tuple[UserNode, ...]
    irs: IrsPanel
    bandwidth_hz: float
    carrier_hz: float
    comb_size: int
    numerology_count: int
    dll: DllParams
    noise_psd_w_per_hz: float
    los_mode: str
    area_m: tuple[float, float]
    seed: int

    @property
    def n_anchors(self) -> int:
        return len(self.anchors)

    @property
    def n_users(self) -> int:
        return len(self.users)

    def anchor_positions(self) -> np.ndarray:
        return np.array([a.position_m for a in self.anchors], dtype=float)

    def user_positions(self) -> np.ndarray:
        return np.array([u.position_m for u in self.users], dtype=float)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def validate_config(config: ScenarioConfig) -> list[str]:
    """Return all invariant violations; an empty list means the config is usable."""
    v: list[str] = []
    if config.n_anchors < 1:
        v.append("n_anchors must be >= 1")
    if config.n_users < 1:
        v.append("n_users must be >= 1")
    if len(config.area_m) != 2 or min(config.area_m) <= 0:
        v.append("area_m must be two positive extents")
    if config.bandwidth_hz <= 0:
        v.append("bandwidth_hz must be > 0")
    if config.carrier_hz <= 0:
        v.append("carrier_hz must be > 0")
    if config.comb_size < 1:
        v.append("comb_size must be >= 1")
    if not 1 <= config.numerology_count <= 7:
        v.append("numerology_count must be in [1, 7]")
    if config.bandwidth_hz < config.comb_size * BASE_SCS_HZ:
        v.append("bandwidth_hz holds no comb group even at the base numerology")
    if config.los_mode not in LOS_MODES:
        v.append(f"los_mode must be one of {LOS_MODES}")
    if config.ap_p_max_w <= 0 or config.anchor_p_max_w <= 0:
        v.append("transmit power caps must be > 0")
    if config.noise_psd_w_per_hz <= 0:
        v.append("noise_psd_w_per_hz must be > 0")
    hr = config.anchor_height_range_m
    if len(hr) != 2 or hr[0] < 0 or hr[1] < hr[0]:
        v.append("anchor_height_range_m must be (lo, hi) with 0 <= lo <= hi")
    if config.user_height_m < 0:
        v.append("user_height_m must be >= 0")

    ax, ay = config.area_m if len(config.area_m) == 2 else (1.0, 1.0)
    for name, pos in (("ap_position_m", config.ap_position_m), ("irs.position_m", config.irs.position_m)):
        if len(pos) != 3:
            v.append(f"{name} must be a 3-vector")
        elif not (0 <= pos[0] <= ax and 0 <= pos[1] <= ay):
            v.append(f"{name} lies outside area_m")

    if config.irs.elements_h < 1 or config.irs.elements_v < 1:
        v.append("irs panel must have at least one element per axis")
    if config.irs.codebook_size < 1:
        v.append("irs.codebook_size must be >= 1")

    d = config.dll
    if d.early_late_spacing_chips <= 0:
        v.append("dll.early_late_spacing_chips must be > 0")
    if d.frontend_bw_hz is not None and d.frontend_bw_hz <= 0:
        v.append("dll.frontend_bw_hz must be > 0 when given")
    if d.loop_bw_hz <= 0 or d.coherent_time_s <= 0:
        v.append("dll loop bandwidth and coherent time must be > 0")
    elif d.loop_bw_hz * (1.0 - 0.5 * d.loop_bw_hz * d.coherent_time_s) <= 0:
        v.append("dll loop factor B_L*(1 - 0.5*B_L*T_coh) must be > 0")

    p = config.privacy
    if p.sensor_var_m2 < 0:
        v.append("privacy.sensor_var_m2 must be >= 0")
    if p.dp_sensitivity_m <= 0:
        v.append("privacy.dp_sensitivity_m must be > 0")
    if p.eps_min <= 0:
        v.append("privacy.eps_min must be > 0")
    if not 0 < p.delta_min < 0.8:
        v.append("privacy.delta_min must be in (0, 4/5): delta_min must be < 4/5")
    if p.xi2_min_m2 is not None and p.xi2_min_m2 < 0:
        v.append("privacy.xi2_min_m2 must be >= 0 when given")
    return v


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------


def generate_scenario(config: ScenarioConfig, seed: int) -> Scenario:
    """Place anchors and users uniformly at random inside the configured area.

    The access point and the reflecting panel sit at their configured, fixed
    positions; all other nodes are drawn from the placement stream of ``seed``.
    """
    violations = validate_config(config)
    if violations:
        raise ConfigError("invalid scenario config: " + "; ".join(violations))

    gen = rngmod.make_rng(seed, rngmod.STREAM_PLACEMENT)
    ax, ay = config.area_m
    anchor_xy = gen.uniform(low=(0.0, 0.0), high=(ax, ay), size=(config.n_anchors - 1, 2))
    user_xy = gen.uniform(low=(0.0, 0.0), high=(ax, ay), size=(config.n_users, 2))
    h_lo, h_hi = config.anchor_height_range_m
    anchor_z = gen.uniform(h_lo, h_hi, size=config.n_anchors - 1)

    if config.privacy.xi2_min_m2 is not None:
        xi2_min = config.privacy.xi2_min_m2
    else:
        # Minimum achievable anchor error variance under the privacy floor.
        from .positioning import min_anchor_variance_values

        xi2_min = min_anchor_variance_values(
            config.privacy.sensor_var_m2,
            config.privacy.eps_min,
            config.privacy.delta_min,
            config.privacy.dp_sensitivity_m,
        )

    def mk_anchor(pos: Vec3, p_max: float, is_ap: bool) -> Anchor:
        return Anchor(
            position_m=pos,
            sensor_var_m2=0.0 if is_ap else config.privacy.sensor_var_m2,
            p_max_w=p_max,
            dp_sensitivity=config.privacy.dp_sensitivity_m,
            eps_min=config.privacy.eps_min,
            delta_min=config.privacy.delta_min,
            xi2_min_m2=xi2_min,
            is_ap=is_ap,
        )

    anchors = [mk_anchor(tuple(map(float, config.ap_position_m)), config.ap_p_max_w, True)]
    anchors += [
        mk_anchor((float(x), float(y), float(z)), config.anchor_p_max_w, False)
        for (x, y), z in zip(anchor_xy, anchor_z)
    ]
    users = tuple(UserNode((float(x), float(y), config.user_height_m)) for x, y in user_xy)

    dll = DllParams(
        early_late_spacing_chips=config.dll.early_late_spacing_chips,
        frontend_bw_hz=(
            config.dll.frontend_bw_hz
            if config.dll.frontend_bw_hz is not None
            else 2.0 * config.bandwidth_hz
        ),
        loop_bw_hz=config.dll.loop_bw_hz,
        coherent_time_s=config.dll.coherent_time_s,
    )
    irs = IrsPanel(
        position_m=tuple(map(float, config.irs.position_m)),
        elements_h=config.irs.elements_h,
        elements_v=config.irs.elements_v,
        codebook_size=config.irs.codebook_size,
    )
    return Scenario(
        anchors=tuple(anchors),
        users=users,
        irs=irs,
        bandwidth_hz=config.bandwidth_hz,
        carrier_hz=config.carrier_hz,
        comb_size=config.comb_size,
        numerology_count=config.numerology_count,
        dll=dll,
        noise_psd_w_per_hz=config.noise_psd_w_per_hz,
        los_mode=config.los_mode,
        area_m=tuple(map(float, config.area_m)),
        seed=int(seed),
    )


# ---------------------------------------------------------------------------
# Strict dict/JSON handling with dotted-path addressing
# ---------------------------------------------------------------------------

_TUPLE_FIELDS = {"area_m", "ap_position_m", "position_m", "anchor_height_range_m"}
_NESTED_FIELDS = {"irs": IrsConfig, "dll": DllConfig, "privacy": PrivacyConfig}


def _build_dataclass(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or cls.__name__}: expected an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"unknown config keys at '{path or '.'}': {', '.join(unknown)}")
    kwargs: dict[str, Any] = {}
    for name in fields:
        if name not in data:
            continue
        raw = data[name]
        sub = f"{path}.{name}" if path else name
        if name in _NESTED_FIELDS:
            kwargs[name] = _build_dataclass(_NESTED_FIELDS[name], raw, sub)
        elif name in _TUPLE_FIELDS:
            kwargs[name] = tuple(float(x) for x in raw)
        else:
            kwargs[name] = raw
    return cls(**kwargs)


def config_from_dict(data: dict) -> ScenarioConfig:
    """Build a ScenarioConfig from a (nested) dict; unknown keys are errors."""
    return _build_dataclass(ScenarioConfig, data, "")


def config_to_dict(config: ScenarioConfig) -> dict:
    return dataclasses.asdict(config)


def load_config_file(path: str) -> dict:
    """Read a JSON experiment file into a raw dict (top-level blocks untouched)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return data


def set_by_path(data: dict, dotted: str, value: Any) -> None:
    """Assign ``value`` at a dotted path like ``scenario.irs.elements_h``."""
    keys = dotted.split(".")
    node = data
    for k in keys[:-1]:
        if not isinstance(node, dict):
            raise ConfigError(f"path '{dotted}' crosses a non-object at '{k}'")
        node = node.setdefault(k, {})
    if not isinstance(node, dict):
        raise ConfigError(f"path '{dotted}' crosses a non-object")
    node[keys[-1]] = value


def get_by_path(data: dict, dotted: str) -> Any:
    node: Any = data
    for k in dotted.split("."):
        if not isinstance(node, dict) or k not in node:
            raise ConfigError(f"path '{dotted}' not found in config")
        node = node[k]
    return node
