"""Monte Carlo experiment driver: ablation schemes, sweeps, CSV output.

The ablation ladder shares one random initial state per realization seed:

  BL0       random grid slots and associations, full power, minimum privacy
  BL1       BL0 + the convex power/privacy step
  BL2       BL1 + user-anchor matching
  BL3       BL2 + numerology/offset matching
  proposed  full hybrid loop (adds beam learning and outer iterations)

Because every scheme is a prefix of the next one's first iteration and the
hybrid loop tracks its best-seen state, the per-seed objectives are ordered
proposed <= BL3 <= BL2 <= BL1 <= BL0 by construction.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import time
import typing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .dqn import DqnParams
from .errors import ConfigError
from .evaluation import evaluate_state, make_realization
from .optimizer import (
    OptimizerParams,
    PowerSolverParams,
    apply_power_solve,
    hybrid_optimize,
    initial_state,
    numerology_offset_matching,
    power_caps,
    user_anchor_matching,
)
from .ranging import RangingModel
from .scenario import ScenarioConfig, config_from_dict, set_by_path

SCHEMES = ("BL0", "BL1", "BL2", "BL3", "proposed")


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    optimizer: OptimizerParams = field(default_factory=OptimizerParams)
    realizations: int = 20
    schemes: tuple[str, ...] = SCHEMES
    seed: int = 1
    sweep_param: str | None = None
    sweep_values: tuple = ()
    emit_cdf: bool = False
    workers: int = 1
    fixed_power_w: float | None = None  # skip the power step, pin per-subcarrier power


@dataclass
class MetricsRow:
    sweep: str
    scheme: str
    mean_max_err_m: float
    p50: float
    p90: float
    realizations: int
    seed: int
    per_user_err_m: list[float] = field(default_factory=list)
    wall_time_s: float = 0.0


# ---------------------------------------------------------------------------
# Strict config parsing (generic over nested dataclasses)
# ---------------------------------------------------------------------------


def _coerce(cls, data, path: str):
    if not dataclasses.is_dataclass(cls):
        return data
    if not isinstance(data, dict):
        raise ConfigError(f"{path or cls.__name__}: expected an object")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown config keys at '{path or '.'}': {', '.join(unknown)}")
    kwargs = {}
    for name in data:
        hint = hints[name]
        sub = f"{path}.{name}" if path else name
        raw = data[name]
        if dataclasses.is_dataclass(hint):
            kwargs[name] = _coerce(hint, raw, sub)
        elif typing.get_origin(hint) is tuple and isinstance(raw, list):
            kwargs[name] = tuple(raw)
        else:
            kwargs[name] = raw
    return cls(**kwargs)


def spec_from_dict(data: dict) -> ExperimentSpec:
    """Build an ExperimentSpec from a parsed experiment file.

    Layout: {"scenario": {...}, "optimizer": {...}, "experiment": {...}};
    every block is optional, unknown keys anywhere are errors.
    """
    known = {"scenario", "optimizer", "experiment"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown top-level config blocks: {', '.join(unknown)}")
    scenario = config_from_dict(data.get("scenario", {}))
    optimizer = _coerce(OptimizerParams, data.get("optimizer", {}), "optimizer")
    exp = dict(data.get("experiment", {}))
    sweep = exp.pop("sweep", None)
    sweep_param, sweep_values = None, ()
    if sweep is not None:
        extra = sorted(set(sweep) - {"param", "values"})
        if extra:
            raise ConfigError(f"unknown sweep keys: {', '.join(extra)}")
        sweep_param = sweep.get("param")
        sweep_values = tuple(sweep.get("values", ()))
        if sweep_param is None or not sweep_values:
            raise ConfigError("sweep needs both 'param' and a nonempty 'values' list")
    allowed = {"realizations", "schemes", "seed", "emit_cdf", "workers", "fixed_power_w"}
    unknown = sorted(set(exp) - allowed)
    if unknown:
        raise ConfigError(f"unknown experiment keys: {', '.join(unknown)}")
    spec = ExperimentSpec(
        scenario=scenario,
        optimizer=optimizer,
        sweep_param=sweep_param,
        sweep_values=sweep_values,
        **{k: (tuple(v) if k == "schemes" else v) for k, v in exp.items()},
    )
    if spec.realizations < 1:
        raise ConfigError("experiment.realizations must be >= 1")
    bad = [s for s in spec.schemes if s not in SCHEMES]
    if bad:
        raise ConfigError(f"unknown schemes: {', '.join(bad)} (valid: {', '.join(SCHEMES)})")
    return spec


# ---------------------------------------------------------------------------
# Per-realization scheme ladder
# ---------------------------------------------------------------------------


def run_realization(
    config: ScenarioConfig,
    optimizer: OptimizerParams,
    schemes: tuple[str, ...],
    seed: int,
    fixed_power_w: float | None = None,
) -> dict[str, dict]:
    """Evaluate the requested schemes on one shared realization and init state."""
    real = make_realization(config, seed)
    model = RangingModel(real.scenario)
    state0 = initial_state(real, model, rngmod.make_rng(seed, rngmod.STREAM_INIT))
    if fixed_power_w is not None:
        state0.power_w = np.minimum(fixed_power_w, power_caps(model, state0.numerology_vector()))

    def power_step(st):
        if fixed_power_w is None:
            apply_power_solve(real, st, model, optimizer.power)
        return st

    out: dict[str, dict] = {}

    def record(name: str, st) -> None:
        rep = evaluate_state(real, st, model)
        out[name] = {"objective": rep.objective, "phi": rep.phi.tolist()}

    need_chain = any(s in schemes for s in ("BL1", "BL2", "BL3"))
    if "BL0" in schemes:
        record("BL0", state0)
    if need_chain:
        st = power_step(state0.copy())
        if "BL1" in schemes:
            record("BL1", st)
        if "BL2" in schemes or "BL3" in schemes:
            st, _ = user_anchor_matching(real, st, model)
            if "BL2" in schemes:
                record("BL2", st)
            if "BL3" in schemes:
                st, _ = numerology_offset_matching(real, st, model)
                record("BL3", st)
    if "proposed" in schemes:
        if fixed_power_w is not None:
            # pinned power: run the loop with the power step bypassed
            sol = _hybrid_fixed_power(real, model, optimizer, state0, seed)
        else:
            sol = hybrid_optimize(
                real,
                model,
                optimizer,
                init=state0,
                agent_rng=rngmod.make_rng(seed, rngmod.STREAM_AGENT),
            )
        rep = evaluate_state(real, sol.state, model)
        out["proposed"] = {"objective": sol.objective, "phi": rep.phi.tolist()}
    return out


def _hybrid_fixed_power(real, model, optimizer: OptimizerParams, state0, seed: int):
    """Hybrid loop variant with the continuous power step disabled."""
    from .dqn import DqnAgent
    from .optimizer import HybridSolution

    sc = real.scenario
    agent = DqnAgent(
        sc.n_users * sc.n_anchors,
        sc.irs.codebook_size,
        optimizer.dqn,
        rngmod.make_rng(seed, rngmod.STREAM_AGENT),
    )
    state = state0.copy()
    best = evaluate_state(real, state, model).objective
    best_state = state.copy()
    prev = best
    history = []
    prev_transition = None
    for it in range(optimizer.max_outer):
        state, d_ua = user_anchor_matching(real, state, model)
        state, d_no = numerology_offset_matching(real, state, model)
        obj = d_no.objective_trace[-1]
        if obj < best:
            best, best_state = obj, state.copy()
        theta_prev = real.channels.codebook[state.beam_index]
        svec = real.channels.state_norms(state.numerology_vector(), theta_prev).reshape(-1)
        action = agent.select_beam(svec, explore=True)
        state.beam_index = int(action)
        obj = evaluate_state(real, state, model).objective
        if obj < best:
            best, best_state = obj, state.copy()
        reward = max(0.0, 1.0 - obj)
        if prev_transition is not None:
            ps, pa, pr = prev_transition
            agent.remember(ps, pa, pr, svec)
            agent.train_step()
        prev_transition = (svec, action, reward)
        history.append({"iteration": it, "after_beam": obj})
        if abs(prev - obj) < optimizer.tol_rel * max(prev, 1e-12):
            break
        prev = obj
    agent.end_episode()
    return HybridSolution(state=best_state, objective=best, history=history)


# ---------------------------------------------------------------------------
# Monte Carlo aggregation
# ---------------------------------------------------------------------------


def _sweep_label(value) -> str:
    return json.dumps(value) if isinstance(value, (list, tuple)) else f"{value:g}" if isinstance(value, float) else str(value)


def _one_task(args):
    raw_scenario, optimizer, schemes, seed, fixed_power = args
    config = config_from_dict(raw_scenario)
    return run_realization(config, optimizer, schemes, seed, fixed_power)


def run_monte_carlo(spec: ExperimentSpec) -> tuple[list[MetricsRow], dict]:
    """Run every (sweep value, scheme, realization) cell and aggregate.

    Returns the metric rows plus a cdf-sample dict {(sweep, scheme): [phi...]}.
    Realization ``i`` always uses the sub-seed split(seed, i), so worker count
    and ordering never change the statistics.
    """
    base_dict = dataclasses.asdict(spec.scenario)
    sweep_values = spec.sweep_values if spec.sweep_param else (None,)

    rows: list[MetricsRow] = []
    cdf: dict[tuple[str, str], list[float]] = {}
    for value in sweep_values:
        raw = json.loads(json.dumps(base_dict))  # deep copy
        label = "-" if value is None else _sweep_label(value)
        if spec.sweep_param:
            set_by_path(raw, spec.sweep_param, value)
            config_from_dict(raw)  # validate early
        seeds = [rngmod.split(spec.seed, i) for i in range(spec.realizations)]
        tasks = [(raw, spec.optimizer, spec.schemes, s, spec.fixed_power_w) for s in seeds]
        t0 = time.perf_counter()
        if spec.workers > 1:
            with ProcessPoolExecutor(max_workers=spec.workers) as pool:
                results = list(pool.map(_one_task, tasks))
        else:
            results = [_one_task(t) for t in tasks]
        wall = time.perf_counter() - t0

        for scheme in spec.schemes:
            objs = np.array([r[scheme]["objective"] for r in results])
            phis = [p for r in results for p in r[scheme]["phi"]]
            rows.append(
                MetricsRow(
                    sweep=label,
                    scheme=scheme,
                    mean_max_err_m=float(objs.mean()),
                    p50=float(np.percentile(objs, 50)),
                    p90=float(np.percentile(objs, 90)),
                    realizations=spec.realizations,
                    seed=spec.seed,
                    per_user_err_m=phis,
                    wall_time_s=wall,
                )
            )
            if spec.emit_cdf:
                cdf[(label, scheme)] = phis
    return rows, cdf


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------

CSV_HEADER = ["sweep", "scheme", "mean_max_err_m", "p50", "p90", "realizations", "seed"]


def emit_csv(rows: list[MetricsRow], path: str) -> None:
    """Write rows sorted by (sweep, scheme); header-only file for no rows."""
    ordered = sorted(rows, key=lambda r: (r.sweep, r.scheme))
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_HEADER)
            for r in ordered:
                w.writerow(
                    [
                        r.sweep,
                        r.scheme,
                        f"{r.mean_max_err_m:.10g}",
                        f"{r.p50:.10g}",
                        f"{r.p90:.10g}",
                        r.realizations,
                        r.seed,
                    ]
                )
    except OSError as exc:
        raise ConfigError(f"cannot write CSV to {path}: {exc}") from exc


def emit_cdf_csv(cdf: dict, path: str) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["sweep", "scheme", "phi_m"])
            for (label, scheme) in sorted(cdf):
                for phi in cdf[(label, scheme)]:
                    w.writerow([label, scheme, f"{phi:.10g}"])
    except OSError as exc:
        raise ConfigError(f"cannot write CDF samples to {path}: {exc}") from exc


def read_csv(path: str) -> list[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
