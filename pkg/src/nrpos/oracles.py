"""Independent brute-force oracles used by tests, acceptance, and the CLI.

Nothing here shares a computational path with the implementation it
certifies: matchings are checked by exhaustive enumeration over the same move
grammar, the convex power step against a dense log-spaced grid, closed-form
integrals against panel quadrature, pseudo-inverse factors against a direct
SVD pseudo-inverse, and backpropagation against central finite differences.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .errors import DegenerateGeometryError
from .evaluation import Realization, evaluate_state
from .numerology import numerology_params
from .ranging import AssignmentState, RangingModel
from .specfun import (
    SincKernelPair,
    cross_spectral_moment,
    cross_spectral_moment_quad,
    spectral_moment,
    spectral_moment_quad,
)

MAX_ENUM_STATES = 1_000_000


@dataclass(frozen=True)
class OracleReport:
    case_id: str
    main_value: float
    oracle_value: float
    rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.rel_error <= self.tolerance


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


# ---------------------------------------------------------------------------
# Closed form vs quadrature over randomized kernel parameters
# ---------------------------------------------------------------------------


def run_integral_validation(n_cases: int, seed: int = 0) -> list[OracleReport]:
    """Randomized equivalence cases for both spectral-moment closed forms."""
    rng = np.random.default_rng(seed)
    reports: list[OracleReport] = []
    bandwidth = 4e6
    for c in range(n_cases):
        comb = int(rng.choice([2, 4]))
        la = int(rng.integers(0, 4))
        lb = int(rng.integers(0, 4))
        cfg_a = numerology_params(la, bandwidth, comb)
        cfg_b = numerology_params(lb, bandwidth, comb)
        halfband = float(rng.uniform(1.2, 3.0)) * bandwidth / 2.0
        na = int(rng.integers(-cfg_a.n_subcarriers // 2, cfg_a.n_subcarriers // 2 + 1))
        nb = int(rng.integers(-cfg_b.n_subcarriers // 2, cfg_b.n_subcarriers // 2 + 1))

        q_main = spectral_moment(na, cfg_a, halfband)
        q_orac = spectral_moment_quad(na, cfg_a, halfband)
        reports.append(
            OracleReport(f"self[{c}] l={la} n={na} comb={comb}", q_main, q_orac, _rel(q_main, q_orac), 1e-6)
        )

        pair = SincKernelPair(
            center_a=na * cfg_a.scs_hz,
            center_b=nb * cfg_b.scs_hz,
            period_a=cfg_a.symbol_s,
            period_b=cfg_b.symbol_s,
            halfband=halfband,
        )
        c_main = cross_spectral_moment(pair)
        c_orac = cross_spectral_moment_quad(pair)
        reports.append(
            OracleReport(
                f"cross[{c}] l=({la},{lb}) n=({na},{nb}) comb={comb}",
                c_main,
                c_orac,
                _rel(c_main, c_orac),
                1e-5,
            )
        )
    return reports


# ---------------------------------------------------------------------------
# Exhaustive matching enumeration and stability certification
# ---------------------------------------------------------------------------


@dataclass
class ExhaustiveMatchingResult:
    best_objective: float
    best_assignment: tuple
    stable_set: list[tuple]
    n_states: int


def _grid_eval(real: Realization, model: RangingModel, base: AssignmentState, assign):
    """Objective and per-anchor preference values of one grid assignment."""
    cand = base.copy()
    cand.numerology_u[:] = 0
    cand.offset_v[:] = 0
    for j, (l, i) in enumerate(assign):
        cand.numerology_u[j, l] = 1
        cand.offset_v[j, i] = 1
    caps = np.array(
        [
            real.scenario.anchors[j].p_max_w / model.numerologies[l].n_active
            for j, (l, i) in enumerate(assign)
        ]
    )
    cand.power_w = np.minimum(base.power_w, caps)
    rep = evaluate_state(real, cand, model)
    prefs = []
    for j in range(real.scenario.n_anchors):
        served = np.flatnonzero(cand.assoc_x[j])
        prefs.append(float(rep.phi[served].max()) if served.size else 0.0)
    return rep.objective, prefs


def exhaustive_grid_matching(
    real: Realization, base: AssignmentState, model: RangingModel
) -> ExhaustiveMatchingResult:
    """Enumerate every (numerology, offset) assignment and certify stability.

    A state is exchange-stable when no pairwise swap or vacancy move both
    weakly improves the involved anchors and strictly lowers the worst-user
    error.  Refuses decision spaces above ``MAX_ENUM_STATES``.
    """
    sc = real.scenario
    J = sc.n_anchors
    options = [(l, i) for l in model.feasible_numerologies() for i in range(sc.comb_size)]
    n_states = len(options) ** J
    if n_states > MAX_ENUM_STATES:
        raise ValueError(f"decision space too large to enumerate: {n_states}")

    values: dict[tuple, float] = {}
    prefs: dict[tuple, list[float]] = {}
    for assign in itertools.product(options, repeat=J):
        values[assign], prefs[assign] = _grid_eval(real, model, base, assign)

    def neighbors(assign: tuple) -> Iterable[tuple[tuple, list[int]]]:
        lst = list(assign)
        for j in range(J):
            for jp in range(J):
                if jp == j or lst[j] == lst[jp]:
                    continue
                t = list(lst)
                t[j], t[jp] = t[jp], t[j]
                yield tuple(t), [j, jp]
            used = set(lst)
            for opt in options:
                if opt in used:
                    continue
                t = list(lst)
                t[j] = opt
                yield tuple(t), [j]

    stable = []
    for assign, val in values.items():
        blocked = False
        for cand, movers in neighbors(assign):
            if values[cand] < val and all(prefs[cand][j] <= prefs[assign][j] for j in movers):
                blocked = True
                break
        if not blocked:
            stable.append(assign)

    best = min(values, key=values.get)
    return ExhaustiveMatchingResult(
        best_objective=values[best],
        best_assignment=best,
        stable_set=stable,
        n_states=n_states,
    )


@dataclass
class ExhaustiveAssociationResult:
    best_objective: float
    best_assoc: np.ndarray
    stable_set: list[bytes]
    n_states: int


def _assoc_metrics(real, model, base, assoc, sigma2):
    xi = base.anchor_var_m2
    sc = real.scenario
    K = sc.n_users
    phi = np.empty(K)
    lam_by_user = []
    from .positioning import geometry_factors, positioning_error

    for k in range(K):
        idx = np.flatnonzero(assoc[:, k])
        lam = geometry_factors(sc.users[k].position_m, real.broadcast_positions[idx]).lam
        lam_by_user.append((idx, lam))
        phi[k] = positioning_error(lam, xi[idx] + sigma2[idx, k])
    return phi, lam_by_user


def exhaustive_association(
    real: Realization, base: AssignmentState, model: RangingModel
) -> ExhaustiveAssociationResult:
    """Enumerate every association with >= 3 anchors per user; certify stability."""
    sc = real.scenario
    J, K = sc.n_anchors, sc.n_users
    cols = [c for c in itertools.product([0, 1], repeat=J) if sum(c) >= 3]
    n_states = len(cols) ** K
    if n_states > MAX_ENUM_STATES:
        raise ValueError(f"decision space too large to enumerate: {n_states}")
    sigma2 = model.sigma2_matrix(real.channels, base)

    from .positioning import geometry_factors

    def evaluate(assoc):
        try:
            phi, lam_by_user = _assoc_metrics(real, model, base, assoc, sigma2)
        except DegenerateGeometryError:
            return None
        user_pref = np.empty(K)
        anchor_pref = np.empty(J)
        for k in range(K):
            idx, lam = lam_by_user[k]
            user_pref[k] = float(np.sum(lam * np.sqrt(sigma2[idx, k])))
        for j in range(J):
            srv = np.flatnonzero(assoc[j])
            anchor_pref[j] = float(phi[srv].max()) if srv.size else 0.0
        return float(phi.max()), user_pref, anchor_pref

    values: dict[bytes, tuple] = {}
    arrays: dict[bytes, np.ndarray] = {}
    for combo in itertools.product(cols, repeat=K):
        assoc = np.array(combo, dtype=np.int8).T.copy()
        res = evaluate(assoc)
        if res is None:
            continue
        key = assoc.tobytes()
        values[key] = res
        arrays[key] = assoc

    def neighbors(assoc: np.ndarray):
        # same grammar as the matcher: swap, relocate, drop, add
        for j in range(J):
            for k in np.flatnonzero(assoc[j]):
                k = int(k)
                for jp in range(J):
                    if jp == j:
                        continue
                    for kp in np.flatnonzero(assoc[jp]):
                        kp = int(kp)
                        if kp == k or assoc[j, kp] or assoc[jp, k]:
                            continue
                        cand = assoc.copy()
                        cand[j, k] = cand[jp, kp] = 0
                        cand[j, kp] = cand[jp, k] = 1
                        yield cand, [k, kp], [j, jp]
                for jp in range(J):
                    if jp != j and not assoc[jp, k]:
                        cand = assoc.copy()
                        cand[j, k] = 0
                        cand[jp, k] = 1
                        yield cand, [k], [j, jp]
                if assoc[:, k].sum() > 3:
                    cand = assoc.copy()
                    cand[j, k] = 0
                    yield cand, [k], [j]
            for k in np.flatnonzero(assoc[j] == 0):
                cand = assoc.copy()
                cand[j, int(k)] = 1
                yield cand, [int(k)], [j]

    stable = []
    for key, (val, upref, apref) in values.items():
        assoc = arrays[key]
        blocked = False
        for cand, users, anchors in neighbors(assoc):
            ckey = cand.tobytes()
            if ckey not in values:
                continue
            cval, cupref, capref = values[ckey]
            if (
                cval < val
                and all(cupref[k] <= upref[k] for k in users)
                and all(capref[j] <= apref[j] for j in anchors)
            ):
                blocked = True
                break
        if not blocked:
            stable.append(key)

    best = min(values, key=lambda k: values[k][0])
    return ExhaustiveAssociationResult(
        best_objective=values[best][0],
        best_assoc=arrays[best],
        stable_set=stable,
        n_states=n_states,
    )


# ---------------------------------------------------------------------------
# Grid search for the convex power step
# ---------------------------------------------------------------------------


def grid_power_objective(
    real: Realization, state: AssignmentState, model: RangingModel, power_w: np.ndarray
) -> float:
    """Worst squared user error at a fixed power vector (privacy at its floor)."""
    from .positioning import geometry_factors

    sc = real.scenario
    coeffs = model.coefficients(real.channels, state)
    sigma2 = coeffs.sigma2(power_w)
    xi = np.array([a.xi2_min_m2 for a in sc.anchors])
    worst = 0.0
    for k in range(sc.n_users):
        idx = np.flatnonzero(state.assoc_x[:, k])
        lam = geometry_factors(sc.users[k].position_m, real.broadcast_positions[idx]).lam
        worst = max(worst, float(np.sum(lam**2 * (xi[idx] + sigma2[idx, k]))))
    return worst


def grid_power_solver(
    real: Realization,
    state: AssignmentState,
    model: RangingModel,
    grid_n: int,
    floor_w: float = 1e-12,
) -> tuple[float, np.ndarray]:
    """Dense log-spaced search over per-anchor powers (J <= 2 only)."""
    from .optimizer import power_caps

    J = real.scenario.n_anchors
    if J > 2:
        raise ValueError("grid power search is limited to J <= 2")
    caps = power_caps(model, state.numerology_vector())
    axes = [np.geomspace(max(floor_w, 1e-9 * caps[j]), caps[j], grid_n) for j in range(J)]
    best_val = np.inf
    best_p = None
    for combo in itertools.product(*axes):
        p = np.array(combo)
        val = grid_power_objective(real, state, model, p)
        if val < best_val:
            best_val = val
            best_p = p
    return float(best_val), best_p


# ---------------------------------------------------------------------------
# Dense pseudo-inverse and finite-difference gradients
# ---------------------------------------------------------------------------


def lambda_pinv_oracle(user_pos, anchor_positions) -> np.ndarray:
    """Amplification factors via a direct SVD pseudo-inverse."""
    anchors = np.asarray(anchor_positions, dtype=float)
    user = np.asarray(user_pos, dtype=float)
    diff = user[None, :] - anchors
    g = diff / np.linalg.norm(diff, axis=1)[:, None]
    return np.linalg.norm(np.linalg.pinv(g), axis=0)


def finite_diff_gradient(
    get_flat: Callable[[], np.ndarray],
    set_flat: Callable[[np.ndarray], None],
    loss: Callable[[], float],
    h: float = 1e-5,
) -> np.ndarray:
    """Central-difference gradient of ``loss`` w.r.t. the flattened parameters.

    ``h`` must lie in [1e-6, 1e-3]; larger steps are out of contract for the
    1e-4 relative agreement this oracle certifies.
    """
    if not 1e-6 <= h <= 1e-3:
        raise ValueError(f"step h={h:g} outside the supported range [1e-6, 1e-3]")
    theta = get_flat().copy()
    grad = np.empty_like(theta)
    for i in range(theta.size):
        orig = theta[i]
        theta[i] = orig + h
        set_flat(theta)
        up = loss()
        theta[i] = orig - h
        set_flat(theta)
        down = loss()
        theta[i] = orig
        grad[i] = (up - down) / (2 * h)
    set_flat(theta)
    return grad
