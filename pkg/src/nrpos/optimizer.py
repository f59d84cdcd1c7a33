"""Minimax decision optimization: convex power step, matchings, hybrid loop.

Four subroutines are alternated until the worst-user position error stops
improving:

  1. ``solve_power_privacy``        - continuous (power, privacy level) step;
     convex after the log-power substitution, solved by a damped projected
     Newton method on a log-sum-exp smoothed maximum with decreasing
     smoothing.
  2. ``user_anchor_matching``       - many-to-many association via swap /
     relocate / add / drop moves.
  3. ``numerology_offset_matching`` - many-to-one grid selection via swap and
     vacancy moves.
  4. a DQN agent picking the reflecting-surface beam from the codebook.

Matching moves are executed only when every involved party weakly improves
and the global worst-user error strictly decreases.  The strict global
descent makes termination a consequence of a strictly decreasing bounded
objective (no cycling), and is what the stability certificates in
:mod:`nrpos.oracles` check.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dqn import DqnAgent, DqnParams
from .errors import DegenerateGeometryError, InfeasibleError
from .evaluation import PositioningReport, Realization, evaluate_state
from .positioning import geometry_factors, positioning_error
from .ranging import AssignmentState, RangingModel


# Associations whose direction matrix is conditioned worse than this are not
# admitted by the initializer or the association matcher.  The hard error
# threshold in geometry_factors is far looser (1e8); this cap just keeps the
# search away from geometries whose amplification factors are meaninglessly
# large.
ASSOC_COND_LIMIT = 3e4


@dataclass(frozen=True)
class PowerSolverParams:
    kkt_tol: float = 1e-6
    max_newton_iter: int = 100
    power_floor_w: float = 1e-12


@dataclass(frozen=True)
class OptimizerParams:
    tol_rel: float = 1e-4
    max_outer: int = 50
    power: PowerSolverParams = field(default_factory=PowerSolverParams)
    dqn: DqnParams = field(default_factory=DqnParams)


# ---------------------------------------------------------------------------
# Initial feasible state
# ---------------------------------------------------------------------------


def power_caps(model: RangingModel, l_sel: np.ndarray) -> np.ndarray:
    """Per-subcarrier power cap of each anchor under its selected numerology."""
    sc = model.scenario
    return np.array(
        [sc.anchors[j].p_max_w / model.numerologies[int(l_sel[j])].n_active for j in range(sc.n_anchors)]
    )


def initial_state(real: Realization, model: RangingModel, rng: np.random.Generator) -> AssignmentState:
    """Random feasible starting point: random grid slots and associations,
    full transmit power, minimum privacy protection."""
    sc = real.scenario
    J, K = sc.n_anchors, sc.n_users
    if J < 3:
        raise InfeasibleError("at least 3 anchors are required for 3D ranging")
    options_l = model.feasible_numerologies()
    L = sc.numerology_count
    comb = sc.comb_size

    u = np.zeros((J, L), dtype=np.int8)
    v = np.zeros((J, comb), dtype=np.int8)
    for j in range(J):
        u[j, options_l[int(rng.integers(len(options_l)))]] = 1
        v[j, int(rng.integers(comb))] = 1

    x = np.zeros((J, K), dtype=np.int8)
    for k in range(K):
        for _ in range(64):
            sel = np.flatnonzero(rng.random(J) < 0.5)
            while sel.size < 3:
                extra = int(rng.integers(J))
                if extra not in sel:
                    sel = np.append(sel, extra)
            try:
                geometry_factors(sc.users[k].position_m, real.broadcast_positions[np.sort(sel)])
            except DegenerateGeometryError:
                continue
            x[np.sort(sel), k] = 1
            break
        else:
            raise InfeasibleError(f"no non-degenerate anchor subset found for user {k}")

    state = AssignmentState(
        assoc_x=x,
        numerology_u=u,
        offset_v=v,
        power_w=np.zeros(J),
        anchor_var_m2=np.array([a.xi2_min_m2 for a in sc.anchors]),
        beam_index=int(rng.integers(sc.irs.codebook_size)),
    )
    state.power_w = power_caps(model, state.numerology_vector())
    return state


# ---------------------------------------------------------------------------
# Convex power / privacy subproblem
# ---------------------------------------------------------------------------


@dataclass
class PowerSolveResult:
    power_w: np.ndarray
    anchor_var_m2: np.ndarray
    objective: float  # minimized epigraph value: worst squared user error
    kkt_residual: float
    iterations: int


def _exp_terms(real: Realization, state: AssignmentState, model: RangingModel):
    """Coefficients of the per-user convex objectives in the log-power domain.

    Each user's squared error is  const_k + sum_t c_t exp(a_t . ptilde)  with
    a_t carrying -1 on the serving anchor and optionally +1 on an interferer.
    Returns (const (K,), coef (T,), expo (T, J), owner (T,)).
    """
    sc = real.scenario
    J, K = sc.n_anchors, sc.n_users
    coeffs = model.coefficients(real.channels, state)
    xi_min = np.array([a.xi2_min_m2 for a in sc.anchors])

    const = np.zeros(K)
    coef, expo, owner = [], [], []
    for k in range(K):
        idx = np.flatnonzero(state.assoc_x[:, k])
        lam = geometry_factors(sc.users[k].position_m, real.broadcast_positions[idx]).lam
        lam2 = lam**2
        const[k] = float(lam2 @ xi_min[idx])
        for pos, j in enumerate(idx):
            a_own = np.zeros(J)
            a_own[j] = -1.0
            coef.append(lam2[pos] * coeffs.noise_num[j, k])
            expo.append(a_own)
            owner.append(k)
            for jp in range(J):
                if jp == j:
                    continue
                c = lam2[pos] * coeffs.cross_num[j, jp, k]
                if c == 0.0:
                    continue
                a_cross = np.zeros(J)
                a_cross[j] = -1.0
                a_cross[jp] = 1.0
                coef.append(c)
                expo.append(a_cross)
                owner.append(k)
    return const, np.array(coef), np.array(expo), np.array(owner, dtype=int)


def solve_power_privacy(
    real: Realization,
    state: AssignmentState,
    model: RangingModel,
    params: PowerSolverParams | None = None,
) -> PowerSolveResult:
    """Minimize the worst squared user error over transmit powers and privacy.

    The anchor error variance enters every user objective with a positive
    weight, so its optimum sits on the privacy floor and is fixed there
    analytically; the remaining problem in log powers is smooth and convex and
    is solved to the configured KKT tolerance.
    """
    params = params or PowerSolverParams()
    sc = real.scenario
    J = sc.n_anchors
    const, coef, expo, owner = _exp_terms(real, state, model)
    K = const.size

    caps = power_caps(model, state.numerology_vector())
    if np.any(caps <= params.power_floor_w):
        raise InfeasibleError("a power cap sits at or below the power floor")
    ub = np.log(caps)
    lb = np.full(J, np.log(params.power_floor_w))

    def g_all(pt: np.ndarray) -> np.ndarray:
        vals = coef * np.exp(expo @ pt)
        return const + np.bincount(owner, weights=vals, minlength=K)

    def smoothed(pt: np.ndarray, tau: float):
        g = g_all(pt)
        z = (g - g.max()) / tau
        w = np.exp(z)
        sw = w.sum()
        f = g.max() + tau * np.log(sw)
        w = w / sw
        vals = coef * np.exp(expo @ pt)
        wt = w[owner] * vals
        grad = expo.T @ wt
        per_user_grad = np.zeros((K, J))
        np.add.at(per_user_grad, owner, vals[:, None] * expo)
        hess = expo.T @ (wt[:, None] * expo)
        hess += (per_user_grad.T * w) @ per_user_grad / tau
        hess -= np.outer(grad, grad) / tau
        return f, grad, hess

    pt = np.minimum(ub, np.log(np.maximum(state.power_w, params.power_floor_w)))
    pt = np.maximum(pt, lb)
    scale = max(float(np.max(np.abs(g_all(pt)))), 1e-30)
    tau_seq = [scale * 10.0**e for e in range(-2, -9, -1)]
    total_iter = 0
    for tau in tau_seq:
        for _ in range(params.max_newton_iter):
            f, grad, hess = smoothed(pt, tau)
            at_ub = (pt >= ub - 1e-12) & (grad < 0)
            at_lb = (pt <= lb + 1e-12) & (grad > 0)
            free = ~(at_ub | at_lb)
            pg = np.where(free, grad, 0.0)
            if np.max(np.abs(pg)) <= max(1e-3 * tau, 1e-14 * scale):
                break
            idx = np.flatnonzero(free)
            h = hess[np.ix_(idx, idx)]
            h = h + (1e-12 * max(np.trace(h) / max(len(idx), 1), 1e-30)) * np.eye(len(idx))
            try:
                step = np.linalg.solve(h, grad[idx])
            except np.linalg.LinAlgError:
                step = grad[idx] / max(np.max(np.abs(np.diag(h))), 1e-30)
            # damped backtracking line search
            t = 1.0
            for _ in range(60):
                cand = pt.copy()
                cand[idx] = pt[idx] - t * step
                cand = np.clip(cand, lb, ub)
                fc, _, _ = smoothed(cand, tau)
                if fc <= f - 1e-4 * t * float(grad[idx] @ step):
                    pt = cand
                    break
                t *= 0.5
            else:
                break
            total_iter += 1

    # KKT residual of the epigraph form, relative to the objective scale
    g = g_all(pt)
    eps_obj = float(g.max())
    tau_f = tau_seq[-1]
    z = (g - eps_obj) / tau_f
    w = np.exp(z)
    w /= w.sum()
    vals = coef * np.exp(expo @ pt)
    grad = expo.T @ (w[owner] * vals)
    stat = np.empty(J)
    for j in range(J):
        if pt[j] >= ub[j] - 1e-12:
            stat[j] = max(0.0, grad[j])  # cap dual must push down
        elif pt[j] <= lb[j] + 1e-12:
            stat[j] = max(0.0, -grad[j])
        else:
            stat[j] = abs(grad[j])
    cs = float(np.max(w * np.abs(g - eps_obj)))
    denom = max(abs(eps_obj), 1e-30)
    kkt = max(float(stat.max()), cs) / denom

    return PowerSolveResult(
        power_w=np.exp(pt),
        anchor_var_m2=np.array([a.xi2_min_m2 for a in sc.anchors]),
        objective=eps_obj,
        kkt_residual=float(kkt),
        iterations=total_iter,
    )


def apply_power_solve(
    real: Realization, state: AssignmentState, model: RangingModel, params: PowerSolverParams
) -> PowerSolveResult:
    res = solve_power_privacy(real, state, model, params)
    state.power_w = res.power_w
    state.anchor_var_m2 = res.anchor_var_m2
    return res


# ---------------------------------------------------------------------------
# Preference values
# ---------------------------------------------------------------------------


def preference_values(
    real: Realization, state: AssignmentState, model: RangingModel, side: str, j: int | None = None, k: int | None = None
) -> float:
    """Preference value (lower is better) of one matching party.

    side 'anchor': worst error among the users anchor ``j`` serves (0 when it
    serves none); side 'option' or 'global': worst error over all users;
    side 'user': sum of amplification-weighted ranging deviations of user
    ``k``'s links.
    """
    report = evaluate_state(real, state, model)
    if side in ("option", "global"):
        return report.objective
    if side == "anchor":
        served = np.flatnonzero(state.assoc_x[j])
        return float(report.phi[served].max()) if served.size else 0.0
    if side == "user":
        idx = np.flatnonzero(state.assoc_x[:, k])
        lam = report.lam[idx, k]
        return float(np.sum(lam * np.sqrt(report.sigma2[idx, k])))
    raise ValueError(f"unknown side {side!r}")


# ---------------------------------------------------------------------------
# Numerology / offset matching (many-to-one with externalities)
# ---------------------------------------------------------------------------


@dataclass
class MatchingDiagnostics:
    swaps: int = 0
    objective_trace: list[float] = field(default_factory=list)


def _anchor_pref(phi: np.ndarray, assoc: np.ndarray, j: int) -> float:
    served = np.flatnonzero(assoc[j])
    return float(phi[served].max()) if served.size else 0.0


def _clamped_power(model: RangingModel, state: AssignmentState) -> np.ndarray:
    # keep per-subcarrier powers feasible when a numerology change shrank the cap
    return np.minimum(state.power_w, power_caps(model, state.numerology_vector()))


def numerology_offset_matching(
    real: Realization, state: AssignmentState, model: RangingModel
) -> tuple[AssignmentState, MatchingDiagnostics]:
    """Exchange-stable selection of one (numerology, comb offset) per anchor.

    Scan order: anchors ascending; pairwise swaps with partners ascending,
    then moves to vacant options in ascending (l, i) order.  A move executes
    only if the involved anchors weakly improve and the worst-user error
    strictly decreases; each executed move therefore strictly lowers the
    bounded objective, which guarantees termination.
    """
    sc = real.scenario
    J = sc.n_anchors
    options = [(l, i) for l in model.feasible_numerologies() for i in range(sc.comb_size)]
    diag = MatchingDiagnostics()

    cur = state.copy()
    cur.power_w = _clamped_power(model, cur)
    report = evaluate_state(real, cur, model)
    diag.objective_trace.append(report.objective)

    def build(assign: list[tuple[int, int]], base: AssignmentState) -> AssignmentState:
        cand = base.copy()
        cand.numerology_u[:] = 0
        cand.offset_v[:] = 0
        for jj, (l, i) in enumerate(assign):
            cand.numerology_u[jj, l] = 1
            cand.offset_v[jj, i] = 1
        cand.power_w = _clamped_power(model, cand)
        return cand

    assign = [(cur.selected_numerology(j), cur.selected_offset(j)) for j in range(J)]

    improved = True
    while improved:
        improved = False
        for j in range(J):
            executed = False
            # pairwise swaps, partners ascending
            for jp in range(J):
                if jp == j or assign[jp] == assign[j]:
                    continue
                trial = list(assign)
                trial[j], trial[jp] = trial[jp], trial[j]
                cand = build(trial, cur)
                try:
                    rep_new = evaluate_state(real, cand, model)
                except DegenerateGeometryError:
                    continue
                ok = (
                    rep_new.objective < report.objective
                    and _anchor_pref(rep_new.phi, cand.assoc_x, j) <= _anchor_pref(report.phi, cur.assoc_x, j)
                    and _anchor_pref(rep_new.phi, cand.assoc_x, jp) <= _anchor_pref(report.phi, cur.assoc_x, jp)
                )
                if ok:
                    assign = trial
                    cur, report = cand, rep_new
                    diag.swaps += 1
                    diag.objective_trace.append(report.objective)
                    executed = True
                    break
            if executed:
                improved = True
                continue
            # vacancy moves, options ascending
            used = set(assign)
            for opt in options:
                if opt in used or opt == assign[j]:
                    continue
                trial = list(assign)
                trial[j] = opt
                cand = build(trial, cur)
                try:
                    rep_new = evaluate_state(real, cand, model)
                except DegenerateGeometryError:
                    continue
                ok = (
                    rep_new.objective < report.objective
                    and _anchor_pref(rep_new.phi, cand.assoc_x, j) <= _anchor_pref(report.phi, cur.assoc_x, j)
                )
                if ok:
                    assign = trial
                    cur, report = cand, rep_new
                    diag.swaps += 1
                    diag.objective_trace.append(report.objective)
                    improved = True
                    break
    return cur, diag


# ---------------------------------------------------------------------------
# User-anchor matching (many-to-many with externalities)
# ---------------------------------------------------------------------------


def user_anchor_matching(
    real: Realization, state: AssignmentState, model: RangingModel
) -> tuple[AssignmentState, MatchingDiagnostics]:
    """Exchange-stable user-anchor association.

    Move set: pairwise swaps of two links, relocation of one link to a vacant
    anchor, dropping a link (keeping at least 3 per user), and adding one.
    Acceptance needs weak improvement of every involved party and a strict
    decrease of the worst-user error.  Ranging variances do not depend on the
    association, so they are computed once per call.
    """
    sc = real.scenario
    J, K = sc.n_anchors, sc.n_users
    diag = MatchingDiagnostics()

    cur = state.copy()
    sigma2 = model.sigma2_matrix(real.channels, cur)
    xi = cur.anchor_var_m2

    def phi_of(assoc: np.ndarray, k: int) -> tuple[float, np.ndarray]:
        idx = np.flatnonzero(assoc[:, k])
        lam = geometry_factors(sc.users[k].position_m, real.broadcast_positions[idx]).lam
        return positioning_error(lam, xi[idx] + sigma2[idx, k]), lam

    def user_pref(assoc: np.ndarray, k: int, lam: np.ndarray) -> float:
        idx = np.flatnonzero(assoc[:, k])
        return float(np.sum(lam * np.sqrt(sigma2[idx, k])))

    phi = np.empty(K)
    lam_cache: list[np.ndarray] = [None] * K  # type: ignore[list-item]
    for k in range(K):
        phi[k], lam_cache[k] = phi_of(cur.assoc_x, k)
    diag.objective_trace.append(float(phi.max()))

    def try_move(new_assoc: np.ndarray, users: list[int], anchors: list[int]) -> bool:
        nonlocal phi, lam_cache
        for k in set(users):
            if new_assoc[:, k].sum() < 3:
                return False
        new_phi = phi.copy()
        new_lam = {k: None for k in set(users)}
        try:
            for k in set(users):
                new_phi[k], new_lam[k] = phi_of(new_assoc, k)
        except DegenerateGeometryError:
            return False
        if not new_phi.max() < phi.max():
            return False
        for k in set(users):
            if not user_pref(new_assoc, k, new_lam[k]) <= user_pref(cur.assoc_x, k, lam_cache[k]):
                return False
        for j in set(anchors):
            old = float(phi[np.flatnonzero(cur.assoc_x[j])].max()) if cur.assoc_x[j].any() else 0.0
            srv = np.flatnonzero(new_assoc[j])
            new = float(new_phi[srv].max()) if srv.size else 0.0
            if not new <= old:
                return False
        cur.assoc_x = new_assoc
        phi = new_phi
        for k in set(users):
            lam_cache[k] = new_lam[k]
        diag.swaps += 1
        diag.objective_trace.append(float(phi.max()))
        return True

    improved = True
    while improved:
        improved = False
        for j in range(J):
            executed = False
            links_j = list(np.flatnonzero(cur.assoc_x[j]))
            # pairwise swaps (j,k) <-> (j',k')
            for k in links_j:
                for jp in range(J):
                    if jp == j:
                        continue
                    for kp in np.flatnonzero(cur.assoc_x[jp]):
                        kp = int(kp)
                        if kp == k or cur.assoc_x[j, kp] or cur.assoc_x[jp, k]:
                            continue
                        cand = cur.assoc_x.copy()
                        cand[j, k] = 0
                        cand[jp, kp] = 0
                        cand[j, kp] = 1
                        cand[jp, k] = 1
                        if try_move(cand, [k, kp], [j, jp]):
                            executed = True
                            break
                    if executed:
                        break
                if executed:
                    break
            if not executed:
                # relocate (j,k) -> (j',k)
                for k in links_j:
                    for jp in range(J):
                        if jp == j or cur.assoc_x[jp, k]:
                            continue
                        cand = cur.assoc_x.copy()
                        cand[j, k] = 0
                        cand[jp, k] = 1
                        if try_move(cand, [k], [j, jp]):
                            executed = True
                            break
                    if executed:
                        break
            if not executed:
                # drop (j,k)
                for k in links_j:
                    cand = cur.assoc_x.copy()
                    cand[j, k] = 0
                    if try_move(cand, [k], [j]):
                        executed = True
                        break
            if not executed:
                # add (j,k)
                for k in range(K):
                    if cur.assoc_x[j, k]:
                        continue
                    cand = cur.assoc_x.copy()
                    cand[j, k] = 1
                    if try_move(cand, [k], [j]):
                        executed = True
                        break
            if executed:
                improved = True
    return cur, diag


# ---------------------------------------------------------------------------
# Hybrid outer loop
# ---------------------------------------------------------------------------


@dataclass
class HybridSolution:
    state: AssignmentState
    objective: float
    history: list[dict]
    reward_clips: int = 0


def hybrid_optimize(
    real: Realization,
    model: RangingModel,
    params: OptimizerParams,
    init: AssignmentState,
    agent: DqnAgent | None = None,
    agent_rng: np.random.Generator | None = None,
    train_agent: bool = True,
) -> HybridSolution:
    """Alternate power solve, the two matchings, and DQN beam selection.

    Tracks the best state seen after every subroutine; the returned solution
    is the best-seen one, so adding exploration (the beam step) can never
    degrade the result below the purely monotone subroutines.
    """
    sc = real.scenario
    if agent is None:
        if agent_rng is None:
            raise ValueError("need agent_rng when no agent is supplied")
        agent = DqnAgent(sc.n_users * sc.n_anchors, sc.irs.codebook_size, params.dqn, agent_rng)

    state = init.copy()
    model._bind_channels(real.channels)
    best_obj = evaluate_state(real, state, model).objective
    best_state = state.copy()
    history: list[dict] = []
    clips = 0
    prev_transition: tuple[np.ndarray, int, float] | None = None
    prev_obj = best_obj

    def consider(obj: float, st: AssignmentState) -> None:
        nonlocal best_obj, best_state
        if obj < best_obj:
            best_obj = obj
            best_state = st.copy()

    for it in range(params.max_outer):
        rec: dict = {"iteration": it, "initial": prev_obj}

        res = apply_power_solve(real, state, model, params.power)
        obj_power = evaluate_state(real, state, model).objective
        consider(obj_power, state)
        rec["after_power"] = obj_power
        rec["kkt_residual"] = res.kkt_residual

        state, d_ua = user_anchor_matching(real, state, model)
        obj_ua = d_ua.objective_trace[-1]
        consider(obj_ua, state)
        rec["after_association"] = obj_ua

        state, d_no = numerology_offset_matching(real, state, model)
        obj_no = d_no.objective_trace[-1]
        consider(obj_no, state)
        rec["after_grid"] = obj_no

        # beam step: state built from the previous beam, action applied now
        theta_prev = real.channels.codebook[state.beam_index]
        svec = real.channels.state_norms(state.numerology_vector(), theta_prev).reshape(-1)
        action = agent.select_beam(svec, explore=train_agent)
        state.beam_index = int(action)
        obj_beam = evaluate_state(real, state, model).objective
        consider(obj_beam, state)
        rec["after_beam"] = obj_beam

        reward = 1.0 - obj_beam
        if reward < 0.0:
            reward = 0.0
            clips += 1
        if train_agent:
            if prev_transition is not None:
                ps, pa, pr = prev_transition
                agent.remember(ps, pa, pr, svec)
                agent.train_step()
            prev_transition = (svec, action, reward)

        history.append(rec)
        if abs(prev_obj - obj_beam) < params.tol_rel * max(prev_obj, 1e-12):
            prev_obj = obj_beam
            break
        prev_obj = obj_beam

    if train_agent:
        agent.end_episode()
    return HybridSolution(state=best_state, objective=best_obj, history=history, reward_clips=clips)
