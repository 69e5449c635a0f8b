"""Distributed gradient projection on forwarding fractions.

Each slot, every (node, stage) row moves mass away from blocked and
higher-marginal directions onto its minimum-marginal ones:

- blocked destinations are zeroed outright,
- a direction with marginal gap e > 0 loses min(phi, alpha * e),
- the removed mass is split equally over the N minimal directions.

The update is synchronous (all rows move on the same slot's marginal tables),
keeps rows on their simplices, and preserves loop-freedom through the blocked
sets. With the adaptive stepsize the cost trace is nonincreasing: a slot that
would raise the cost (or blow a capacity) is retried with alpha halved.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityExceeded, LoopDetected, NoFeasibleStrategy
from .flows import (FlowState, Strategy, compiled, compute_flows, detect_loops,
                    feasible_start, validate_strategy, _successor_tree)
from .marginals import (BlockedSets, blocked_sets, modified_marginals,
                        traffic_marginals)
from .network import Scenario

_TIE_REL = 1e-11


@dataclass
class GpConfig:
    stepsize: float = 0.05          # fraction moved per unit marginal gap
    max_iters: int = 2000
    tol: float = 1e-6               # convergence: max positive-mass delta gap
    adaptive_stepsize: bool = True
    tol_mass: float = 1e-9
    min_stepsize_factor: float = 2.0 ** -40
    max_stepsize_factor: float = 64.0  # adaptive growth cap (multiples of stepsize)
    row_filter: object = None       # optional (app_id, k) -> bool (rows to touch)
    on_iterate: object = None       # optional callback(slot, phi, state)

    def __post_init__(self):
        if self.stepsize <= 0 or self.tol <= 0:
            raise ValueError("stepsize and tol must be > 0")


@dataclass
class StepDiagnostics:
    gaps: dict           # (app_id, k) -> (n, n+1) marginal gaps e (inf = unavailable)
    n_min: dict          # (app_id, k) -> (n,) count of minimal directions
    transferred: dict    # (app_id, k) -> (n,) removed mass S_i
    blocked: BlockedSets
    max_gap: float       # largest gap over positive-mass directions


def _active_rows(comp, app, k, row_filter):
    active = np.ones(comp.n, dtype=bool)
    if k == app.K:
        active[app.dest] = False
    if row_filter is not None and not row_filter((app.id, k)):
        active[:] = False
    return active


def sufficient_gap(comp, phi: Strategy, delta: dict, tol_mass: float,
                   row_filter=None) -> float:
    """Largest modified-marginal gap over positive-fraction directions; the
    convergence measure (0 at a point satisfying the sufficient condition)."""
    worst = 0.0
    for app in comp.apps:
        for k in range(app.K + 1):
            key = (app.id, k)
            mat, d = phi.rows[key], delta[key]
            active = _active_rows(comp, app, k, row_filter)
            if not active.any():
                continue
            with np.errstate(invalid="ignore"):
                dmin = np.min(np.where(np.isfinite(d), d, np.inf), axis=1)
                gap = np.where(mat > tol_mass, d - dmin[:, None], 0.0)
            gap = gap[active]
            if gap.size:
                worst = max(worst, float(np.max(gap)))
    return worst


def gp_step(scenario: Scenario, phi: Strategy, config: GpConfig,
            state: FlowState | None = None, marginals: dict | None = None,
            delta: dict | None = None, blocked: BlockedSets | None = None):
    """One synchronous slot update. Returns (phi_next, StepDiagnostics)."""
    comp = compiled(scenario)
    if state is None:
        state = compute_flows(scenario, phi)
    if marginals is None:
        marginals = traffic_marginals(scenario, phi, state)
    if delta is None:
        delta = modified_marginals(scenario, state, marginals)
    if blocked is None:
        blocked = blocked_sets(scenario, phi, marginals)

    alpha = config.stepsize
    out = phi.copy()
    gaps, n_min, transferred = {}, {}, {}
    for app in comp.apps:
        for k in range(app.K + 1):
            key = (app.id, k)
            mat = out.rows[key]
            d = delta[key]
            n = comp.n
            B = np.zeros((n, n + 1), dtype=bool)
            B[:, 1:] = blocked.masks[key]
            avail = ~B & np.isfinite(d)
            with np.errstate(invalid="ignore"):
                dmin = np.min(np.where(avail, d, np.inf), axis=1)
                rows = _active_rows(comp, app, k, config.row_filter) & np.isfinite(dmin)
                e = np.clip(d - dmin[:, None], 0.0, None)
                tie = _TIE_REL * np.maximum(1.0, np.abs(dmin))[:, None]
                minimal = avail & (e <= tie)
                shrink = ~B & ~minimal
                red = np.where(B, mat, 0.0) \
                    + np.where(shrink, np.minimum(mat, alpha * e), 0.0)
            red[~rows] = 0.0
            S = red.sum(axis=1)
            N = minimal.sum(axis=1)
            new = mat - red
            give = np.zeros(n)
            give[rows] = S[rows] / N[rows]
            new += minimal * give[:, None]
            sums = new.sum(axis=1)
            norm = rows & (sums > 0)
            new[norm] /= sums[norm, None]
            out.rows[key] = np.where(rows[:, None], new, mat)

            gaps[key] = np.where(avail | B, e, np.inf)
            n_min[key] = N
            transferred[key] = S
    diag = StepDiagnostics(gaps=gaps, n_min=n_min, transferred=transferred,
                           blocked=blocked,
                           max_gap=sufficient_gap(comp, phi, delta,
                                                  config.tol_mass, config.row_filter))
    return out, diag


def robust_start(scenario: Scenario) -> Strategy:
    """Feasible start: shortest-path inits first, then a capacity-aware
    greedy loading of cheapest extended paths for tightly loaded instances."""
    from .oracle import _blocks, _greedy_start, strategy_from_flows

    try:
        return feasible_start(scenario)
    except NoFeasibleStrategy:
        pass
    comp = compiled(scenario)
    registry = {block: {} for block in _blocks(comp)}
    fv = _greedy_start(comp, registry)
    phi = strategy_from_flows(scenario, fv)
    try:
        compute_flows(scenario, phi)
    except (CapacityExceeded, LoopDetected) as err:
        raise NoFeasibleStrategy(f"greedy start failed: {err}") from err
    return phi


@dataclass
class GpResult:
    phi: Strategy
    state: FlowState
    trace: list                       # total cost per slot (slot 0 = start)
    history: list = field(default_factory=list)  # dicts: iter, T, max_gap, stepsize
    iterations: int = 0               # accepted (productive) slots
    converged: bool = False
    final_gap: float = float("inf")

    @property
    def total_cost(self) -> float:
        return self.state.total_cost

    def write_trace_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "T", "max_gap", "stepsize"])
            for row in self.history:
                w.writerow([row["iter"], repr(row["T"]), repr(row["max_gap"]),
                            repr(row["stepsize"])])


def run_gp(scenario: Scenario, phi0: Strategy | None = None,
           config: GpConfig | None = None) -> GpResult:
    """Iterate gp_step until the sufficient-condition gap falls below tol.

    Returns the best iterate with converged=False when the slot budget runs
    out. With adaptive stepsize, slots whose evaluation fails (capacity) or
    raises the cost are retried at half the stepsize, so the trace is
    nonincreasing.
    """
    config = config or GpConfig()
    comp = compiled(scenario)
    phi = phi0.copy() if phi0 is not None else robust_start(scenario)
    problems = validate_strategy(scenario, phi)
    if problems:
        raise ValueError(f"initial strategy invalid: {problems[:3]}")
    state = compute_flows(scenario, phi)
    trace = [state.total_cost]
    history = []
    alpha = config.stepsize
    alpha_floor = config.stepsize * config.min_stepsize_factor
    alpha_ceil = config.stepsize * config.max_stepsize_factor
    iterations = 0
    converged = False
    gap = float("inf")
    streak = 0
    if config.on_iterate is not None:
        config.on_iterate(0, phi, state)
    for slot in range(config.max_iters):
        marg = traffic_marginals(scenario, phi, state)
        delta = modified_marginals(scenario, state, marg)
        blocked = blocked_sets(scenario, phi, marg)
        gap = sufficient_gap(comp, phi, delta, config.tol_mass, config.row_filter)
        history.append({"iter": slot, "T": state.total_cost,
                        "max_gap": gap, "stepsize": alpha})
        if gap <= config.tol:
            converged = True
            break
        step_cfg = GpConfig(stepsize=alpha, max_iters=config.max_iters,
                            tol=config.tol, adaptive_stepsize=config.adaptive_stepsize,
                            tol_mass=config.tol_mass, row_filter=config.row_filter)
        while True:
            step_cfg.stepsize = alpha
            cand, diag = gp_step(scenario, phi, step_cfg, state, marg, delta, blocked)
            if not config.adaptive_stepsize:
                cand_state = compute_flows(scenario, cand)  # errors propagate
                break
            try:
                cand_state = compute_flows(scenario, cand)
            except (CapacityExceeded, LoopDetected):
                cand_state = None
            if cand_state is not None and \
                    cand_state.total_cost <= state.total_cost + 1e-12 * max(1.0, abs(state.total_cost)):
                streak += 1
                if streak >= 3 and alpha < alpha_ceil:
                    alpha = min(alpha_ceil, 2 * alpha)
                    streak = 0
                break
            streak = 0
            alpha *= 0.5
            if alpha < alpha_floor:
                cand, cand_state = None, None
                break
        if cand_state is None:
            break  # stepsize exhausted: keep current iterate
        phi, state = cand, cand_state
        trace.append(state.total_cost)
        iterations += 1
        if config.on_iterate is not None:
            config.on_iterate(iterations, phi, state)
    return GpResult(phi=phi, state=state, trace=trace, history=history,
                    iterations=iterations, converged=converged, final_gap=gap)


# ---------------------------------------------------------------------------
# adaptation to input / topology changes
# ---------------------------------------------------------------------------

def _fresh_row_targets(comp, app, k):
    """Successor choices used when a row must be rebuilt from scratch."""
    metric = comp.zero_flow_link_metric()
    if k < app.K:
        capable = np.isfinite(app.w[:, k]) & comp.has_cpu
        if capable.any():
            _, succ = _successor_tree(comp, metric, capable)
            return succ, capable
    targets = np.zeros(comp.n, dtype=bool)
    targets[app.dest] = True
    _, succ = _successor_tree(comp, metric, targets)
    return succ, np.zeros(comp.n, dtype=bool)


def _repair_strategy(old_scenario, new_scenario, phi_prev):
    comp_old = compiled(old_scenario)
    comp_new = compiled(new_scenario)
    try:
        state_old = compute_flows(old_scenario, phi_prev)
        lam_old = traffic_marginals(old_scenario, phi_prev, state_old)
        delta_old = modified_marginals(old_scenario, state_old, lam_old)
    except (CapacityExceeded, LoopDetected) as err:
        raise NoFeasibleStrategy(f"previous strategy unusable: {err}") from err

    phi = Strategy.zeros(new_scenario)
    rebuilt_stages = set()
    for app in comp_new.apps:
        for k in range(app.K + 1):
            key = (app.id, k)
            succ, capable = _fresh_row_targets(comp_new, app, k)
            mat = phi.rows[key]
            old_mat = phi_prev.rows.get(key)
            d_old = delta_old.get(key)
            for i, node in enumerate(comp_new.nodes):
                if k == app.K and i == app.dest:
                    continue
                oi = comp_old.index.get(node) if old_mat is not None else None
                if oi is None:
                    # new node: fresh conservation-satisfying row
                    if capable[i]:
                        mat[i, 0] = 1.0
                    else:
                        mat[i, 1 + succ[i]] = 1.0
                    rebuilt_stages.add(key)
                    continue
                row = np.zeros(comp_new.n + 1)
                freed = 0.0
                keep_cpu = k < app.K and np.isfinite(app.w[i, k])
                if old_mat[oi, 0] > 0 and keep_cpu:
                    row[0] = old_mat[oi, 0]
                else:
                    freed += old_mat[oi, 0]
                for oj, onode in enumerate(comp_old.nodes):
                    frac = old_mat[oi, 1 + oj]
                    if frac <= 0:
                        continue
                    nj = comp_new.index.get(onode)
                    if nj is not None and comp_new.adj[i, nj]:
                        row[1 + nj] = frac
                    else:
                        freed += frac   # removed link or removed node
                if freed > 0:
                    # dump freed mass on the remaining direction with the
                    # smallest old modified marginal
                    best, best_val = None, np.inf
                    if keep_cpu and np.isfinite(d_old[oi, 0]):
                        best, best_val = 0, d_old[oi, 0]
                    for nj in np.flatnonzero(comp_new.adj[i]):
                        onj = comp_old.index.get(comp_new.nodes[nj])
                        val = d_old[oi, 1 + onj] if onj is not None else np.inf
                        if val < best_val:
                            best, best_val = 1 + nj, val
                    if best is None:
                        row[:] = 0.0
                        if capable[i]:
                            row[0] = 1.0
                        else:
                            row[1 + succ[i]] = 1.0
                        rebuilt_stages.add(key)
                    else:
                        row[best] += freed
                s = row.sum()
                if s > 0:
                    row /= s
                mat[i] = row
    # repairs can stitch kept rows into a cycle: rebuild offending stages
    loops = detect_loops(phi)
    for key in loops:
        app = next(a for a in comp_new.apps if a.id == key[0])
        succ, capable = _fresh_row_targets(comp_new, app, key[1])
        mat = np.zeros_like(phi.rows[key])
        for i in range(comp_new.n):
            if key[1] == app.K and i == app.dest:
                continue
            if capable[i]:
                mat[i, 0] = 1.0
            else:
                mat[i, 1 + succ[i]] = 1.0
        phi.rows[key] = mat
    return phi


def adapt(old_scenario: Scenario, new_scenario: Scenario, phi_prev: Strategy,
          config: GpConfig | None = None) -> GpResult:
    """Warm-started re-optimization after input-rate or topology changes.

    Removed links lose their fractions (mass goes to the remaining direction
    with the smallest previous modified marginal); new links start at zero;
    new nodes get fresh rows. Raises NoFeasibleStrategy when the repaired
    strategy has no finite cost.
    """
    phi0 = _repair_strategy(old_scenario, new_scenario, phi_prev)
    try:
        compute_flows(new_scenario, phi0)
    except (CapacityExceeded, LoopDetected) as err:
        raise NoFeasibleStrategy(f"repair could not restore finite cost: {err}") from err
    return run_gp(new_scenario, phi0, config)
