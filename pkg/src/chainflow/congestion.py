"""Utility-based congestion control on the virtual-gateway extended graph.

Each physical node gets a virtual admission gateway. The gateway receives the
full offered rate of an application and splits it between an admission link
into the physical node (zero cost) and a rejection link straight to the
destination whose cost is the utility lost by rejecting. Maximizing
utility-minus-cost is then an ordinary cost minimization on the extended
graph, and the same marginal comparisons drive the admission fractions: admit
more while the marginal utility exceeds the marginal network cost of carrying
one more packet.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import CapacityExceeded, LoopDetected
from .flows import FlowState, Strategy, compiled, compute_flows
from .gp import GpConfig, gp_step, sufficient_gap
from .marginals import (CheckResult, blocked_sets, check_sufficient,
                        modified_marginals, traffic_marginals)
from .network import Scenario

_PRIME_FLOOR = 1e-9   # derivative of sub-1 fairness is evaluated at >= this rate


# ---------------------------------------------------------------------------
# utilities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AlphaFair:
    """alpha-fairness, normalized so the utility of zero admitted rate is 0.

    alpha=0 is plain throughput, alpha=1 proportional fairness via
    log(r + eps) - log(eps), larger alpha more egalitarian.
    """

    alpha: float
    eps: float = 0.1
    cap: float = 1.0

    def __post_init__(self):
        if self.alpha < 0 or self.eps <= 0 or self.cap < 0:
            raise ValueError("need alpha >= 0, eps > 0, cap >= 0")


@dataclass(frozen=True)
class LinearUtility:
    slope: float
    cap: float = 1.0

    def __post_init__(self):
        if self.slope < 0 or self.cap < 0:
            raise ValueError("need slope >= 0, cap >= 0")


Utility = AlphaFair | LinearUtility


def utility_eval(u: Utility, r: float) -> float:
    """Utility of admitted rate r, normalized so utility_eval(u, 0) == 0."""
    if r < -1e-12 or r > u.cap * (1 + 1e-9) + 1e-12:
        raise ValueError(f"rate {r} outside [0, {u.cap}]")
    r = min(max(r, 0.0), u.cap)
    if isinstance(u, LinearUtility):
        return u.slope * r
    a = u.alpha
    if a == 1.0:
        return math.log(r + u.eps) - math.log(u.eps)
    if a < 1.0:
        return r ** (1 - a) / (1 - a)
    return ((r + u.eps) ** (1 - a) - u.eps ** (1 - a)) / (1 - a)


def utility_prime(u: Utility, r: float) -> float:
    """Marginal utility at admitted rate r.

    For 0 < alpha < 1 the derivative diverges at r = 0; it is evaluated at
    max(r, 1e-9) so admission updates stay finite.
    """
    if r < -1e-12 or r > u.cap * (1 + 1e-9) + 1e-12:
        raise ValueError(f"rate {r} outside [0, {u.cap}]")
    r = min(max(r, 0.0), u.cap)
    if isinstance(u, LinearUtility):
        return u.slope
    a = u.alpha
    if a == 0.0:
        return 1.0
    if a < 1.0:
        return max(r, _PRIME_FLOOR) ** (-a)
    return (r + u.eps) ** (-a)


# ---------------------------------------------------------------------------
# extended scenario
# ---------------------------------------------------------------------------

@dataclass
class ExtendedScenario:
    """Base network plus one virtual admission gateway per physical node.

    `base` carries the offered-rate caps as its input rates (the virtual
    inputs are fixed to the caps); the actually admitted rates are
    cap * admit_fraction and enter the engine as a rate override. `pairs`
    lists the (node, app_id) combinations that have a gateway row.
    """

    base: Scenario
    caps: dict        # (node, app_id) -> offered-rate cap
    utilities: dict   # (node, app_id) -> Utility

    def __post_init__(self):
        for pair, cap in self.caps.items():
            if cap < 0:
                raise ValueError(f"negative cap at {pair}")
            u = self.utilities[pair]
            if abs(u.cap - cap) > 1e-9 * max(1.0, cap):
                raise ValueError(f"utility cap mismatch at {pair}")

    @property
    def pairs(self):
        return sorted((p for p in self.caps if self.caps[p] > 0), key=str)

    @property
    def num_extended_nodes(self) -> int:
        return 2 * len(self.base.graph.nodes)

    def virtual_links(self):
        """(gateway, target) pairs: one admission and one rejection link per
        gateway with positive offered rate."""
        out = []
        for (node, app_id) in self.pairs:
            dest = self.base.app(app_id).destination
            out.append((f"{node}^V", node))
            out.append((f"{node}^V", dest))
        return out

    def admitted_rates(self, admit: dict) -> dict:
        return {pair: self.caps[pair] * admit.get(pair, 0.0) for pair in self.pairs}

    def rejection_cost(self, admit: dict) -> float:
        total = 0.0
        for pair in self.pairs:
            u = self.utilities[pair]
            r = self.caps[pair] * admit.get(pair, 0.0)
            total += utility_eval(u, u.cap) - utility_eval(u, r)
        return total


def extend_scenario(scenario: Scenario, caps: dict, utilities: dict) -> ExtendedScenario:
    """Build the congestion-control extension of a scenario.

    The base input rates are replaced by the offered-rate caps; admission
    fractions then decide how much of each cap enters the physical network.
    """
    base = scenario.with_rates({pair: cap for pair, cap in caps.items() if cap > 0})
    return ExtendedScenario(base=base, caps=dict(caps), utilities=dict(utilities))


def extended_cost(ext: ExtendedScenario, phi: Strategy, admit: dict):
    """Total cost on the extended graph: physical cost at the admitted rates
    plus the utility-loss cost on the rejection links."""
    rates = ext.admitted_rates(admit)
    state = compute_flows(ext.base, phi, rates=rates)
    return state.total_cost + ext.rejection_cost(admit), state


def utility_minus_cost(ext: ExtendedScenario, phi: Strategy, admit: dict) -> float:
    rates = ext.admitted_rates(admit)
    state = compute_flows(ext.base, phi, rates=rates)
    total = -state.total_cost
    for pair in ext.pairs:
        total += utility_eval(ext.utilities[pair], rates[pair])
    return total


# ---------------------------------------------------------------------------
# optimization from reject-all
# ---------------------------------------------------------------------------

@dataclass
class CcResult:
    phi: Strategy
    admit: dict                  # (node, app_id) -> admitted fraction of cap
    admitted: dict               # (node, app_id) -> admitted packets/sec
    state: FlowState
    utility_minus_cost: float
    trace: list                  # extended-graph total cost per slot
    iterations: int = 0
    converged: bool = False
    final_gap: float = float("inf")


def _virtual_deltas(ext, marginals, admit):
    comp = compiled(ext.base)
    out = {}
    for pair in ext.pairs:
        node, app_id = pair
        lam0 = marginals[(app_id, 0)][comp.index[node]]
        uprime = utility_prime(ext.utilities[pair], ext.caps[pair] * admit.get(pair, 0.0))
        out[pair] = (float(lam0), float(uprime))
    return out


def _virtual_gap(ext, deltas, admit, tol_mass):
    worst = 0.0
    for pair, (d_admit, d_reject) in deltas.items():
        lo = min(d_admit, d_reject)
        a = admit.get(pair, 0.0)
        if a > tol_mass:
            worst = max(worst, d_admit - lo)
        if 1.0 - a > tol_mass:
            worst = max(worst, d_reject - lo)
    return worst


def run_gp_cc(ext: ExtendedScenario, config: GpConfig | None = None,
              phi0: Strategy | None = None) -> CcResult:
    """Joint admission control and forwarding optimization.

    Starts from reject-all (always feasible with zero cost) and runs the same
    slot updates as run_gp, with one extra two-direction row per gateway:
    admit versus reject, compared through the marginal network cost of the
    first data stage against the marginal utility of the admitted rate.
    """
    from .flows import init_strategy

    config = config or GpConfig()
    comp = compiled(ext.base)
    if phi0 is None:
        phi = init_strategy(ext.base, mode="shortest_path_then_local_comp",
                            require_finite=False)
    else:
        phi = phi0.copy()
    admit = {pair: 0.0 for pair in ext.pairs}
    T_ext, state = extended_cost(ext, phi, admit)
    trace = [T_ext]
    alpha = config.stepsize
    alpha_floor = config.stepsize * config.min_stepsize_factor
    alpha_ceil = config.stepsize * config.max_stepsize_factor
    iterations, converged, streak = 0, False, 0
    gap = float("inf")
    for slot in range(config.max_iters):
        marg = traffic_marginals(ext.base, phi, state)
        delta = modified_marginals(ext.base, state, marg)
        blocked = blocked_sets(ext.base, phi, marg)
        vdelta = _virtual_deltas(ext, marg, admit)
        gap = max(sufficient_gap(comp, phi, delta, config.tol_mass, config.row_filter),
                  _virtual_gap(ext, vdelta, admit, config.tol_mass))
        if gap <= config.tol:
            converged = True
            break
        while True:
            step_cfg = replace(config, stepsize=alpha, on_iterate=None)
            cand, _ = gp_step(ext.base, phi, step_cfg, state, marg, delta, blocked)
            cand_admit = {}
            for pair, (d_admit, d_reject) in vdelta.items():
                a = admit[pair]
                if d_admit < d_reject:
                    move = min(1.0 - a, alpha * (d_reject - d_admit))
                    cand_admit[pair] = a + move
                elif d_reject < d_admit:
                    move = min(a, alpha * (d_admit - d_reject))
                    cand_admit[pair] = a - move
                else:
                    cand_admit[pair] = a
            try:
                T_cand, cand_state = extended_cost(ext, cand, cand_admit)
            except (CapacityExceeded, LoopDetected):
                T_cand, cand_state = None, None
            if T_cand is not None and \
                    T_cand <= T_ext + 1e-12 * max(1.0, abs(T_ext)):
                streak += 1
                if streak >= 3 and alpha < alpha_ceil:
                    alpha = min(alpha_ceil, 2 * alpha)
                    streak = 0
                break
            streak = 0
            alpha *= 0.5
            if alpha < alpha_floor:
                T_cand = None
                break
        if T_cand is None:
            break
        phi, admit, state, T_ext = cand, cand_admit, cand_state, T_cand
        trace.append(T_ext)
        iterations += 1
    admitted = ext.admitted_rates(admit)
    umc = utility_minus_cost(ext, phi, admit)
    return CcResult(phi=phi, admit=admit, admitted=admitted, state=state,
                    utility_minus_cost=umc, trace=trace, iterations=iterations,
                    converged=converged, final_gap=gap)


def check_sufficient_cc(ext: ExtendedScenario, phi: Strategy, admit: dict,
                        tol: float = 1e-6, tol_mass: float = 1e-9) -> CheckResult:
    """Sufficient optimality on the extended graph: the physical condition at
    the admitted rates plus, per gateway, admit-mass only when the network
    marginal is (weakly) below the marginal utility and vice versa."""
    rates = ext.admitted_rates(admit)
    state = compute_flows(ext.base, phi, rates=rates)
    physical = check_sufficient(ext.base, phi, tol=tol, tol_mass=tol_mass, state=state)
    violations = list(physical.violations)
    marg = traffic_marginals(ext.base, phi, state)
    for pair, (d_admit, d_reject) in _virtual_deltas(ext, marg, admit).items():
        a = admit.get(pair, 0.0)
        if a > tol_mass and d_admit > d_reject + tol:
            violations.append({"gateway": list(pair), "side": "admit",
                               "network_marginal": d_admit, "utility_marginal": d_reject})
        if 1.0 - a > tol_mass and d_reject > d_admit + tol:
            violations.append({"gateway": list(pair), "side": "reject",
                               "network_marginal": d_admit, "utility_marginal": d_reject})
    return CheckResult(holds=not violations, violations=violations)


def write_admission_report(ext: ExtendedScenario, result: CcResult, path):
    """CSV report: node, app, cap, admitted rate, marginal utility, marginal
    network cost of the first data stage."""
    comp = compiled(ext.base)
    marg = traffic_marginals(ext.base, result.phi, result.state)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "app", "cap", "admitted", "utility_marginal",
                    "network_marginal"])
        for pair in ext.pairs:
            node, app_id = pair
            r = result.admitted[pair]
            w.writerow([node, app_id, repr(ext.caps[pair]), repr(r),
                        repr(utility_prime(ext.utilities[pair], r)),
                        repr(float(marg[(app_id, 0)][comp.index[node]]))])
