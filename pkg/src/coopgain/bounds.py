"""Sum-rate bounds and rate regions with and without CF cooperation."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import optim
from .channel import (
    CondIndependent,
    Independent,
    InputPolicy,
    JointConditional,
    ShannonStrategy,
    StateMac,
    Tau,
    induced_joint,
    joint_table,
    lift_shannon_strategy,
    strategy_maps,
)
from .optim import Constraint, InfeasibleCostError
from .prob import cond_mutual_info


@dataclass(frozen=True)
class CoutBudget:
    c1: float = 0.0
    c2: float = 0.0

    def __post_init__(self):
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError("CF output budgets must be nonnegative")

    @property
    def total(self) -> float:
        return self.c1 + self.c2


@dataclass
class SumRateBound:
    value: float
    achieving_policy: InputPolicy
    constraint_slacks: dict = field(default_factory=dict)
    optimizer_report: dict = field(default_factory=dict)


@dataclass
class BoundOptions:
    starts: int = 32
    seed: int = 0
    u_sizes: Optional[tuple[int, int]] = None
    max_map_pairs: int = 10**6
    warm: tuple = ()  # earlier achieving policies used as extra starts


def _require_costs_feasible(mac: StateMac):
    if mac.costs is None:
        return
    c = mac.costs
    if c.b1.min() > c.B1 + 1e-12 or c.b2.min() > c.B2 + 1e-12:
        raise InfeasibleCostError("no input distribution meets the cost budgets")


def channel_mi(mac: StateMac, policy: InputPolicy) -> float:
    """I(X1,X2;Y|S1,S2) (or I(U1,U2;Y|S) for Shannon strategies) at a policy."""
    j = induced_joint(mac, policy)
    ins = ("U1", "U2") if isinstance(policy, ShannonStrategy) else ("X1", "X2")
    return cond_mutual_info(j, ins, ("Y",), ("S1", "S2"))


# ------------------------------------------------------------ baselines


def baseline_sum_capacity(mac: StateMac, tau, opts: BoundOptions | None = None) -> SumRateBound:
    """Sum-capacity without cooperation.

    tau in {0, T-1}: max over p(x1)p(x2); otherwise over p(x1|s1)p(x2|s2).
    """
    tau = Tau.parse(tau)
    opts = opts or BoundOptions()
    _require_costs_feasible(mac)
    per_state = tau.encoders_see_state
    res, n = optim.ba_sum_capacity(mac, per_state, starts=opts.starts, seed=opts.seed)
    if per_state:
        pol = CondIndependent(res.p1, res.p2)
    else:
        pol = Independent(res.p1[0], res.p2[0])
    value = channel_mi(mac, pol)
    slacks = _cost_slacks(mac, pol)
    return SumRateBound(value, pol, slacks, {"starts": n, "iterations": res.iterations, "converged": res.converged})


def _cost_slacks(mac: StateMac, pol: InputPolicy) -> dict:
    if mac.costs is None:
        return {}
    j = induced_joint(mac, pol)
    e1 = float(j.marginal(("X1",)).table @ mac.costs.b1)
    e2 = float(j.marginal(("X2",)).table @ mac.costs.b2)
    return {"cost1": mac.costs.B1 - e1, "cost2": mac.costs.B2 - e2}


def _cost_constraints(mac: StateMac) -> list[Constraint]:
    if mac.costs is None:
        return []
    return [
        Constraint("cost1", None, mac.costs.B1, mac.costs.b1, 1),
        Constraint("cost2", None, mac.costs.B2, mac.costs.b2, 2),
    ]


# ------------------------------------------------------------ inner bounds


def inner_sum_rate(mac: StateMac, tau, budget: CoutBudget, opts: BoundOptions | None = None) -> SumRateBound:
    """Cooperation inner bound on the sum-rate, a feasible-point lower bound."""
    tau = Tau.parse(tau)
    opts = opts or BoundOptions()
    _require_costs_feasible(mac)
    if tau in (Tau.NONE, Tau.STRICTLY_CAUSAL):
        return _inner_message_only(mac, budget, opts)
    if tau in (Tau.CAUSAL, Tau.NONCAUSAL):
        return _inner_causal(mac, budget, opts)
    return _inner_state_coop(mac, budget, opts)


def _joint_from_product(p1, p2) -> np.ndarray:
    return np.outer(p1, p2).ravel()


def _inner_message_only(mac, budget, opts, extra_warm=()) -> SumRateBound:
    base = baseline_sum_capacity(mac, Tau.NONE, opts)
    if budget.total == 0:
        slack = {"dependence": 0.0, **base.constraint_slacks}
        return SumRateBound(base.value, base.achieving_policy, slack, dict(base.optimizer_report))
    cons = [Constraint("dependence", optim.DEP_X1X2, budget.total)] + _cost_constraints(mac)
    warm = [_joint_from_product(base.achieving_policy.p1, base.achieving_policy.p2), *extra_warm]
    for w in opts.warm:
        if isinstance(w, (Independent, JointConditional)):
            t = w.conditional(mac).reshape(-1, mac.nX1 * mac.nX2)
            if np.allclose(t, t[0], atol=1e-12):
                warm.append(t[0])
    best, rep = optim.penalized_ascent(mac, False, optim.CHANNEL_MI, cons, starts=opts.starts, seed=opts.seed, warm=warm)
    prm = optim.Param(mac, False)
    pol = JointConditional(np.array(prm.pi(best.p)))
    value = channel_mi(mac, pol)
    return SumRateBound(value, pol, best.slacks, {"starts": rep.starts, "iterations": rep.iterations, "converged": rep.converged})


def canonical_strategy_weights(p_x_given_s: np.ndarray) -> np.ndarray:
    """Weights over all strategies s -> x realizing p(x|s) as a product-form mixture.

    Uses the quantile (common-refinement) construction; each interval of U is
    a full strategy, so the mass lands on the canonical index of that strategy.
    """
    from .gain import functional_representation

    nS, nX = p_x_given_s.shape
    fr = functional_representation(p_x_given_s)
    w = np.zeros(nX**nS)
    for u, pu in enumerate(fr.p_u):
        idx = 0
        for s in range(nS):
            idx = idx * nX + int(fr.g[s, u])
        w[idx] += pu
    return w


def _inner_causal(mac, budget, opts) -> SumRateBound:
    nU1_full, nU2_full = mac.nX1**mac.nS1, mac.nX2**mac.nS2
    u_sizes = opts.u_sizes or (nU1_full, nU2_full)
    base = baseline_sum_capacity(mac, Tau.CAUSAL, opts)
    if tuple(u_sizes) == (nU1_full, nU2_full):
        pairs = [(strategy_maps(mac.nX1, mac.nS1), strategy_maps(mac.nX2, mac.nS2))]
    else:
        pairs = _enumerate_map_pairs(mac, u_sizes, opts.max_map_pairs)
    best = None
    for f1, f2 in pairs:
        lifted = lift_shannon_strategy(mac, f1, f2)
        warm = []
        if f1.shape[0] == nU1_full and f2.shape[0] == nU2_full:
            w1 = canonical_strategy_weights(base.achieving_policy.p1)
            w2 = canonical_strategy_weights(base.achieving_policy.p2)
            warm.append(_joint_from_product(w1, w2))
            warm.extend(
                w.pu.ravel() for w in opts.warm
                if isinstance(w, ShannonStrategy) and w.pu.shape == (nU1_full, nU2_full)
                and np.array_equal(w.f1, f1) and np.array_equal(w.f2, f2)
            )
            if budget.total == 0:
                pu = np.outer(w1, w2)
                pol = ShannonStrategy(pu, f1, f2)
                cand = SumRateBound(channel_mi(mac, pol), pol, {"dependence": 0.0}, dict(base.optimizer_report))
                best = cand
                continue
        sub = _inner_message_only(lifted, budget, replace(opts, warm=()), extra_warm=warm)
        pu = sub.achieving_policy.conditional(lifted)[0, 0]
        pol = ShannonStrategy(pu, f1, f2)
        cand = SumRateBound(channel_mi(mac, pol), pol, sub.constraint_slacks, sub.optimizer_report)
        if best is None or cand.value > best.value + 1e-12:
            best = cand
    if mac.costs is not None:
        best.constraint_slacks.update(_cost_slacks(mac, best.achieving_policy))
    return best


def _enumerate_map_pairs(mac, u_sizes, cap):
    def maps(nX, nS, nU):
        funcs = strategy_maps(nX, nS)
        return [funcs[list(c)] for c in itertools.combinations_with_replacement(range(len(funcs)), nU)]

    n1 = math.comb(mac.nX1**mac.nS1 + u_sizes[0] - 1, u_sizes[0])
    n2 = math.comb(mac.nX2**mac.nS2 + u_sizes[1] - 1, u_sizes[1])
    if n1 * n2 > cap:
        raise ValueError(f"{n1 * n2} Shannon-strategy map pairs exceed {cap}; choose smaller U alphabets")
    return list(itertools.product(maps(mac.nX1, mac.nS1, u_sizes[0]), maps(mac.nX2, mac.nS2, u_sizes[1])))


def _inner_state_coop(mac, budget, opts) -> SumRateBound:
    base = baseline_sum_capacity(mac, Tau.NONCAUSAL_STATE_COOP, opts)
    if budget.total == 0:
        slack = {"dep1": 0.0, "dep2": 0.0, "dep_sum": 0.0, **base.constraint_slacks}
        return SumRateBound(base.value, base.achieving_policy, slack, dict(base.optimizer_report))
    msg = _inner_message_only(mac, budget, replace(opts, warm=()))
    cons = [
        Constraint("dep1", optim.DEP_X1_S2, budget.c1),
        Constraint("dep2", optim.DEP_X2_S1, budget.c2),
        Constraint("dep_sum", optim.DEP_SUM, budget.total),
    ] + _cost_constraints(mac)
    warm = [base.achieving_policy.conditional(mac).ravel(), msg.achieving_policy.conditional(mac).ravel()]
    warm.extend(w.conditional(mac).ravel() for w in opts.warm if not isinstance(w, ShannonStrategy))
    best, rep = optim.penalized_ascent(mac, True, optim.CHANNEL_MI, cons, starts=opts.starts, seed=opts.seed, warm=warm)
    prm = optim.Param(mac, True)
    pol = JointConditional(np.array(prm.pi(best.p)))
    return SumRateBound(channel_mi(mac, pol), pol, best.slacks, {"starts": rep.starts, "iterations": rep.iterations, "converged": rep.converged})


def state_coop_dependence(mac: StateMac, policy: InputPolicy) -> tuple[float, float, float]:
    """(H(X1|S1)-H(X1|S1,S2), H(X2|S2)-H(X2|S1,S2), H(X1|S1)+H(X2|S2)-H(X1,X2|S1,S2))."""
    Q = joint_table(mac, policy.conditional(mac))
    return (optim.expr_value(Q, optim.DEP_X1_S2), optim.expr_value(Q, optim.DEP_X2_S1), optim.expr_value(Q, optim.DEP_SUM))


# ------------------------------------------------------------ regions


@dataclass(frozen=True)
class RateRegion:
    """Downward-closed polygon {R >= 0, a R1 + b R2 <= c for each half-plane}."""

    halfplanes: tuple[tuple[float, float, float], ...]
    provenance: str = "inner"

    def __post_init__(self):
        hp = tuple((float(a), float(b), float(c)) for a, b, c in self.halfplanes)
        if any(a < 0 or b < 0 for a, b, _ in hp):
            raise ValueError("only downward-closed regions (nonnegative normals) are supported")
        if not any(a > 0 for a, _, _ in hp) or not any(b > 0 for _, b, _ in hp):
            raise ValueError("region is unbounded")
        if any(c < -1e-12 for _, _, c in hp):
            raise ValueError("region excludes the origin")
        object.__setattr__(self, "halfplanes", hp)

    @classmethod
    def from_points(cls, points, provenance: str = "inner") -> "RateRegion":
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        pts = np.vstack([pts, [[0.0, 0.0]]])
        pts = np.clip(pts, 0.0, None)
        return cls(tuple(_downward_hull_halfplanes(pts)), provenance)

    def vertices(self) -> np.ndarray:
        xmax = min(c / a for a, b, c in self.halfplanes if a > 0)
        ymax = min(c / b for a, b, c in self.halfplanes if b > 0)
        poly = [(0.0, 0.0), (xmax, 0.0), (xmax, ymax), (0.0, ymax)]
        for a, b, c in self.halfplanes:
            poly = _clip(poly, a, b, c)
        out = []
        for p in poly:
            if not out or max(abs(p[0] - out[-1][0]), abs(p[1] - out[-1][1])) > 1e-13:
                out.append(p)
        while len(out) > 1 and max(abs(out[0][0] - out[-1][0]), abs(out[0][1] - out[-1][1])) <= 1e-13:
            out.pop()
        return np.array(out)

    def support(self, w1: float, w2: float) -> float:
        v = self.vertices()
        return float(np.max(v @ np.array([w1, w2])))

    def max_sum(self) -> float:
        return self.support(1.0, 1.0)

    def contains(self, r1: float, r2: float, tol: float = 1e-12) -> bool:
        return r1 >= -tol and r2 >= -tol and all(a * r1 + b * r2 <= c + tol for a, b, c in self.halfplanes)


def _clip(poly, a, b, c):
    out = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        fp = a * p[0] + b * p[1] - c
        fq = a * q[0] + b * q[1] - c
        if fp <= 0:
            out.append(p)
        if (fp < 0 < fq) or (fq < 0 < fp):
            t = fp / (fp - fq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def _downward_hull_halfplanes(pts: np.ndarray):
    """Half-planes of the downward closure (within the quadrant) of conv(pts)."""
    xmax = float(pts[:, 0].max())
    ymax = float(pts[:, 1].max())
    top = pts[pts[:, 1] >= ymax - 1e-15]
    start = (float(top[:, 0].max()), ymax)
    right = pts[pts[:, 0] >= xmax - 1e-15]
    end = (xmax, float(right[:, 1].max()))
    hp = [(1.0, 0.0, xmax), (0.0, 1.0, ymax)]
    cand = sorted({(float(x), float(y)) for x, y in pts if x > start[0] + 1e-15 and y > end[1] + 1e-15})
    chain = [start]
    for p in cand + [end]:
        while len(chain) >= 2 and _cross(chain[-2], chain[-1], p) >= -1e-15:
            chain.pop()
        chain.append(p)
    for p, q in zip(chain, chain[1:]):
        dx, dy = q[0] - p[0], q[1] - p[1]
        if dx <= 1e-15 or dy >= -1e-15:
            continue
        a, b = -dy, dx
        s = a + b
        a, b = a / s, b / s
        hp.append((a, b, a * p[0] + b * p[1]))
    return hp


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _rate_terms(mac: StateMac, policy: InputPolicy) -> tuple[float, float, float]:
    j = induced_joint(mac, policy)
    a, b = (("U1",), ("U2",)) if isinstance(policy, ShannonStrategy) else (("X1",), ("X2",))
    s = ("S1", "S2")
    r1 = cond_mutual_info(j, a, ("Y",), s + b)
    r2 = cond_mutual_info(j, b, ("Y",), s + a)
    rs = cond_mutual_info(j, a + b, ("Y",), s)
    return r1, r2, rs


def rate_region_at_policy(mac: StateMac, tau, policy: InputPolicy) -> RateRegion:
    tau = Tau.parse(tau)
    if tau in (Tau.NONE, Tau.STRICTLY_CAUSAL):
        ok = isinstance(policy, Independent) or (
            isinstance(policy, JointConditional)
            and np.allclose(policy.table, policy.table[:1, :1], atol=1e-12)
        )
    elif tau in (Tau.CAUSAL, Tau.NONCAUSAL):
        ok = isinstance(policy, ShannonStrategy)
    else:
        ok = not isinstance(policy, ShannonStrategy)
    if not ok:
        raise ValueError(f"policy shape {type(policy).__name__} does not match tau={tau.value}")
    r1, r2, rs = _rate_terms(mac, policy)
    return RateRegion(((1.0, 0.0, r1), (0.0, 1.0, r2), (1.0, 1.0, rs)), "inner")


def _pentagon_vertices(r1, r2, rs):
    a, b = min(r1, rs), min(r2, rs)
    return [(0, 0), (a, 0), (0, b), (a, max(0.0, min(b, rs - a))), (max(0.0, min(a, rs - b)), b)]


def no_coop_outer_region(mac: StateMac, tau, opts: BoundOptions | None = None, samples: int = 64) -> RateRegion:
    """Capacity region without cooperation as the hull of per-policy pentagons.

    Only the sum-rate face is certified: it equals the baseline sum-capacity.
    """
    tau = Tau.parse(tau)
    opts = opts or BoundOptions()
    per_state = tau.encoders_see_state
    base = baseline_sum_capacity(mac, tau, opts)
    policies = [base.achieving_policy]
    rng = np.random.default_rng(opts.seed)
    R1 = mac.nS1 if per_state else 1
    R2 = mac.nS2 if per_state else 1

    def mk(p1, p2):
        return CondIndependent(p1, p2) if per_state else Independent(p1[0], p2[0])

    for _ in range(samples):
        policies.append(mk(rng.dirichlet(np.ones(mac.nX1), size=R1), rng.dirichlet(np.ones(mac.nX2), size=R2)))
    # single-user corners: the other encoder sends a fixed (state-dependent) symbol
    for x2 in itertools.product(range(mac.nX2), repeat=R2):
        fixed = np.eye(mac.nX2)[list(x2)]
        p1 = _single_user_best(mac, fixed, per_state, enc=1)
        policies.append(mk(p1, fixed))
    for x1 in itertools.product(range(mac.nX1), repeat=R1):
        fixed = np.eye(mac.nX1)[list(x1)]
        p2 = _single_user_best(mac, fixed, per_state, enc=2)
        policies.append(mk(fixed, p2))
    pts = []
    for pol in policies:
        pts.extend(_pentagon_vertices(*_rate_terms(mac, pol)))
    region = RateRegion.from_points(pts, "outer")
    # the sum-rate face is the baseline by the averaging argument
    hp = tuple(h for h in region.halfplanes if not (h[0] > 0 and h[1] > 0 and abs(h[0] - h[1]) < 1e-12))
    hp = hp + ((0.5, 0.5, 0.5 * base.value),)
    return RateRegion(hp, "outer")


def _single_user_best(mac, fixed, per_state, enc):
    r1 = optim._rows_index(mac, per_state, 1)
    r2 = optim._rows_index(mac, per_state, 2)
    R = mac.nS1 if (per_state and enc == 1) else (mac.nS2 if per_state else 1)
    nX = mac.nX1 if enc == 1 else mac.nX2
    p = np.full((R, nX), 1.0 / nX)
    cost = None
    budget = math.inf
    if mac.costs is not None:
        cost = mac.costs.b1 if enc == 1 else mac.costs.b2
        budget = mac.costs.B1 if enc == 1 else mac.costs.B2
        p = optim._cost_feasible(p, cost, budget, mac, r1 if enc == 1 else r2)
    if enc == 1:
        p, _ = optim._ba_block(mac, p, fixed, r1, r2, 1, cost, budget, 2000, 1e-10)
    else:
        p, _ = optim._ba_block(mac, p, fixed, r2, r1, 2, cost, budget, 2000, 1e-10)
    return p


def time_share_combine(rA: RateRegion, rB: RateRegion, mu: float) -> RateRegion:
    """Minkowski combination mu*rA + (1-mu)*rB."""
    if not 0.0 <= mu <= 1.0:
        raise ValueError("mu must lie in [0, 1]")
    va, vb = rA.vertices(), rB.vertices()
    pts = (mu * va[:, None, :] + (1 - mu) * vb[None, :, :]).reshape(-1, 2)
    prov = rA.provenance if rA.provenance == rB.provenance else "inner"
    return RateRegion.from_points(pts, prov)
