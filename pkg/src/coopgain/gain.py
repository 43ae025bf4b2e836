"""Infinite-slope class membership, perturbation paths and slope profiles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq, linprog

from . import optim
from .bounds import BoundOptions, CoutBudget, baseline_sum_capacity, inner_sum_rate
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
    policy_to_dict,
)
from .prob import SUPPORT_TOL, cond_mutual_info, expected_state_kl, support

STRICTNESS = 1e-6
DEFAULT_EPS = 1e-3


@dataclass
class FunctionalRep:
    p_u: np.ndarray  # (U,)
    g: np.ndarray  # int (S, U)
    breakpoints: np.ndarray

    @property
    def size(self) -> int:
        return self.p_u.size

    def reconstruct(self) -> np.ndarray:
        nS = self.g.shape[0]
        nX = int(self.g.max()) + 1
        out = np.zeros((nS, nX))
        for s in range(nS):
            np.add.at(out[s], self.g[s], self.p_u)
        return out


def functional_representation(kernel, merge_tol: float = 1e-14) -> FunctionalRep:
    """Write p(x|s) as x = g(s, U) with U independent of S.

    Interior CDF values of every row are pooled, sorted and deduplicated; the
    gaps between consecutive breakpoints are the atoms of U and g is the
    quantile function evaluated at each gap's right endpoint.
    """
    k = np.asarray(kernel, dtype=float)
    if k.ndim != 2:
        raise ValueError("kernel must be a (S, X) row-stochastic array")
    if np.any(k < 0) or np.any(np.abs(k.sum(axis=1) - 1) > 1e-9):
        raise ValueError("kernel rows are not normalized")
    cdf = np.cumsum(k, axis=1)
    cdf[:, -1] = 1.0
    inner = np.sort(cdf[:, :-1].ravel())
    inner = inner[(inner > merge_tol) & (inner < 1 - merge_tol)]
    pts = []
    for b in inner:
        if not pts or b - pts[-1] > merge_tol:
            pts.append(float(b))
    edges = np.array([0.0] + pts + [1.0])
    p_u = np.diff(edges)
    right = edges[1:]
    g = (cdf[:, None, :] < right[None, :, None] - merge_tol).sum(axis=2)
    g = np.minimum(g, k.shape[1] - 1)
    return FunctionalRep(p_u, g.astype(np.intp), np.array(pts))


# ------------------------------------------------------------ class checks


@dataclass
class ClassReport:
    tau: str
    member: bool
    p0: InputPolicy
    witness_p1: InputPolicy
    objective_value: float
    baseline: float
    margin: float
    support_certificate: list
    maps: Optional[tuple] = None  # (f1, f2) for Shannon-strategy lifts

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "member": self.member,
            "I0": self.baseline,
            "J_star": self.objective_value,
            "margin": self.margin,
            "p0": policy_to_dict(self.p0),
            "witness_p1": policy_to_dict(self.witness_p1),
            "support_certificate": [list(map(int, c)) for c in self.support_certificate],
        }


def _output_given_state(mac: StateMac, pi: np.ndarray) -> np.ndarray:
    return np.einsum("ijab,ijaby->ijy", pi, mac.kernel)


def _divergence_table(mac: StateMac, pi0: np.ndarray) -> np.ndarray:
    """D(W(.|s,x1,x2) || p0(.|s)) for every (s1,s2,x1,x2); inf where unsupported."""
    py = _output_given_state(mac, pi0)
    W = mac.kernel
    with np.errstate(divide="ignore", invalid="ignore"):
        lr = np.where(W > 0, np.log2(W / py[:, :, None, None, :]), 0.0)
    return np.sum(np.where(W > 0, W * lr, 0.0), axis=-1)


def payoff(mac: StateMac, p0: InputPolicy, p1: InputPolicy) -> float:
    """I_1(X1,X2;Y|S) + E[D(p1(y|S) || p0(y|S))], evaluated from scratch."""
    j1 = induced_joint(mac, p1)
    ins = ("U1", "U2") if isinstance(p1, ShannonStrategy) else ("X1", "X2")
    i1 = cond_mutual_info(j1, ins, ("Y",), ("S1", "S2"))
    ps = mac.state_law.ravel()
    r1 = _output_given_state(mac, p1.conditional(mac)).reshape(ps.size, -1)
    r0 = _output_given_state(mac, p0.conditional(mac)).reshape(ps.size, -1)
    return i1 + expected_state_kl(r1, r0, ps)


def _product_check(mac: StateMac, p1m: np.ndarray, p2m: np.ndarray, c1=None, c2=None, B=(math.inf, math.inf)):
    """Max over p1(x1,x2) on supp(p1m) x supp(p2m) of the linear payoff."""
    pi0 = np.broadcast_to(np.outer(p1m, p2m), (mac.nS1, mac.nS2, p1m.size, p2m.size))
    D = _divergence_table(mac, pi0)
    Dbar = np.einsum("ij,ijab->ab", mac.state_law, np.where(mac.state_law[:, :, None, None] > 0, D, 0.0))
    s1, s2 = support(p1m), support(p2m)
    if not s1 or not s2:
        raise ValueError("degenerate baseline input law (empty support)")
    cells = [(a, b) for a in s1 for b in s2]
    vals = np.array([Dbar[a, b] for a, b in cells])
    if c1 is None:
        k = int(np.argmax(vals))
        w = np.zeros(len(cells))
        w[k] = 1.0
    else:
        A = np.array([[c1[a] for a, b in cells], [c2[b] for a, b in cells]])
        res = linprog(-vals, A_ub=A, b_ub=np.array(B), A_eq=np.ones((1, len(cells))), b_eq=[1.0], bounds=(0, None), method="highs")
        if not res.success:
            raise ValueError("witness LP infeasible under the cost budgets")
        w = np.where(res.x > 1e-12, res.x, 0.0)
        w /= w.sum()
    table = np.zeros((p1m.size, p2m.size))
    for (a, b), m in zip(cells, w):
        table[a, b] = m
    return float(vals @ w), table, [c for c, m in zip(cells, w) if m > 0]


def check_class(mac: StateMac, tau, opts: BoundOptions | None = None, strictness: float = STRICTNESS) -> ClassReport:
    tau = Tau.parse(tau)
    opts = opts or BoundOptions()
    ps = mac.state_law
    states = [tuple(map(int, s)) for s in zip(*np.nonzero(ps > 0))]

    if tau in (Tau.NONE, Tau.STRICTLY_CAUSAL):
        base = baseline_sum_capacity(mac, Tau.NONE, opts)
        p0 = base.achieving_policy
        c = mac.costs
        if c is None:
            J, table, cells = _product_check(mac, p0.p1, p0.p2)
        else:
            J, table, cells = _product_check(mac, p0.p1, p0.p2, c.b1, c.b2, (c.B1, c.B2))
        witness = JointConditional(np.broadcast_to(table, (mac.nS1, mac.nS2) + table.shape).copy())
        cert = [(s1, s2, a, b) for s1, s2 in states for a, b in cells]
        return _report(Tau.NONE, J, base.value, p0, witness, cert, strictness)

    if tau in (Tau.CAUSAL, Tau.NONCAUSAL):
        base = baseline_sum_capacity(mac, Tau.CAUSAL, opts)
        p0c = base.achieving_policy
        fr1 = functional_representation(p0c.p1)
        fr2 = functional_representation(p0c.p2)
        f1, f2 = fr1.g.T.copy(), fr2.g.T.copy()
        lifted = lift_shannon_strategy(mac, f1, f2)
        cu = (None, None, (math.inf, math.inf))
        if mac.costs is not None:
            p_s1, p_s2 = ps.sum(axis=1), ps.sum(axis=0)
            cu = (mac.costs.b1[f1] @ p_s1, mac.costs.b2[f2] @ p_s2, (mac.costs.B1, mac.costs.B2))
        J, table, cells = _product_check(lifted, fr1.p_u, fr2.p_u, *cu)
        p0 = ShannonStrategy(np.outer(fr1.p_u, fr2.p_u), f1, f2)
        witness = ShannonStrategy(table, f1, f2)
        cert = [(s1, s2, a, b) for s1, s2 in states for a, b in cells]
        return _report(Tau.CAUSAL, J, base.value, p0, witness, cert, strictness, maps=(f1, f2))

    base = baseline_sum_capacity(mac, Tau.NONCAUSAL_STATE_COOP, opts)
    p0 = base.achieving_policy
    pi0 = p0.conditional(mac)
    D = _divergence_table(mac, pi0)
    table = np.zeros_like(pi0)
    cert = []
    if mac.costs is None:
        J = 0.0
        for s1, s2 in states:
            sup = [(a, b) for a in support(p0.p1[s1]) for b in support(p0.p2[s2])]
            vals = [D[s1, s2, a, b] for a, b in sup]
            k = int(np.argmax(vals))
            a, b = sup[k]
            table[s1, s2, a, b] = 1.0
            J += ps[s1, s2] * vals[k]
            cert.append((s1, s2, a, b))
        for s1 in range(mac.nS1):
            for s2 in range(mac.nS2):
                if ps[s1, s2] == 0:
                    table[s1, s2] = pi0[s1, s2]
    else:
        J, table, cert = _state_lp(mac, p0, D, states)
    return _report(Tau.NONCAUSAL_STATE_COOP, J, base.value, p0, JointConditional(table), cert, strictness)


def _state_lp(mac, p0, D, states):
    ps = mac.state_law
    var = [(s1, s2, a, b) for s1, s2 in states for a in support(p0.p1[s1]) for b in support(p0.p2[s2])]
    obj = np.array([ps[s1, s2] * D[s1, s2, a, b] for s1, s2, a, b in var])
    A_eq = np.array([[1.0 if (v[0], v[1]) == s else 0.0 for v in var] for s in states])
    c = mac.costs
    A_ub = np.array([[ps[s1, s2] * c.b1[a] for s1, s2, a, b in var], [ps[s1, s2] * c.b2[b] for s1, s2, a, b in var]])
    res = linprog(-obj, A_ub=A_ub, b_ub=[c.B1, c.B2], A_eq=A_eq, b_eq=np.ones(len(states)), bounds=(0, None), method="highs")
    if not res.success:
        raise ValueError("witness LP infeasible under the cost budgets")
    x = np.where(res.x > 1e-12, res.x, 0.0)
    table = np.zeros(p0.conditional(mac).shape)
    for (s1, s2, a, b), m in zip(var, x):
        table[s1, s2, a, b] = m
    table /= np.where(table.sum(axis=(2, 3), keepdims=True) > 0, table.sum(axis=(2, 3), keepdims=True), 1)
    pi0 = p0.conditional(mac)
    empty = table.sum(axis=(2, 3)) == 0
    table[empty] = pi0[empty]
    return float(obj @ x), table, [v for v, m in zip(var, x) if m > 0]


def _report(tau, J, I0, p0, witness, cert, strictness, maps=None) -> ClassReport:
    margin = J - I0
    return ClassReport(tau.value, bool(margin > strictness), p0, witness, float(J), float(I0), float(margin), cert, maps)


def lifted_policies(mac: StateMac, report: ClassReport) -> tuple[StateMac, np.ndarray, np.ndarray]:
    """Channel and conditional laws pi0, pi1 on which the perturbation path lives."""
    if report.maps is not None:
        f1, f2 = report.maps
        lifted = lift_shannon_strategy(mac, f1, f2)
        shape = (lifted.nS1, lifted.nS2) + report.p0.pu.shape
        return lifted, np.broadcast_to(report.p0.pu, shape).copy(), np.broadcast_to(report.witness_p1.pu, shape).copy()
    return mac, report.p0.conditional(mac), report.witness_p1.conditional(mac)


# ------------------------------------------------------------ lambda path


@dataclass
class LambdaPath:
    eps: float
    v: tuple[float, float]
    samples: list = field(default_factory=list)
    h_max: float = 0.0
    residuals: list = field(default_factory=list)


def _as_conditional(mac: StateMac, p) -> np.ndarray:
    if isinstance(p, np.ndarray):
        return p
    return p.conditional(mac)


def _check_support(pi0: np.ndarray, pi1: np.ndarray):
    bad = (pi1 > SUPPORT_TOL) & (pi0 <= SUPPORT_TOL)
    if np.any(bad):
        cell = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ValueError(f"support condition violated at (s1,s2,x1,x2)={cell}")


def path_terms(mac: StateMac, pi0: np.ndarray, pi1: np.ndarray, lam: float) -> dict:
    Q = joint_table(mac, (1 - lam) * pi0 + lam * pi1)
    return {
        "I_X1_S2_given_S1": optim.expr_value(Q, optim.DEP_X1_S2),
        "I_X2_S1_given_S2": optim.expr_value(Q, optim.DEP_X2_S1),
        "I_X1_X2_given_S": optim.expr_value(Q, optim.cmi_expr(("X1",), ("X2",), ("S1", "S2"))),
        "I_channel": optim.expr_value(Q, optim.CHANNEL_MI),
    }


def _h_of_lambda(mac, pi0, pi1, v, eps, lam) -> float:
    t = path_terms(mac, pi0, pi1, lam)
    return (t["I_X1_S2_given_S1"] / v[0] + t["I_X2_S1_given_S2"] / v[1]
            + t["I_X1_X2_given_S"] / (v[0] + v[1]) + eps * lam)


def lambda_star_path(mac: StateMac, p0, p1, v=(1.0, 1.0), eps: float = DEFAULT_EPS, h_grid: Sequence[float] = ()) -> LambdaPath:
    """Solve h = (1/v1)I(X1;S2|S1) + (1/v2)I(X2;S1|S2) + I(X1;X2|S)/(v1+v2) + eps*lam for lam*(h)."""
    if eps <= 0 or min(v) <= 0:
        raise ValueError("eps and v must be positive")
    pi0, pi1 = _as_conditional(mac, p0), _as_conditional(mac, p1)
    _check_support(pi0, pi1)
    H = lambda lam: _h_of_lambda(mac, pi0, pi1, v, eps, lam)
    lam_grid = np.linspace(0.0, 1.0, 1001)
    h_vals = np.array([H(l) for l in lam_grid])
    h_max = float(h_vals.max())
    path = LambdaPath(eps, tuple(v), [], h_max, [])
    lo_lam = 0.0
    for h in sorted(h_grid):
        if h < 0 or h > h_max:
            raise ValueError(f"h={h:g} is beyond the path's validity range [0, {h_max:g}]")
        if h == 0:
            path.samples.append((0.0, 0.0))
            path.residuals.append(0.0)
            continue
        above = np.flatnonzero((h_vals >= h) & (lam_grid >= lo_lam))
        hi = float(lam_grid[above[0]]) if above.size else 1.0
        f = lambda l: H(l) - h
        lam = lo_lam if f(lo_lam) >= 0 else float(brentq(f, lo_lam, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500))
        path.samples.append((float(h), float(lam)))
        path.residuals.append(abs(H(lam) - h))
        lo_lam = lam
    return path


# ------------------------------------------------------------ derivatives


@dataclass
class DerivativeReport:
    d_I_X1_S2_given_S1: float
    d_I_X2_S1_given_S2: float
    d_I_X1_X2_given_S: float
    d_I_channel: float
    payoff_gap: float  # I1 + E[D] - I0
    ok: bool


def _fd(F, steps=(1e-4, 1e-5, 1e-6), central=True):
    ds = []
    f0 = F(0.0)
    for s in steps:
        if central:
            ds.append((F(s) - F(-s)) / (2 * s))
        else:
            ds.append((-3 * f0 + 4 * F(s) - F(2 * s)) / (2 * s))
    ratio = steps[-2] / steps[-1]
    return (ratio**2 * ds[-1] - ds[-2]) / (ratio**2 - 1)


def derivative_check(mac: StateMac, p0, p1, tol: float = 1e-3) -> DerivativeReport:
    pi0, pi1 = _as_conditional(mac, p0), _as_conditional(mac, p1)
    _check_support(pi0, pi1)
    central = bool(np.all((1 + 1e-4) * pi0 - 1e-4 * pi1 >= 0))

    def along(key):
        return _fd(lambda lam: path_terms(mac, pi0, pi1, lam)[key], central=central)

    d1 = along("I_X1_S2_given_S1")
    d2 = along("I_X2_S1_given_S2")
    d3 = along("I_X1_X2_given_S")
    dc = along("I_channel")
    Q0 = joint_table(mac, pi0)
    i0 = optim.expr_value(Q0, optim.CHANNEL_MI)
    gap = _linear_payoff(mac, pi0, pi1) - i0
    ok = abs(d1) <= tol and abs(d2) <= tol and abs(d3) <= tol and dc >= gap - tol
    return DerivativeReport(d1, d2, d3, dc, gap, bool(ok))


def _linear_payoff(mac, pi0, pi1) -> float:
    D = _divergence_table(mac, pi0)
    w = mac.state_law[:, :, None, None] * pi1
    return float(np.sum(np.where(w > 0, w * D, 0.0)))


# ------------------------------------------------------------ slope profile


@dataclass
class SlopeProfile:
    grid: list
    gains: list
    ratios: list
    verdict: str
    detail: dict = field(default_factory=dict)

    def rows(self):
        return list(zip(self.grid, self.gains, self.ratios))


def slope_verdict(ratios: Sequence[float], gains: Sequence[float], window: int, zero_tol: float = 1e-7) -> str:
    r = np.asarray(ratios, dtype=float)
    if np.max(np.abs(gains)) <= zero_tol:
        return "bounded"
    tail = r[-(window + 1):]
    rising = bool(np.all(tail[1:] >= 0.98 * tail[:-1]))
    if rising and r[-1] > 10 * r[0] and r[0] > 0:
        return "diverges"
    if r[-1] <= 2 * max(r[0], 0.0) or r[-1] <= 0:
        return "bounded"
    return "inconclusive"


def slope_profile(mac: StateMac, tau, v=(1.0, 1.0), h0: float = 2**-6, halvings: int = 10,
                  opts: BoundOptions | None = None, eps: float = DEFAULT_EPS) -> SlopeProfile:
    tau = Tau.parse(tau)
    if halvings < 4:
        raise ValueError("need at least 4 halvings")
    if h0 * (v[0] + v[1]) > 0.25 + 1e-12:
        raise ValueError("h0*(v1+v2) must not exceed 0.25 bits")
    opts = opts or BoundOptions()
    grid = [h0 * 2.0**-k for k in range(halvings + 1)]
    base = baseline_sum_capacity(mac, tau, opts).value
    report = check_class(mac, tau, opts)
    path_mac, pi0, pi1 = lifted_policies(mac, report) if report.member else (None, None, None)

    gains_a, gains_b = [], []
    for h in grid:
        b = inner_sum_rate(mac, tau, CoutBudget(h * v[0], h * v[1]), opts)
        gains_a.append(b.value - base)
        gb = -math.inf
        if report.member:
            try:
                lp = lambda_star_path(path_mac, pi0, pi1, v, eps, [h])
                lam = lp.samples[0][1]
                t = path_terms(path_mac, pi0, pi1, lam)
                gb = t["I_channel"] - t["I_X1_X2_given_S"] - report.baseline
            except ValueError:
                pass
        gains_b.append(gb)
    gains = [max(a, b) for a, b in zip(gains_a, gains_b)]
    ratios = [g / h for g, h in zip(gains, grid)]
    verdict = slope_verdict(ratios, gains, max(4, halvings - 2))
    return SlopeProfile(grid, gains, ratios, verdict, {"inner_gains": gains_a, "path_gains": gains_b, "baseline": base, "member": report.member})
