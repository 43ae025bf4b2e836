"""Numerical machinery behind the bound engine.

Objectives and constraints are linear combinations of joint entropies of
marginals of ``Q(s1,s2,x1,x2,y) = p(s) pi(x1,x2|s) W(y|s,x1,x2)``. Gradients
with respect to ``pi`` follow from dH(G)/dQ = -log2 Q_G (constants drop out
because every expression used here has coefficients summing to zero).
"""

from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .channel import StateMac, joint_table
from .prob import make_rng

AX = {"S1": 0, "S2": 1, "X1": 2, "X2": 3, "Y": 4}

Expr = tuple[tuple[float, tuple[str, ...]], ...]


def cmi_expr(a, b, c=()) -> Expr:
    a, b, c = tuple(a), tuple(b), tuple(c)
    return ((1.0, a + c), (1.0, b + c), (-1.0, a + b + c), (-1.0, c))


CHANNEL_MI = cmi_expr(("X1", "X2"), ("Y",), ("S1", "S2"))
DEP_X1X2 = cmi_expr(("X1",), ("X2",))
DEP_X1_S2 = cmi_expr(("X1",), ("S2",), ("S1",))
DEP_X2_S1 = cmi_expr(("X2",), ("S1",), ("S2",))
# H(X1|S1) + H(X2|S2) - H(X1,X2|S1,S2)
DEP_SUM = (
    (1.0, ("S1", "X1")), (-1.0, ("S1",)), (1.0, ("S2", "X2")), (-1.0, ("S2",)),
    (-1.0, ("S1", "S2", "X1", "X2")), (1.0, ("S1", "S2")),
)
ONE_EXPR_X1_GIVEN_REST = cmi_expr(("X1",), ("Y",), ("S1", "S2", "X2"))
ONE_EXPR_X2_GIVEN_REST = cmi_expr(("X2",), ("Y",), ("S1", "S2", "X1"))


def _marg(Q: np.ndarray, names: Sequence[str]) -> np.ndarray:
    keep = {AX[a] for a in names}
    drop = tuple(i for i in range(5) if i not in keep)
    return Q.sum(axis=drop, keepdims=True) if drop else Q


def _log2pos(m: np.ndarray) -> np.ndarray:
    return np.log2(np.where(m > 0, m, 1.0))


def expr_value(Q: np.ndarray, expr: Expr) -> float:
    v = 0.0
    for coef, g in expr:
        if not g:
            continue
        m = _marg(Q, g)
        v -= coef * float(np.sum(m * _log2pos(m)))
    return v


def expr_value_grad(mac: StateMac, pi: np.ndarray, expr: Expr) -> tuple[float, np.ndarray]:
    """Value of an entropy expression and its gradient w.r.t. pi(x1,x2|s1,s2)."""
    Q = joint_table(mac, pi)
    v = 0.0
    gQ = np.zeros_like(Q)
    for coef, g in expr:
        if not g:
            continue
        m = _marg(Q, g)
        lm = _log2pos(m)
        v -= coef * float(np.sum(m * lm))
        gQ -= coef * lm
    weight = mac.state_law[:, :, None, None, None] * mac.kernel
    return v, np.sum(weight * gQ, axis=-1)


# ------------------------------------------------------------ baseline (BA)


@dataclass
class BAResult:
    value: float
    p1: np.ndarray  # (R1, X1)
    p2: np.ndarray  # (R2, X2)
    iterations: int
    converged: bool


def _rows_index(mac: StateMac, per_state: bool, enc: int) -> np.ndarray:
    """Row of the encoder policy used in each state cell (S1,S2)."""
    if not per_state:
        return np.zeros((mac.nS1, mac.nS2), dtype=np.intp)
    if enc == 1:
        return np.broadcast_to(np.arange(mac.nS1)[:, None], (mac.nS1, mac.nS2))
    return np.broadcast_to(np.arange(mac.nS2)[None, :], (mac.nS1, mac.nS2))


def _pi_from_rows(p1, p2, r1, r2) -> np.ndarray:
    return p1[r1][..., :, None] * p2[r2][..., None, :]


def _block_payoff(mac: StateMac, pi: np.ndarray, enc: int) -> np.ndarray:
    """Per-(s, x_enc) expected D(W(.|s,x1,x2) || p(.|s)) averaged over the other input.

    Returns array (S1,S2,X_enc), not yet weighted by p(s).
    """
    W = mac.kernel
    py = np.einsum("ijab,ijaby->ijy", pi, W)
    lr = np.where(W > 0, np.log2(np.where(W > 0, W, 1.0) / np.where(py > 0, py, 1.0)[:, :, None, None, :]), 0.0)
    d = np.sum(W * lr, axis=-1)  # (S1,S2,X1,X2)
    if enc == 1:
        other = pi.sum(axis=2)  # p(x2|s) under the product
        return np.einsum("ijab,ijb->ija", d, other)
    other = pi.sum(axis=3)
    return np.einsum("ijab,ija->ijb", d, other)


def _ba_block(mac, p_self, p_other, r_self, r_other, enc, cost, budget, iters, tol):
    ps = mac.state_law
    R = p_self.shape[0]
    mass = np.zeros(R)
    np.add.at(mass, r_self.ravel(), ps.ravel())
    gap = np.inf
    for _ in range(iters):
        pi = _pi_from_rows(p_self, p_other, r_self, r_other) if enc == 1 else _pi_from_rows(p_other, p_self, r_other, r_self)
        D = _block_payoff(mac, pi, enc)  # (S1,S2,X)
        G = np.zeros((R, D.shape[-1]))
        np.add.at(G, r_self.ravel(), (ps[:, :, None] * D).reshape(-1, D.shape[-1]))
        active = mass > 0
        Gn = np.zeros_like(G)
        Gn[active] = G[active] / mass[active, None]
        cur = np.sum(p_self * Gn, axis=1)
        gap = float(np.sum(mass * (Gn.max(axis=1) - cur)))
        if gap < tol and cost is None:
            break
        new = _ba_step(p_self, Gn, mass, cost, budget)
        p_self = np.where(active[:, None], new, p_self)
        if cost is not None and gap < tol:
            break
    return p_self, gap


def _ba_step(p, Gn, mass, cost, budget):
    def step(lam):
        e = Gn - (0.0 if cost is None else lam * cost[None, :])
        e = e - e.max(axis=1, keepdims=True)
        q = p * np.exp2(e)
        return q / q.sum(axis=1, keepdims=True)

    q = step(0.0)
    if cost is None:
        return q

    def spend(q):
        return float(np.sum(mass[:, None] * q * cost[None, :]))

    if spend(q) <= budget + 1e-12:
        return q
    lo, hi = 0.0, 1.0
    while spend(step(hi)) > budget and hi < 1e8:
        hi *= 4
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if spend(step(mid)) > budget:
            lo = mid
        else:
            hi = mid
    return step(hi)


_BA_CACHE: dict = {}
_BA_CACHE_MAX = 256


def _fingerprint(mac: StateMac) -> bytes:
    h = hashlib.sha1()
    h.update(np.ascontiguousarray(mac.state_law).tobytes())
    h.update(np.ascontiguousarray(mac.kernel).tobytes())
    h.update(repr(mac.kernel.shape).encode())
    if mac.costs is not None:
        c = mac.costs
        h.update(np.concatenate([c.b1, c.b2, [c.B1, c.B2]]).tobytes())
    return h.digest()


def ba_sum_capacity(
    mac: StateMac,
    per_state: bool,
    starts: int = 32,
    seed: int = 0,
    tol: float = 1e-9,
    max_iter: int = 10_000,
    warm: Sequence[tuple[np.ndarray, np.ndarray]] = (),
) -> tuple[BAResult, int]:
    """Alternating block Blahut-Arimoto for max over p(x1[|s1])p(x2[|s2]) of I(X1,X2;Y|S).

    Results are deterministic in the arguments and memoized on a channel fingerprint.
    """
    key = None
    if not warm:
        key = (_fingerprint(mac), per_state, starts, seed, tol, max_iter)
        if key in _BA_CACHE:
            return _BA_CACHE[key]
    r1 = _rows_index(mac, per_state, 1)
    r2 = _rows_index(mac, per_state, 2)
    R1 = mac.nS1 if per_state else 1
    R2 = mac.nS2 if per_state else 1
    c1 = c2 = None
    B1 = B2 = math.inf
    if mac.costs is not None:
        c1, c2, B1, B2 = mac.costs.b1, mac.costs.b2, mac.costs.B1, mac.costs.B2

    rng = make_rng(seed, 0xBA)
    inits = [(np.full((R1, mac.nX1), 1 / mac.nX1), np.full((R2, mac.nX2), 1 / mac.nX2))]
    for _ in range(starts):
        inits.append((rng.dirichlet(np.ones(mac.nX1), size=R1), rng.dirichlet(np.ones(mac.nX2), size=R2)))
    inits.extend((np.array(a, float), np.array(b, float)) for a, b in warm)

    results = []
    for p1, p2 in inits:
        if c1 is not None:
            p1 = _cost_feasible(p1, c1, B1, mac, r1)
            p2 = _cost_feasible(p2, c2, B2, mac, r2)
        total, conv = 0, False
        prev = -np.inf
        while total < max_iter:
            p1, g1 = _ba_block(mac, p1, p2, r1, r2, 1, c1, B1, 50, tol)
            p2, g2 = _ba_block(mac, p2, p1, r2, r1, 2, c2, B2, 50, tol)
            total += 100
            val = expr_value(joint_table(mac, _pi_from_rows(p1, p2, r1, r2)), CHANNEL_MI)
            if g1 < tol and g2 < tol:
                conv = True
                break
            if val - prev < 1e-13 and total >= 400:
                conv = g1 < 1e-6 and g2 < 1e-6
                break
            prev = val
        val = expr_value(joint_table(mac, _pi_from_rows(p1, p2, r1, r2)), CHANNEL_MI)
        results.append(BAResult(val, p1, p2, total, conv))
    best = pick_best(results, key=lambda r: np.concatenate([r.p1.ravel(), r.p2.ravel()]))
    best.p1.setflags(write=False)
    best.p2.setflags(write=False)
    if key is not None:
        if len(_BA_CACHE) >= _BA_CACHE_MAX:
            _BA_CACHE.pop(next(iter(_BA_CACHE)))
        _BA_CACHE[key] = (best, len(inits))
    return best, len(inits)


def _cost_feasible(p, cost, budget, mac, rows):
    """Mix a start toward the cheapest symbol until the expected cost fits."""
    ps = mac.state_law
    mass = np.zeros(p.shape[0])
    np.add.at(mass, rows.ravel(), ps.ravel())
    cheap = np.zeros_like(p)
    cheap[:, int(np.argmin(cost))] = 1.0
    if float(np.sum(mass[:, None] * cheap * cost)) > budget + 1e-12:
        raise InfeasibleCostError("cost budget below the cheapest input symbol")

    def spend(t):
        return float(np.sum(mass[:, None] * ((1 - t) * p + t * cheap) * cost))

    if spend(0) <= budget:
        return p
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if spend(mid) > budget else (lo, mid)
    return (1 - hi) * p + hi * cheap


class InfeasibleCostError(ValueError):
    pass


def pick_best(results, key, value=lambda r: r.value, tie: float = 1e-9):
    """Best value; ties within ``tie`` broken by lexicographically smallest vector."""
    top = max(value(r) for r in results)
    close = [r for r in results if value(r) >= top - tie]
    return min(close, key=lambda r: tuple(np.round(key(r), 12)))


# ------------------------------------------------------ constrained ascent


@dataclass
class Constraint:
    name: str
    expr: Optional[Expr]  # entropy expression, or None for a linear cost
    bound: float
    cost: Optional[np.ndarray] = None  # (X1,) or (X2,) for linear costs
    enc: int = 0

    def value_grad(self, mac: StateMac, pi: np.ndarray) -> tuple[float, np.ndarray]:
        if self.expr is not None:
            return expr_value_grad(mac, pi, self.expr)
        w = mac.state_law[:, :, None, None]
        c = self.cost[None, None, :, None] if self.enc == 1 else self.cost[None, None, None, :]
        g = w * c
        return float(np.sum(g * pi)), np.broadcast_to(g, pi.shape).copy()


class Param:
    """Softmax parametrization of pi(x1,x2|s1,s2) in one of two joint shapes."""

    def __init__(self, mac: StateMac, per_state: bool):
        self.mac = mac
        self.per_state = per_state
        self.cells = mac.nX1 * mac.nX2
        self.rows = mac.nS1 * mac.nS2 if per_state else 1

    @property
    def size(self) -> int:
        return self.rows * self.cells

    def probs(self, z: np.ndarray) -> np.ndarray:
        z = z.reshape(self.rows, self.cells)
        e = np.exp(z - z.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)

    def pi(self, p: np.ndarray) -> np.ndarray:
        m = self.mac
        t = p.reshape(self.rows, m.nX1, m.nX2)
        if self.per_state:
            return t.reshape(m.nS1, m.nS2, m.nX1, m.nX2)
        return np.broadcast_to(t[0], (m.nS1, m.nS2, m.nX1, m.nX2))

    def pull_back(self, p: np.ndarray, g_pi: np.ndarray) -> np.ndarray:
        """Chain rule from d/dpi to d/dz."""
        if self.per_state:
            g = g_pi.reshape(self.rows, self.cells)
        else:
            g = g_pi.sum(axis=(0, 1)).reshape(1, self.cells)
        p = p.reshape(self.rows, self.cells)
        return (p * (g - np.sum(p * g, axis=1, keepdims=True))).ravel()

    def logits(self, p: np.ndarray) -> np.ndarray:
        return np.log(np.clip(p.reshape(self.rows, self.cells), 1e-30, None)).ravel()

    def independent_projection(self, p: np.ndarray) -> np.ndarray:
        """Product of the conditional marginals: p(x1|s1)p(x2|s2) (or p(x1)p(x2))."""
        m = self.mac
        pi = self.pi(p)
        if not self.per_state:
            t = pi[0, 0]
            return np.outer(t.sum(1), t.sum(0)).reshape(1, -1)
        ps = m.state_law
        j = ps[:, :, None, None] * pi
        p1 = j.sum(axis=(1, 3))  # (S1,X1)
        p2 = j.sum(axis=(0, 2))  # (S2,X2)
        p1 = _normalize_rows(p1, m.nX1)
        p2 = _normalize_rows(p2, m.nX2)
        # states with zero mass keep their own rows
        prod = np.einsum("ia,jb->ijab", p1, p2)
        own = pi
        out = np.where((ps > 0)[:, :, None, None], prod, own)
        return out.reshape(self.rows, self.cells)


def _normalize_rows(a, k):
    s = a.sum(axis=1, keepdims=True)
    return np.where(s > 0, a / np.where(s > 0, s, 1), 1.0 / k)


@dataclass
class AscentResult:
    value: float
    p: np.ndarray  # (rows, cells)
    slacks: dict
    feasible: bool


@dataclass
class AscentReport:
    starts: int
    iterations: int
    converged: bool
    results: list = field(default_factory=list)


def penalized_ascent(
    mac: StateMac,
    per_state: bool,
    objective: Expr,
    constraints: list[Constraint],
    starts: int = 32,
    seed: int = 0,
    warm: Sequence[np.ndarray] = (),
    rounds: int = 6,
    rho0: float = 1.0,
) -> tuple[AscentResult, AscentReport]:
    """Maximize an entropy expression under constraints g_k <= c_k.

    Each start runs L-BFGS on softmax logits with an exterior quadratic
    penalty whose weight grows x10 per round; the end point is then mixed
    toward a cheap / independent point until every constraint holds, so the
    reported value always comes from a feasible policy.
    """
    prm = Param(mac, per_state)
    rng = make_rng(seed, 0xA5C)
    inits = [np.full(prm.size, 1.0 / prm.cells)]
    for _ in range(starts):
        inits.append(rng.dirichlet(np.ones(prm.cells), size=prm.rows).ravel())
    inits.extend(np.asarray(w, float).ravel() for w in warm)

    scales = [max(c.bound, 1e-4) if c.expr is not None else max(c.bound, 1e-3) for c in constraints]
    ev = _FusedEval(mac, objective, constraints)
    total_iter, all_conv = 0, True
    results = []
    for p0 in inits:
        z = prm.logits(p0)
        rho = rho0
        for _ in range(rounds):
            def fun(z, rho=rho):
                p = prm.probs(z)
                v, cvals, grad = ev(prm.pi(p), rho, scales)
                return v, prm.pull_back(p, grad)

            res = minimize(fun, z, jac=True, method="L-BFGS-B", options={"maxiter": 400, "gtol": 1e-9, "ftol": 1e-13})
            z = res.x
            total_iter += res.nit
            all_conv &= bool(res.success) or res.nit >= 1
            _, cvals, _ = ev(prm.pi(prm.probs(z)), 0.0, scales, grad=False)
            if all(cv <= c.bound for cv, c in zip(cvals, constraints)):
                break  # penalty inactive; larger weights give the same optimum
            rho *= 10.0
        p = project_feasible(mac, prm, prm.probs(z), constraints)
        results.append(_evaluate(mac, prm, p, objective, constraints))
    for w in warm:
        # warm points compete as they are, so a feasible warm start is never lost
        p = project_feasible(mac, prm, np.asarray(w, float).reshape(prm.rows, prm.cells), constraints)
        results.append(_evaluate(mac, prm, p, objective, constraints))
    feasible = [r for r in results if r.feasible]
    best = pick_best(feasible, key=lambda r: r.p.ravel())
    return best, AscentReport(len(inits), total_iter, all_conv, results)


class _FusedEval:
    """Penalized objective -f + rho * sum((max(0, g_k - c_k) / scale_k)^2) sharing one joint table."""

    def __init__(self, mac: StateMac, objective: Expr, constraints: list[Constraint]):
        self.mac = mac
        self.objective = objective
        self.constraints = constraints
        groups = {g for _, g in objective if g}
        for c in constraints:
            if c.expr is not None:
                groups |= {g for _, g in c.expr if g}
        self.groups = sorted(groups)
        self.weight = mac.state_law[:, :, None, None, None] * mac.kernel
        self.lin = []
        for c in constraints:
            if c.expr is None:
                cc = c.cost[None, None, :, None] if c.enc == 1 else c.cost[None, None, None, :]
                self.lin.append(mac.state_law[:, :, None, None] * cc)
            else:
                self.lin.append(None)

    def __call__(self, pi, rho, scales, grad=True):
        Q = self.weight * pi[..., None]
        logs, ents = {}, {}
        for g in self.groups:
            m = _marg(Q, g)
            lm = _log2pos(m)
            logs[g] = lm
            ents[g] = -float(np.sum(m * lm))

        def val(expr):
            return sum(coef * ents[g] for coef, g in expr if g)

        def gq(expr, w):
            out = 0.0
            for coef, g in expr:
                if g:
                    out = out - (w * coef) * logs[g]
            return out

        f = -val(self.objective)
        gQ = gq(self.objective, -1.0) if grad else None
        gpi_lin = 0.0
        cvals = []
        for c, sc, lin in zip(self.constraints, scales, self.lin):
            cv = val(c.expr) if lin is None else float(np.sum(lin * pi))
            cvals.append(cv)
            viol = cv - c.bound
            if viol > 0 and rho > 0:
                f += rho * (viol / sc) ** 2
                if grad:
                    w = 2 * rho * viol / sc**2
                    if lin is None:
                        gQ = gQ + gq(c.expr, w)
                    else:
                        gpi_lin = gpi_lin + w * lin
        if not grad:
            return f, cvals, None
        gpi = np.sum(self.weight * np.broadcast_to(gQ, Q.shape), axis=-1) + gpi_lin
        return f, cvals, gpi


def _evaluate(mac, prm, p, objective, constraints) -> AscentResult:
    pi = prm.pi(p)
    Q = joint_table(mac, pi)
    val = expr_value(Q, objective)
    slacks = {}
    ok = True
    for c in constraints:
        cv = c.value_grad(mac, pi)[0]
        slacks[c.name] = c.bound - cv
        ok &= cv <= c.bound + 1e-12
    return AscentResult(val, p, slacks, ok)


def _satisfied(mac, prm, p, constraints, kinds) -> bool:
    pi = prm.pi(p)
    return all(c.value_grad(mac, pi)[0] <= c.bound + 1e-13 for c in constraints if (c.expr is None) == kinds)


def project_feasible(mac: StateMac, prm: Param, p: np.ndarray, constraints: list[Constraint]) -> np.ndarray:
    """Mix toward feasibility: costs first (cheapest symbols), then dependence."""
    p = p.reshape(prm.rows, prm.cells)
    costs = [c for c in constraints if c.expr is None]
    deps = [c for c in constraints if c.expr is not None]
    if costs and not _satisfied(mac, prm, p, costs, True):
        cheap = np.zeros((mac.nX1, mac.nX2))
        i1 = int(np.argmin(mac.costs.b1)) if mac.costs is not None else 0
        i2 = int(np.argmin(mac.costs.b2)) if mac.costs is not None else 0
        cheap[i1, i2] = 1.0
        cheap = np.broadcast_to(cheap.ravel(), p.shape)
        p = _bisect_mix(mac, prm, p, cheap, costs, True)
    if deps and not _satisfied(mac, prm, p, deps, False):
        target = prm.independent_projection(p)
        p = _bisect_mix(mac, prm, p, target, deps, False)
    return p


def _bisect_mix(mac, prm, p, target, constraints, kinds):
    lo, hi = 0.0, 1.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if _satisfied(mac, prm, (1 - mid) * p + mid * target, constraints, kinds):
            hi = mid
        else:
            lo = mid
    return (1 - hi) * p + hi * target


# ------------------------------------------------------------ grid oracle


def simplex_grid(k: int, step: float) -> np.ndarray:
    m = int(round(1 / step))
    pts = [c for c in itertools.product(range(m + 1), repeat=k - 1) if sum(c) <= m]
    return np.array([list(c) + [m - sum(c)] for c in pts], dtype=float) / m


def grid_sum_capacity(mac: StateMac, per_state: bool, step: float = 1 / 64, chunk: int = 256) -> tuple[float, np.ndarray, np.ndarray]:
    """Exhaustive grid maximum of I(X1,X2;Y|S) over (conditionally) independent inputs.

    Independent of the Blahut-Arimoto path; intended for alphabets <= 3.
    """
    R1 = mac.nS1 if per_state else 1
    R2 = mac.nS2 if per_state else 1
    g1, g2 = simplex_grid(mac.nX1, step), simplex_grid(mac.nX2, step)
    if len(g1) ** R1 * len(g2) ** R2 > 5e7:
        raise ValueError("grid too large for exhaustive cross-check")
    P1 = np.array(list(itertools.product(g1, repeat=R1)))  # (K1,R1,X1)
    P2 = np.array(list(itertools.product(g2, repeat=R2)))
    r1 = _rows_index(mac, per_state, 1)
    r2 = _rows_index(mac, per_state, 2)
    W, ps = mac.kernel, mac.state_law
    hW = -np.sum(np.where(W > 0, W * np.log2(np.where(W > 0, W, 1)), 0.0), axis=-1)  # (S1,S2,X1,X2)
    A = P1[:, r1]  # (K1,S1,S2,X1)
    Bm = P2[:, r2]  # (K2,S1,S2,X2)
    best, arg = -np.inf, (None, None)
    for i in range(0, len(A), chunk):
        a = A[i:i + chunk]
        py = np.einsum("kija,lijb,ijaby->klijy", a, Bm, W)
        hy = -np.sum(np.where(py > 0, py * np.log2(np.where(py > 0, py, 1)), 0.0), axis=-1)
        hc = np.einsum("kija,lijb,ijab->klij", a, Bm, hW)
        val = np.einsum("ij,klij->kl", ps, hy - hc)
        k, l = np.unravel_index(np.argmax(val), val.shape)
        if val[k, l] > best:
            best, arg = float(val[k, l]), (P1[i + k], P2[l])
    return best, arg[0], arg[1]
