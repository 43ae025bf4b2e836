"""Monte Carlo simulation of the conference-assisted coding scheme.

Codebooks are lazy: each codeword is drawn on demand from a counter-based
generator keyed by ``(seed, encoder, w, z[, hash(s_i^n)])``, so nothing of size
``2^{nR}`` is ever materialized.

Decoding runs one of two ways. If the number of ``(w1, z1, w2, z2)`` tuples is
at most ``enum_cap``, the decoder enumerates all of them and applies the
typicality rule exactly. Above that, it uses an independent-competitor
estimate:
  * every wrong tuple re-draws the codewords it does not share with the
    transmitted tuple;
  * each such tuple is typical with a probability computed exactly (up to
    binning) by a dynamic program over time steps;
  * the per-trial success probability then becomes one Bernoulli draw.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import binomtest

from .bounds import CoutBudget
from .channel import (
    InputPolicy,
    JointConditional,
    ShannonStrategy,
    StateMac,
    Tau,
    joint_table,
    lift_shannon_strategy,
    validate_policy,
)
from .prob import make_rng, sample_sequence

DECODE_LIMIT = 2**30
_CW_TAG, _TRIAL_TAG = 0xC0DE, 0x7121


def _list_size(bits: float) -> int:
    """floor(2^bits) as an exact Python int (bits may exceed the float range)."""
    if bits < 0:
        raise ValueError("negative rate or budget")
    ip = math.floor(bits)
    if ip < 53:
        return math.floor(2.0**bits)
    return int(2.0 ** (bits - ip) * 2**52) << (ip - 52)


@dataclass
class CodeConfig:
    mac: StateMac
    policy: InputPolicy
    n: int
    rates: tuple[float, float]
    budget: CoutBudget = field(default_factory=lambda: CoutBudget(0.0, 0.0))
    delta: float = 0.1
    eps_dec: float = 0.1
    tau: Tau | str = Tau.NONE
    seed: int = 0
    trials: int = 100
    search_cap: int = 2**20
    enum_cap: int = 2**16
    threads: int = 1

    def __post_init__(self):
        self.tau = Tau.parse(self.tau)
        if self.n < 1:
            raise ValueError("blocklength must be >= 1")
        if self.delta <= 0:
            raise ValueError("CF typicality slack must be > 0")
        if self.eps_dec < 0:
            raise ValueError("decoder slack must be >= 0")
        if min(self.rates) < 0:
            raise ValueError("rates must be >= 0")
        validate_policy(self.policy, self.mac)
        if self.tau in (Tau.CAUSAL, Tau.NONCAUSAL) and not isinstance(self.policy, ShannonStrategy):
            raise ValueError("tau in {T, inf} needs a ShannonStrategy policy")

    @property
    def sizes(self) -> tuple[int, int, int, int]:
        """(M1, M2, L1, L2): message and CF-index list sizes."""
        n = self.n
        return (
            _list_size(n * self.rates[0]),
            _list_size(n * self.rates[1]),
            _list_size(n * self.budget.c1),
            _list_size(n * self.budget.c2),
        )


@dataclass
class SimResult:
    trials: int
    cf_success_rate: float
    error_rate: float
    cf_ci: tuple[float, float]
    error_ci: tuple[float, float]
    mean_costs: tuple[float, float]
    records: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "cf_success_rate": self.cf_success_rate,
            "error_rate": self.error_rate,
            "cf_ci": list(self.cf_ci),
            "error_ci": list(self.error_ci),
            "mean_costs": list(self.mean_costs),
        }


@dataclass(frozen=True)
class CFThresholds:
    t1: float
    t2: float
    t_sum: float

    def verdict(self, budget: CoutBudget) -> bool:
        return budget.c1 > self.t1 and budget.c2 > self.t2 and budget.total > self.t_sum

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.t1, self.t2, self.t_sum)


# ---------------------------------------------------------------------------
# effective (possibly lifted) problem


@dataclass
class _Plan:
    mac: StateMac
    pi: np.ndarray  # (S1,S2,X1,X2)
    see_state: bool
    law1: np.ndarray  # (S1 or 1, X1)
    law2: np.ndarray
    maps: Optional[tuple[np.ndarray, np.ndarray]]  # Shannon maps when lifted


def _marginal_laws(mac: StateMac, pi: np.ndarray, see_state: bool):
    ps = mac.state_law
    j1 = np.einsum("ij,ijab->ia", ps, pi)  # p(s1, x1)
    j2 = np.einsum("ij,ijab->jb", ps, pi)
    if not see_state:
        return j1.sum(axis=0, keepdims=True), j2.sum(axis=0, keepdims=True)

    def cond(j):
        m = j.sum(axis=1, keepdims=True)
        return np.where(m > 0, j / np.where(m > 0, m, 1.0), 1.0 / j.shape[1])

    return cond(j1), cond(j2)


def _plan(cfg: CodeConfig) -> _Plan:
    mac, pol, maps = cfg.mac, cfg.policy, None
    see = cfg.tau is Tau.NONCAUSAL_STATE_COOP
    if cfg.tau in (Tau.CAUSAL, Tau.NONCAUSAL):
        # per-symbol strategies become a message-only code over (U1, U2)
        maps = (np.asarray(pol.f1), np.asarray(pol.f2))
        mac = lift_shannon_strategy(cfg.mac, *maps)
        pi = np.broadcast_to(np.asarray(pol.pu, float), (mac.nS1, mac.nS2) + pol.pu.shape).copy()
    else:
        pi = pol.conditional(mac)
        if not see:
            t = pi.reshape(mac.nS1 * mac.nS2, -1)
            if not np.allclose(t, t[0], atol=1e-9):
                raise ValueError("tau without encoder state needs a state-independent policy")
    l1, l2 = _marginal_laws(mac, pi, see)
    return _Plan(mac, pi, see, l1, l2, maps)


# ---------------------------------------------------------------------------
# codebooks


def _state_hash(s: np.ndarray) -> int:
    return int.from_bytes(hashlib.sha256(np.asarray(s, np.int64).tobytes()).digest()[:8], "little")


def _codeword(plan: _Plan, seed: int, i: int, w: int, z: int, s_i: Optional[np.ndarray], n: int) -> np.ndarray:
    law = plan.law1 if i == 1 else plan.law2
    if plan.see_state:
        return sample_sequence(law, n, (seed, _CW_TAG, i, w, z, _state_hash(s_i)), given=s_i)
    return sample_sequence(law[0], n, (seed, _CW_TAG, i, w, z))


def codeword_for(cfg: CodeConfig, i: int, w: int, z: int, s_i: Optional[np.ndarray] = None) -> np.ndarray:
    """Codeword x_i^n(w, z | s_i^n); indices are 1-based."""
    M1, M2, L1, L2 = cfg.sizes
    M, L = (M1, L1) if i == 1 else (M2, L2)
    if i not in (1, 2) or not (1 <= w <= M and 1 <= z <= L):
        raise ValueError(f"index out of range: i={i}, w={w}, z={z}")
    plan = _plan(cfg)
    if plan.see_state:
        if s_i is None or len(s_i) != cfg.n:
            raise ValueError("state-dependent codebooks need s_i^n")
        s_i = np.asarray(s_i, np.intp)
    return _codeword(plan, cfg.seed, i, w, z, s_i, cfg.n)


def _codebook(plan, cfg, i, w, zs, s_i) -> np.ndarray:
    return np.stack([_codeword(plan, cfg.seed, i, w, int(z), s_i, cfg.n) for z in zs]) if len(zs) else np.zeros((0, cfg.n), np.intp)


# ---------------------------------------------------------------------------
# CF selection


def _neglog(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.where(p > 0, -np.log2(np.where(p > 0, p, 1.0)), np.inf)


def _entropy(p: np.ndarray) -> float:
    q = p[p > 0]
    return float(-np.sum(q * np.log2(q)))


def _typical_rows(stat: np.ndarray, h: float, n: int, slack: float) -> np.ndarray:
    return np.abs(stat / n - h) <= slack + 1e-12


def cf_select(cfg: CodeConfig, w1: int, w2: int, s1: np.ndarray, s2: np.ndarray) -> tuple[int, int, bool]:
    """Lexicographically smallest (z1, z2) whose tuple is CF-typical, else (1, 1, False).

    Groups: full joint, (S1,X1), (S2,X2), (S1,S2). Without encoder state the
    CF sees only messages, so the test is on (X1, X2) with groups X1, X2.
    """
    _, _, L1, L2 = cfg.sizes
    if L1 * L2 > cfg.search_cap:
        raise ValueError(f"CF pair space {L1 * L2} exceeds search_cap {cfg.search_cap}")
    plan = _plan(cfg)
    return _cf_scan(plan, cfg, w1, w2, np.asarray(s1, np.intp), np.asarray(s2, np.intp))


def _cf_scan(plan: _Plan, cfg: CodeConfig, w1, w2, s1, s2, chunk: int = 32):
    _, _, L1, L2 = cfg.sizes
    n, d = cfg.n, cfg.delta
    mac = plan.mac
    P = mac.state_law[:, :, None, None] * plan.pi  # (S1,S2,X1,X2)
    if not plan.see_state:
        P = P.sum(axis=(0, 1))[None, None]
        s1 = s2 = np.zeros(n, np.intp)
    else:
        ps = P.sum(axis=(2, 3))
        if not _typical_rows(_neglog(ps)[s1, s2].sum(), _entropy(ps), n, d):
            return 1, 1, False
    p1 = P.sum(axis=(1, 3))
    p2 = P.sum(axis=(0, 2))
    full_log, h_full = _neglog(P), _entropy(P)

    lg = full_log[s1, s2]  # (n, X1, X2)
    tt = np.arange(n)
    lp1, lp2 = _neglog(p1), _neglog(p2)
    h1, h2 = _entropy(p1), _entropy(p2)

    # encoder-2 candidates are drawn lazily, in growing chunks, and filtered on (S2,X2)
    x2_rows, z2_idx, drawn = [], [], 0

    def more_z2() -> bool:
        nonlocal drawn
        if drawn >= L2:
            return False
        zs = np.arange(drawn + 1, min(L2, drawn + min(max(chunk, drawn), 4096)) + 1)
        x2 = _codebook(plan, cfg, 2, w2, zs, s2)
        ok = _typical_rows(lp2[s2[None, :], x2].sum(axis=1), h2, n, d)
        x2_rows.append(x2[ok])
        z2_idx.append(zs[ok])
        drawn = int(zs[-1])
        return True

    start = 1
    while start <= L1:
        zs = np.arange(start, min(L1, start + min(max(chunk, start - 1), 4096) - 1) + 1)
        start = int(zs[-1]) + 1
        x1 = _codebook(plan, cfg, 1, w1, zs, s1)
        ok1 = _typical_rows(lp1[s1[None, :], x1].sum(axis=1), h1, n, d)
        for a in np.flatnonzero(ok1):
            j = 0
            while j < len(x2_rows) or more_z2():
                x2 = x2_rows[j]
                if x2.shape[0]:
                    stat = lg[tt[None, :], x1[a][None, :], x2].sum(axis=1)
                    hit = np.flatnonzero(_typical_rows(stat, h_full, n, d))
                    if hit.size:
                        return int(zs[a]), int(z2_idx[j][hit[0]]), True
                j += 1
    return 1, 1, False


def cf_feasibility_thresholds(policy: InputPolicy, delta: float, mac: StateMac) -> CFThresholds:
    """Budget thresholds above which the CF search succeeds with high probability."""
    validate_policy(policy, mac)
    P = mac.state_law[:, :, None, None] * policy.conditional(mac)

    def H(*axes):
        drop = tuple(i for i in range(4) if i not in axes)
        return _entropy(P.sum(axis=drop))

    h1_s1 = H(0, 2) - H(0)
    h2_s2 = H(1, 3) - H(1)
    h1_s = H(0, 1, 2) - H(0, 1)
    h2_s = H(0, 1, 3) - H(0, 1)
    h12_s = H(0, 1, 2, 3) - H(0, 1)
    return CFThresholds(
        max(h1_s1 - h1_s, 0.0) + 24 * delta,
        max(h2_s2 - h2_s, 0.0) + 24 * delta,
        max(h1_s1 + h2_s2 - h12_s, 0.0) + 6 * delta,
    )


# ---------------------------------------------------------------------------
# decoding


def _decode_joint(plan: _Plan) -> np.ndarray:
    return joint_table(plan.mac, plan.pi)  # (S1,S2,X1,X2,Y)


def decode_typical(cfg: CodeConfig, y: np.ndarray, s1: np.ndarray, s2: np.ndarray) -> tuple[int, int]:
    """Exhaustive typicality decoder over every (w1, z1, w2, z2)."""
    M1, M2, L1, L2 = cfg.sizes
    if M1 * L1 * M2 * L2 > DECODE_LIMIT:
        raise ValueError(f"decoder enumeration of {M1 * L1 * M2 * L2} tuples exceeds 2^30")
    plan = _plan(cfg)
    return _decode_exhaustive(plan, cfg, np.asarray(y, np.intp), np.asarray(s1, np.intp), np.asarray(s2, np.intp))


def _decode_exhaustive(plan, cfg, y, s1, s2) -> tuple[int, int]:
    M1, M2, L1, L2 = cfg.sizes
    if M1 == 1 and M2 == 1:
        return 1, 1
    n = cfg.n
    Q = _decode_joint(plan)
    lg = _neglog(Q)[s1, s2, :, :, y]  # (n, X1, X2)
    h = _entropy(Q)
    tt = np.arange(n)
    x1 = np.concatenate([_codebook(plan, cfg, 1, w, range(1, L1 + 1), s1) for w in range(1, M1 + 1)])
    x2 = np.concatenate([_codebook(plan, cfg, 2, w, range(1, L2 + 1), s2) for w in range(1, M2 + 1)])
    found = set()
    rows = max(1, 2**22 // (x2.shape[0] * n))
    for a0 in range(0, x1.shape[0], rows):
        a1 = min(x1.shape[0], a0 + rows)
        stat = lg[tt, x1[a0:a1, None, :], x2[None, :, :]].sum(axis=-1)
        for a, b in zip(*np.nonzero(_typical_rows(stat, h, n, cfg.eps_dec))):
            found.add(((a0 + a) // L1 + 1, b // L2 + 1))
            if len(found) > 1:
                return 1, 1
    return found.pop() if found else (1, 1)


def _log_typical_prob(values: np.ndarray, probs: np.ndarray, lo: float, hi: float, width: float) -> float:
    """log2 P(lo <= sum_t V_t <= hi) for independent V_t with per-step atoms.

    values/probs: (n, K); infinite values never pass. Terms are rounded to a
    grid of ``width``; partial sums above ``hi`` are dropped since terms are >= 0.
    """
    probs = np.where(np.isfinite(values), probs, 0.0)
    values = np.where(np.isfinite(values), values, 0.0)
    base = np.where(probs > 0, values, np.inf).min(axis=1)
    if not np.all(np.isfinite(base)):
        return -math.inf
    lo, hi = lo - base.sum(), hi - base.sum()
    if hi < 0:
        return -math.inf
    ex = np.rint((values - base[:, None]) / width).astype(np.int64)
    nb = int(math.floor(hi / width + 0.5)) + 1
    dist = np.zeros(nb)
    dist[0] = 1.0
    logscale = 0.0
    for t in range(values.shape[0]):
        new = np.zeros(nb)
        for k in np.flatnonzero(probs[t] > 0):
            e = ex[t, k]
            if e < nb:
                new[e:] += probs[t, k] * dist[: nb - e]
        tot = new.sum()
        if tot <= 0:
            return -math.inf
        dist = new / tot
        logscale += math.log2(tot)
    i0 = max(0, int(math.ceil(lo / width - 0.5)))
    mass = dist[i0:].sum()
    return logscale + math.log2(mass) if mass > 0 else -math.inf


def _log1mexp2(lp: float, log_count: float) -> float:
    """log2 of (1 - 2^lp)^(2^log_count), the chance that no candidate passes."""
    if lp == -math.inf or log_count == -math.inf:
        return 0.0
    if lp >= 0:
        return -math.inf
    return (2.0**log_count) * math.log1p(-(2.0**lp)) / math.log(2.0)


def _decode_estimate(plan, cfg, trial_rng, w, x1, x2, y, s1, s2) -> bool:
    """Independent-competitor estimate of a correct decision, realized as one draw."""
    if cfg.eps_dec <= 0:
        raise ValueError("the large-codebook decoder estimate needs eps_dec > 0")
    M1, M2, L1, L2 = cfg.sizes
    n, eps = cfg.n, cfg.eps_dec
    Q = _decode_joint(plan)
    h = _entropy(Q)
    lg = _neglog(Q)[s1, s2, :, :, y]  # (n, X1, X2)
    tt = np.arange(n)
    true_ok = bool(_typical_rows(lg[tt, x1, x2].sum(), h, n, eps))

    q1 = plan.law1[s1] if plan.see_state else np.broadcast_to(plan.law1[0], (n, plan.law1.shape[1]))
    q2 = plan.law2[s2] if plan.see_state else np.broadcast_to(plan.law2[0], (n, plan.law2.shape[1]))
    lo, hi, width = n * (h - eps), n * (h + eps), eps / 10.0
    fresh1 = _log_typical_prob(lg[tt, :, x2], q1, lo, hi, width)
    fresh2 = _log_typical_prob(lg[tt, x1, :], q2, lo, hi, width)
    both = _log_typical_prob(lg.reshape(n, -1), (q1[:, :, None] * q2[:, None, :]).reshape(n, -1), lo, hi, width)

    def lc(k: int) -> float:
        return math.log2(k) if k > 0 else -math.inf

    wrong = (
        _log1mexp2(fresh1, lc((M1 - 1) * L1))
        + _log1mexp2(fresh2, lc((M2 - 1) * L2))
        + _log1mexp2(both, lc((M1 - 1) * L1 * (M2 * L2 - 1) + (L1 - 1) * (M2 - 1) * L2))
    )
    none_right = -math.inf if true_ok else (
        _log1mexp2(fresh1, lc(L1 - 1)) + _log1mexp2(fresh2, lc(L2 - 1)) + _log1mexp2(both, lc((L1 - 1) * (L2 - 1)))
    )
    p_no_wrong, p_none_right = 2.0**wrong, 2.0**none_right
    if w == (1, 1):
        # every fallback lands on the true pair; only a lone wrong pair hurts
        p_ok = 1.0 - p_none_right * (1.0 - p_no_wrong)
    else:
        p_ok = (1.0 - p_none_right) * p_no_wrong
    return bool(trial_rng.random() < p_ok)


# ---------------------------------------------------------------------------
# trials


def _uniform_index(rng: np.random.Generator, m: int) -> int:
    """Uniform integer in [1, m] for arbitrarily large m."""
    if m <= 2**62:
        return int(rng.integers(1, m + 1))
    nbits = (m - 1).bit_length()
    words = (nbits + 31) // 32
    while True:
        v = 0
        for word in rng.integers(0, 2**32, size=words, dtype=np.uint64):
            v = (v << 32) | int(word)
        v &= (1 << nbits) - 1
        if v < m:
            return v + 1


def _one_trial(plan: _Plan, cfg: CodeConfig, k: int) -> dict:
    mac, n = plan.mac, cfg.n
    M1, M2, L1, L2 = cfg.sizes
    rng = make_rng(cfg.seed, _TRIAL_TAG, k)
    s = sample_sequence(mac.state_law.ravel(), n, (cfg.seed, _TRIAL_TAG, k, 1))
    s1, s2 = np.divmod(s, mac.nS2)
    w = (_uniform_index(rng, M1), _uniform_index(rng, M2))
    z1, z2, found = _cf_scan(plan, cfg, w[0], w[1], s1, s2)
    x1 = _codeword(plan, cfg.seed, 1, w[0], z1, s1, n)
    x2 = _codeword(plan, cfg.seed, 2, w[1], z2, s2, n)
    cell = np.ravel_multi_index((s1, s2, x1, x2), mac.kernel.shape[:4])
    y = sample_sequence(mac.kernel.reshape(-1, mac.nY), n, (cfg.seed, _TRIAL_TAG, k, 2), given=cell)
    if M1 == 1 and M2 == 1:
        correct = True
    elif M1 * L1 * M2 * L2 <= cfg.enum_cap:
        correct = _decode_exhaustive(plan, cfg, y, s1, s2) == w
    else:
        correct = _decode_estimate(plan, cfg, rng, w, x1, x2, y, s1, s2)
    if plan.maps is not None:
        # lifted inputs are strategies; the channel inputs are f_i(u_i, s_i)
        x1, x2 = plan.maps[0][x1, s1], plan.maps[1][x2, s2]
    costs = cfg.mac.costs
    c = (float(costs.b1[x1].mean()), float(costs.b2[x2].mean())) if costs is not None else (0.0, 0.0)
    return {"trial": k, "cf_found": bool(found), "error": not correct, "z": (z1, z2), "cost1": c[0], "cost2": c[1]}


def _wilson(k: int, n: int) -> tuple[float, float]:
    ci = binomtest(k, n).proportion_ci(confidence_level=0.95, method="wilson")
    return float(ci.low), float(ci.high)


def run_trials(cfg: CodeConfig) -> SimResult:
    """Estimate the error and CF success rates; reproducible from ``cfg.seed``."""
    if cfg.trials < 1:
        raise ValueError("trials must be >= 1")
    _, _, L1, L2 = cfg.sizes
    if L1 * L2 > cfg.search_cap:
        raise ValueError(f"CF pair space {L1 * L2} exceeds search_cap {cfg.search_cap}")
    plan = _plan(cfg)
    ks = range(cfg.trials)
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as ex:
            recs = list(ex.map(lambda k: _one_trial(plan, cfg, k), ks))
    else:
        recs = [_one_trial(plan, cfg, k) for k in ks]
    n = len(recs)
    errs = sum(r["error"] for r in recs)
    hits = sum(r["cf_found"] for r in recs)
    return SimResult(
        trials=n,
        cf_success_rate=hits / n,
        error_rate=errs / n,
        cf_ci=_wilson(hits, n),
        error_ci=_wilson(errs, n),
        mean_costs=(float(np.mean([r["cost1"] for r in recs])), float(np.mean([r["cost2"] for r in recs]))),
        records=recs,
    )
