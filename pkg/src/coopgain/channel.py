"""State-dependent two-user MACs, input policies and channel transforms."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .prob import MAX_ALPHABET, NORM_TOL, CondKernel, JointDist, make_rng


class Tau(str, enum.Enum):
    """Encoder state information regime."""

    NONE = "0"
    STRICTLY_CAUSAL = "T-1"
    CAUSAL = "T"
    NONCAUSAL = "inf"
    NONCAUSAL_STATE_COOP = "inf,s"

    @classmethod
    def parse(cls, value) -> "Tau":
        if isinstance(value, Tau):
            return value
        v = str(value).strip().lower().replace(" ", "").replace("∞", "inf").replace("(", "").replace(")", "")
        aliases = {
            "0": cls.NONE, "none": cls.NONE,
            "t-1": cls.STRICTLY_CAUSAL, "strictly_causal": cls.STRICTLY_CAUSAL,
            "t": cls.CAUSAL, "causal": cls.CAUSAL,
            "inf": cls.NONCAUSAL, "noncausal": cls.NONCAUSAL,
            "inf,s": cls.NONCAUSAL_STATE_COOP, "infs": cls.NONCAUSAL_STATE_COOP,
            "noncausal_state_coop": cls.NONCAUSAL_STATE_COOP,
        }
        if v not in aliases:
            raise ValueError(f"unknown causality tag {value!r}")
        return aliases[v]

    @property
    def encoders_see_state(self) -> bool:
        return self in (Tau.CAUSAL, Tau.NONCAUSAL, Tau.NONCAUSAL_STATE_COOP)


def _check_size(name: str, k: int):
    if not 1 <= k <= MAX_ALPHABET:
        raise ValueError(f"alphabet {name} has size {k}; allowed 1..{MAX_ALPHABET}")


@dataclass(frozen=True, eq=False)
class Costs:
    b1: np.ndarray
    b2: np.ndarray
    B1: float
    B2: float

    def __post_init__(self):
        for name in ("b1", "b2"):
            v = np.asarray(getattr(self, name), dtype=float)
            if np.any(v < 0):
                raise ValueError("cost values must be nonnegative")
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        if self.B1 < 0 or self.B2 < 0:
            raise ValueError("cost budgets must be nonnegative")


@dataclass(frozen=True, eq=False)
class StateMac:
    """Finite state-dependent MAC p(y|s1,s2,x1,x2) with state law p(s1,s2).

    ``kernel`` has shape (S1, S2, X1, X2, Y) and ``state_law`` shape (S1, S2).
    """

    state_law: np.ndarray
    kernel: np.ndarray
    costs: Optional[Costs] = None
    name: str = "custom"

    def __post_init__(self):
        ps = np.asarray(self.state_law, dtype=float)
        w = np.asarray(self.kernel, dtype=float)
        if ps.ndim != 2 or w.ndim != 5 or w.shape[:2] != ps.shape:
            raise ValueError("state_law must be (S1,S2) and kernel (S1,S2,X1,X2,Y)")
        for nm, k in zip(("S1", "S2", "X1", "X2", "Y"), w.shape):
            _check_size(nm, k)
        if np.any(ps < 0) or abs(ps.sum() - 1) > NORM_TOL:
            raise ValueError("state law is not a distribution")
        # validates row normalization and reports the offending cell
        CondKernel(("S1", "S2", "X1", "X2"), ("Y",), w)
        if self.costs is not None:
            if self.costs.b1.shape != (w.shape[2],) or self.costs.b2.shape != (w.shape[3],):
                raise ValueError("cost vectors must match input alphabets")
        ps, w = ps.copy(), w.copy()
        ps.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "state_law", ps)
        object.__setattr__(self, "kernel", w)

    @property
    def sizes(self) -> tuple[int, int, int, int, int]:
        return self.kernel.shape

    @property
    def nS1(self): return self.kernel.shape[0]
    @property
    def nS2(self): return self.kernel.shape[1]
    @property
    def nX1(self): return self.kernel.shape[2]
    @property
    def nX2(self): return self.kernel.shape[3]
    @property
    def nY(self): return self.kernel.shape[4]

    def equals(self, other: "StateMac", tol: float = 1e-12) -> bool:
        if self.sizes != other.sizes:
            return False
        if not (np.allclose(self.state_law, other.state_law, atol=tol, rtol=0)
                and np.allclose(self.kernel, other.kernel, atol=tol, rtol=0)):
            return False
        if (self.costs is None) != (other.costs is None):
            return False
        if self.costs is not None:
            a, b = self.costs, other.costs
            return (np.allclose(a.b1, b.b1, atol=tol) and np.allclose(a.b2, b.b2, atol=tol)
                    and abs(a.B1 - b.B1) <= tol and abs(a.B2 - b.B2) <= tol)
        return True


# ---------------------------------------------------------------- policies


@dataclass(frozen=True, eq=False)
class Independent:
    p1: np.ndarray  # (X1,)
    p2: np.ndarray  # (X2,)

    def conditional(self, mac: StateMac) -> np.ndarray:
        pi = np.multiply.outer(self.p1, self.p2)
        return np.broadcast_to(pi, (mac.nS1, mac.nS2) + pi.shape).copy()


@dataclass(frozen=True, eq=False)
class CondIndependent:
    p1: np.ndarray  # (S1, X1)
    p2: np.ndarray  # (S2, X2)

    def conditional(self, mac: StateMac) -> np.ndarray:
        return np.einsum("ia,jb->ijab", self.p1, self.p2)


@dataclass(frozen=True, eq=False)
class ShannonStrategy:
    """Auxiliary inputs U_i mapped to channel inputs by x_i = f_i(u_i, s_i)."""

    pu: np.ndarray  # (U1, U2), product or joint
    f1: np.ndarray  # int (U1, S1) -> X1
    f2: np.ndarray  # int (U2, S2) -> X2

    def conditional(self, mac: StateMac) -> np.ndarray:
        out = np.zeros((mac.nS1, mac.nS2, mac.nX1, mac.nX2))
        for u1, u2 in zip(*np.nonzero(self.pu)):
            for s1 in range(mac.nS1):
                for s2 in range(mac.nS2):
                    out[s1, s2, self.f1[u1, s1], self.f2[u2, s2]] += self.pu[u1, u2]
        return out


@dataclass(frozen=True, eq=False)
class JointConditional:
    table: np.ndarray  # (S1, S2, X1, X2)

    def conditional(self, mac: StateMac) -> np.ndarray:
        return np.array(self.table, dtype=float)


InputPolicy = Union[Independent, CondIndependent, ShannonStrategy, JointConditional]


def validate_policy(policy: InputPolicy, mac: StateMac) -> None:
    def simplex(a, axis, what):
        a = np.asarray(a, dtype=float)
        if np.any(a < -NORM_TOL) or np.any(np.abs(a.sum(axis=axis) - 1) > 1e-7):
            raise ValueError(f"{what} is not normalized")

    if isinstance(policy, Independent):
        if policy.p1.shape != (mac.nX1,) or policy.p2.shape != (mac.nX2,):
            raise ValueError("alphabet mismatch between policy and channel")
        simplex(policy.p1, -1, "p(x1)")
        simplex(policy.p2, -1, "p(x2)")
    elif isinstance(policy, CondIndependent):
        if policy.p1.shape != (mac.nS1, mac.nX1) or policy.p2.shape != (mac.nS2, mac.nX2):
            raise ValueError("alphabet mismatch between policy and channel")
        simplex(policy.p1, -1, "p(x1|s1)")
        simplex(policy.p2, -1, "p(x2|s2)")
    elif isinstance(policy, ShannonStrategy):
        if policy.f1.shape != (policy.pu.shape[0], mac.nS1) or policy.f2.shape != (policy.pu.shape[1], mac.nS2):
            raise ValueError("strategy maps must be total on U_i x S_i")
        if policy.f1.min() < 0 or policy.f1.max() >= mac.nX1 or policy.f2.min() < 0 or policy.f2.max() >= mac.nX2:
            raise ValueError("strategy map range outside X_i")
        simplex(policy.pu, None, "p(u1,u2)")
    elif isinstance(policy, JointConditional):
        if policy.table.shape != (mac.nS1, mac.nS2, mac.nX1, mac.nX2):
            raise ValueError("alphabet mismatch between policy and channel")
        simplex(policy.table.reshape(mac.nS1, mac.nS2, -1), -1, "p(x1,x2|s1,s2)")
    else:
        raise TypeError(f"unknown policy type {type(policy).__name__}")


def policy_vector(policy: InputPolicy) -> np.ndarray:
    """Flattened probability vector, used for deterministic tie-breaking."""
    if isinstance(policy, Independent):
        return np.concatenate([policy.p1, policy.p2])
    if isinstance(policy, CondIndependent):
        return np.concatenate([policy.p1.ravel(), policy.p2.ravel()])
    if isinstance(policy, ShannonStrategy):
        return np.asarray(policy.pu, dtype=float).ravel()
    return np.asarray(policy.table, dtype=float).ravel()


def policy_to_dict(policy: InputPolicy) -> dict:
    if isinstance(policy, Independent):
        return {"shape": "independent", "p1": policy.p1.tolist(), "p2": policy.p2.tolist()}
    if isinstance(policy, CondIndependent):
        return {"shape": "cond_independent", "p1": policy.p1.tolist(), "p2": policy.p2.tolist()}
    if isinstance(policy, ShannonStrategy):
        return {"shape": "shannon_strategy", "pu": policy.pu.tolist(),
                "f1": policy.f1.tolist(), "f2": policy.f2.tolist()}
    return {"shape": "joint_conditional", "table": policy.table.tolist()}


# ---------------------------------------------------------------- builtins


def _adder_mod3() -> StateMac:
    w = np.zeros((3, 1, 2, 2, 3))
    for s, x1, x2 in itertools.product(range(3), range(2), range(2)):
        w[s, 0, x1, x2, (x1 + x2 + s) % 3] = 1.0
    return StateMac(np.full((3, 1), 1 / 3), w, name="mod3_adder")


def _identity() -> StateMac:
    w = np.zeros((1, 1, 2, 2, 2))
    for x1, x2 in itertools.product(range(2), range(2)):
        w[0, 0, x1, x2, x1] = 1.0
    return StateMac(np.ones((1, 1)), w, name="trivial_identity")


def _random(sizes=(2, 2, 2, 2, 3), seed: int = 0, sparsity: float = 0.0) -> StateMac:
    sizes = tuple(int(k) for k in sizes)
    if len(sizes) != 5:
        raise ValueError("random_seeded needs sizes (S1,S2,X1,X2,Y)")
    for nm, k in zip(("S1", "S2", "X1", "X2", "Y"), sizes):
        _check_size(nm, k)
    rng = make_rng(0x5EED, int(seed))
    ps = rng.dirichlet(np.ones(sizes[0] * sizes[1])).reshape(sizes[:2])
    w = rng.dirichlet(np.ones(sizes[4]), size=sizes[:4])
    if sparsity > 0:
        w = np.where(rng.random(w.shape) < sparsity, 0.0, w)
        w[w.sum(axis=-1) == 0, 0] = 1.0
        w /= w.sum(axis=-1, keepdims=True)
    return StateMac(ps, w, name=f"random_seeded_{seed}")


BUILTINS: dict[str, Callable[..., StateMac]] = {
    "mod3_adder": _adder_mod3,
    "trivial_identity": _identity,
    "random_seeded": _random,
}


def make_builtin(name: str, **params) -> StateMac:
    if name not in BUILTINS:
        raise ValueError(f"unknown builtin channel {name!r}; choose from {sorted(BUILTINS)}")
    return BUILTINS[name](**params)


# ---------------------------------------------------------------- transforms

JOINT_AXES = ("S1", "S2", "X1", "X2", "Y")


def joint_table(mac: StateMac, cond: np.ndarray) -> np.ndarray:
    """p(s1,s2,x1,x2,y) from a conditional input law p(x1,x2|s1,s2)."""
    return mac.state_law[:, :, None, None, None] * cond[..., None] * mac.kernel


def induced_joint(mac: StateMac, policy: InputPolicy) -> JointDist:
    validate_policy(policy, mac)
    if isinstance(policy, ShannonStrategy):
        nU1, nU2 = policy.pu.shape
        t = np.zeros((mac.nS1, mac.nS2, nU1, nU2, mac.nX1, mac.nX2, mac.nY))
        for s1, s2, u1, u2 in itertools.product(range(mac.nS1), range(mac.nS2), range(nU1), range(nU2)):
            x1, x2 = policy.f1[u1, s1], policy.f2[u2, s2]
            t[s1, s2, u1, u2, x1, x2] = mac.state_law[s1, s2] * policy.pu[u1, u2] * mac.kernel[s1, s2, x1, x2]
        return JointDist(("S1", "S2", "U1", "U2", "X1", "X2", "Y"), t)
    return JointDist(JOINT_AXES, joint_table(mac, policy.conditional(mac)))


def fold_state_into_output(mac: StateMac) -> StateMac:
    """Stateless MAC with output (S1,S2,Y): q((s,y)|x1,x2) = p(s) p(y|s,x1,x2)."""
    nS1, nS2, nX1, nX2, nY = mac.sizes
    q = mac.state_law[:, :, None, None, None] * mac.kernel
    q = np.moveaxis(q, (0, 1), (2, 3)).reshape(nX1, nX2, nS1 * nS2 * nY)
    if q.shape[-1] > MAX_ALPHABET:
        raise ValueError(f"folded output alphabet {q.shape[-1]} exceeds {MAX_ALPHABET}")
    return StateMac(np.ones((1, 1)), q[None, None], costs=mac.costs, name=f"{mac.name}:folded")


def folded_output_index(mac: StateMac, s1: int, s2: int, y: int) -> int:
    return (s1 * mac.nS2 + s2) * mac.nY + y


def marginalize_state(mac: StateMac) -> StateMac:
    w = np.einsum("ij,ijabk->abk", mac.state_law, mac.kernel)
    return StateMac(np.ones((1, 1)), w[None, None], costs=mac.costs, name=f"{mac.name}:no_state")


def strategy_maps(nX: int, nS: int) -> np.ndarray:
    """All Shannon strategies s -> x as an int array (X**S, S); row u is the u-th function."""
    return np.array(list(itertools.product(range(nX), repeat=nS)), dtype=np.intp).reshape(-1, nS)


def lift_shannon_strategy(mac: StateMac, f1: np.ndarray, f2: np.ndarray) -> StateMac:
    """Channel from (U1,U2) to Y: p(y|s,u1,u2) = p(y|s,f1(u1,s1),f2(u2,s2))."""
    f1 = np.asarray(f1, dtype=np.intp)
    f2 = np.asarray(f2, dtype=np.intp)
    if f1.ndim != 2 or f1.shape[1] != mac.nS1 or f2.ndim != 2 or f2.shape[1] != mac.nS2:
        raise ValueError("maps must be arrays of shape (U_i, S_i)")
    if f1.min() < 0 or f1.max() >= mac.nX1 or f2.min() < 0 or f2.max() >= mac.nX2:
        raise ValueError("map range outside X_i")
    nU1, nU2 = f1.shape[0], f2.shape[0]
    for nm, k in (("U1", nU1), ("U2", nU2)):
        if k > MAX_ALPHABET:
            raise ValueError(f"{nm} has {k} symbols (cap {MAX_ALPHABET}); choose a smaller U alphabet")
    s1 = np.arange(mac.nS1)[:, None, None, None]
    s2 = np.arange(mac.nS2)[None, :, None, None]
    x1 = f1.T[:, None, :, None]  # (S1,1,U1,1)
    x2 = f2.T[None, :, None, :]  # (1,S2,1,U2)
    w = mac.kernel[s1, s2, x1, x2]
    # input costs would depend on the state after lifting; the lift drops them
    return StateMac(mac.state_law, w, name=f"{mac.name}:lifted")


def expected_cost(mac: StateMac, policy: InputPolicy) -> tuple[float, float, bool]:
    """(E b1(X1), E b2(X2), feasible) under the induced joint."""
    if mac.costs is None:
        raise ValueError("channel has no cost functions")
    j = induced_joint(mac, policy)
    p1 = j.marginal(("X1",)).table
    p2 = j.marginal(("X2",)).table
    e1 = float(p1 @ mac.costs.b1)
    e2 = float(p2 @ mac.costs.b2)
    ok = e1 <= mac.costs.B1 + 1e-9 and e2 <= mac.costs.B2 + 1e-9
    return e1, e2, ok
