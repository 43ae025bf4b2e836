"""Finite-alphabet probability objects and information measures.

Everything is measured in bits. Tables are dense numpy arrays; alphabets are
small (at most ``MAX_ALPHABET`` symbols per axis).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

NORM_TOL = 1e-9
SUPPORT_TOL = 1e-9
MAX_ALPHABET = 16
LOG2E = 1.0 / np.log(2.0)

AXIS_NAMES = ("S1", "S2", "X1", "X2", "Y", "U1", "U2", "Q")


class InfiniteDivergenceError(ValueError):
    """Raised when D(p||q) is infinite because supp(p) is not inside supp(q)."""

    def __init__(self, msg: str, state=None):
        super().__init__(msg)
        self.state = state


def _xlogx(p: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p, dtype=float)
    m = p > 0
    out[m] = p[m] * np.log2(p[m])
    return out


@dataclass(frozen=True, eq=False)
class Dist:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float).ravel()
        if p.size < 1:
            raise ValueError("empty alphabet")
        if np.any(p < -NORM_TOL):
            raise ValueError(f"negative probability in {p}")
        if abs(p.sum() - 1.0) > NORM_TOL:
            raise ValueError(f"probabilities sum to {p.sum():.12g}, not 1")
        p = np.clip(p, 0.0, None)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    def __len__(self) -> int:
        return self.probs.size

    def __eq__(self, other) -> bool:
        return isinstance(other, Dist) and np.array_equal(self.probs, other.probs)

    __hash__ = None


def as_probs(d) -> np.ndarray:
    if isinstance(d, Dist):
        return d.probs
    return Dist(d).probs


@dataclass(frozen=True, eq=False)
class JointDist:
    """Joint law over named axes, stored as a dense table."""

    axes: tuple[str, ...]
    table: np.ndarray

    def __post_init__(self):
        axes = tuple(self.axes)
        t = np.asarray(self.table, dtype=float)
        if len(set(axes)) != len(axes):
            raise ValueError(f"duplicate axes {axes}")
        if t.ndim != len(axes):
            raise ValueError(f"table has {t.ndim} dims but {len(axes)} axes")
        if np.any(t < -NORM_TOL):
            raise ValueError("negative mass in joint table")
        if abs(t.sum() - 1.0) > NORM_TOL:
            raise ValueError(f"joint mass {t.sum():.12g} != 1")
        t = np.clip(t, 0.0, None)
        t.setflags(write=False)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "table", t)

    @property
    def shape(self) -> dict[str, int]:
        return dict(zip(self.axes, self.table.shape))

    def _idx(self, names: Iterable[str]) -> list[int]:
        names = list(names)
        missing = [a for a in names if a not in self.axes]
        if missing:
            raise KeyError(f"axes {missing} not in {self.axes}")
        return [self.axes.index(a) for a in names]

    def marginal(self, names: Iterable[str]) -> "JointDist":
        names = tuple(names)
        idx = self._idx(names)
        drop = tuple(i for i in range(len(self.axes)) if i not in idx)
        t = self.table.sum(axis=drop) if drop else self.table
        # axes of t are now in self.axes order restricted to idx
        kept = [a for a in self.axes if a in names]
        perm = [kept.index(a) for a in names]
        return JointDist(names, np.transpose(t, perm) if names else np.array(t.sum()))

    def entropy(self, names: Iterable[str] = None) -> float:
        names = self.axes if names is None else tuple(names)
        if not names:
            return 0.0
        t = self.marginal(names).table
        return float(-_xlogx(t).sum())

    def cond_entropy(self, a: Iterable[str], c: Iterable[str] = ()) -> float:
        a, c = tuple(a), tuple(c)
        return self.entropy(a + c) - self.entropy(c)


@dataclass(frozen=True, eq=False)
class CondKernel:
    """p(to | from); table shape is from-axes sizes followed by to-axes sizes."""

    from_axes: tuple[str, ...]
    to_axes: tuple[str, ...]
    table: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        nf, nt = len(self.from_axes), len(self.to_axes)
        if t.ndim != nf + nt:
            raise ValueError("kernel table rank does not match axes")
        if np.any(t < -NORM_TOL):
            raise ValueError("negative kernel entry")
        rows = t.reshape(int(np.prod(t.shape[:nf], dtype=int)), -1).sum(axis=1)
        bad = np.flatnonzero(np.abs(rows - 1.0) > NORM_TOL)
        if bad.size:
            cell = np.unravel_index(bad[0], t.shape[:nf])
            raise ValueError(
                f"kernel row {dict(zip(self.from_axes, map(int, cell)))} sums to {rows[bad[0]]:.12g}"
            )
        t = np.clip(t, 0.0, None)
        t.setflags(write=False)
        object.__setattr__(self, "from_axes", tuple(self.from_axes))
        object.__setattr__(self, "to_axes", tuple(self.to_axes))
        object.__setattr__(self, "table", t)

    def rows(self) -> np.ndarray:
        nf = len(self.from_axes)
        return self.table.reshape(int(np.prod(self.table.shape[:nf], dtype=int)), -1)

    def row(self, cell) -> np.ndarray:
        return self.table[tuple(np.atleast_1d(cell))].ravel()


def entropy(d) -> float:
    p = as_probs(d)
    return float(-_xlogx(p).sum())


def cond_mutual_info(j: JointDist, a: Sequence[str], b: Sequence[str], c: Sequence[str] = ()) -> float:
    """I(A;B|C) = H(A,C) + H(B,C) - H(A,B,C) - H(C)."""
    a, b, c = tuple(a), tuple(b), tuple(c)
    if set(a) & set(b) or set(a) & set(c) or set(b) & set(c):
        raise ValueError(f"axis sets overlap: {a}, {b}, {c}")
    if not a or not b:
        return 0.0
    val = j.entropy(a + c) + j.entropy(b + c) - j.entropy(a + b + c) - j.entropy(c)
    # clamp float cancellation noise
    return max(val, 0.0)


def kl_divergence(p, q) -> float:
    p, q = as_probs(p), as_probs(q)
    if p.shape != q.shape:
        raise ValueError("alphabet mismatch")
    m = p > 0
    if np.any(q[m] <= 0):
        raise InfiniteDivergenceError("supp(p) is not contained in supp(q)")
    return max(float(np.sum(p[m] * np.log2(p[m] / q[m]))), 0.0)


def expected_state_kl(p1_y_given_s: CondKernel | np.ndarray, p0_y_given_s: CondKernel | np.ndarray, p_s) -> float:
    """E_S[ D(p1(.|S) || p0(.|S)) ] with rows indexed by flattened state."""
    r1 = p1_y_given_s.rows() if isinstance(p1_y_given_s, CondKernel) else np.asarray(p1_y_given_s, float)
    r0 = p0_y_given_s.rows() if isinstance(p0_y_given_s, CondKernel) else np.asarray(p0_y_given_s, float)
    ps = as_probs(p_s)
    if r1.shape != r0.shape or r1.shape[0] != ps.size:
        raise ValueError("alphabet mismatch")
    total = 0.0
    for s in np.flatnonzero(ps > 0):
        try:
            total += ps[s] * kl_divergence(r1[s], r0[s])
        except InfiniteDivergenceError as e:
            raise InfiniteDivergenceError(f"support violation at state {s}", state=int(s)) from e
    return total


def support(d, tol: float = SUPPORT_TOL) -> tuple[int, ...]:
    p = as_probs(d) if isinstance(d, Dist) else np.asarray(d, dtype=float).ravel()
    return tuple(int(i) for i in np.flatnonzero(p > tol))


def typicality_test(
    sequences: Mapping[str, Sequence[int]],
    j: JointDist,
    groups: Iterable[Sequence[str]] = (),
    delta: float = 0.1,
) -> bool:
    """Weak typicality of a tuple of sequences.

    For the full axis set of ``j`` and every listed group G, checks
    ``|-(1/n) log2 p_G(seq_G) - H(G)| <= delta``. A zero-probability symbol
    makes the tuple atypical.
    """
    seqs = {a: np.asarray(sequences[a], dtype=np.intp) for a in j.axes}
    lengths = {s.size for s in seqs.values()}
    if len(lengths) != 1 or 0 in lengths:
        raise ValueError("sequences must share a common positive length")
    n = lengths.pop()
    todo = [tuple(j.axes)] + [tuple(g) for g in groups if tuple(g) != tuple(j.axes)]
    for g in todo:
        m = j.marginal(g)
        p = m.table[tuple(seqs[a] for a in g)]
        if np.any(p <= 0):
            return False
        emp = -np.sum(np.log2(p)) / n
        if abs(emp - m.entropy()) > delta + 1e-12:
            return False
    return True


def make_rng(*key: int) -> np.random.Generator:
    """Counter-based generator whose stream is a pure function of ``key``."""
    words = np.random.SeedSequence([int(k) for k in key]).generate_state(2, np.uint64)
    return np.random.Generator(np.random.Philox(key=words))


def sample_sequence(d, n: int, key: Sequence[int], given: Sequence[int] | None = None) -> np.ndarray:
    """Draw an i.i.d. sequence from ``d``.

    With a ``CondKernel`` (or a 2-D row array), ``given`` is the flattened
    conditioning sequence and each symbol is drawn from the matching row.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    u = make_rng(*key).random(n)
    if isinstance(d, CondKernel) or (not isinstance(d, Dist) and np.ndim(d) == 2):
        rows = d.rows() if isinstance(d, CondKernel) else np.asarray(d, dtype=float)
        if given is None or len(given) != n:
            raise ValueError("conditional sampling needs a conditioning sequence of length n")
        cdf = np.cumsum(rows, axis=1)
        cdf[:, -1] = 1.0
        g = np.asarray(given, dtype=np.intp)
        return (u[:, None] >= cdf[g]).sum(axis=1)
    cdf = np.cumsum(as_probs(d))
    cdf[-1] = 1.0
    return np.searchsorted(cdf, u, side="right")
