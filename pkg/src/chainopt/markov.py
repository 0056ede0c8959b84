"""Finite Markov chain structure analysis and limit computation.

Decomposes a row-stochastic transition matrix into recurrent classes,
transient states, and class periods, then computes the two limit objects
that drive chain-weighted optimization: the Cesaro (time-averaged) limit
of the matrix powers, which exists even for periodic chains, and the
plain power limit taken along multiples of the global period. Also
provides seeded trajectory sampling.

States are 0-based throughout the in-memory API. Text files, JSON
reports, and error messages use 1-based state labels.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

__all__ = [
    "MarkovError",
    "NegativeEntryError",
    "RowSumError",
    "SingularSolveError",
    "NoConvergenceError",
    "InvalidDistributionError",
    "TransitionMatrix",
    "ChainDecomposition",
    "ChainState",
    "validate_stochastic",
    "decompose",
    "cesaro_limit",
    "cesaro_limit_oracle",
    "power_limit",
    "limiting_distribution",
    "make_chain",
    "step",
    "walk",
    "decomposition_report",
    "read_matrix_text",
    "write_matrix_text",
    "read_distribution_text",
]

ROW_SUM_TOL = 1e-12
FIXED_POINT_TOL = 1e-12
SOLVE_RESIDUAL_TOL = 1e-10


class MarkovError(Exception):
    """Base class for chain analysis failures."""


class NegativeEntryError(MarkovError):
    """A transition probability is negative."""

    def __init__(self, row: int, col: int, value: float):
        self.row = row
        self.col = col
        self.value = value
        super().__init__(f"entry ({row}, {col}) is negative: {value!r}")


class RowSumError(MarkovError):
    """A row of the transition matrix does not sum to one."""

    def __init__(self, row: int, deviation: float):
        self.row = row
        self.deviation = deviation
        super().__init__(f"row {row} sums to 1 {deviation:+.6e}")


class SingularSolveError(MarkovError):
    """A stationary or absorption system is numerically singular."""


class NoConvergenceError(MarkovError):
    """Power iteration hit its cap before reaching the fixed point."""


class InvalidDistributionError(MarkovError):
    """A vector claimed to be a probability distribution is not one."""


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Validated row-stochastic matrix with cached sampling tables.

    Construct through validate_stochastic; direct construction runs the
    same checks. The row-wise cumulative sums used for inverse-CDF
    sampling have their last column pinned to exactly 1.0 so a uniform
    draw in [0, 1) can never fall past the final state.
    """

    matrix: np.ndarray

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=np.float64, order="C")
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError(f"transition matrix must be square, got shape {mat.shape}")
        if mat.shape[0] < 1:
            raise ValueError("transition matrix must have at least one state")
        if not np.all(np.isfinite(mat)):
            raise ValueError("transition matrix entries must be finite")
        if (mat < 0.0).any():
            i, j = np.argwhere(mat < 0.0)[0]
            raise NegativeEntryError(int(i) + 1, int(j) + 1, float(mat[i, j]))
        deviations = mat.sum(axis=1) - 1.0
        bad = np.flatnonzero(np.abs(deviations) > ROW_SUM_TOL)
        if bad.size:
            raise RowSumError(int(bad[0]) + 1, float(deviations[bad[0]]))
        mat.flags.writeable = False
        object.__setattr__(self, "matrix", mat)
        cum = np.cumsum(mat, axis=1)
        cum[:, -1] = 1.0
        cum.flags.writeable = False
        object.__setattr__(self, "_cum", cum)
        object.__setattr__(self, "_cum_rows", [row.tolist() for row in cum])

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    def support(self) -> np.ndarray:
        return self.matrix > 0.0


def validate_stochastic(raw) -> TransitionMatrix:
    """Check nonnegativity and unit row sums, returning the wrapped matrix.

    Raises NegativeEntryError or RowSumError with 1-based row labels and
    the signed deviation from 1.
    """
    return TransitionMatrix(np.asarray(raw, dtype=np.float64))


def _as_transition(P) -> TransitionMatrix:
    """Accept either a TransitionMatrix or anything validate_stochastic takes."""
    if isinstance(P, TransitionMatrix):
        return P
    return validate_stochastic(P)


@dataclass(frozen=True, eq=False)
class ChainDecomposition:
    """Recurrent classes, periods, transient states, and both limit matrices.

    classes are 0-based, each sorted ascending, ordered by smallest
    member. delta is the least common multiple of the class periods.
    cesaro is the limit of averaged powers; power_limit is the limit of
    P raised to multiples of delta.
    """

    classes: tuple[tuple[int, ...], ...]
    periods: tuple[int, ...]
    transient: tuple[int, ...]
    delta: int
    cesaro: np.ndarray
    power_limit: np.ndarray


def _strongly_connected_components(adj: list[list[int]]) -> list[list[int]]:
    """Iterative Tarjan over an adjacency-list digraph."""
    n = len(adj)
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    comps: list[list[int]] = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        while work:
            v, ei = work[-1]
            if ei == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            descended = False
            row = adj[v]
            for j in range(ei, len(row)):
                w = row[j]
                if index[w] == -1:
                    work[-1] = (v, j + 1)
                    work.append((w, 0))
                    descended = True
                    break
                if on_stack[w]:
                    if index[w] < low[v]:
                        low[v] = index[w]
            if descended:
                continue
            work.pop()
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                comps.append(comp)
            if work:
                u = work[-1][0]
                if low[v] < low[u]:
                    low[u] = low[v]
    return comps


def _class_period(adj: list[list[int]], members: tuple[int, ...]) -> int:
    """Period of one recurrent class via breadth-first level labels.

    The gcd of level(i) + 1 - level(j) over the class's edges equals the
    gcd of its cycle lengths; no cycle enumeration needed.
    """
    member_set = set(members)
    level = {members[0]: 0}
    frontier = [members[0]]
    while frontier:
        nxt = []
        for v in frontier:
            for w in adj[v]:
                if w in member_set and w not in level:
                    level[w] = level[v] + 1
                    nxt.append(w)
        frontier = nxt
    g = 0
    for v in members:
        for w in adj[v]:
            g = math.gcd(g, level[v] + 1 - level[w])
    return g


def decompose(P: TransitionMatrix) -> ChainDecomposition:
    """Classify states and compute both limit matrices.

    A strongly connected component of the support graph is a recurrent
    class exactly when it is closed (no edge leaves it); every other
    state is transient. Class order is deterministic: sorted by smallest
    member state.
    """
    P = _as_transition(P)
    mat = P.matrix
    m = P.m
    adj = [np.flatnonzero(mat[i] > 0.0).tolist() for i in range(m)]
    classes = []
    transient: list[int] = []
    for comp in _strongly_connected_components(adj):
        member_set = set(comp)
        closed = all(w in member_set for v in comp for w in adj[v])
        if closed:
            classes.append(tuple(sorted(comp)))
        else:
            transient.extend(comp)
    classes.sort(key=lambda c: c[0])
    periods = tuple(_class_period(adj, cls) for cls in classes)
    delta = 1
    for p in periods:
        delta = math.lcm(delta, p)
    cesaro = cesaro_limit(P, tuple(classes), tuple(sorted(transient)))
    plim = power_limit(P, delta)
    return ChainDecomposition(
        classes=tuple(classes),
        periods=periods,
        transient=tuple(sorted(transient)),
        delta=delta,
        cesaro=cesaro,
        power_limit=plim,
    )


def _stationary_distribution(sub: np.ndarray) -> np.ndarray:
    """Solve pi P = pi, sum(pi) = 1 on one recurrent class (dense LU)."""
    r = sub.shape[0]
    lhs = sub.T - np.eye(r)
    lhs[-1, :] = 1.0
    rhs = np.zeros(r)
    rhs[-1] = 1.0
    try:
        pi = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSolveError(f"stationary system is singular: {exc}") from exc
    residual = float(np.max(np.abs(pi @ sub - pi)))
    if residual > SOLVE_RESIDUAL_TOL or float(pi.min()) < -SOLVE_RESIDUAL_TOL:
        raise SingularSolveError(
            f"stationary solve failed validation (residual {residual:.3e}, "
            f"min mass {float(pi.min()):.3e})"
        )
    return pi


def cesaro_limit(
    P: TransitionMatrix,
    classes: tuple[tuple[int, ...], ...],
    transient: tuple[int, ...],
) -> np.ndarray:
    """Exact limit of averaged matrix powers, built classwise.

    Every row belonging to a recurrent class carries that class's
    stationary distribution. A transient row mixes the class stationary
    distributions with the absorption probabilities obtained from the
    transient-block linear system. Transient columns are zero.
    """
    P = _as_transition(P)
    mat = P.matrix
    m = P.m
    out = np.zeros((m, m))
    stationaries = []
    for cls in classes:
        idx = np.asarray(cls)
        pi = _stationary_distribution(mat[np.ix_(idx, idx)])
        stationaries.append(pi)
        out[np.ix_(idx, idx)] = pi[np.newaxis, :]
    if transient:
        t_idx = np.asarray(transient)
        lhs = np.eye(len(transient)) - mat[np.ix_(t_idx, t_idx)]
        for cls, pi in zip(classes, stationaries):
            c_idx = np.asarray(cls)
            hit = mat[np.ix_(t_idx, c_idx)].sum(axis=1)
            try:
                absorb = np.linalg.solve(lhs, hit)
            except np.linalg.LinAlgError as exc:
                raise SingularSolveError(f"absorption system is singular: {exc}") from exc
            residual = float(np.max(np.abs(lhs @ absorb - hit)))
            if residual > SOLVE_RESIDUAL_TOL:
                raise SingularSolveError(
                    f"absorption solve failed validation (residual {residual:.3e})"
                )
            out[np.ix_(t_idx, c_idx)] = absorb[:, np.newaxis] * pi[np.newaxis, :]
    return out


def cesaro_limit_oracle(P: TransitionMatrix, horizon: int) -> np.ndarray:
    """Average of the first `horizon` powers of P, starting at the identity.

    Serves as an independent check on cesaro_limit: it touches no class
    structure and no linear solves, only matrix products. The partial
    sums S(n) = I + P + ... + P^(n-1) follow S(2t) = S(t) + P^t S(t) and
    S(2t+1) = I + P S(2t), so the cost is logarithmic in the horizon.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    P = _as_transition(P)
    mat = P.matrix
    eye = np.eye(P.m)

    def partial(n: int) -> tuple[np.ndarray, np.ndarray]:
        if n == 1:
            return eye.copy(), mat.copy()
        half, half_pow = partial(n // 2)
        total = half + half_pow @ half
        total_pow = half_pow @ half_pow
        if n % 2:
            total = eye + mat @ total
            total_pow = mat @ total_pow
        return total, total_pow

    total, _ = partial(horizon)
    return total / horizon


def power_limit(P: TransitionMatrix, delta: int, max_squarings: int = 100) -> np.ndarray:
    """Limit of P^(delta k) by repeated squaring of P^delta.

    P^delta is aperiodic on each recurrent class, so the squares converge
    geometrically; iteration stops when two successive squares agree
    entrywise within FIXED_POINT_TOL.
    """
    if delta < 1:
        raise ValueError("delta must be at least 1")
    block = np.linalg.matrix_power(_as_transition(P).matrix, delta)
    for _ in range(max_squarings):
        squared = block @ block
        if float(np.max(np.abs(squared - block))) <= FIXED_POINT_TOL:
            return squared
        block = squared
    raise NoConvergenceError(
        f"power limit did not reach a fixed point within {max_squarings} squarings"
    )


def _check_distribution(dist, m: int) -> np.ndarray:
    vec = np.asarray(dist, dtype=np.float64)
    if vec.ndim != 1 or vec.shape[0] != m:
        raise InvalidDistributionError(
            f"distribution must be a vector of length {m}, got shape {vec.shape}"
        )
    if not np.all(np.isfinite(vec)):
        raise InvalidDistributionError("distribution entries must be finite")
    if float(vec.min()) < 0.0:
        raise InvalidDistributionError(
            f"distribution has a negative entry: {float(vec.min())!r}"
        )
    dev = float(vec.sum()) - 1.0
    if abs(dev) > ROW_SUM_TOL:
        raise InvalidDistributionError(f"distribution sums to 1 {dev:+.6e}")
    return vec


def limiting_distribution(pi0, decomp: ChainDecomposition) -> np.ndarray:
    """Propagate an initial distribution through the Cesaro limit.

    The result is again a probability vector and puts zero mass on every
    transient state.
    """
    vec = _check_distribution(pi0, decomp.cesaro.shape[0])
    return vec @ decomp.cesaro


@dataclass
class ChainState:
    """Current state plus the chain's own random stream.

    One ChainState must not be stepped from two threads at once; distinct
    chains are independent and may advance concurrently.
    """

    current: int
    rng: np.random.Generator


def make_chain(P: TransitionMatrix, init_dist, rng: np.random.Generator) -> ChainState:
    """Draw the starting state from init_dist using the chain's stream."""
    vec = _check_distribution(init_dist, P.m)
    cum = np.cumsum(vec).tolist()
    cum[-1] = 1.0
    u = rng.random()
    return ChainState(current=bisect_right(cum, u), rng=rng)


def step(chain: ChainState, P: TransitionMatrix) -> ChainState:
    """Advance one transition by inverse-CDF sampling on the current row."""
    u = chain.rng.random()
    chain.current = bisect_right(P._cum_rows[chain.current], u)
    return chain


def walk(chain: ChainState, P: TransitionMatrix, steps: int) -> np.ndarray:
    """Advance `steps` transitions, returning every visited state.

    Consumes the chain's stream exactly as `steps` calls of step() would:
    batched uniform draws from a Generator match sequential scalar draws
    bit for bit.
    """
    draws = chain.rng.random(steps).tolist()
    rows = P._cum_rows
    s = chain.current
    out = np.empty(steps, dtype=np.int64)
    for t, u in enumerate(draws):
        s = bisect_right(rows[s], u)
        out[t] = s
    chain.current = s
    return out


def decomposition_report(decomp: ChainDecomposition) -> dict:
    """JSON-ready decomposition summary with 1-based state labels."""
    return {
        "classes": [[s + 1 for s in cls] for cls in decomp.classes],
        "periods": list(decomp.periods),
        "transient": [s + 1 for s in decomp.transient],
        "delta": decomp.delta,
    }


def read_matrix_text(path) -> TransitionMatrix:
    """Parse the plain-text matrix format: a line with m, then m rows."""
    with open(path, "r", encoding="utf-8") as fh:
        tokens = fh.read().split()
    if not tokens:
        raise ValueError(f"matrix file {path} is empty")
    m = int(tokens[0])
    values = tokens[1:]
    if len(values) != m * m:
        raise ValueError(
            f"matrix file {path} holds {len(values)} entries, expected {m * m}"
        )
    mat = np.array([float(v) for v in values], dtype=np.float64).reshape(m, m)
    return validate_stochastic(mat)


def write_matrix_text(P: TransitionMatrix, path) -> None:
    """Write the plain-text matrix format with full round-trip precision."""
    lines = [str(P.m)]
    for row in P.matrix:
        lines.append(" ".join(repr(float(v)) for v in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_distribution_text(path, m: int | None = None) -> np.ndarray:
    """Parse a whitespace-separated probability vector from a text file."""
    with open(path, "r", encoding="utf-8") as fh:
        tokens = fh.read().split()
    vec = np.array([float(t) for t in tokens], dtype=np.float64)
    return _check_distribution(vec, vec.shape[0] if m is None else m)
