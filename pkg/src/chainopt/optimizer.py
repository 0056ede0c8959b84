"""Chain-driven incremental subgradient iteration with string averaging.

Each iteration advances every selection chain one transition, takes one
noisy subgradient step per chain from the shared iterate using the
component the chain landed on, averages the per-chain results, and
projects the average back onto the box. Runs are bitwise reproducible:
every chain owns two random streams derived from (chain index, seed),
one for transitions and one for noise, so neither thread count nor
execution order can shift a draw.
"""

from __future__ import annotations

import csv
import json
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import markov
from .markov import ChainDecomposition, ChainState, TransitionMatrix
from .problems import (
    Box,
    ConvexSumProblem,
    L1Component,
    NoiseModel,
    make_l1_problem,
    objective,
    project,
    sample_noise,
    sample_noise_block,
)

__all__ = [
    "InvalidParametersError",
    "InvalidNeighborsError",
    "UnreachableClassWarning",
    "DiminishingBlockStepsize",
    "ConstantStepsize",
    "ChainSpec",
    "ChainRuntime",
    "RunConfig",
    "Trace",
    "stepsize",
    "stepsize_array",
    "start_chains",
    "step_once",
    "run",
    "make_baseline",
    "thin_trace",
    "write_trace_csv",
    "parse_trace_csv",
    "save_run_config",
    "load_run_config",
]

NOISE_BLOCK = 4096


class InvalidParametersError(ValueError):
    """A stepsize schedule was built with out-of-range parameters."""


class InvalidNeighborsError(ValueError):
    """A neighbor structure for the equal-probability scheme is malformed."""


class UnreachableClassWarning(UserWarning):
    """Some recurrent class cannot be reached from any chain's start."""


@dataclass(frozen=True)
class DiminishingBlockStepsize:
    """a / (t+1)^xi where t indexes blocks of block_len iterations.

    The stepsize is constant inside each block and decays across blocks;
    the exponent must lie in (2/3, 1] for the diminishing-stepsize
    convergence guarantee to apply.
    """

    a: float
    xi: float
    block_len: int

    def __post_init__(self):
        if not self.a > 0.0:
            raise InvalidParametersError(f"scale a must be positive, got {self.a!r}")
        if not (2.0 / 3.0 < self.xi <= 1.0):
            raise InvalidParametersError(
                f"exponent xi must lie in (2/3, 1], got {self.xi!r}"
            )
        if self.block_len < 1:
            raise InvalidParametersError(
                f"block length must be a positive integer, got {self.block_len!r}"
            )


@dataclass(frozen=True)
class ConstantStepsize:
    """Fixed stepsize. Zero is allowed for fixed-point checks."""

    lam: float

    def __post_init__(self):
        if self.lam < 0.0:
            raise InvalidParametersError(f"stepsize must be nonnegative, got {self.lam!r}")


def stepsize(schedule, k: int) -> float:
    """Stepsize applied when producing iterate k+1 from iterate k."""
    if isinstance(schedule, ConstantStepsize):
        return schedule.lam
    block = k // schedule.block_len
    return schedule.a / float(block + 1) ** schedule.xi


def stepsize_array(schedule, count: int) -> np.ndarray:
    """First `count` stepsizes, bitwise equal to scalar stepsize() calls."""
    if isinstance(schedule, ConstantStepsize):
        return np.full(count, schedule.lam)
    blocks = -(-count // schedule.block_len)
    values = [schedule.a / float(t + 1) ** schedule.xi for t in range(blocks)]
    return np.repeat(np.asarray(values), schedule.block_len)[:count]


@dataclass(frozen=True, eq=False)
class ChainSpec:
    """Initial distribution and seed for one selection chain."""

    init_dist: np.ndarray
    seed: int


@dataclass
class ChainRuntime:
    """Live chain state plus its private noise stream."""

    state: ChainState
    noise_rng: np.random.Generator


@dataclass(frozen=True, eq=False)
class RunConfig:
    """Everything one reproducible run needs.

    subgradient_scale, when set, multiplies the subgradient of component
    i by scale[i] inside the update. Baseline methods that visit
    components uniformly use it to target the weighted objective; the
    reported objective always uses problem.weights either way.
    """

    problem: ConvexSumProblem
    matrix: TransitionMatrix
    decomp: ChainDecomposition
    chains: tuple
    schedule: object
    noise: NoiseModel
    x0: np.ndarray
    budget: int
    stride: int = 1
    subgradient_scale: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "chains", tuple(self.chains))
        x0 = np.array(self.x0, dtype=np.float64)
        x0.flags.writeable = False
        object.__setattr__(self, "x0", x0)
        if self.subgradient_scale is not None:
            scale = np.array(self.subgradient_scale, dtype=np.float64)
            scale.flags.writeable = False
            object.__setattr__(self, "subgradient_scale", scale)


def _check_config(config: RunConfig) -> None:
    m = config.matrix.m
    if len(config.problem.components) != m:
        raise ValueError(
            f"problem has {len(config.problem.components)} components but the "
            f"chain has {m} states"
        )
    if not config.chains:
        raise ValueError("need at least one chain")
    if config.budget < 1:
        raise ValueError(f"budget must be at least 1, got {config.budget}")
    if config.stride < 1:
        raise ValueError(f"stride must be at least 1, got {config.stride}")
    if config.x0.shape != (config.problem.n,):
        raise ValueError(
            f"x0 must have shape ({config.problem.n},), got {config.x0.shape}"
        )
    clamped = project(config.problem.feasible, config.x0)
    if not np.array_equal(clamped, config.x0):
        raise ValueError("x0 must lie inside the feasible box")
    for spec in config.chains:
        markov._check_distribution(spec.init_dist, m)
    if config.subgradient_scale is not None:
        scale = config.subgradient_scale
        if scale.shape != (m,):
            raise ValueError(f"subgradient scale must have shape ({m},), got {scale.shape}")
        if not np.all(np.isfinite(scale)) or float(scale.min()) < 0.0:
            raise ValueError("subgradient scale entries must be finite and nonnegative")
    if config.decomp.cesaro.shape[0] != m:
        raise ValueError("decomposition does not match the transition matrix")


def _warn_unreachable(config: RunConfig) -> None:
    """Warn when a recurrent class is invisible to every chain.

    Components in such a class never influence the iterate, which
    usually signals a modeling mistake, but the run itself is still well
    defined, so this stays a warning.
    """
    m = config.matrix.m
    support = config.matrix.matrix > 0.0
    reachable = np.zeros(m, dtype=bool)
    for spec in config.chains:
        reachable |= np.asarray(spec.init_dist) > 0.0
    frontier = np.flatnonzero(reachable).tolist()
    while frontier:
        nxt = []
        for v in frontier:
            for w in np.flatnonzero(support[v]):
                if not reachable[w]:
                    reachable[w] = True
                    nxt.append(int(w))
        frontier = nxt
    for cls in config.decomp.classes:
        if not any(reachable[s] for s in cls):
            labels = tuple(s + 1 for s in cls)
            warnings.warn(
                f"recurrent class {labels} is unreachable from every chain start; "
                "its components will never update the iterate",
                UnreachableClassWarning,
                stacklevel=3,
            )


def start_chains(config: RunConfig) -> list[ChainRuntime]:
    """Create the per-chain runtimes with their derived random streams.

    Chain index ell and the chain's seed fully determine both streams,
    so the same configuration always walks the same trajectory no matter
    how many chains run or in what order they are serviced.
    """
    runtimes = []
    for index, spec in enumerate(config.chains):
        root = np.random.SeedSequence(entropy=spec.seed, spawn_key=(index,))
        transition_seq, noise_seq = root.spawn(2)
        transition_rng = np.random.default_rng(transition_seq)
        state = markov.make_chain(config.matrix, spec.init_dist, transition_rng)
        runtimes.append(
            ChainRuntime(state=state, noise_rng=np.random.default_rng(noise_seq))
        )
    return runtimes


def step_once(x, chains: list[ChainRuntime], config: RunConfig, k: int, lam=None) -> np.ndarray:
    """One averaged subgradient step: advance chains, update, project.

    All chains move first; each then takes a step from the shared x
    using its landing component's subgradient plus a fresh noise draw,
    and the projected average of the per-chain results is returned.
    lam overrides the schedule when given (zero makes this a no-op).
    """
    if lam is None:
        lam = stepsize(config.schedule, k)
    comps = config.problem.components
    scale = config.subgradient_scale
    noise = config.noise
    n = config.problem.n
    sub = np.empty((len(chains), n))
    for index, runtime in enumerate(chains):
        markov.step(runtime.state, config.matrix)
        s = runtime.state.current
        g = comps[s].subgradient(x)
        if scale is not None:
            g = g * scale[s]
        if noise.kind != "zero":
            g = g + sample_noise(noise, k + 1, runtime.noise_rng, n)
        sub[index] = x - lam * g
    return project(config.problem.feasible, np.mean(sub, axis=0))


@dataclass
class Trace:
    """Recorded run history in columnar form.

    k holds the recorded iterate indices; f, best_f, and lam line up
    with it; states holds the 0-based chain states at each recorded
    iterate, one column per chain. best_f is tracked on every iteration
    even when the recording stride skips some, and best_x/best_k point
    at the overall best iterate. max_subgradient_norm is the largest
    scaled subgradient norm actually applied during the run.
    """

    k: np.ndarray
    f: np.ndarray
    best_f: np.ndarray
    lam: np.ndarray
    states: np.ndarray
    final_x: np.ndarray
    best_x: np.ndarray
    best_k: int
    wall_time_s: float
    max_subgradient_norm: float

    def __len__(self) -> int:
        return int(self.k.shape[0])

    @property
    def ns_per_iteration(self) -> float:
        iterations = int(self.k[-1]) if len(self) else 0
        return self.wall_time_s / iterations * 1e9 if iterations else 0.0

    def rows(self):
        for i in range(len(self)):
            yield (
                int(self.k[i]),
                float(self.f[i]),
                float(self.best_f[i]),
                float(self.lam[i]),
                tuple(int(s) for s in self.states[i]),
            )


def _fast_l1_tables(problem: ConvexSumProblem, scale):
    """Stacked arrays for the all-L1 inner loop, or None when not applicable."""
    if not all(isinstance(c, L1Component) for c in problem.components):
        return None
    rows = np.vstack([c.a for c in problem.components])
    offsets = np.array([c.b for c in problem.components])
    plus = [c.a for c in problem.components]
    minus = [c._neg for c in problem.components]
    zero = problem.components[0]._zero
    norms = np.linalg.norm(rows, axis=1)
    if scale is not None:
        norms = norms * scale
    return rows, offsets, plus, minus, zero, norms


def run(config: RunConfig, workers: int = 1) -> Trace:
    """Execute the configured number of iterations and record a Trace.

    The chains' state trajectories are drawn up front (transition and
    noise streams are distinct, so the reordering is invisible), noise
    is generated in blocks from each chain's own stream, and the
    per-chain updates inside one iteration may be farmed out to threads;
    none of this changes a single bit of the result.
    """
    _check_config(config)
    _warn_unreachable(config)
    problem = config.problem
    box = problem.feasible
    n = problem.n
    K = config.budget
    M = len(config.chains)
    scale = config.subgradient_scale
    noise = config.noise
    noisy = noise.kind != "zero"

    started = time.perf_counter()
    runtimes = start_chains(config)
    states = np.empty((K + 1, M), dtype=np.int64)
    for index, runtime in enumerate(runtimes):
        states[0, index] = runtime.state.current
        states[1:, index] = markov.walk(runtime.state, config.matrix, K)
    lam = stepsize_array(config.schedule, K + 1)

    tables = _fast_l1_tables(problem, scale)
    weights = problem.weights
    if tables is not None:
        rows, offsets, plus, minus, zero_vec, applied_norms = tables
        row_views = [rows[i] for i in range(rows.shape[0])]
        offset_list = offsets.tolist()
        residual_buf = np.empty(rows.shape[0])

    x = np.array(config.x0)
    f_all = np.empty(K + 1)
    best_all = np.empty(K + 1)

    def evaluate(point) -> float:
        if tables is None:
            return objective(problem, point)
        np.matmul(rows, point, out=residual_buf)
        np.subtract(residual_buf, offsets, out=residual_buf)
        np.abs(residual_buf, out=residual_buf)
        return float(weights @ residual_buf)

    f_all[0] = evaluate(x)
    best_f = f_all[0]
    best_all[0] = best_f
    best_x = x.copy()
    best_k = 0
    max_norm = 0.0

    sub = np.empty((M, n))
    work = np.empty((M, n))
    mean_buf = np.empty(n)
    noise_blocks = [None] * M
    noise_offset = 0

    def chain_update(index: int, k: int, lam_k: float) -> float:
        """Fill sub[index] with this chain's subiterate; returns applied norm."""
        s = int(states[k + 1, index])
        buf = work[index]
        if tables is not None:
            residual = float(row_views[s] @ x) - offset_list[s]
            if residual > 0.0:
                g = plus[s]
            elif residual < 0.0:
                g = minus[s]
            else:
                g = zero_vec
            norm = float(applied_norms[s]) if residual != 0.0 else 0.0
        else:
            g = problem.components[s].subgradient(x)
            if scale is not None:
                np.multiply(g, scale[s], out=buf)
                g = buf
            norm = float(np.linalg.norm(g))
        if tables is not None and scale is not None:
            np.multiply(g, scale[s], out=buf)
            g = buf
        if noisy:
            np.add(g, noise_blocks[index][noise_offset], out=buf)
            g = buf
        np.multiply(g, lam_k, out=buf)
        np.subtract(x, buf, out=sub[index])
        return norm

    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 and M > 1 else None
    try:
        for k in range(K):
            if noisy:
                if noise_offset == 0 or noise_offset == NOISE_BLOCK:
                    count = min(NOISE_BLOCK, K - k)
                    for index, runtime in enumerate(runtimes):
                        noise_blocks[index] = sample_noise_block(
                            noise, k + 1, count, runtime.noise_rng, n
                        )
                    noise_offset = 0
            lam_k = float(lam[k])
            if pool is not None:
                norms = list(pool.map(chain_update, range(M), [k] * M, [lam_k] * M))
            else:
                norms = [chain_update(index, k, lam_k) for index in range(M)]
            for value in norms:
                if value > max_norm:
                    max_norm = value
            np.mean(sub, axis=0, out=mean_buf)
            np.clip(mean_buf, box.lower, box.upper, out=x)
            fk = evaluate(x)
            f_all[k + 1] = fk
            if fk < best_f:
                best_f = fk
                best_x = x.copy()
                best_k = k + 1
            best_all[k + 1] = best_f
            if noisy:
                noise_offset += 1
    finally:
        if pool is not None:
            pool.shutdown()
    wall = time.perf_counter() - started

    recorded = np.zeros(K + 1, dtype=bool)
    recorded[0] = True
    recorded[config.stride :: config.stride] = True
    recorded[K] = True
    idx = np.flatnonzero(recorded)
    return Trace(
        k=idx.astype(np.int64),
        f=f_all[idx],
        best_f=best_all[idx],
        lam=lam[idx],
        states=states[idx],
        final_x=x.copy(),
        best_x=best_x,
        best_k=best_k,
        wall_time_s=wall,
        max_subgradient_norm=max_norm,
    )


def make_baseline(kind: str, m: int, neighbors=None):
    """Reference selection schemes: returns (matrix, initial distribution).

    "cyclic" visits components in fixed order starting after state 1;
    "uniform_random" jumps anywhere with probability 1/m from a uniform
    start; "equal_probability" moves to each declared neighbor with
    probability 1/m and holds otherwise (neighbor sets are 0-based,
    irreflexive, at most m-1 entries each).
    """
    if kind == "cyclic":
        mat = np.zeros((m, m))
        mat[np.arange(m - 1), np.arange(1, m)] = 1.0
        mat[m - 1, 0] = 1.0
        init = np.zeros(m)
        init[0] = 1.0
    elif kind == "uniform_random":
        mat = np.full((m, m), 1.0 / m)
        init = np.full(m, 1.0 / m)
    elif kind == "equal_probability":
        if neighbors is None:
            raise InvalidNeighborsError("equal_probability needs neighbor sets")
        sets = [sorted(set(int(v) for v in group)) for group in neighbors]
        if len(sets) != m:
            raise InvalidNeighborsError(
                f"need one neighbor set per state, got {len(sets)} for m = {m}"
            )
        mat = np.zeros((m, m))
        for i, group in enumerate(sets):
            if i in group:
                raise InvalidNeighborsError(f"state {i + 1} lists itself as a neighbor")
            if len(group) > m - 1:
                raise InvalidNeighborsError(
                    f"state {i + 1} lists {len(group)} neighbors, at most {m - 1} allowed"
                )
            if any(j < 0 or j >= m for j in group):
                raise InvalidNeighborsError(f"state {i + 1} lists an out-of-range neighbor")
            for j in group:
                mat[i, j] = 1.0 / m
            mat[i, i] = 1.0 - len(group) / m
        init = np.full(m, 1.0 / m)
    else:
        raise ValueError(f"unknown baseline kind {kind!r}")
    return markov.validate_stochastic(mat), init


def thin_trace(trace: Trace, stride: int) -> Trace:
    """Keep every stride-th recorded row plus the first and last."""
    if stride < 1:
        raise ValueError(f"stride must be at least 1, got {stride}")
    keep = (trace.k % stride == 0) | (trace.k == trace.k[-1])
    idx = np.flatnonzero(keep)
    return replace(
        trace,
        k=trace.k[idx],
        f=trace.f[idx],
        best_f=trace.best_f[idx],
        lam=trace.lam[idx],
        states=trace.states[idx],
    )


def write_trace_csv(trace: Trace, path) -> None:
    """Emit the recorded rows; floats use repr so parsing is lossless."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "f", "best_f", "lambda", "states"])
        for k, f, best_f, lam, states in trace.rows():
            writer.writerow(
                [
                    k,
                    repr(f),
                    repr(best_f),
                    repr(lam),
                    "|".join(str(s + 1) for s in states),
                ]
            )


def parse_trace_csv(path) -> dict:
    """Read a trace CSV back into columnar arrays (states 0-based again)."""
    ks, fs, bests, lams, states = [], [], [], [], []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["k", "f", "best_f", "lambda", "states"]:
            raise ValueError(f"unexpected trace header {header!r}")
        for row in reader:
            ks.append(int(row[0]))
            fs.append(float(row[1]))
            bests.append(float(row[2]))
            lams.append(float(row[3]))
            states.append([int(tok) - 1 for tok in row[4].split("|")])
    return {
        "k": np.asarray(ks, dtype=np.int64),
        "f": np.asarray(fs),
        "best_f": np.asarray(bests),
        "lam": np.asarray(lams),
        "states": np.asarray(states, dtype=np.int64),
    }


def _schedule_to_json(schedule) -> dict:
    if isinstance(schedule, ConstantStepsize):
        return {"kind": "constant", "lam": schedule.lam}
    if isinstance(schedule, DiminishingBlockStepsize):
        return {
            "kind": "diminishing_block",
            "a": schedule.a,
            "xi": schedule.xi,
            "block_len": schedule.block_len,
        }
    raise ValueError(f"cannot serialize schedule {type(schedule).__name__}")


def _schedule_from_json(payload: dict):
    if payload["kind"] == "constant":
        return ConstantStepsize(lam=float(payload["lam"]))
    if payload["kind"] == "diminishing_block":
        return DiminishingBlockStepsize(
            a=float(payload["a"]),
            xi=float(payload["xi"]),
            block_len=int(payload["block_len"]),
        )
    raise ValueError(f"unknown schedule kind {payload['kind']!r}")


def save_run_config(config: RunConfig, path, matrix_file=None) -> None:
    """Serialize a run configuration to JSON.

    The transition matrix is stored inline unless matrix_file names a
    text file to write it to, in which case the JSON keeps a relative
    reference. Only all-L1 problems serialize.
    """
    path = Path(path)
    if matrix_file is None:
        matrix_payload = [[float(v) for v in row] for row in config.matrix.matrix]
    else:
        matrix_path = Path(matrix_file)
        markov.write_matrix_text(config.matrix, matrix_path)
        matrix_payload = {"file": str(matrix_path.name)}
    components = []
    for comp in config.problem.components:
        if not isinstance(comp, L1Component):
            raise ValueError("only absolute-residual problems serialize to JSON")
        components.append(
            {"a": [float(v) for v in comp.a], "b": comp.b}
        )
    payload = {
        "matrix": matrix_payload,
        "chains": [
            {"init": [float(v) for v in spec.init_dist], "seed": int(spec.seed)}
            for spec in config.chains
        ],
        "schedule": _schedule_to_json(config.schedule),
        "noise": {"kind": config.noise.kind, "scale": config.noise.scale},
        "problem": {
            "n": config.problem.n,
            "components": components,
            "lower": [float(v) for v in config.problem.feasible.lower],
            "upper": [float(v) for v in config.problem.feasible.upper],
            "weights": [float(v) for v in config.problem.weights],
        },
        "x0": [float(v) for v in config.x0],
        "budget": config.budget,
        "stride": config.stride,
        "subgradient_scale": (
            None
            if config.subgradient_scale is None
            else [float(v) for v in config.subgradient_scale]
        ),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_run_config(path) -> RunConfig:
    """Rebuild a RunConfig from JSON; the decomposition is recomputed."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if isinstance(payload["matrix"], dict):
        matrix = markov.read_matrix_text(path.parent / payload["matrix"]["file"])
    else:
        matrix = markov.validate_stochastic(np.asarray(payload["matrix"]))
    prob = payload["problem"]
    A = np.vstack([np.asarray(c["a"], dtype=np.float64) for c in prob["components"]])
    b = np.asarray([c["b"] for c in prob["components"]], dtype=np.float64)
    box = Box(np.asarray(prob["lower"]), np.asarray(prob["upper"]))
    problem = make_l1_problem(A, b, box, np.asarray(prob["weights"]))
    scale = payload.get("subgradient_scale")
    return RunConfig(
        problem=problem,
        matrix=matrix,
        decomp=markov.decompose(matrix),
        chains=tuple(
            ChainSpec(init_dist=np.asarray(c["init"], dtype=np.float64), seed=int(c["seed"]))
            for c in payload["chains"]
        ),
        schedule=_schedule_from_json(payload["schedule"]),
        noise=NoiseModel(payload["noise"]["kind"], float(payload["noise"]["scale"])),
        x0=np.asarray(payload["x0"], dtype=np.float64),
        budget=int(payload["budget"]),
        stride=int(payload["stride"]),
        subgradient_scale=None if scale is None else np.asarray(scale, dtype=np.float64),
    )
