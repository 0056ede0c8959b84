"""Benchmark study builder, suite driver, and decay diagnostics.

Holds the data of the reference study: a 20-dimensional absolute-residual
objective with 7 components, a 7-state selection chain with two recurrent
classes, three baseline selection schemes, the noise test grid, and the
published stepsize parameters. Builds fully-seeded run configurations,
drives multi-seed suites with first-crossing statistics, and fits the
geometric decay of the matrix powers toward their limit.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .markov import TransitionMatrix, decompose, validate_stochastic
from .optimizer import (
    ChainSpec,
    ConstantStepsize,
    DiminishingBlockStepsize,
    RunConfig,
    _schedule_to_json,
    run,
    thin_trace,
    write_trace_csv,
    make_baseline,
)
from .problems import Box, NoiseModel, make_l1_problem, project, weights_from_chains

__all__ = [
    "UnknownMethodError",
    "UnknownTestError",
    "InvalidSpecError",
    "DegenerateFitError",
    "ExperimentSpec",
    "DecayFit",
    "DecayReport",
    "METHODS",
    "TESTS",
    "study_matrix",
    "study_design",
    "study_weights",
    "noise_for_test",
    "default_schedule",
    "build_experiment",
    "run_suite",
    "decay_diagnostic",
    "first_crossings",
    "CROSSING_THRESHOLDS",
]


class UnknownMethodError(ValueError):
    """Method label outside m1..m4."""


class UnknownTestError(ValueError):
    """Noise test number outside 1..6."""


class InvalidSpecError(ValueError):
    """An experiment spec that cannot be run (for example, no seeds)."""


class DegenerateFitError(ValueError):
    """All decay norms sit below measurement precision; nothing to fit."""


METHODS = ("m1", "m2", "m3", "m4")
TESTS = (1, 2, 3, 4, 5, 6)
CROSSING_THRESHOLDS = (1e-2, 1e-3, 1e-4, 1e-6)

DIMENSION = 20
COMPONENTS = 7

# Sparse coefficient rows (1-based column, value), one row per component.
COEFFICIENT_ENTRIES = {
    1: [(2, 0.5), (3, 0.1), (4, 0.2), (14, 0.25), (15, 0.1)],
    2: [(6, 0.4), (7, 0.15), (12, 0.3), (16, 0.45), (19, 0.1), (20, 0.2)],
    3: [(13, 0.02), (14, 0.06)],
    4: [
        (1, 0.12),
        (2, 0.21),
        (3, 0.3),
        (7, 0.5),
        (13, 0.4),
        (14, 0.1),
        (15, 0.18),
        (19, 0.1),
        (20, 0.14),
    ],
    5: [
        (1, 0.8),
        (2, 0.4),
        (8, 1.2),
        (9, 1.0),
        (10, 0.85),
        (17, 0.4),
        (18, 0.7),
        (19, 0.1),
    ],
    6: [(2, 0.25), (3, 0.34), (8, 0.45), (9, 0.35), (13, 0.18), (14, 0.22)],
    7: [(13, 0.05), (14, 0.08)],
}

LOWER_BOUNDS = (
    -1.0, -0.5, -1.5, -1.3, 0.0, 0.1, 0.3, -0.2, -1.0, 0.0,
    -0.25, -0.1, 0.3, 0.1, 0.0, -1.1, 0.35, 0.15, 0.0, -0.45,
)
UPPER_BOUNDS = (
    2.0, 1.5, 2.3, 3.0, 2.0, 1.8, 2.25, 1.7, 1.5, 2.0,
    2.8, 1.75, 2.35, 1.95, 2.0, 1.0, 2.5, 1.35, 2.0, 3.0,
)

# 7-state selection chain: two recurrent classes, one periodic.
SELECTION_ROWS = (
    (0.0, 0.0, 0.2, 0.8, 0.0, 0.0, 0.0),
    (0.0, 0.0, 0.15, 0.85, 0.0, 0.0, 0.0),
    (0.4, 0.6, 0.0, 0.0, 0.0, 0.0, 0.0),
    (0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0),
    (0.0, 0.0, 0.0, 0.0, 0.0, 0.8, 0.2),
    (0.0, 0.0, 0.0, 0.0, 0.8, 0.0, 0.2),
    (0.0, 0.0, 0.0, 0.0, 0.6, 0.4, 0.0),
)

# Neighbor sets for the equal-probability baseline, 0-based.
NEIGHBOR_SETS = (
    (1, 2),
    (0, 2, 6),
    (0, 1, 5),
    (4, 5),
    (3,),
    (2, 3, 6),
    (1, 5),
)

# Diminishing-schedule parameters (scale a, exponent xi) per method, and
# the constant-regime default stepsizes.
DIMINISHING_PARAMS = {"m1": (2.0, 0.7), "m2": (2.0, 0.7), "m3": (2.5, 0.667), "m4": (2.5, 0.667)}
CONSTANT_LAMBDA = {"m1": 5e-4, "m2": 1e-3, "m3": 1e-3, "m4": 1e-3}
# The chain-driven method decays its stepsize once per chain period; the
# baselines decay every iteration.
SCHEDULE_BLOCK = {"m1": 2, "m2": 1, "m3": 1, "m4": 1}


def _check_method(method: str) -> str:
    key = str(method).lower()
    if key not in METHODS:
        raise UnknownMethodError(f"unknown method {method!r}, expected one of {METHODS}")
    return key


def _check_test(test: int) -> int:
    try:
        value = int(test)
    except (TypeError, ValueError):
        raise UnknownTestError(f"noise test must be an integer in 1..6, got {test!r}")
    if value not in TESTS:
        raise UnknownTestError(f"unknown noise test {test!r}, expected one of {TESTS}")
    return value


def study_matrix() -> TransitionMatrix:
    """The study's 7-state selection chain."""
    return validate_stochastic(np.asarray(SELECTION_ROWS))


def study_design():
    """Coefficient matrix, offsets, and box of the study problem.

    The offsets are generated as b = A y with y the box midpoint, so the
    optimal objective value is exactly zero and every run has a known
    target.
    """
    A = np.zeros((COMPONENTS, DIMENSION))
    for i, entries in COEFFICIENT_ENTRIES.items():
        for j, value in entries:
            A[i - 1, j - 1] = value
    box = Box(np.asarray(LOWER_BOUNDS), np.asarray(UPPER_BOUNDS))
    y = box.midpoint()
    # per-row dots, not A @ y: the component oracle computes each residual
    # as a single dot product, and matching its accumulation order makes
    # the objective at y exactly zero instead of a few ulp above it
    b = np.asarray([float(row @ y) for row in A])
    return A, b, box, y


def _unit_mass(m: int, state: int) -> np.ndarray:
    vec = np.zeros(m)
    vec[state] = 1.0
    return vec


def study_chain_starts() -> tuple[np.ndarray, np.ndarray]:
    """Initial distributions of the two parallel chains (states 1 and 5)."""
    return _unit_mass(COMPONENTS, 0), _unit_mass(COMPONENTS, 4)


def study_weights():
    """Decomposition of the selection chain and the objective weights.

    The weights average the two chains' limit distributions and define
    the objective for every method, including the baselines.
    """
    decomp = decompose(study_matrix())
    weights = weights_from_chains(study_chain_starts(), decomp)
    return decomp, weights


def noise_for_test(test: int) -> NoiseModel:
    test = _check_test(test)
    if test == 1:
        return NoiseModel.zero()
    if test == 2:
        return NoiseModel.uniform_decaying()
    if test == 3:
        return NoiseModel.uniform_scaled(0.1)
    if test == 4:
        return NoiseModel.uniform_scaled(0.01)
    if test == 5:
        return NoiseModel.normal_scaled(0.1)
    return NoiseModel.normal_scaled(0.01)


def default_schedule(method: str, kind: str = "diminishing", a=None, xi=None, lam=None):
    """Published stepsize defaults, with optional per-field overrides."""
    method = _check_method(method)
    if kind == "diminishing":
        base_a, base_xi = DIMINISHING_PARAMS[method]
        return DiminishingBlockStepsize(
            a=base_a if a is None else float(a),
            xi=base_xi if xi is None else float(xi),
            block_len=SCHEDULE_BLOCK[method],
        )
    if kind == "constant":
        value = CONSTANT_LAMBDA[method] if lam is None else float(lam)
        return ConstantStepsize(lam=value)
    raise ValueError(f"unknown schedule kind {kind!r}, expected diminishing or constant")


def build_experiment(
    method: str,
    test: int,
    *,
    seed: int = 0,
    schedule=None,
    budget: int = 100_000,
    stride: int = 1,
) -> RunConfig:
    """Fully-populated run configuration for one method and noise test.

    m1 drives selection with the 7-state chain from two parallel starts.
    m2 (equal-probability), m3 (cyclic), and m4 (uniform) are single
    chain baselines; they visit components without regard to the target
    weights, so their updates rescale each subgradient by the component
    weight while the reported objective stays the same weighted sum.
    """
    method = _check_method(method)
    test = _check_test(test)
    A, b, box, _ = study_design()
    decomp_main, weights = study_weights()
    problem = make_l1_problem(A, b, box, weights)
    scale = None
    if method == "m1":
        matrix = study_matrix()
        decomp = decomp_main
        first, second = study_chain_starts()
        chains = (ChainSpec(first, seed), ChainSpec(second, seed))
    else:
        if method == "m2":
            matrix, _ = make_baseline("equal_probability", COMPONENTS, NEIGHBOR_SETS)
            init = _unit_mass(COMPONENTS, 4)
        elif method == "m3":
            matrix, init = make_baseline("cyclic", COMPONENTS)
        else:
            matrix, init = make_baseline("uniform_random", COMPONENTS)
        decomp = decompose(matrix)
        chains = (ChainSpec(init, seed),)
        scale = weights
    if schedule is None:
        schedule = default_schedule(method)
    x0 = project(box, np.zeros(DIMENSION))
    return RunConfig(
        problem=problem,
        matrix=matrix,
        decomp=decomp,
        chains=chains,
        schedule=schedule,
        noise=noise_for_test(test),
        x0=x0,
        budget=int(budget),
        stride=int(stride),
        subgradient_scale=scale,
    )


@dataclass(frozen=True)
class ExperimentSpec:
    """One suite: a method, a noise test, seeds, and an output directory."""

    method: str
    test: int
    seeds: tuple
    budget: int = 100_000
    schedule: object = None
    out: str = "study_out"


def first_crossings(trace, thresholds=CROSSING_THRESHOLDS) -> dict:
    """First recorded iterate index with best-so-far f below each threshold."""
    out = {}
    for tau in thresholds:
        hit = np.flatnonzero(trace.best_f < tau)
        out[f"{tau:.0e}"] = int(trace.k[hit[0]]) if hit.size else None
    return out


def _quartiles(values):
    finite = [v for v in values if v is not None]
    if not finite:
        return None, None, None
    q25, q50, q75 = np.percentile(np.asarray(finite, dtype=np.float64), [25, 50, 75])
    return float(q25), float(q50), float(q75)


def run_suite(spec: ExperimentSpec) -> dict:
    """Run every seed of the spec, write traces and a summary JSON.

    Each seed produces one CSV (downsampled so files stay reviewable;
    crossing statistics are computed at full resolution before thinning)
    and one entry in the summary. The summary records per-threshold
    first-crossing iterations with median and interquartile range over
    seeds, best objective values, and per-iteration timing.
    """
    method = _check_method(spec.method)
    test = _check_test(spec.test)
    seeds = tuple(int(s) for s in spec.seeds)
    if not seeds:
        raise InvalidSpecError("experiment spec needs at least one seed")
    if spec.budget < 1:
        raise InvalidSpecError(f"budget must be at least 1, got {spec.budget}")
    out_dir = Path(spec.out)
    os.makedirs(out_dir, exist_ok=True)
    csv_stride = max(1, spec.budget // 10_000)
    per_seed = []
    started = time.perf_counter()
    for seed in seeds:
        config = build_experiment(
            method, test, seed=seed, schedule=spec.schedule, budget=spec.budget, stride=1
        )
        trace = run(config)
        crossings = first_crossings(trace)
        csv_name = f"{method}_test{test}_seed{seed}.csv"
        write_trace_csv(thin_trace(trace, csv_stride), out_dir / csv_name)
        per_seed.append(
            {
                "seed": seed,
                "first_crossing": crossings,
                "best_f": float(trace.best_f[-1]),
                "best_k": int(trace.best_k),
                "final_f": float(trace.f[-1]),
                "wall_time_s": trace.wall_time_s,
                "ns_per_iteration": trace.ns_per_iteration,
                "max_subgradient_norm": trace.max_subgradient_norm,
                "trace_csv": csv_name,
            }
        )
    chains = 2 if method == "m1" else 1
    crossing_stats = {}
    for tau in CROSSING_THRESHOLDS:
        key = f"{tau:.0e}"
        values = [entry["first_crossing"][key] for entry in per_seed]
        q25, q50, q75 = _quartiles(values)
        crossing_stats[key] = {
            "crossed": sum(1 for v in values if v is not None),
            "median": q50,
            "iqr": None if q25 is None else [q25, q75],
        }
    schedule = spec.schedule
    if schedule is None:
        schedule = default_schedule(method)
    summary = {
        "method": method,
        "test": test,
        "budget": spec.budget,
        "chains": chains,
        "schedule": _schedule_to_json(schedule),
        "noise": {"kind": noise_for_test(test).kind, "scale": noise_for_test(test).scale},
        "seeds": list(seeds),
        "csv_stride": csv_stride,
        "per_seed": per_seed,
        "first_crossing": crossing_stats,
        "median_best_f": float(np.median([e["best_f"] for e in per_seed])),
        "ns_per_iteration_mean": float(np.mean([e["ns_per_iteration"] for e in per_seed])),
        "suite_wall_time_s": time.perf_counter() - started,
    }
    with open(out_dir / f"{method}_test{test}_summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=1)
        fh.write("\n")
    return summary


@dataclass(frozen=True)
class DecayFit:
    """Log-linear fit of a decay curve: values ~ alpha * exp(-beta k)."""

    alpha_hat: float
    beta_hat: float
    rmse: float
    k_used: tuple

    def as_dict(self) -> dict:
        return {
            "alpha_hat": self.alpha_hat,
            "beta_hat": self.beta_hat,
            "rmse": self.rmse,
            "k_used": list(self.k_used),
        }


@dataclass(frozen=True)
class DecayReport:
    """Matrix-power decay fit, plus the transient-mass fit when it exists."""

    matrix: DecayFit
    transient: DecayFit | None

    def as_dict(self) -> dict:
        return {
            "matrix": self.matrix.as_dict(),
            "transient": None if self.transient is None else self.transient.as_dict(),
        }


def _fit_decay(ks: np.ndarray, values: np.ndarray):
    """Fit log(values) against k, using only points above noise floor."""
    mask = values > 1e-14
    if int(mask.sum()) < 2:
        return None
    xs = ks[mask].astype(np.float64)
    ys = np.log(values[mask])
    slope, intercept = np.polyfit(xs, ys, 1)
    predicted = slope * xs + intercept
    rmse = float(np.sqrt(np.mean((ys - predicted) ** 2)))
    return DecayFit(
        alpha_hat=float(np.exp(intercept)),
        beta_hat=float(-slope),
        rmse=rmse,
        k_used=(int(xs[0]), int(xs[-1])),
    )


def decay_diagnostic(P: TransitionMatrix, k_max: int = 50) -> DecayReport:
    """Measure how fast P^(delta k) approaches its limit.

    Computes the induced max-row-sum norm of the difference for
    k = 1..k_max and fits a geometric decay to the points still above
    1e-14. When the chain has transient states, the worst-case transient
    occupation mass over all deterministic starts is fitted the same
    way. Raises DegenerateFitError when the matrix decay has nothing to
    fit (the power already equals its limit).
    """
    if k_max < 5:
        raise ValueError(f"k_max must be at least 5, got {k_max}")
    decomp = decompose(P)
    block = np.linalg.matrix_power(P.matrix, decomp.delta)
    limit = decomp.power_limit
    t_idx = np.asarray(decomp.transient, dtype=np.int64)
    ks = np.arange(1, k_max + 1)
    norms = np.empty(k_max)
    masses = np.empty(k_max) if t_idx.size else None
    power = np.eye(P.m)
    for i in range(k_max):
        power = power @ block
        norms[i] = float(np.abs(power - limit).sum(axis=1).max())
        if masses is not None:
            masses[i] = float(power[:, t_idx].sum(axis=1).max())
    matrix_fit = _fit_decay(ks, norms)
    if matrix_fit is None:
        raise DegenerateFitError(
            f"all decay norms over k = 1..{k_max} sit below 1e-14; the power "
            "already equals its limit"
        )
    transient_fit = _fit_decay(ks, masses) if masses is not None else None
    return DecayReport(matrix=matrix_fit, transient=transient_fit)
