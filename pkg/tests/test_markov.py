"""Tests for finite-chain analysis: validation, decomposition, limits, sampling."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chainopt import (
    FIXED_POINT_TOL,
    ChainDecomposition,
    InvalidDistributionError,
    NegativeEntryError,
    NoConvergenceError,
    RowSumError,
    SingularSolveError,
    cesaro_limit,
    cesaro_limit_oracle,
    decompose,
    decomposition_report,
    limiting_distribution,
    make_chain,
    power_limit,
    read_distribution_text,
    read_matrix_text,
    step,
    validate_stochastic,
    walk,
    write_matrix_text,
)
from conftest import (
    stochastic_matrices,
    structured_matrices,
    unit_mass,
)

from chainopt.harness import study_matrix


def brute_recurrent(mat):
    """Reachability oracle: a state is recurrent iff every state it can
    reach can reach it back."""
    m = mat.shape[0]
    reach = mat > 0
    reach = reach | np.eye(m, dtype=bool)
    for _ in range(m):
        reach = reach | (reach @ reach)
    recurrent = []
    for i in range(m):
        if all(reach[j, i] for j in range(m) if reach[i, j]):
            recurrent.append(i)
    return reach, recurrent


def simple_cycles_through(mat, max_len=8):
    """Yield lengths of simple cycles in the support digraph, tagged by
    their starting state. Exponential, so only for small matrices."""
    m = mat.shape[0]
    adj = [list(np.flatnonzero(mat[i] > 0)) for i in range(m)]
    out = []

    def extend(origin, node, visited, length):
        if length > max_len:
            return
        for nxt in adj[node]:
            if nxt == origin:
                out.append((origin, length))
            elif nxt > origin and nxt not in visited:
                extend(origin, nxt, visited | {nxt}, length + 1)

    for origin in range(m):
        extend(origin, origin, {origin}, 1)
    return out


# ----------------------------------------------------------------- validation


class TestValidation:
    def test_accepts_identity(self):
        tm = validate_stochastic(np.eye(3))
        assert tm.m == 3
        assert np.array_equal(tm.matrix, np.eye(3))

    def test_accepts_list_input(self):
        tm = validate_stochastic([[0.5, 0.5], [0.25, 0.75]])
        assert tm.m == 2

    def test_negative_entry(self):
        with pytest.raises(NegativeEntryError) as info:
            validate_stochastic([[1.5, -0.5], [0.0, 1.0]])
        assert info.value.row == 1
        assert info.value.col == 2
        assert info.value.value == -0.5

    def test_row_sum_violation(self):
        with pytest.raises(RowSumError) as info:
            validate_stochastic([[0.5, 0.6], [0.0, 1.0]])
        assert info.value.row == 1
        assert abs(info.value.deviation - 0.1) < 1e-12

    def test_row_sum_deficit(self):
        with pytest.raises(RowSumError) as info:
            validate_stochastic([[0.5, 0.4], [0.0, 1.0]])
        assert info.value.row == 1
        assert abs(info.value.deviation + 0.1) < 1e-12

    def test_rejects_nonsquare(self):
        with pytest.raises(ValueError):
            validate_stochastic(np.ones((2, 3)) / 3.0)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            validate_stochastic(np.zeros((0, 0)))

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            validate_stochastic([[np.nan, 1.0], [0.5, 0.5]])

    def test_tolerates_rounding_noise(self):
        third = 1.0 / 3.0
        tm = validate_stochastic([[third, third, third]] * 3)
        assert tm.m == 3

    def test_distribution_validation(self):
        tm = validate_stochastic(np.eye(2))
        rng = np.random.default_rng(0)
        with pytest.raises(InvalidDistributionError):
            make_chain(tm, [0.7, 0.7], rng)
        with pytest.raises(InvalidDistributionError):
            make_chain(tm, [-0.1, 1.1], rng)
        with pytest.raises(InvalidDistributionError):
            make_chain(tm, [1.0, 0.0, 0.0], rng)


# -------------------------------------------------------------- decomposition


class TestDecompose:
    def test_nine_state(self, nine_state):
        dec = decompose(nine_state)
        assert [sorted(c) for c in dec.classes] == [[0, 1, 2, 3], [4, 5, 6]]
        assert list(dec.periods) == [2, 3]
        assert sorted(dec.transient) == [7, 8]
        assert dec.delta == 6

    def test_seven_state(self):
        dec = decompose(study_matrix())
        assert [sorted(c) for c in dec.classes] == [[0, 1, 2, 3], [4, 5, 6]]
        assert list(dec.periods) == [2, 1]
        assert list(dec.transient) == []
        assert dec.delta == 2

    def test_identity(self):
        dec = decompose(np.eye(3))
        assert [sorted(c) for c in dec.classes] == [[0], [1], [2]]
        assert list(dec.periods) == [1, 1, 1]
        assert list(dec.transient) == []
        assert dec.delta == 1

    def test_two_cycle(self):
        dec = decompose(np.asarray([[0.0, 1.0], [1.0, 0.0]]))
        assert [sorted(c) for c in dec.classes] == [[0, 1]]
        assert list(dec.periods) == [2]
        assert dec.delta == 2

    def test_single_absorbing_chain(self):
        mat = np.asarray([[0.5, 0.5], [0.0, 1.0]])
        dec = decompose(mat)
        assert [sorted(c) for c in dec.classes] == [[1]]
        assert list(dec.periods) == [1]
        assert list(dec.transient) == [0]

    def test_accepts_raw_array(self):
        dec = decompose(np.eye(2))
        assert isinstance(dec, ChainDecomposition)

    @settings(max_examples=60, deadline=None)
    @given(structured_matrices())
    def test_structured_exact(self, case):
        mat, classes, periods, transient = case
        dec = decompose(mat)
        got = {frozenset(c): p for c, p in zip(dec.classes, dec.periods)}
        want = {frozenset(c): p for c, p in zip(classes, periods)}
        assert got == want
        assert sorted(dec.transient) == sorted(transient)
        assert dec.delta == math.lcm(*periods)

    @settings(max_examples=80, deadline=None)
    @given(stochastic_matrices())
    def test_partition_and_closure(self, mat):
        dec = decompose(mat)
        m = mat.shape[0]
        seen = sorted(s for c in dec.classes for s in c) + sorted(dec.transient)
        assert sorted(seen) == list(range(m))
        reach, recurrent = brute_recurrent(mat)
        assert sorted(s for c in dec.classes for s in c) == recurrent
        for cls in dec.classes:
            members = set(cls)
            # closed: one step stays inside
            for i in cls:
                assert set(np.flatnonzero(mat[i] > 0)) <= members
            # strongly connected within the class
            for i in cls:
                for j in cls:
                    assert reach[i, j]

    @settings(max_examples=40, deadline=None)
    @given(stochastic_matrices(max_m=6))
    def test_period_divides_cycles(self, mat):
        dec = decompose(mat)
        period_of = {}
        for cls, p in zip(dec.classes, dec.periods):
            for s in cls:
                period_of[s] = p
        for origin, length in simple_cycles_through(mat):
            if origin in period_of:
                assert length % period_of[origin] == 0

    @settings(max_examples=40, deadline=None)
    @given(stochastic_matrices(max_m=6), st.randoms(use_true_random=False))
    def test_relabeling_equivariance(self, mat, rng):
        m = mat.shape[0]
        sigma = list(range(m))
        rng.shuffle(sigma)
        sigma = np.asarray(sigma)
        relabeled = mat[np.ix_(sigma, sigma)]
        dec = decompose(mat)
        dec2 = decompose(relabeled)
        inv = np.argsort(sigma)
        want = {frozenset(inv[s] for s in c): p
                for c, p in zip(dec.classes, dec.periods)}
        got = {frozenset(c): p for c, p in zip(dec2.classes, dec2.periods)}
        assert got == want
        assert sorted(dec2.transient) == sorted(inv[s] for s in dec.transient)
        assert np.allclose(
            dec2.cesaro, dec.cesaro[np.ix_(sigma, sigma)], atol=1e-12
        )


# ------------------------------------------------------------- cesaro limits


class TestCesaroLimit:
    def test_two_cycle_halves(self):
        mat = np.asarray([[0.0, 1.0], [1.0, 0.0]])
        dec = decompose(mat)
        assert np.allclose(dec.cesaro, 0.5 * np.ones((2, 2)), atol=1e-14)

    def test_identity_is_identity(self):
        dec = decompose(np.eye(4))
        assert np.allclose(dec.cesaro, np.eye(4), atol=1e-14)

    def test_seven_state_against_oracle(self):
        mat = study_matrix()
        dec = decompose(mat)
        oracle = cesaro_limit_oracle(mat.matrix, 200000)
        assert np.max(np.abs(dec.cesaro - oracle)) <= 1e-3

    def test_nine_state_against_oracle(self, nine_state):
        dec = decompose(nine_state)
        oracle = cesaro_limit_oracle(nine_state.matrix, 600000)
        assert np.max(np.abs(dec.cesaro - oracle)) <= 1e-3

    def test_transient_columns_vanish(self, nine_state):
        dec = decompose(nine_state)
        assert np.allclose(dec.cesaro[:, [7, 8]], 0.0, atol=1e-14)

    def test_rows_within_class_agree(self, nine_state):
        dec = decompose(nine_state)
        for cls in dec.classes:
            rows = dec.cesaro[sorted(cls)]
            assert np.allclose(rows, rows[0], atol=1e-12)

    def test_oracle_matches_literal_average(self):
        mat = study_matrix().matrix
        horizon = 37
        powers = np.eye(mat.shape[0])
        total = np.zeros_like(mat)
        for _ in range(horizon):
            total += powers
            powers = powers @ mat
        literal = total / horizon
        assert np.allclose(cesaro_limit_oracle(mat, horizon), literal, atol=1e-12)

    def test_oracle_horizon_one(self):
        mat = study_matrix().matrix
        assert np.allclose(cesaro_limit_oracle(mat, 1), np.eye(7), atol=0)

    def test_singular_when_classes_wrong(self):
        # claiming both states of the identity form one class makes the
        # stationary solve singular
        with pytest.raises(SingularSolveError):
            cesaro_limit(np.eye(2), [(0, 1)], [])

    @settings(max_examples=50, deadline=None)
    @given(stochastic_matrices())
    def test_fixed_point_invariants(self, mat):
        dec = decompose(mat)
        c = dec.cesaro
        assert np.max(np.abs(c @ mat - c)) <= 1e-10
        assert np.max(np.abs(mat @ c - c)) <= 1e-10
        assert np.max(np.abs(c @ c - c)) <= 1e-10
        assert np.max(np.abs(c.sum(axis=1) - 1.0)) <= 1e-10
        assert c.min() >= -1e-14

    @settings(max_examples=30, deadline=None)
    @given(stochastic_matrices(max_m=6))
    def test_agrees_with_long_average(self, mat):
        dec = decompose(mat)
        oracle = cesaro_limit_oracle(mat, 100000 * dec.delta)
        assert np.max(np.abs(dec.cesaro - oracle)) <= 1e-3


# --------------------------------------------------------------- power limit


class TestPowerLimit:
    def test_identity(self):
        dec = decompose(np.eye(3))
        assert np.allclose(dec.power_limit, np.eye(3), atol=1e-14)

    def test_two_cycle_even_steps(self):
        mat = np.asarray([[0.0, 1.0], [1.0, 0.0]])
        dec = decompose(mat)
        assert dec.delta == 2
        assert np.allclose(dec.power_limit, np.eye(2), atol=1e-12)

    def test_seven_state_residual(self):
        mat = study_matrix()
        dec = decompose(mat)
        p2 = np.linalg.matrix_power(mat.matrix, dec.delta)
        assert np.max(np.abs(dec.power_limit @ p2 - dec.power_limit)) <= 1e-10

    def test_matches_large_power(self, nine_state):
        dec = decompose(nine_state)
        big = np.linalg.matrix_power(nine_state.matrix, dec.delta * 4096)
        assert np.max(np.abs(dec.power_limit - big)) <= 1e-9

    def test_no_convergence_raises(self):
        mat = np.asarray([[0.999, 0.001], [0.001, 0.999]])
        with pytest.raises(NoConvergenceError):
            power_limit(mat, 1, max_squarings=1)

    @settings(max_examples=40, deadline=None)
    @given(stochastic_matrices())
    def test_idempotent_under_sampled_chain(self, mat):
        dec = decompose(mat)
        p_delta = np.linalg.matrix_power(mat, dec.delta)
        assert np.max(np.abs(dec.power_limit @ p_delta - dec.power_limit)) <= 1e-10
        assert np.max(np.abs(dec.power_limit.sum(axis=1) - 1.0)) <= 1e-10


# ------------------------------------------------- limiting distributions


class TestLimitingDistribution:
    def test_absorbing_point_mass(self):
        mat = np.asarray([[0.5, 0.5], [0.0, 1.0]])
        dec = decompose(mat)
        out = limiting_distribution(unit_mass(2, 0), dec)
        assert np.allclose(out, [0.0, 1.0], atol=1e-12)

    def test_seven_state_from_aperiodic_class(self):
        mat = study_matrix()
        dec = decompose(mat)
        out = limiting_distribution(unit_mass(7, 4), dec)
        # independent stationary solve on the aperiodic block
        sub = mat.matrix[np.ix_([4, 5, 6], [4, 5, 6])]
        lhs = (sub.T - np.eye(3))
        lhs[-1] = 1.0
        rhs = np.zeros(3)
        rhs[-1] = 1.0
        pi = np.linalg.solve(lhs, rhs)
        assert np.allclose(out[4:], pi, atol=1e-12)
        assert np.allclose(out[:4], 0.0, atol=1e-14)

    def test_mass_stays_in_reachable_classes(self, nine_state):
        dec = decompose(nine_state)
        out = limiting_distribution(unit_mass(9, 0), dec)
        assert abs(out.sum() - 1.0) <= 1e-12
        assert np.allclose(out[4:], 0.0, atol=1e-14)

    def test_rejects_bad_distribution(self, nine_state):
        dec = decompose(nine_state)
        with pytest.raises(InvalidDistributionError):
            limiting_distribution(np.full(9, 0.5), dec)


# ------------------------------------------------------------------ sampling


class TestSampling:
    def test_cyclic_walk_deterministic(self):
        mat = np.zeros((3, 3))
        mat[0, 1] = mat[1, 2] = mat[2, 0] = 1.0
        tm = validate_stochastic(mat)
        chain = make_chain(tm, unit_mass(3, 0), np.random.default_rng(123))
        assert chain.current == 0
        path = walk(chain, tm, 7)
        assert path.tolist() == [1, 2, 0, 1, 2, 0, 1]

    def test_absorbing_stays_put(self):
        tm = validate_stochastic([[0.0, 1.0], [0.0, 1.0]])
        chain = make_chain(tm, unit_mass(2, 0), np.random.default_rng(5))
        path = walk(chain, tm, 10)
        assert path.tolist() == [1] * 10

    def test_point_mass_start_ignores_seed(self):
        tm = validate_stochastic(np.eye(2))
        for seed in range(5):
            chain = make_chain(tm, unit_mass(2, 1), np.random.default_rng(seed))
            assert chain.current == 1

    def test_random_start_hits_both(self):
        tm = validate_stochastic(np.eye(2))
        states = {
            make_chain(tm, [0.5, 0.5], np.random.default_rng(seed)).current
            for seed in range(20)
        }
        assert states == {0, 1}

    def test_walk_equals_step_loop(self):
        tm = study_matrix()
        a = make_chain(tm, unit_mass(7, 0), np.random.default_rng(42))
        b = make_chain(tm, unit_mass(7, 0), np.random.default_rng(42))
        path = walk(a, tm, 500)
        singles = np.asarray([step(b, tm).current for _ in range(500)])
        assert np.array_equal(path, singles)
        # the generators stay in lockstep afterwards
        assert step(a, tm).current == step(b, tm).current

    def test_visit_frequencies_match_limit(self):
        tm = study_matrix()
        dec = decompose(tm)
        pi0 = unit_mass(7, 4)
        target = limiting_distribution(pi0, dec)
        chain = make_chain(tm, pi0, np.random.default_rng(7))
        path = walk(chain, tm, 1000000)
        freq = np.bincount(path, minlength=7) / path.size
        assert np.max(np.abs(freq - target)) <= 5e-3

    def test_reseeding_reproduces(self):
        tm = study_matrix()
        p1 = walk(make_chain(tm, unit_mass(7, 2), np.random.default_rng(99)), tm, 1000)
        p2 = walk(make_chain(tm, unit_mass(7, 2), np.random.default_rng(99)), tm, 1000)
        assert np.array_equal(p1, p2)


# --------------------------------------------------------------------- io


class TestTextIO:
    def test_matrix_round_trip(self, tmp_path, nine_state):
        path = tmp_path / "mat.txt"
        write_matrix_text(nine_state, path)
        back = read_matrix_text(path)
        assert np.array_equal(back.matrix, nine_state.matrix)

    def test_read_counted_format(self, tmp_path):
        path = tmp_path / "mat.txt"
        path.write_text("2\n0.5 0.5\n0 1\n")
        back = read_matrix_text(path)
        assert np.array_equal(back.matrix, [[0.5, 0.5], [0.0, 1.0]])

    def test_read_distribution(self, tmp_path):
        path = tmp_path / "dist.txt"
        path.write_text("0.25 0.75\n")
        assert np.array_equal(read_distribution_text(path), [0.25, 0.75])

    def test_read_distribution_multiline(self, tmp_path):
        path = tmp_path / "dist.txt"
        path.write_text("0.25\n0.75\n")
        assert np.array_equal(read_distribution_text(path), [0.25, 0.75])

    def test_entry_count_mismatch_rejected(self, tmp_path):
        path = tmp_path / "mat.txt"
        path.write_text("2\n0.5 0.5\n1\n")
        with pytest.raises(ValueError):
            read_matrix_text(path)

    def test_empty_matrix_rejected(self, tmp_path):
        path = tmp_path / "mat.txt"
        path.write_text("")
        with pytest.raises(ValueError):
            read_matrix_text(path)

    def test_round_trip_survives_tiny_values(self, tmp_path):
        mat = validate_stochastic([[1.0 - 1e-13, 1e-13], [0.3, 0.7]])
        path = tmp_path / "mat.txt"
        write_matrix_text(mat, path)
        assert np.array_equal(read_matrix_text(path).matrix, mat.matrix)


class TestReport:
    def test_report_is_one_based(self, nine_state):
        rep = decomposition_report(decompose(nine_state))
        assert rep["classes"] == [[1, 2, 3, 4], [5, 6, 7]]
        assert rep["periods"] == [2, 3]
        assert rep["transient"] == [8, 9]
        assert rep["delta"] == 6

    def test_report_no_transients(self):
        rep = decomposition_report(decompose(study_matrix()))
        assert rep["transient"] == []
        assert rep["delta"] == 2


def test_tolerance_constants():
    assert FIXED_POINT_TOL == 1e-12
