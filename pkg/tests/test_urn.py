import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from urnphylo import models, rng
from urnphylo.spectral import builtin_spectral, diagonalize
from urnphylo.tree import builtin_tree, classify_all_edges
from urnphylo.urn import (
    PDA_MATRIX,
    YHK_MATRIX,
    TenabilityError,
    UndefinedProductError,
    UrnState,
    apply_draw,
    b_coeff,
    b_second_moment_limit,
    b_second_moment_sum,
    check_assumptions,
    f_ratio,
    replacement_matrix,
    run,
    urn_step,
)


class _Words:
    def __init__(self, words):
        self._w = list(words)

    def random_raw(self, size):
        out, self._w = self._w[:size], self._w[size:]
        return np.array(out, dtype=np.uint64)


class ScriptedStream:
    """Stand-in generator whose raw words are fixed in advance."""

    def __init__(self, words):
        self.bit_generator = _Words(words)


def word_for(counts, colour):
    # smallest word that lands on the first ball of ``colour`` (1-based)
    idx, t = sum(counts[: colour - 1]), sum(counts)
    w = (idx * 2**64 + t - 1) // t
    assert rng.choose(w, t) == idx
    return w


def scripted(state, R, colours):
    words, c = [], np.array(state)
    for col in colours:
        words.append(word_for(c.tolist(), col))
        c = c + R[col - 1]
    return ScriptedStream(words)


def test_replacement_matrix_lookup():
    assert np.array_equal(replacement_matrix("yhk"), YHK_MATRIX)
    assert np.array_equal(replacement_matrix("PDA"), PDA_MATRIX)
    with pytest.raises(ValueError):
        replacement_matrix("moran")


def test_state_validation():
    assert UrnState((1, 2, 3)).total == 6
    with pytest.raises(ValueError):
        UrnState((1, -1))


def test_step_only_drawable_colour():
    s = UrnState((0, 2, 0, 0))
    for r in range(50):
        nxt, c = urn_step(s, YHK_MATRIX, rng.make_stream(1, r))
        assert c == 1
        assert nxt.counts == (2, 0, 1, 0)


def test_step_full_matrix_colour_two():
    s = (0, 2, 0, 0, 1, 0)
    nxt, c = urn_step(UrnState(s), PDA_MATRIX, scripted(s, PDA_MATRIX, [2]))
    assert c == 1
    assert nxt.counts == (2, 0, 1, 0, 0, 2)


@settings(max_examples=50, deadline=None)
@given(counts=st.lists(st.integers(0, 20), min_size=1, max_size=5).filter(lambda c: sum(c) > 0),
       seed=st.integers(0, 2**32))
def test_identity_urn_step(counts, seed):
    R = np.eye(len(counts), dtype=np.int64)
    nxt, c = urn_step(UrnState(tuple(counts)), R, rng.make_stream(seed))
    assert counts[c] > 0
    assert nxt.total == sum(counts) + 1
    assert nxt.counts[c] == counts[c] + 1


def test_step_frequencies():
    s = UrnState((1, 3))
    R = np.eye(2, dtype=np.int64)
    N = 8000
    stream = rng.make_stream(4)
    hits = sum(urn_step(s, R, stream)[1] for _ in range(N))
    assert abs(hits / N - 0.75) < 4 * np.sqrt(0.75 * 0.25 / N)


def test_step_tenability_error():
    R = np.array([[1, 0], [-3, 4]], dtype=np.int64)
    s = (0, 2)
    with pytest.raises(TenabilityError) as ei:
        urn_step(UrnState(s), R, rng.make_stream(0))
    assert tuple(ei.value.state) == s
    assert list(ei.value.row) == [-3, 4]


def test_step_empty_urn():
    with pytest.raises(ValueError):
        urn_step(UrnState((0, 0)), np.eye(2, dtype=np.int64), rng.make_stream(0))


# -- run ---------------------------------------------------------------------


def test_run_pendant_sample_path(backend):
    s0 = (0, 2, 0, 0)
    traj = run(UrnState(s0), YHK_MATRIX, 4, scripted(s0, YHK_MATRIX, [2, 1, 4, 3]),
               backend=backend)
    assert traj.counts.tolist() == [
        [0, 2, 0, 0], [2, 0, 1, 0], [2, 0, 1, 1], [2, 2, 1, 0], [0, 6, 0, 0]]
    assert (traj.drawn + 1).tolist() == [2, 1, 4, 3]


def test_run_draw_order_two_one_three_four_leaves_nonnegative_state():
    # the alternative order 2,1,3,4 also ends at three cherries but
    # passes through different intermediate states
    s0 = (0, 2, 0, 0)
    traj = run(UrnState(s0), YHK_MATRIX, 4, scripted(s0, YHK_MATRIX, [2, 1, 3, 4]))
    assert traj.final.counts == (0, 6, 0, 0)
    assert traj.counts[2].tolist() == [2, 0, 1, 1]
    assert traj.counts[3].tolist() == [0, 4, 0, 1]


def test_run_zero_steps():
    traj = run(UrnState((0, 2, 0, 0)), YHK_MATRIX, 0, rng.make_stream(0))
    assert traj.counts.tolist() == [[0, 2, 0, 0]]
    assert traj.final == UrnState((0, 2, 0, 0))
    assert traj.drawn.size == 0


@pytest.mark.parametrize("model, s0", [("yhk", (0, 2, 0, 0)), ("pda", (0, 2, 0, 0, 1, 0))])
def test_run_balanced_growth_and_nonnegative(model, s0, backend):
    R = replacement_matrix(model)
    s = R.sum(axis=1)[0]
    for r in range(20):
        traj = run(UrnState(s0), R, 500, rng.make_stream(2, r), backend=backend)
        assert np.all(np.diff(traj.totals) == s)
        assert traj.counts.min() >= 0


@pytest.mark.parametrize("model, s0", [("yhk", (0, 2, 0, 0)), ("pda", (0, 2, 0, 0, 1, 0))])
def test_run_backends_agree(model, s0):
    from urnphylo._backend import BACKEND

    if BACKEND != "cython":
        pytest.skip("compiled kernels not built")
    R = replacement_matrix(model)
    a = run(UrnState(s0), R, 3000, rng.make_stream(9), backend="python")
    b = run(UrnState(s0), R, 3000, rng.make_stream(9), backend="cython")
    assert np.array_equal(a.counts, b.counts)
    assert np.array_equal(a.drawn, b.drawn)


def test_run_strong_law():
    traj = run(UrnState((0, 2, 0, 0)), YHK_MATRIX, 10**6, rng.make_stream(2026))
    ratio = traj.final.counts / np.float64(10**6)
    assert np.max(np.abs(ratio - np.array([2, 2, 1, 1]) / 6)) < 0.01


def test_run_requires_balance():
    R = np.array([[3, 0], [0, 1]], dtype=np.int64)
    with pytest.raises(ValueError):
        run(UrnState((1, 1)), R, 5, rng.make_stream(0))
    traj = run(UrnState((1, 1)), R, 5, rng.make_stream(0), require_balanced=False)
    assert traj.counts.shape == (6, 2)


def test_run_reports_tenability_step():
    R = np.array([[1, 0], [-4, 5]], dtype=np.int64)
    s0 = (2, 1)
    stream = scripted(s0, R, [1, 2])
    with pytest.raises(TenabilityError) as ei:
        run(UrnState(s0), R, 2, stream, require_balanced=False)
    assert ei.value.step == 2


def test_trajectory_csv():
    s0 = (0, 2, 0, 0)
    traj = run(UrnState(s0), YHK_MATRIX, 2, scripted(s0, YHK_MATRIX, [2, 1]))
    lines = traj.to_csv().splitlines()
    assert lines[0] == "step,C1,C2,C3,C4,t,drawn"
    assert lines[1] == "0,0,2,0,0,2,"
    assert lines[2] == "1,2,0,1,0,3,2"
    assert lines[3] == "2,2,0,1,1,4,1"


@pytest.mark.parametrize("model", ["yhk", "pda"])
def test_urn_replays_growth_traces(model):
    R = replacement_matrix(model)
    d = R.shape[0]
    seed = builtin_tree("t2")
    for r in range(100):
        _, trace = models.generate(models.ProcessKind(model), seed, 3 + r % 40, 5, r)
        state = UrnState(classify_all_edges(seed)[:d])
        for tree, ty in zip(list(trace.trees())[1:], trace.types):
            state = apply_draw(state, R, ty - 1)
            assert state.counts == classify_all_edges(tree)[:d]


def test_apply_draw():
    assert apply_draw(UrnState((0, 2, 0, 0)), YHK_MATRIX, 1).counts == (2, 0, 1, 0)
    with pytest.raises(ValueError):
        apply_draw(UrnState((0, 2, 0, 0)), YHK_MATRIX, 0)
    with pytest.raises(ValueError):
        apply_draw(UrnState((0, 2, 0, 0)), YHK_MATRIX, 4)
    with pytest.raises(TenabilityError):
        apply_draw(UrnState((1, 1)), [[0, 1], [-2, 3]], 1)


# -- assumption reports --------------------------------------------------------


@pytest.mark.parametrize("R, s0, ev", [
    (YHK_MATRIX, (0, 2, 0, 0), (1, 0, -2, -3)),
    (PDA_MATRIX, (0, 2, 0, 0, 1, 0), (2, 0, 0, 0, -2, -4)),
])
def test_assumptions_builtin(R, s0, ev):
    rep = check_assumptions(R, initial=s0, trials=5, steps=300)
    assert rep.ok
    assert rep.tenable is True
    assert np.allclose(rep.eigenvalues, ev, atol=1e-8)
    assert any("witnessed-tenable" in m for m in rep.messages)


def test_assumptions_ones_matrix():
    rep = check_assumptions([[1, 1], [1, 1]])
    assert rep.small and rep.balanced and rep.diagonalizable
    assert rep.tenable is None


def test_assumptions_unequal_row_sums():
    rep = check_assumptions([[3, 0], [0, 1]])
    assert not rep.balanced
    assert not rep.ok
    assert any(m.startswith("balance:") for m in rep.messages)


def test_assumptions_large_second_eigenvalue():
    rep = check_assumptions([[2, 0], [0, 2]])
    assert not rep.small


def test_assumptions_complex_spectrum():
    rep = check_assumptions([[1, 1, -1], [-1, 1, 1], [1, -1, 1]])
    assert not rep.small
    assert not rep.diagonalizable


def test_assumptions_defective():
    rep = check_assumptions([[2, 1], [0, 2]])
    assert not rep.diagonalizable


def test_assumptions_witness_violation():
    rep = check_assumptions([[1, 0], [-3, 4]], initial=(1, 1), trials=5, steps=50)
    assert rep.tenable is False
    assert not rep.ok


# -- b-coefficients ------------------------------------------------------------


@pytest.fixture(scope="module")
def yhk_sp():
    return builtin_spectral("yhk")


@pytest.fixture(scope="module")
def pda_sp():
    return builtin_spectral("pda")


@pytest.mark.parametrize("n", [0, 1, 5, 100])
@pytest.mark.parametrize("j", [1, 2, 3, 4])
def test_b_coeff_diagonal(yhk_sp, n, j):
    assert b_coeff(n, n, j, yhk_sp, 2) == 1.0


def test_b_coeff_principal(yhk_sp, pda_sp):
    for n in (1, 10, 1000):
        assert b_coeff(n, 0, 1, yhk_sp, 2) == pytest.approx((2 + n) / 2, rel=1e-12)
        assert b_coeff(n, 0, 1, pda_sp, 3) == pytest.approx((3 + 2 * n) / 3, rel=1e-12)


def test_b_coeff_single_factor(yhk_sp):
    assert b_coeff(2, 1, 3, yhk_sp, 2) == pytest.approx(1 / 3, rel=1e-14)


def test_b_coeff_sign_and_zero(yhk_sp):
    # t_0 = 2, lambda = -3: factor 1 - 3/2 < 0
    assert b_coeff(1, 0, 4, yhk_sp, 2) == pytest.approx(-0.5)
    # t_1 = 3, lambda = -3: factor zero
    assert b_coeff(5, 0, 4, yhk_sp, 2) == 0.0


def test_b_coeff_errors(yhk_sp):
    with pytest.raises(UndefinedProductError):
        b_coeff(3, 0, 3, yhk_sp, -1)
    with pytest.raises(ValueError):
        b_coeff(3, 4, 3, yhk_sp, 2)
    with pytest.raises(IndexError):
        b_coeff(3, 1, 5, yhk_sp, 2)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 300), data=st.data(), j=st.integers(1, 6))
def test_b_coeff_telescoping(pda_sp, n, data, j):
    k = data.draw(st.integers(0, n - 1))
    lam, s = float(pda_sp.eigenvalues[j - 1]), float(pda_sp.s)
    lhs = b_coeff(n, k, j, pda_sp, 3)
    rhs = b_coeff(n, k + 1, j, pda_sp, 3) * (1 + lam / (3 + k * s))
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-300)


def test_b_sum_matches_direct(yhk_sp):
    n = 60
    direct = sum(b_coeff(n, k, 3, yhk_sp, 2) * b_coeff(n, k, 4, yhk_sp, 2)
                 for k in range(1, n + 1)) / n
    assert b_second_moment_sum(n, 3, 4, yhk_sp, 2) == pytest.approx(direct, rel=1e-12)


def test_b_sum_zero_eigenvalue(yhk_sp):
    for n in (1, 7, 1000):
        assert b_second_moment_sum(n, 2, 2, yhk_sp, 2) == 1.0
    assert b_second_moment_limit(2, 2, yhk_sp) == 1


@pytest.mark.parametrize("model, t0, i, j", [
    ("yhk", 2, 3, 3), ("yhk", 2, 3, 4), ("yhk", 2, 4, 4),
    ("pda", 3, 5, 5), ("pda", 3, 5, 6), ("pda", 3, 6, 6),
])
def test_b_sum_limit(model, t0, i, j):
    sp = builtin_spectral(model)
    lim = b_second_moment_limit(i, j, sp)
    assert abs(b_second_moment_sum(10**5, i, j, sp, t0) - float(lim)) < 1e-2


def test_b_limit_values(yhk_sp, pda_sp):
    from fractions import Fraction

    assert b_second_moment_limit(3, 3, yhk_sp) == Fraction(1, 5)
    assert b_second_moment_limit(5, 6, pda_sp) == Fraction(1, 4)


def test_b_sum_index_guard(yhk_sp):
    with pytest.raises(ValueError):
        b_second_moment_sum(10, 1, 2, yhk_sp, 2)
    with pytest.raises(ValueError):
        b_second_moment_sum(10, 4, 3, yhk_sp, 2)


def test_b_sum_numeric_spectrum():
    sp = diagonalize(YHK_MATRIX)
    assert abs(b_second_moment_sum(10**5, 3, 3, sp, 2) - 0.2) < 1e-2


# -- F ratio -------------------------------------------------------------------


@pytest.mark.parametrize("m", [0, 1, 50])
def test_f_ratio_trivial(m):
    assert f_ratio(m, m, 2.0, -2.0) == 1.0
    assert f_ratio(m, m + 100, 1.5, 0.0) == 1.0


def test_f_ratio_power_law():
    m, n = 10**3, 10**6
    assert abs((m / n) ** -2 * f_ratio(m, n, 2.0, -2.0) - 1) < 1e-2


@settings(max_examples=50, deadline=None)
@given(m=st.integers(0, 50), k=st.integers(0, 50), ell=st.floats(0.5, 10), lam=st.floats(-3, 3))
def test_f_ratio_composes(m, k, ell, lam):
    n = m + k
    whole = f_ratio(m, n + 5, ell, lam)
    parts = f_ratio(m, n, ell, lam) * f_ratio(n, n + 5, ell, lam)
    assert whole == pytest.approx(parts, rel=1e-9, abs=1e-300)


def test_f_ratio_errors():
    with pytest.raises(ValueError):
        f_ratio(5, 4, 1.0, 1.0)
    with pytest.raises(ValueError):
        f_ratio(0, 4, 0.0, 1.0)
