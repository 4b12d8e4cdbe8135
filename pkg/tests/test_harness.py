import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from urnphylo import rng
from urnphylo.harness import (
    KS_COEFF,
    CampaignConfig,
    ConfigError,
    RankError,
    StreamingMoments,
    initial_tree_independence,
    merge_tree,
    normality_test,
    resolve_tree,
    run_campaign,
    simulate_counts,
    theory,
    unrooted_split_frequency,
)
from urnphylo.models import ProcessKind, generate
from urnphylo.tree import builtin_tree, classify_all_edges, count_cherries, count_pitchforks


# -- streaming moments ---------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32), N=st.integers(2, 300), cuts=st.lists(st.integers(0, 300), max_size=6))
def test_streaming_merge_partition_independent(seed, N, cuts):
    x = np.random.default_rng(seed).normal(size=(N, 3)) * [1, 10, 100] + [5, -3, 1e3]
    bounds = sorted({0, N, *[c % (N + 1) for c in cuts]})
    parts = [StreamingMoments.from_batch(x[a:b]) for a, b in zip(bounds, bounds[1:])]
    whole = StreamingMoments.from_batch(x)
    merged = merge_tree(parts)
    rev = merge_tree(parts[::-1])
    assert merged.n == N
    for m in (merged, rev):
        assert np.allclose(m.mean, whole.mean, rtol=1e-12, atol=1e-12)
        assert np.allclose(m.cov, np.cov(x, rowvar=False), rtol=1e-12, atol=1e-9)


def test_streaming_sequential_updates():
    x = np.arange(20.0).reshape(10, 2) ** 1.5
    acc = StreamingMoments(2)
    for row in x:
        acc.update(row[None, :])
    assert np.allclose(acc.cov, np.cov(x, rowvar=False), rtol=1e-12)
    assert np.isnan(StreamingMoments(2).cov).all()
    with pytest.raises(ValueError):
        merge_tree([])


# -- normality test -----------------------------------------------------------


def test_normality_synthetic_pass():
    th = theory("yhk")
    x = np.random.default_rng(1).multivariate_normal(np.zeros(4), th.sigma_edges, size=10_000)
    rep = normality_test(x, th.sigma_edges)
    # only the two nonzero non-principal eigenvalues contribute
    assert rep.rank == 2
    assert rep.threshold == pytest.approx(KS_COEFF / 100)
    assert rep.passed


def test_normality_detects_wrong_shape():
    th = theory("pda")
    x = np.random.default_rng(2).uniform(-1, 1, size=(10_000, 2)) * np.sqrt(3 * np.diag(th.sigma_ab))
    assert not normality_test(x, th.sigma_ab).passed


def test_normality_constant_samples_fail():
    th = theory("yhk")
    rep = normality_test(np.ones((500, 2)), th.sigma_ab)
    assert not rep.passed
    assert rep.ks_mahalanobis > 0.5


def test_normality_errors():
    with pytest.raises(RankError):
        normality_test(np.zeros((10, 2)), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        normality_test(np.zeros((10, 3)), np.eye(2))


# -- configuration ------------------------------------------------------------


def test_config_round_trip():
    c = CampaignConfig(model="pda", n=50, replicates=20, base_seed=7, tests=["cov"])
    again = CampaignConfig.from_dict(json.loads(json.dumps(c.to_dict())))
    assert again == c
    assert again.digest() == c.digest()
    assert CampaignConfig(n=51).digest() != CampaignConfig(n=50).digest()


@pytest.mark.parametrize("kwargs", [
    {"model": "moran"},
    {"replicates": 1},
    {"n": 2},
    {"seed_tree": "t1", "n": 7},
    {"rooted": False, "seed_tree": "star3"},
    {"rooted": False, "seed_tree": "t2"},
    {"seed_tree": "((1,2);"},
    {"tests": ["mean", "vibes"]},
])
def test_config_errors(kwargs):
    with pytest.raises(ConfigError):
        CampaignConfig(**kwargs).validate()


def test_config_unknown_key():
    with pytest.raises(ConfigError):
        CampaignConfig.from_dict({"model": "yhk", "colour": "red"})


def test_resolve_tree(tmp_path):
    assert resolve_tree("t1").leaf_count == 7
    assert resolve_tree("((1,2),3);").leaf_count == 3
    p = tmp_path / "seed.nwk"
    p.write_text("(((1,2),3),(4,5));\n")
    assert resolve_tree(str(p)).leaf_count == 5


def test_theory_centres():
    assert np.allclose(theory("yhk").centre, np.array([2, 2, 1, 1]) / 6)
    assert np.allclose(theory("pda").centre, np.array([4, 4, 2, 6, 2, 14]) / 16)


# -- campaigns ----------------------------------------------------------------


def test_degenerate_campaign():
    res = run_campaign(CampaignConfig(model="yhk", n=3, replicates=2))
    assert res.replicates == 2
    assert set(res.tests) == {"mean", "cov", "normality"}
    json.loads(res.to_json())


def test_campaign_is_reproducible(backend):
    cfg = CampaignConfig(model="pda", n=200, replicates=300, base_seed=5, chunk=64,
                         keep_samples=True, backend=backend)
    a, b = run_campaign(cfg), run_campaign(cfg)
    assert a.to_json() == b.to_json()
    assert np.array_equal(a.samples, b.samples)


def test_campaign_backends_agree():
    from urnphylo._backend import BACKEND

    if BACKEND != "cython":
        pytest.skip("compiled kernels not built")
    base = dict(model="yhk", n=150, replicates=200, base_seed=3, keep_samples=True)
    a = run_campaign(CampaignConfig(backend="python", **base))
    b = run_campaign(CampaignConfig(backend="cython", **base))
    assert np.array_equal(a.samples, b.samples)


def test_campaign_chunking_does_not_change_samples():
    base = dict(model="yhk", n=100, replicates=250, base_seed=8, keep_samples=True)
    a = run_campaign(CampaignConfig(chunk=250, **base))
    b = run_campaign(CampaignConfig(chunk=17, **base))
    assert np.array_equal(a.samples, b.samples)
    assert np.allclose(a.cov_z_ab, b.cov_z_ab, rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("kind", [ProcessKind("yhk"), ProcessKind("pda"),
                                  ProcessKind("pda", False)], ids=lambda k: k.name)
def test_campaign_matches_single_generation(kind):
    seed = "t2" if kind.rooted else "((1,2),(3,4),(5,6));"
    cfg = CampaignConfig(model=kind.model, rooted=kind.rooted, seed_tree=seed, n=40,
                         replicates=25, base_seed=11)
    counts = simulate_counts(cfg)
    for r in range(25):
        tree, _ = generate(kind, cfg.tree(), 40, 11, r)
        vec = classify_all_edges(tree)
        assert tuple(counts[r]) == vec
        assert count_pitchforks(tree) == vec[0] // 2
        assert count_cherries(tree) == (vec[0] + vec[1]) // 2


def test_samples_csv():
    res = run_campaign(CampaignConfig(n=20, replicates=5, keep_samples=True))
    lines = res.samples_csv().splitlines()
    assert lines[0] == "replicate,E1,E2,E3,E4,E5,E6,A,B"
    assert len(lines) == 6
    with pytest.raises(ValueError):
        run_campaign(CampaignConfig(n=20, replicates=5)).samples_csv()


def test_campaign_moderate_yhk():
    res = run_campaign(CampaignConfig(model="yhk", n=500, replicates=2000, base_seed=42))
    assert res.tests["mean"]["passed"]
    assert res.tests["cov"]["passed"]
    assert np.allclose(res.mean_counts, res.centre, atol=0.01)
    cov = np.array(res.cov_z_ab)
    assert np.allclose(cov, cov.T)
    assert np.linalg.eigvalsh(cov).min() >= 0


def test_unrooted_split_frequency_small():
    p, se, counts = unrooted_split_frequency(20_000, base_seed=1)
    assert counts.shape == (20_000, 6)
    assert abs(p - 0.8) < 4 * se


# -- initial-tree independence -----------------------------------------------------


def test_independence_identical_seeds_bit_identical():
    rep = initial_tree_independence("yhk", ["t2", "t2"], n=120, N=300, base_seed=4)
    a, b = rep.results
    assert a.cov_z_ab == b.cov_z_ab and a.mean_z_ab == b.mean_z_ab
    assert rep.pairwise[0]["cov_distance"] == 0
    assert not rep.pairwise[0]["flagged"]


def test_independence_pda_seeds():
    seeds = ["(((((1,2),3),4),5),6);", "(((1,2),3),((4,5),6));"]
    rep = initial_tree_independence("pda", seeds, n=400, N=3000, base_seed=9,
                                    tests=["mean", "cov"])
    assert rep.passed
    assert np.all(np.abs(rep.pairwise[0]["mean_diff_z"]) <= 3)
    assert len(rep.to_dict()["results"]) == 2


def test_independence_needs_two_seeds():
    with pytest.raises(ConfigError):
        initial_tree_independence("yhk", ["t2"], n=50, N=10)
