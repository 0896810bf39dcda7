import math

import numpy as np
import pytest

from dprl.mdp import build_riverswim, rollout, uniform_policy
from dprl.privatizers import (
    BinaryTreeCounter,
    CentralPrivatizer,
    IdentityPrivatizer,
    LocalPrivatizer,
    dyadic_cover,
    laplace_from_uniform,
    laplace_sample,
    make_privatizer,
    precision_levels,
    tree_depth,
    zero_noise,
)
from dprl.statistics import VisitStatistics
from oracles import greedy_dyadic_cover


def test_dyadic_cover_examples():
    assert dyadic_cover(0) == []
    assert dyadic_cover(1) == [(1, 1)]
    assert dyadic_cover(6) == [(1, 4), (5, 6)]
    assert dyadic_cover(7) == [(1, 4), (5, 6), (7, 7)]


@pytest.mark.parametrize("n", [1, 2, 3, 5, 8, 100, 1023, 1024, 4095])
def test_dyadic_cover_structure(n):
    cover = dyadic_cover(n)
    assert cover == greedy_dyadic_cover(n)
    assert len(cover) == bin(n).count("1") <= math.ceil(math.log2(n)) + 1
    position = 1
    for start, end in cover:
        size = end - start + 1
        assert start == position and size & (size - 1) == 0 and (start - 1) % size == 0
        position = end + 1
    assert position == n + 1


def test_laplace_inverse_cdf_median():
    assert laplace_from_uniform(0.5, 3.0) == 0.0
    assert laplace_from_uniform(0.75, 1.0) == pytest.approx(math.log(2))
    assert laplace_from_uniform(0.25, 1.0) == pytest.approx(-math.log(2))


def test_laplace_rejects_bad_scale(rng):
    for b in (0.0, -1.0):
        with pytest.raises(ValueError):
            laplace_sample(b, rng)


def test_laplace_scalar_and_array(rng):
    assert isinstance(laplace_sample(1.0, rng), float)
    assert laplace_sample(1.0, rng, size=(2, 3)).shape == (2, 3)


def _stream(rng, n, shape):
    return [(rng.random(shape) < 0.4).astype(float) for _ in range(n)]


def test_tree_counter_zero_noise_is_exact(rng):
    items = _stream(rng, 1024, (3,))
    counter = BinaryTreeCounter(1024, 5.0, (3,), rng, noise=zero_noise)
    running = np.zeros(3)
    for t, x in enumerate(items, start=1):
        counter.add(x)
        running += x
        np.testing.assert_array_equal(counter.prefix_sum(), running)
        assert len(counter.live_levels()) == bin(t).count("1") <= math.ceil(math.log2(t)) + 1


def test_tree_counter_capacity(rng):
    counter = BinaryTreeCounter(2, 1.0, (), rng)
    counter.add(1.0).add(0.0)
    with pytest.raises(ValueError, match="capacity"):
        counter.add(1.0)


def test_tree_counter_noise_log_reconstruction(rng):
    counter = BinaryTreeCounter(16, 2.0, (4,), rng, log_noise=True)
    items = _stream(rng, 6, (4,))
    for x in items:
        counter.add(x)
    log = dict(counter.noise_log)
    assert set(log) == {(1, 1), (1, 2), (3, 3), (1, 4), (5, 5), (5, 6)}
    deviation = counter.prefix_sum() - np.sum(items, axis=0)
    np.testing.assert_allclose(deviation, log[(1, 4)] + log[(5, 6)], atol=1e-12)


def _episodes(rng, n, horizon=4):
    mdp = build_riverswim()
    from dprl.mdp import MdpSpec

    small = MdpSpec(mdp.transitions[:horizon], mdp.mean_costs[:horizon])
    return [rollout(small, uniform_policy(horizon, 6, 2), rng) for _ in range(n)]


def _true_stats(episodes):
    stats = VisitStatistics.zeros(len(episodes[0]), 6, 2)
    for e in episodes:
        stats.accumulate(e)
    return stats


@pytest.mark.parametrize("cls", [IdentityPrivatizer, CentralPrivatizer, LocalPrivatizer])
def test_first_release_is_zero(cls):
    priv = cls(10, 4, 6, 2, epsilon=1.0, random_state=0).reset()
    counts = priv.release(1)
    for arr in (counts.N, counts.C, counts.Ntrans):
        assert not arr.any()


def test_identity_mirrors_true_counts(rng):
    episodes = _episodes(rng, 30)
    priv = IdentityPrivatizer(30, 4, 6, 2).reset()
    for k, e in enumerate(episodes, start=1):
        priv.ingest(e, k)
        counts = priv.release(k + 1)
        truth = _true_stats(episodes[:k])
        np.testing.assert_array_equal(counts.N, truth.N)
        np.testing.assert_array_equal(counts.C, truth.C)
        np.testing.assert_array_equal(counts.Ntrans, truth.Ntrans)
    assert priv.precision_levels().E1 == 0 and priv.precision_levels().E2 == 0


@pytest.mark.parametrize("cls", [CentralPrivatizer, LocalPrivatizer])
def test_zero_noise_hook_recovers_true_counts(cls, rng):
    episodes = _episodes(rng, 40)
    priv = cls(40, 4, 6, 2, epsilon=0.5, noise=zero_noise).reset()
    for k, e in enumerate(episodes, start=1):
        priv.ingest(e)
        truth = _true_stats(episodes[:k])
        counts = priv.release(k + 1)
        np.testing.assert_allclose(counts.N, truth.N, atol=1e-9)
        np.testing.assert_allclose(counts.C, truth.C, atol=1e-9)
        np.testing.assert_allclose(counts.Ntrans, truth.Ntrans, atol=1e-9)


def test_local_perturbs_every_cell(rng):
    episodes = _episodes(rng, 1)
    priv = LocalPrivatizer(5, 4, 6, 2, epsilon=1.0, random_state=3).reset()
    priv.ingest(episodes[0])
    counts = priv.release(2)
    assert np.all(counts.N != 0) and np.all(counts.C != 0) and np.all(counts.Ntrans != 0)


def test_central_noise_is_sum_of_logged_nodes(rng):
    episodes = _episodes(rng, 6)
    priv = CentralPrivatizer(64, 4, 6, 2, epsilon=1.0, random_state=9, log_noise=True).reset()
    for e in episodes:
        priv.ingest(e)
    counts = priv.release(7)
    truth = _true_stats(episodes)
    for name in ("N", "C", "Ntrans"):
        log = dict(priv.noise_logs_[name])
        expected = getattr(truth, name) + log[(1, 4)] + log[(5, 6)]
        np.testing.assert_allclose(getattr(counts, name), expected, atol=1e-9)


def test_release_idempotent_and_deterministic(rng):
    episodes = _episodes(rng, 9)

    def run(seed):
        priv = CentralPrivatizer(16, 4, 6, 2, epsilon=1.0, random_state=seed).reset()
        for e in episodes:
            priv.ingest(e)
        return priv

    a, b = run(5), run(5)
    first, second, other = a.release(10), a.release(10), b.release(10)
    for name in ("N", "C", "Ntrans"):
        assert getattr(first, name).tobytes() == getattr(second, name).tobytes()
        assert getattr(first, name).tobytes() == getattr(other, name).tobytes()
    assert not np.array_equal(run(6).release(10).N, first.N)


def test_ingest_and_release_order_checks(rng):
    episodes = _episodes(rng, 3)
    priv = LocalPrivatizer(2, 4, 6, 2, random_state=1).reset()
    with pytest.raises(ValueError, match="out of order"):
        priv.ingest(episodes[0], k=2)
    priv.ingest(episodes[0], k=1)
    with pytest.raises(ValueError, match="needs 2 ingested episodes, have 1"):
        priv.release(3)
    priv.ingest(episodes[1])
    with pytest.raises(ValueError, match="configured for 2"):
        priv.ingest(episodes[2])


def test_privatizer_parameter_validation():
    with pytest.raises(ValueError, match="epsilon"):
        LocalPrivatizer(5, 2, 2, 2, epsilon=0.0).reset()
    with pytest.raises(ValueError, match="delta"):
        CentralPrivatizer(5, 2, 2, 2, delta=1.5).reset()
    with pytest.raises(ValueError, match="unknown privatizer"):
        make_privatizer("gaussian", 5, 2, 2, 2)


def test_get_params_round_trip():
    priv = CentralPrivatizer(50, 3, 2, 2, epsilon=0.7, delta=0.05, random_state=1)
    params = priv.get_params()
    assert params["epsilon"] == 0.7 and params["n_episodes"] == 50 and params["log_noise"] is False


def test_central_noise_scale_uses_tree_depth():
    # a leaf of a K-bounded tree sits in ceil(log2(K + 1)) stored nodes
    assert tree_depth(1) == 1 and tree_depth(2) == 2 and tree_depth(3) == 2
    assert tree_depth(1023) == 10 and tree_depth(1024) == 11 and tree_depth(1025) == 11
    priv = CentralPrivatizer(20_000, 20, 6, 2, epsilon=2.0)
    assert priv.noise_scale == pytest.approx(3 * 20 * 15 / 2.0)
    assert LocalPrivatizer(10, 20, 6, 2, epsilon=2.0).noise_scale == pytest.approx(30.0)


def test_precision_levels_values():
    ident = precision_levels("identity", 1.0, 0.1, 100, 5, 3, 2)
    assert (ident.E1, ident.E2) == (0.0, 0.0)
    central = precision_levels("central", 1.0, 0.1, 20_000, 20, 6, 2)
    # closed form evaluated independently: 60 * sqrt(8 * 15^3 * ln(2.88e8)), tree depth 15
    assert central.E1 == pytest.approx(43512.15, abs=0.01)
    assert central.E2 == pytest.approx(
        60 * math.sqrt(8 * 15**3 * math.log(6 * 36 * 2 * 400_000 / 0.1)),
        rel=1e-12,
    )
    local = precision_levels("local", 1.0, 0.1, 20_000, 20, 6, 2)
    ratio = math.sqrt(20_000 / 15**3)
    assert local.E1 / central.E1 == pytest.approx(ratio, rel=1e-12)
    assert local.E2 / central.E2 == pytest.approx(ratio, rel=1e-12)
    # a larger T only enters through the log term
    shorter = precision_levels("central", 1.0, 0.1, 20_000, 20, 6, 2, total_steps=1000)
    assert shorter.E1 < central.E1
    assert precision_levels("central", 1.0, 0.1, 1, 2, 2, 2).E1 > 0


def test_central_bound_covers_the_tree_noise():
    # a release sums at most tree_depth(K) nodes of scale 3H * depth / eps; Chan et al.'s
    # tail bound for that sum is (3H/eps) sqrt(8 depth^3 ln(1/lambda))
    for K in (1, 2, 64, 3000, 20_000):
        priv = CentralPrivatizer(K, 5, 3, 2, epsilon=0.7)
        depth = tree_depth(K)
        assert max(bin(n).count("1") for n in range(1, K + 1)) <= depth
        nu = priv.noise_scale * math.sqrt(depth)
        E1 = priv.precision_levels().E1
        assert E1 == pytest.approx(nu * math.sqrt(8 * math.log(6 * 3 * 2 * K * 5 / 0.1)))


def test_tree_release_likelihood_ratio_smoke():
    # neighbouring streams (1, 0) and (0, 0); every column is an independent replica
    n, b = 100_000, 1.0
    rng = np.random.default_rng(2024)
    finals = []
    for first in (1.0, 0.0):
        counter = BinaryTreeCounter(2, b, (n,), rng)
        counter.add(np.full(n, first)).add(np.zeros(n))
        finals.append(counter.prefix_sum())
    edges = np.linspace(-2.0, 3.0, 21)
    p, _ = np.histogram(finals[0], edges)
    q, _ = np.histogram(finals[1], edges)
    dense = (p >= 1000) & (q >= 1000)
    assert dense.sum() >= 8
    ratio = np.maximum(p[dense] / q[dense], q[dense] / p[dense])
    # one node covers both items, so the pair of streams is 1/b-indistinguishable
    assert ratio.max() <= math.exp(1 / b) * 1.15


def test_noise_log_csv(rng, tmp_path):
    episodes = _episodes(rng, 3)
    priv = CentralPrivatizer(4, 4, 6, 2, random_state=2, log_noise=True).reset()
    for e in episodes:
        priv.ingest(e)
    path = tmp_path / "noise.csv"
    priv.write_noise_log(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "statistic,start,end,step,state,action,next_state,noise"
    # nodes [1,1], [1,2], [3,3]; 48 scalar cells twice plus 288 transition cells
    assert len(lines) == 1 + 3 * (48 + 48 + 288)
    first = lines[1].split(",")
    assert first[:7] == ["N", "1", "1", "0", "0", "0", ""]
    assert float(first[7]) == priv.noise_logs_["N"][0][1][0, 0, 0]
    with pytest.raises(ValueError, match="log_noise"):
        CentralPrivatizer(4, 4, 6, 2).reset().write_noise_log(path)
