import numpy as np
import pytest

from hetgen.core import LabeledPermutation, SkeletonGraph, TypeTable, labeled_permute, validate
from hetgen.corpus import SizeDistribution
from hetgen import autodiff as ad
from hetgen import diffusion as df

MARGINAL = np.array([0.5, 0.3, 0.2])


def small_schedule(T=4, beta=None, edge_marginal=0.3):
    return df.build_schedule(T, MARGINAL, edge_marginal, beta)


def random_skeleton(rng, n=None, K=3):
    n = n or int(rng.integers(2, 8))
    types = tuple(int(t) for t in rng.integers(0, K, n))
    edges = tuple((u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < 0.4)
    return SkeletonGraph(n, types, edges)


class TestSchedule:
    def test_zero_beta_keeps_identity(self):
        sch = small_schedule(T=5, beta=np.zeros(5))
        assert np.allclose(sch.qxbar(5), np.eye(3))
        assert np.allclose(sch.qebar(5), np.eye(2))

    def test_full_jump_at_first_step(self):
        sch = small_schedule(T=1, beta=np.ones(1))
        for row in sch.qxbar(1):
            assert np.allclose(row, MARGINAL, atol=1e-12)

    def test_cumulative_matches_naive_product(self):
        rng = np.random.default_rng(0)
        beta = rng.random(6)
        sch = small_schedule(T=6, beta=beta)
        acc = np.eye(3)
        for t in range(1, 7):
            acc = acc @ sch.qx(t)
            assert np.abs(acc - sch.qxbar(t)).max() <= 1e-12

    def test_rows_stochastic_after_many_products(self):
        sch = small_schedule(T=200)
        assert np.abs(sch.QXbar.sum(axis=-1) - 1.0).max() <= 1e-12
        assert np.abs(sch.QEbar.sum(axis=-1) - 1.0).max() <= 1e-12

    def test_cosine_beta_ends_at_marginal(self):
        sch = small_schedule(T=50)
        assert np.abs(sch.qxbar(50) - np.tile(MARGINAL, (3, 1))).max() <= 1e-6

    def test_bad_inputs_rejected(self):
        with pytest.raises(ValueError):
            df.build_schedule(0, MARGINAL, 0.3)
        with pytest.raises(ValueError):
            df.build_schedule(2, np.array([0.5, 0.6]), 0.3)
        with pytest.raises(ValueError):
            df.build_schedule(2, MARGINAL, 1.5)
        with pytest.raises(ValueError):
            df.build_schedule(2, MARGINAL, 0.3, np.array([0.5, 1.5]))

    def test_qbar_equals_step_composition_by_enumeration(self):
        # K=2, T=3: brute-force path sums equal the cumulative matrix entries
        rng = np.random.default_rng(1)
        beta = rng.random(3)
        sch = df.build_schedule(3, np.array([0.7, 0.3]), 0.4, beta)
        for i in range(2):
            for j in range(2):
                total = 0.0
                for k1 in range(2):
                    for k2 in range(2):
                        total += sch.qx(1)[i, k1] * sch.qx(2)[k1, k2] * sch.qx(3)[k2, j]
                assert total == pytest.approx(sch.qxbar(3)[i, j], abs=1e-12)


class TestForwardNoise:
    def test_zero_beta_is_identity(self):
        rng = np.random.default_rng(2)
        sch = small_schedule(T=3, beta=np.zeros(3))
        s = random_skeleton(rng)
        for t in (1, 2, 3):
            noisy = df.forward_noise(s, t, sch, rng)
            assert noisy.types == s.types and noisy.edges == s.edges

    def test_terminal_type_distribution_matches_marginal(self):
        rng = np.random.default_rng(3)
        sch = small_schedule(T=10)
        s = SkeletonGraph(3, (0, 1, 2), ((0, 1),))
        N = 10_000
        counts = np.zeros(3)
        for _ in range(N):
            noisy = df.forward_noise(s, 10, sch, rng)
            counts[noisy.types[0]] += 1
        freq = counts / N
        sigma = np.sqrt(MARGINAL * (1 - MARGINAL) / N)
        assert (np.abs(freq - MARGINAL) <= 3 * sigma).all()

    def test_single_node_binary_row(self):
        rng = np.random.default_rng(4)
        sch = df.build_schedule(1, np.array([0.7, 0.3]), 0.0, np.array([1.0]))
        s = SkeletonGraph(1, (0,), ())
        N = 10_000
        zero = sum(
            df.forward_noise(s, 1, sch, rng).types[0] == 0 for _ in range(N)
        )
        sigma = np.sqrt(0.7 * 0.3 / N)
        assert abs(zero / N - 0.7) <= 3 * sigma

    def test_t_out_of_range(self):
        rng = np.random.default_rng(5)
        sch = small_schedule()
        with pytest.raises(ValueError):
            df.forward_noise(random_skeleton(rng), 0, sch, rng)


class TestDenoisePredict:
    def test_fresh_params_predict_uniform(self):
        rng = np.random.default_rng(6)
        phi = df.DenoiserParams(rng, K=3, T=4, config=df.DenoiserConfig())
        s = random_skeleton(rng, n=5)
        node_probs, pair_probs = df.denoise_predict(s, 2, phi)
        assert np.allclose(node_probs, 1.0 / 3.0)
        assert np.allclose(pair_probs, 0.5)

    def test_probability_rows_sum_to_one(self):
        rng = np.random.default_rng(7)
        phi = df.DenoiserParams(rng, K=3, T=4, config=df.DenoiserConfig())
        for p in phi.tensors():
            p.value = rng.normal(size=p.value.shape) * 0.3
        s = random_skeleton(rng, n=6)
        node_probs, pair_probs = df.denoise_predict(s, 1, phi)
        assert np.abs(node_probs.sum(axis=1) - 1.0).max() <= 1e-9
        assert np.abs(pair_probs.sum(axis=1) - 1.0).max() <= 1e-9

    def test_equivariance_under_labeled_permutation(self):
        rng = np.random.default_rng(8)
        phi = df.DenoiserParams(rng, K=3, T=4, config=df.DenoiserConfig())
        for p in phi.tensors():
            p.value = rng.normal(size=p.value.shape) * 0.3
        s = random_skeleton(rng, n=6)
        perm = LabeledPermutation(tuple(rng.permutation(6)))
        sp = labeled_permute(s, perm)
        node_a, pair_a = df.denoise_predict(s, 3, phi)
        node_b, pair_b = df.denoise_predict(sp, 3, phi)
        assert np.abs(node_b[list(perm.perm)] - node_a).max() <= 1e-9
        # pair (u,v) in s maps to sorted (p(u),p(v)) in sp
        iu, iv = np.triu_indices(6, k=1)
        index_b = {(u, v): i for i, (u, v) in enumerate(zip(*np.triu_indices(6, k=1)))}
        for i, (u, v) in enumerate(zip(iu, iv)):
            a, b = sorted((perm.perm[u], perm.perm[v]))
            assert np.abs(pair_b[index_b[(a, b)]] - pair_a[i]).max() <= 1e-9

    def test_overfits_single_graph(self):
        # a denoiser trained on one fixed skeleton reproduces it at small t
        rng = np.random.default_rng(9)
        target = SkeletonGraph(4, (0, 1, 2, 1), ((0, 1), (1, 2), (2, 3)))
        sch = df.build_schedule(
            2, MARGINAL, 0.3, beta=np.array([0.05, 1.0])
        )
        cfg = df.TrainConfig(epochs=800, lr=0.03, hidden=12, layers=2)
        phi, _ = df.train_denoiser([target], sch, cfg, rng)
        iu, iv = np.triu_indices(4, k=1)
        want = df._edge_states(target, iu, iv)
        hits = 0
        for _ in range(20):
            noisy = df.forward_noise(target, 1, sch, rng)
            node_probs, pair_probs = df.denoise_predict(noisy, 1, phi)
            hits += tuple(node_probs.argmax(axis=1)) == target.types and np.array_equal(
                pair_probs.argmax(axis=1), want
            )
        assert hits >= 15
        # the clean graph itself must map back exactly
        node_probs, pair_probs = df.denoise_predict(target, 1, phi)
        assert tuple(node_probs.argmax(axis=1)) == target.types
        assert np.array_equal(pair_probs.argmax(axis=1), want)


class TestTraining:
    def test_initial_loss_is_uniform_cross_entropy(self):
        rng = np.random.default_rng(10)
        sch = small_schedule()
        phi = df.DenoiserParams(rng, K=3, T=4, config=df.DenoiserConfig())
        s = random_skeleton(rng, n=6)
        noisy = df.forward_noise(s, 2, sch, rng)
        loss = float(df.denoiser_loss(phi, s, noisy, 2).value)
        want = 6 * np.log(3.0) + 15 * np.log(2.0)
        assert loss == pytest.approx(want, rel=0.01)

    def test_loss_decreases_on_synthetic_corpus(self):
        rng = np.random.default_rng(11)
        skeletons = [random_skeleton(rng, n=5) for _ in range(20)]
        sch = small_schedule(T=4)
        cfg = df.TrainConfig(epochs=30, lr=0.01, hidden=8, layers=1)
        _, trace = df.train_denoiser(skeletons, sch, cfg, rng)
        assert np.mean(trace[-5:]) < np.mean(trace[:5])

    def test_deterministic_for_fixed_seed(self):
        skeletons = [random_skeleton(np.random.default_rng(12), n=4) for _ in range(3)]
        sch = small_schedule(T=3)
        cfg = df.TrainConfig(epochs=3, lr=0.01, hidden=6, layers=1)
        phi1, t1 = df.train_denoiser(skeletons, sch, cfg, np.random.default_rng(77))
        phi2, t2 = df.train_denoiser(skeletons, sch, cfg, np.random.default_rng(77))
        assert t1 == t2
        for a, b in zip(phi1.tensors(), phi2.tensors()):
            assert np.array_equal(a.value, b.value)

    def test_empty_training_set_rejected(self):
        with pytest.raises(ValueError):
            df.train_denoiser([], small_schedule(), df.TrainConfig(), np.random.default_rng(0))

    def test_loss_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(13)
        sch = small_schedule(T=3)
        phi = df.DenoiserParams(rng, K=3, T=3, config=df.DenoiserConfig(hidden=5, layers=1))
        for p in phi.tensors():
            p.value = rng.normal(size=p.value.shape) * 0.4
        clean = random_skeleton(rng, n=4)
        noisy = df.forward_noise(clean, 2, sch, rng)
        err = ad.grad_check(lambda: df.denoiser_loss(phi, clean, noisy, 2), phi.tensors())
        assert err <= 1e-5


class TestSampling:
    def test_single_step_point_mass_returns_argmax(self):
        # heads biased to near-point-mass predictions: the single reverse
        # step must return exactly the argmax prediction
        rng = np.random.default_rng(14)
        sch = df.build_schedule(1, np.array([0.6, 0.4]), 0.5, np.array([0.5]))
        phi = df.DenoiserParams(rng, K=2, T=1, config=df.DenoiserConfig(hidden=4, layers=0))
        phi.b_node.value = np.array([80.0, 0.0])   # always type 0
        phi.b_edge.value = np.array([0.0, 80.0])   # every pair present
        sizes = SizeDistribution((4,), np.array([1.0]))
        out = df.sample_skeleton(phi, sch, sizes, rng)
        assert out.types == (0, 0, 0, 0)
        assert len(out.edges) == 6

    def test_outputs_always_validate(self):
        rng = np.random.default_rng(15)
        sch = small_schedule(T=3)
        phi = df.DenoiserParams(rng, K=3, T=3, config=df.DenoiserConfig(hidden=6, layers=1))
        sizes = SizeDistribution((2, 3, 5), np.array([0.3, 0.4, 0.3]))
        table = TypeTable((1, 1, 1), ("jaccard",) * 3, ("a", "b", "c"))
        for _ in range(200):
            s = df.sample_skeleton(phi, sch, sizes, rng)
            assert validate(s, table).ok

    def test_training_beats_untrained_baseline_on_type_distribution(self):
        # total variation to the corpus type distribution: trained < untrained
        rng = np.random.default_rng(16)
        corpus_marginal = np.array([0.7, 0.2, 0.1])
        skeletons = []
        for _ in range(12):
            n = int(rng.integers(4, 7))
            types = tuple(int(t) for t in rng.choice(3, n, p=corpus_marginal))
            edges = tuple(
                (u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < 0.3
            )
            skeletons.append(SkeletonGraph(n, types, edges))
        counts = np.zeros(3)
        for s in skeletons:
            counts += np.bincount(np.asarray(s.types), minlength=3)
        empirical = counts / counts.sum()
        sch = df.build_schedule(5, empirical, 0.3)
        sizes = SizeDistribution((5,), np.array([1.0]))

        def sampled_tv(phi):
            c = np.zeros(3)
            for _ in range(200):
                out = df.sample_skeleton(phi, sch, sizes, rng)
                c += np.bincount(np.asarray(out.types), minlength=3)
            return 0.5 * np.abs(c / c.sum() - empirical).sum()

        untrained = df.DenoiserParams(
            np.random.default_rng(0), K=3, T=5, config=df.DenoiserConfig(hidden=8, layers=1)
        )
        cfg = df.TrainConfig(epochs=60, lr=0.02, hidden=8, layers=1)
        trained, _ = df.train_denoiser(skeletons, sch, cfg, np.random.default_rng(1))
        assert sampled_tv(trained) < sampled_tv(untrained)

    def test_round_trip_serialization(self):
        rng = np.random.default_rng(17)
        phi = df.DenoiserParams(rng, K=3, T=4, config=df.DenoiserConfig(hidden=5, layers=2))
        for p in phi.tensors():
            p.value = rng.normal(size=p.value.shape)
        phi2 = df.DenoiserParams.from_json(phi.to_json())
        for a, b in zip(phi.tensors(), phi2.tensors()):
            assert np.array_equal(a.value, b.value)
        s = random_skeleton(rng, n=5)
        np.testing.assert_array_equal(
            df.denoise_predict(s, 2, phi)[0], df.denoise_predict(s, 2, phi2)[0]
        )
