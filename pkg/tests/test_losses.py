"""Objectives: masked pixel distance, identity cosine, vertex distance,
WGAN-GP machinery, schedule, and image metrics."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gcnface import losses
from gcnface.diffcore import Tape, Tensor, backward, grad_check, ops
from gcnface.errors import ContractViolation, DegenerateMaskError

H = W = 16
ONES = np.ones((H, W))
RNG = np.random.default_rng(321)


def img(seed=None):
    r = np.random.default_rng(seed) if seed is not None else RNG
    return r.uniform(0, 1, (H, W, 3))


class TestPixelLoss:
    def test_identical_is_zero(self):
        x = img(0)
        out = losses.pixel_loss(Tensor(x), Tensor(x.copy()), ONES, ONES)
        assert abs(float(out.data)) < 1e-9

    def test_constant_channel_shift(self):
        x = img(1)
        y = x.copy()
        y[:, :, 0] -= 0.3
        out = losses.pixel_loss(Tensor(x), Tensor(y), ONES, ONES)
        assert float(out.data) == pytest.approx(0.3, abs=1e-9)

    def test_mask_partitions_the_image(self):
        x = img(2)
        y = x.copy()
        y[:, : W // 2, 0] += 0.25   # left half differs
        y[:, W // 2:, 1] += 0.4     # right half differs
        left = np.zeros((H, W))
        left[:, : W // 2] = 1.0
        out = losses.pixel_loss(Tensor(x), Tensor(y), left, ONES)
        assert float(out.data) == pytest.approx(0.25, abs=1e-9)
        out = losses.pixel_loss(Tensor(x), Tensor(y), 1.0 - left, ONES)
        assert float(out.data) == pytest.approx(0.4, abs=1e-9)

    def test_empty_intersection_raises(self):
        x = img(3)
        m = np.zeros((H, W))
        m[0, 0] = 1.0
        other = 1.0 - m
        with pytest.raises(DegenerateMaskError):
            losses.pixel_loss(Tensor(x), Tensor(x), m, other)

    def test_masks_must_be_binary(self):
        x = img(4)
        with pytest.raises(ContractViolation):
            losses.pixel_loss(Tensor(x), Tensor(x), ONES * 0.5, ONES)

    def test_shape_mismatch(self):
        with pytest.raises(ContractViolation):
            losses.pixel_loss(Tensor(img(5)), Tensor(np.zeros((H, W + 2, 3))),
                              ONES, ONES)

    @given(st.integers(0, 10_000))
    def test_symmetric(self, seed):
        r = np.random.default_rng(seed)
        a, b = r.uniform(0, 1, (2, H, W, 3))
        m = (r.uniform(size=(H, W)) > 0.3).astype(float)
        if m.sum() == 0:
            m[0, 0] = 1.0
        ab = losses.pixel_loss(Tensor(a), Tensor(b), m, ONES)
        ba = losses.pixel_loss(Tensor(b), Tensor(a), m, ONES)
        assert float(ab.data) == pytest.approx(float(ba.data), abs=1e-12)

    def test_gradients(self):
        x = Tensor(img(6))
        m = (np.random.default_rng(7).uniform(size=(H, W)) > 0.4).astype(float)
        err = grad_check(
            lambda y: losses.pixel_loss(x, y, m, ONES),
            Tensor(img(8)), max_coords=8, rng=np.random.default_rng(9))
        assert err < 1e-5


def const_embed(vec):
    arr = np.asarray(vec, dtype=np.float64)

    def f(_image):
        return ops.as_tensor(arr)

    return f


class TestIdentityLoss:
    def test_equal_embeddings(self):
        x = Tensor(img(10))
        out = losses.identity_loss(x, x, const_embed([1.0, 2.0, 3.0]))
        assert abs(float(out.data)) < 1e-9

    def test_orthogonal_and_opposite(self):
        a, b = Tensor(img(11)), Tensor(img(12))
        calls = iter([[1.0, 0.0], [0.0, 1.0]])
        out = losses.identity_loss(a, b, lambda _: ops.as_tensor(next(calls)))
        assert float(out.data) == pytest.approx(1.0, abs=1e-9)
        calls = iter([[2.0, 0.0], [-3.0, 0.0]])
        out = losses.identity_loss(a, b, lambda _: ops.as_tensor(next(calls)))
        assert float(out.data) == pytest.approx(2.0, abs=1e-9)

    def test_zero_embedding_rejected(self):
        x = Tensor(img(13))
        with pytest.raises(ContractViolation):
            losses.identity_loss(x, x, const_embed([0.0, 0.0]))

    @given(st.integers(0, 10_000))
    def test_scale_invariance_and_range(self, seed):
        r = np.random.default_rng(seed)
        u, v = r.standard_normal((2, 6))
        u[0] += 1e-3  # keep away from exact zero vectors
        s = float(r.uniform(0.1, 50.0))
        calls = iter([u, v])
        base = losses.identity_loss(Tensor(img(14)), Tensor(img(15)),
                                    lambda _: ops.as_tensor(next(calls)))
        calls = iter([u * s, v])
        scaled = losses.identity_loss(Tensor(img(14)), Tensor(img(15)),
                                      lambda _: ops.as_tensor(next(calls)))
        assert float(base.data) == pytest.approx(float(scaled.data), abs=1e-9)
        assert -1e-12 <= float(base.data) <= 2.0 + 1e-12

    def test_gradients_through_embedder(self):
        emb = losses.ToyEmbedder(H, W, dim=24, seed=1)
        x = Tensor(img(16))
        err = grad_check(lambda y: losses.identity_loss(x, y, emb),
                         Tensor(img(17)), max_coords=6,
                         rng=np.random.default_rng(18))
        assert err < 1e-5


class TestToyEmbedder:
    def test_deterministic_per_seed(self):
        a = losses.ToyEmbedder(H, W, dim=20, seed=4)(Tensor(img(19)))
        b = losses.ToyEmbedder(H, W, dim=20, seed=4)(Tensor(img(19)))
        c = losses.ToyEmbedder(H, W, dim=20, seed=5)(Tensor(img(19)))
        np.testing.assert_array_equal(a.data, b.data)
        assert np.abs(a.data - c.data).max() > 1e-9

    def test_nonzero_on_nonzero_input(self):
        e = losses.ToyEmbedder(H, W, dim=20, seed=0)
        tiny = np.zeros((H, W, 3))
        tiny[3, 3, 1] = 1e-6
        out = e(Tensor(tiny))
        assert np.linalg.norm(out.data) > 0
        # the trailing coordinate carries the input magnitude
        assert out.data[-1] > 0

    def test_block_average_against_direct(self):
        e = losses.ToyEmbedder(H, W, dim=20, seed=0)
        x = img(20)
        pooled = x.reshape(8, H // 8, 8, W // 8, 3).sum(axis=(1, 3))
        pooled /= (H // 8) * (W // 8)
        flat = pooled.reshape(-1)
        expected = flat @ e.projection.data
        got = e(Tensor(x)).data
        np.testing.assert_allclose(got[:-1], expected, atol=1e-12)
        assert got[-1] == pytest.approx(np.linalg.norm(flat))

    def test_validation(self):
        with pytest.raises(ContractViolation):
            losses.ToyEmbedder(12, 16)
        with pytest.raises(ContractViolation):
            losses.ToyEmbedder(H, W, dim=1)
        e = losses.ToyEmbedder(H, W)
        with pytest.raises(ContractViolation):
            e(Tensor(np.zeros((H, W + 8, 3))))


class TestVertexLoss:
    def test_identical(self):
        a = RNG.standard_normal((12, 3))
        assert abs(float(losses.vertex_loss(Tensor(a), Tensor(a.copy())).data)) < 1e-9

    def test_single_displaced_vertex(self):
        a = RNG.standard_normal((10, 3))
        b = a.copy()
        b[7] += [1.0, 0.0, 0.0]
        out = losses.vertex_loss(Tensor(a), Tensor(b))
        assert float(out.data) == pytest.approx(0.1, abs=1e-9)

    def test_against_loop(self):
        a = RNG.standard_normal((30, 3))
        b = RNG.standard_normal((30, 3))
        expected = sum(np.linalg.norm(a[i] - b[i]) for i in range(30)) / 30
        out = losses.vertex_loss(Tensor(a), Tensor(b))
        assert float(out.data) == pytest.approx(expected, abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ContractViolation):
            losses.vertex_loss(Tensor(np.zeros((4, 3))), Tensor(np.zeros((5, 3))))

    def test_gradients(self):
        a = Tensor(RNG.standard_normal((8, 3)))
        err = grad_check(lambda b: losses.vertex_loss(a, b),
                         Tensor(RNG.standard_normal((8, 3))))
        assert err < 1e-5


def unit_direction(seed):
    u = np.random.default_rng(seed).standard_normal((H, W, 3))
    return u / np.linalg.norm(u)


class TestAdversarialLoss:
    def batch(self, seed, n=3):
        r = np.random.default_rng(seed)
        return ([Tensor(r.uniform(0, 1, (H, W, 3))) for _ in range(n)],
                [Tensor(r.uniform(0, 1, (H, W, 3))) for _ in range(n)])

    def test_constant_critic(self):
        reals, fakes = self.batch(0)
        critic = lambda im: ops.mul(ops.constant(0.0), ops.sum_(im))
        c, g = losses.adversarial_loss(critic, reals, fakes, 10.0,
                                       np.random.default_rng(1))
        assert float(c.data) == pytest.approx(10.0, abs=1e-9)
        assert float(g.data) == pytest.approx(0.0, abs=1e-12)

    def test_unit_gradient_critic_has_zero_penalty(self):
        u = ops.constant(unit_direction(2))
        critic = lambda im: ops.sum_(ops.mul(im, u))
        reals, fakes = self.batch(3)
        c, _ = losses.adversarial_loss(critic, reals, fakes, 10.0,
                                       np.random.default_rng(4))
        score_diff = (np.mean([float(critic(f).data) for f in fakes])
                      - np.mean([float(critic(r).data) for r in reals]))
        assert float(c.data) - score_diff == pytest.approx(0.0, abs=1e-9)

    def test_double_gradient_critic_penalty_is_lambda(self):
        u = ops.constant(unit_direction(5))
        critic = lambda im: ops.mul(ops.constant(2.0), ops.sum_(ops.mul(im, u)))
        reals, fakes = self.batch(6)
        lam = 7.5
        c, _ = losses.adversarial_loss(critic, reals, fakes, lam,
                                       np.random.default_rng(7))
        score_diff = (np.mean([float(critic(f).data) for f in fakes])
                      - np.mean([float(critic(r).data) for r in reals]))
        assert float(c.data) - score_diff == pytest.approx(lam, abs=1e-9)

    def test_batch_validation(self):
        with pytest.raises(ContractViolation):
            losses.adversarial_loss(lambda im: ops.sum_(im), [], [], 10.0)
        r, f = self.batch(8, n=2)
        with pytest.raises(ContractViolation):
            losses.adversarial_loss(lambda im: ops.sum_(im), r, f[:1], 10.0)
        with pytest.raises(ContractViolation):
            losses.adversarial_loss(lambda im: ops.sum_(im), r, f, -1.0)

    def test_deterministic_given_rng(self):
        reals, fakes = self.batch(9)
        u = ops.constant(unit_direction(10))
        critic = lambda im: ops.sum_(ops.mul(ops.tanh(im), u))
        c1, g1 = losses.adversarial_loss(critic, reals, fakes, 10.0,
                                         np.random.default_rng(11))
        c2, g2 = losses.adversarial_loss(critic, reals, fakes, 10.0,
                                         np.random.default_rng(11))
        assert float(c1.data) == float(c2.data)
        assert float(g1.data) == float(g2.data)

    def test_penalty_gradient_reaches_critic_parameters(self):
        # The nested derivative: critic-parameter gradients of the penalty
        # must match finite differences of the whole critic loss.
        reals, fakes = self.batch(12, n=2)

        def f(kernel):
            def critic(im):
                resp = ops.conv2d(im, kernel)
                return ops.mean(ops.tanh(resp))
            c, _ = losses.adversarial_loss(critic, reals, fakes, 10.0,
                                           np.random.default_rng(13))
            return c

        k0 = Tensor(np.random.default_rng(14).standard_normal((3, 3, 3, 2)) * 0.3)
        err = grad_check(f, k0, max_coords=5, rng=np.random.default_rng(15))
        assert err < 1e-5


class TestSchedule:
    def test_defaults_match_fixed_weights(self):
        w = losses.LossWeights()
        assert w.sigma2 == 0.2
        assert w.sigma3 == 0.001

    def test_hold_then_ramp(self):
        w = losses.LossWeights(warmup_steps=10, ramp_steps=20)
        assert losses.sigmas_at(w, 0) == (0.0, 0.2, 0.001, 1.0)
        assert losses.sigmas_at(w, 9) == (0.0, 0.2, 0.001, 1.0)
        assert losses.sigmas_at(w, 20) == (0.5, 0.2, 0.001, 0.5)
        assert losses.sigmas_at(w, 30) == (1.0, 0.2, 0.001, 0.0)
        assert losses.sigmas_at(w, 10_000) == (1.0, 0.2, 0.001, 0.0)

    def test_zero_ramp_switches_instantly(self):
        w = losses.LossWeights(warmup_steps=5, ramp_steps=0)
        assert losses.sigmas_at(w, 4)[0] == 0.0
        assert losses.sigmas_at(w, 5) == (1.0, 0.2, 0.001, 0.0)

    def test_negative_step_rejected(self):
        with pytest.raises(ContractViolation):
            losses.sigmas_at(losses.LossWeights(), -1)
        with pytest.raises(ContractViolation):
            losses.LossWeights(warmup_steps=-2)

    def test_warmup_total_has_no_render_path_gradient(self):
        w = losses.LossWeights(warmup_steps=10, ramp_steps=10)
        render_leaf = Tensor(np.array([2.0]), requires_grad=True)
        vertex_leaf = Tensor(np.array([3.0]), requires_grad=True)
        with Tape() as tape:
            terms = losses.LossTerms(
                vertex_coarse=ops.sum_(ops.mul(vertex_leaf, vertex_leaf)),
                vertex_detail=ops.sum_(vertex_leaf),
            )
            total = losses.total_loss(terms, w, step=0)
        grads = backward(tape, total)
        assert not grads.has(render_leaf)
        assert grads.wrt(vertex_leaf).data[0] == pytest.approx(7.0)

    def test_full_combination_value(self):
        w = losses.LossWeights(warmup_steps=0, ramp_steps=0)
        terms = losses.LossTerms(
            pixel=ops.constant(0.5), identity=ops.constant(0.3),
            adversarial=ops.constant(2.0))
        total = losses.total_loss(terms, w, step=100)
        assert float(total.data) == pytest.approx(0.5 + 0.2 * 0.3 + 0.001 * 2.0)

    def test_missing_required_term(self):
        w = losses.LossWeights(warmup_steps=0, ramp_steps=0)
        with pytest.raises(ContractViolation):
            losses.total_loss(losses.LossTerms(), w, step=5)

    def test_all_groups_off(self):
        w = losses.LossWeights(sigma4=0.0, warmup_steps=10, ramp_steps=10)
        total = losses.total_loss(losses.LossTerms(), w, step=0)
        assert float(total.data) == 0.0


class TestMetrics:
    def test_identical_images(self):
        x = img(21)
        emb = losses.ToyEmbedder(H, W, dim=16, seed=2)
        m = losses.image_metrics(x, x.copy(), embed=emb)
        assert m["l1"] == 0.0
        assert m["psnr"] == 99.0
        assert m["ssim"] == pytest.approx(1.0, abs=1e-12)
        assert m["cosine"] == pytest.approx(1.0, abs=1e-12)

    def test_unit_mse_is_zero_db(self):
        m = losses.image_metrics(np.ones((H, W, 3)), np.zeros((H, W, 3)))
        assert m["psnr"] == pytest.approx(0.0, abs=1e-12)

    @given(st.integers(0, 10_000))
    def test_psnr_symmetric_ssim_bounded(self, seed):
        r = np.random.default_rng(seed)
        a, b = r.uniform(0, 1, (2, H, W, 3))
        ma = losses.image_metrics(a, b)
        mb = losses.image_metrics(b, a)
        assert ma["psnr"] == pytest.approx(mb["psnr"], abs=1e-9)
        assert -1.0 <= ma["ssim"] <= 1.0
        assert ma["ssim"] < 1.0  # random pairs never tie exactly

    def test_mask_restricts_the_region(self):
        x = img(22)
        y = x.copy()
        y[:, W // 2:, :] = 0.0
        left = np.zeros((H, W))
        left[:, : W // 2] = 1.0
        m = losses.image_metrics(x, y, mask=left)
        assert m["l1"] == 0.0
        assert m["psnr"] == 99.0

    def test_empty_mask_raises(self):
        with pytest.raises(DegenerateMaskError):
            losses.image_metrics(img(23), img(24), mask=np.zeros((H, W)))

    def test_mask_must_be_binary(self):
        with pytest.raises(ContractViolation):
            losses.image_metrics(img(25), img(26), mask=np.full((H, W), 0.5))

    def test_too_small_images_rejected(self):
        with pytest.raises(ContractViolation):
            losses.image_metrics(np.zeros((8, 8, 3)), np.zeros((8, 8, 3)))
