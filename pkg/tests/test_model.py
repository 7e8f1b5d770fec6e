"""Behavioural contracts of the synthesis pipeline components."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emgsynth.model import (
    AngleEncoder,
    Ang2GistCell,
    FrameDiscriminator,
    FrameGenerator,
    GruCell,
    ModelConfig,
    Synthesizer,
    _factorize_stride,
    build_discriminator,
    load_checkpoint,
    sample_context,
    save_checkpoint,
)


def _zero_params(module):
    for _, p in module.named_parameters():
        p[...] = 0.0


# ---------------------------------------------------------------------------
# angle encoder
# ---------------------------------------------------------------------------


class TestAngleEncoder:
    def test_zero_params_standard_posterior(self):
        enc = AngleEncoder(4, 5, 6, np.random.default_rng(0))
        _zero_params(enc)
        _, mu, sigma_sq, _ = enc.encode(np.random.default_rng(1).normal(size=(3, 7, 4)))
        np.testing.assert_array_equal(mu, np.zeros((3, 6)))
        np.testing.assert_array_equal(sigma_sq, np.ones((3, 6)))

    def test_deterministic(self):
        enc = AngleEncoder(3, 4, 5, np.random.default_rng(2))
        S = np.random.default_rng(3).normal(size=(2, 5, 3))
        a = enc.encode(S)
        b = enc.encode(S)
        for x, y in zip(a[:3], b[:3]):
            np.testing.assert_array_equal(x, y)

    def test_known_affine_embedding(self):
        # identity activation, hand-set weights, single frame
        enc = AngleEncoder(2, 2, 2, np.random.default_rng(4), activation="identity")
        enc.embed.params["W"][...] = [[1.0, 2.0], [3.0, 4.0]]
        enc.embed.params["b"][...] = [0.5, -0.5]
        S = np.array([[[1.0, 1.0]]])  # one frame, angles (1, 1)
        emb, _, _, _ = enc.encode(S)
        np.testing.assert_allclose(emb[0, 0], [1 + 3 + 0.5, 2 + 4 - 0.5])

    def test_variance_strictly_positive(self):
        enc = AngleEncoder(3, 4, 4, np.random.default_rng(5))
        enc.head_logvar.params["b"][...] = -50.0  # beyond the clamp
        _, _, sigma_sq, _ = enc.encode(np.zeros((2, 3, 3)))
        assert np.all(sigma_sq > 0)
        np.testing.assert_allclose(sigma_sq, np.exp(-10.0))

    def test_shape_mismatch_raises(self):
        enc = AngleEncoder(3, 4, 4, np.random.default_rng(6))
        with pytest.raises(ValueError):
            enc.encode(np.zeros((2, 5, 7)))


# ---------------------------------------------------------------------------
# latent context
# ---------------------------------------------------------------------------


class TestSampleContext:
    def test_zero_noise_returns_mu(self):
        mu = np.array([0.3, -1.2, 4.0])
        np.testing.assert_array_equal(
            sample_context(mu, np.ones(3), np.zeros(3)), mu
        )

    def test_standard_posterior_returns_eps(self):
        eps = np.array([1.5, -0.25])
        np.testing.assert_array_equal(
            sample_context(np.zeros(2), np.ones(2), eps), eps
        )

    def test_hand_computed(self):
        h0 = sample_context(
            np.array([1.0, 2.0]), np.array([4.0, 9.0]), np.array([1.0, -1.0])
        )
        np.testing.assert_allclose(h0, [3.0, -1.0])

    def test_nonpositive_variance_rejected(self):
        with pytest.raises(ValueError):
            sample_context(np.zeros(2), np.array([1.0, 0.0]), np.zeros(2))
        with pytest.raises(ValueError):
            sample_context(np.zeros(1), np.array([-0.5]), np.zeros(1))

    def test_draw_statistics_match_posterior(self):
        # empirical mean/std over 10k draws within 5% of (mu, sqrt(sigma_sq))
        rng = np.random.default_rng(7)
        mu = np.array([0.8, -2.0, 0.0, 3.5])
        sigma_sq = np.array([0.25, 4.0, 1.0, 2.25])
        draws = np.stack(
            [sample_context(mu, sigma_sq, rng.standard_normal(4)) for _ in range(10000)]
        )
        np.testing.assert_allclose(draws.mean(axis=0), mu, atol=0.05 * 3.5)
        np.testing.assert_allclose(
            draws.std(axis=0), np.sqrt(sigma_sq), rtol=0.05
        )


# ---------------------------------------------------------------------------
# recurrent cells
# ---------------------------------------------------------------------------


class TestGruCell:
    def test_zero_params_halves_state(self):
        cell = GruCell(3, 4, np.random.default_rng(8))
        _zero_params(cell)
        v = np.array([[2.0, -4.0, 0.5, 1.0]])
        h_new, _ = cell.step(np.zeros((1, 3)), v)
        np.testing.assert_allclose(h_new, 0.5 * v)

    def test_zero_params_zero_state_fixed_point(self):
        cell = GruCell(3, 4, np.random.default_rng(9))
        _zero_params(cell)
        h_new, _ = cell.step(np.zeros((1, 3)), np.zeros((1, 4)))
        np.testing.assert_array_equal(h_new, np.zeros((1, 4)))

    def test_saturated_update_gate_yields_candidate(self):
        rng = np.random.default_rng(10)
        cell = GruCell(3, 4, rng)
        cell.params["bz"][...] = 20.0
        x = rng.normal(size=(2, 3))
        h = rng.normal(size=(2, 4))
        h_new, cache = cell.step(x, h)
        _, _, _, r, c = cache
        np.testing.assert_allclose(h_new, c, atol=1e-6)

    def test_dimension_mismatch_raises(self):
        cell = GruCell(3, 4, np.random.default_rng(11))
        with pytest.raises(ValueError):
            cell.step(np.zeros((1, 5)), np.zeros((1, 4)))
        with pytest.raises(ValueError):
            cell.step(np.zeros((1, 3)), np.zeros((1, 2)))

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_gate_ranges_and_state_bound(self, seed):
        # preactivations stay below the ~37 threshold where float64 rounds
        # the logistic to exactly 1.0, so strict bounds are observable
        rng = np.random.default_rng(seed)
        cell = GruCell(3, 4, rng)
        x = rng.normal(scale=5.0, size=(2, 3))
        h = rng.normal(scale=5.0, size=(2, 4))
        h_new, (_, _, z, r, _) = cell.step(x, h)
        assert np.all((z > 0) & (z < 1))
        assert np.all((r > 0) & (r < 1))
        bound = max(float(np.max(np.abs(h))), 1.0)
        assert float(np.max(np.abs(h_new))) <= bound + 1e-12


class TestAng2GistCell:
    def test_identity_filter_passes_state_through(self):
        rng = np.random.default_rng(12)
        cell = Ang2GistCell(3, 5, 5, rng)
        cell.params["Wf"][...] = 0.0  # bf keeps its identity-impulse init
        i_t = rng.normal(size=(2, 3))
        h = rng.normal(size=(2, 5))
        o, h_new, _ = cell.step(i_t, h)
        np.testing.assert_allclose(o, h_new)

    def test_zero_params_halves_state(self):
        cell = Ang2GistCell(3, 4, 3, np.random.default_rng(13))
        _zero_params(cell)
        v = np.array([[1.0, -2.0, 3.0, 0.25]])
        o, h_new, _ = cell.step(np.zeros((1, 3)), v)
        np.testing.assert_allclose(h_new, 0.5 * v)
        np.testing.assert_array_equal(o, np.zeros_like(v))  # zero filter kernel

    def test_closed_update_gate_keeps_state(self):
        rng = np.random.default_rng(14)
        cell = Ang2GistCell(3, 4, 3, rng)
        cell.params["bz"][...] = -20.0
        cell.params["Wz"][...] = 0.0
        cell.params["Uz"][...] = 0.0
        i_t = rng.normal(size=(2, 3))
        h = rng.normal(size=(2, 4))
        _, h_new, _ = cell.step(i_t, h)
        np.testing.assert_allclose(h_new, h, atol=1e-6)

    def test_even_filter_length_rejected(self):
        with pytest.raises(ValueError):
            Ang2GistCell(3, 4, 4, np.random.default_rng(15))

    def test_dimension_mismatch_raises(self):
        cell = Ang2GistCell(3, 4, 3, np.random.default_rng(16))
        with pytest.raises(ValueError):
            cell.step(np.zeros((1, 4)), np.zeros((1, 4)))

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_gate_ranges_and_state_bound(self, seed):
        rng = np.random.default_rng(seed)
        cell = Ang2GistCell(3, 4, 3, rng)
        i_t = rng.normal(scale=5.0, size=(2, 3))
        h = rng.normal(scale=5.0, size=(2, 4))
        _, h_new, (_, _, z, r, *_rest) = cell.step(i_t, h)
        assert np.all((z > 0) & (z < 1))
        assert np.all((r > 0) & (r < 1))
        bound = max(float(np.max(np.abs(h))), 1.0)
        assert float(np.max(np.abs(h_new))) <= bound + 1e-12


# ---------------------------------------------------------------------------
# frame generator / discriminator
# ---------------------------------------------------------------------------


class TestFactorizeStride:
    def test_known_factorizations(self):
        assert _factorize_stride(1) == (1,)
        assert _factorize_stride(8) == (2, 2, 2)
        assert _factorize_stride(40) == (5, 2, 2, 2)
        assert _factorize_stride(13) == (13,)

    def test_invalid(self):
        with pytest.raises(ValueError):
            _factorize_stride(0)

    @given(n=st.integers(1, 96))
    @settings(max_examples=50, deadline=None)
    def test_product_recovers_factor(self, n):
        assert int(np.prod(_factorize_stride(n))) == n


class TestFrameGenerator:
    def test_zero_params_zero_frame(self):
        gen = FrameGenerator(6, 3, 8, np.random.default_rng(17))
        _zero_params(gen)
        frames, _ = gen.forward(np.random.default_rng(18).normal(size=(4, 6)))
        np.testing.assert_array_equal(frames, np.zeros((4, 8, 3)))

    def test_declared_shape_contract(self):
        gen = FrameGenerator(8, 16, 40, np.random.default_rng(19))
        frames, _ = gen.forward(np.zeros((2, 8)))
        assert frames.shape == (2, 40, 16)

    def test_deterministic_repeat(self):
        gen = FrameGenerator(5, 2, 6, np.random.default_rng(20))
        o = np.random.default_rng(21).normal(size=(3, 5))
        a, _ = gen.forward(o, training=False)
        b, _ = gen.forward(o, training=False)
        np.testing.assert_array_equal(a, b)

    def test_bad_stride_override_rejected(self):
        with pytest.raises(ValueError):
            FrameGenerator(4, 2, 8, np.random.default_rng(22), strides=(2, 2))


class TestFrameDiscriminator:
    def _build(self, seed=23):
        return FrameDiscriminator(
            3, 4, 5, 8, np.random.default_rng(seed), channels=(4, 6), cond_dim=4
        )

    def test_zero_params_give_half(self):
        disc = self._build()
        _zero_params(disc)
        m, logit, _ = disc.forward(np.ones((3, 8, 3)), np.ones((3, 4)), np.ones((3, 5)))
        np.testing.assert_array_equal(logit, np.zeros(3))
        np.testing.assert_array_equal(m, 0.5 * np.ones(3))

    def test_output_in_unit_interval(self):
        disc = self._build()
        rng = np.random.default_rng(24)
        for _ in range(1000):
            m, _, _ = disc.forward(
                rng.normal(size=(1, 8, 3)), rng.normal(size=(1, 4)), rng.normal(size=(1, 5))
            )
            assert 0.0 < m[0] < 1.0

    def test_head_bias_saturation(self):
        disc = self._build()
        _zero_params(disc)
        disc.head.params["b"][...] = 20.0
        m, _, _ = disc.forward(np.zeros((1, 8, 3)), np.zeros((1, 4)), np.zeros((1, 5)))
        assert m[0] >= 1.0 - 1e-8

    def test_dimension_mismatches_raise(self):
        disc = self._build()
        with pytest.raises(ValueError):
            disc.forward(np.zeros((1, 7, 3)), np.zeros((1, 4)), np.zeros((1, 5)))
        with pytest.raises(ValueError):
            disc.forward(np.zeros((1, 8, 3)), np.zeros((1, 3)), np.zeros((1, 5)))
        with pytest.raises(ValueError):
            disc.forward(np.zeros((1, 8, 3)), np.zeros((1, 4)), np.zeros((1, 6)))


# ---------------------------------------------------------------------------
# full pipeline
# ---------------------------------------------------------------------------


def _small_cfg(**kw):
    base = dict(
        d_j=3, d_e=2, upsample_factor=4, d_emb=4, d_noise=3, d_g=5, d_h=6,
        filter_len=3, seed=42,
    )
    base.update(kw)
    return ModelConfig(**base)


class TestSynthesizer:
    def test_sequence_shape_contract(self):
        cfg = ModelConfig(d_j=6, d_e=16, upsample_factor=40, seed=1)
        synth = Synthesizer(cfg)
        S = np.zeros((5, 6))
        out = synth.generate(S, rng=np.random.default_rng(2))
        assert out.shape == (200, 16)

    def test_same_seed_identical_different_seed_differs(self):
        synth = Synthesizer(_small_cfg())
        S = np.random.default_rng(3).normal(size=(4, 3))
        a = synth.generate(S, rng=np.random.default_rng(5))
        b = synth.generate(S, rng=np.random.default_rng(5))
        c = synth.generate(S, rng=np.random.default_rng(6))
        np.testing.assert_array_equal(a, b)
        assert np.max(np.abs(a - c)) > 0

    def test_zero_noise_is_function_of_angles(self):
        synth = Synthesizer(_small_cfg())
        S = np.random.default_rng(7).normal(size=(4, 3))
        eps_s = np.zeros((1, 6))
        eps_t = np.zeros((1, 4, 3))
        a = synth.generate(S, eps_s=eps_s, eps_t=eps_t)
        b = synth.generate(S, eps_s=eps_s, eps_t=eps_t)
        np.testing.assert_array_equal(a, b)

    def test_missing_rng_and_noise_rejected(self):
        synth = Synthesizer(_small_cfg())
        with pytest.raises(ValueError):
            synth.generate(np.zeros((4, 3)))

    def test_batched_generation(self):
        synth = Synthesizer(_small_cfg())
        S = np.random.default_rng(8).normal(size=(3, 5, 3))
        out = synth.generate(S, rng=np.random.default_rng(9))
        assert out.shape == (3, 20, 2)

    @pytest.mark.parametrize(
        "variant", ["full", "no_angle_encoder", "no_gru", "no_ang2gist"]
    )
    def test_variants_generate(self, variant):
        synth = Synthesizer(_small_cfg(variant=variant))
        S = np.random.default_rng(10).normal(size=(4, 3))
        out = synth.generate(S, rng=np.random.default_rng(11))
        assert out.shape == (16, 2)
        assert np.all(np.isfinite(out))

    def test_invalid_variant_rejected(self):
        with pytest.raises(ValueError):
            _small_cfg(variant="no_such_thing")

    def test_even_filter_rejected(self):
        with pytest.raises(ValueError):
            _small_cfg(filter_len=4)

    def test_bad_activation_rejected(self):
        with pytest.raises(ValueError):
            _small_cfg(encoder_activation="relu")

    def test_seeded_construction_reproducible(self):
        a = Synthesizer(_small_cfg())
        b = Synthesizer(_small_cfg())
        for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
            assert na == nb
            np.testing.assert_array_equal(pa, pb)


class TestCheckpoints:
    def test_round_trip_with_discriminator(self, tmp_path):
        cfg = _small_cfg()
        synth = Synthesizer(cfg)
        disc = build_discriminator(cfg)
        # give the normalization layers non-default running stats
        S = np.random.default_rng(12).normal(size=(2, 6, 3))
        synth.forward_sequence(
            S, np.zeros((2, 6)), np.zeros((2, 6, 3)), training=True
        )
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, synth, disc, extra_meta={"epoch": 5})
        synth2, disc2, meta = load_checkpoint(path)
        assert meta["epoch"] == 5
        assert disc2 is not None
        for (n1, p1), (n2, p2) in zip(
            synth.named_parameters(), synth2.named_parameters()
        ):
            assert n1 == n2
            np.testing.assert_array_equal(np.asarray(p1, dtype="<f4"), p2)
        # non-trainable normalization state must survive the round trip
        s1 = dict(synth.named_state())
        s2 = dict(synth2.named_state())
        assert set(s1) == set(s2) and len(s1) > 0
        for k in s1:
            np.testing.assert_array_equal(np.asarray(s1[k], dtype="<f4"), s2[k])

    def test_generator_only_checkpoint(self, tmp_path):
        cfg = _small_cfg()
        synth = Synthesizer(cfg)
        path = tmp_path / "gen.ckpt"
        save_checkpoint(path, synth)
        _, disc, _ = load_checkpoint(path)
        assert disc is None

    def test_loaded_model_generates_like_source(self, tmp_path):
        cfg = _small_cfg()
        synth = Synthesizer(cfg)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, synth)
        synth2, _, _ = load_checkpoint(path)
        S = np.random.default_rng(13).normal(size=(4, 3))
        eps_s, eps_t = np.zeros((1, 6)), np.zeros((1, 4, 3))
        a = synth.generate(S, eps_s=eps_s, eps_t=eps_t)
        b = synth2.generate(S, eps_s=eps_s, eps_t=eps_t)
        # float32 storage: agreement to storage precision, not bit-exact
        np.testing.assert_allclose(a, b, atol=1e-5)

    def test_wrong_kind_rejected(self, tmp_path):
        from emgsynth.nn import save_tensors

        path = tmp_path / "junk.ckpt"
        save_tensors(path, {"x": np.zeros(1)}, meta={"kind": "other"})
        with pytest.raises(ValueError, match="not a model checkpoint"):
            load_checkpoint(path)
