import numpy as np
import pytest

from helpers import central_diff, rel_err
from seqrisk.encoder import (EncoderParams, attention_backward,
                             bilstm_backward, bilstm_encode,
                             encode_sequences, init_encoder_params,
                             temporal_attention)


def zero_params(embed_dim, hidden_dim, attn_hidden=None):
    a = attn_hidden or hidden_dim
    return EncoderParams(
        wx_fwd=np.zeros((embed_dim, 4 * hidden_dim)),
        wh_fwd=np.zeros((hidden_dim, 4 * hidden_dim)),
        b_fwd=np.zeros(4 * hidden_dim),
        wx_bwd=np.zeros((embed_dim, 4 * hidden_dim)),
        wh_bwd=np.zeros((hidden_dim, 4 * hidden_dim)),
        b_bwd=np.zeros(4 * hidden_dim),
        w_att=np.zeros((2 * hidden_dim, a)),
        b_att=np.zeros(a),
        v_att=np.zeros(a),
        c_att=np.zeros(()),
        decay_offset=np.array(0.0),
        decay_rate=np.array(0.0),
    )


class TestBiLstm:
    def test_output_shape(self):
        rng = np.random.default_rng(0)
        params = init_encoder_params(rng, embed_dim=4, hidden_dim=5)
        H, _ = bilstm_encode(rng.normal(size=(2, 3, 4)), params)
        assert H.shape == (2, 3, 10)

    def test_zero_parameters_give_zero_states(self):
        params = zero_params(4, 3)
        H, _ = bilstm_encode(np.random.default_rng(0).normal(size=(2, 5, 4)), params)
        assert np.all(H == 0)

    def test_single_step_matches_hand_evaluation(self):
        # 1-dim cell, first step: c = sig(zi)*tanh(zg), h = sig(zo)*tanh(c)
        params = zero_params(1, 1)
        wi, wf, wg, wo = 0.5, 0.3, 0.8, -0.2
        bi, bf, bg, bo = 0.1, 0.0, -0.1, 0.2
        params.wx_fwd[0] = [wi, wf, wg, wo]
        params.b_fwd[:] = [bi, bf, bg, bo]
        x = 1.7
        H, _ = bilstm_encode(np.array([[[x]]]), params)

        def sig(v):
            return 1 / (1 + np.exp(-v))

        c = sig(wi * x + bi) * np.tanh(wg * x + bg)
        h = sig(wo * x + bo) * np.tanh(c)
        assert H[0, 0, 0] == pytest.approx(h, abs=1e-12)
        assert H[0, 0, 1] == 0  # backward direction has zero weights

    def test_order_sensitivity(self):
        rng = np.random.default_rng(3)
        params = init_encoder_params(rng, embed_dim=4, hidden_dim=3)
        X = rng.normal(size=(1, 4, 4))
        H, _ = bilstm_encode(X, params)
        Hp, _ = bilstm_encode(X[:, ::-1], params)
        assert np.abs(H - Hp).max() > 1e-6

    def test_dim_mismatch(self):
        params = init_encoder_params(np.random.default_rng(0), 4, 3)
        with pytest.raises(ValueError):
            bilstm_encode(np.zeros((1, 2, 7)), params)


class TestTemporalAttention:
    def test_uniform_when_energy_constant(self):
        rng = np.random.default_rng(1)
        params = zero_params(4, 3)
        H = rng.normal(size=(2, 5, 6))
        attn, pooled, gates, _ = temporal_attention(H, np.zeros((2, 5)), params)
        assert np.allclose(attn, 0.2)
        assert np.allclose(pooled, H.mean(axis=1))

    def test_engineered_energies_give_quarter_three_quarters(self):
        # z = v . tanh(W (gate*H)); gates are 0.5 everywhere; choose H so the
        # energies are exactly (0, ln 3) -> softmax (0.25, 0.75)
        hidden = 2
        params = zero_params(1, hidden, attn_hidden=2 * hidden)
        params.w_att[:] = np.eye(2 * hidden)
        params.v_att[0] = 2.0
        h0 = 2.0 * np.arctanh(np.log(3.0) / 2.0)
        H = np.zeros((1, 2, 2 * hidden))
        H[0, 1, 0] = h0
        attn, pooled, gates, _ = temporal_attention(H, np.zeros((1, 2)), params)
        assert np.allclose(gates, 0.5)
        assert attn[0] == pytest.approx([0.25, 0.75], abs=1e-9)
        assert pooled[0, 0] == pytest.approx(0.75 * h0)

    def test_older_post_damped(self):
        params = zero_params(2, 2)
        params.decay_rate[...] = 0.5
        H = np.ones((1, 2, 4))
        _, _, gates, _ = temporal_attention(H, np.array([[10.0, 0.0]]), params)
        assert gates[0, 0] < gates[0, 1]

    def test_weights_positive_normalized_shift_invariant(self):
        rng = np.random.default_rng(2)
        params = init_encoder_params(rng, embed_dim=3, hidden_dim=4)
        H = rng.normal(size=(5, 6, 8))
        dt = np.abs(rng.normal(size=(5, 6)))
        attn, _, gates, _ = temporal_attention(H, dt, params)
        assert np.all(attn > 0)
        assert np.allclose(attn.sum(axis=1), 1.0, atol=1e-6)
        assert np.all((gates > 0) & (gates < 1))
        params.c_att[...] = params.c_att + 17.0  # constant energy shift
        attn2, _, _, _ = temporal_attention(H, dt, params)
        assert np.allclose(attn, attn2, atol=1e-9)

    def test_pooled_in_convex_hull(self):
        rng = np.random.default_rng(4)
        params = init_encoder_params(rng, embed_dim=3, hidden_dim=2)
        H = rng.normal(size=(4, 5, 4))
        dt = np.abs(rng.normal(size=(4, 5)))
        _, pooled, _, _ = temporal_attention(H, dt, params)
        assert np.all(pooled <= H.max(axis=1) + 1e-12)
        assert np.all(pooled >= H.min(axis=1) - 1e-12)

    def test_permuting_posts_with_deltas_changes_states(self):
        rng = np.random.default_rng(5)
        params = init_encoder_params(rng, embed_dim=4, hidden_dim=3)
        X = rng.normal(size=(1, 4, 4))
        dt = np.array([[3.0, 2.0, 1.0, 0.0]])
        enc_a = encode_sequences(X, dt, params)
        perm = [2, 0, 3, 1]
        enc_b = encode_sequences(X[:, perm], dt[:, perm], params)
        assert np.abs(enc_a.states - enc_b.states).max() > 1e-8


class TestEncoderGradients:
    @pytest.mark.parametrize("seed", range(4))
    def test_probe_gradients_match_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        params = init_encoder_params(rng, embed_dim=4, hidden_dim=3)
        # continuous draws keep ReLU-free encoder smooth; biases nonzero
        for _, arr in vars(params).items():
            arr[...] = rng.uniform(-0.5, 0.5, size=arr.shape)
        X = rng.normal(size=(3, 3, 4))
        dt = np.abs(rng.normal(scale=2, size=(3, 3)))
        R = rng.normal(size=(3, 6))

        def probe():
            H, _ = bilstm_encode(X, params)
            _, pooled, _, _ = temporal_attention(H, dt, params)
            return float((pooled * R).sum())

        H, enc_cache = bilstm_encode(X, params)
        _, _, _, att_cache = temporal_attention(H, dt, params)
        dH, att_grads = attention_backward(R, None, params, att_cache)
        _, lstm_grads = bilstm_backward(dH, params, enc_cache)
        grads = {**att_grads, **lstm_grads}
        for name, arr in vars(params).items():
            num = central_diff(probe, arr, step=1e-5)
            assert rel_err(grads[name], num) < 1e-4, name
