"""Tests for the iterative joint source/relay decoder."""

import copy

import numpy as np
import pytest

from cfrelay import constellation, joint_decoder as jd, ldpc, tcq
from cfrelay.channel import ChannelParams
from cfrelay.constellation import LLR_CLAMP, marginal_level_llrs, symbol_posterior

from _oracles import toy_joint_setup, toy_transmit


def relay_off_decoder(dec):
    """Clone of a decoder whose relay branch carries no symbol information.

    A table whose columns are all equal makes the backward message uniform,
    so every outer iteration reduces to per-level decoding of y13 alone.
    """
    P = len(dec.model.codebook.points)
    flat = np.full((P, dec.const.size), 1.0 / P)
    return jd.JointDecoder(
        dec.const, dec.relay_const, dec.model, dec.params,
        dec.source_codes, dec.relay_codes,
        source_layout=dec.source_layout, table=flat,
    )


class TestInit:
    def test_noiseless_direct_path_clamps_posteriors(self):
        params = ChannelParams(h13=1.0, h12=2.0, h23=3.0, ps=1.5, pr=1.5,
                               n2_var=0.8, n3_var=1e-12)
        dec = toy_joint_setup(params=params)
        rng = np.random.default_rng(3)
        bits = rng.integers(0, 2, (dec.n, 1)).astype(np.uint8)
        x1 = constellation.map_bits(dec.const, bits)
        y13 = params.h13 * np.sqrt(params.ps) * x1
        y23 = np.zeros(dec.n, dtype=complex)
        state = jd.init(dec, y13, y23)
        assert np.all(np.abs(state.last_post[0]) == LLR_CLAMP)
        assert np.array_equal((state.last_post[0] < 0).astype(np.uint8),
                              bits[:, 0])

    def test_silent_relay_gives_zero_relay_llrs(self):
        params = ChannelParams(h13=1.0, h12=2.0, h23=3.0, ps=1.5, pr=0.0,
                               n2_var=0.8, n3_var=0.5)
        dec = toy_joint_setup(params=params)
        rng = np.random.default_rng(4)
        y13 = rng.normal(size=dec.n) + 1j * rng.normal(size=dec.n)
        y23 = rng.normal(size=dec.n) + 1j * rng.normal(size=dec.n)
        state = jd.init(dec, y13, y23)
        for llrs in state.relay_ch_llrs:
            assert np.allclose(llrs, 0.0, atol=1e-9)

    def test_deterministic(self):
        dec = toy_joint_setup()
        rng = np.random.default_rng(5)
        _, y13, y23 = toy_transmit(dec, rng)
        a = jd.init(dec, y13, y23)
        b = jd.init(dec, y13, y23)
        assert np.array_equal(a.C, b.C)
        assert np.array_equal(a.L_relay, b.L_relay)
        assert np.array_equal(a.last_post, b.last_post)
        for la, lb in zip(a.relay_ch_llrs, b.relay_ch_llrs):
            assert np.array_equal(la, lb)

    def test_rejects_wrong_length(self):
        dec = toy_joint_setup()
        good = np.zeros(dec.n, dtype=complex)
        bad = np.zeros(dec.n + 1, dtype=complex)
        with pytest.raises(ValueError, match="observations must have length"):
            jd.init(dec, bad, good)
        with pytest.raises(ValueError, match="observations must have length"):
            jd.init(dec, good, bad)

    def test_initial_relay_message_is_uniform(self):
        dec = toy_joint_setup()
        rng = np.random.default_rng(6)
        _, y13, y23 = toy_transmit(dec, rng)
        state = jd.init(dec, y13, y23)
        assert np.allclose(state.L_relay, 1.0 / dec.const.size)
        assert np.allclose(state.C.sum(axis=1), 1.0, atol=1e-9)


class TestConstructor:
    def test_per_level_code_count(self):
        dec = toy_joint_setup()
        with pytest.raises(ValueError, match="need 1 source codes"):
            jd.JointDecoder(dec.const, dec.relay_const, dec.model, dec.params,
                            dec.source_codes * 2, dec.relay_codes,
                            source_layout="per_level")

    def test_round_robin_code_count(self):
        dec = toy_joint_setup()
        with pytest.raises(ValueError, match="exactly one source code"):
            jd.JointDecoder(dec.const, dec.relay_const, dec.model, dec.params,
                            dec.source_codes * 2, dec.relay_codes,
                            source_layout="round_robin")

    def test_round_robin_length_must_split(self):
        dec = toy_joint_setup()
        qam = constellation.build("qam16")
        code = ldpc.from_check_lists([[0, 1, 2], [2, 3, 4]], 6)
        with pytest.raises(ValueError, match="does not split over 4 levels"):
            jd.JointDecoder(qam, dec.relay_const, dec.model, dec.params,
                            [code], dec.relay_codes,
                            source_layout="round_robin")

    def test_unknown_layout(self):
        dec = toy_joint_setup()
        with pytest.raises(ValueError, match="unknown source layout"):
            jd.JointDecoder(dec.const, dec.relay_const, dec.model, dec.params,
                            dec.source_codes, dec.relay_codes,
                            source_layout="zigzag")

    def test_relay_capacity_mismatch(self):
        dec = toy_joint_setup()
        small = ldpc.from_check_lists([[0, 1, 2], [1, 2, 3]], 4)
        with pytest.raises(ValueError, match="relay info capacity"):
            jd.JointDecoder(dec.const, dec.relay_const, dec.model, dec.params,
                            dec.source_codes, [small],
                            source_layout="per_level")

    def test_table_validation(self):
        dec = toy_joint_setup()
        with pytest.raises(ValueError, match="table shape"):
            jd.JointDecoder(dec.const, dec.relay_const, dec.model, dec.params,
                            dec.source_codes, dec.relay_codes,
                            source_layout="per_level",
                            table=np.ones((3, 2)) / 3)
        bad = np.ones((4, 2))
        with pytest.raises(ValueError, match="columns must sum to 1"):
            jd.JointDecoder(dec.const, dec.relay_const, dec.model, dec.params,
                            dec.source_codes, dec.relay_codes,
                            source_layout="per_level", table=bad)


class TestOuterIteration:
    def test_deterministic(self):
        dec = toy_joint_setup()
        rng = np.random.default_rng(7)
        _, y13, y23 = toy_transmit(dec, rng)
        a = jd.init(dec, y13, y23)
        b = copy.deepcopy(a)
        jd.outer_iteration(dec, a)
        jd.outer_iteration(dec, b)
        assert np.array_equal(a.src_ext, b.src_ext)
        assert np.array_equal(a.relay_ext, b.relay_ext)
        assert np.array_equal(a.L_relay, b.L_relay)
        assert np.array_equal(a.last_post, b.last_post)

    def test_flat_table_reduces_to_source_decoding(self):
        dec = toy_joint_setup()
        off = relay_off_decoder(dec)
        rng = np.random.default_rng(8)
        _, y13, y23 = toy_transmit(dec, rng)
        state = jd.init(off, y13, y23)
        jd.outer_iteration(off, state)

        # Reference: one flooding pass on the direct-branch level LLRs alone.
        code = off.source_codes[0]
        mu = marginal_level_llrs(off.const, state.C)[:, 0]
        ref_state = ldpc.new_state(code)
        zeros = np.zeros(code.n)
        ref_ext = ldpc.spa_step(code, ref_state, zeros, extrinsic_priors=mu)
        ref_post = ldpc.posterior_llrs(ref_state, zeros, mu)
        assert np.allclose(state.src_ext[0], ref_ext, atol=1e-9)
        assert np.allclose(state.last_post[0], ref_post, atol=1e-9)
        # The backward message stays uniform, so later iterations stay
        # relay-free as well.
        assert np.allclose(state.L_relay, 1.0 / off.const.size, atol=1e-12)

    def test_informative_relay_tightens_posteriors(self):
        # The belief held once an iteration completes combines the fresh
        # relay message with that iteration's source extrinsics.
        def end_of_iteration_nll(decoder, state, cw):
            lv = marginal_level_llrs(decoder.const, state.C * state.L_relay)
            post = np.clip(lv.T + state.src_ext, -LLR_CLAMP, LLR_CLAMP)
            sign = 1.0 - 2.0 * cw.astype(float)
            return -np.log1p(-1.0 / (1.0 + np.exp(sign * post[0]))).sum()

        params = ChannelParams(h13=1.0, h12=2.0, h23=10.0, ps=1.5, pr=1.5,
                               n2_var=0.05, n3_var=0.5)
        dec = toy_joint_setup(params=params)
        off = relay_off_decoder(dec)
        rng = np.random.default_rng(9)
        gap = []
        for _ in range(100):
            cw, y13, y23 = toy_transmit(dec, rng)
            st = jd.init(dec, y13, y23)
            jd.outer_iteration(dec, st)
            st0 = jd.init(off, y13, y23)
            jd.outer_iteration(off, st0)
            gap.append(end_of_iteration_nll(off, st0, cw)
                       - end_of_iteration_nll(dec, st, cw))
        gap = np.array(gap)
        assert gap.mean() > 0.0
        assert (gap > -1e-9).mean() > 0.5

    def test_normalization_invariants(self):
        dec = toy_joint_setup()
        rng = np.random.default_rng(10)
        _, y13, y23 = toy_transmit(dec, rng)
        state = jd.init(dec, y13, y23)
        for _ in range(3):
            jd.outer_iteration(dec, state)
            assert np.allclose(state.L_relay.sum(axis=1), 1.0, atol=1e-9)
            assert np.all(state.L_relay >= 0.0)
            assert np.allclose(state.point_prior.sum(axis=1), 1.0, atol=1e-9)
            assert np.all(np.isfinite(state.src_ext))
            assert np.all(np.isfinite(state.relay_ext))
            assert np.all(np.isfinite(state.last_post))

    def test_trellis_extrinsic_excludes_own_prior(self):
        # Perturbing one description-bit prior must not move the trellis
        # extrinsic returned at that same position in the same pass.
        dec = toy_joint_setup()
        rng = np.random.default_rng(11)
        _, y13, y23 = toy_transmit(dec, rng)
        state = jd.init(dec, y13, y23)
        jd.outer_iteration(dec, state)

        prior = state.point_prior
        base = rng.normal(scale=0.5, size=state.relay_ext.shape)
        bumped = base.copy()
        t0, b0 = 2, 0
        bumped[t0, b0] += 2.0

        post_a, _ = tcq.bcjr_soft(dec.model.trellis, dec.model.labeling,
                                  prior, base)
        post_b, _ = tcq.bcjr_soft(dec.model.trellis, dec.model.labeling,
                                  prior, bumped)
        ext_a = post_a - base
        ext_b = post_b - bumped
        assert abs(ext_a[t0, b0] - ext_b[t0, b0]) < 1e-9
        assert not np.allclose(post_a, post_b)


class TestRun:
    def test_rejects_zero_budget(self):
        dec = toy_joint_setup()
        state = jd.init(dec, np.zeros(dec.n, complex), np.zeros(dec.n, complex))
        with pytest.raises(ValueError, match="max_outer_iters"):
            jd.run(dec, state, max_outer_iters=0)

    def test_noiseless_recovery_in_one_iteration(self):
        params = ChannelParams(h13=1.0, h12=2.0, h23=3.0, ps=1.5, pr=1.5,
                               n2_var=1e-6, n3_var=1e-12)
        dec = toy_joint_setup(params=params)
        rng = np.random.default_rng(12)
        cw, y13, y23 = toy_transmit(dec, rng)
        state = jd.init(dec, y13, y23)
        res = jd.run(dec, state, max_outer_iters=10)
        assert res.outer_converged
        assert res.outer_iters == 1
        assert np.array_equal(res.level_codewords[0], cw)
        assert all(res.converged)

    def test_result_shapes(self):
        dec = toy_joint_setup()
        rng = np.random.default_rng(13)
        _, y13, y23 = toy_transmit(dec, rng)
        state = jd.init(dec, y13, y23)
        res = jd.run(dec, state, max_outer_iters=30)
        assert res.level_codewords.shape == (1, dec.n)
        assert len(res.level_info) == 1
        assert len(res.converged) == 1
        code = dec.source_codes[0]
        assert np.array_equal(res.level_info[0],
                              res.level_codewords[0][code.info_positions])
        assert 1 <= res.outer_iters <= 30


class TestExhaustiveReference:
    def test_map_rule_validation(self):
        with pytest.raises(ValueError, match="candidate_bits must be"):
            jd.map_rule_reference(np.zeros((4, 2), np.uint8), np.ones(3))
        with pytest.raises(ValueError, match="too large"):
            jd.map_rule_reference(np.zeros((2, 13), np.uint8), np.ones(2))
        with pytest.raises(ValueError, match="sum to zero"):
            jd.map_rule_reference(np.zeros((2, 2), np.uint8), np.zeros(2))

    def test_map_rule_closed_form(self):
        cand = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=np.uint8)
        w = np.array([0.1, 0.2, 0.3, 0.4])
        bits = jd.map_rule_reference(cand, w)
        # P(bit0 = 1) = 0.7, P(bit1 = 1) = 0.6.
        assert np.array_equal(bits, [1, 1])
        w = np.array([0.4, 0.3, 0.2, 0.1])
        assert np.array_equal(jd.map_rule_reference(cand, w), [0, 0])

    def test_enumeration_rejects_long_blocks(self):
        dec = toy_joint_setup()
        long_src = ldpc.from_check_lists([[0, 1, 2], [2, 3, 4]], 5)
        relay = ldpc.from_check_lists(
            [[0, 1, 5], [1, 2, 6], [2, 3, 7], [3, 4, 8], [0, 4, 9]], 10)
        big = jd.JointDecoder(dec.const, dec.relay_const, dec.model, dec.params,
                              [long_src], [relay], source_layout="per_level",
                              table=dec.table)
        y = np.zeros(5, dtype=complex)
        with pytest.raises(ValueError, match="trellis length"):
            jd.enumerate_toy_joint(big, y, y)

    def test_enumeration_matches_factor_product(self):
        # Recompute each candidate weight from the individual factors:
        # direct-branch symbol posteriors, the quantizer point table along
        # the re-walked trellis path, and the relay parity posteriors.
        dec = toy_joint_setup()
        params = dec.params
        rng = np.random.default_rng(14)
        cw, y13, y23 = toy_transmit(dec, rng)
        cand, w = jd.enumerate_toy_joint(dec, y13, y23)

        C = symbol_posterior(dec.const, y13, params.h13, params.ps,
                             params.n3_var)
        Cr = symbol_posterior(dec.relay_const, y23, params.h23, params.pr,
                              params.y23_noise_var())
        trellis, lab = dec.model.trellis, dec.model.labeling
        relay = dec.relay_codes[0]
        n = dec.n

        ref = np.empty(len(cand))
        for c, row in enumerate(cand):
            direct = np.log(C[np.arange(n), row]).sum()
            total = -np.inf
            for desc in range(16):
                tilde = np.array([(desc >> t) & 1 for t in range(n)],
                                 dtype=np.uint8)
                points = tcq.tilde_to_points(trellis, lab,
                                             tilde.reshape(n, 1))
                logT = np.log(np.maximum(
                    dec.table[points, row], 1e-300)).sum()
                word = ldpc.encode(relay, tilde)
                par = word[relay.parity_positions]
                logR = np.log(np.maximum(
                    Cr[np.arange(n), par], 1e-300)).sum()
                total = np.logaddexp(total, logT + logR)
            ref[c] = direct + total

        ref = np.exp(ref - ref.max())
        keep = (w > 1e-12) & (ref > 1e-12)
        assert keep.any()
        ratio = w[keep] / ref[keep]
        assert np.max(np.abs(ratio / ratio.mean() - 1.0)) < 1e-9

    def test_joint_decoder_tracks_exhaustive_map(self):
        dec = toy_joint_setup()
        agree = 0
        total = 0
        for trial in range(20):
            rng = np.random.default_rng(500 + trial)
            cw, y13, y23 = toy_transmit(dec, rng)
            cand, w = jd.enumerate_toy_joint(dec, y13, y23)
            ref_bits = jd.map_rule_reference(cand, w)
            state = jd.init(dec, y13, y23)
            res = jd.run(dec, state, max_outer_iters=30)
            agree += int((res.level_codewords[0] == ref_bits).sum())
            total += dec.n
        assert agree / total >= 0.95
