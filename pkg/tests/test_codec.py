import itertools
import json
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chisquare

from privcode import bits, codec, ensemble, marginals
from privcode.codec import ValidCodewordIndex
from privcode.errors import InstanceTooLarge

from conftest import TOY_SETS


def _single_block(length=4):
    params = ensemble.derive_parameters(1, 0.25, 0.25, {"b": 4, "b_prime": 1, "length": length})
    return ensemble.sample_decoder(params, ensemble.build_syndrome_map(4, b_prime=1))


# --- enumeration and expurgation -------------------------------------------

def test_single_block_enumeration():
    spec = _single_block()
    for x in "01":
        assert codec.enumerate_valid(spec, x).count == spec.preimage_size(0, int(x))


@pytest.mark.parametrize("x", ["000", "101", "111"])
def test_toy_enumeration_recount(toy, x):
    order = list(range(2**10))
    random.Random(7).shuffle(order)
    found = set()
    for c in order:
        s = format(c, "010b")
        # window parity decides each bit under table [0, 1]
        dec = "".join(str(sum(int(s[k]) for k in I) % 2) for I in TOY_SETS)
        if dec == x:
            found.add(c)
    index = codec.enumerate_valid(toy, x)
    assert sorted(found) == index.codewords.tolist()
    assert index.count == 128


def test_expected_count_formula(toy):
    assert codec.expected_valid_count(10, 3, 1, 0.25, 1) == 128
    # 2^12 (1/4)^2 (3/4)^4 for a one-in-four local table
    assert codec.expected_valid_count(12, 6, 2, 0.2, 2) == pytest.approx(2**12 / 16 * 0.75**4)


def test_balanced_index_loses_nothing(toy):
    index = codec.enumerate_valid(toy, "010")
    pruned = codec.expurgate(index, toy)
    assert pruned.expurgated_count == index.count and pruned.bad_cylinders == []


def test_single_heavy_cylinder_is_removed(toy):
    full = codec.enumerate_valid(toy, "000")
    cw = full.codewords[bits.window_ranks(full.codewords, TOY_SETS[0], 10) == 0]
    counts = codec._cylinder_counts(toy, cw)
    index = ValidCodewordIndex(full.x, cw, counts, cw.copy(), counts.copy())
    pruned = codec.expurgate(index, toy)
    assert pruned.expurgated_count == 0 and (0, 0) in pruned.bad_cylinders


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_bad_cylinder_rule(seed):
    params = ensemble.derive_parameters(4, 0.25, 0.25, {"b": 4, "b_prime": 1, "length": 10},
                                        seed=seed)
    spec = ensemble.sample_decoder(params)
    x = bits.int_to_bits(seed % 16, 4)
    index = codec.enumerate_valid(spec, x)
    if index.count == 0:
        return
    mask = codec.bad_cylinder_mask(spec, index)
    for i in range(4):
        limit = 1 / spec.preimage_size(i, int(x[i])) + 1 / (4 * 16)
        share = index.cylinder_counts[i] / index.count
        off = np.abs(share - limit) > 1e-12
        assert np.array_equal(mask[i][off], (share > limit)[off])
    pruned = codec.expurgate(index, spec)
    assert set(pruned.expurgated.tolist()) <= set(index.codewords.tolist())
    # survivors avoid every bad cylinder
    for i, r in pruned.bad_cylinders:
        assert not np.any(spec.window_ranks(i, pruned.expurgated) == r)


def test_enumeration_limit():
    params = ensemble.derive_parameters(4, 0.25, 0.25, {"b": 4, "b_prime": 1, "length": 27})
    spec = ensemble.sample_decoder(params)
    with pytest.raises(InstanceTooLarge):
        codec.enumerate_valid(spec, "0000")


def test_codebook_dump(toy):
    index = codec.expurgate(codec.enumerate_valid(toy, "100"), toy)
    data = json.loads(index.codebook_json(10))
    assert data["count"] == 128 and data["expurgated_count"] == 128
    assert data["bad_cylinders"] == []
    assert all(len(c) == 3 for c in data["codewords"])
    assert int(data["codewords"][0], 16) == index.expurgated[0]


# --- plans -----------------------------------------------------------------

def test_heavy_source_falls_back(toy):
    plan = codec.build_encoding_plan(toy, "110")
    assert plan.fallback == codec.FALLBACK_WEIGHT
    assert np.all(plan.block_marginals() == 1 / 16)
    assert np.all(plan.pmf() == 2.0**-10)


@pytest.mark.parametrize("x", ["000", "100", "010", "001"])
def test_toy_plan_marginals_are_approximate_vector(toy, x):
    plan = codec.build_encoding_plan(toy, x)
    assert not plan.uses_fallback
    phi_A = marginals.reference_vectors(toy, x).phi_A.blocks
    assert np.abs(plan.block_marginals() - phi_A).max() <= 1e-10
    assert plan.pmf().sum() == pytest.approx(1, abs=1e-12)
    assert plan.pmf().min() >= 0


def test_nonzero_perturbation_cancels(eta_spec):
    plan = codec.build_encoding_plan(eta_spec, "0000")
    assert not plan.uses_fallback and np.abs(plan.eta.blocks).max() > 1e-3
    phi_A = marginals.reference_vectors(eta_spec, "0000").phi_A.blocks
    assert np.abs(plan.block_marginals() - phi_A).max() <= 1e-10
    # the valid branch stays within the entry bound of the ideal vector
    for i in range(4):
        cap = 1 / (16 * eta_spec.preimage_size(i, 0))
        assert plan.eta.blocks[i].max() <= cap + 1e-12


def test_ineligible_source_records_reason(eta_spec):
    plan = codec.build_encoding_plan(eta_spec, "0100")
    assert plan.fallback == codec.FALLBACK_MATCHER
    assert "entry-bound" in plan.detail and "pair-bound" in plan.detail


def test_single_block_error():
    spec = _single_block()
    plan = codec.build_encoding_plan(spec, "0")
    assert not plan.uses_fallback
    assert plan.bit_error(0) == pytest.approx(0.5 * (1 - spec.preimage_size(0, 0) / 16),
                                              abs=1e-15)
    # a one-bit source of weight 1 is outside the ball and guesses uniformly
    assert codec.build_encoding_plan(spec, "1").bit_error(0) == 0.5


@pytest.mark.parametrize("x", ["000", "010"])
def test_toy_bit_error_is_an_eighth(toy, x):
    assert np.allclose(codec.build_encoding_plan(toy, x).bit_errors(), 1 / 8, atol=1e-15)


def test_valid_branch_decodes_exactly(toy):
    for x in ("000", "001"):
        plan = codec.build_encoding_plan(toy, x)
        assert np.all(ensemble.decode_codes(toy, plan.expurgated) == bits.as_bits(x))


def test_fallback_encoding_is_uniform(toy):
    plan = codec.build_encoding_plan(toy, "111")
    codes = codec.encode(plan, seed=1, count=1_000_000)
    assert chisquare(np.bincount(codes, minlength=1024)).pvalue > 1e-3


def test_encoding_follows_plan(toy):
    plan = codec.build_encoding_plan(toy, "100")
    codes = codec.encode(plan, seed=2, count=300_000)
    exp = plan.pmf().reshape(64, 16).sum(axis=1) * codes.size
    assert chisquare(np.bincount(codes // 16, minlength=64), exp).pvalue > 1e-3


def test_encoding_is_deterministic(toy):
    plan = codec.build_encoding_plan(toy, "001")
    assert np.array_equal(codec.encode(plan, 5, 100), codec.encode(plan, 5, 100))
    assert isinstance(codec.encode(plan, 5), int)


def test_identity_decoder_plan():
    spec = ensemble.identity_decoder(5)
    plan = codec.build_encoding_plan(spec, "10110")
    assert codec.encode(plan, 0) == 0b10110 and plan.bit_errors().max() == 0


def test_codec_caches_plans(toy):
    pc = codec.PrivateCodec(toy)
    assert pc.plan("010") is pc.plan([0, 1, 0]) and pc.rate == pytest.approx(10 / 3)


# --- bit planes and residual stage -----------------------------------------

def test_ternary_symbols_use_two_planes():
    planes = codec.to_bitplanes([0, 1, 2, 2, 1], 3)
    assert planes.tolist() == [[0, 1, 0, 0, 1], [0, 0, 1, 1, 0]]


def test_binary_symbols_are_unchanged():
    assert codec.to_bitplanes([1, 0, 1], 2).tolist() == [[1, 0, 1]]


@given(st.integers(2, 300).flatmap(
    lambda a: st.tuples(st.just(a), st.lists(st.integers(0, a - 1), max_size=50))))
def test_bitplane_roundtrip(case):
    A, symbols = case
    planes = codec.to_bitplanes(symbols, A)
    assert planes.shape[0] == codec.plane_count(A)
    assert codec.merge_bitplanes(planes).tolist() == symbols


def test_symbol_out_of_range():
    with pytest.raises(ValueError):
        codec.to_bitplanes([4], 3)


def test_identity_residual_recovers_sparse_errors(toy):
    comp = codec.ResidualComposition(codec.PrivateCodec(toy), codec.IdentityResidualCoder(), 0.34)
    assert comp.rate == pytest.approx(10 / 3 + 1)
    rng = np.random.default_rng(0)
    for _ in range(300):
        x = rng.integers(0, 2, size=3)
        out = codec.compose_residual(comp, x, rng)
        first = ensemble.decode_codes(toy, [out["c1"]])[0]
        assert np.array_equal(out["z"], first ^ x)
        if out["sparse"]:
            assert out["correct"]
        if not out["z"].any():
            assert np.array_equal(out["x_hat"], first)


def test_residual_error_below_dense_residual_rate(toy):
    comp = codec.ResidualComposition(codec.PrivateCodec(toy), codec.IdentityResidualCoder(), 0.34)
    rng = np.random.default_rng(1)
    wrong = dense = 0
    for x in itertools.islice(itertools.cycle(itertools.product((0, 1), repeat=3)), 4000):
        out = codec.compose_residual(comp, x, rng)
        wrong += not out["correct"]
        dense += not out["sparse"]
    assert wrong <= dense
