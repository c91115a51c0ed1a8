import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from privcode import bits, codec, marginals
from privcode.errors import DimensionMismatch, NotAPmf
from privcode.marginals import BlockMarginalVector, PerturbationVector

from conftest import make_toy


def test_codeword_vectors_on_two_window_graph(two_windows):
    assert marginals.phi_of_codeword(two_windows, "000").blocks.reshape(-1).tolist() == \
        [1, 0, 0, 0, 1, 0, 0, 0]
    assert marginals.phi_of_codeword(two_windows, "111").blocks.reshape(-1).tolist() == \
        [0, 0, 0, 1, 0, 0, 0, 1]


def test_distribution_vector_on_two_window_graph(two_windows):
    phi = marginals.phi_of_distribution(two_windows, {"000": 0.2, "110": 0.3, "111": 0.5})
    assert np.allclose(phi.blocks.reshape(-1), [0.2, 0, 0, 0.8, 0.2, 0, 0.3, 0.5])


@settings(max_examples=30)
@given(st.integers(0, 2**10 - 1))
def test_codeword_vector_is_one_hot(c):
    phi = marginals.phi_of_codeword(make_toy(), c)
    assert np.all(phi.blocks.sum(axis=1) == 1) and np.all(phi.blocks.max(axis=1) == 1)


def test_point_mass_equals_codeword_vector(toy):
    P = np.zeros(2**10)
    P[613] = 1.0
    assert np.array_equal(marginals.phi_of_distribution(toy, P).blocks,
                          marginals.phi_of_codeword(toy, 613).blocks)


def test_uniform_distribution_gives_uniform_blocks(toy):
    phi = marginals.phi_of_distribution(toy, np.full(2**10, 2.0**-10))
    assert np.allclose(phi.blocks, 1 / 16, atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_realizable_vectors_are_consistent(seed):
    spec = make_toy()
    P = np.random.default_rng(seed).dirichlet(np.ones(2**10))
    phi = marginals.phi_of_distribution(spec, P)
    rep = marginals.consistency_report(spec, phi)
    assert rep.marginally_consistent
    assert np.allclose(phi.blocks.sum(axis=1), 1)


def test_bad_pmfs_rejected(toy):
    with pytest.raises(NotAPmf):
        marginals.phi_of_distribution(toy, np.full(2**10, 1e-3))
    with pytest.raises(NotAPmf):
        marginals.phi_of_distribution(toy, {"0000000000": 1.5, "0000000001": -0.5})
    with pytest.raises(NotAPmf):
        BlockMarginalVector([[0.5, 0.6]])
    with pytest.raises(DimensionMismatch):
        BlockMarginalVector([[0.5, 0.25, 0.25]])


def test_ideal_vector_on_preimage():
    spec = make_toy()
    ideal = marginals.ideal_vector(spec, "111")
    for i in range(3):
        pre = spec.preimage(i, 1)
        assert pre.size == 8
        assert np.all(ideal.blocks[i, pre] == 1 / 8)
        # odd-weight windows decode to 1 under table [0, 1]
        assert sorted(pre.tolist()) == [r for r in range(16) if bin(r).count("1") % 2]


def test_reference_mixture(toy):
    ref = marginals.reference_vectors(toy, "010")
    assert np.allclose(ref.phi_A.blocks, 0.75 * ref.phi_I.blocks + 0.25 * ref.phi_U.blocks)
    assert np.all(ref.phi_U.blocks == 1 / 16)


def test_uniform_is_consistent(toy):
    rep = marginals.consistency_report(toy, marginals.uniform_vector(toy))
    assert rep.marginally_consistent
    assert all(np.allclose(v, 0.5) for v in rep.bit_marginals.values())
    assert all(np.allclose(v, 0.25) for v in rep.bitpair_marginals.values())
    assert rep.e1_max == 0 and rep.e2_max == 0


def test_parity_cycle_is_bit_consistent(three_cycle):
    phi = BlockMarginalVector([[.5, 0, 0, .5], [.5, 0, 0, .5], [0, .5, .5, 0]])
    rep = marginals.consistency_report(three_cycle, phi)
    assert rep.bit_consistent and rep.marginally_consistent
    assert all(np.allclose(v, 0.5) for v in rep.bit_marginals.values())


def test_disagreeing_shared_bit(two_windows):
    q = 0.3
    phi = BlockMarginalVector([[q, 0, 1 - q, 0], [0, 0, 1, 0]])
    rep = marginals.consistency_report(two_windows, phi)
    assert not rep.bit_consistent
    (v,) = rep.violations
    assert v.indices == (1,) and v.magnitude == pytest.approx(1.0)


def test_zero_perturbation_is_eligible(toy):
    eta = PerturbationVector(np.zeros((3, 16)))
    assert marginals.check_eligibility(toy, "000", eta).eligible


def test_perturbation_must_sum_to_zero():
    with pytest.raises(DimensionMismatch):
        PerturbationVector([[0.1, 0.0]])


def test_large_entry_violates_entry_bound(toy):
    blocks = np.zeros((3, 16))
    pre = toy.preimage(0, 0)
    blocks[0, pre[0]] = 1 / pre.size
    blocks[0, pre[1]] = -1 / pre.size
    res = marginals.check_eligibility(toy, "000", PerturbationVector(blocks))
    assert not res.eligible
    assert any(v[0] == "entry-bound" for v in res.violations)
    assert res.margins["entry-bound"] < 0


def test_pair_bound_on_shared_pairs(eta_spec):
    # windows 0 and 1 share positions 3 and 4
    blocks = np.zeros((4, 32))
    blocks[0] = np.full(32, 1 / 32) - marginals.phi_of_codeword(eta_spec, 0).blocks[0] / 10
    blocks[0] -= blocks[0].mean()
    res = marginals.check_eligibility(eta_spec, "0000", PerturbationVector(blocks))
    assert any(v[0] == "pair-bound" and v[2] == (3, 4) for v in res.violations)


def test_valid_branch_perturbation_is_decided(eta_spec):
    ok = codec.build_encoding_plan(eta_spec, "0000")
    bad = codec.build_encoding_plan(eta_spec, "0100")
    assert ok.eta is not None and not ok.uses_fallback
    res = marginals.check_eligibility(eta_spec, "0000", ok.eta)
    assert res.eligible and set(res.margins) == {"zero-sum", "pair-bound", "entry-bound",
                                                 "consistency"}
    assert bad.uses_fallback
    res = marginals.check_eligibility(eta_spec, "0100", bad.eta)
    assert not res.eligible
    assert {v[0] for v in res.violations} >= {"entry-bound", "pair-bound"}


def test_json_roundtrip(toy):
    phi = marginals.reference_vectors(toy, "101").phi_A
    again = BlockMarginalVector.from_json(phi.to_json())
    assert np.array_equal(again.blocks, phi.blocks)


@given(st.integers(0, 7))
def test_ideal_pair_marginals_are_quarter(xv):
    # any two window positions are independent and fair under the ideal vector
    spec = make_toy()
    ideal = marginals.ideal_vector(spec, bits.int_to_bits(xv, 3))
    for i in range(3):
        for a in range(4):
            for b in range(a + 1, 4):
                assert np.all(marginals.block_marginal(ideal.blocks[i], 4, (a, b)) == 0.25)
