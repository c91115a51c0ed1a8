import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from privcode import analysis, codec, ensemble, marginals
from privcode.errors import ScopeTooLarge

from conftest import make_toy


def _uniform_builder(spec, x):
    return codec.fallback_plan(spec, x, "forced")


# --- privacy audit ---------------------------------------------------------

def test_uniform_builder_leaks_nothing(toy):
    audit = analysis.audit_privacy(toy, _uniform_builder, "all")
    assert audit.leakage == 0 and np.all(audit.mutual_information == 0)
    assert len(audit.attribution) == 8


def test_identity_code_leaks_nothing():
    audit = analysis.audit_privacy(ensemble.identity_decoder(4), scope="all")
    assert audit.leakage == 0 and audit.attribution == {}


def test_toy_no_fallback_scope(toy):
    audit = analysis.audit_privacy(toy, scope="weight-bounded")
    assert audit.scope_size == 4 and audit.attribution == {}
    assert audit.leakage <= 1e-9
    assert np.all(audit.mutual_information <= 1e-9)


def test_toy_full_scope_leaks(toy):
    audit = analysis.audit_privacy(toy, scope="all")
    # a matched source gives 3/4 ideal + 1/4 uniform on a window; a heavy
    # source gives uniform, and the ideal law is half the window away from it
    assert audit.leakage == pytest.approx(0.75 * 0.5, abs=1e-12)
    assert set(audit.attribution.values()) == {codec.FALLBACK_WEIGHT}
    assert audit.worst_pair[3] == audit.leakage


def test_audit_is_reproducible(toy):
    a = analysis.audit_privacy(toy, scope="all")
    b = analysis.audit_privacy(toy, scope="all")
    assert np.array_equal(a.leakage_by_block, b.leakage_by_block)
    assert json.dumps(analysis._plain(a.summary())) == json.dumps(analysis._plain(b.summary()))


def test_audit_scope_limit():
    params = ensemble.derive_parameters(17, 0.25, 0.25, {"b": 4, "b_prime": 1, "length": 40})
    spec = ensemble.sample_decoder(params)
    with pytest.raises(ScopeTooLarge):
        analysis.audit_privacy(spec, scope="all")


def test_explicit_scope(toy):
    audit = analysis.audit_privacy(toy, scope=["000", "011"])
    assert audit.scope_size == 2 and audit.leakage == pytest.approx(0.375)


def test_total_variation():
    assert analysis.total_variation([1, 0], [0, 1]) == 1.0
    assert analysis.total_variation([0.5, 0.5], [0.5, 0.5]) == 0.0


# --- targets ---------------------------------------------------------------

@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([None, 0.5, 1.0]))
def test_random_targets_are_eligible(seed, fraction):
    spec = make_toy()
    rng = np.random.default_rng(seed)
    targets, eta = analysis.random_eligible_targets(spec, "010", rng, fraction)
    assert marginals.check_eligibility(spec, "010", eta).eligible
    assert np.allclose(targets.blocks, 1 / 16 - 3 * eta.blocks)


# --- error estimates -------------------------------------------------------

def test_no_fallback_error_rate(toy):
    scope = ["000", "100", "010", "001"]
    rep = analysis.estimate_error(toy, source=scope, trials=20_000, seed=1)
    bound = 1 / (toy.n + 1)
    sigma = np.sqrt(bound * (1 - bound) / rep.trials)
    assert np.all(rep.per_bit <= bound + 4 * sigma)
    assert np.allclose(rep.exact_per_bit, 1 / 8, atol=1e-12)
    assert rep.histogram.sum() == rep.trials


def test_uniform_builder_guesses(toy):
    rep = analysis.estimate_error(toy, _uniform_builder, trials=20_000, seed=2, p=0.5)
    sigma = np.sqrt(0.25 / 20_000)
    assert np.all(np.abs(rep.per_bit - 0.5) < 4 * sigma)
    assert np.allclose(rep.exact_per_bit, 0.5)


def test_zero_trials(toy):
    rep = analysis.estimate_error(toy, trials=0)
    assert rep.trials == 0 and rep.per_bit.size == 0 and rep.histogram.sum() == 0


def test_distortion_tail(toy):
    rep = analysis.estimate_error(toy, trials=5000, seed=3, delta=2 / 3)
    assert rep.tail == pytest.approx(rep.histogram[2:].sum() / rep.trials)


# --- ensemble concentration ------------------------------------------------

def test_zero_weight_concentration():
    params = ensemble.derive_parameters(4, 0.25, 0.25, {"b": 4, "b_prime": 1, "length": 11})
    rep = analysis.concentration_study(params, "0000", 60, seed=4)
    assert rep.expected == 2**11 / 16
    assert abs(rep.z_score) < 4
    assert rep.counts.size == 60 and len(set(rep.seeds)) == 60


def test_full_windows_always_overlap():
    params = ensemble.derive_parameters(3, 0.25, 0.25, {"b": 4, "b_prime": 1, "length": 4})
    rep = analysis.concentration_study(params, "000", 5, seed=0)
    assert rep.overlap_exceedance == 1.0


def test_single_draw():
    params = ensemble.derive_parameters(3, 0.25, 0.25, {"b": 4, "b_prime": 1, "length": 10})
    rep = analysis.concentration_study(params, "000", 1, seed=0)
    assert rep.counts.size == 1 and rep.std_error == 0.0


def test_concentration_independent_of_workers():
    params = ensemble.derive_parameters(4, 0.25, 0.25, {"b": 4, "b_prime": 1, "length": 10})
    a = analysis.concentration_study(params, "0100", 6, seed=8, workers=1)
    b = analysis.concentration_study(params, "0100", 6, seed=8, workers=2)
    assert np.array_equal(a.counts, b.counts) and a.seeds == b.seeds


# --- excess-mass inequality ------------------------------------------------

@given(st.integers(1, 64), st.floats(0.01, 100), st.floats(0.01, 5))
def test_uniform_pmf_has_no_excess(D, alpha, eps):
    res = analysis.excess_fraction_check(np.full(D, 1 / D), alpha, eps)
    assert res.lhs == 0 and res.hypothesis_holds and res.conclusion_holds


def test_worked_example():
    res = analysis.excess_fraction_check([0.3, 0.25, 0.25, 0.2], 50, 0.4)
    assert res.spread == pytest.approx(0.005) and res.hypothesis_holds
    assert res.lhs == 0 and res.rhs == pytest.approx(1.4 / 8)
    assert res.conclusion_holds


def test_excess_formula():
    res = analysis.excess_fraction_check([0.7, 0.1, 0.1, 0.1], 1, 0.2)
    assert res.lhs == pytest.approx(0.7 - 1.2 / 4)
    assert res.spread == pytest.approx(0.45**2 + 3 * 0.15**2)


def test_small_sweep_is_clean_and_worker_independent():
    rows, bad = analysis.appendix_sweep(1500, seed=2)
    rows2, bad2 = analysis.appendix_sweep(1500, seed=2, workers=2)
    assert bad == bad2 == 0 and rows == rows2 and len(rows) == 1500
    assert all(r[3] <= r[4] * (1 + 1e-12) and r[5] <= r[6] for r in rows)


# --- export helpers --------------------------------------------------------

def test_report_embeds_params_and_seeds(toy):
    text = analysis.report_json("demo", {"value": np.float64(0.5), "arr": np.arange(3)},
                                toy.params, {"root": 7}, timestamp=None)
    data = json.loads(text)
    assert data["schema_version"] == analysis.SCHEMA_VERSION
    assert data["params"]["n"] == 3 and data["seeds"] == {"root": 7}
    assert data["result"]["arr"] == [0, 1, 2]


def test_rows_csv():
    assert analysis.rows_csv(["a", "b"], [(1, 0.5)]) == "a,b\n1,0.5\n"
