import numpy as np
import pytest

from privcode import ensemble

TOY_SETS = [[0, 1, 2, 3], [3, 4, 5, 6], [6, 7, 8, 0]]
TOY_OVERRIDES = {"b": 4, "b_prime": 1, "length": 10}


def make_toy(seed=0):
    """Three 4-bit windows on a 10-bit codeword, pairwise sharing one bit."""
    params = ensemble.derive_parameters(3, 0.25, 0.25, TOY_OVERRIDES, seed=seed)
    return ensemble.sample_decoder(params, ensemble.build_syndrome_map(4, b_prime=1),
                                   index_sets=TOY_SETS)


def make_small(index_sets, length, n=None, p=0.5):
    """Two-bit windows with an all-ones syndrome row and table [0, 1].

    Such a row has weight 2, so it bypasses the row-space check; these
    instances are only used for marginal-space and LP examples.
    """
    n = len(index_sets) if n is None else n
    params = ensemble.derive_parameters(n, p, 0.0, {"b": 2, "b_prime": 1, "length": length})
    return ensemble.DecoderSpec(params, np.array(index_sets),
                                ensemble.SyndromeMap(np.ones((1, 2), dtype=np.uint8)),
                                np.tile(np.array([0, 1], dtype=np.uint8), (n, 1)))


def make_eta_instance(seed=0):
    """Five-bit windows with a two-row syndrome map; eta is nonzero here."""
    params = ensemble.derive_parameters(4, 0.25, 0.25, {"b": 5, "b_prime": 2, "length": 12},
                                        seed=seed)
    H = [[1, 1, 1, 0, 0], [0, 0, 1, 1, 1]]
    sets = [[0, 1, 2, 3, 4], [3, 4, 5, 6, 7], [6, 7, 8, 9, 10], [9, 10, 11, 0, 1]]
    return ensemble.sample_decoder(params, ensemble.build_syndrome_map(custom_H=H), sets)


@pytest.fixture(scope="session")
def toy():
    return make_toy()


@pytest.fixture(scope="session")
def eta_spec():
    return make_eta_instance()


@pytest.fixture(scope="session")
def two_windows():
    # windows {C1, C2} and {C2, C3} of a 3-bit codeword
    return make_small([[0, 1], [1, 2]], 3)


@pytest.fixture(scope="session")
def three_cycle():
    # windows {C1, C2}, {C2, C3}, {C1, C3}
    return make_small([[0, 1], [1, 2], [0, 2]], 3)
