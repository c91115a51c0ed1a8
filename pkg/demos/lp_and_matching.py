"""Realizability of block marginals: a frustrated cycle versus matched targets.

Run with ``python3 demos/lp_and_matching.py``.
"""

import numpy as np

import privcode as pc
from privcode import marginals


def three_cycle():
    # three 2-bit windows over three bits; the all-ones row is only a placeholder
    params = pc.derive_parameters(3, 0.5, 0.0, {"b": 2, "b_prime": 1, "length": 3})
    return pc.DecoderSpec(params, np.array([[0, 1], [1, 2], [0, 2]]),
                          pc.SyndromeMap(np.ones((1, 2), dtype=np.uint8)),
                          np.tile(np.array([0, 1], dtype=np.uint8), (3, 1)))


def main():
    spec = three_cycle()
    # bits 0=1 and 1=2 always, but 0!=2 always: locally fine, globally impossible
    phi = pc.BlockMarginalVector([[.5, 0, 0, .5], [.5, 0, 0, .5], [0, .5, .5, 0]])
    print("pairwise consistent:", pc.consistency_report(spec, phi).marginally_consistent)
    res = pc.lp_membership(spec, phi)
    print("realizable:", res.feasible, "certificate:", [str(v) for v in res.certificate])
    print("certificate checks:", pc.verify_certificate(spec, phi, res.certificate))

    params = pc.derive_parameters(3, 0.25, 0.25, {"b": 4, "b_prime": 1, "length": 10})
    toy = pc.sample_decoder(params, pc.build_syndrome_map(4, b_prime=1),
                            [[0, 1, 2, 3], [3, 4, 5, 6], [6, 7, 8, 0]])
    target = pc.reference_vectors(toy, "010").phi_A
    out = pc.match_marginals(toy, target, exact=True)
    rep = out.report
    print(f"three correction rounds reach min {float(rep.unrepaired_min):.3e};"
          f" repair weight {rep.repair_weight}")
    got = marginals.phi_of_distribution(toy, np.array(out.dist.evaluate_all(), dtype=float))
    print("max block residual:", np.abs(got.blocks - target.blocks).max())


if __name__ == "__main__":
    main()
