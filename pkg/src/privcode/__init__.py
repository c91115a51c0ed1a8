"""Private locally decodable compression of binary sources.

Each source bit is recovered from a small window of the codeword, and the
window's distribution depends on that bit alone.
"""

from .codec import (EncodingPlan, IdentityResidualCoder, PrivateCodec, ResidualComposition,
                    ValidCodewordIndex, build_encoding_plan, compose_residual, encode,
                    enumerate_valid, expected_valid_count, expurgate, merge_bitplanes,
                    to_bitplanes)
from .coupling import (CouplingSchedule, build_schedule, check_distortion_typical,
                       coupled_encode)
from .ensemble import (CodeParams, DecoderSpec, SyndromeMap, build_syndrome_map,
                       decode_codes, derive_parameters, global_decode, identity_decoder,
                       local_decode, sample_decoder)
from .errors import PrivcodeError
from .lp import lp_membership, verify_certificate
from .marginals import (BlockMarginalVector, PerturbationVector, check_eligibility,
                        consistency_report, ideal_vector, reference_vectors, uniform_vector)
from .matcher import AdditiveDistribution, LiftedTerm, match_marginals
from .analysis import (audit_privacy, appendix_sweep, concentration_study, estimate_error,
                       excess_fraction_check)

__version__ = "0.1.0"
