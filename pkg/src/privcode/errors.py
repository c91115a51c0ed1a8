"""Exception hierarchy.

Every error carries a short machine-readable ``kind`` and an ``exit_code``
used by the command-line front end.
"""


class PrivcodeError(Exception):
    kind = "error"
    exit_code = 1


class ConfigInvalid(PrivcodeError):
    kind = "config-invalid"
    exit_code = 2


class InfeasibleBias(ConfigInvalid):
    kind = "infeasible-bias"


class NoAdmissibleWindow(ConfigInvalid):
    kind = "no-admissible-b"


class DimensionMismatch(PrivcodeError):
    kind = "dimension-mismatch"


class NotAPmf(PrivcodeError):
    kind = "not-a-pmf"


class InstanceTooLarge(PrivcodeError):
    kind = "instance-too-large"
    exit_code = 3


class ScopeTooLarge(InstanceTooLarge):
    kind = "scope-too-large"


class SyndromeError(PrivcodeError):
    kind = "syndrome"


class RankDeficient(SyndromeError):
    kind = "rank-deficient-H"


class RowSpaceWeightViolation(SyndromeError):
    """A nonzero combination of rows of H has weight <= 2."""

    kind = "row-space-weight-violation"

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class EmptyPreimage(PrivcodeError):
    kind = "empty-preimage"


class InconsistentTargets(PrivcodeError):
    kind = "inconsistent-targets"


class OverlapTooLarge(PrivcodeError):
    kind = "overlap-too-large"


class NegativeMass(PrivcodeError):
    kind = "negative-mass"
    exit_code = 4


class NegativeConditional(NegativeMass):
    kind = "negative-conditional"
