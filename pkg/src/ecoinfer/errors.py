"""Exception hierarchy shared by every module."""


class EIError(Exception):
    """Base class for all ecological-inference errors."""

    code = "ei_error"

    def to_record(self):
        return {"error": self.code, "message": str(self)}


class ValidationError(EIError):
    code = "validation_error"


class MarginalMismatch(ValidationError):
    code = "marginal_mismatch"

    def __init__(self, precinct_id, row_total, col_total, detail=""):
        self.precinct_id = precinct_id
        self.row_total = row_total
        self.col_total = col_total
        msg = (f"precinct {precinct_id!r}: electors by bracket sum to {row_total}, "
               f"votes by option sum to {col_total}")
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class NegativeCount(ValidationError):
    code = "negative_count"


class UnknownOption(ValidationError):
    code = "unknown_option"


class DimensionMismatch(ValidationError):
    code = "dimension_mismatch"


class AgeBelowMinimum(ValidationError):
    code = "age_below_minimum"


class AgeNotCovered(ValidationError):
    code = "age_not_covered"


class EmptyBracket(EIError):
    code = "empty_bracket"


class RankDeficient(EIError):
    code = "rank_deficient"

    def __init__(self, rank, n_brackets):
        self.rank = rank
        self.n_brackets = n_brackets
        super().__init__(
            f"precinct age compositions have rank {rank} < {n_brackets} brackets; "
            "cell probabilities are not identified")


class NoFeasibleTable(EIError):
    code = "no_feasible_table"


class TooLargeToEnumerate(EIError):
    code = "too_large_to_enumerate"


class SplitTooSmall(EIError):
    code = "split_too_small"


class NoPairedPrecincts(EIError):
    code = "no_paired_precincts"


class RollDriftExceeded(EIError):
    code = "roll_drift_exceeded"


class ParseError(EIError):
    code = "parse_error"

    def __init__(self, path, line, message):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class JoinFailure(EIError):
    code = "join_failure"

    def __init__(self, missing_in_padron=(), missing_in_results=()):
        self.missing_in_padron = sorted(missing_in_padron)
        self.missing_in_results = sorted(missing_in_results)
        parts = []
        if self.missing_in_padron:
            parts.append("missing from padron: " + ", ".join(self.missing_in_padron))
        if self.missing_in_results:
            parts.append("missing from results: " + ", ".join(self.missing_in_results))
        super().__init__("; ".join(parts))


class IoFailure(EIError):
    code = "io_failure"


class NonConvergenceWarning(UserWarning):
    """Emitted when some cell's R-hat exceeds the convergence threshold."""
