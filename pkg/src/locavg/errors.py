"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line front end can map
failures to the documented process status without a lookup table.
"""

from __future__ import annotations


class LocavgError(Exception):
    exit_code = 1


class InputError(LocavgError):
    """Malformed or insufficient input data."""

    exit_code = 2


class ConfigError(LocavgError):
    """Inconsistent run configuration (group size, bandwidth, target...)."""

    exit_code = 4


class NumericalError(LocavgError):
    """A linear system or variance estimate is singular or degenerate."""

    exit_code = 3


class MissingColumn(InputError):
    def __init__(self, column: str):
        self.column = column
        super().__init__(f"column {column!r} not found in header")


class NonNumericCell(InputError):
    def __init__(self, row: int, column: str, value: str = ""):
        self.row = row
        self.column = column
        super().__init__(f"row {row}, column {column!r}: non-numeric value {value!r}")


class EmptyData(InputError):
    def __init__(self, msg: str = "no data rows"):
        super().__init__(msg)


class TooFewRows(InputError):
    def __init__(self, n: int, group_size: int):
        self.n = n
        self.group_size = group_size
        super().__init__(f"{n} rows cannot fill a single group of size {group_size}")


class GroupTooSmall(ConfigError):
    def __init__(self, group_size: int, required: int, why: str = ""):
        self.group_size = group_size
        self.required = required
        extra = f" ({why})" if why else ""
        super().__init__(f"group size {group_size} < required {required}{extra}")


class SingularGroup(NumericalError):
    def __init__(self, group: int, condition: float):
        self.group = group
        self.condition = condition
        super().__init__(
            f"group {group}: Gram matrix is singular or ill-conditioned "
            f"(condition number {condition:.3g})"
        )


class SingularSchur(NumericalError):
    def __init__(self, condition: float = float("inf")):
        self.condition = condition
        super().__init__(
            "projected constant-part design Z'PZ is singular "
            f"(condition number {condition:.3g})"
        )


class EmptyWindow(NumericalError):
    def __init__(self, u: float):
        self.u = u
        super().__init__(f"no design points with positive kernel weight at u={u:.6g}")


class RankDeficientWindow(NumericalError):
    def __init__(self, u: float, effective: int, required: int):
        self.u = u
        self.effective = effective
        self.required = required
        super().__init__(
            f"only {effective} distinct points in the window at u={u:.6g}, "
            f"need {required}"
        )


class DegenerateVariance(NumericalError):
    def __init__(self, what: str):
        super().__init__(f"degenerate variance estimate: {what}")


class ZeroRSS1(NumericalError):
    def __init__(self):
        super().__init__("alternative residual sum of squares is zero")


class NonNested(NumericalError):
    def __init__(self, rss0: float, rss1: float):
        self.rss0 = rss0
        self.rss1 = rss1
        super().__init__(
            f"restricted RSS {rss0:.12g} below unrestricted RSS {rss1:.12g}"
        )
