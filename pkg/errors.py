# -*- coding: utf-8 -*-
"""
例外の階層。exit_code は CLI の終了コード（1: 使い方・設定, 2: データ・モデル）
"""


class RicSelectError(Exception):
    exit_code = 2


class UsageError(RicSelectError):
    exit_code = 1


class ConfigError(RicSelectError, ValueError):
    exit_code = 1


class DimensionError(RicSelectError, ValueError):
    pass


class InvalidCorrelationError(RicSelectError, ValueError):
    pass


class NotSpdError(RicSelectError, ArithmeticError):
    pass


class PerfectFitError(RicSelectError, ArithmeticError):
    pass


class DomainError(RicSelectError, ValueError):
    pass


class UndefinedCriterionError(RicSelectError, ArithmeticError):
    def __init__(self, kind, k: int, n: int):
        self.kind = kind
        self.k = k
        self.n = n
        super().__init__(f"{kind} is undefined for k={k}, n={n} (needs n - k - 2 > 0)")

    def __reduce__(self):
        return (type(self), (self.kind, self.k, self.n))


class TooLargeError(RicSelectError, ValueError):
    pass


class EmptyWinnerError(RicSelectError, LookupError):
    def __init__(self, kind):
        self.kind = kind
        super().__init__(f"no feasible candidate for criterion {kind}")

    def __reduce__(self):
        return (type(self), (self.kind,))


class DatasetFormatError(RicSelectError, ValueError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        self.row = row
        self.column = column
        super().__init__(message)

    def __reduce__(self):
        return (type(self), (str(self), self.row, self.column))


class ExperimentError(RicSelectError):
    def __init__(self, message: str, replication: int | None = None):
        self.replication = replication
        super().__init__(message)

    def __reduce__(self):
        return (type(self), (str(self), self.replication))
