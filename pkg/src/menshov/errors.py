class PreconditionError(ValueError):
    """An operation was called outside the domain where its structure holds."""


class AlgorithmFailure(RuntimeError):
    """A construction ran to completion without meeting its target.

    ``details`` carries the best partial result (a certificate, a fit report,
    a refused witness request) so callers can inspect or serialize it.
    """

    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = details if details is not None else {}
