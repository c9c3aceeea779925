"""Backend failure taxonomy."""


class BackendError(Exception):
    """Base class for all backend failures."""


class BackendTimeout(BackendError):
    """The backend did not answer within the configured timeout."""


class HttpStatusError(BackendError):
    def __init__(self, status_code: int, detail: str = ""):
        self.status_code = status_code
        super().__init__(f"HTTP {status_code}" + (f": {detail}" if detail else ""))

    @property
    def retryable(self) -> bool:
        # 4xx means the request itself is wrong; retrying cannot help.
        return not 400 <= self.status_code < 500


class ExhaustedRetries(BackendError):
    def __init__(self, attempts: int, last: Exception):
        self.attempts = attempts
        self.last = last
        super().__init__(f"gave up after {attempts} attempts: {last}")


class PayloadDecode(BackendError):
    """The backend answered 200 but the body was not what we asked for."""


class DimensionMismatch(BackendError):
    """Embedding response mixed vectors of different lengths."""
