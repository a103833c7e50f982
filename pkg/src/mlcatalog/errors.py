"""Exception hierarchy shared by every module.

Each error carries a machine ``code`` and an HTTP ``status`` so the service
and the CLI can map failures without inspecting message text.
"""


class CatalogError(Exception):
    code = "catalog_error"
    status = 400
    exit_code = 1

    def __init__(self, message, code=None):
        super().__init__(message)
        if code is not None:
            self.code = code

    @property
    def message(self):
        return self.args[0] if self.args else ""


class NotFoundError(CatalogError):
    code = "not_found"
    status = 404


class ConflictError(CatalogError):
    code = "conflict"
    status = 409


class ValidationError(CatalogError):
    code = "invalid"
    status = 400


class DanglingReferenceError(ValidationError):
    code = "dangling_reference"
    status = 409


class CycleError(ConflictError):
    code = "cycle"


class ChecksumMismatchError(ValidationError):
    """A caller-declared digest did not match the bytes received."""

    code = "checksum_mismatch"
    exit_code = 2


class IntegrityError(CatalogError):
    """Stored state failed verification (corruption, tampering, bad bag)."""

    code = "integrity_error"
    status = 500
    exit_code = 2


class SchemaVersionError(CatalogError):
    code = "version_error"
    status = 500
    exit_code = 3


class InvalidBagError(IntegrityError):
    code = "invalid_bag"
    status = 400


class ServiceError(CatalogError):
    """The catalog service could not be reached or failed internally."""

    code = "service_error"
    status = 502
    exit_code = 3


class StatusTransitionError(ConflictError):
    code = "bad_transition"


class StagingError(CatalogError):
    """Execution inputs could not be staged; the failed execution is recorded."""

    code = "staging_failed"
    status = 409

    def __init__(self, message, execution=None):
        super().__init__(message)
        self.execution = execution
