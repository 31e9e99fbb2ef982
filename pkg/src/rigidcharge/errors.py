"""Exception types shared by all modules.

Every error carries a short machine-readable ``code`` so the command line
front end can print a single parsable line and pick an exit status.
"""


class RigidChargeError(Exception):
    """Base class. ``code`` is a dotted identifier, ``exit_status`` an int."""

    code = "error"
    exit_status = 1

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details

    def one_line(self):
        parts = [f"error={self.code}"]
        for key, value in self.details.items():
            parts.append(f"{key}={value}")
        msg = str(self).replace("\n", " ")
        parts.append(f'message="{msg}"')
        return " ".join(parts)


class ConfigError(RigidChargeError):
    code = "config"
    exit_status = 2


class DomainError(RigidChargeError):
    code = "domain"
    exit_status = 2


class StructureError(RigidChargeError):
    code = "structure"
    exit_status = 2


class GeometryError(RigidChargeError):
    code = "geometry"
    exit_status = 3


class HorizonError(RigidChargeError):
    code = "horizon"
    exit_status = 3


class ConvergenceError(RigidChargeError):
    code = "convergence"
    exit_status = 4


class StepRejected(RigidChargeError):
    """Raised by a single step when the contraction guard trips."""

    code = "step_rejected"
    exit_status = 4


class SearchError(RigidChargeError):
    code = "search"
    exit_status = 5
