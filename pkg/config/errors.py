"""Exception hierarchy for the branching toolkit"""

from typing import Optional


class BranchingError(Exception):
    """Base class for every numerical or configuration failure raised by the package"""


class QuadratureError(BranchingError):
    """Adaptive quadrature did not reach the requested tolerance"""


class IndeterminateError(BranchingError):
    """A limit estimate is too close to zero to decide its sign and did not converge"""


class BoundaryCaseError(BranchingError):
    """A growth or index estimate sits on a boundary where no decision is made"""


class NotRegularlyVaryingError(BranchingError):
    """Ratio sequence ψ(2s)/ψ(s) failed to settle on a grid s ↓ 0"""


class TrivialMechanismError(BranchingError):
    """Mechanism has no diffusion and no Lévy measure"""


class GreyConditionError(BranchingError):
    """∫^∞ dξ/ψ(ξ) diverges, so ϕ and its inverse are undefined"""


class BracketingError(BranchingError):
    """Root bracket for varphi could not be established after table extension"""


class SurvivalUnderflowError(BranchingError):
    """A survival probability underflowed to zero; use the log-space variant"""


class InversionError(BranchingError):
    """Laplace inversion produced a non-finite or out-of-range value"""

    def __init__(self, message: str, diagnostics: Optional[dict] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class TooFewSurvivorsError(BranchingError):
    """Not enough surviving paths to build an empirical conditional law"""


class ConfigError(BranchingError):
    """Invalid experiment or mechanism file, with the location of the problem"""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None,
                 field: Optional[str] = None):
        location = []
        if path:
            location.append(str(path))
        if line is not None:
            location.append(f"line {line}")
        if field:
            location.append(f"field '{field}'")
        prefix = f"{':'.join(location)}: " if location else ""
        super().__init__(f"{prefix}{message}")
        self.path = path
        self.line = line
        self.field = field
