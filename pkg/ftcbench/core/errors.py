"""
Exception hierarchy shared by every ftcbench module
"""


class FTCBenchError(Exception):
    """Base class for all workbench errors"""


# Transfer-function algebra

class InvalidTransferFunction(FTCBenchError, ValueError):
    """Coefficients are empty, non-finite or the denominator vanishes"""


class PoleOnGrid(FTCBenchError, ArithmeticError):
    """An imaginary-axis pole coincides with a grid frequency"""


class DegenerateDenominator(FTCBenchError, ValueError):
    """Pole computation requested for a constant denominator"""


class UnstableSystem(FTCBenchError, ArithmeticError):
    """H-infinity norm requested for an unstable system"""


class ImproperSystem(FTCBenchError, ValueError):
    """Numerator degree exceeds denominator degree"""


class AlgebraicLoop(FTCBenchError, ArithmeticError):
    """1 + L vanishes identically"""


# Models and uncertainty

class OutOfEnvelope(FTCBenchError, ValueError):
    """Airspeed outside the tabulated aerodynamic envelope"""


class InvalidFaultState(FTCBenchError, ValueError):
    """Loss-of-effectiveness fraction outside its admissible range"""


class NominalZero(FTCBenchError, ArithmeticError):
    """Nominal plant vanishes at a grid frequency"""


class FitFailure(FTCBenchError, RuntimeError):
    """Uncertainty weight cannot cover the envelope within 20 dB inflation"""


# Synthesis and analysis

class ImproperLoop(FTCBenchError, ValueError):
    """Closed-loop assembly produced an improper transfer function"""


class NoStabilizingGains(FTCBenchError, RuntimeError):
    """No optimizer start reached a stabilizing controller"""


class NotStabilizable(FTCBenchError, ArithmeticError):
    """Riccati solution missing or closed loop not Hurwitz"""


class UnstableNominal(FTCBenchError, ArithmeticError):
    """Robustness test requested on an unstable nominal loop"""


class IncompleteSchedule(FTCBenchError, ValueError):
    """A schedule breakpoint lacks gains for an axis"""


# Allocation and simulation

class InfeasibleWrench(FTCBenchError, RuntimeError):
    """Residual wrench after redistribution exceeds 10% of demand"""


class NonFiniteState(FTCBenchError, ArithmeticError):
    """Simulation state became NaN or infinite"""


class RunAborted(FTCBenchError, RuntimeError):
    """A scenario run stopped early; log holds the samples recorded so far"""

    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log


class TransitionTimeout(RunAborted):
    """Airspeed did not reach stall speed before the time cap"""


class ControlLoss(RunAborted):
    """Altitude or attitude left the recoverable band during a run"""


# Evaluation and configuration

class EmptyWindow(FTCBenchError, ValueError):
    """Evaluation window contains no samples"""


class WindowMismatch(FTCBenchError, ValueError):
    """Logs being compared do not share an evaluation window"""


class ConfigError(FTCBenchError, ValueError):
    """Configuration, fixture or scenario file is missing or malformed"""
