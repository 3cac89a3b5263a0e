"""Exception hierarchy.

Every failure mode that a caller may want to branch on has its own class.
``HypothesisViolation`` subclasses carry the label of the violated structural
hypothesis so the command line can name it in its message.
"""

from __future__ import annotations


class PertspecError(Exception):
    """Base class for all package errors."""


class ConfigError(PertspecError):
    """Malformed or inconsistent configuration."""


class HypothesisViolation(ConfigError):
    """A structural hypothesis on the symbol, window or coupling fails.

    Parameters
    ----------
    label : str
        Short hypothesis tag, one of ``"H.1"``, ``"H.2"``, ``"H.3"``.
    message : str
        Human readable explanation.
    """

    def __init__(self, label: str, message: str):
        self.label = label
        super().__init__(f"({label}) {message}")


# --- symbol geometry -------------------------------------------------------


class OutOfBand(HypothesisViolation):
    """Imaginary part of the spectral parameter is outside the open band."""

    def __init__(self, message: str):
        super().__init__("H.2", message)


class MultiplicityViolation(HypothesisViolation):
    """Level set of Im g has more than two points (single-well condition)."""

    def __init__(self, message: str):
        super().__init__("H.1", message)


class PairTooFar(PertspecError):
    """Pair separation exceeds the local-regime proxy."""


# --- operator assembly -----------------------------------------------------


class TruncationTooSmall(PertspecError):
    """Fourier truncation cannot hold the perturbation block and symbol band."""


class RejectedDraw(PertspecError):
    """A perturbation draw outside the ball restriction was used."""


class DeltaWindowEmpty(HypothesisViolation):
    """No admissible coupling exists for the requested semiclassical parameter."""

    def __init__(self, message: str, lower: float = float("nan"), upper: float = float("nan")):
        self.lower = lower
        self.upper = upper
        super().__init__("H.3", message)


# --- spectral backend ------------------------------------------------------


class ConvergenceFailure(PertspecError):
    """LAPACK driver failed or produced an uncertified result."""

    def __init__(self, message: str, dump_path: str | None = None):
        self.dump_path = dump_path
        if dump_path:
            message = f"{message} (matrix dumped to {dump_path})"
        super().__init__(message)


class DimensionCap(PertspecError):
    """Matrix dimension exceeds the configured dense-solver cap."""


class DegenerateGap(PertspecError):
    """Two smallest singular values too close for a reliable singular vector."""


# --- quasimode / Gramian ---------------------------------------------------


class MixedRun(PertspecError):
    """Quasimodes computed from different matrices were combined."""


class StepTooCoarse(PertspecError):
    """Finite-difference derivative failed its step-halving self-check."""


class PairTooClose(PertspecError):
    """Pair separation is below the near-diagonal exclusion guard."""


class SingularA(PertspecError):
    """The 2x2 block A of the Gramian is numerically singular."""


class TooLarge(PertspecError):
    """Permanent requested for a matrix larger than supported."""


# --- densities -------------------------------------------------------------


class PairCoincident(PertspecError):
    """Two-point density requested on the diagonal."""


# --- Monte Carlo / statistics ---------------------------------------------


class IncompatibleManifest(PertspecError):
    """Existing run directory belongs to a different configuration."""


class TooFewTrials(PertspecError):
    """Not enough trials for the requested statistic."""


class EmptyRecords(PertspecError):
    """No records supplied."""


class ErosionTooLarge(PertspecError):
    """Largest pair radius does not fit between the window and its padding."""


class MismatchedConfig(PertspecError):
    """Empirical data and theory model refer to different parameters."""
