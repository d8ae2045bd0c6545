"""Exception hierarchy with stable error codes and CLI exit statuses.

Every error the library raises deliberately is a ``FlowscapeError``. The
``code`` attribute is the stable machine-readable string emitted by the CLI
(it equals the class name), and ``exit_status`` is the process exit code the
CLI maps the error to: 2 for input/validation problems, 3 for solver
failures, 4 for missing pipeline artifacts.
"""

from __future__ import annotations


class FlowscapeError(Exception):
    exit_status = 2

    @property
    def code(self) -> str:
        return type(self).__name__


# -- input / validation (exit 2) --------------------------------------------

class MalformedRow(FlowscapeError):
    """A tabular input row has wrong arity or a non-numeric field."""


class DuplicateCellId(FlowscapeError):
    """The same cell id appears twice in a grid file."""


class TooFewCells(FlowscapeError):
    """A grid needs at least two cells."""


class DegenerateCentroids(FlowscapeError):
    """Two distinct cells share a centroid, so their distance would be 0."""


class UnknownCellId(FlowscapeError):
    """An OD row references a cell id not present in the grid."""


class NegativeCount(FlowscapeError):
    """An OD row carries a negative trip count."""


class EmptySelection(FlowscapeError):
    """No OD rows match the requested (scenario, hour) label."""


class MixedGrids(FlowscapeError):
    """Inputs that must share one grid reference different grids."""


class EdgeNotInSystem(FlowscapeError):
    """An operation referenced an edge outside the fitted edge set."""


class EmptyEdgeSet(FlowscapeError):
    """The weighting rule produced no edges at all."""


class NoTrips(FlowscapeError):
    """Threshold fitting needs at least one positive trip count."""


class NotCentered(FlowscapeError):
    """PCA input must be column-centered before fitting."""


class DimensionMismatch(FlowscapeError):
    """Array shapes or component counts do not agree."""


class DuplicateLabel(FlowscapeError):
    """Two observation rows carry the same (scenario, hour) label."""


class VolumeUnderflow(FlowscapeError):
    """Synthetic base volume too small: clipping would distort net flow."""


class ConfigError(FlowscapeError):
    """A configuration value is missing or out of range."""


# -- solver (exit 3) ---------------------------------------------------------

class SolverDiverged(FlowscapeError):
    """Conjugate gradients exceeded max_iter without reaching rel_tol."""

    exit_status = 3


# -- artifacts (exit 4) ------------------------------------------------------

class MissingArtifacts(FlowscapeError):
    """A pipeline stage needs output files that are not present."""

    exit_status = 4
