"""Presentation layer over the dadm harness CSVs.

Strictly read-only over its inputs: every number shown or printed is taken
from the file (or is an exact max/min over a file column); nothing is
recomputed from the underlying models.
"""

from .slices import SliceFile, read_slice, plot_slice
from .losses import read_losses, plot_losses
from .errors import PlotkitError

__all__ = ["SliceFile", "read_slice", "plot_slice", "read_losses",
           "plot_losses", "PlotkitError"]
