"""Figure rendering for training-run artifacts.

Reads the delimited files a training run leaves behind (training logs,
certificate grids, tracking trajectories) and renders them to image
files.  Only the documented file formats couple this package to the
trainer; it imports nothing from it.
"""

from .figures import (aligned_metric, plot_grid, plot_tracking,
                      plot_training, save_figure)
from .io import read_grid, read_trajectory, read_training_log

__all__ = [
    "aligned_metric",
    "plot_grid",
    "plot_tracking",
    "plot_training",
    "read_grid",
    "read_trajectory",
    "read_training_log",
    "save_figure",
]
