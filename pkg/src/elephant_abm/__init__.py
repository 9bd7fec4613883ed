"""Agent-based simulation of a bull elephant in a plantation-forest mosaic.

Subpackages and modules
-----------------------
terrain       raster I/O, slope, distance maps and the terrain stack
environment   food, temperature, disturbance and synthetic landscapes
agent         the elephant's state and decision rules
engine        tick scheduler, replicate batches and output writers
calibration   movement HMM fitting, NSGA-II and slope-tolerance tuning
analytics     home ranges, clustering, raid statistics and convergence
cli           command-line entry point
"""
from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # pragma: no cover - running from a checkout
    __version__ = "0.1.0"

BUILD_ID = f"elephant_abm {__version__}"

from .kernels import BACKEND  # noqa: E402

__all__ = ["__version__", "BUILD_ID", "BACKEND"]
