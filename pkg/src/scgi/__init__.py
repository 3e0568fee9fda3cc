"""Ghost imaging (GI) and second-order cumulant ghost imaging (SCGI).

Subpackages: :mod:`optics` (Fresnel propagation and masks), :mod:`source`
(pseudothermal speckle frames), :mod:`estimators` (streaming GI/SCGI
reconstruction), :mod:`analysis` (closed-form images and resolution
metrics) and :mod:`harness` (configuration, simulation and the CLI).
"""
from .analysis import *  # noqa: F401,F403
from .errors import *  # noqa: F401,F403
from .estimators import *  # noqa: F401,F403
from .optics import *  # noqa: F401,F403
from .source import *  # noqa: F401,F403

__version__ = "0.1.0"
