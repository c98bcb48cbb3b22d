"""Syntactic trajectory tracking: SCFG trajectory models, an extended
probabilistic Earley chart parser, IMM/EKF and particle-filter trackers, a
GMTI-style detection simulator, and the online geometry classifier."""

from syntrack._core import *  # noqa: F401,F403
from syntrack._core import __version__  # noqa: F401
