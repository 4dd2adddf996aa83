"""Few-shot tabular learning from self-generated tasks (C++ core)."""

from ._stunt import *  # noqa: F401,F403
from ._stunt import Error, __doc__  # noqa: F401

__version__ = "1.0.0"
