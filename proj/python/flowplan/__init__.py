# Copyright 2026 the flowplan authors
# SPDX-License-Identifier: Apache-2.0
"""Goal-conditioned flow-matching trajectory planner (Python bindings).

The compiled module lives inside this package in an installed tree and as a
top-level extension on PYTHONPATH when running from a CMake build directory.
"""

try:
    from ._flowplan import *  # noqa: F401,F403
    from ._flowplan import __version__  # noqa: F401
except ImportError:  # pragma: no cover - build-tree layout
    from _flowplan import *  # noqa: F401,F403
    from _flowplan import __version__  # noqa: F401
