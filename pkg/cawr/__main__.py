# SPDX-License-Identifier: MIT
"""``python -m cawr``."""
import sys

from cawr.cli import main

sys.exit(main())
