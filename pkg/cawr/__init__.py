# SPDX-License-Identifier: MIT
"""Corruption-averse advantage-weighted regression toolkit."""

__version__ = "0.1.0"
