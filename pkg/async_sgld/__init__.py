# Copyright 2026 async-sgld contributors.
# See LICENSE file for licensing details.

"""Delayed and asynchronous stochastic gradient Langevin dynamics."""

__version__ = "0.1.0"
