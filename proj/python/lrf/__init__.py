# Copyright Contributors to the lrf project
# SPDX-License-Identifier: Apache-2.0
"""Latent radiance fields: Gaussian splatting in VAE latent space."""

from ._core import *  # noqa: F401,F403
from ._core import LrfError

__version__ = "0.1.0"
