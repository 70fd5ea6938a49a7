"""Block compressed sensing toolkit.

A learned sampling/reconstruction codec and the classical smoothed projected
Landweber pipeline over the same block conventions, plus PSNR/SSIM evaluation.
"""

__version__ = "0.1.0"
