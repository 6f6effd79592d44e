"""Image denoising with kernel regression in a steerable pyramid domain.

Modules: imagio (PGM I/O, patch tiling), xform (steerable pyramid and
orthonormal wavelet), stats (histograms, MI, KLD), kern (anisotropic
kernels), svr (adaptive epsilon-SVR solver), noisegen (degradation
simulators), denoise (pipeline and baselines), metrics (SSIM, RMSE),
calibration (offline profiles), cli (command line).
"""

__version__ = "0.1.0"
