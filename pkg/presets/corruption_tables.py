"""
Corruption Severity Tables
Per-kind parameters for severities 1..5 on images scaled to [0, 1]. Index 0 holds
the identity parameters (severity 0 returns the input unchanged).
"""

# Additive gaussian noise: standard deviation
GAUSSIAN_NOISE = [0.0, 0.04, 0.06, 0.08, 0.09, 0.10]

# Poisson noise: photon count (None = no noise)
SHOT_NOISE = [None, 500, 250, 100, 75, 50]

# Salt-and-pepper: fraction of replaced values
IMPULSE_NOISE = [0.0, 0.01, 0.02, 0.03, 0.05, 0.07]

# Multiplicative gaussian noise: standard deviation
SPECKLE_NOISE = [0.0, 0.06, 0.10, 0.12, 0.16, 0.20]

# Gaussian blur: sigma in pixels
GAUSSIAN_BLUR = [0.0, 0.4, 0.6, 0.7, 0.8, 1.0]

# Defocus: (disk radius, anti-alias sigma)
DEFOCUS_BLUR = [(0.0, 0.0), (0.3, 0.4), (0.4, 0.5), (0.5, 0.6), (1.0, 0.2), (1.5, 0.1)]

# Motion: (line length in pixels, line thickness sigma)
MOTION_BLUR = [(0, 0.0), (6, 1.0), (6, 1.5), (6, 2.0), (8, 2.0), (9, 2.5)]

# Glass: (sigma, max displacement, iterations)
GLASS_BLUR = [(0.0, 0, 0), (0.05, 1, 1), (0.25, 1, 1), (0.4, 1, 1), (0.25, 1, 2), (0.4, 1, 2)]

# Additive brightness offset
BRIGHTNESS = [0.0, 0.05, 0.10, 0.15, 0.20, 0.30]

# Contrast scale about the per-channel mean
CONTRAST = [1.0, 0.75, 0.5, 0.4, 0.3, 0.15]

# Saturation: (scale, offset) applied in HSV space
SATURATE = [(1.0, 0.0), (0.3, 0.0), (0.1, 0.0), (1.5, 0.0), (2.0, 0.1), (2.5, 0.2)]

SEVERITY_TABLES = {
    "gaussian_noise": GAUSSIAN_NOISE,
    "shot_noise": SHOT_NOISE,
    "impulse_noise": IMPULSE_NOISE,
    "speckle_noise": SPECKLE_NOISE,
    "gaussian_blur": GAUSSIAN_BLUR,
    "defocus_blur": DEFOCUS_BLUR,
    "motion_blur": MOTION_BLUR,
    "glass_blur": GLASS_BLUR,
    "brightness": BRIGHTNESS,
    "contrast": CONTRAST,
    "saturate": SATURATE,
}
