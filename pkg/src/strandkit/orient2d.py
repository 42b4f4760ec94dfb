"""2D strand orientation and confidence maps from a Gabor filter bank.

Each kernel is a real, even-symmetric Gabor whose carrier runs along the
bank angle; a kernel therefore responds maximally to stripes *perpendicular*
to its carrier. The extracted orientation is the stripe (strand) direction,
stored as unit 2D vectors in the canonical y >= 0 half-space (mod pi).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .errors import ConfigError
from .geom import canonical_half_space_2d


@dataclass
class GaborBank:
    num_orientations: int
    wavelength: float
    sigma: float
    kernel_size: int
    kernels: np.ndarray = field(repr=False)      # (n, k, k)
    carrier_angles: np.ndarray = field(repr=False)  # (n,) radians in [0, pi)


@dataclass
class OrientationField2D:
    O: np.ndarray  # (H, W, 2) unit vectors where C > 0
    C: np.ndarray  # (H, W) in [0, 1]


def _gabor_kernel(size, wavelength, sigma, carrier_angle):
    half = size // 2
    y, x = np.mgrid[-half : half + 1, -half : half + 1].astype(np.float64)
    xr = x * np.cos(carrier_angle) + y * np.sin(carrier_angle)
    yr = -x * np.sin(carrier_angle) + y * np.cos(carrier_angle)
    env = np.exp(-0.5 * (xr**2 + yr**2) / sigma**2)
    g = env * np.cos(2 * np.pi * xr / wavelength)
    # remove the DC component while keeping the kernel localized
    g -= env * (g.sum() / env.sum())
    return g


def build_bank(num_orientations=32, wavelength=4.0, sigma=2.0, kernel_size=21):
    """Build a bank of zero-DC even Gabor kernels at uniform angles in [0, pi)."""
    if kernel_size < 5 or kernel_size % 2 == 0:
        raise ConfigError(f"kernel_size must be odd and >= 5, got {kernel_size}")
    if num_orientations < 4:
        raise ConfigError(f"num_orientations must be >= 4, got {num_orientations}")
    if wavelength <= 0 or sigma <= 0:
        raise ConfigError("wavelength and sigma must be positive")
    angles = np.arange(num_orientations) * np.pi / num_orientations
    kernels = np.stack([_gabor_kernel(kernel_size, wavelength, sigma, a) for a in angles])
    return GaborBank(
        num_orientations=num_orientations,
        wavelength=wavelength,
        sigma=sigma,
        kernel_size=kernel_size,
        kernels=kernels,
        carrier_angles=angles,
    )


def extract(image, bank):
    """Per-pixel orientation (argmax |response|) and peakedness confidence."""
    image = np.asarray(image, dtype=np.float64)
    if min(image.shape) < bank.kernel_size:
        raise ConfigError("image smaller than the filter kernel")
    resp = np.stack(
        [np.abs(fftconvolve(image, k, mode="same")) for k in bank.kernels]
    )  # (n, H, W)
    best = np.argmax(resp, axis=0)
    peak = np.max(resp, axis=0)
    mean = np.mean(resp, axis=0)

    eps = 1e-9
    conf = (peak - mean) / (peak + eps)
    gmax = peak.max()
    if gmax > eps:
        conf = conf * (peak / gmax)
    conf = np.clip(conf, 0.0, 1.0)

    # stripe direction is perpendicular to the winning carrier
    theta = np.mod(bank.carrier_angles[best] + np.pi / 2, np.pi)
    O = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    O = canonical_half_space_2d(O)
    return OrientationField2D(O=O, C=conf)
