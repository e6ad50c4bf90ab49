"""Frequency-domain analysis of high-pass-filtered images.

The pipeline is: grayscale -> subtract a Gaussian blur (unsharp residual)
-> 2-D DFT -> log(1 + |F|) -> shift zero frequency to the center -> average
over an image group. The blur wraps at the borders so the residual is
exactly zero-mean, which keeps the DC bin of the spectrum at zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError
from .imaging import Image, gaussian_kernel1d, to_gray


@dataclass
class Spectrum:
    grid: np.ndarray  # (N, N) log-magnitudes, zero frequency at the center

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=np.float64)
        if self.grid.ndim != 2 or self.grid.shape[0] != self.grid.shape[1]:
            raise ShapeError(f"spectrum must be square, got {self.grid.shape}")
        if not np.all(np.isfinite(self.grid)):
            raise DomainError("spectrum contains non-finite values")

    @property
    def size(self) -> int:
        return self.grid.shape[0]


def _blur_wrap(plane: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with wrap-around (circular) boundaries.

    Each pass accumulates kv * (shifted - plane) on top of the plane, which
    is algebraically the plain weighted sum but keeps constant planes
    bit-exact (the kernel's float sum is 1 only up to rounding), so the
    high-pass residual of a constant image is identically zero.
    """
    kernel = gaussian_kernel1d(sigma, radius=int(np.ceil(4.0 * sigma)))
    radius = len(kernel) // 2
    out = plane.copy()
    for i, kv in enumerate(kernel):
        out += kv * (np.roll(plane, radius - i, axis=1) - plane)
    final = out.copy()
    for i, kv in enumerate(kernel):
        final += kv * (np.roll(out, radius - i, axis=0) - out)
    return final


def high_pass(image, sigma: float = 3.0) -> np.ndarray:
    """Image minus its Gaussian blur, as a float plane.

    Accepts an Image (converted to luma first) or a 2-D float array. The
    circular blur preserves the mean exactly, so the residual mean is 0.
    """
    plane = to_gray(image) if isinstance(image, Image) else np.asarray(image, dtype=np.float64)
    if plane.ndim != 2:
        raise ShapeError(f"expected a 2-D plane, got shape {plane.shape}")
    return plane - _blur_wrap(plane, sigma)


def dft2_naive(plane: np.ndarray) -> np.ndarray:
    """Direct O(N^4) double-sum DFT; the reference path for any square N."""
    plane = np.asarray(plane, dtype=np.complex128)
    n = plane.shape[0]
    if plane.shape != (n, n):
        raise DomainError(f"dft2 needs a square input, got {plane.shape}")
    k = np.arange(n)
    twiddle = np.exp(-2j * np.pi * np.outer(k, k) / n)  # (n, n) roots of unity
    return twiddle @ plane @ twiddle


def dft2(plane: np.ndarray) -> np.ndarray:
    """Unnormalized forward 2-D DFT of a square plane.

    Power-of-two sizes take the FFT fast path; every other size falls back
    to the direct reference transform.
    """
    plane = np.asarray(plane)
    if plane.ndim != 2 or plane.shape[0] != plane.shape[1]:
        raise DomainError(f"dft2 needs a square input, got {plane.shape}")
    n = plane.shape[0]
    if n & (n - 1) == 0:
        return np.fft.fft2(plane)
    return dft2_naive(plane)


def _center_crop(plane: np.ndarray, size: int) -> np.ndarray:
    h, w = plane.shape
    top = (h - size) // 2
    left = (w - size) // 2
    return plane[top : top + size, left : left + size]


def spectrum_of(image, sigma: float = 3.0) -> np.ndarray:
    """log(1 + |DFT(high_pass)|) with zero frequency shifted to the center.

    Non-square input is center-cropped to its largest square before
    filtering so the crop commutes with group averaging.
    """
    plane = to_gray(image) if isinstance(image, Image) else np.asarray(image, dtype=np.float64)
    plane = _center_crop(plane, min(plane.shape))
    residual = high_pass(plane, sigma)
    return np.fft.fftshift(np.log1p(np.abs(dft2(residual))))


def average_spectrum(images: list, sigma: float = 3.0) -> Spectrum:
    """Mean spectrum over a group of images.

    Images are center-cropped to the largest common square first so every
    term has the same shape.
    """
    if not images:
        raise DomainError("average_spectrum needs at least one image")
    planes = [
        to_gray(img) if isinstance(img, Image) else np.asarray(img, dtype=np.float64)
        for img in images
    ]
    n = min(min(p.shape) for p in planes)
    grids = [spectrum_of(_center_crop(p, n), sigma) for p in planes]
    return Spectrum(grid=np.mean(grids, axis=0))


def group_spectra(manifest, image_root, group_by: str = "source-label", sigma: float = 3.0):
    """Average spectrum per record group; returns {group name: Spectrum}."""
    from .imaging import load_image

    def group_key(r):
        label = "real" if r.label == 0 else "fake"
        if group_by == "source":
            return r.source
        if group_by == "label":
            return label
        if group_by == "source-label":
            return f"{r.source}-{label}"
        raise DomainError(f"unknown group-by {group_by!r}")

    groups: dict[str, list] = {}
    for r in manifest.records:
        groups.setdefault(group_key(r), []).append(load_image(f"{image_root}/{r.path}"))
    return {name: average_spectrum(imgs, sigma) for name, imgs in sorted(groups.items())}


def spectrum_to_image(spectrum: Spectrum) -> Image:
    """Normalize the grid to 0-255 for a portable grayscale rendering."""
    g = spectrum.grid
    span = g.max() - g.min()
    if span <= 0:
        scaled = np.zeros_like(g)
    else:
        scaled = (g - g.min()) / span * 255.0
    pixels = np.rint(scaled).astype(np.uint8)[:, :, None]
    return Image(width=g.shape[1], height=g.shape[0], channels=1, pixels=pixels)
