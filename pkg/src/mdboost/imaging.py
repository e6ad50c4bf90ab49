"""Pixel-level primitives: decode, grayscale, Canny edge metric, color
variance, and face cropping with bilinear resizing.

Images are 8-bit, row-major, channel-interleaved, 1 or 3 channels. All
intermediate filter math runs in float64; only storage is uint8.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError

GRAY_WEIGHTS = (0.299, 0.587, 0.114)  # ITU-R 601 luma


@dataclass
class Image:
    width: int
    height: int
    channels: int
    pixels: np.ndarray  # uint8, shape (height, width, channels)

    def __post_init__(self):
        if self.channels not in (1, 3):
            raise DomainError(f"channels must be 1 or 3, got {self.channels}")
        if self.width <= 0 or self.height <= 0:
            raise DomainError("image dimensions must be positive")
        self.pixels = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        expected = (self.height, self.width, self.channels)
        if self.pixels.shape != expected:
            raise ShapeError(f"pixel array shape {self.pixels.shape} != {expected}")


def image_from_array(arr) -> Image:
    arr = np.asarray(arr)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ShapeError(f"expected 2-D or 3-D array, got ndim={arr.ndim}")
    h, w, c = arr.shape
    return Image(width=w, height=h, channels=c, pixels=arr.astype(np.uint8))


def load_image(path) -> Image:
    from PIL import Image as PILImage

    with PILImage.open(path) as im:
        if im.mode == "L":
            arr = np.asarray(im)
        else:
            arr = np.asarray(im.convert("RGB"))
    return image_from_array(arr)


def save_image(image: Image, path) -> None:
    from PIL import Image as PILImage

    arr = image.pixels[:, :, 0] if image.channels == 1 else image.pixels
    PILImage.fromarray(arr).save(path)


def to_gray(image: Image) -> np.ndarray:
    """Float64 luma plane on the 0-255 scale."""
    px = image.pixels.astype(np.float64)
    if image.channels == 1:
        return px[:, :, 0]
    r, g, b = px[:, :, 0], px[:, :, 1], px[:, :, 2]
    return GRAY_WEIGHTS[0] * r + GRAY_WEIGHTS[1] * g + GRAY_WEIGHTS[2] * b


# --- gaussian smoothing -----------------------------------------------------


def gaussian_kernel1d(sigma: float, radius: int | None = None) -> np.ndarray:
    if sigma <= 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    if radius is None:
        radius = max(1, int(np.ceil(3.0 * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def convolve_separable(plane: np.ndarray, kernel: np.ndarray, mode: str = "reflect") -> np.ndarray:
    """Same-size separable convolution of a 2-D plane; symmetric kernel."""
    radius = len(kernel) // 2
    padded = np.pad(plane, radius, mode=mode)
    # Rows then columns; the kernel is symmetric so correlation == convolution.
    tmp = np.zeros_like(padded)
    for i, kv in enumerate(kernel):
        tmp += kv * np.roll(padded, radius - i, axis=1)
    out = np.zeros_like(padded)
    for i, kv in enumerate(kernel):
        out += kv * np.roll(tmp, radius - i, axis=0)
    return out[radius:-radius, radius:-radius]


def gaussian_smooth(plane: np.ndarray, sigma: float, mode: str = "reflect") -> np.ndarray:
    return convolve_separable(np.asarray(plane, dtype=np.float64), gaussian_kernel1d(sigma), mode)


# --- canny ------------------------------------------------------------------

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = np.array([[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]])


def _conv3(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    padded = np.pad(plane, 1, mode="reflect")
    out = np.zeros_like(plane)
    for dy in range(3):
        for dx in range(3):
            out += kernel[dy, dx] * padded[dy : dy + plane.shape[0], dx : dx + plane.shape[1]]
    return out


def sobel_gradients(plane: np.ndarray):
    gx = _conv3(plane, SOBEL_X)
    gy = _conv3(plane, SOBEL_Y)
    return gx, gy, np.hypot(gx, gy)


def _nms(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Suppress pixels not maximal along their quantized gradient direction.

    Directions quantize to 0/45/90/135 degrees; a pixel survives when its
    magnitude is >= both neighbors along the direction (>= so symmetric
    2-pixel ridges, e.g. an ideal step edge, survive).
    """
    h, w = mag.shape
    angle = np.degrees(np.arctan2(gy, gx)) % 180.0
    padded = np.pad(mag, 1, mode="constant")
    center = padded[1 : h + 1, 1 : w + 1]

    def shifted(dy, dx):
        return padded[1 + dy : h + 1 + dy, 1 + dx : w + 1 + dx]

    sector = np.zeros((h, w), dtype=np.int8)
    sector[(angle >= 22.5) & (angle < 67.5)] = 1
    sector[(angle >= 67.5) & (angle < 112.5)] = 2
    sector[(angle >= 112.5) & (angle < 157.5)] = 3

    neighbors = {
        0: ((0, 1), (0, -1)),  # horizontal gradient: compare left/right
        1: ((-1, 1), (1, -1)),  # 45 degrees
        2: ((1, 0), (-1, 0)),  # vertical gradient: compare up/down
        3: ((1, 1), (-1, -1)),  # 135 degrees
    }
    keep = np.zeros((h, w), dtype=bool)
    for s, ((dy1, dx1), (dy2, dx2)) in neighbors.items():
        in_s = sector == s
        keep |= in_s & (center >= shifted(dy1, dx1)) & (center >= shifted(dy2, dx2))
    return np.where(keep, mag, 0.0)


_NEIGH8 = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def _hysteresis(mag: np.ndarray, low: float, high: float) -> np.ndarray:
    """Keep strong pixels (>= high) and weak ones (>= low) 8-connected to them."""
    strong = mag >= high
    weak = mag >= low
    h, w = mag.shape
    edge = strong.copy()
    queue = deque(zip(*np.nonzero(strong)))
    while queue:
        y, x = queue.popleft()
        for dy, dx in _NEIGH8:
            ny, nx = y + dy, x + dx
            if 0 <= ny < h and 0 <= nx < w and weak[ny, nx] and not edge[ny, nx]:
                edge[ny, nx] = True
                queue.append((ny, nx))
    return edge


def canny_edges(plane: np.ndarray, sigma: float = 1.4, low: float = 50.0, high: float = 150.0) -> np.ndarray:
    """Boolean edge map of a float grayscale plane."""
    smoothed = gaussian_smooth(plane, sigma)
    gx, gy, mag = sobel_gradients(smoothed)
    return _hysteresis(_nms(mag, gx, gy), low, high)


def count_components(mask: np.ndarray, connectivity: int = 8) -> int:
    """Number of connected True-components; 8- or 4-connectivity."""
    if connectivity == 8:
        neigh = _NEIGH8
    elif connectivity == 4:
        neigh = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    else:
        raise DomainError(f"connectivity must be 4 or 8, got {connectivity}")
    h, w = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    count = 0
    for sy, sx in zip(*np.nonzero(mask)):
        if seen[sy, sx]:
            continue
        count += 1
        queue = deque([(sy, sx)])
        seen[sy, sx] = True
        while queue:
            y, x = queue.popleft()
            for dy, dx in neigh:
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not seen[ny, nx]:
                    seen[ny, nx] = True
                    queue.append((ny, nx))
    return count


EDGE_METRICS = ("components", "pixel_fraction")


def canny_edge_metric(
    image: Image,
    sigma: float = 1.4,
    low: float = 50.0,
    high: float = 150.0,
    metric: str = "components",
) -> float:
    """Edge metric: 8-connected edge-component count, or edge-pixel fraction.

    The component count reads "number of edges" literally; the fraction
    variant is kept selectable since the threshold unit is ambiguous.
    """
    if image.width < 5 or image.height < 5:
        raise DomainError(f"image {image.width}x{image.height} is smaller than 5x5")
    if metric not in EDGE_METRICS:
        raise DomainError(f"unknown edge metric {metric!r}")
    edges = canny_edges(to_gray(image), sigma=sigma, low=low, high=high)
    if metric == "components":
        return float(count_components(edges, connectivity=8))
    return float(np.count_nonzero(edges)) / edges.size


# --- color variance ---------------------------------------------------------


def color_variance(image: Image, pooled: bool = False) -> float:
    """Mean over channels of the per-channel population variance (0-255).

    pooled=True instead takes one variance over all pixels of all channels.
    Grayscale input is a domain error; callers decide how to route it.
    """
    if image.channels != 3:
        raise DomainError("color_variance requires a 3-channel image")
    px = image.pixels.astype(np.float64)
    if pooled:
        return float(px.var())
    return float(np.mean([px[:, :, c].var() for c in range(3)]))


# --- cropping ---------------------------------------------------------------


def bilinear_resize(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize an (h, w) or (h, w, c) float array with half-pixel centers."""
    arr = np.asarray(arr, dtype=np.float64)
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[:, :, None]
    h, w, c = arr.shape
    if (h, w) == (out_h, out_w):
        out = arr.copy()
        return out[:, :, 0] if squeeze else out

    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = np.clip(ys - y0, 0.0, 1.0)[:, None, None]
    fx = np.clip(xs - x0, 0.0, 1.0)[None, :, None]

    top = arr[y0][:, x0] * (1 - fx) + arr[y0][:, x1] * fx
    bot = arr[y1][:, x0] * (1 - fx) + arr[y1][:, x1] * fx
    out = top * (1 - fy) + bot * fy
    return out[:, :, 0] if squeeze else out


def crop_face(image: Image, face_box, crop_size: int = 256, min_face_px: int = 64) -> Image | None:
    """Square-expand the box, clamp to the image, resize to crop_size.

    Returns None when the face is too small (max side < min_face_px).
    The box is (x, y, w, h) in pixels.
    """
    x, y, w, h = (float(v) for v in face_box)
    if w <= 0 or h <= 0:
        raise DomainError(f"degenerate face box {face_box}")
    if max(w, h) < min_face_px:
        return None
    side = max(w, h)
    cx, cy = x + w / 2.0, y + h / 2.0
    x0 = int(round(cx - side / 2.0))
    y0 = int(round(cy - side / 2.0))
    x1 = x0 + int(round(side))
    y1 = y0 + int(round(side))
    x0, x1 = max(0, x0), min(image.width, x1)
    y0, y1 = max(0, y0), min(image.height, y1)
    if x1 <= x0 or y1 <= y0:
        raise DomainError(f"face box {face_box} lies outside the image")
    patch = image.pixels[y0:y1, x0:x1].astype(np.float64)
    resized = bilinear_resize(patch, crop_size, crop_size)
    out = np.clip(np.rint(resized), 0, 255).astype(np.uint8)
    return Image(width=crop_size, height=crop_size, channels=image.channels, pixels=out)
