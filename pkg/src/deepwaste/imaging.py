"""Image decode, geometry, and the training augmentation pipeline.

Images are 8-bit interleaved RGB. All geometry here is deterministic;
augmentation randomness comes entirely from (policy.seed, draw_index),
so concurrent workers can process disjoint draws with no coordination
and a replayed epoch reproduces identical bytes.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError

_FORMATS = {"png": "PNG", "jpeg": "JPEG"}


@dataclass(frozen=True)
class ImageRGB8:
    """Interleaved 8-bit RGB pixels, row-major, shape (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=np.uint8)
        if p.ndim != 3 or p.shape[2] != 3 or p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError(f"expected (H, W, 3) uint8 pixels, got shape {p.shape}")
        object.__setattr__(self, "pixels", p)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def decode(data: bytes, format: str | None = None) -> ImageRGB8:
    """Decode a PNG or JPEG stream; alpha dropped, grayscale replicated."""
    try:
        with Image.open(io.BytesIO(data)) as im:
            detected = (im.format or "").lower()
            if detected not in _FORMATS:
                raise DecodeError(f"unsupported image format {detected!r}")
            if format is not None and detected != format.lower():
                raise DecodeError(f"stream is {detected}, expected {format}")
            im.load()
            rgb = im.convert("RGB")
        return ImageRGB8(np.asarray(rgb, dtype=np.uint8))
    except DecodeError:
        raise
    except (UnidentifiedImageError, OSError, ValueError, SyntaxError) as e:
        raise DecodeError(f"cannot decode image: {e}") from e


def encode(img: ImageRGB8, format: str = "png") -> bytes:
    if format.lower() not in _FORMATS:
        raise ValueError(f"unsupported image format {format!r}")
    buf = io.BytesIO()
    Image.fromarray(img.pixels, mode="RGB").save(buf, format=_FORMATS[format.lower()])
    return buf.getvalue()


def _axis_weights(n_out: int, n_in: int):
    """Half-pixel-center source coordinates for one resize axis."""
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * n_in / n_out - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_bilinear(img: ImageRGB8, out_w: int, out_h: int) -> ImageRGB8:
    """Bilinear resample with half-pixel center alignment."""
    if out_w < 1 or out_h < 1:
        raise ValueError(f"output size must be positive, got {out_w}x{out_h}")
    p = img.pixels.astype(np.float64)
    ylo, yhi, fy = _axis_weights(out_h, img.height)
    xlo, xhi, fx = _axis_weights(out_w, img.width)
    wy0, wy1 = (1.0 - fy)[:, None, None], fy[:, None, None]
    wx0, wx1 = (1.0 - fx)[None, :, None], fx[None, :, None]
    # four-term form, not two-pass separable: keeps rounding identical to
    # the scalar per-pixel formula at exact .5 boundaries
    out = (
        p[ylo][:, xlo] * wy0 * wx0
        + p[ylo][:, xhi] * wy0 * wx1
        + p[yhi][:, xlo] * wy1 * wx0
        + p[yhi][:, xhi] * wy1 * wx1
    )
    return ImageRGB8(np.floor(out + 0.5).clip(0, 255).astype(np.uint8))


def center_crop(img: ImageRGB8, w: int, h: int) -> ImageRGB8:
    if w > img.width or h > img.height or w < 1 or h < 1:
        raise ValueError(f"cannot crop {img.width}x{img.height} image to {w}x{h}")
    left = (img.width - w) // 2
    top = (img.height - h) // 2
    return ImageRGB8(img.pixels[top : top + h, left : left + w])


def rotate90(img: ImageRGB8, k: int) -> ImageRGB8:
    """k counterclockwise quarter turns; (x, y) -> (y, W-1-x) per turn."""
    if not 0 <= k <= 3:
        raise ValueError(f"k must be in 0..3, got {k}")
    return img if k == 0 else ImageRGB8(np.rot90(img.pixels, k, axes=(0, 1)).copy())


def flip_horizontal(img: ImageRGB8) -> ImageRGB8:
    return ImageRGB8(img.pixels[:, ::-1].copy())


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian, radius ceil(3*sigma)."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    r = math.ceil(3.0 * sigma)
    t = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(t * t) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(img: ImageRGB8, sigma: float) -> ImageRGB8:
    """Separable Gaussian blur, clamp-to-edge, rounded once at the end."""
    k = gaussian_kernel(sigma)
    r = (len(k) - 1) // 2
    acc = img.pixels.astype(np.float64)
    for axis in (0, 1):
        pad = [(0, 0)] * 3
        pad[axis] = (r, r)
        padded = np.pad(acc, pad, mode="edge")
        acc = np.zeros_like(acc)
        for i, w in enumerate(k):
            sl = [slice(None)] * 3
            sl[axis] = slice(i, i + acc.shape[axis])
            acc += w * padded[tuple(sl)]
    return ImageRGB8(np.floor(acc + 0.5).clip(0, 255).astype(np.uint8))


def to_input_tensor(img: ImageRGB8, spec) -> np.ndarray:
    """Resize to the model's input size, normalize, emit 1xCxHxW float32."""
    resized = resize_bilinear(img, spec.width, spec.height)
    x = resized.pixels.astype(np.float32) / np.float32(255.0)
    mean = np.asarray(spec.mean, dtype=np.float32)
    std = np.asarray(spec.std, dtype=np.float32)
    x = (x - mean) / std
    return np.ascontiguousarray(x.transpose(2, 0, 1)[None])


@dataclass(frozen=True)
class AugmentationPolicy:
    """Rotation -> flip -> crop -> resize -> blur, all keyed by seed."""

    rotations: tuple[int, ...] = (0, 90, 180, 270)
    flip_prob: float = 0.5
    crop_scale: tuple[float, float] = (0.8, 1.0)
    blur_prob: float = 0.3
    blur_sigma: tuple[float, float] = (0.5, 1.5)
    target: tuple[int, int] = (224, 224)  # (width, height) after crop
    seed: int = 0

    def __post_init__(self):
        rots = tuple(self.rotations)
        if not rots or not set(rots) <= {0, 90, 180, 270}:
            raise ValueError(f"rotations must be a non-empty subset of 0/90/180/270, got {rots}")
        object.__setattr__(self, "rotations", rots)
        for name in ("flip_prob", "blur_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        lo, hi = self.crop_scale
        if not 0.0 < lo <= hi <= 1.0:
            raise ValueError(f"crop_scale must satisfy 0 < lo <= hi <= 1, got {self.crop_scale}")
        slo, shi = self.blur_sigma
        if not 0.0 < slo <= shi:
            raise ValueError(f"blur_sigma must be positive and ordered, got {self.blur_sigma}")


def random_crop(img: ImageRGB8, policy: AugmentationPolicy, rng: np.random.Generator) -> ImageRGB8:
    """Square crop of scaled min-side length at a uniform position."""
    scale = float(rng.uniform(policy.crop_scale[0], policy.crop_scale[1]))
    side = max(1, round(scale * min(img.width, img.height)))
    left = int(rng.integers(0, img.width - side + 1))
    top = int(rng.integers(0, img.height - side + 1))
    return ImageRGB8(img.pixels[top : top + side, left : left + side])


def augment(img: ImageRGB8, policy: AugmentationPolicy, draw_index: int) -> ImageRGB8:
    """One augmentation draw; bitwise-reproducible for (policy.seed, draw_index)."""
    rng = np.random.default_rng([policy.seed, draw_index])
    # draw everything up front so the stream layout never depends on outcomes
    rot = int(rng.choice(np.asarray(policy.rotations)))
    do_flip = bool(rng.uniform() < policy.flip_prob)
    do_blur = bool(rng.uniform() < policy.blur_prob)
    sigma = float(rng.uniform(policy.blur_sigma[0], policy.blur_sigma[1]))

    out = rotate90(img, rot // 90)
    if do_flip:
        out = flip_horizontal(out)
    out = random_crop(out, policy, rng)
    out = resize_bilinear(out, policy.target[0], policy.target[1])
    if do_blur:
        out = gaussian_blur(out, sigma)
    return out
