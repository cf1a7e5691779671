"""Frame loading and color-space conversion into labeled 8-bit channel planes.

Frames are plain ``(H, W, 3)`` uint8 RGB arrays. Conversions produce a
:class:`ColorStack` of single-channel planes, all sharing the 8-bit domain so
one histogram spec applies to every channel.

Conventions (chosen here, not dictated by any standard the data carries):
  * Y'CbCr uses the BT.601 full-range matrix, the common 8-bit image form.
  * Hue is rescaled from [0, 360) degrees onto [0, 255].
  * Results are rounded half-up and clamped, for platform-stable output.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

HSV_LABELS = ("H", "S", "V")
YCBCR_LABELS = ("Y'", "Cb", "Cr")

# Canonical color-space order when several spaces are stacked.
SPACE_ORDER = ("hsv", "ycbcr")


class FrameError(ValueError):
    """Raised for unreadable, unsupported, or malformed frame input."""


@dataclass(frozen=True)
class ColorStack:
    """Ordered set of labeled single-channel planes for one frame.

    ``planes`` has shape (c, H, W) uint8; ``labels`` names each plane. The
    label sequence is canonical and identical for every frame of a video.
    """

    labels: tuple[str, ...]
    planes: np.ndarray

    def __post_init__(self):
        if self.planes.ndim != 3 or self.planes.shape[0] != len(self.labels):
            raise ValueError(
                f"plane array {self.planes.shape} does not match labels {self.labels}"
            )
        if self.planes.dtype != np.uint8:
            raise ValueError(f"planes must be uint8, got {self.planes.dtype}")

    @property
    def channel_count(self) -> int:
        return self.planes.shape[0]


def _check_frame(frame: np.ndarray) -> np.ndarray:
    frame = np.asarray(frame)
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise FrameError(f"expected (H, W, 3) RGB array, got shape {frame.shape}")
    if frame.shape[0] < 1 or frame.shape[1] < 1:
        raise FrameError("frame has a zero dimension")
    if frame.dtype != np.uint8:
        raise FrameError(f"expected uint8 frame, got {frame.dtype}")
    return frame


def _round_half_up(x: np.ndarray) -> np.ndarray:
    # np.round ties to even; histogramming wants a fixed tie direction.
    return np.floor(x + 0.5)


def _to_u8(x: np.ndarray) -> np.ndarray:
    return np.clip(_round_half_up(x), 0, 255).astype(np.uint8)


def load_frame(path) -> np.ndarray:
    """Decode a PNG/JPEG still into an (H, W, 3) uint8 RGB array.

    Alpha is discarded. Raises :class:`FrameError` for missing files,
    undecodable data, or zero-dimension images.
    """
    path = Path(path)
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB")
            arr = np.asarray(rgb, dtype=np.uint8)
    except FileNotFoundError:
        raise FrameError(f"frame file not found: {path}") from None
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise FrameError(f"cannot decode frame {path}: {exc}") from None
    if arr.ndim != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise FrameError(f"zero-dimension image: {path}")
    return arr


def rgb_to_hsv(frame: np.ndarray) -> ColorStack:
    """Convert an RGB frame to H, S, V planes, each rescaled to [0, 255]."""
    frame = _check_frame(frame)
    rgb = frame.astype(np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]

    v = np.max(rgb, axis=-1)
    c = v - np.min(rgb, axis=-1)

    with np.errstate(divide="ignore", invalid="ignore"):
        hue = np.select(
            [c == 0, v == r, v == g],
            [
                np.zeros_like(v),
                np.mod((g - b) / c, 6.0),
                (b - r) / c + 2.0,
            ],
            default=(r - g) / c + 4.0,
        ) * 60.0
        sat = np.where(v == 0, 0.0, 255.0 * c / np.where(v == 0, 1.0, v))

    h8 = _to_u8(hue / 360.0 * 255.0)
    s8 = _to_u8(sat)
    v8 = _to_u8(v)
    return ColorStack(HSV_LABELS, np.stack([h8, s8, v8]))


def rgb_to_ycbcr(frame: np.ndarray) -> ColorStack:
    """Convert an RGB frame to Y', Cb, Cr planes (BT.601 full-range)."""
    frame = _check_frame(frame)
    rgb = frame.astype(np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]

    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b
    return ColorStack(YCBCR_LABELS, np.stack([_to_u8(y), _to_u8(cb), _to_u8(cr)]))


def build_color_stack(frame: np.ndarray, spaces) -> ColorStack:
    """Stack the planes of the requested color spaces in canonical order.

    ``spaces`` is any iterable over {"hsv", "ycbcr"}; the output order is
    always HSV before Y'CbCr regardless of iteration order.
    """
    wanted = {s.lower() for s in spaces}
    unknown = wanted - set(SPACE_ORDER)
    if unknown:
        raise ValueError(f"unknown color space(s): {sorted(unknown)}")
    if not wanted:
        raise ValueError("at least one color space is required")

    labels: list[str] = []
    planes: list[np.ndarray] = []
    for space in SPACE_ORDER:
        if space not in wanted:
            continue
        stack = rgb_to_hsv(frame) if space == "hsv" else rgb_to_ycbcr(frame)
        labels.extend(stack.labels)
        planes.append(stack.planes)
    return ColorStack(tuple(labels), np.concatenate(planes))
