"""Per-channel color and texture histograms, sample assembly, z-score
normalization, and the compact binary sample format.

Each frame becomes one vector: for every channel plane, a color histogram
(``color_buckets`` bins over the 8-bit range) followed by a histogram of the
rotation-invariant LBP codes (``lbp_buckets`` bins over [0, points+1]).
Histograms are stored as relative frequencies, which makes the vector
independent of video resolution. A sample is ``frames_per_sample``
consecutive frame vectors classified as one unit.

Wire format ("CTL1"): 4-byte magic, then frames, channels, color buckets,
LBP buckets, LBP points, LBP radius as little-endian uint16, then the sample
values quantized to 16-bit fixed point (value * 65535, rounded). At the
default configuration that is 1008 payload bytes per frame.
"""

from __future__ import annotations

import csv
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import pixel
from .lbp import LbpCodeMap, LbpParams, apply_riu2

logger = logging.getLogger("livetex.features")

WIRE_MAGIC = b"CTL1"
_HEADER = struct.Struct("<4s6H")


class WireFormatError(ValueError):
    """Malformed serialized sample: bad magic, truncation, or bad header."""


@dataclass(frozen=True)
class HistogramSpec:
    """Feature layout: histogram sizes, LBP parameters, and color spaces."""

    color_buckets: int = 50
    lbp_buckets: int = 34
    lbp: LbpParams = field(default_factory=lambda: LbpParams(points=32, radius=8.0))
    spaces: tuple[str, ...] = ("hsv", "ycbcr")

    def __post_init__(self):
        if self.color_buckets < 2 or self.lbp_buckets < 2:
            raise ValueError("histogram bucket counts must be >= 2")
        ordered = tuple(s for s in pixel.SPACE_ORDER if s in {x.lower() for x in self.spaces})
        if not ordered:
            raise ValueError(f"no usable color space in {self.spaces}")
        object.__setattr__(self, "spaces", ordered)

    @property
    def channel_count(self) -> int:
        return 3 * len(self.spaces)

    @property
    def feature_dim(self) -> int:
        return self.channel_count * (self.color_buckets + self.lbp_buckets)

    def to_dict(self) -> dict:
        return {
            "color_buckets": self.color_buckets,
            "lbp_buckets": self.lbp_buckets,
            "lbp_points": self.lbp.points,
            "lbp_radius": self.lbp.radius,
            "spaces": list(self.spaces),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HistogramSpec":
        return cls(
            color_buckets=d["color_buckets"],
            lbp_buckets=d["lbp_buckets"],
            lbp=LbpParams(points=d["lbp_points"], radius=d["lbp_radius"]),
            spaces=tuple(d["spaces"]),
        )


@dataclass
class SampleTensor:
    """A time series of frame vectors plus label and provenance."""

    frames: np.ndarray  # (n, d) float64
    label: str | None = None  # binary: bonafide / attack
    video_id: str | None = None
    frame_range: tuple[int, int] | None = None

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2:
            raise ValueError(f"sample must be 2-d (frames x dim), got {self.frames.shape}")


@dataclass(frozen=True)
class NormStats:
    """Per-dimension mean and standard deviation from the training split."""

    mu: np.ndarray
    sigma: np.ndarray
    fitted_on: str = ""

    def __post_init__(self):
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=np.float64))
        object.__setattr__(self, "sigma", np.asarray(self.sigma, dtype=np.float64))
        if self.mu.shape != self.sigma.shape or self.mu.ndim != 1:
            raise ValueError("mu and sigma must be 1-d vectors of equal length")
        if np.any(self.sigma <= 0):
            raise ValueError("sigma entries must be positive")


def color_histogram(plane: np.ndarray, buckets: int) -> np.ndarray:
    """Relative-frequency histogram of an 8-bit plane.

    Bucket b covers values [floor(256*b/m), floor(256*(b+1)/m)); the counts
    are divided by the pixel count, so the result sums to 1.
    """
    if buckets < 2:
        raise ValueError("need at least 2 buckets")
    plane = np.asarray(plane)
    if plane.size == 0:
        raise ValueError("empty plane")
    edges = (256 * np.arange(buckets + 1, dtype=np.int64)) // buckets
    lut = np.repeat(np.arange(buckets, dtype=np.int64), np.diff(edges))
    counts = np.bincount(lut[plane.ravel()], minlength=buckets)
    return counts / plane.size


def lbp_histogram(codes: LbpCodeMap, buckets: int) -> np.ndarray:
    """Relative-frequency histogram of LBP codes over the domain [0, P+1].

    The domain is split into ``buckets`` equal-width bins; with
    ``buckets == points + 2`` every code owns its own bin.
    """
    if buckets < 2:
        raise ValueError("need at least 2 buckets")
    values = codes.codes.ravel().astype(np.int64)
    if values.size == 0:
        raise ValueError("empty code map")
    domain = codes.points + 2
    if values.max() >= domain:
        raise ValueError(f"code {values.max()} outside [0, {domain - 1}]")
    counts = np.bincount((values * buckets) // domain, minlength=buckets)
    return counts / values.size


def frame_feature(stack: pixel.ColorStack, spec: HistogramSpec) -> np.ndarray:
    """Concatenate color and LBP histograms of every channel, in stack order."""
    if stack.channel_count != spec.channel_count:
        raise ValueError(
            f"stack has {stack.channel_count} channels, spec expects {spec.channel_count}"
        )
    parts = []
    for plane in stack.planes:
        parts.append(color_histogram(plane, spec.color_buckets))
        parts.append(lbp_histogram(apply_riu2(plane, spec.lbp), spec.lbp_buckets))
    return np.concatenate(parts)


def video_features(frame_paths, spec: HistogramSpec) -> np.ndarray:
    """Frame vectors for a whole frame sequence, shape (T, feature_dim)."""
    rows = [
        frame_feature(pixel.build_color_stack(pixel.load_frame(p), spec.spaces), spec)
        for p in frame_paths
    ]
    return np.stack(rows)


def assemble_samples(
    rows: np.ndarray,
    windows: list[tuple[int, int]],
    label: str | None,
    video_id: str | None,
) -> list[SampleTensor]:
    """Slice per-frame vectors into window samples (no copy semantics implied)."""
    return [
        SampleTensor(rows[start:end].copy(), label=label, video_id=video_id,
                     frame_range=(start, end))
        for start, end in windows
    ]


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

def fit_norm_stats(frame_rows: np.ndarray, fitted_on: str = "") -> NormStats:
    """Population mean/std per dimension; zero stds become 1 (constant
    features carry no signal either way)."""
    rows = np.asarray(frame_rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise ValueError("need at least two frame vectors to fit normalization")
    mu = rows.mean(axis=0)
    sigma = rows.std(axis=0)
    sigma = np.where(sigma == 0.0, 1.0, sigma)
    return NormStats(mu=mu, sigma=sigma, fitted_on=fitted_on)


def normalize(values: np.ndarray, stats: NormStats) -> np.ndarray:
    """Z-score: (v - mu) / sigma, broadcast over leading axes."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape[-1] != stats.mu.shape[0]:
        raise ValueError(
            f"feature dim {values.shape[-1]} != stats dim {stats.mu.shape[0]}"
        )
    return (values - stats.mu) / stats.sigma


# ---------------------------------------------------------------------------
# Wire format
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WireHeader:
    frames: int
    channels: int
    color_buckets: int
    lbp_buckets: int
    lbp_points: int
    lbp_radius: int

    @property
    def feature_dim(self) -> int:
        return self.channels * (self.color_buckets + self.lbp_buckets)


def serialize_sample(sample: SampleTensor, spec: HistogramSpec) -> bytes:
    """Pack an un-normalized sample (values in [0, 1]) into CTL1 bytes."""
    frames = sample.frames
    if frames.shape[1] != spec.feature_dim:
        raise ValueError(f"sample dim {frames.shape[1]} != spec dim {spec.feature_dim}")
    if frames.min() < 0.0 or frames.max() > 1.0:
        raise ValueError("wire format holds relative frequencies; values must be in [0, 1]")
    radius = spec.lbp.radius
    if radius != int(radius):
        raise ValueError("wire format stores the LBP radius in whole pixels")
    header = _HEADER.pack(
        WIRE_MAGIC,
        frames.shape[0],
        spec.channel_count,
        spec.color_buckets,
        spec.lbp_buckets,
        spec.lbp.points,
        int(radius),
    )
    quantized = np.floor(frames * 65535.0 + 0.5).astype("<u2")
    return header + quantized.tobytes()


def deserialize_sample(data: bytes) -> tuple[SampleTensor, WireHeader]:
    """Inverse of :func:`serialize_sample` up to the 1/65535 quantization."""
    if len(data) < _HEADER.size:
        raise WireFormatError(f"truncated header: {len(data)} bytes")
    magic, frames, channels, m_color, m_lbp, points, radius = _HEADER.unpack_from(data)
    if magic != WIRE_MAGIC:
        raise WireFormatError(f"bad magic {magic!r}")
    header = WireHeader(frames, channels, m_color, m_lbp, points, radius)
    expected = _HEADER.size + 2 * frames * header.feature_dim
    if len(data) != expected:
        raise WireFormatError(
            f"payload length {len(data)} != {expected} implied by header"
        )
    values = np.frombuffer(data, dtype="<u2", offset=_HEADER.size).astype(np.float64)
    values = (values / 65535.0).reshape(frames, header.feature_dim)
    return SampleTensor(values), header


def dump_text(sample: SampleTensor) -> str:
    """Debug dump: one frame vector per line, values space-separated."""
    return "\n".join(
        " ".join(repr(float(v)) for v in row) for row in sample.frames
    ) + "\n"


# ---------------------------------------------------------------------------
# On-disk feature cache (extract output, train/eval input)
# ---------------------------------------------------------------------------

INDEX_FIELDS = [
    "sample_id", "file", "video_id", "user_id", "label", "fine_label",
    "start", "end", "attrs",
]


@dataclass
class CachedSample:
    sample_id: str
    file: str
    video_id: str
    user_id: str
    label: str  # binary
    fine_label: str
    start: int
    end: int
    attrs: dict[str, str]


@dataclass
class FeatureCache:
    root: Path
    spec: HistogramSpec
    frames_per_sample: int
    stride: int
    dataset: ds.DatasetConfig
    samples: list[CachedSample]

    def load_sample(self, record: CachedSample) -> SampleTensor:
        tensor, _ = deserialize_sample((self.root / record.file).read_bytes())
        tensor.label = record.label
        tensor.video_id = record.video_id
        tensor.frame_range = (record.start, record.end)
        return tensor

    def select(self, split_name: str, protocol_name: str = "all") -> list[CachedSample]:
        """Samples whose user belongs to the split and whose attributes pass
        the protocol predicate for that split."""
        split = self.dataset.split(split_name)
        proto = self.dataset.protocol(protocol_name)
        return [
            s
            for s in self.samples
            if s.user_id in split.users and proto.matches(split_name, s.attrs)
        ]

    def load_matrix(self, records: list[CachedSample]) -> np.ndarray:
        """Stack samples into (N, n, d); empty input gives a (0, n, d) array."""
        if not records:
            return np.zeros((0, self.frames_per_sample, self.spec.feature_dim))
        return np.stack([self.load_sample(r).frames for r in records])


def write_feature_cache(
    out_dir,
    records: list[ds.VideoRecord],
    spec: HistogramSpec,
    frames_per_sample: int,
    stride: int,
    config: ds.DatasetConfig,
    source_manifest: str = "",
) -> Path:
    """Extract every video into serialized window samples under ``out_dir``.

    Layout: ``features.json`` (spec + dataset config), ``index.csv`` (one row
    per sample), ``samples/*.ctl``. Re-running overwrites sample files in
    place, so extraction is idempotent per input.
    """
    out = Path(out_dir)
    (out / "samples").mkdir(parents=True, exist_ok=True)

    index_rows = []
    for record in records:
        windows = ds.window_video(record, frames_per_sample, stride)
        if not windows:
            continue
        rows = video_features(record.frame_paths, spec)
        for sample in assemble_samples(rows, windows, record.binary_label, record.video_id):
            start, end = sample.frame_range
            sample_id = f"{record.video_id}_{start:05d}"
            rel = f"samples/{sample_id}.ctl"
            (out / rel).write_bytes(serialize_sample(sample, spec))
            index_rows.append(
                {
                    "sample_id": sample_id,
                    "file": rel,
                    "video_id": record.video_id,
                    "user_id": record.user_id,
                    "label": record.binary_label,
                    "fine_label": record.label,
                    "start": start,
                    "end": end,
                    "attrs": ds.format_attrs(record.attrs),
                }
            )
        logger.debug("extracted %s: %d samples", record.video_id, len(windows))

    with open(out / "index.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=INDEX_FIELDS)
        writer.writeheader()
        writer.writerows(index_rows)
    meta = {
        "frames_per_sample": frames_per_sample,
        "stride": stride,
        "spec": spec.to_dict(),
        "dataset": config.to_dict(),
        "source_manifest": str(source_manifest),
    }
    with open(out / "features.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def load_feature_cache(root) -> FeatureCache:
    root = Path(root)
    with open(root / "features.json", encoding="utf-8") as fh:
        meta = json.load(fh)
    samples = []
    with open(root / "index.csv", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            samples.append(
                CachedSample(
                    sample_id=row["sample_id"],
                    file=row["file"],
                    video_id=row["video_id"],
                    user_id=row["user_id"],
                    label=row["label"],
                    fine_label=row["fine_label"],
                    start=int(row["start"]),
                    end=int(row["end"]),
                    attrs=ds.parse_attrs(row["attrs"]),
                )
            )
    return FeatureCache(
        root=root,
        spec=HistogramSpec.from_dict(meta["spec"]),
        frames_per_sample=meta["frames_per_sample"],
        stride=meta["stride"],
        dataset=ds.DatasetConfig.from_dict(meta["dataset"]),
        samples=samples,
    )
