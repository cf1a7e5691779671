"""Manifest-driven dataset ingestion, split/protocol filtering, windowing,
and a deterministic synthetic generator for self-contained runs.

A dataset on disk is a manifest CSV plus frame directories:

    video_id,user_id,label,attrs,frame_dir

``attrs`` is ``key=value`` pairs joined by ``;``. Frame files inside
``frame_dir`` (resolved relative to the manifest) sorted lexicographically
define temporal order. Splits and protocol predicates live in a JSON config
next to the manifest.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

logger = logging.getLogger("livetex.dataset")

BONAFIDE = "bonafide"
ATTACK = "attack"
FINE_LABELS = ("bonafide", "print-attack", "display-attack")
SPLIT_NAMES = ("training", "validation", "testing")


class ManifestError(ValueError):
    """Malformed manifest or dataset config, with row position where known."""


@dataclass
class VideoRecord:
    video_id: str
    user_id: str
    label: str  # one of FINE_LABELS
    attrs: dict[str, str]
    frame_paths: list[Path]

    @property
    def binary_label(self) -> str:
        return BONAFIDE if self.label == BONAFIDE else ATTACK


@dataclass(frozen=True)
class SplitSpec:
    name: str
    users: frozenset[str]


@dataclass(frozen=True)
class ProtocolFilter:
    """Per-split attribute whitelist: a video matches a split when every
    listed attribute is present and takes one of the allowed values."""

    name: str
    rules: dict = field(default_factory=dict)  # split -> {attr: [values]}

    def matches(self, split_name: str, attrs: dict[str, str]) -> bool:
        for attr, allowed in self.rules.get(split_name, {}).items():
            if attrs.get(attr) not in allowed:
                return False
        return True


@dataclass
class DatasetConfig:
    name: str
    splits: dict[str, list[str]]  # split name -> user ids
    protocols: dict[str, dict]  # protocol name -> rules

    def __post_init__(self):
        seen: dict[str, str] = {}
        for split, users in self.splits.items():
            for user in users:
                if user in seen:
                    raise ManifestError(
                        f"user {user!r} appears in splits {seen[user]!r} and {split!r}; "
                        "split user sets must be disjoint"
                    )
                seen[user] = split

    def split(self, name: str) -> SplitSpec:
        if name not in self.splits:
            raise KeyError(f"unknown split {name!r}; have {sorted(self.splits)}")
        return SplitSpec(name, frozenset(self.splits[name]))

    def protocol(self, name: str) -> ProtocolFilter:
        if name not in self.protocols:
            raise KeyError(f"unknown protocol {name!r}; have {sorted(self.protocols)}")
        return ProtocolFilter(name, self.protocols[name])

    def to_dict(self) -> dict:
        return {"name": self.name, "splits": self.splits, "protocols": self.protocols}

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetConfig":
        return cls(name=d["name"], splits=d["splits"], protocols=d.get("protocols", {"all": {}}))


def load_dataset_config(path) -> DatasetConfig:
    with open(path, encoding="utf-8") as fh:
        return DatasetConfig.from_dict(json.load(fh))


def save_dataset_config(config: DatasetConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def parse_attrs(text: str) -> dict[str, str]:
    attrs: dict[str, str] = {}
    if not text.strip():
        return attrs
    for part in text.split(";"):
        if "=" not in part:
            raise ValueError(f"attribute {part!r} is not key=value")
        key, value = part.split("=", 1)
        attrs[key.strip()] = value.strip()
    return attrs


def format_attrs(attrs: dict[str, str]) -> str:
    return ";".join(f"{k}={v}" for k, v in sorted(attrs.items()))


MANIFEST_FIELDS = ["video_id", "user_id", "label", "attrs", "frame_dir"]


def parse_manifest(path) -> list[VideoRecord]:
    """Read a manifest CSV into validated records.

    Every row either yields a record or raises :class:`ManifestError`
    naming the offending line.
    """
    path = Path(path)
    records: list[VideoRecord] = []
    seen_ids: set[str] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != MANIFEST_FIELDS:
            raise ManifestError(
                f"{path}: header {reader.fieldnames} != expected {MANIFEST_FIELDS}"
            )
        for lineno, row in enumerate(reader, start=2):
            where = f"{path}:{lineno}"
            if any(row.get(k) is None for k in MANIFEST_FIELDS):
                raise ManifestError(f"{where}: wrong column count")
            video_id = row["video_id"].strip()
            if video_id in seen_ids:
                raise ManifestError(f"{where}: duplicate video_id {video_id!r}")
            label = row["label"].strip()
            if label not in FINE_LABELS:
                raise ManifestError(
                    f"{where}: unsupported label {label!r} (expected one of {FINE_LABELS})"
                )
            try:
                attrs = parse_attrs(row["attrs"])
            except ValueError as exc:
                raise ManifestError(f"{where}: {exc}") from None
            frame_dir = (path.parent / row["frame_dir"]).resolve()
            if not frame_dir.is_dir():
                raise ManifestError(f"{where}: frame directory not found: {frame_dir}")
            frames = sorted(p for p in frame_dir.iterdir() if p.is_file())
            if not frames:
                raise ManifestError(f"{where}: no frame files in {frame_dir}")
            seen_ids.add(video_id)
            records.append(VideoRecord(video_id, row["user_id"].strip(), label, attrs, frames))
    return records


def window_video(video: VideoRecord, frames_per_sample: int, stride: int) -> list[tuple[int, int]]:
    """Enumerate [start, start+n) frame windows; the tail remainder is dropped.

    Videos shorter than one window yield nothing (logged, not an error).
    """
    if frames_per_sample < 1 or stride < 1:
        raise ValueError("frames_per_sample and stride must be >= 1")
    total = len(video.frame_paths)
    windows = []
    start = 0
    while start + frames_per_sample <= total:
        windows.append((start, start + frames_per_sample))
        start += stride
    if not windows:
        logger.warning(
            "video %s has %d frames, shorter than one %d-frame window; skipped",
            video.video_id, total, frames_per_sample,
        )
    return windows


def apply_protocol(
    records: list[VideoRecord], protocol: ProtocolFilter, split: SplitSpec
) -> list[VideoRecord]:
    """Keep records whose user belongs to the split and whose attributes
    satisfy the protocol predicate for that split."""
    kept = [
        r
        for r in records
        if r.user_id in split.users and protocol.matches(split.name, r.attrs)
    ]
    if not kept:
        logger.warning(
            "protocol %r leaves no videos in split %r", protocol.name, split.name
        )
    return kept


# ---------------------------------------------------------------------------
# Synthetic dataset generator
# ---------------------------------------------------------------------------

_LUMA = np.array([0.299, 0.587, 0.114])


def _base_field(rng: np.random.Generator, size: int) -> np.ndarray:
    """Smooth low-frequency color field shared by all frames of one video."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    base = np.empty((size, size, 3))
    for ch in range(3):
        v = np.full((size, size), 128.0 + rng.uniform(-20.0, 20.0))
        for _ in range(3):
            amp = rng.uniform(12.0, 30.0)
            wavelength = rng.uniform(48.0, 128.0)
            theta = rng.uniform(0.0, 2.0 * np.pi)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            fx, fy = np.cos(theta) / wavelength, np.sin(theta) / wavelength
            v = v + amp * np.sin(2.0 * np.pi * (fx * xx + fy * yy) + phase)
        base[..., ch] = v
    return base


def _synth_frame(
    label: str, base: np.ndarray, t: int, rng: np.random.Generator, grid_pitch: float
) -> np.ndarray:
    size = base.shape[0]
    if label == "bonafide":
        # live skin: fine high-frequency texture, re-rolled every frame
        img = base + rng.normal(0.0, 14.0, base.shape) + rng.uniform(-3.0, 3.0)
    elif label == "print-attack":
        # printout: texture washed out by the print/blur, colors desaturated
        img = base + rng.normal(0.0, 6.0, base.shape)
        img = gaussian_filter(img, sigma=(2.5, 2.5, 0.0))
        luma = img @ _LUMA
        img = luma[..., None] + 0.45 * (img - luma[..., None])
        img = img + rng.uniform(-2.0, 2.0)
    elif label == "display-attack":
        # screen replay: moire-like pixel grid, lifted black level
        yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
        drift = 0.4 * t
        moire = 9.0 * (
            np.sin(2.0 * np.pi * xx / grid_pitch + drift)
            + np.sin(2.0 * np.pi * yy / grid_pitch + 1.3 + drift)
        )
        img = 30.0 + base * (225.0 / 255.0) + moire[..., None]
        img = img + rng.normal(0.0, 3.0, base.shape)
    else:
        raise ValueError(f"unknown label {label!r}")
    return np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)


def _default_splits(users: list[str]) -> dict[str, list[str]]:
    n = len(users)
    n_val = max(1, n // 5) if n >= 3 else 0
    n_test = max(1, n // 5) if n >= 2 else 0
    n_train = n - n_val - n_test
    return {
        "training": users[:n_train],
        "validation": users[n_train : n_train + n_val],
        "testing": users[n_train + n_val :],
    }


def synth_generate(
    out_dir,
    seed: int = 7,
    users: int = 20,
    live_videos: int = 2,
    attack_videos: int = 4,
    frames_per_video: int = 64,
    size: int = 128,
    name: str | None = None,
) -> tuple[Path, Path]:
    """Write a synthetic frame-directory dataset plus manifest and config.

    Deterministic under ``seed``: every video draws from its own generator
    seeded with ``seed ^ video_index``, so output is reproducible no matter
    how generation is scheduled. Returns (manifest_path, config_path).
    """
    if min(users, live_videos + attack_videos, frames_per_video, size) < 1:
        raise ValueError("all synthetic dataset counts must be >= 1")
    out = Path(out_dir)
    frames_root = out / "frames"
    frames_root.mkdir(parents=True, exist_ok=True)

    rows = []
    video_index = 0
    user_ids = [f"u{i + 1:02d}" for i in range(users)]
    for u, user_id in enumerate(user_ids):
        kinds = ["bonafide"] * live_videos
        kinds += ["print-attack" if k % 2 == 0 else "display-attack" for k in range(attack_videos)]
        for j, label in enumerate(kinds):
            video_id = f"{user_id}v{j:02d}"
            rng = np.random.default_rng(seed ^ video_index)
            base = _base_field(rng, size)
            grid_pitch = rng.uniform(3.5, 6.0)
            vdir = frames_root / video_id
            vdir.mkdir(exist_ok=True)
            for t in range(frames_per_video):
                frame = _synth_frame(label, base, t, rng, grid_pitch)
                # low compression: these frames are written once and read many times
                Image.fromarray(frame).save(
                    vdir / f"f{t:04d}.png", format="PNG", compress_level=1
                )
            attrs = {"session": str(1 + j % 3), "phone": str(1 + u % 2)}
            rows.append(
                {
                    "video_id": video_id,
                    "user_id": user_id,
                    "label": label,
                    "attrs": format_attrs(attrs),
                    "frame_dir": str(Path("frames") / video_id),
                }
            )
            video_index += 1

    manifest_path = out / "manifest.csv"
    with open(manifest_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=MANIFEST_FIELDS)
        writer.writeheader()
        writer.writerows(rows)

    config = DatasetConfig(
        name=name or f"synth-{seed}",
        splits=_default_splits(user_ids),
        protocols={
            "all": {},
            "session-holdout": {
                "training": {"session": ["1", "2"]},
                "validation": {"session": ["1", "2"]},
                "testing": {"session": ["3"]},
            },
        },
    )
    config_path = out / "dataset.json"
    save_dataset_config(config, config_path)
    return manifest_path, config_path
