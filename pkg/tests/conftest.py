import numpy as np
import pytest

from livetex import dataset as ds
from livetex import features
from livetex.lbp import LbpParams


@pytest.fixture(scope="session")
def tiny_synth(tmp_path_factory):
    """Small generated dataset shared by ingestion/CLI/service tests."""
    root = tmp_path_factory.mktemp("tiny_synth")
    manifest, config = ds.synth_generate(
        root, seed=11, users=4, live_videos=1, attack_videos=2,
        frames_per_video=20, size=48, name="tiny",
    )
    return {"root": root, "manifest": manifest, "config": config}


@pytest.fixture(scope="session")
def tiny_spec():
    """Cheap feature spec for small planes (radius 1 keeps 48px frames valid)."""
    return features.HistogramSpec(
        color_buckets=8,
        lbp_buckets=10,
        lbp=LbpParams(points=8, radius=1.0),
        spaces=("hsv", "ycbcr"),
    )


@pytest.fixture(scope="session")
def tiny_cache(tiny_synth, tiny_spec, tmp_path_factory):
    """Extracted feature cache over the tiny synthetic dataset."""
    out = tmp_path_factory.mktemp("tiny_cache")
    records = ds.parse_manifest(tiny_synth["manifest"])
    config = ds.load_dataset_config(tiny_synth["config"])
    features.write_feature_cache(
        out, records, tiny_spec, frames_per_sample=5, stride=5,
        config=config, source_manifest=str(tiny_synth["manifest"]),
    )
    return features.load_feature_cache(out)


def make_toy_cache(root, spec=None, frames_per_sample=4, videos_per_user=3,
                   users=("t01", "t02", "t03", "t04", "t05", "t06"),
                   separation=0.4, noise=0.02, seed=5, name="toy"):
    """Write a feature cache of linearly separable fake histograms.

    Bonafide rows sit at 0.5+separation in the first half of the dims,
    attacks at 0.5-separation; gaussian noise on top. Split 4/1/1 users.
    """
    spec = spec or features.HistogramSpec(
        color_buckets=2, lbp_buckets=2, lbp=LbpParams(points=8, radius=1.0),
        spaces=("hsv",),
    )
    dim = spec.feature_dim
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    (root / "samples").mkdir(exist_ok=True)

    import csv
    import json

    index_rows = []
    for user in users:
        for v in range(videos_per_user):
            label = "bonafide" if v % 2 == 0 else "attack"
            fine = "bonafide" if label == "bonafide" else ("print-attack" if v % 4 == 1 else "display-attack")
            video_id = f"{user}v{v}"
            center = 0.5 + (separation if label == "bonafide" else -separation)
            rows = np.full((frames_per_sample, dim), 0.5)
            rows[:, : dim // 2] = center
            rows += rng.normal(0.0, noise, rows.shape)
            rows = np.clip(rows, 0.0, 1.0)
            sample = features.SampleTensor(rows, label=label, video_id=video_id,
                                           frame_range=(0, frames_per_sample))
            rel = f"samples/{video_id}.ctl"
            (root / rel).write_bytes(features.serialize_sample(sample, spec))
            index_rows.append({
                "sample_id": video_id, "file": rel, "video_id": video_id,
                "user_id": user, "label": label, "fine_label": fine,
                "start": 0, "end": frames_per_sample, "attrs": "session=1",
            })
    with open(root / "index.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=features.INDEX_FIELDS)
        writer.writeheader()
        writer.writerows(index_rows)
    config = {
        "name": name,
        "splits": {
            "training": list(users[:4]),
            "validation": list(users[4:5]),
            "testing": list(users[5:]),
        },
        "protocols": {"all": {}},
    }
    with open(root / "features.json", "w") as fh:
        json.dump({
            "frames_per_sample": frames_per_sample, "stride": frames_per_sample,
            "spec": spec.to_dict(), "dataset": config, "source_manifest": "",
        }, fh)
    return features.load_feature_cache(root)
