import hashlib
import logging

import numpy as np
import pytest

from livetex import dataset as ds
from livetex.lbp import LbpParams


def write_manifest(tmp_path, rows, header="video_id,user_id,label,attrs,frame_dir"):
    path = tmp_path / "manifest.csv"
    path.write_text("\n".join([header] + rows) + "\n")
    return path


def make_frames(tmp_path, name, count=2):
    d = tmp_path / name
    d.mkdir(parents=True, exist_ok=True)
    from PIL import Image

    for i in range(count):
        Image.fromarray(np.full((4, 4, 3), i * 10, dtype=np.uint8)).save(
            d / f"f{i:03d}.png"
        )
    return d


class TestParseManifest:
    def test_basic_row_with_attrs(self, tmp_path):
        make_frames(tmp_path, "frames/v1")
        path = write_manifest(tmp_path, ["v1,u01,bonafide,session=1;phone=2,frames/v1"])
        records = ds.parse_manifest(path)
        assert len(records) == 1
        rec = records[0]
        assert rec.video_id == "v1"
        assert rec.attrs == {"session": "1", "phone": "2"}
        assert len(rec.frame_paths) == 2
        assert rec.binary_label == "bonafide"

    def test_duplicate_video_id(self, tmp_path):
        make_frames(tmp_path, "frames/v1")
        path = write_manifest(
            tmp_path,
            [
                "v1,u01,bonafide,,frames/v1",
                "v1,u02,print-attack,,frames/v1",
            ],
        )
        with pytest.raises(ds.ManifestError, match="duplicate"):
            ds.parse_manifest(path)

    def test_unknown_label_mask(self, tmp_path):
        make_frames(tmp_path, "frames/v1")
        path = write_manifest(tmp_path, ["v1,u01,mask,,frames/v1"])
        with pytest.raises(ds.ManifestError, match="mask"):
            ds.parse_manifest(path)

    def test_missing_frame_dir(self, tmp_path):
        path = write_manifest(tmp_path, ["v1,u01,bonafide,,frames/nope"])
        with pytest.raises(ds.ManifestError, match="frame directory"):
            ds.parse_manifest(path)

    def test_error_names_line(self, tmp_path):
        make_frames(tmp_path, "frames/v1")
        path = write_manifest(
            tmp_path,
            ["v1,u01,bonafide,,frames/v1", "v2,u02,bogus,,frames/v1"],
        )
        with pytest.raises(ds.ManifestError, match=":3"):
            ds.parse_manifest(path)

    def test_malformed_attrs(self, tmp_path):
        make_frames(tmp_path, "frames/v1")
        path = write_manifest(tmp_path, ["v1,u01,bonafide,notkeyvalue,frames/v1"])
        with pytest.raises(ds.ManifestError, match="key=value"):
            ds.parse_manifest(path)

    def test_wrong_header(self, tmp_path):
        path = write_manifest(tmp_path, [], header="a,b,c")
        with pytest.raises(ds.ManifestError, match="header"):
            ds.parse_manifest(path)

    def test_binary_label_collapse(self, tmp_path):
        make_frames(tmp_path, "frames/v1")
        path = write_manifest(
            tmp_path,
            [
                "v1,u01,print-attack,,frames/v1",
                "v2,u01,display-attack,,frames/v1",
            ],
        )
        records = ds.parse_manifest(path)
        assert [r.binary_label for r in records] == ["attack", "attack"]
        assert [r.label for r in records] == ["print-attack", "display-attack"]


class TestWindowing:
    def _video(self, frames):
        return ds.VideoRecord("v", "u", "bonafide", {}, [f"f{i}" for i in range(frames)])

    def test_35_frames_two_windows(self):
        assert ds.window_video(self._video(35), 16, 16) == [(0, 16), (16, 32)]

    def test_exact_length_one_window(self):
        assert ds.window_video(self._video(16), 16, 16) == [(0, 16)]

    def test_short_video_zero_windows(self, caplog):
        with caplog.at_level(logging.WARNING, logger="livetex.dataset"):
            assert ds.window_video(self._video(10), 16, 16) == []
        assert "shorter" in caplog.text

    def test_overlapping_stride(self):
        assert ds.window_video(self._video(20), 16, 4) == [(0, 16), (4, 20)]

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            ds.window_video(self._video(5), 0, 1)

    def test_count_formula_matches_enumeration(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            frames = int(rng.integers(1, 120))
            n = int(rng.integers(1, 40))
            stride = int(rng.integers(1, 40))
            windows = ds.window_video(self._video(frames), n, stride)
            expected = (frames - n) // stride + 1 if frames >= n else 0
            assert len(windows) == expected
            if stride >= n:
                for (a0, a1), (b0, b1) in zip(windows, windows[1:]):
                    assert a1 <= b0  # non-overlapping


class TestProtocols:
    def _records(self):
        return [
            ds.VideoRecord("v1", "u01", "bonafide", {"session": "1"}, ["f"]),
            ds.VideoRecord("v2", "u01", "bonafide", {"session": "3"}, ["f"]),
            ds.VideoRecord("v3", "u02", "print-attack", {"session": "2"}, ["f"]),
        ]

    def test_session_holdout(self):
        proto = ds.ProtocolFilter(
            "holdout", {"training": {"session": ["1", "2"]}, "testing": {"session": ["3"]}}
        )
        split = ds.SplitSpec("training", frozenset({"u01", "u02"}))
        kept = ds.apply_protocol(self._records(), proto, split)
        assert [r.video_id for r in kept] == ["v1", "v3"]

    def test_always_true_is_identity_within_split(self):
        proto = ds.ProtocolFilter("all", {})
        split = ds.SplitSpec("testing", frozenset({"u01", "u02"}))
        kept = ds.apply_protocol(self._records(), proto, split)
        assert len(kept) == 3

    def test_unknown_users_empty_with_warning(self, caplog):
        proto = ds.ProtocolFilter("all", {})
        split = ds.SplitSpec("testing", frozenset({"zz"}))
        with caplog.at_level(logging.WARNING, logger="livetex.dataset"):
            assert ds.apply_protocol(self._records(), proto, split) == []
        assert "no videos" in caplog.text

    def test_missing_attribute_never_matches(self):
        proto = ds.ProtocolFilter("p", {"training": {"phone": ["1"]}})
        assert not proto.matches("training", {"session": "1"})
        assert proto.matches("validation", {"session": "1"})  # no rule for split


class TestDatasetConfig:
    def test_split_disjointness_enforced(self):
        with pytest.raises(ds.ManifestError, match="disjoint"):
            ds.DatasetConfig(
                "x", {"training": ["u1"], "testing": ["u1"]}, {"all": {}}
            )

    def test_roundtrip(self, tmp_path):
        config = ds.DatasetConfig(
            "x", {"training": ["a"], "validation": ["b"], "testing": ["c"]}, {"all": {}}
        )
        path = tmp_path / "dataset.json"
        ds.save_dataset_config(config, path)
        loaded = ds.load_dataset_config(path)
        assert loaded.to_dict() == config.to_dict()
        assert loaded.split("training").users == frozenset({"a"})

    def test_unknown_split_or_protocol(self):
        config = ds.DatasetConfig("x", {"training": ["a"]}, {"all": {}})
        with pytest.raises(KeyError):
            config.split("bogus")
        with pytest.raises(KeyError):
            config.protocol("bogus")


def tree_digest(root):
    """Stable digest of a directory tree: relative paths + content hashes."""
    items = []
    for path in sorted(root.rglob("*")):
        if path.is_file():
            items.append(f"{path.relative_to(root)}:{hashlib.sha256(path.read_bytes()).hexdigest()}")
    return hashlib.sha256("\n".join(items).encode()).hexdigest()


class TestSynthGenerate:
    def test_deterministic_tree(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        for out in (a, b):
            ds.synth_generate(out, seed=7, users=2, live_videos=1, attack_videos=2,
                              frames_per_video=4, size=24, name="det")
        assert tree_digest(a) == tree_digest(b)

    def test_different_seed_differs(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        ds.synth_generate(a, seed=1, users=1, live_videos=1, attack_videos=1,
                          frames_per_video=2, size=24, name="s")
        ds.synth_generate(b, seed=2, users=1, live_videos=1, attack_videos=1,
                          frames_per_video=2, size=24, name="s")
        assert tree_digest(a) != tree_digest(b)

    def test_manifest_parses_clean(self, tiny_synth):
        records = ds.parse_manifest(tiny_synth["manifest"])
        assert len(records) == 4 * 3
        for rec in records:
            assert len(rec.frame_paths) == 20
            assert set(rec.attrs) == {"session", "phone"}

    def test_splits_cover_all_users(self, tiny_synth):
        config = ds.load_dataset_config(tiny_synth["config"])
        users = set()
        for split_users in config.splits.values():
            users.update(split_users)
        assert users == {f"u{i:02d}" for i in range(1, 5)}

    def test_classes_separable_in_lbp_space(self, tmp_path):
        # the generator's whole point: texture statistics must separate the
        # classes more than bonafide varies within itself
        root = tmp_path / "sep"
        manifest, _ = ds.synth_generate(
            root, seed=3, users=5, live_videos=2, attack_videos=2,
            frames_per_video=1, size=64, name="sep",
        )
        records = ds.parse_manifest(manifest)
        params = LbpParams(8, 1.0)
        from livetex import pixel
        from livetex.features import lbp_histogram
        from livetex.lbp import apply_riu2

        def lbp_hist(record):
            frame = pixel.load_frame(record.frame_paths[0])
            plane = pixel.rgb_to_ycbcr(frame).planes[0]
            return lbp_histogram(apply_riu2(plane, params), 10)

        bona = [lbp_hist(r) for r in records if r.binary_label == "bonafide"]
        attack = [lbp_hist(r) for r in records if r.binary_label == "attack"]
        assert len(bona) == 10 and len(attack) == 10
        mean_bona = np.mean(bona, axis=0)
        mean_attack = np.mean(attack, axis=0)
        inter = np.abs(mean_bona - mean_attack).sum()
        intra = np.mean([np.abs(h - mean_bona).sum() for h in bona])
        assert inter > intra

    def test_bad_counts_error(self, tmp_path):
        with pytest.raises(ValueError):
            ds.synth_generate(tmp_path / "x", users=0)
