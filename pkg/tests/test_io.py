"""Round trips for the motion/track/checkpoint/manifest file formats."""

import numpy as np
import pytest

from dancegen import io as dio
from dancegen.errors import MalformedSequenceError
from dancegen.motion import FRAME_WIDTH, BlendshapeRig, MotionSequence, default_skeleton
from dancegen.synth import generate_track


class TestMotionFile:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        seq = MotionSequence(rng.normal(size=(12, FRAME_WIDTH)).astype(np.float32), fps=30)
        path = tmp_path / "clip.sdm1"
        dio.write_motion(path, seq)
        back = dio.read_motion(path)
        assert back.fps == 30
        np.testing.assert_array_equal(back.data, seq.data.astype(np.float32).astype(np.float64))

    def test_header(self, tmp_path):
        seq = MotionSequence(np.zeros((8, FRAME_WIDTH)), fps=60)
        path = tmp_path / "clip.sdm1"
        dio.write_motion(path, seq)
        raw = path.read_bytes()
        assert raw[:4] == b"SDM1"
        fps, frames, channels = np.frombuffer(raw[4:16], dtype="<u4")
        assert (fps, frames, channels) == (60, 8, 723)
        assert len(raw) == 16 + 4 * 8 * 723

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.sdm1"
        path.write_bytes(b"NOPE" + b"\0" * 32)
        with pytest.raises(MalformedSequenceError):
            dio.read_motion(path)


class TestTrackFile:
    def test_roundtrip(self, tmp_path):
        track = generate_track(seed=5, duration_s=6.0, bpm=132.0, genre_id=3, emotion_id=2)
        path = tmp_path / "t.smt1"
        dio.write_track(path, track)
        back = dio.read_track(path)
        np.testing.assert_array_equal(back.features,
                                      track.features.astype(np.float32).astype(np.float64))
        np.testing.assert_array_equal(back.beat_times, track.beat_times)
        assert back.genre_id == 3 and back.emotion_id == 2
        assert back.duration == 6.0 and back.feature_rate == track.feature_rate

    def test_header_magic_and_channels(self, tmp_path):
        track = generate_track(seed=1)
        path = tmp_path / "t.smt1"
        dio.write_track(path, track)
        raw = path.read_bytes()
        assert raw[:4] == b"SMT1"
        rate, rows, channels = np.frombuffer(raw[4:16], dtype="<u4")
        assert channels == 35 and rows == track.rows


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(1)
        arrays = {"a.weight": rng.normal(size=(3, 4)), "b": np.arange(5, dtype=np.int64)}
        path = tmp_path / "m.snc"
        dio.save_checkpoint(path, "demo", {"x": 1, "y": [2, 3]}, 42, arrays)
        kind, config, seed, back = dio.load_checkpoint(path)
        assert kind == "demo" and seed == 42 and config == {"x": 1, "y": [2, 3]}
        for k in arrays:
            np.testing.assert_array_equal(back[k], arrays[k])
            assert back[k].dtype == arrays[k].dtype

    def test_deterministic_bytes(self, tmp_path):
        arrays = {"w": np.ones((2, 2))}
        p1, p2 = tmp_path / "a.snc", tmp_path / "b.snc"
        dio.save_checkpoint(p1, "demo", {"k": 1}, 0, arrays)
        dio.save_checkpoint(p2, "demo", {"k": 1}, 0, arrays)
        assert p1.read_bytes() == p2.read_bytes()


class TestTextFormats:
    def test_skeleton_roundtrip(self, tmp_path):
        skel = default_skeleton()
        path = tmp_path / "skeleton.json"
        dio.write_skeleton(path, skel)
        back = dio.read_skeleton(path)
        np.testing.assert_array_equal(back.parent_index, skel.parent_index)
        np.testing.assert_allclose(back.rest_offset, skel.rest_offset)

    def test_rig_roundtrip(self, tmp_path):
        rng = np.random.default_rng(2)
        rig = BlendshapeRig(rng.normal(size=(4, 3)), rng.normal(size=(52, 4, 3)),
                            rng.normal(size=(52, 103)))
        path = tmp_path / "rig.json"
        dio.write_rig(path, rig)
        back = dio.read_rig(path)
        np.testing.assert_allclose(back.base_vertices, rig.base_vertices)
        np.testing.assert_allclose(back.deltas, rig.deltas)
        np.testing.assert_allclose(back.transform, rig.transform)


class TestCorpusFiles:
    def test_save_load_corpus(self, tmp_path, tiny_corpus):
        manifest = dio.save_corpus(tiny_corpus[:6], tmp_path / "corpus", {"n": 6})
        samples, doc = dio.load_corpus(manifest)
        assert len(samples) == 6
        assert doc["config"] == {"n": 6}
        for orig, back in zip(tiny_corpus[:6], samples):
            assert back.sample_id == orig.sample_id
            assert back.split == orig.split
            assert back.track.genre_id == orig.track.genre_id
            np.testing.assert_array_equal(
                back.motion.data, orig.motion.data.astype(np.float32).astype(np.float64))
