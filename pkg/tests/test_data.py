import numpy as np
import pytest

from skdsrl.augment import AugmentConfig
from skdsrl.data import (
    DatasetSplit,
    SyntheticConfig,
    batch_iter,
    export_dataset,
    generate_synthetic,
    load_clip_dataset,
)
from skdsrl.exceptions import CorruptDataError


@pytest.fixture(scope="module")
def small_split():
    return generate_synthetic(SyntheticConfig(videos_per_class=10, frames=20, height=96, width=96, seed=3))


class TestGenerateSynthetic:
    def test_split_arithmetic(self):
        split = generate_synthetic(SyntheticConfig(videos_per_class=50, seed=0))
        assert (len(split.train), len(split.val), len(split.test)) == (140, 30, 30)
        all_videos = split.train + split.val + split.test
        for k in range(4):
            assert sum(1 for v in all_videos if v.label_index == k) == 50

    def test_deterministic(self):
        cfg = SyntheticConfig(videos_per_class=4, frames=12, height=64, width=64, seed=9)
        a, b = generate_synthetic(cfg), generate_synthetic(cfg)
        for va, vb in zip(a.train + a.val + a.test, b.train + b.val + b.test):
            assert va.id == vb.id
            assert np.array_equal(va.frames, vb.frames)

    def test_ids_disjoint_across_splits(self, small_split):
        ids = [
            {v.id for v in small_split.train},
            {v.id for v in small_split.val},
            {v.id for v in small_split.test},
        ]
        assert not (ids[0] & ids[1]) and not (ids[0] & ids[2]) and not (ids[1] & ids[2])

    def test_every_class_in_train(self, small_split):
        assert {v.label_index for v in small_split.train} == set(range(4))

    def test_frames_in_unit_range(self, small_split):
        v = small_split.train[0]
        assert v.frames.min() >= 0.0 and v.frames.max() <= 1.0

    def test_noise_free_task_linearly_learnable(self):
        # independent oracle: displacement-of-brightness features + linear model
        sklearn = pytest.importorskip("sklearn")
        from sklearn.linear_model import LogisticRegression

        split = generate_synthetic(SyntheticConfig(videos_per_class=20, noise_std=0.0, seed=0))

        def motion_features(frames):
            iy, ix = np.mgrid[0 : frames.shape[1], 0 : frames.shape[2]]
            feats = []
            for t in range(frames.shape[0] - 1):
                prev = np.abs(frames[t] - frames[t].mean()).mean(axis=-1)
                cur = np.abs(frames[t + 1] - frames[t + 1].mean()).mean(axis=-1)
                cy0, cx0 = (iy * prev).sum() / prev.sum(), (ix * prev).sum() / prev.sum()
                cy1, cx1 = (iy * cur).sum() / cur.sum(), (ix * cur).sum() / cur.sum()
                feats.append((cy1 - cy0, cx1 - cx0))
            return np.mean(feats, axis=0)

        x_tr = np.array([motion_features(v.frames) for v in split.train])
        y_tr = [v.label_index for v in split.train]
        x_te = np.array([motion_features(v.frames) for v in split.test])
        y_te = [v.label_index for v in split.test]
        acc = LogisticRegression(max_iter=1000).fit(x_tr, y_tr).score(x_te, y_te)
        assert acc > 0.9


class TestExportLoad:
    def test_roundtrip_within_quantization(self, small_split, tmp_path):
        export_dataset(small_split, tmp_path)
        loaded = load_clip_dataset(tmp_path)
        assert loaded.class_names == small_split.class_names
        for orig, back in zip(small_split.train, loaded.train):
            assert orig.id == back.id
            assert orig.label_index == back.label_index
            assert np.abs(orig.frames - back.frames).max() <= 1.0 / 255.0 + 1e-6

    def test_missing_index_not_found(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_clip_dataset(tmp_path / "nowhere")

    def test_empty_index_gives_empty_splits(self, tmp_path):
        (tmp_path / "classes.txt").write_text("a\nb\n")
        (tmp_path / "index.csv").write_text("id,split,class,num_frames\n")
        split = load_clip_dataset(tmp_path)
        assert split.train == [] and split.val == [] and split.test == []

    def test_missing_video_dir_names_id(self, tmp_path):
        (tmp_path / "classes.txt").write_text("a\n")
        (tmp_path / "index.csv").write_text("id,split,class,num_frames\nghost_001,train,a,4\n")
        with pytest.raises(CorruptDataError, match="ghost_001"):
            load_clip_dataset(tmp_path)

    def test_unreadable_frame_names_id(self, small_split, tmp_path):
        export_dataset(small_split, tmp_path)
        victim = small_split.train[0].id
        frame = tmp_path / "videos" / victim / "00000.png"
        frame.write_bytes(b"not a png")
        with pytest.raises(CorruptDataError, match=victim):
            load_clip_dataset(tmp_path)


class TestBatchIter:
    def test_batch_sizes(self, small_split):
        # 28 train videos at n=8 -> 8,8,8,4
        rng = np.random.default_rng(0)
        sizes = [
            b.x1.shape[0]
            for b in batch_iter(small_split.train, 8, rng, AugmentConfig(clip_len=8), 4)
        ]
        assert sizes == [8, 8, 8, 4]

    def test_epoch_covers_every_id_once(self, small_split):
        rng = np.random.default_rng(1)
        seen = []
        for b in batch_iter(small_split.train, 8, rng, AugmentConfig(clip_len=8), 4):
            seen.extend(b.ids)
        assert sorted(seen) == sorted(v.id for v in small_split.train)

    def test_shuffle_deterministic_under_seed(self, small_split):
        def ids_with_seed(seed):
            rng = np.random.default_rng(seed)
            out = []
            for b in batch_iter(small_split.train, 8, rng, AugmentConfig(clip_len=8), 4):
                out.extend(b.ids)
            return out

        assert ids_with_seed(7) == ids_with_seed(7)

    def test_view_shapes_and_labels(self, small_split):
        rng = np.random.default_rng(2)
        b = next(batch_iter(small_split.train, 4, rng, AugmentConfig(clip_len=8), 4))
        assert b.x1.shape == (4, 8, 112, 112, 3)
        assert b.x2.shape == (4, 8, 112, 112, 3)
        assert b.labels.shape == (4, 4)
        assert np.allclose(b.labels.sum(axis=1), 1.0)
