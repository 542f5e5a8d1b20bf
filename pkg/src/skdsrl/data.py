"""Synthetic motion dataset, directory loader/exporter, and batch iteration.

The synthetic task is motion-direction classification: a bright shape drifts
left/right/up/down over a noisy background, so the label is only readable
from temporal structure, not from any single frame.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .augment import AugmentConfig, two_views
from .exceptions import CorruptDataError

DIRECTIONS = ["left", "right", "up", "down"]
_VECTORS = {"left": (0.0, -1.0), "right": (0.0, 1.0), "up": (-1.0, 0.0), "down": (1.0, 0.0)}


@dataclass
class LabeledVideo:
    id: str
    frames: np.ndarray  # (F, H, W, 3) float32 in [0, 1]
    label_index: int


@dataclass
class DatasetSplit:
    train: list[LabeledVideo]
    val: list[LabeledVideo]
    test: list[LabeledVideo]
    class_names: list[str]

    @property
    def num_classes(self) -> int:
        return len(self.class_names)


@dataclass(frozen=True)
class SyntheticConfig:
    num_classes: int = 4
    videos_per_class: int = 50
    frames: int = 24
    height: int = 160
    width: int = 160
    noise_std: float = 0.08
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2 or self.num_classes > len(DIRECTIONS):
            raise ValueError(f"num_classes must be in [2, {len(DIRECTIONS)}]")


def _draw_shape(frame: np.ndarray, cy: float, cx: float, size: int, color: np.ndarray, kind: int) -> None:
    h, w = frame.shape[:2]
    y0, y1 = int(cy - size), int(cy + size)
    x0, x1 = int(cx - size), int(cx + size)
    yy, xx = np.mgrid[max(y0, 0) : min(y1, h), max(x0, 0) : min(x1, w)]
    if yy.size == 0:
        return
    if kind == 0:  # square
        mask = np.ones(yy.shape, dtype=bool)
    elif kind == 1:  # disc
        mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= size**2
    else:  # diamond
        mask = np.abs(yy - cy) + np.abs(xx - cx) <= size
    frame[yy[mask], xx[mask]] = color


def _synth_video(cfg: SyntheticConfig, label: int, rng: np.random.Generator) -> np.ndarray:
    dy, dx = _VECTORS[DIRECTIONS[label]]
    speed = float(rng.uniform(2.0, 4.0))
    size = int(rng.integers(10, 19))
    kind = int(rng.integers(0, 3))
    color = rng.uniform(0.6, 1.0, size=3).astype(np.float32)
    margin = size + 2
    # cap the speed so the whole trajectory fits between the margins
    axis_extent = cfg.height if dy != 0 else cfg.width
    max_speed = max(axis_extent - 2 * margin, 0) / max(cfg.frames - 1, 1)
    speed = min(speed, max_speed)
    travel = speed * (cfg.frames - 1)
    cy = float(rng.uniform(margin + max(0.0, -dy * travel), cfg.height - margin - max(0.0, dy * travel)))
    cx = float(rng.uniform(margin + max(0.0, -dx * travel), cfg.width - margin - max(0.0, dx * travel)))
    base = rng.uniform(0.1, 0.35)
    video = np.empty((cfg.frames, cfg.height, cfg.width, 3), dtype=np.float32)
    for t in range(cfg.frames):
        frame = np.full((cfg.height, cfg.width, 3), base, dtype=np.float32)
        if cfg.noise_std > 0:
            frame += rng.normal(0.0, cfg.noise_std, size=frame.shape).astype(np.float32)
        _draw_shape(frame, cy + dy * speed * t, cx + dx * speed * t, size, color, kind)
        video[t] = np.clip(frame, 0.0, 1.0)
    return video


def _split_sizes(n: int, k_index: int, num_classes: int, total_val: int) -> tuple[int, int]:
    """Per-class (train, val) sizes; val counts distributed so the val total is exact."""
    n_train = int(round(0.7 * n))
    base_val = total_val // num_classes
    extra = total_val - base_val * num_classes
    n_val = base_val + (1 if k_index < extra else 0)
    return n_train, n_val


def generate_synthetic(cfg: SyntheticConfig) -> DatasetSplit:
    """Balanced, deterministic dataset with a stratified 70/15/15 split."""
    rng = np.random.default_rng(cfg.seed)
    total = cfg.num_classes * cfg.videos_per_class
    total_val = int(round(0.15 * total))
    train, val, test = [], [], []
    for k in range(cfg.num_classes):
        n_train, n_val = _split_sizes(cfg.videos_per_class, k, cfg.num_classes, total_val)
        for j in range(cfg.videos_per_class):
            vid = LabeledVideo(
                id=f"{DIRECTIONS[k]}_{j:04d}",
                frames=_synth_video(cfg, k, rng),
                label_index=k,
            )
            if j < n_train:
                train.append(vid)
            elif j < n_train + n_val:
                val.append(vid)
            else:
                test.append(vid)
    return DatasetSplit(train=train, val=val, test=test, class_names=DIRECTIONS[: cfg.num_classes])


def export_dataset(split: DatasetSplit, root) -> None:
    """Write the canonical directory layout (classes.txt, index.csv, PNG frames)."""
    root = Path(root)
    (root / "videos").mkdir(parents=True, exist_ok=True)
    (root / "classes.txt").write_text("".join(f"{c}\n" for c in split.class_names))
    with open(root / "index.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "split", "class", "num_frames"])
        for split_name in ("train", "val", "test"):
            for vid in getattr(split, split_name):
                writer.writerow(
                    [vid.id, split_name, split.class_names[vid.label_index], vid.frames.shape[0]]
                )
                vdir = root / "videos" / vid.id
                vdir.mkdir(parents=True, exist_ok=True)
                for t in range(vid.frames.shape[0]):
                    img = (np.clip(vid.frames[t], 0, 1) * 255.0).round().astype(np.uint8)
                    cv2.imwrite(str(vdir / f"{t:05d}.png"), cv2.cvtColor(img, cv2.COLOR_RGB2BGR))


def load_clip_dataset(root) -> DatasetSplit:
    """Load the canonical layout written by `export_dataset`."""
    root = Path(root)
    index_path = root / "index.csv"
    if not index_path.exists():
        raise FileNotFoundError(f"no index file at {index_path}")
    class_names = [c for c in (root / "classes.txt").read_text().splitlines() if c]
    class_to_idx = {c: i for i, c in enumerate(class_names)}
    splits = {"train": [], "val": [], "test": []}
    with open(index_path, newline="") as fh:
        reader = csv.DictReader(fh)
        for line_no, row in enumerate(reader, start=2):
            vid_id = row.get("id", "")
            try:
                split_name = row["split"]
                label = class_to_idx[row["class"]]
                num_frames = int(row["num_frames"])
            except (KeyError, ValueError) as exc:
                raise CorruptDataError(f"index.csv line {line_no} (id={vid_id!r}): {exc}") from exc
            vdir = root / "videos" / vid_id
            if not vdir.is_dir():
                raise CorruptDataError(f"video directory missing for id {vid_id!r} (index.csv line {line_no})")
            stack = []
            for t in range(num_frames):
                img = cv2.imread(str(vdir / f"{t:05d}.png"), cv2.IMREAD_COLOR)
                if img is None:
                    raise CorruptDataError(f"unreadable frame {t} of video {vid_id!r}")
                stack.append(cv2.cvtColor(img, cv2.COLOR_BGR2RGB).astype(np.float32) / 255.0)
            splits[split_name].append(
                LabeledVideo(id=vid_id, frames=np.stack(stack), label_index=label)
            )
    return DatasetSplit(train=splits["train"], val=splits["val"], test=splits["test"], class_names=class_names)


def one_hot(index: int, num_classes: int) -> np.ndarray:
    y = np.zeros(num_classes, dtype=np.float32)
    y[index] = 1.0
    return y


@dataclass
class ViewBatch:
    """Stacked two-view batch ready for the Siamese forward."""

    x1: np.ndarray  # (n, T, 112, 112, 3)
    x2: np.ndarray
    labels: np.ndarray  # (n, K) one-hot
    ids: list[str] = field(default_factory=list)


def batch_iter(
    videos: list[LabeledVideo],
    batch_size: int,
    rng: np.random.Generator,
    aug_cfg: AugmentConfig,
    num_classes: int,
):
    """One shuffled epoch of augmented two-view batches; last batch may be short."""
    order = rng.permutation(len(videos))
    for start in range(0, len(videos), batch_size):
        chunk = [videos[i] for i in order[start : start + batch_size]]
        pairs = [two_views(v.frames, aug_cfg, rng, one_hot(v.label_index, num_classes)) for v in chunk]
        yield ViewBatch(
            x1=np.stack([p.x1 for p in pairs]),
            x2=np.stack([p.x2 for p in pairs]),
            labels=np.stack([p.label for p in pairs]),
            ids=[v.id for v in chunk],
        )
