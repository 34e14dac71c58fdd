"""Dataset ingestion: deterministic split protocol, palette-coded label
loading, and a synthetic shape dataset for desk-scale training checks.
"""

import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import yaml
from PIL import Image
from torch.utils.data import Dataset, Subset

from .errors import InvalidInputError

VOID_LABEL = 255


@dataclass
class SegmentationSample:
    """One (image, labels) pair; image is float32 (3, H, W), labels int64
    (H, W) with 255 marking void pixels.
    """

    image: torch.Tensor
    labels: torch.Tensor

    def __post_init__(self):
        if self.image.shape[1:] != self.labels.shape:
            raise InvalidInputError(
                f"image {tuple(self.image.shape)} and labels {tuple(self.labels.shape)} "
                "are not spatially congruent"
            )


@dataclass
class SplitManifest:
    train: List[str]
    val: List[str]
    test: List[str]
    seed: int
    mean: Optional[List[float]] = None
    std: Optional[List[float]] = None

    def sizes(self) -> Tuple[int, int, int]:
        return len(self.train), len(self.val), len(self.test)

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name in ("train", "val", "test"):
            (directory / f"{name}.txt").write_text("\n".join(getattr(self, name)) + "\n")
        meta = {"seed": self.seed, "mean": self.mean, "std": self.std}
        (directory / "meta.yaml").write_text(yaml.safe_dump(meta))

    @classmethod
    def load(cls, directory) -> "SplitManifest":
        directory = Path(directory)
        parts = {}
        for name in ("train", "val", "test"):
            text = (directory / f"{name}.txt").read_text()
            parts[name] = [line for line in text.splitlines() if line]
        meta = yaml.safe_load((directory / "meta.yaml").read_text())
        return cls(seed=meta["seed"], mean=meta.get("mean"), std=meta.get("std"), **parts)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def build_splits(ids: Sequence[str], seed: int) -> SplitManifest:
    """Shuffle ids with the seed and cut train/val/test.

    The test cut takes the floor third (67/33 protocol); the inner 78/22
    cut sizes the train part by nearest-integer rounding of the nominal
    fractions, which lands on 367/101/233 for a 701-item list.
    """
    ids = list(ids)
    n = len(ids)
    if n < 3:
        raise InvalidInputError(f"need at least 3 ids to split, got {n}")
    order = sorted(ids)
    random.Random(seed).shuffle(order)
    test_size = n - (2 * n + 2) // 3  # n - ceil(2n/3) = floor(n/3)
    pool = n - test_size
    train_size = min(_round_half_up(0.78 * _round_half_up(0.67 * n)), pool)
    val_size = pool - train_size
    return SplitManifest(
        train=order[:train_size],
        val=order[train_size:train_size + val_size],
        test=order[pool:],
        seed=seed,
    )


# -- palette-coded labels ----------------------------------------------------

@dataclass
class Palette:
    """Color -> class-index mapping parsed from "R G B name" lines.

    Entries named void (any case) map to the 255 ignore label and do not
    count toward num_classes.
    """

    colors: List[Tuple[int, int, int]]
    names: List[str]
    indices: List[int]

    @property
    def num_classes(self) -> int:
        return sum(1 for i in self.indices if i != VOID_LABEL)

    def color_to_index(self) -> Dict[Tuple[int, int, int], int]:
        return dict(zip(self.colors, self.indices))

    def index_to_color(self) -> Dict[int, Tuple[int, int, int]]:
        return {i: c for c, i in zip(self.colors, self.indices)}


def load_palette(path) -> Palette:
    colors, names, indices = [], [], []
    next_index = 0
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) < 4:
            raise InvalidInputError(f"{path}:{lineno}: expected 'R G B name', got {line!r}")
        r, g, b = (int(v) for v in parts[:3])
        name = parts[3]
        colors.append((r, g, b))
        names.append(name)
        if name.lower() == "void":
            indices.append(VOID_LABEL)
        else:
            indices.append(next_index)
            next_index += 1
    if not colors:
        raise InvalidInputError(f"palette file {path} holds no entries")
    return Palette(colors, names, indices)


def encode_labels(color_map: np.ndarray, palette: Palette, source="<array>") -> np.ndarray:
    """Map an (H, W, 3) uint8 color mask to class indices."""
    lookup = palette.color_to_index()
    flat = color_map.reshape(-1, 3)
    packed = flat[:, 0].astype(np.int64) * 65536 + flat[:, 1].astype(np.int64) * 256 + flat[:, 2]
    packed_lookup = {r * 65536 + g * 256 + b: idx for (r, g, b), idx in lookup.items()}
    out = np.full(packed.shape, -1, dtype=np.int64)
    for key, idx in packed_lookup.items():
        out[packed == key] = idx
    if (out < 0).any():
        bad = flat[out < 0][0]
        raise InvalidInputError(
            f"unknown palette color {tuple(int(v) for v in bad)} in {source}"
        )
    return out.reshape(color_map.shape[:2])


def decode_labels(labels: np.ndarray, palette: Palette) -> np.ndarray:
    """Inverse of encode_labels: class indices back to an (H, W, 3) mask."""
    mapping = palette.index_to_color()
    out = np.zeros((*labels.shape, 3), dtype=np.uint8)
    for idx, color in mapping.items():
        out[labels == idx] = color
    return out


# CamVid 32-name to 11-class grouping commonly used in the literature;
# anything unlisted becomes void.
CAMVID_11_CLASSES = ("Sky", "Building", "Pole", "Road", "Pavement", "Tree",
                     "SignSymbol", "Fence", "Car", "Pedestrian", "Bicyclist")
CAMVID_11_GROUPS = {
    "Sky": ("Sky",),
    "Building": ("Archway", "Bridge", "Building", "Tunnel", "Wall"),
    "Pole": ("Column_Pole", "TrafficCone"),
    "Road": ("Road", "LaneMkgsDriv", "LaneMkgsNonDriv", "RoadShoulder"),
    "Pavement": ("Sidewalk", "ParkingBlock"),
    "Tree": ("Tree", "VegetationMisc"),
    "SignSymbol": ("SignSymbol", "Misc_Text", "TrafficLight"),
    "Fence": ("Fence",),
    "Car": ("Car", "SUVPickupTruck", "Truck_Bus", "Train", "OtherMoving"),
    "Pedestrian": ("Pedestrian", "Child", "CartLuggagePram", "Animal"),
    "Bicyclist": ("Bicyclist", "MotorcycleScooter"),
}


def eleven_class_remap(palette: Palette) -> Dict[int, int]:
    """Full-palette index -> 11-class index (or void) by class name."""
    name_to_group = {}
    for group_idx, group in enumerate(CAMVID_11_CLASSES):
        for name in CAMVID_11_GROUPS[group]:
            name_to_group[name.lower()] = group_idx
    remap = {}
    for name, idx in zip(palette.names, palette.indices):
        if idx == VOID_LABEL:
            continue
        remap[idx] = name_to_group.get(name.lower(), VOID_LABEL)
    return remap


def apply_remap(labels: np.ndarray, remap: Dict[int, int]) -> np.ndarray:
    out = np.full_like(labels, VOID_LABEL)
    for src, dst in remap.items():
        out[labels == src] = dst
    return out


def load_sample(image_path, label_path, palette: Palette,
                target_size: Tuple[int, int] = (512, 512),
                mean: Optional[Sequence[float]] = None,
                std: Optional[Sequence[float]] = None,
                remap: Optional[Dict[int, int]] = None) -> SegmentationSample:
    """Load an (image, color mask) pair, resize (bilinear for the image,
    nearest for labels), decode the palette, and standardize the image.
    """
    h, w = target_size
    image = Image.open(image_path).convert("RGB")
    mask = Image.open(label_path).convert("RGB")
    if image.size != mask.size:
        raise InvalidInputError(
            f"image {image_path} ({image.size}) and mask {label_path} ({mask.size}) differ in size"
        )
    if image.size != (w, h):
        image = image.resize((w, h), Image.BILINEAR)
        mask = mask.resize((w, h), Image.NEAREST)
    labels = encode_labels(np.asarray(mask, dtype=np.uint8), palette, source=str(label_path))
    if remap is not None:
        labels = apply_remap(labels, remap)
    array = np.asarray(image, dtype=np.float32) / 255.0
    if mean is not None and std is not None:
        array = (array - np.asarray(mean, dtype=np.float32)) / np.asarray(std, dtype=np.float32)
    tensor = torch.from_numpy(array.transpose(2, 0, 1).copy())
    return SegmentationSample(tensor, torch.from_numpy(labels))


class CamVidDataset(Dataset):
    """Directory of images/ and labels/ files with matching stems plus a
    palette file; samples load lazily.
    """

    def __init__(self, root, ids: Optional[Sequence[str]] = None,
                 target_size: Tuple[int, int] = (512, 512),
                 mean=None, std=None, eleven_classes: bool = False,
                 palette_name: str = "palette.txt"):
        self.root = Path(root)
        self.image_dir = self.root / "images"
        self.label_dir = self.root / "labels"
        if not self.image_dir.is_dir() or not self.label_dir.is_dir():
            raise InvalidInputError(f"{root} lacks images/ and labels/ subdirectories")
        self.palette = load_palette(self.root / palette_name)
        self.remap = eleven_class_remap(self.palette) if eleven_classes else None
        self.num_classes = len(CAMVID_11_CLASSES) if eleven_classes else self.palette.num_classes
        self.target_size = tuple(target_size)
        self.mean = mean
        self.std = std
        if ids is None:
            ids = sorted(p.stem for p in self.image_dir.glob("*") if p.is_file())
        self.ids = list(ids)

    def _paths(self, stem):
        images = sorted(self.image_dir.glob(stem + ".*"))
        labels = sorted(self.label_dir.glob(stem + ".*"))
        if not images or not labels:
            raise InvalidInputError(f"sample {stem!r} lacks an image or label file")
        return images[0], labels[0]

    def __len__(self):
        return len(self.ids)

    def __getitem__(self, index):
        image_path, label_path = self._paths(self.ids[index])
        sample = load_sample(image_path, label_path, self.palette, self.target_size,
                             self.mean, self.std, self.remap)
        return sample.image, sample.labels


# -- synthetic shapes ---------------------------------------------------------

_BLOB_COLORS = np.array([
    (0.85, 0.15, 0.15), (0.15, 0.80, 0.20), (0.15, 0.25, 0.90),
    (0.90, 0.85, 0.10), (0.85, 0.15, 0.85), (0.10, 0.85, 0.85),
    (0.95, 0.55, 0.10), (0.55, 0.30, 0.75),
], dtype=np.float32)
_BACKGROUND_COLOR = np.array((0.25, 0.25, 0.25), dtype=np.float32)


class BlobDataset(Dataset):
    """Colored geometric shapes on a noisy background; shape color encodes
    the class, so the task is trivially learnable.
    """

    def __init__(self, images: torch.Tensor, labels: torch.Tensor, num_classes: int):
        self.images = images
        self.labels = labels
        self.num_classes = num_classes

    def __len__(self):
        return self.images.shape[0]

    def __getitem__(self, index):
        return self.images[index], self.labels[index]

    def class_pixel_counts(self) -> torch.Tensor:
        counts = torch.bincount(self.labels.reshape(-1), minlength=self.num_classes)
        return counts[: self.num_classes]


def synthetic_blobs(n: int, classes: int, size: Tuple[int, int] = (64, 64),
                    seed: int = 0, noise: float = 0.06) -> BlobDataset:
    """Generate n samples; class 0 is the background, classes 1..C-1 are
    foreground shapes assigned round-robin so every class occurs.
    """
    if classes < 2:
        raise InvalidInputError(f"need at least 2 classes, got {classes}")
    if classes - 1 > len(_BLOB_COLORS):
        raise InvalidInputError(f"at most {len(_BLOB_COLORS) + 1} classes supported, got {classes}")
    h, w = size
    rng = np.random.default_rng(seed)
    images = np.empty((n, 3, h, w), dtype=np.float32)
    labels = np.zeros((n, h, w), dtype=np.int64)
    shape_class = 0  # round-robin over foreground classes
    for i in range(n):
        img = np.broadcast_to(_BACKGROUND_COLOR.reshape(3, 1, 1), (3, h, w)).copy()
        lab = np.zeros((h, w), dtype=np.int64)
        for _ in range(int(rng.integers(2, 5))):
            cls = shape_class % (classes - 1) + 1
            shape_class += 1
            color = _BLOB_COLORS[cls - 1].reshape(3, 1)
            if rng.random() < 0.5:  # rectangle
                bh = int(rng.integers(h // 6, h // 2))
                bw = int(rng.integers(w // 6, w // 2))
                top = int(rng.integers(0, h - bh))
                left = int(rng.integers(0, w - bw))
                region = np.zeros((h, w), dtype=bool)
                region[top:top + bh, left:left + bw] = True
            else:  # disk
                radius = int(rng.integers(min(h, w) // 8, min(h, w) // 3))
                cy = int(rng.integers(radius, h - radius))
                cx = int(rng.integers(radius, w - radius))
                yy, xx = np.ogrid[:h, :w]
                region = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius ** 2
            img[:, region] = color
            lab[region] = cls
        img += rng.normal(0.0, noise, img.shape).astype(np.float32)
        images[i] = np.clip(img, 0.0, 1.0)
        labels[i] = lab
    return BlobDataset(torch.from_numpy(images), torch.from_numpy(labels), classes)


@dataclass
class DatasetSplits:
    train: Dataset
    val: Dataset
    test: Dataset
    num_classes: int
    manifest: Optional[SplitManifest] = None


def split_dataset(dataset: Dataset, seed: int, num_classes: Optional[int] = None) -> DatasetSplits:
    """Split any indexable dataset with the standard protocol."""
    ids = [str(i) for i in range(len(dataset))]
    manifest = build_splits(ids, seed)
    def subset(names):
        return Subset(dataset, [int(s) for s in names])
    if num_classes is None:
        num_classes = getattr(dataset, "num_classes")
    return DatasetSplits(
        train=subset(manifest.train),
        val=subset(manifest.val),
        test=subset(manifest.test),
        num_classes=num_classes,
        manifest=manifest,
    )


def compute_normalization(dataset: Dataset) -> Tuple[List[float], List[float]]:
    """Per-channel mean and std over a dataset's images."""
    total = torch.zeros(3, dtype=torch.float64)
    total_sq = torch.zeros(3, dtype=torch.float64)
    count = 0
    for i in range(len(dataset)):
        image, _ = dataset[i]
        pixels = image.reshape(3, -1).to(torch.float64)
        total += pixels.sum(dim=1)
        total_sq += (pixels ** 2).sum(dim=1)
        count += pixels.shape[1]
    mean = total / count
    var = total_sq / count - mean ** 2
    return mean.tolist(), var.clamp(min=1e-12).sqrt().tolist()


def pixel_counts(dataset: Dataset, num_classes: int,
                 ignore_index: int = VOID_LABEL) -> torch.Tensor:
    """Per-class pixel counts over a dataset, for class weighting."""
    counts = torch.zeros(num_classes, dtype=torch.long)
    for i in range(len(dataset)):
        _, labels = dataset[i]
        valid = labels[labels != ignore_index]
        counts += torch.bincount(valid.reshape(-1), minlength=num_classes)[:num_classes]
    return counts
