"""Batch feature extraction from an image folder to an FPFT1 file.

The dataset layout is one subdirectory per class; class labels follow the
sorted subdirectory names. A JSON sidecar records the backbone, its
preprocessing, the label mapping, and whether rows were L2-normalized,
so downstream experiments know exactly how the features were produced.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .backbones import BACKBONE_DIMS, load_backbone
from .fpft_io import write_fpft

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".webp")


class ExtractionError(Exception):
    pass


@dataclass(frozen=True)
class ExtractionJob:
    image_dir: str
    backbone: str
    output_path: str
    batch_size: int = 32
    normalize: bool = False
    pretrained: bool = True

    def __post_init__(self):
        if self.backbone not in BACKBONE_DIMS:
            raise ValueError(
                f"unknown backbone {self.backbone!r}; choose one of {sorted(BACKBONE_DIMS)}"
            )
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def _scan_images(root: Path):
    if not root.is_dir():
        raise ExtractionError(f"image directory not found: {root}")
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise ExtractionError(f"no class subdirectories under {root}")
    items = []
    for label, class_dir in enumerate(class_dirs):
        files = sorted(
            p for p in class_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
        )
        items.extend((p, label) for p in files)
    if not items:
        raise ExtractionError(f"no images found under {root}")
    return items, [p.name for p in class_dirs]


def extract(job: ExtractionJob) -> Path:
    """Run the backbone over every image and write the FPFT1 file.

    Returns the output path; a `<output>.json` sidecar is written next to
    it. One feature row per image, labels ordered as the images were
    scanned (sorted class dirs, sorted file names).
    """
    root = Path(job.image_dir)
    items, class_names = _scan_images(root)
    backbone = load_backbone(job.backbone, pretrained=job.pretrained)
    rows = []
    with torch.no_grad():
        for start in range(0, len(items), job.batch_size):
            chunk = items[start : start + job.batch_size]
            tensors = []
            for path, _ in chunk:
                with Image.open(path) as img:
                    tensors.append(backbone.preprocess(img.convert("RGB")))
            emb = backbone.embed(torch.stack(tensors))
            rows.append(emb.to(torch.float32).cpu().numpy())
    features = np.concatenate(rows)
    if features.shape[1] != backbone.dim:
        raise ExtractionError(
            f"backbone produced width {features.shape[1]}, declared {backbone.dim}"
        )
    if job.normalize:
        norms = np.linalg.norm(features.astype(np.float64), axis=1, keepdims=True)
        features = (features / np.maximum(norms, 1e-12)).astype(np.float32)
    labels = np.array([label for _, label in items], dtype=np.int64)
    out = Path(job.output_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_fpft(out, features, labels, num_classes=len(class_names))
    sidecar = {
        "backbone": job.backbone,
        "dim": backbone.dim,
        "pretrained": job.pretrained,
        "normalize": job.normalize,
        "preprocessing": backbone.preprocess_note,
        "num_images": len(items),
        "classes": {name: i for i, name in enumerate(class_names)},
    }
    out.with_suffix(out.suffix + ".json").write_text(json.dumps(sidecar, indent=2) + "\n")
    return out
