"""One-shot extraction: images in, FMAP files plus a size manifest out."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from .fmap import write_fmap
from .vit import build_model, load_pretrained, random_init

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".ppm", ".tif", ".tiff")
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class ExtractorConfig:
    variant: str = "vit_small"
    patch_size: int = 8
    resize: tuple[int, int] = (224, 224)  # (H', W'), divisible by patch_size
    device: str = "cpu"
    weights: str | None = None  # local checkpoint path
    init: str = "pretrained"  # "pretrained" | "random"
    seed: int = 0

    def validate(self) -> None:
        h, w = self.resize
        if h % self.patch_size or w % self.patch_size:
            raise ValueError(
                f"resize {h}x{w} is not divisible by patch size {self.patch_size}"
            )
        if h // self.patch_size < 2 or w // self.patch_size < 2:
            raise ValueError("resize gives a feature grid smaller than 2x2")
        if self.init not in ("pretrained", "random"):
            raise ValueError("init must be 'pretrained' or 'random'")
        if self.init == "pretrained" and not self.weights:
            raise ValueError(
                "pretrained init needs --weights pointing at a local checkpoint "
                "(or pass --init random for a seeded dry run)"
            )


def _load_image(path: Path, resize: tuple[int, int]) -> tuple[torch.Tensor, int, int]:
    try:
        with Image.open(path) as img:
            img = img.convert("RGB")
            orig_w, orig_h = img.size
            target_h, target_w = resize
            img = img.resize((target_w, target_h), Image.Resampling.BICUBIC)
            array = np.asarray(img, dtype=np.float32) / 255.0
    except UnidentifiedImageError as exc:
        raise ValueError(f"{path.name}: not a decodable image") from exc
    array = (array - np.array(IMAGENET_MEAN, dtype=np.float32)) / np.array(
        IMAGENET_STD, dtype=np.float32
    )
    tensor = torch.from_numpy(array).permute(2, 0, 1).unsqueeze(0)
    return tensor, orig_h, orig_w


def build_extractor(cfg: ExtractorConfig):
    cfg.validate()
    model = build_model(cfg.variant, cfg.patch_size)
    if cfg.init == "random":
        random_init(model, cfg.seed)
    else:
        load_pretrained(model, cfg.weights)
    return model.to(cfg.device)


def extract_dir(frames_dir, out_dir, cfg: ExtractorConfig) -> dict:
    """Extract every image under frames_dir; returns the manifest payload."""
    frames_dir = Path(frames_dir)
    out_dir = Path(out_dir)
    paths = sorted(
        p for p in frames_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
    )
    if not paths:
        raise ValueError(f"no images found under {frames_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)
    model = build_extractor(cfg)

    # single-threaded float32 inference keeps repeated runs byte-identical
    previous_threads = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        entries = []
        grid_h = cfg.resize[0] // cfg.patch_size
        grid_w = cfg.resize[1] // cfg.patch_size
        for path in paths:
            tensor, orig_h, orig_w = _load_image(path, cfg.resize)
            keys = model.last_attention_keys(tensor.to(cfg.device))
            features = (
                keys[0].cpu().numpy().astype(np.float32).reshape(grid_h, grid_w, -1)
            )
            write_fmap(features, out_dir / f"{path.stem}.fmap")
            entries.append(
                {
                    "frame_id": path.stem,
                    "H": orig_h,
                    "W": orig_w,
                    "h": grid_h,
                    "w": grid_w,
                    "d": int(features.shape[2]),
                }
            )
    finally:
        torch.set_num_threads(previous_threads)

    manifest = {
        "extractor": {
            "variant": cfg.variant,
            "patch_size": cfg.patch_size,
            "resize": list(cfg.resize),
            "feature_source": "final-attention-keys",
            "init": cfg.init,
            "seed": cfg.seed,
        },
        "frames": entries,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )
    return manifest
