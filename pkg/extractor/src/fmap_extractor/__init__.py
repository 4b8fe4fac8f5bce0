"""FMAP export of dense ViT attention-key features."""

from .extract import ExtractorConfig, build_extractor, extract_dir
from .fmap import write_fmap
from .vit import VARIANTS, VisionTransformer, build_model, load_pretrained, random_init

__version__ = "0.1.0"
