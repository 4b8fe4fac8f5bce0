"""Minimal ViT backbone exposing the final attention block's key vectors.

Architecture and checkpoint layout follow the standard self-supervised ViT
releases (patch-embedding conv, class token, learned position embeddings with
bicubic rescaling for off-size inputs, pre-norm blocks with a fused qkv
projection), so published backbone checkpoints load directly from a local
path. The dense features exported per patch are the per-head key vectors of
the last attention layer, concatenated over heads.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

VARIANTS = {
    "vit_small": dict(embed_dim=384, depth=12, num_heads=6),
    "vit_base": dict(embed_dim=768, depth=12, num_heads=12),
}
CANONICAL_IMAGE_SIZE = 224  # grid the position embeddings are trained at


class Attention(nn.Module):
    def __init__(self, dim: int, num_heads: int):
        super().__init__()
        self.num_heads = num_heads
        self.scale = (dim // num_heads) ** -0.5
        self.qkv = nn.Linear(dim, dim * 3, bias=True)
        self.proj = nn.Linear(dim, dim)

    def split_qkv(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        b, n, d = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self.num_heads, d // self.num_heads)
        qkv = qkv.permute(2, 0, 3, 1, 4)  # (3, b, heads, n, head_dim)
        return qkv[0], qkv[1], qkv[2]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, n, d = x.shape
        q, k, v = self.split_qkv(x)
        attn = (q @ k.transpose(-2, -1)) * self.scale
        attn = attn.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, n, d)
        return self.proj(out)


class Mlp(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.act(self.fc1(x)))


class Block(nn.Module):
    def __init__(self, dim: int, num_heads: int, mlp_ratio: int = 4):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim, eps=1e-6)
        self.attn = Attention(dim, num_heads)
        self.norm2 = nn.LayerNorm(dim, eps=1e-6)
        self.mlp = Mlp(dim, dim * mlp_ratio)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class VisionTransformer(nn.Module):
    def __init__(self, patch_size: int, embed_dim: int, depth: int, num_heads: int):
        super().__init__()
        self.patch_size = patch_size
        self.embed_dim = embed_dim
        self.patch_embed_proj = nn.Conv2d(3, embed_dim, patch_size, stride=patch_size)
        self.cls_token = nn.Parameter(torch.zeros(1, 1, embed_dim))
        canonical = (CANONICAL_IMAGE_SIZE // patch_size) ** 2
        self.pos_embed = nn.Parameter(torch.zeros(1, canonical + 1, embed_dim))
        self.blocks = nn.ModuleList(Block(embed_dim, num_heads) for _ in range(depth))
        self.norm = nn.LayerNorm(embed_dim, eps=1e-6)
        nn.init.trunc_normal_(self.pos_embed, std=0.02)
        nn.init.trunc_normal_(self.cls_token, std=0.02)

    def _interpolated_pos_embed(self, grid_h: int, grid_w: int) -> torch.Tensor:
        cls_pos = self.pos_embed[:, :1]
        patch_pos = self.pos_embed[:, 1:]
        n0 = patch_pos.shape[1]
        side = int(round(math.sqrt(n0)))
        if (grid_h, grid_w) == (side, side):
            return self.pos_embed
        patch_pos = patch_pos.reshape(1, side, side, -1).permute(0, 3, 1, 2)
        patch_pos = F.interpolate(
            patch_pos, size=(grid_h, grid_w), mode="bicubic", align_corners=False
        )
        patch_pos = patch_pos.permute(0, 2, 3, 1).reshape(1, grid_h * grid_w, -1)
        return torch.cat([cls_pos, patch_pos], dim=1)

    def _embed(self, images: torch.Tensor) -> torch.Tensor:
        b, _, height, width = images.shape
        if height % self.patch_size or width % self.patch_size:
            raise ValueError(
                f"input {height}x{width} not divisible by patch {self.patch_size}"
            )
        x = self.patch_embed_proj(images).flatten(2).transpose(1, 2)
        cls = self.cls_token.expand(b, -1, -1)
        x = torch.cat([cls, x], dim=1)
        return x + self._interpolated_pos_embed(
            height // self.patch_size, width // self.patch_size
        )

    @torch.no_grad()
    def last_attention_keys(self, images: torch.Tensor) -> torch.Tensor:
        """Per-patch key vectors of the final attention layer, heads concatenated.

        Returns (batch, grid_h * grid_w, embed_dim); the class token is dropped.
        """
        x = self._embed(images)
        for block in self.blocks[:-1]:
            x = block(x)
        last = self.blocks[-1]
        _, keys, _ = last.attn.split_qkv(last.norm1(x))
        b, _, n, _ = keys.shape
        keys = keys.transpose(1, 2).reshape(b, n, self.embed_dim)
        return keys[:, 1:]


def _strip_prefixes(state: dict) -> dict:
    out = {}
    for key, value in state.items():
        for prefix in ("module.", "backbone."):
            if key.startswith(prefix):
                key = key[len(prefix):]
        out[key] = value
    return out


def _rename_patch_embed(state: dict) -> dict:
    # released checkpoints call the embedding conv "patch_embed.proj"
    return {
        key.replace("patch_embed.proj.", "patch_embed_proj."): value
        for key, value in state.items()
    }


def build_model(variant: str, patch_size: int) -> VisionTransformer:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {sorted(VARIANTS)}")
    if patch_size not in (8, 16):
        raise ValueError(f"patch size must be 8 or 16, got {patch_size}")
    model = VisionTransformer(patch_size=patch_size, **VARIANTS[variant])
    model.eval()
    return model


def load_pretrained(model: VisionTransformer, weights_path: str) -> None:
    state = torch.load(weights_path, map_location="cpu", weights_only=True)
    if isinstance(state, dict) and "teacher" in state:
        state = state["teacher"]
    if isinstance(state, dict) and "state_dict" in state:
        state = state["state_dict"]
    state = _rename_patch_embed(_strip_prefixes(state))
    state = {k: v for k, v in state.items() if not k.startswith("head.")}
    missing, unexpected = model.load_state_dict(state, strict=False)
    if missing:
        raise ValueError(f"checkpoint is missing parameters: {sorted(missing)[:5]} ...")
    if unexpected:
        raise ValueError(f"checkpoint has unexpected parameters: {sorted(unexpected)[:5]} ...")


def random_init(model: VisionTransformer, seed: int) -> None:
    """Deterministic random weights; used for contract tests and dry runs."""
    generator = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for param in model.parameters():
            param.copy_(torch.randn(param.shape, generator=generator) * 0.02)
