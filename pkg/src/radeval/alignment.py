"""Image-text alignment checks: cross-modal retrieval recall and attention
heatmaps.

Embeddings pair positionally (row i of the image set belongs with row i of
the text set).  Attention tensors hold per-layer, per-head weights over a
37 x 37 = 1369 token grid and can be reduced to a single grid with mean, max,
or single-index modes, heads first and then layers.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import read_jsonl

__all__ = [
    "GRID_SIDE",
    "GRID_TOKENS",
    "IMAGE_TO_TEXT",
    "TEXT_TO_IMAGE",
    "EmbeddingSet",
    "AttentionTensor",
    "recall_at_k",
    "aggregate_attention",
    "render_heatmap",
    "read_attention",
    "write_attention",
    "read_grid_json",
    "load_embeddings_jsonl",
    "read_embeddings_binary",
    "write_embeddings_binary",
]

GRID_SIDE = 37
GRID_TOKENS = GRID_SIDE * GRID_SIDE  # 1369
RENDER_SIZE = 518  # 37 cells x 14 px

IMAGE_TO_TEXT = "image_to_text"
TEXT_TO_IMAGE = "text_to_image"
_DIRECTIONS = (IMAGE_TO_TEXT, TEXT_TO_IMAGE)

_MAGIC = b"ATTN"
_HEADER = struct.Struct("<4sIII")  # magic, dim0, dim1, dim2 (little-endian)


@dataclass(frozen=True)
class EmbeddingSet:
    """Ids plus an N x D float matrix; rows must be finite and nonzero."""

    ids: tuple[str, ...]
    vectors: np.ndarray

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=float)
        if vectors.ndim != 2:
            raise ValueError(f"vectors must be 2-D, got shape {vectors.shape}")
        if len(self.ids) != vectors.shape[0]:
            raise ValueError(f"{len(self.ids)} ids for {vectors.shape[0]} vectors")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("duplicate embedding ids")
        if not np.isfinite(vectors).all():
            raise ValueError("vectors must be finite")
        norms = np.linalg.norm(vectors, axis=1)
        if (norms == 0).any():
            raise ValueError("zero-norm vector in embedding set")
        object.__setattr__(self, "vectors", vectors)

    def __len__(self) -> int:
        return len(self.ids)


def load_embeddings_jsonl(path: str | Path) -> EmbeddingSet:
    """Read embeddings from JSONL lines of {"id": ..., "vector": [...]}."""
    ids: list[str] = []
    rows: list[list[float]] = []
    for rec in read_jsonl(path):
        ids.append(str(rec["id"]))
        rows.append([float(v) for v in rec["vector"]])
    if not rows:
        raise ValueError(f"{path}: no embeddings found")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError(f"{path}: inconsistent vector widths")
    return EmbeddingSet(tuple(ids), np.array(rows, dtype=float))


def write_embeddings_binary(path: str | Path, ids_path: str | Path, emb: EmbeddingSet) -> None:
    """Write vectors to the binary container with a sidecar id list."""
    n, d = emb.vectors.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, n, 1, d))
        fh.write(emb.vectors.astype("<f4").tobytes())
    Path(ids_path).write_text("".join(f"{i}\n" for i in emb.ids), encoding="utf-8")


def read_embeddings_binary(path: str | Path, ids_path: str | Path) -> EmbeddingSet:
    n, one, d, data = _read_container(path)
    if one != 1:
        raise ValueError(f"{path}: embedding container must have middle dim 1, got {one}")
    ids = tuple(
        line for line in Path(ids_path).read_text(encoding="utf-8").splitlines() if line
    )
    if len(ids) != n:
        raise ValueError(f"{ids_path}: {len(ids)} ids for {n} vectors")
    return EmbeddingSet(ids, data.reshape(n, d))


def _read_container(path: str | Path) -> tuple[int, int, int, np.ndarray]:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise ValueError(f"{path}: truncated container header")
    magic, d0, d1, d2 = _HEADER.unpack_from(blob)
    if magic != _MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 4 * d0 * d1 * d2
    if len(blob) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(blob)}")
    data = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).astype(float)
    return d0, d1, d2, data


# ---------------------------------------------------------------------------
# Cross-modal retrieval


def recall_at_k(
    images: EmbeddingSet,
    texts: EmbeddingSet,
    ks: Sequence[int],
    direction: str = IMAGE_TO_TEXT,
) -> dict[int, float]:
    """Fraction of queries whose positionally paired item ranks in the top k.

    Similarity is cosine; ties rank by ascending candidate index so results
    are deterministic.  Every k must satisfy 1 <= k <= N.
    """
    if direction not in _DIRECTIONS:
        raise ValueError(f"direction must be one of {_DIRECTIONS}")
    if len(images) != len(texts):
        raise ValueError(f"paired sets must match in size: {len(images)} vs {len(texts)}")
    if images.vectors.shape[1] != texts.vectors.shape[1]:
        raise ValueError(
            f"dimension mismatch: {images.vectors.shape[1]} vs {texts.vectors.shape[1]}"
        )
    n = len(images)
    ks = [int(k) for k in ks]
    for k in ks:
        if not 1 <= k <= n:
            raise ValueError(f"k={k} out of range for {n} candidates")
    queries, candidates = (images, texts) if direction == IMAGE_TO_TEXT else (texts, images)
    q = queries.vectors / np.linalg.norm(queries.vectors, axis=1, keepdims=True)
    c = candidates.vectors / np.linalg.norm(candidates.vectors, axis=1, keepdims=True)
    sims = q @ c.T
    paired = np.diag(sims)
    better = (sims > paired[:, None]).sum(axis=1)
    idx = np.arange(n)
    equal_earlier = ((sims == paired[:, None]) & (idx[None, :] < idx[:, None])).sum(axis=1)
    ranks = 1 + better + equal_earlier
    return {k: float((ranks <= k).mean()) for k in ks}


# ---------------------------------------------------------------------------
# Attention grids


@dataclass(frozen=True)
class AttentionTensor:
    """Layers x heads x 1369 nonnegative attention weights for one word."""

    weights: np.ndarray
    word: str = ""

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float)
        if weights.ndim != 3:
            raise ValueError(f"weights must be 3-D, got shape {weights.shape}")
        if weights.shape[2] != GRID_TOKENS:
            raise ValueError(
                f"token axis must have {GRID_TOKENS} entries, got {weights.shape[2]}"
            )
        if not np.isfinite(weights).all():
            raise ValueError("weights must be finite")
        if (weights < 0).any():
            raise ValueError("weights must be nonnegative")
        object.__setattr__(self, "weights", weights)

    @property
    def layers(self) -> int:
        return self.weights.shape[0]

    @property
    def heads(self) -> int:
        return self.weights.shape[1]


def write_attention(path: str | Path, tensor: AttentionTensor) -> None:
    layers, heads, tokens = tensor.weights.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, layers, heads, tokens))
        fh.write(tensor.weights.astype("<f4").tobytes())


def read_attention(
    path: str | Path,
    word: str = "",
    skip_leading_tokens: int = 0,
) -> AttentionTensor:
    """Read an attention container; optionally drop leading special tokens.

    Encoders that prepend class or register tokens store 1369 + N positions;
    ``skip_leading_tokens=N`` trims them so the grid lines up.
    """
    layers, heads, tokens, flat = _read_container(path)
    data = flat.reshape(layers, heads, tokens)
    if skip_leading_tokens:
        if skip_leading_tokens < 0 or skip_leading_tokens >= tokens:
            raise ValueError(f"cannot skip {skip_leading_tokens} of {tokens} tokens")
        data = data[:, :, skip_leading_tokens:]
    return AttentionTensor(weights=data, word=word)


def _reduce(arr: np.ndarray, mode: "int | str", axis: int) -> np.ndarray:
    if isinstance(mode, bool):
        raise ValueError("mode must be 'mean', 'max', or an integer index")
    if isinstance(mode, int):
        if not 0 <= mode < arr.shape[axis]:
            raise ValueError(f"index {mode} out of range for axis of size {arr.shape[axis]}")
        return np.take(arr, mode, axis=axis)
    if mode == "mean":
        return arr.mean(axis=axis)
    if mode == "max":
        return arr.max(axis=axis)
    raise ValueError(f"unknown mode {mode!r}; expected 'mean', 'max', or an integer")


def aggregate_attention(
    tensor: AttentionTensor,
    layer_mode: "int | str" = "mean",
    head_mode: "int | str" = "mean",
) -> np.ndarray:
    """Reduce a tensor to a 37 x 37 grid: heads first, then layers.

    Modes are "mean", "max", or an integer selecting a single layer or head.
    The token axis reshapes row-major, so flat index 38 lands at row 1, col 1.
    """
    per_layer = _reduce(tensor.weights, head_mode, axis=1)  # layers x tokens
    flat = _reduce(per_layer, layer_mode, axis=0)  # tokens
    return flat.reshape(GRID_SIDE, GRID_SIDE)


def _normalize_grid(grid: np.ndarray) -> np.ndarray:
    lo = float(grid.min())
    hi = float(grid.max())
    if hi == lo:
        return np.zeros_like(grid, dtype=float)
    return (grid - lo) / (hi - lo)


def render_heatmap(
    grid: np.ndarray,
    out_png: str | Path,
    background: str | Path | None = None,
) -> tuple[Path, Path]:
    """Write a grid as an upscaled grayscale PNG plus a JSON dump.

    The grid is min-max normalized to [0, 1] (a constant grid maps to 0),
    upscaled nearest-neighbor to 518 x 518, and optionally alpha-blended at
    50% over a background image.  Returns (png_path, json_path).
    """
    from PIL import Image, UnidentifiedImageError

    grid = np.asarray(grid, dtype=float)
    if grid.shape != (GRID_SIDE, GRID_SIDE):
        raise ValueError(f"grid must be {GRID_SIDE} x {GRID_SIDE}, got {grid.shape}")
    if not np.isfinite(grid).all():
        raise ValueError("grid must be finite")
    norm = _normalize_grid(grid)
    out_png = Path(out_png)
    json_path = out_png.with_suffix(".json")
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump({"shape": [GRID_SIDE, GRID_SIDE], "grid": norm.tolist()}, fh, sort_keys=True)
    scale = RENDER_SIZE // GRID_SIDE
    pixels = np.round(norm * 255).astype(np.uint8)
    upscaled = np.repeat(np.repeat(pixels, scale, axis=0), scale, axis=1)
    heat = Image.fromarray(upscaled, mode="L")
    if background is not None:
        try:
            with Image.open(background) as bg:
                base = bg.convert("RGB").resize((RENDER_SIZE, RENDER_SIZE))
        except (OSError, UnidentifiedImageError) as exc:
            raise ValueError(f"unreadable background image {background}: {exc}") from exc
        blended = Image.blend(base, heat.convert("RGB"), alpha=0.5)
        blended.save(out_png, format="PNG")
    else:
        heat.save(out_png, format="PNG")
    return out_png, json_path


def read_grid_json(path: str | Path) -> np.ndarray:
    """Re-read a JSON grid dump written by :func:`render_heatmap`."""
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    grid = np.array(obj["grid"], dtype=float)
    if grid.shape != (GRID_SIDE, GRID_SIDE):
        raise ValueError(f"{path}: grid has shape {grid.shape}")
    return grid
