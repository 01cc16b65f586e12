"""
Cross-modal retrieval and attention heatmaps
============================================

"""

import tempfile
from pathlib import Path

import numpy as np

from radeval import (
    IMAGE_TO_TEXT,
    TEXT_TO_IMAGE,
    AttentionTensor,
    EmbeddingSet,
    aggregate_attention,
    recall_at_k,
    render_heatmap,
)

rng = np.random.default_rng(0)

# Paired image/text embeddings: each text vector is its image vector plus
# noise, so the true match usually ranks near the top but not always first.
n, dim = 200, 32
image_vecs = rng.normal(size=(n, dim))
text_vecs = image_vecs + rng.normal(scale=0.8, size=(n, dim))
images = EmbeddingSet(tuple(f"img-{i}" for i in range(n)), image_vecs)
texts = EmbeddingSet(tuple(f"txt-{i}" for i in range(n)), text_vecs)

# recall@k: the fraction of queries whose paired item lands in the cosine
# top k. Ties rank by candidate index, so results are deterministic.
for direction in (IMAGE_TO_TEXT, TEXT_TO_IMAGE):
    recalls = recall_at_k(images, texts, ks=[1, 5, 10], direction=direction)
    line = "  ".join(f"R@{k}={v:.3f}" for k, v in recalls.items())
    print(f"{direction:>13}: {line}")
print()

# Attention weights arrive as layers x heads x 1369 tokens per word. Reducing
# heads then layers yields one 37 x 37 grid over the image patches.
layers, heads = 12, 8
weights = rng.random((layers, heads, 37 * 37))
weights[:, :, 38 * 10] += 4.0  # plant a hotspot the reductions should keep
tensor = AttentionTensor(weights=weights)

grid = aggregate_attention(tensor, layer_mode="mean", head_mode="max")
row, col = np.unravel_index(grid.argmax(), grid.shape)
print(f"grid shape: {grid.shape}, hottest cell: ({row}, {col})")

# render_heatmap min-max normalizes the grid, upscales it nearest-neighbor to
# 518 x 518, and writes a grayscale PNG next to a JSON dump of the grid.
out_dir = Path(tempfile.mkdtemp(prefix="attention-demo-"))
png_path, json_path = render_heatmap(grid, out_dir / "word.png")
print(f"wrote {png_path}")
print(f"wrote {json_path}")
