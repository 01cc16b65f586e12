import json
import random
import struct

import numpy as np
import pytest
from PIL import Image

from radeval.alignment import (
    GRID_SIDE,
    GRID_TOKENS,
    IMAGE_TO_TEXT,
    RENDER_SIZE,
    TEXT_TO_IMAGE,
    AttentionTensor,
    EmbeddingSet,
    aggregate_attention,
    load_embeddings_jsonl,
    read_attention,
    read_embeddings_binary,
    read_grid_json,
    recall_at_k,
    render_heatmap,
    write_attention,
    write_embeddings_binary,
)

from oracles import recall_oracle


def make_set(rows, prefix="e"):
    arr = np.array(rows, dtype=float)
    return EmbeddingSet(tuple(f"{prefix}{i}" for i in range(arr.shape[0])), arr)


def random_tensor(rng, layers=2, heads=3):
    data = rng.random((layers, heads, GRID_TOKENS))
    return AttentionTensor(weights=data, word="effusion")


def test_grid_constants():
    assert GRID_SIDE == 37
    assert GRID_TOKENS == 1369
    assert RENDER_SIZE == 518
    assert RENDER_SIZE == GRID_SIDE * 14


def test_embedding_set_validation():
    with pytest.raises(ValueError):
        EmbeddingSet(("a",), np.zeros((1, 3)))  # zero norm
    with pytest.raises(ValueError):
        EmbeddingSet(("a", "a"), np.ones((2, 3)))  # duplicate ids
    with pytest.raises(ValueError):
        EmbeddingSet(("a",), np.ones(3))  # 1-D
    with pytest.raises(ValueError):
        EmbeddingSet(("a", "b"), np.ones((1, 3)))  # count mismatch
    bad = np.ones((2, 3))
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        EmbeddingSet(("a", "b"), bad)


def test_embeddings_jsonl(tmp_path):
    path = tmp_path / "emb.jsonl"
    path.write_text(
        '{"id": "a", "vector": [1.0, 0.0]}\n{"id": "b", "vector": [0.0, 1.0]}\n',
        encoding="utf-8",
    )
    emb = load_embeddings_jsonl(path)
    assert emb.ids == ("a", "b")
    assert emb.vectors.shape == (2, 2)
    path.write_text(
        '{"id": "a", "vector": [1.0, 0.0]}\n{"id": "b", "vector": [1.0]}\n',
        encoding="utf-8",
    )
    with pytest.raises(ValueError):
        load_embeddings_jsonl(path)
    path.write_text("", encoding="utf-8")
    with pytest.raises(ValueError):
        load_embeddings_jsonl(path)


def test_embeddings_binary_round_trip(tmp_path):
    rng = np.random.default_rng(8)
    emb = make_set(rng.normal(size=(5, 7)))
    bin_path = tmp_path / "emb.bin"
    ids_path = tmp_path / "emb.ids"
    write_embeddings_binary(bin_path, ids_path, emb)
    back = read_embeddings_binary(bin_path, ids_path)
    assert back.ids == emb.ids
    # payload is float32, so round-trip through f32 exactly
    assert np.array_equal(back.vectors, emb.vectors.astype("<f4").astype(float))


def test_binary_container_validation(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"XXXX" + struct.pack("<III", 1, 1, 2) + b"\x00" * 8)
    with pytest.raises(ValueError, match="magic"):
        read_embeddings_binary(path, tmp_path / "ids")
    path.write_bytes(struct.pack("<4sIII", b"ATTN", 1, 1, 2) + b"\x00" * 4)
    with pytest.raises(ValueError, match="bytes"):
        read_embeddings_binary(path, tmp_path / "ids")
    path.write_bytes(b"AT")
    with pytest.raises(ValueError, match="truncated"):
        read_embeddings_binary(path, tmp_path / "ids")
    # id count mismatch
    good = tmp_path / "good.bin"
    ids = tmp_path / "good.ids"
    write_embeddings_binary(good, ids, make_set([[1.0, 0.0], [0.0, 1.0]]))
    ids.write_text("only-one\n", encoding="utf-8")
    with pytest.raises(ValueError, match="ids"):
        read_embeddings_binary(good, ids)


def test_recall_hand_case_with_ties():
    # text candidates 0 and 1 are identical, so the tie breaks by index:
    # query 0 pairs with candidate 0 (rank 1), query 1 with candidate 1 (rank 2)
    images = make_set([[1.0, 0.0], [1.0, 0.0]], prefix="img")
    texts = make_set([[1.0, 0.0], [1.0, 0.0]], prefix="txt")
    out = recall_at_k(images, texts, [1, 2], direction=IMAGE_TO_TEXT)
    assert out == {1: 0.5, 2: 1.0}


def test_recall_perfect_when_aligned():
    vecs = np.eye(4) + 0.01
    images = make_set(vecs, prefix="img")
    texts = make_set(vecs, prefix="txt")
    out = recall_at_k(images, texts, [1], direction=TEXT_TO_IMAGE)
    assert out == {1: 1.0}


def test_recall_matches_oracle_random():
    rng = np.random.default_rng(14)
    for _ in range(10):
        n, d = 12, 5
        imgs = rng.normal(size=(n, d))
        txts = imgs + rng.normal(scale=0.8, size=(n, d))
        images = make_set(imgs, prefix="img")
        texts = make_set(txts, prefix="txt")
        ks = [1, 3, n]
        got = recall_at_k(images, texts, ks, direction=IMAGE_TO_TEXT)
        want = recall_oracle(imgs.tolist(), txts.tolist(), ks)
        for k in ks:
            assert got[k] == pytest.approx(want[k], abs=1e-12)
        assert got[n] == 1.0
        assert got[1] <= got[3] <= got[n]
        flipped = recall_at_k(images, texts, ks, direction=TEXT_TO_IMAGE)
        want_flipped = recall_oracle(txts.tolist(), imgs.tolist(), ks)
        for k in ks:
            assert flipped[k] == pytest.approx(want_flipped[k], abs=1e-12)


def test_recall_validation():
    images = make_set([[1.0, 0.0], [0.0, 1.0]], prefix="img")
    texts = make_set([[1.0, 0.0], [0.0, 1.0]], prefix="txt")
    with pytest.raises(ValueError):
        recall_at_k(images, texts, [0])
    with pytest.raises(ValueError):
        recall_at_k(images, texts, [3])
    with pytest.raises(ValueError):
        recall_at_k(images, texts, [1], direction="sideways")
    with pytest.raises(ValueError):
        recall_at_k(images, make_set([[1.0, 0.0]], prefix="t"), [1])
    wide = make_set([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], prefix="w")
    with pytest.raises(ValueError):
        recall_at_k(images, wide, [1])


def test_attention_tensor_validation():
    rng = np.random.default_rng(2)
    with pytest.raises(ValueError):
        AttentionTensor(weights=rng.random((2, 3, 100)))
    bad = rng.random((1, 1, GRID_TOKENS))
    bad[0, 0, 5] = -0.1
    with pytest.raises(ValueError):
        AttentionTensor(weights=bad)
    with pytest.raises(ValueError):
        AttentionTensor(weights=rng.random((2, GRID_TOKENS)))
    tensor = AttentionTensor(weights=rng.random((4, 6, GRID_TOKENS)), word="edema")
    assert tensor.layers == 4
    assert tensor.heads == 6


def test_attention_binary_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    tensor = random_tensor(rng)
    path = tmp_path / "attn.bin"
    write_attention(path, tensor)
    back = read_attention(path, word="effusion")
    assert back.word == "effusion"
    assert back.weights.shape == tensor.weights.shape
    assert np.array_equal(back.weights, tensor.weights.astype("<f4").astype(float))


def test_read_attention_skips_leading_tokens(tmp_path):
    # encoders that prepend a class token store 1370 positions
    layers, heads, tokens = 2, 2, GRID_TOKENS + 1
    rng = np.random.default_rng(12)
    data = rng.random((layers, heads, tokens)).astype("<f4")
    path = tmp_path / "cls.bin"
    path.write_bytes(struct.pack("<4sIII", b"ATTN", layers, heads, tokens) + data.tobytes())
    tensor = read_attention(path, skip_leading_tokens=1)
    assert tensor.weights.shape == (layers, heads, GRID_TOKENS)
    assert np.array_equal(tensor.weights, data[:, :, 1:].astype(float))
    with pytest.raises(ValueError):
        read_attention(path)  # 1370 tokens without skipping
    with pytest.raises(ValueError):
        read_attention(path, skip_leading_tokens=tokens)


def test_aggregate_attention_modes():
    rng = np.random.default_rng(21)
    tensor = random_tensor(rng, layers=3, heads=4)
    mean_grid = aggregate_attention(tensor)
    assert mean_grid.shape == (GRID_SIDE, GRID_SIDE)
    assert mean_grid[0, 0] == pytest.approx(tensor.weights[:, :, 0].mean())
    max_grid = aggregate_attention(tensor, layer_mode="max", head_mode="max")
    assert np.all(max_grid >= mean_grid - 1e-12)
    picked = aggregate_attention(tensor, layer_mode=1, head_mode=2)
    assert picked[0, 0] == pytest.approx(tensor.weights[1, 2, 0])
    with pytest.raises(ValueError):
        aggregate_attention(tensor, layer_mode=3)
    with pytest.raises(ValueError):
        aggregate_attention(tensor, head_mode="median")
    with pytest.raises(ValueError):
        aggregate_attention(tensor, layer_mode=True)


def test_aggregate_attention_reshape_is_row_major():
    weights = np.zeros((1, 1, GRID_TOKENS))
    weights[0, 0, 38] = 1.0  # one full row of 37 plus one -> row 1, col 1
    grid = aggregate_attention(AttentionTensor(weights=weights))
    r, c = np.unravel_index(grid.argmax(), grid.shape)
    assert (r, c) == (1, 1)


def test_render_heatmap(tmp_path):
    rng = np.random.default_rng(33)
    grid = rng.random((GRID_SIDE, GRID_SIDE))
    png_path, json_path = render_heatmap(grid, tmp_path / "heat.png")
    with Image.open(png_path) as img:
        assert img.size == (RENDER_SIZE, RENDER_SIZE)
        assert img.mode == "L"
    norm = read_grid_json(json_path)
    assert norm.min() == 0.0 and norm.max() == 1.0
    # normalization is affine, so argmax is preserved
    assert norm.argmax() == grid.argmax()
    # JSON dump round-trips bitwise
    again = json.loads(json_path.read_text())["grid"]
    assert again == norm.tolist()


def test_render_heatmap_constant_grid_is_black(tmp_path):
    grid = np.full((GRID_SIDE, GRID_SIDE), 0.7)
    png_path, json_path = render_heatmap(grid, tmp_path / "flat.png")
    assert np.array_equal(read_grid_json(json_path), np.zeros((GRID_SIDE, GRID_SIDE)))
    with Image.open(png_path) as img:
        assert img.convert("L").getextrema() == (0, 0)


def test_render_heatmap_background_blend(tmp_path):
    bg_path = tmp_path / "bg.png"
    Image.new("RGB", (100, 200), color=(255, 0, 0)).save(bg_path)
    grid = np.zeros((GRID_SIDE, GRID_SIDE))
    grid[0, 0] = 1.0
    png_path, _ = render_heatmap(grid, tmp_path / "blend.png", background=bg_path)
    with Image.open(png_path) as img:
        assert img.size == (RENDER_SIZE, RENDER_SIZE)
        assert img.mode == "RGB"
        # bottom-right cell: heat 0 over red background at 50%
        r, g, b = img.getpixel((RENDER_SIZE - 1, RENDER_SIZE - 1))
        assert r in (127, 128) and g == 0 and b == 0
    with pytest.raises(ValueError):
        render_heatmap(grid, tmp_path / "x.png", background=tmp_path / "missing.png")


def test_render_heatmap_validation(tmp_path):
    with pytest.raises(ValueError):
        render_heatmap(np.zeros((5, 5)), tmp_path / "n.png")
    bad = np.zeros((GRID_SIDE, GRID_SIDE))
    bad[0, 0] = np.inf
    with pytest.raises(ValueError):
        render_heatmap(bad, tmp_path / "n.png")
