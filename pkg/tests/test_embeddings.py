import itertools

import numpy as np
import pytest

from graplus.embeddings import (
    EMBED_DIM, EmbeddingFormatError, EmbeddingTable, ForegroundQuery, fallback_embedding, load_embedding_table,
    lookup, save_embedding_table,
)


def _table(n_obj=151, n_rel=51, seed=0):
    r = np.random.default_rng(seed)
    objs = {f"obj{i}": r.standard_normal(EMBED_DIM).astype(np.float32) for i in range(n_obj)}
    rels = {f"rel{i}": r.standard_normal(EMBED_DIM).astype(np.float32) for i in range(n_rel)}
    return EmbeddingTable(objs, rels)


@pytest.mark.parametrize("sidecar", [False, True])
def test_full_vocabulary_round_trip(tmp_path, sidecar):
    table = _table()
    path = tmp_path / "emb.json"
    save_embedding_table(table, path, sidecar=sidecar)
    loaded = load_embedding_table(path)
    assert len(loaded) == 202
    for k, v in table.object_vectors.items():
        assert np.array_equal(loaded.object_vectors[k], v)


def test_empty_file_gives_empty_table(tmp_path):
    path = tmp_path / "empty.json"
    path.write_text("")
    table = load_embedding_table(path)
    assert len(table) == 0
    assert np.allclose(lookup(table, "cup", "object"), fallback_embedding("cup", "object"))


def test_wrong_length_vector_rejected(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"objects": {"cup": [%s]}}' % ",".join(["0.1"] * 767))
    with pytest.raises(EmbeddingFormatError):
        load_embedding_table(path)


def test_duplicates_counted(tmp_path):
    vec = ",".join(["0.5"] * EMBED_DIM)
    path = tmp_path / "dup.json"
    path.write_text('{"objects": {"cup": [%s], "cup": [%s]}}' % (vec, vec))
    assert load_embedding_table(path).duplicates == 1


def test_present_label_bit_identical():
    table = _table(3, 1)
    assert lookup(table, "obj1", "object") is table.object_vectors["obj1"]


def test_fallback_deterministic_and_unit_norm():
    a = fallback_embedding("cup", "object", 7)
    assert np.array_equal(a, fallback_embedding("cup", "object", 7))
    assert abs(np.linalg.norm(a.astype(np.float64)) - 1) < 1e-6
    assert not np.array_equal(a, fallback_embedding("cup", "relation", 7))
    assert not np.array_equal(a, fallback_embedding("cup", "object", 8))


def test_fallback_distinct_labels_nearly_orthogonal():
    # empirical oracle: cosine of independent unit Gaussians in 768-d has std ~ 1/sqrt(768) ~ 0.036
    labels = [f"label-{i}" for i in range(1000)]
    vecs = np.stack([fallback_embedding(lb, "object", 0) for lb in labels]).astype(np.float64)
    pairs = np.random.default_rng(0).choice(len(labels), size=(1000, 2))
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    cos = np.abs((vecs[pairs[:, 0]] * vecs[pairs[:, 1]]).sum(1))
    assert cos.max() < 0.3


def test_fallback_coordinates_centered():
    vecs = np.stack([fallback_embedding(f"w{i}", "object", 3) for i in range(10_000)]).astype(np.float64)
    assert np.abs(vecs.mean(0)).max() < 0.01


def test_foreground_query_validates():
    with pytest.raises(ValueError):
        ForegroundQuery("cup", np.zeros(EMBED_DIM), 0, 10)
    with pytest.raises(ValueError):
        ForegroundQuery("cup", np.full(EMBED_DIM, np.nan), 10, 10)
