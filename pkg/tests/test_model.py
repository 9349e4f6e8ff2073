import numpy as np
import pytest
import torch

from graplus.data import PlacementDataset, foreground_planes
from graplus.model import PlacementGenerator, Vocabulary, collate_graphs, encode_graph
from graplus.scene_graph import BoundingBox, SceneEdge, SceneGraph, SceneNode
from graplus.synthetic import render_foreground

from conftest import tiny_config, tiny_dataset


def _graph():
    nodes = [SceneNode(1, "a", BoundingBox(0, 0, 10, 10), 0.2), SceneNode(2, "b", BoundingBox(5, 5, 10, 20), 0.9),
             SceneNode(3, "c", BoundingBox(20, 0, 30, 10), 0.5)]
    edges = [SceneEdge(0, 1, 1, "near"), SceneEdge(1, 2, 2, "on")]
    return SceneGraph(nodes, edges, 64, 48)


def test_encode_orders_by_confidence_and_remaps_edges():
    enc = encode_graph(_graph(), 20)
    assert enc.object_labels == ["b", "c", "a"]
    assert enc.relation_labels == {(2, 0): "near", (0, 1): "on"}
    assert enc.adjacency.sum() == 2 and enc.adjacency[2, 0] and enc.adjacency[0, 1]
    assert enc.spatial[0, :6].tolist() == [64, 48, 5, 5, 10, 20]


def test_encode_respects_budget():
    enc = encode_graph(_graph(), 2)
    assert enc.object_labels == ["b", "c"] and enc.relation_labels == {(0, 1): "on"}


def test_collate_pads():
    objs, rels = Vocabulary(["a", "b", "c"]), Vocabulary(["near", "on"])
    batch = collate_graphs([encode_graph(_graph(), 20), encode_graph(_graph(), 1)], objs, rels)
    assert batch["objects"].shape == (2, 3)
    assert batch["node_mask"].tolist() == [[True, True, True], [True, False, False]]
    assert batch["objects"][1, 1:].tolist() == [0, 0]
    assert torch.isfinite(batch["spatial"]).all()


def test_generator_output_in_unit_cube_and_noise_matters():
    cfg = tiny_config()
    ds, _ = tiny_dataset(cfg)
    objs, rels = ds.vocabularies()
    gen = PlacementGenerator(cfg.model, objs, rels)
    batch = ds.graph_batch([0, 1, 2], objs, rels)
    fg = torch.tensor([objs["cup"]] * 3)
    t1, att = gen(batch, fg, torch.randn(3, 16))
    t2, _ = gen(batch, fg, torch.randn(3, 16))
    assert t1.shape == (3, 3) and ((t1 > 0) & (t1 < 1)).all()
    assert not torch.equal(t1, t2)
    assert torch.allclose(att.weights.sum(-1), torch.ones(3, 2))


def test_spatial_flag_changes_width():
    on, off = tiny_config(), tiny_config("model.use_spatial=false")
    objs, rels = Vocabulary(["a"]), Vocabulary(["r"])
    assert PlacementGenerator(on.model, objs, rels).regressor.net[0].in_features == 32 + 16
    assert PlacementGenerator(off.model, objs, rels).regressor.net[0].in_features == 16 + 16
    assert PlacementGenerator(off.model, objs, rels).spatial is None


def test_trainable_embeddings_flag():
    objs, rels = Vocabulary(["a"]), Vocabulary(["r"])
    frozen = dict(PlacementGenerator(tiny_config().model, objs, rels).named_parameters())
    live = dict(PlacementGenerator(tiny_config("model.trainable_embeddings=true").model, objs, rels).named_parameters())
    assert "object_embed" not in frozen and "object_embed" in live


def test_foreground_planes_fit_and_center():
    img, mask = render_foreground("cup", (48, 64))
    fg, m, dims = foreground_planes(img, mask, (256, 128), 64)
    # 48x64 fitted into 256x128 is 96x128, i.e. 24x64 px at 64x64
    assert dims == (24.0, 64.0)
    cols = torch.nonzero(m[0].sum(0) > 0).flatten()
    assert cols.min().item() >= 20 and cols.max().item() <= 43


def test_dataset_from_directory_matches_toy(tmp_path):
    from graplus.synthetic import write_dataset

    cfg = tiny_config()
    ds, toy = tiny_dataset(cfg, n=3)
    write_dataset(toy, tmp_path)
    back = PlacementDataset.from_directory(tmp_path, cfg.train.image_size, cfg.model.node_budget)
    assert len(back.samples) == len(ds.samples) == 9
    assert back.real_ids == ds.real_ids
    a, b = ds.composite_sample(4), back.composite_sample(4)
    assert torch.equal(a.bg, b.bg) and torch.equal(a.mask, b.mask) and torch.equal(a.t, b.t)
