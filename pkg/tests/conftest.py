import numpy as np
import pytest
import torch

torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def rel_err(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.abs(a - b).max() / max(np.abs(b).max(), 1e-12))


TINY = [
    "model.embed_dim=32", "model.d_out=16", "model.d_spatial=16", "model.gtn_layers=2", "model.gtn_heads=2",
    "model.attn_heads=2", "model.d_k=8", "model.d_v=8", "model.d_noise=16", "model.regressor_hidden=32",
    "train.batch_size=4", "train.image_size=32",
]


def tiny_config(*overrides):
    from graplus.config import config_from_dict

    return config_from_dict({}, TINY + list(overrides))


def tiny_dataset(cfg, n=6, seed=0):
    from graplus.data import PlacementDataset
    from graplus.synthetic import desk_study_spec, generate_toy_dataset

    toy = generate_toy_dataset(desk_study_spec(seed), n)
    return PlacementDataset.from_toy(toy, cfg.train.image_size, cfg.model.node_budget), toy


# acceptance reporting: one PASS/FAIL line per criterion ---------------------

_CRITERIA: dict[int, list] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    n, name = marker.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
    _CRITERIA[n] = [name, status, detail]


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        name, status, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d} {status}  {name}" + (f"  [{detail}]" if detail else ""))
