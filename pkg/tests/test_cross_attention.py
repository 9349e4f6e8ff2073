import math

import numpy as np
import pytest
import torch

from graplus.cross_attention import CapacityError, CrossModalAttention, cross_attend

from conftest import rel_err


def loop_oracle(m: CrossModalAttention, c_hat: torch.Tensor, x: torch.Tensor) -> np.ndarray:
    P = {k: v.detach().double().numpy() for k, v in m.state_dict().items()}
    c = c_hat.double().numpy()
    x = x.double().numpy()
    n = x.shape[0]
    heads = []
    for h in range(m.heads):
        rk = slice(h * m.d_k, (h + 1) * m.d_k)
        rv = slice(h * m.d_v, (h + 1) * m.d_v)
        q = P["w_q.weight"][rk] @ c
        scores = []
        for j in range(n):
            k = P["w_k.weight"][rk] @ x[j] + (P["pe_k"][h, j] if "pe_k" in P else 0)
            scores.append(sum(q[i] * k[i] for i in range(m.d_k)) / math.sqrt(m.d_k))
        mx = max(scores)
        w = [math.exp(s - mx) for s in scores]
        z = sum(w)
        f = np.zeros(m.d_v)
        for j in range(n):
            v = P["w_v.weight"][rv] @ x[j] + (P["pe_v"][h, j] if "pe_v" in P else 0)
            f += w[j] / z * v
        heads.append(f)
    y = P["w_o.weight"] @ np.concatenate(heads)
    if m.use_residual:
        y = y + c
    mu, var = y.mean(), y.var()
    return (y - mu) / np.sqrt(var + m.norm.eps) * P["norm.weight"] + P["norm.bias"]


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("pe,res", [(True, True), (False, True), (True, False)])
def test_matches_loop_oracle(seed, pe, res):
    torch.manual_seed(seed)
    m = CrossModalAttention(16, 12, heads=4, d_k=5, d_v=3, n_max=8, use_pos_encoding=pe, use_residual=res)
    if pe:
        torch.nn.init.normal_(m.pe_k)
        torch.nn.init.normal_(m.pe_v)
    c_hat, x = torch.randn(16), torch.randn(3, 16)
    got = cross_attend(c_hat, x, m).f_att.detach().numpy()
    assert rel_err(got, loop_oracle(m, c_hat, x)) < 1e-5


def test_single_key_weights_are_one():
    m = CrossModalAttention(8, 8, heads=2, d_k=4, d_v=4, n_max=4)
    res = cross_attend(torch.randn(8), torch.randn(1, 8), m)
    assert torch.equal(res.weights, torch.ones(2, 1))


def test_identical_keys_uniform_weights():
    m = CrossModalAttention(8, 8, heads=2, d_k=4, d_v=4, n_max=4, use_pos_encoding=False)
    x = torch.randn(1, 8).expand(4, 8)
    res = cross_attend(torch.randn(8), x, m)
    assert torch.allclose(res.weights, torch.full((2, 4), 0.25))


def test_padded_keys_ignored():
    m = CrossModalAttention(8, 8, heads=2, d_k=4, d_v=4, n_max=6, use_pos_encoding=False)
    c, x = torch.randn(1, 8), torch.randn(1, 3, 8)
    mask = torch.tensor([[True, True, True, False, False]])
    padded = torch.cat([x, torch.randn(1, 2, 8)], 1)
    a, b = m.attend(c, x), m.attend(c, padded, mask)
    assert torch.allclose(a.f_att, b.f_att, atol=1e-6)
    assert (b.weights[..., 3:] == 0).all()


def test_projection_is_affine():
    m = CrossModalAttention(16, 12)
    c = torch.randn(12)
    with torch.no_grad():
        lhs = m.project_foreground(2 * c) - m.project_foreground(c)
        rhs = m.project_foreground(c) - m.project_foreground(torch.zeros(12))
    assert torch.allclose(lhs, rhs, atol=1e-5)
    torch.nn.init.zeros_(m.p_f.weight)
    assert torch.equal(m.project_foreground(c), m.p_f.bias)
    sq = CrossModalAttention(768, 768)
    with torch.no_grad():
        sq.p_f.weight.copy_(torch.eye(768))
        sq.p_f.bias.zero_()
    c = torch.randn(768)
    assert torch.allclose(sq.project_foreground(c), c)


def test_no_pe_has_no_parameters():
    names = {n for n, _ in CrossModalAttention(16, 12, use_pos_encoding=False).named_parameters()}
    assert not names & {"pe_k", "pe_v"}


def test_capacity():
    m = CrossModalAttention(8, 8, heads=2, d_k=4, d_v=4, n_max=3)
    with pytest.raises(CapacityError):
        cross_attend(torch.randn(8), torch.randn(4, 8), m)


def test_weights_json_rows_sum_to_one():
    m = CrossModalAttention(8, 8, heads=2, d_k=4, d_v=4, n_max=5)
    res = m(torch.randn(2, 8), torch.randn(2, 5, 8))
    rows = res.weights_json(1)
    assert len(rows) == 2 and all(abs(sum(r) - 1) < 1e-6 for r in rows)
