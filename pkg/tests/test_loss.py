import numpy as np
import pytest

from affinepred.loss import (
    ContextExtractor,
    LossConfig,
    block_dct2,
    context_loss,
    dct_matrix,
    multiscale_mse,
    satd_loss,
    total_loss,
)
from affinepred.tensor import ShapeError, Tensor, backward

import oracles


@pytest.mark.parametrize("j", [8, 16, 32])
def test_dct_orthonormal(j):
    d = dct_matrix(j)
    np.testing.assert_allclose(d @ d.T, np.eye(j), atol=1e-10)
    np.testing.assert_allclose(d[0], 1 / np.sqrt(j))


def test_satd_examples():
    assert float(satd_loss(Tensor(np.zeros((1, 1, 8, 8))), 8).data) == 0.0
    r = 0.37
    assert float(satd_loss(Tensor(np.full((1, 1, 8, 8), -r)), 8).data) == pytest.approx(8 * r)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((1, 2, 16, 24))
    assert float(satd_loss(Tensor(x), 8).data) == pytest.approx(oracles.satd(x, 8), abs=1e-10)


def test_partial_blocks_dropped():
    x = np.random.default_rng(1).standard_normal((1, 1, 40, 40))
    kept = float(satd_loss(Tensor(x), 16).data)
    assert kept == pytest.approx(oracles.satd(x[:, :, :32, :32], 16), abs=1e-10)
    assert block_dct2(Tensor(x), 32).shape == (1, 1, 1, 1, 32, 32)
    with pytest.raises(ShapeError):
        block_dct2(Tensor(np.ones((1, 1, 8, 8))), 16)


def test_mse_examples():
    p = np.random.default_rng(2).random((1, 3, 8, 12))
    assert float(multiscale_mse(Tensor(p), Tensor(p), 4).data) == 0.0
    d = 0.1
    assert float(multiscale_mse(Tensor(p + d), Tensor(p), 1).data) == pytest.approx(3 * 8 * 12 * d * d)
    q = np.random.default_rng(3).random((1, 3, 8, 12))
    half = oracles.resize(p - q, 4, 6)
    assert float(multiscale_mse(Tensor(p), Tensor(q), 2).data) == pytest.approx((half**2).sum(), abs=1e-10)
    with pytest.raises(ValueError):
        multiscale_mse(Tensor(p), Tensor(q), 3)


def test_context_loss():
    ext = ContextExtractor()
    rng = np.random.default_rng(4)
    a, b = rng.random((1, 3, 32, 32)), rng.random((1, 3, 32, 32))
    assert float(context_loss(Tensor(a), Tensor(a), ext).data) == 0.0
    assert float(context_loss(Tensor(a), Tensor(b), ext).data) > 0.0
    ident = lambda t: t  # noqa: E731
    assert float(context_loss(Tensor(a), Tensor(b), ident).data) == pytest.approx(((a - b) ** 2).sum())
    assert ext.n_params() == 0  # frozen
    ext2 = ContextExtractor(seed=9)
    ext2.load_state(ext.state())
    assert float(context_loss(Tensor(a), Tensor(b), ext2).data) == float(context_loss(Tensor(a), Tensor(b), ext).data)


def test_total_loss_decomposes():
    rng = np.random.default_rng(5)
    p, t = rng.random((1, 3, 32, 32)), rng.random((1, 3, 32, 32))
    ext = ContextExtractor()
    terms = total_loss(Tensor(p), Tensor(t), LossConfig(), ext)
    expect = sum(oracles.satd(p - t, j) for j in (8, 16, 32))
    expect += sum(s * s * float(multiscale_mse(Tensor(p), Tensor(t), s).data) for s in (1, 2, 4))
    expect += float(context_loss(Tensor(p), Tensor(t), ext).data)
    assert float(terms.total.data) == pytest.approx(expect, rel=1e-12)
    assert float(terms.total.data) == pytest.approx(sum(float(v.data) for v in terms.parts.values()), rel=1e-12)
    assert float(total_loss(Tensor(p), Tensor(p), LossConfig(), ext).total.data) == 0.0


def test_ablations():
    assert set(total_loss(Tensor(np.ones((1, 3, 32, 32))), Tensor(np.zeros((1, 3, 32, 32))),
                          LossConfig.ablation("no-satd")).parts) == {"mse1", "mse2", "mse4"}
    assert LossConfig.ablation("s1-only").mse_scales == (1,)
    with pytest.raises(KeyError):
        LossConfig.ablation("bogus")
    with pytest.raises(ValueError):
        total_loss(Tensor(np.ones((1, 3, 8, 8))), Tensor(np.ones((1, 3, 8, 8))), LossConfig((), (), False))


def test_total_loss_gradient():
    rng = np.random.default_rng(6)
    p = Tensor(rng.random((1, 3, 32, 32)), requires_grad=True)
    t = rng.random((1, 3, 32, 32))
    ext = ContextExtractor()
    g = backward(total_loss(p, Tensor(t), LossConfig(), ext).total)[p]
    idx = rng.choice(p.data.size, 40, replace=False)
    num = oracles.central_diff(lambda: float(total_loss(Tensor(p.data), Tensor(t), LossConfig(), ext).total.data),
                               p.data, idx=idx)
    assert oracles.rel_err(g.reshape(-1)[idx], num.reshape(-1)[idx]) <= 1e-4
