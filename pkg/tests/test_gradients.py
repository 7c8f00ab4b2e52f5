"""Finite-difference checks (eps 1e-5, relative error <= 1e-4) for every differentiable op."""

import numpy as np
import pytest

from affinepred import ops
from affinepred.affine import AffineHead, grid_generate
from affinepred.gridnet import GridNet, GridNetConfig, synthesize
from affinepred.kernels import FilterBank, outer_kernel
from affinepred.loss import ContextExtractor, LossConfig, satd_loss, total_loss
from affinepred.model import FramePredictor, ModelConfig
from affinepred.ops import ConvSpec
from affinepred.tensor import Tensor, backward, mul, tsum
from affinepred.warp import bilinear_sample, mclc

import oracles

EPS = 1e-5
TOL = 1e-4


def check(fn, arrays, wrt=None, seed=0, max_entries=60):
    """Compare backward() with central differences of ``sum(R * fn(*inputs))``."""
    rng = np.random.default_rng(seed)
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    out = fn(*leaves)
    proj = rng.standard_normal(out.shape)
    grads = backward(tsum(mul(out, Tensor(proj))), leaves)
    for i in wrt if wrt is not None else range(len(arrays)):
        x = leaves[i].data
        idx = rng.choice(x.size, min(max_entries, x.size), replace=False)

        def f():
            return float((fn(*(Tensor(l.data) for l in leaves)).data * proj).sum())

        num = oracles.central_diff(f, x, EPS, idx).reshape(-1)[idx]
        ana = grads[leaves[i]].reshape(-1)[idx]
        assert oracles.rel_err(ana, num) <= TOL, f"input {i}"


@pytest.mark.parametrize("dilation,stride", [(1, 1), (2, 1), (4, 1), (1, 2)])
def test_conv2d(dilation, stride):
    rng = np.random.default_rng(1)
    spec = ConvSpec(3, 4, dilation=dilation, stride=stride)
    x, w, b = rng.standard_normal((2, 3, 9, 10)), rng.standard_normal((4, 3, 3, 3)), rng.standard_normal(4)
    check(lambda x, w, b: ops.conv2d(x, w, b, spec), [x, w, b])


def test_pool_resize_upsample():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((1, 2, 8, 6))
    check(ops.avg_pool2, [x])
    check(ops.bilinear_upsample2, [x])
    check(lambda t: ops.bilinear_resize(t, 5, 11), [x])


def test_activations():
    x = np.random.default_rng(3).standard_normal((2, 3, 4, 4))
    x[np.abs(x) < 1e-3] = 0.5  # stay clear of the kink
    check(ops.leaky_relu, [x])
    check(ops.tanh, [x])


def test_grid_generate_and_affine_head():
    rng = np.random.default_rng(4)
    check(grid_generate, [rng.uniform(-1, 1, (2, 3, 4, 5))])
    head = AffineHead(4, rng, width=6)
    feats = rng.standard_normal((1, 4, 6, 6))
    check(lambda f: head(f), [feats])
    check_params(lambda: head(Tensor(feats)), head.parameters())


def check_params(run, params, seed=0, per_tensor=8, skip_kinks=False):
    """Central differences on parameter tensors, perturbed in place.

    With ``skip_kinks`` an entry is dropped when the difference at ``EPS``
    disagrees with one at ``EPS / 10`` (a LeakyReLU switches inside the
    step); at least three quarters of all entries must survive.
    """
    rng = np.random.default_rng(seed)
    out = run()
    proj = rng.standard_normal(out.shape)
    grads = backward(tsum(mul(out, Tensor(proj))), params)

    def f():
        return float((run().data * proj).sum())

    kept = total = 0
    for p in params:
        idx = rng.choice(p.data.size, min(per_tensor, p.data.size), replace=False)
        num = oracles.central_diff(f, p.data, EPS, idx).reshape(-1)[idx]
        ana = grads[p].reshape(-1)[idx]
        if skip_kinks:
            fine = oracles.central_diff(f, p.data, EPS / 10, idx).reshape(-1)[idx]
            smooth = np.abs(num - fine) <= 1e-6 * np.maximum(np.abs(fine), 1e-3)
            num, ana = num[smooth], ana[smooth]
        kept, total = kept + len(num), total + len(idx)
        if len(num):
            assert oracles.rel_err(ana, num) <= TOL
    assert kept >= 0.75 * total


def test_filter_bank_and_outer_kernel():
    rng = np.random.default_rng(5)
    bank = FilterBank(4, rng, width=6)
    feats = rng.standard_normal((1, 4, 5, 5))
    check(lambda f: bank(f)[("h", 1)], [feats])
    check(outer_kernel, [rng.standard_normal((1, 8, 3, 4)), rng.standard_normal((1, 8, 3, 4))])


def test_bilinear_sample_all_inputs():
    rng = np.random.default_rng(6)
    p = rng.standard_normal((1, 2, 6, 7))
    s = rng.uniform(-1.2, 1.2, (1, 2, 6, 7))
    check(bilinear_sample, [p, s])


def test_mclc_patch_and_kernel_gradients():
    rng = np.random.default_rng(7)
    p = rng.standard_normal((1, 2, 6, 7))
    k = rng.standard_normal((1, 8, 8, 6, 7))
    s = rng.uniform(-1.2, 1.2, (1, 2, 6, 7))
    check(lambda p, k: mclc(p, k, Tensor(s)), [p, k])


def test_mclc_coordinate_gradient_is_the_surrogate():
    rng = np.random.default_rng(8)
    b, c, h, w = 1, 2, 6, 7
    p = rng.standard_normal((b, c, h, w))
    k = rng.standard_normal((b, 8, 8, h, w))
    s = Tensor(rng.uniform(-1.2, 1.2, (b, 2, h, w)), requires_grad=True)
    g = rng.standard_normal((b, c, h, w))
    out = mclc(Tensor(p), Tensor(k), s)
    grad = backward(tsum(mul(out, Tensor(g))), [s])[s]
    v = oracles.mclc(p, k, s.data)
    want_x = (g * (oracles.mclc(p, k, s.data, shift_x=1) - v)).sum(axis=1) * (w / 2)
    want_y = (g * (oracles.mclc(p, k, s.data, shift_y=1) - v)).sum(axis=1) * (h / 2)
    np.testing.assert_allclose(grad[:, 0], want_x, rtol=0, atol=1e-12)
    np.testing.assert_allclose(grad[:, 1], want_y, rtol=0, atol=1e-12)
    # the forward pass is piecewise constant in S, so true differences vanish
    num = oracles.central_diff(lambda: float((mclc(Tensor(p), Tensor(k), Tensor(s.data)).data * g).sum()), s.data, EPS)
    assert np.abs(num).max() == 0.0
    assert oracles.rel_err(grad, num) > 0.5


def test_gridnet():
    rng = np.random.default_rng(9)
    net = GridNet(GridNetConfig().scaled(0.125), rng)
    parts = [rng.random((1, 3, 8, 8)) for _ in range(4)]
    check(lambda *x: synthesize(net, *x), parts, max_entries=20)


def test_losses():
    rng = np.random.default_rng(10)
    r = rng.standard_normal((1, 2, 16, 16))
    check(lambda x: satd_loss(x, 8), [r])
    t = rng.random((1, 3, 32, 32))
    ext = ContextExtractor()
    check(lambda x: total_loss(x, Tensor(t), LossConfig(), ext).total, [rng.random((1, 3, 32, 32))], max_entries=30)


def test_model_parameters_off_the_coordinate_path():
    """Kernel, filter and synthesis weights do not pass through the floored coordinates."""
    rng = np.random.default_rng(11)
    model = FramePredictor(ModelConfig(width=0.125, seed=4))
    r1, r2 = (Tensor(rng.random((1, 3, 16, 16))) for _ in range(2))
    named = dict(model.named_parameters())
    picks = [n for n in named if n.startswith(("kernel_unet.stages.0", "filters.heads.0", "synthesis.exit",
                                                "synthesis.lateral.0"))][:6]
    check_params(lambda: model(r1, r2), [named[n] for n in picks], skip_kinks=True)
