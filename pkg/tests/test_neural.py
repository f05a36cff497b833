import numpy as np
import pytest
import torch

from utils.errors import ContractViolation, MissingArtifactError
from utils.neural import (
    DTYPE, Mlp, as_tensor, forward, gradient, init_parameters, load_mlp,
    pnorm_loss, rk_unroll, save_mlp,
)
from utils.ode_core import RADAU_IIA5, RK4, solve_fixed


def test_shape_and_dtype():
    net = init_parameters(3, 2, depth=4, width=8, seed=1)
    assert len(net.layers) == 4
    assert all(p.dtype == DTYPE for p in net.parameters())
    assert forward(net, [0.1, 0.2, 0.3]).shape == (2,)
    assert forward(net, np.zeros((5, 3))).shape == (5, 2)
    with pytest.raises(ContractViolation):
        forward(net, [0.1, 0.2])


@pytest.mark.parametrize("depth, width", [(1, 8), (2, 8), (11, 8), (3, 4), (3, 101)])
def test_shape_outside_the_allowed_ranges(depth, width):
    with pytest.raises(ContractViolation):
        Mlp(3, 2, depth=depth, width=width)


def test_shape_range_limits_are_accepted():
    assert len(Mlp(3, 2, depth=3, width=5).layers) == 3
    assert Mlp(3, 2, depth=10, width=100).layers[4].weight.shape == (100, 100)


def test_invalid_activation():
    with pytest.raises(ContractViolation):
        Mlp(3, 2, depth=3, width=8, activation="tanh-ish")


def test_initialization_is_seeded():
    a = init_parameters(2, 1, 3, 6, seed=7)
    b = init_parameters(2, 1, 3, 6, seed=7)
    c = init_parameters(2, 1, 3, 6, seed=8)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert torch.equal(pa, pb)
    assert not torch.equal(a.layers[0].weight, c.layers[0].weight)
    bound = 1.0 / np.sqrt(2)
    assert float(a.layers[0].weight.abs().max()) <= bound


@pytest.mark.parametrize("activation", ["gelu", "silu", "hardswish", "leaky_relu", "relu"])
def test_gradients_match_finite_differences(activation):
    net = init_parameters(2, 2, depth=3, width=5, activation=activation, seed=0)
    x = torch.tensor([[0.3, -0.7], [1.1, 0.4]], dtype=DTYPE, requires_grad=True)
    assert torch.autograd.gradcheck(net, (x,), eps=1e-6, atol=1e-5)


def test_gradient_helper_returns_one_tensor_per_parameter():
    net = init_parameters(2, 1, 3, 5, seed=0)
    loss = net(as_tensor([[1.0, 2.0]])).sum()
    grads = gradient(loss, net)
    assert [g.shape for g in grads] == [p.shape for p in net.parameters()]
    with pytest.raises(ContractViolation):
        gradient(net(as_tensor([[1.0, 2.0], [0.0, 1.0]])), net)


def test_pnorm_loss():
    pred = torch.tensor([1.0, -1.0, 3.0], dtype=DTYPE)
    target = torch.tensor([0.0, 1.0, 3.0], dtype=DTYPE)
    assert float(pnorm_loss(pred, target, 1)) == pytest.approx(1.0)
    assert float(pnorm_loss(pred, target, 2)) == pytest.approx(5.0 / 3)
    assert float(pnorm_loss(pred, target, 4)) == pytest.approx(17.0 / 3)
    with pytest.raises(ContractViolation):
        pnorm_loss(pred, target, 3)
    with pytest.raises(ContractViolation):
        pnorm_loss(pred, target[:2])


def test_l1_subgradient_is_zero_at_zero_residual():
    pred = torch.tensor([2.0, 0.5], dtype=DTYPE, requires_grad=True)
    pnorm_loss(pred, torch.tensor([2.0, 0.0], dtype=DTYPE), 1).backward()
    np.testing.assert_allclose(pred.grad.numpy(), [0.0, 0.5])


def test_rk_unroll_matches_the_numpy_solver():
    out = rk_unroll(lambda u: -u, as_tensor([1.0, 2.0]), 0.1, 5)
    traj, _ = solve_fixed(lambda t, u: -u, [1.0, 2.0], 0.0, 0.5, 0.1, tableau=RK4)
    assert out.shape == (6, 2)
    np.testing.assert_allclose(out.numpy(), traj.states, rtol=1e-14)


def test_rk_unroll_loss_is_differentiable():
    net = init_parameters(2, 2, depth=3, width=6, seed=3)
    u0 = torch.tensor([[0.5, -0.2]], dtype=DTYPE, requires_grad=True)
    assert torch.autograd.gradcheck(lambda u: rk_unroll(net, u, 0.05, 5), (u0,), eps=1e-6, atol=1e-5)

    target = torch.zeros(6, 1, 2, dtype=DTYPE)
    grads = gradient(pnorm_loss(rk_unroll(net, u0.detach(), 0.05, 5), target, 2), net)
    assert all(torch.isfinite(g).all() for g in grads)
    assert any(float(g.abs().sum()) > 0 for g in grads)


def test_rk_unroll_refuses_implicit_tableaux():
    with pytest.raises(ContractViolation):
        rk_unroll(lambda u: -u, as_tensor([1.0]), 0.1, 2, tableau=RADAU_IIA5)


def test_serialization_round_trip(tmp_path):
    net = init_parameters(3, 1, 3, 5, activation="silu", seed=5)
    net.mark_phase("supervised")
    net.normalizer_refs = {"state": "vdp"}
    path = str(tmp_path / "net.json")
    save_mlp(net, path)
    back = load_mlp(path)
    x = as_tensor(np.random.default_rng(0).normal(size=(4, 3)))
    assert torch.equal(back(x), net(x))
    assert back.provenance == ["supervised"] and back.has_phase("supervised")
    assert back.normalizer_refs == {"state": "vdp"}
    with pytest.raises(MissingArtifactError):
        load_mlp(str(tmp_path / "missing.json"))


def test_snapshot_and_restore():
    net = init_parameters(2, 1, 3, 5, seed=0)
    snap = net.snapshot()
    with torch.no_grad():
        net.layers[0].weight.add_(1.0)
    net.restore(snap)
    assert torch.equal(net.layers[0].weight, snap["layers.0.weight"])
    assert net.all_finite()
