"""
Dense feed-forward networks in float64 torch, their JSON serialization and
the differentiable pieces used by the losses: p-norm losses and fixed-step
Runge-Kutta rollouts of a network vector field.
"""

from __future__ import annotations

import json
import math
from typing import Callable, Dict, List, Optional

import numpy as np
import torch
from torch import nn

from config.constants import MLP_DEPTH, MLP_WIDTH
from utils.errors import ContractViolation, MissingArtifactError
from utils.ode_core import RK4, ButcherTableau

DTYPE = torch.float64

ACTIVATIONS_DICT: Dict[str, Callable[[], nn.Module]] = {
    "gelu": lambda: nn.GELU(approximate="none"),
    "silu": nn.SiLU,
    "hardswish": nn.Hardswish,
    "leaky_relu": nn.LeakyReLU,
    "relu": nn.ReLU,
}


class Mlp(nn.Module):
    """
    y(0) = x, y(l) = act(W(l) y(l-1) + b(l)) for l < depth, last layer linear.

    `depth` counts the linear layers, so depth - 1 hidden layers of `width`.
    `provenance` lists the training phases the weights went through.
    """

    def __init__(self, input_dim: int, output_dim: int, depth: int, width: int,
                 activation: str = "gelu", seed: Optional[int] = None):
        super().__init__()
        if activation not in ACTIVATIONS_DICT:
            raise ContractViolation(f"Unknown activation '{activation}', expected one of {list(ACTIVATIONS_DICT)}")
        if (not MLP_DEPTH[0] <= depth <= MLP_DEPTH[1] or not MLP_WIDTH[0] <= width <= MLP_WIDTH[1]
                or input_dim < 1 or output_dim < 1):
            raise ContractViolation(
                f"Invalid network shape: depth={depth}, width={width}, in={input_dim}, out={output_dim}")
        self.input_dim = int(input_dim)
        self.output_dim = int(output_dim)
        self.depth = int(depth)
        self.width = int(width)
        self.activation = activation
        self.seed = seed
        self.provenance: List[str] = []
        self.normalizer_refs: Dict[str, object] = {}

        dims = [self.input_dim] + [self.width] * (self.depth - 1) + [self.output_dim]
        self.layers = nn.ModuleList(
            nn.Linear(dims[i], dims[i + 1], dtype=DTYPE) for i in range(self.depth))
        self.act = ACTIVATIONS_DICT[activation]()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for layer in self.layers[:-1]:
            x = self.act(layer(x))
        return self.layers[-1](x)

    def has_phase(self, phase: str) -> bool:
        return phase in self.provenance

    def mark_phase(self, phase: str) -> None:
        if phase not in self.provenance:
            self.provenance.append(phase)

    def all_finite(self) -> bool:
        return all(bool(torch.isfinite(p).all()) for p in self.parameters())

    def snapshot(self) -> Dict[str, torch.Tensor]:
        return {k: v.detach().clone() for k, v in self.state_dict().items()}

    def restore(self, snapshot: Dict[str, torch.Tensor]) -> None:
        self.load_state_dict(snapshot)

    def to_dict(self) -> dict:
        return {
            "depth": self.depth,
            "width": self.width,
            "activation": self.activation,
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "weights": [layer.weight.detach().cpu().tolist() for layer in self.layers],
            "biases": [layer.bias.detach().cpu().tolist() for layer in self.layers],
            "normalizers": self.normalizer_refs,
            "seed": self.seed,
            "provenance": list(self.provenance),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        net = cls(d["input_dim"], d["output_dim"], d["depth"], d["width"], d["activation"], d.get("seed"))
        if len(d["weights"]) != net.depth or len(d["biases"]) != net.depth:
            raise ContractViolation("Serialized network has the wrong number of layers")
        with torch.no_grad():
            for layer, w, b in zip(net.layers, d["weights"], d["biases"]):
                w = torch.tensor(w, dtype=DTYPE)
                b = torch.tensor(b, dtype=DTYPE)
                if w.shape != layer.weight.shape or b.shape != layer.bias.shape:
                    raise ContractViolation(f"Layer shape mismatch: {tuple(w.shape)} vs {tuple(layer.weight.shape)}")
                layer.weight.copy_(w)
                layer.bias.copy_(b)
        net.provenance = list(d.get("provenance", []))
        net.normalizer_refs = dict(d.get("normalizers") or {})
        return net


def init_parameters(input_dim: int, output_dim: int, depth: int, width: int,
                    activation: str = "gelu", seed: int = 0) -> Mlp:
    """New Mlp with weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), fully determined by seed."""
    net = Mlp(input_dim, output_dim, depth, width, activation, seed)
    gen = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for layer in net.layers:
            bound = 1.0 / math.sqrt(layer.in_features)
            layer.weight.copy_(torch.rand(layer.weight.shape, generator=gen, dtype=DTYPE) * 2 * bound - bound)
            layer.bias.copy_(torch.rand(layer.bias.shape, generator=gen, dtype=DTYPE) * 2 * bound - bound)
    return net


def as_tensor(x) -> torch.Tensor:
    if torch.is_tensor(x):
        return x.to(DTYPE)
    return torch.as_tensor(np.asarray(x, dtype=float), dtype=DTYPE)


def forward(net: Mlp, x) -> torch.Tensor:
    """Evaluate net on one input vector or a batch of rows."""
    x = as_tensor(x)
    if x.shape[-1] != net.input_dim:
        raise ContractViolation(f"Network expects {net.input_dim} inputs, got {x.shape[-1]}")
    return net(x)


def gradient(loss: torch.Tensor, net: Mlp, retain_graph: bool = False) -> List[torch.Tensor]:
    """Reverse-mode gradient of a scalar loss with respect to every network parameter."""
    if loss.dim() != 0:
        raise ContractViolation("gradient() needs a scalar loss")
    grads = torch.autograd.grad(loss, list(net.parameters()), retain_graph=retain_graph, allow_unused=True)
    return [torch.zeros_like(p) if g is None else g for p, g in zip(net.parameters(), grads)]


def pnorm_loss(prediction: torch.Tensor, target: torch.Tensor, p: float = 2) -> torch.Tensor:
    """mean(|prediction - target|^p); for p = 1 the subgradient at zero residual is 0."""
    if prediction.shape != target.shape:
        raise ContractViolation(f"Shape mismatch {tuple(prediction.shape)} vs {tuple(target.shape)}")
    if p not in (1, 2, 4):
        raise ContractViolation(f"Supported norm exponents are 1, 2, 4, got {p}")
    residual = prediction - target
    if p == 1:
        return residual.abs().mean()
    return residual.pow(int(p)).mean()


def rk_unroll(field: Callable[[torch.Tensor], torch.Tensor], u0: torch.Tensor, dts: float,
              steps: int, tableau: ButcherTableau = RK4) -> torch.Tensor:
    """
    Differentiable fixed-step explicit rollout of an autonomous field.

    Returns:
        (steps + 1, ...) tensor of every intermediate state, u0 first.
    """
    if not tableau.explicit:
        raise ContractViolation(f"rk_unroll requires an explicit tableau, '{tableau.name}' is implicit")
    a = tableau.a.tolist()
    b = tableau.b.tolist()
    s = tableau.stage_count
    out = [u0]
    u = u0
    for _ in range(int(steps)):
        k: List[torch.Tensor] = []
        for i in range(s):
            ui = u
            for j in range(i):
                if a[i][j] != 0.0:
                    ui = ui + dts * a[i][j] * k[j]
            k.append(field(ui))
        incr = sum(b[i] * k[i] for i in range(s) if b[i] != 0.0)
        u = u + dts * incr
        out.append(u)
    return torch.stack(out)


def save_mlp(net: Mlp, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(net.to_dict(), fh)


def load_mlp(path: str) -> Mlp:
    try:
        with open(path, "r") as fh:
            return Mlp.from_dict(json.load(fh))
    except FileNotFoundError:
        raise MissingArtifactError(f"Network file not found: {path}")
