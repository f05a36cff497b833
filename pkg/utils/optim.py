"""
Optimizer stack of a training run: AdamW, reduce-on-plateau learning-rate
schedule and early stopping with a best-parameter snapshot.
"""

from __future__ import annotations

import math
from typing import Dict, List, Optional, Sequence

import torch

from config.constants import (
    ADAM_BETAS, ADAM_EPS, MAX_EPOCHS_SUPERVISED, PLATEAU_FACTOR, PLATEAU_PATIENCE, WEIGHT_DECAY,
)
from utils.errors import ContractViolation
from utils.neural import Mlp


class OptimizerState:
    """
    Owns the AdamW optimizer of one network together with its scheduler and
    early-stopping bookkeeping.

    The plateau scheduler halves the learning rate once `patience`
    consecutive epochs brought no strict improvement of the validation loss.
    Early stopping keeps the parameters of the best validation epoch; the
    run stops at `max_epochs`, or earlier when `stop_patience` is set and
    that many epochs pass without improvement.
    """

    def __init__(self, net: Mlp, lr: float, weight_decay: float = WEIGHT_DECAY,
                 betas: Sequence[float] = ADAM_BETAS, eps: float = ADAM_EPS,
                 factor: float = PLATEAU_FACTOR, patience: int = PLATEAU_PATIENCE,
                 max_epochs: int = MAX_EPOCHS_SUPERVISED, stop_patience: Optional[int] = None):
        if not lr > 0:
            raise ContractViolation(f"Learning rate must be positive, got {lr!r}")
        if weight_decay < 0:
            raise ContractViolation(f"Weight decay must be non-negative, got {weight_decay!r}")
        if patience < 1:
            raise ContractViolation(f"Scheduler patience must be at least 1, got {patience}")
        self.net = net
        self.optimizer = torch.optim.AdamW(net.parameters(), lr=lr, betas=tuple(betas), eps=eps,
                                           weight_decay=weight_decay)
        self.factor = factor
        self.patience = patience
        self.scheduler = self._make_scheduler()
        self.max_epochs = int(max_epochs)
        self.stop_patience = stop_patience

        self.epoch = 0
        self.best_loss = math.inf
        self.best_epoch: Optional[int] = None
        self.best_state: Optional[Dict[str, torch.Tensor]] = None
        self.epochs_since_best = 0
        self.skipped_steps = 0
        self.diagnostics: List[str] = []

    def _make_scheduler(self):
        # torch reduces after more than `patience` bad epochs
        return torch.optim.lr_scheduler.ReduceLROnPlateau(
            self.optimizer, mode="min", factor=self.factor, patience=self.patience - 1,
            threshold=0.0, threshold_mode="abs", cooldown=0, min_lr=0.0, eps=0.0)

    @property
    def lr(self) -> float:
        return float(self.optimizer.param_groups[0]["lr"])

    def set_lr(self, lr: float) -> None:
        for group in self.optimizer.param_groups:
            group["lr"] = lr

    def begin_stage(self, lr: float) -> None:
        """Switch to a new schedule stage: learning rate `lr` and a fresh plateau counter. The best snapshot is kept."""
        self.set_lr(lr)
        self.scheduler = self._make_scheduler()

    def set_baseline(self, validation_loss: float) -> None:
        """Count the current parameters as the best so far, e.g. the result of an earlier phase."""
        if math.isfinite(validation_loss):
            self.best_loss = float(validation_loss)
            self.best_epoch = 0
            self.best_state = self.net.snapshot()

    def adamw_step(self, grads: Optional[Sequence[torch.Tensor]] = None) -> bool:
        """
        Apply one AdamW update from `grads` (or from the .grad fields already set).

        Returns False, leaving parameters and moments untouched, when a
        gradient is missing or non-finite.
        """
        params = list(self.net.parameters())
        if grads is not None:
            if len(grads) != len(params):
                raise ContractViolation(f"Expected {len(params)} gradients, got {len(grads)}")
            for p, g in zip(params, grads):
                if g.shape != p.shape:
                    raise ContractViolation(f"Gradient shape {tuple(g.shape)} does not match {tuple(p.shape)}")
                p.grad = g.detach().clone()
        finite = all(p.grad is not None and bool(torch.isfinite(p.grad).all()) for p in params)
        if not finite:
            self.skipped_steps += 1
            self.diagnostics.append(f"Skipped optimizer step at epoch {self.epoch}: non-finite gradient")
            self.optimizer.zero_grad(set_to_none=True)
            return False
        self.optimizer.step()
        self.optimizer.zero_grad(set_to_none=True)
        return True

    def scheduler_update(self, validation_loss: float) -> float:
        """Feed one epoch's validation loss to the plateau scheduler; returns the learning rate in force."""
        self.scheduler.step(validation_loss)
        return self.lr

    def early_stopping_update(self, validation_loss: float) -> bool:
        """
        Record one epoch. Keeps a snapshot of the parameters when the loss is
        a new strict minimum.

        Returns:
            True to continue training, False to stop.
        """
        self.epoch += 1
        if math.isfinite(validation_loss) and validation_loss < self.best_loss:
            self.best_loss = float(validation_loss)
            self.best_epoch = self.epoch
            self.best_state = self.net.snapshot()
            self.epochs_since_best = 0
        else:
            self.epochs_since_best += 1
        if self.epoch >= self.max_epochs:
            return False
        if self.stop_patience is not None and self.epochs_since_best >= self.stop_patience:
            return False
        return True

    def end_epoch(self, validation_loss: float) -> bool:
        """scheduler_update followed by early_stopping_update."""
        self.scheduler_update(validation_loss)
        return self.early_stopping_update(validation_loss)

    def restore_best(self) -> None:
        if self.best_state is not None:
            self.net.restore(self.best_state)

    def state_snapshot(self) -> dict:
        """Epoch-boundary checkpoint of the whole optimizer stack."""
        return {
            "optimizer": self.optimizer.state_dict(),
            "scheduler": self.scheduler.state_dict(),
            "epoch": self.epoch,
            "best_loss": self.best_loss,
            "best_epoch": self.best_epoch,
            "best_state": self.best_state,
            "epochs_since_best": self.epochs_since_best,
        }

    def load_snapshot(self, snapshot: dict) -> None:
        self.optimizer.load_state_dict(snapshot["optimizer"])
        self.scheduler.load_state_dict(snapshot["scheduler"])
        self.epoch = snapshot["epoch"]
        self.best_loss = snapshot["best_loss"]
        self.best_epoch = snapshot["best_epoch"]
        self.best_state = snapshot["best_state"]
        self.epochs_since_best = snapshot["epochs_since_best"]
