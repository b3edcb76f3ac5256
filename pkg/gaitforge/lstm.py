# -*- coding: utf-8 -*-
"""
Sequence classifiers: sequence input, (bi)LSTM, fully connected layer,
softmax and argmax classification.

Networks run in float64 on the CPU so that training is reproducible per
seed and the BPTT gradients can be checked against finite differences.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional, Tuple

import numpy as np
import torch
from torch import nn
from torch.utils.data import DataLoader, TensorDataset

from gaitforge import configs
from gaitforge.classify import Dataset, DimensionMismatch
from gaitforge.misc import GaitForgeError, require

logger = logging.getLogger(__name__)
logger.setLevel(configs.LOG_LEVEL)

DTYPE = torch.float64


class NonFiniteLoss(GaitForgeError):
    """Raised when the training loss diverges; lower the learning rate."""
    pass


class LengthMismatch(GaitForgeError, ValueError):
    """Raised when a sequence length differs from the training length."""
    pass


@dataclass(frozen=True)
class LSTMConfig:
    hidden_units: int = 100
    bidirectional: bool = False
    epochs: int = 200
    learning_rate: float = 1e-3
    batch_size: int = 16
    patience: int = 10
    seed: int = 0
    log_dir: Optional[str] = None

    def __post_init__(self):
        require(self.hidden_units >= 1, "hidden_units must be >= 1")
        require(self.learning_rate > 0, "learning_rate must be positive")
        require(self.epochs >= 1, "epochs must be >= 1")
        require(self.batch_size >= 1, "batch_size must be >= 1")

    @classmethod
    def from_settings(cls, values: Optional[Mapping[str, Any]] = None,
                      seed: int = 0, bidirectional: Optional[bool] = None,
                      log_dir: Optional[str] = None):
        values = configs.DEFAULTS["lstm"] if values is None else values
        return cls(hidden_units=int(values["hidden_units"]),
                   bidirectional=bool(values["bidirectional"]
                                      if bidirectional is None
                                      else bidirectional),
                   epochs=int(values["epochs"]),
                   learning_rate=float(values["learning_rate"]),
                   batch_size=int(values["batch_size"]),
                   patience=int(values["patience"]),
                   seed=int(seed), log_dir=log_dir)


class SequenceClassifier(nn.Module):
    """(Bi)LSTM over the sequence, classified from the final hidden state."""

    def __init__(self, n_inputs: int, hidden_units: int, n_classes: int,
                 bidirectional: bool = False):
        super().__init__()
        self.lstm = nn.LSTM(n_inputs, hidden_units, batch_first=True,
                            bidirectional=bidirectional)
        directions = 2 if bidirectional else 1
        self.fc = nn.Linear(hidden_units * directions, n_classes)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        _, (h_n, _) = self.lstm(x)
        # (directions, batch, hidden) -> (batch, directions * hidden)
        last = h_n.transpose(0, 1).reshape(x.shape[0], -1)
        return self.fc(last)


@dataclass(eq=False)
class LSTMModel:
    network: SequenceClassifier
    seq_len: int
    n_features: int
    n_classes: int
    mean: np.ndarray
    std: np.ndarray
    config: LSTMConfig
    epochs_run: int = 0

    def _inputs(self, sequences) -> torch.Tensor:
        sequences = np.asarray(sequences, dtype=float)
        if sequences.ndim == 2:
            sequences = sequences[None]
        if sequences.shape[1] != self.seq_len:
            raise LengthMismatch(f"sequence length {sequences.shape[1]}, "
                                 f"model trained on {self.seq_len}")
        if sequences.shape[2] != self.n_features:
            raise DimensionMismatch(f"{sequences.shape[2]} features per "
                                    f"frame, expected {self.n_features}")
        return torch.as_tensor((sequences - self.mean) / self.std,
                               dtype=DTYPE)

    def predict_proba(self, sequences) -> np.ndarray:
        """Softmax outputs (n, C)."""
        self.network.eval()
        with torch.no_grad():
            logits = self.network(self._inputs(sequences))
            return torch.softmax(logits, dim=1).numpy()

    def predict(self, sequences) -> np.ndarray:
        # np.argmax keeps the lowest class id on ties
        return np.argmax(self.predict_proba(sequences), axis=1)


def _sequences(train: Dataset) -> np.ndarray:
    X = train.matrix()
    require(X.ndim == 3, f"LSTM training needs (n, L, D) sequences, got "
                         f"shape {X.shape}")
    return X


def _summary_writer(log_dir: Optional[str]):
    if not log_dir:
        return None
    from torch.utils.tensorboard import SummaryWriter
    Path(log_dir).mkdir(parents=True, exist_ok=True)
    return SummaryWriter(log_dir=str(log_dir))


def lstm_train(train: Dataset, cfg: LSTMConfig = None) -> LSTMModel:
    """
    Train a sequence classifier with Adam, backpropagating through time.

    Training stops after ``cfg.epochs`` or once the epoch loss has not
    improved for ``cfg.patience`` epochs.

    Raises:
        NonFiniteLoss: if the loss becomes NaN or infinite
    """
    cfg = cfg or LSTMConfig()
    require(len(train) > 0, "training set is empty")
    X = _sequences(train)
    y = train.labels()
    n_classes = len(train.classes)
    mean = X.reshape(-1, X.shape[2]).mean(axis=0)
    std = X.reshape(-1, X.shape[2]).std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(cfg.seed)
        network = SequenceClassifier(X.shape[2], cfg.hidden_units, n_classes,
                                     cfg.bidirectional).to(DTYPE)
        generator = torch.Generator().manual_seed(cfg.seed)
        loader = DataLoader(
            TensorDataset(torch.as_tensor((X - mean) / std, dtype=DTYPE),
                          torch.as_tensor(y, dtype=torch.long)),
            batch_size=cfg.batch_size, shuffle=True, generator=generator)
        optimizer = torch.optim.Adam(network.parameters(),
                                     lr=cfg.learning_rate)
        criterion = nn.CrossEntropyLoss()
        writer = _summary_writer(cfg.log_dir)

        best, stale, epoch = np.inf, 0, 0
        network.train()
        try:
            for epoch in range(1, cfg.epochs + 1):
                total = 0.0
                for inputs, targets in loader:
                    optimizer.zero_grad()
                    loss = criterion(network(inputs), targets)
                    if not torch.isfinite(loss):
                        raise NonFiniteLoss(
                            f"loss became {loss.item()} at epoch {epoch}; "
                            f"lower the learning rate "
                            f"({cfg.learning_rate:g})")
                    loss.backward()
                    optimizer.step()
                    total += loss.item() * inputs.shape[0]
                epoch_loss = total / len(train)
                if writer is not None:
                    writer.add_scalar("loss/train", epoch_loss, epoch)
                if epoch_loss < best - 1e-6:
                    best, stale = epoch_loss, 0
                else:
                    stale += 1
                if stale >= cfg.patience:
                    logger.debug(f"Early stop at epoch {epoch}, "
                                 f"loss {epoch_loss:.4e}")
                    break
        finally:
            if writer is not None:
                writer.close()

    logger.debug(f"Trained {'bi' if cfg.bidirectional else ''}LSTM on "
                 f"{len(train)} sequence(s) for {epoch} epoch(s), "
                 f"loss {best:.4e}")
    return LSTMModel(network=network, seq_len=X.shape[1],
                     n_features=X.shape[2], n_classes=n_classes, mean=mean,
                     std=std, config=cfg, epochs_run=epoch)


def lstm_predict(model: LSTMModel, sequence) -> int:
    """
    Class id of one (L, D) sequence.

    Raises:
        LengthMismatch: if L differs from the training length
    """
    return int(model.predict(np.asarray(sequence, dtype=float)[None])[0])


def lstm_predict_batch(model: LSTMModel, sequences) -> np.ndarray:
    if len(sequences) == 0:
        return np.zeros(0, dtype=int)
    return model.predict(sequences)


def bptt_gradient_error(network: nn.Module, x, y, eps: float = 1e-6
                        ) -> Tuple[float, dict]:
    """
    Compare the autograd gradients of the cross-entropy loss with central
    finite differences, parameter tensor by parameter tensor.

    Returns:
        the largest relative error and the error per parameter name
    """
    x = torch.as_tensor(x, dtype=DTYPE)
    y = torch.as_tensor(y, dtype=torch.long)
    criterion = nn.CrossEntropyLoss()

    network.zero_grad()
    criterion(network(x), y).backward()
    errors = {}
    for name, parameter in network.named_parameters():
        analytic = parameter.grad.detach().clone().reshape(-1)
        numeric = torch.zeros_like(analytic)
        flat = parameter.data.view(-1)
        with torch.no_grad():
            for i in range(flat.numel()):
                original = flat[i].item()
                flat[i] = original + eps
                plus = criterion(network(x), y).item()
                flat[i] = original - eps
                minus = criterion(network(x), y).item()
                flat[i] = original
                numeric[i] = (plus - minus) / (2.0 * eps)
        scale = max(analytic.norm().item(), numeric.norm().item(), 1e-12)
        errors[name] = (numeric - analytic).norm().item() / scale
    network.zero_grad()
    return max(errors.values()), errors
