"""
Toy Vision Transformer over fused (K, rows, cols) class tensors.

Pre-norm encoder: patch embedding + class token + learned positions, `depth`
blocks of multi-head self-attention and a GELU MLP, final layer norm and a
linear head on the class token.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from railfuse import tensor as T
from railfuse.dataset import read_fwt, write_fwt
from railfuse.errors import ConfigError, ShapeError
from railfuse.tensor import AdamState, Tensor, adam_step


@dataclass
class ViTConfig:
    num_classes: int = 3
    height: int = 20
    width: int = 20
    patch_size: int = 4
    num_heads: int = 4
    embed_dim: int = 64
    depth: int = 4
    mlp_ratio: int = 2
    learning_rate: float = 1e-6
    max_epochs: int = 100
    patience: int = 10
    batch_size: int = 32
    seed: int = 0

    def validate(self) -> None:
        if self.height % self.patch_size or self.width % self.patch_size:
            raise ConfigError(f"{self.height}x{self.width} map is not divisible by patch {self.patch_size}")
        if self.embed_dim % self.num_heads:
            raise ConfigError("embed_dim must be divisible by num_heads")
        if self.learning_rate <= 0 or self.max_epochs < 1 or self.batch_size < 1:
            raise ConfigError("learning_rate, max_epochs and batch_size must be positive")

    @property
    def num_patches(self) -> int:
        return (self.height // self.patch_size) * (self.width // self.patch_size)

    @property
    def num_tokens(self) -> int:
        return self.num_patches + 1

    @property
    def patch_dim(self) -> int:
        return self.num_classes * self.patch_size**2


def patchify(x: np.ndarray, p: int) -> np.ndarray:
    """(..., K, H, W) -> (..., (H/p)*(W/p), K*p*p), patches in row-major grid order."""
    *lead, k, h, w = x.shape
    if h % p or w % p:
        raise ShapeError(f"{h}x{w} is not divisible by patch size {p}")
    gh, gw = h // p, w // p
    y = x.reshape(*lead, k, gh, p, gw, p)
    n = len(lead)
    # -> (..., gh, gw, K, p, p)
    y = np.moveaxis(y, [n + 1, n + 3], [n, n + 1])
    return y.reshape(*lead, gh * gw, k * p * p)


def unpatchify(tokens: np.ndarray, k: int, h: int, w: int, p: int) -> np.ndarray:
    *lead, _, _ = tokens.shape
    gh, gw = h // p, w // p
    n = len(lead)
    y = tokens.reshape(*lead, gh, gw, k, p, p)
    y = np.moveaxis(y, [n, n + 1], [n + 1, n + 3])
    return y.reshape(*lead, k, h, w)


class ViTModel:
    def __init__(self, config: ViTConfig):
        config.validate()
        self.config = config
        rng = np.random.default_rng(np.random.SeedSequence([int(config.seed), 0xA77]))
        d, k = config.embed_dim, config.num_classes
        hidden = d * config.mlp_ratio
        self.params: dict[str, Tensor] = {}

        def dense(name, fan_in, fan_out):
            std = np.sqrt(2.0 / (fan_in + fan_out))
            self._add(f"{name}.w", rng.normal(0.0, std, (fan_in, fan_out)))
            self._add(f"{name}.b", np.zeros(fan_out))

        dense("embed", config.patch_dim, d)
        self._add("cls_token", rng.normal(0.0, 0.02, (1, d)))
        self._add("pos_embed", rng.normal(0.0, 0.02, (config.num_tokens, d)))
        for i in range(config.depth):
            self._add(f"block{i}.ln1.g", np.ones(d))
            self._add(f"block{i}.ln1.b", np.zeros(d))
            dense(f"block{i}.qkv", d, 3 * d)
            dense(f"block{i}.proj", d, d)
            self._add(f"block{i}.ln2.g", np.ones(d))
            self._add(f"block{i}.ln2.b", np.zeros(d))
            dense(f"block{i}.fc1", d, hidden)
            dense(f"block{i}.fc2", hidden, d)
        self._add("norm.g", np.ones(d))
        self._add("norm.b", np.zeros(d))
        dense("head", d, k)

    def _add(self, name: str, value: np.ndarray) -> None:
        self.params[name] = Tensor(value, requires_grad=True, name=name)

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for name, t in self.params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != t.shape:
                raise ShapeError(f"{name}: checkpoint shape {value.shape} != {t.shape}")
            t.data = value.copy()

    # -- forward ------------------------------------------------------------------

    def _attention(self, x: Tensor, i: int) -> Tensor:
        c = self.config
        P = self.params
        b, n, d = x.shape
        h, dh = c.num_heads, d // c.num_heads
        qkv = x @ P[f"block{i}.qkv.w"] + P[f"block{i}.qkv.b"]
        qkv = qkv.reshape(b, n, 3, h, dh).transpose(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(dh))
        attn = T.softmax(scores, axis=-1)
        out = (attn @ v).transpose(0, 2, 1, 3).reshape(b, n, d)
        return out @ P[f"block{i}.proj.w"] + P[f"block{i}.proj.b"]

    def _mlp(self, x: Tensor, i: int) -> Tensor:
        P = self.params
        hdn = T.gelu(x @ P[f"block{i}.fc1.w"] + P[f"block{i}.fc1.b"])
        return hdn @ P[f"block{i}.fc2.w"] + P[f"block{i}.fc2.b"]

    def logits(self, x: np.ndarray) -> Tensor:
        """Class logits for a batch (B, K, H, W) or a single (K, H, W) tensor."""
        c = self.config
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 3:
            x = x[None]
        if x.shape[1:] != (c.num_classes, c.height, c.width):
            raise ShapeError(f"input {x.shape[1:]} does not match ({c.num_classes}, {c.height}, {c.width})")
        P = self.params
        b = x.shape[0]
        tokens = Tensor(patchify(x, c.patch_size))
        z = tokens @ P["embed.w"] + P["embed.b"]
        cls = T.broadcast_to(P["cls_token"], (b, 1, c.embed_dim))
        z = T.concat([cls, z], axis=1) + P["pos_embed"]
        for i in range(c.depth):
            z = z + self._attention(T.layer_norm(z, P[f"block{i}.ln1.g"], P[f"block{i}.ln1.b"]), i)
            z = z + self._mlp(T.layer_norm(z, P[f"block{i}.ln2.g"], P[f"block{i}.ln2.b"]), i)
        z = T.layer_norm(z, P["norm.g"], P["norm.b"])
        return z[:, 0, :] @ P["head.w"] + P["head.b"]

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Logits and class probabilities (numpy) for a batch or a single tensor."""
        lg = self.logits(x)
        return lg.data, T.softmax(lg, axis=-1).data

    def predict(self, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if len(x) == 0:
            return np.zeros(0, dtype=np.int64)
        out = [np.argmax(self.logits(x[i:i + batch_size]).data, axis=1) for i in range(0, len(x), batch_size)]
        return np.concatenate(out)


def classify(model: ViTModel, fused: np.ndarray, target: int) -> tuple[bool, np.ndarray]:
    """One-against-all reading: positive iff the most probable class is `target`."""
    _, probs = model.forward(fused)
    probs = probs[0]
    return int(np.argmax(probs)) == target, probs


# -- training ------------------------------------------------------------------------


@dataclass
class TrainReport:
    train_acc: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)
    stop_epoch: int = 0
    best_epoch: int = 0

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_acc", "val_acc", "loss"])
            for e, (ta, va, lo) in enumerate(zip(self.train_acc, self.val_acc, self.loss), start=1):
                w.writerow([e, f"{ta:.6f}", f"{va:.6f}", f"{lo:.8f}"])


def _accuracy(model: ViTModel, x: np.ndarray, y: np.ndarray) -> float:
    if len(y) == 0:
        return 0.0
    return float(np.mean(model.predict(x) == y))


def train(
    model: ViTModel,
    x_train: np.ndarray,
    y_train: np.ndarray,
    x_val: np.ndarray | None = None,
    y_val: np.ndarray | None = None,
    config: ViTConfig | None = None,
) -> tuple[ViTModel, TrainReport]:
    """Cross-entropy training with Adam and early stopping on validation accuracy.

    The parameters with the best validation accuracy are restored at the end.
    Without a validation set, training accuracy drives early stopping.
    """
    config = config or model.config
    y_train = np.asarray(y_train, dtype=np.int64)
    if len(y_train) == 0:
        raise ValueError("empty training set")
    if y_train.min() < 0 or y_train.max() >= model.config.num_classes:
        raise ValueError("training label out of range")
    if x_val is None or y_val is None or len(y_val) == 0:
        x_val, y_val = x_train, y_train
    y_val = np.asarray(y_val, dtype=np.int64)

    params = model.parameters()
    state = AdamState.for_params(params, lr=config.learning_rate)
    rng = np.random.default_rng(np.random.SeedSequence([int(config.seed), 0x7EA1]))
    report = TrainReport()
    best_acc, best_state, stale = -1.0, model.state_dict(), 0
    n = len(y_train)

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        total, correct = 0.0, 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            logits = model.logits(x_train[idx])
            loss = T.cross_entropy(logits, y_train[idx])
            correct += int(np.sum(np.argmax(logits.data, axis=1) == y_train[idx]))
            grads = T.gradients(loss, params)
            adam_step(params, grads, state)
            total += loss.item() * len(idx)
        # running figures over the epoch's minibatches, taken before each update
        report.loss.append(total / n)
        report.train_acc.append(correct / n)
        val = _accuracy(model, x_val, y_val)
        report.val_acc.append(val)
        report.stop_epoch = epoch
        if val > best_acc:
            best_acc, best_state, stale = val, model.state_dict(), 0
            report.best_epoch = epoch
        else:
            stale += 1
            if stale >= config.patience:
                break
    model.load_state_dict(best_state)
    return model, report


# -- checkpoints -------------------------------------------------------------------------


def save_checkpoint(model: ViTModel, path: str | Path) -> Path:
    """Directory with ``checkpoint.json`` (config, parameter order) and one FWT1 file per parameter.

    FWT1 stores float32, so a reload is exact only to single precision.
    """
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    names = list(model.params)
    for i, name in enumerate(names):
        write_fwt(root / f"param_{i:03d}.fwt", model.params[name].data)
    header = {
        "config": asdict(model.config),
        "params": [{"name": n, "file": f"param_{i:03d}.fwt", "shape": list(model.params[n].shape)} for i, n in enumerate(names)],
    }
    (root / "checkpoint.json").write_text(json.dumps(header, indent=1) + "\n", encoding="utf-8")
    return root


def load_checkpoint(path: str | Path) -> ViTModel:
    root = Path(path)
    header = json.loads((root / "checkpoint.json").read_text(encoding="utf-8"))
    model = ViTModel(ViTConfig(**header["config"]))
    model.load_state_dict({p["name"]: read_fwt(root / p["file"]) for p in header["params"]})
    return model
