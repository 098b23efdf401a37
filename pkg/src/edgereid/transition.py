"""Camera-transition network: p(camera at target time | source camera, dt).

The network embeds the signed time difference sinusoidally, contracts it with
a per-source-camera weight block into one feature row per camera, refines the
rows with graph propagation blocks (layer norm, learned adjacency mixing,
feature transfer, GELU), and scores each camera's row with a shared
batch-norm/ReLU/linear head. Forward, backward, and Adam updates are all
explicit; no autodiff.
"""

from __future__ import annotations

import copy
import dataclasses
import json
from typing import Sequence

import numpy as np

from . import nn
from .errors import (CheckpointError, ConfigError, DataError, DivergenceError,
                     InputError, NumericError, ShapeError)
from .nn import Param, as_f64
from .scene import Observation, Scene

CHECKPOINT_VERSION = 1


@dataclasses.dataclass(frozen=True)
class TransitionNetConfig:
    """Architecture and time-handling settings for TransitionNet.

    embed_dim must be even; time_scale divides raw tick differences before
    the sinusoidal embedding; denominator_floor keeps the embedding-sum
    normaliser away from zero (the sum of sines and cosines can vanish).
    """

    num_cameras: int
    embed_dim: int = 32
    num_blocks: int = 2
    max_period: float = 10000.0
    time_scale: float = 1.0
    denominator_floor: float = 1e-3
    per_node_classifier: bool = False

    def __post_init__(self):
        if self.num_cameras < 2:
            raise ConfigError(f"need at least 2 cameras, got {self.num_cameras}")
        if self.embed_dim <= 0 or self.embed_dim % 2 != 0:
            raise ConfigError(f"embed_dim must be positive and even, got {self.embed_dim}")
        if self.num_blocks < 1:
            raise ConfigError(f"need at least one block, got {self.num_blocks}")
        if self.time_scale <= 0.0:
            raise ConfigError(f"time_scale must be positive, got {self.time_scale}")
        if self.denominator_floor <= 0.0:
            raise ConfigError("denominator_floor must be positive")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @staticmethod
    def from_dict(doc: dict) -> "TransitionNetConfig":
        allowed = {f.name for f in dataclasses.fields(TransitionNetConfig)}
        unknown = sorted(set(doc) - allowed)
        if unknown:
            raise ConfigError(f"unknown model keys: {', '.join(unknown)}")
        if "num_cameras" not in doc:
            raise ConfigError("model config is missing num_cameras")
        return TransitionNetConfig(**doc)


class GraphBlock:
    """One propagation step: adjacency mixing and feature transfer with GELU."""

    def __init__(self, num_cameras: int, width: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(width)
        self.adjacency = Param(np.eye(num_cameras)
                               + rng.uniform(-0.01, 0.01, (num_cameras, num_cameras)))
        self.transfer = Param(rng.uniform(-bound, bound, (width, width)))
        self.norm_scale = Param(np.ones(width))
        self.norm_shift = Param(np.zeros(width))

    def named_params(self, prefix: str) -> dict[str, Param]:
        return {
            f"{prefix}.adjacency": self.adjacency,
            f"{prefix}.transfer": self.transfer,
            f"{prefix}.norm_scale": self.norm_scale,
            f"{prefix}.norm_shift": self.norm_shift,
        }

    def forward(self, a: np.ndarray):
        normed, ln_cache = nn.layer_norm_forward(a, self.norm_scale, self.norm_shift)
        mixed = np.einsum("uv,nvd->nud", self.adjacency.value, normed)
        pre = mixed @ self.transfer.value
        out = nn.gelu(pre)
        return out, (normed, ln_cache, mixed, pre)

    def backward(self, gout: np.ndarray, cache) -> np.ndarray:
        normed, ln_cache, mixed, pre = cache
        gpre = nn.gelu_backward(gout, pre)
        self.transfer.grad += np.einsum("nud,nue->de", mixed, gpre)
        gmixed = gpre @ self.transfer.value.T
        self.adjacency.grad += np.einsum("nud,nvd->uv", gmixed, normed)
        gnormed = np.einsum("uv,nud->nvd", self.adjacency.value, gmixed)
        return nn.layer_norm_backward(gnormed, ln_cache, self.norm_scale, self.norm_shift)


class _Head:
    """Batch-norm -> ReLU -> linear scorer producing one logit per row."""

    def __init__(self, width: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(width)
        self.bn = nn.BatchNorm(width)
        self.fc_weight = Param(rng.uniform(-bound, bound, (width, 1)))
        self.fc_bias = Param(np.zeros(1))

    def named_params(self, prefix: str) -> dict[str, Param]:
        return {
            f"{prefix}.bn_scale": self.bn.scale,
            f"{prefix}.bn_shift": self.bn.shift,
            f"{prefix}.fc_weight": self.fc_weight,
            f"{prefix}.fc_bias": self.fc_bias,
        }

    def forward(self, rows: np.ndarray, train: bool):
        bn_out, bn_cache = self.bn.forward(rows, train)
        hidden = nn.relu(bn_out)
        logits = nn.linear_forward(hidden, self.fc_weight, self.fc_bias)
        return logits, (bn_cache, bn_out, hidden)

    def backward(self, glogits: np.ndarray, cache) -> np.ndarray:
        bn_cache, bn_out, hidden = cache
        ghidden = nn.linear_backward(glogits, hidden, self.fc_weight, self.fc_bias)
        gbn = nn.relu_backward(ghidden, bn_out)
        return self.bn.backward(gbn, bn_cache)


class TransitionNet:
    """Maps (source camera, signed time difference) to per-camera logits."""

    def __init__(self, config: TransitionNetConfig, rng: np.random.Generator):
        self.config = config
        c, d = config.num_cameras, config.embed_dim
        bound = 1.0 / np.sqrt(d)
        self.spatial_weight = Param(rng.uniform(-bound, bound, (c, d, c, d)))
        self.spatial_bias = Param(np.zeros((c, d)))
        self.blocks = [GraphBlock(c, d, rng) for _ in range(config.num_blocks)]
        if config.per_node_classifier:
            self.heads = [_Head(d, rng) for _ in range(c)]
        else:
            self.heads = [_Head(d, rng)]
        self.metadata: dict = {}
        self._cache = None

    # -- parameter plumbing ------------------------------------------------

    def named_params(self) -> dict[str, Param]:
        out = {"spatial_weight": self.spatial_weight,
               "spatial_bias": self.spatial_bias}
        for i, block in enumerate(self.blocks):
            out.update(block.named_params(f"block{i}"))
        if self.config.per_node_classifier:
            for i, head in enumerate(self.heads):
                out.update(head.named_params(f"head{i}"))
        else:
            out.update(self.heads[0].named_params("head"))
        return out

    def params(self) -> list[Param]:
        return list(self.named_params().values())

    def zero_grads(self) -> None:
        nn.zero_grads(self.params())

    def bn_states(self) -> dict[str, dict]:
        if self.config.per_node_classifier:
            return {f"head{i}": h.bn.state() for i, h in enumerate(self.heads)}
        return {"head": self.heads[0].bn.state()}

    def load_bn_states(self, states: dict) -> None:
        for name, head in self._head_items():
            if name not in states:
                raise CheckpointError(f"missing batch-norm state for {name}")
            head.bn.load_state(states[name])

    def _head_items(self):
        if self.config.per_node_classifier:
            return [(f"head{i}", h) for i, h in enumerate(self.heads)]
        return [("head", self.heads[0])]

    # -- forward / backward ------------------------------------------------

    def _deltas(self, t_query, t_target) -> np.ndarray:
        tq = as_f64(t_query)
        td = as_f64(t_target)
        if not (np.all(np.isfinite(tq)) and np.all(np.isfinite(td))):
            raise InputError("timestamps must be finite")
        return (td - tq) / self.config.time_scale

    def forward(self, cameras, t_query, t_target, train: bool = False) -> np.ndarray:
        """Score each camera for a batch of (source camera, time pair) inputs.

        cameras, t_query, t_target broadcast to a common batch shape [n];
        returns logits [n, C] and retains the cache consumed by backward.
        """
        cfg = self.config
        cams = np.atleast_1d(np.asarray(cameras, dtype=np.int64))
        deltas = np.atleast_1d(self._deltas(t_query, t_target))
        cams, deltas = np.broadcast_arrays(cams, deltas)
        cams = cams.astype(np.int64)
        if cams.ndim != 1:
            raise ShapeError("cameras and timestamps must be scalars or 1-d arrays")
        if cams.size == 0:
            raise InputError("empty batch")
        if cams.min() < 0 or cams.max() >= cfg.num_cameras:
            raise InputError(
                f"source cameras must lie in [0, {cfg.num_cameras}), got "
                f"range [{cams.min()}, {cams.max()}]")
        n, c, d = cams.size, cfg.num_cameras, cfg.embed_dim

        embed = nn.sinusoidal_embed(deltas, d, cfg.max_period)
        raw_den = embed.sum(axis=1)
        sign = np.where(raw_den < 0.0, -1.0, 1.0)
        den = sign * np.maximum(np.abs(raw_den), cfg.denominator_floor)
        weights = embed / den[:, None]

        gathered = self.spatial_weight.value[cams]
        a = np.einsum("nj,njcd->ncd", weights, gathered) + self.spatial_bias.value

        block_caches = []
        for block in self.blocks:
            a, cache = block.forward(a)
            block_caches.append(cache)

        if cfg.per_node_classifier:
            logits = np.empty((n, c))
            head_caches = []
            for node, head in enumerate(self.heads):
                col, cache = head.forward(a[:, node, :], train)
                logits[:, node] = col[:, 0]
                head_caches.append(cache)
        else:
            rows = a.reshape(n * c, d)
            flat, cache = self.heads[0].forward(rows, train)
            logits = flat.reshape(n, c)
            head_caches = [cache]

        if not np.all(np.isfinite(logits)):
            raise NumericError("non-finite logits; check inputs and learning rate")
        self._cache = (cams, weights, block_caches, head_caches, n)
        return logits

    def backward(self, glogits: np.ndarray) -> None:
        """Accumulate parameter gradients for the most recent forward pass."""
        if self._cache is None:
            raise InputError("backward called before forward")
        cams, weights, block_caches, head_caches, n = self._cache
        cfg = self.config
        c, d = cfg.num_cameras, cfg.embed_dim
        glogits = as_f64(glogits)
        if glogits.shape != (n, c):
            raise ShapeError(f"gradient shape {glogits.shape} != ({n}, {c})")

        if cfg.per_node_classifier:
            ga = np.empty((n, c, d))
            for node, head in enumerate(self.heads):
                ga[:, node, :] = head.backward(glogits[:, node:node + 1],
                                               head_caches[node])
        else:
            grows = self.heads[0].backward(glogits.reshape(n * c, 1), head_caches[0])
            ga = grows.reshape(n, c, d)

        for block, cache in zip(reversed(self.blocks), reversed(block_caches)):
            ga = block.backward(ga, cache)

        self.spatial_bias.grad += ga.sum(axis=0)
        np.add.at(self.spatial_weight.grad, cams,
                  np.einsum("nj,ncd->njcd", weights, ga))
        self._cache = None

    def distribution(self, cameras, t_query, t_target) -> np.ndarray:
        """Softmax of the eval-mode logits: p(camera at target time)."""
        return nn.softmax(self.forward(cameras, t_query, t_target, train=False), axis=1)


# -- training ----------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class TrainPair:
    """A same-identity observation pair with query/target roles assigned."""

    query: Observation
    target: Observation

    def __post_init__(self):
        if self.query.identity != self.target.identity:
            raise DataError("train pair mixes identities")
        if self.query.camera == self.target.camera:
            raise DataError("train pair must span two cameras")


@dataclasses.dataclass(frozen=True)
class TrainSchedule:
    """Optimisation settings: Adam at base_lr, decayed by lr_decay every
    lr_step_epochs epochs; pairs_per_epoch defaults to the train-split size."""

    epochs: int = 90
    base_lr: float = 0.01
    lr_decay: float = 0.1
    lr_step_epochs: int = 30
    batch_size: int = 128
    pairs_per_epoch: int | None = None
    holdout_pairs: int = 2000

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.base_lr <= 0.0 or not 0.0 < self.lr_decay <= 1.0:
            raise ConfigError("base_lr must be positive and lr_decay in (0, 1]")
        if self.lr_step_epochs < 1 or self.batch_size < 1:
            raise ConfigError("lr_step_epochs and batch_size must be >= 1")
        if self.pairs_per_epoch is not None and self.pairs_per_epoch < 1:
            raise ConfigError("pairs_per_epoch must be >= 1 when given")

    def lr_at(self, epoch: int) -> float:
        return self.base_lr * self.lr_decay ** (epoch // self.lr_step_epochs)


def _cross_camera_pairs(observations: Sequence[Observation]) -> dict[int, list]:
    """Unordered cross-camera observation pairs, grouped by identity."""
    by_identity: dict[int, list[Observation]] = {}
    for obs in observations:
        by_identity.setdefault(obs.identity, []).append(obs)
    pairs: dict[int, list] = {}
    for ident, group in by_identity.items():
        valid = [(a, b) for i, a in enumerate(group) for b in group[i + 1:]
                 if a.camera != b.camera]
        if valid:
            pairs[ident] = valid
    return pairs


def sample_pairs(scene: Scene, rng: np.random.Generator, count: int) -> list[TrainPair]:
    """Draw training pairs: identity uniform over identities that have any
    cross-camera pair, then a pair uniform within the identity, then a coin
    flip for which side is the query."""
    if count < 1:
        raise InputError(f"count must be >= 1, got {count}")
    pool = _cross_camera_pairs(scene.train_observations())
    if not pool:
        raise DataError("train split has no cross-camera observation pairs")
    idents = sorted(pool)
    out = []
    ident_draws = rng.integers(0, len(idents), size=count)
    for k in range(count):
        options = pool[idents[ident_draws[k]]]
        a, b = options[rng.integers(0, len(options))]
        if rng.random() < 0.5:
            a, b = b, a
        out.append(TrainPair(query=a, target=b))
    return out


def pairs_to_arrays(pairs: Sequence[TrainPair]):
    cams = np.array([p.query.camera for p in pairs], dtype=np.int64)
    tq = np.array([p.query.timestamp for p in pairs], dtype=np.float64)
    td = np.array([p.target.timestamp for p in pairs], dtype=np.float64)
    targets = np.array([p.target.camera for p in pairs], dtype=np.int64)
    return cams, tq, td, targets


def training_step(model: TransitionNet, pairs: Sequence[TrainPair], lr: float) -> float:
    """One Adam step on a batch of pairs; returns the mean cross-entropy."""
    if not pairs:
        raise InputError("empty training batch")
    cams, tq, td, targets = pairs_to_arrays(pairs)
    model.zero_grads()
    logits = model.forward(cams, tq, td, train=True)
    loss, glogits = nn.cross_entropy(logits, targets)
    model.backward(glogits)
    nn.adam_step(model.params(), lr)
    return loss


def _holdout_pairs(scene: Scene, rng: np.random.Generator, cap: int) -> list[TrainPair]:
    pool = _cross_camera_pairs(scene.test_observations())
    ordered: list[TrainPair] = []
    for ident in sorted(pool):
        for a, b in pool[ident]:
            ordered.append(TrainPair(query=a, target=b))
            ordered.append(TrainPair(query=b, target=a))
    if cap and len(ordered) > cap:
        keep = rng.choice(len(ordered), size=cap, replace=False)
        ordered = [ordered[i] for i in sorted(keep)]
    return ordered


def holdout_accuracy(model: TransitionNet, pairs: Sequence[TrainPair]) -> float:
    """Fraction of pairs whose target camera gets the top eval-mode logit."""
    if not pairs:
        return float("nan")
    cams, tq, td, targets = pairs_to_arrays(pairs)
    correct = 0
    for start in range(0, len(pairs), 4096):
        sl = slice(start, start + 4096)
        logits = model.forward(cams[sl], tq[sl], td[sl], train=False)
        correct += int((logits.argmax(axis=1) == targets[sl]).sum())
    return correct / len(pairs)


def train(model: TransitionNet, scene: Scene, schedule: TrainSchedule,
          rng: np.random.Generator) -> list[dict]:
    """Train on the scene's train split; returns per-epoch history rows.

    Each row records epoch, lr, mean loss, and hold-out accuracy on a
    deterministic sample of test-split pairs. A non-finite loss rolls the
    model back to the end of the previous epoch and raises DivergenceError.
    """
    pair_rng, eval_rng = rng.spawn(2)
    holdout = _holdout_pairs(scene, eval_rng, schedule.holdout_pairs)
    per_epoch = schedule.pairs_per_epoch or max(1, len(scene.train_observations()))
    history: list[dict] = []
    snapshot = _snapshot(model)
    for epoch in range(schedule.epochs):
        lr = schedule.lr_at(epoch)
        pairs = sample_pairs(scene, pair_rng, per_epoch)
        losses = []
        for start in range(0, len(pairs), schedule.batch_size):
            batch = pairs[start:start + schedule.batch_size]
            try:
                loss = training_step(model, batch, lr)
            except NumericError:
                loss = float("nan")
            if not np.isfinite(loss):
                _restore(model, snapshot)
                raise DivergenceError(
                    f"non-finite loss in epoch {epoch}; rolled back to epoch "
                    f"{epoch - 1}")
            losses.append(loss)
        acc = holdout_accuracy(model, holdout)
        history.append({"epoch": epoch, "lr": lr,
                        "loss": float(np.mean(losses)),
                        "holdout_accuracy": acc})
        snapshot = _snapshot(model)
    return history


def _snapshot(model: TransitionNet):
    values = {name: p.value.copy() for name, p in model.named_params().items()}
    states = copy.deepcopy(model.bn_states())
    return values, states


def _restore(model: TransitionNet, snapshot) -> None:
    values, states = snapshot
    for name, p in model.named_params().items():
        p.value[...] = values[name]
    model.load_bn_states(states)


# -- checkpoints ---------------------------------------------------------------


def save_checkpoint(model: TransitionNet, path, metadata: dict | None = None) -> None:
    """Write the model as a JSON document with full-precision parameters."""
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "params": {name: {"shape": list(p.value.shape),
                          "data": p.value.reshape(-1).tolist()}
                   for name, p in model.named_params().items()},
        "batch_norm": {name: {"running_mean": st["running_mean"].tolist(),
                              "running_var": st["running_var"].tolist()}
                       for name, st in model.bn_states().items()},
        "metadata": dict(metadata or {}),
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> TransitionNet:
    """Rebuild a model from save_checkpoint output, bit-exactly."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"{path}: not valid JSON: {exc}") from None
    for key in ("format_version", "config", "params", "batch_norm"):
        if key not in doc:
            raise CheckpointError(f"{path}: missing {key!r}")
    if doc["format_version"] != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: format version {doc['format_version']} unsupported "
            f"(expected {CHECKPOINT_VERSION})")
    try:
        config = TransitionNetConfig.from_dict(doc["config"])
    except (ConfigError, TypeError) as exc:
        raise CheckpointError(f"{path}: bad config: {exc}") from None
    model = TransitionNet(config, np.random.default_rng(0))
    params = model.named_params()
    stored = doc["params"]
    missing = sorted(set(params) - set(stored))
    extra = sorted(set(stored) - set(params))
    if missing or extra:
        raise CheckpointError(
            f"{path}: parameter names do not match (missing {missing}, "
            f"unexpected {extra})")
    for name, p in params.items():
        entry = stored[name]
        shape = tuple(entry.get("shape", ()))
        if shape != p.value.shape:
            raise CheckpointError(
                f"{path}: {name} has shape {shape}, expected {p.value.shape}")
        data = as_f64(entry["data"])
        if data.size != p.value.size:
            raise CheckpointError(f"{path}: {name} has {data.size} values, "
                                  f"expected {p.value.size}")
        p.value[...] = data.reshape(p.value.shape)
        p.grad[...] = 0.0
        p.m[...] = 0.0
        p.v[...] = 0.0
        p.step_count = 0
    try:
        model.load_bn_states({
            name: {"running_mean": as_f64(st["running_mean"]),
                   "running_var": as_f64(st["running_var"])}
            for name, st in doc["batch_norm"].items()})
    except (KeyError, ShapeError, CheckpointError) as exc:
        raise CheckpointError(f"{path}: bad batch-norm state: {exc}") from None
    model.metadata = dict(doc.get("metadata", {}))
    return model


def check_scene_compatible(model: TransitionNet, scene: Scene) -> None:
    """Reject a model whose camera count differs from the scene's."""
    if model.config.num_cameras != scene.num_cameras:
        raise ConfigError(
            f"model covers {model.config.num_cameras} cameras but the scene "
            f"has {scene.num_cameras}")
