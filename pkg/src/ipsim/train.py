"""Pair training loop and checkpoint persistence.

Pairs carry labels +1 (same source design) or -1 (unrelated). The loss
is the cosine embedding hinge: positive pairs pay 1 - score, negative
pairs pay max(0, score - margin). Batches group their pairs by design
so each design is embedded once per batch with one dropout draw, and
gradient flows back through that single forward pass.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass

import numpy as np

from ipsim.encode import VOCAB_VERSION, GraphTensors
from ipsim.errors import CheckpointError, MissingGraph, NonFiniteLoss, VocabularyMismatch
from ipsim.model import (
    ForwardCache,
    Hyper,
    ModelParams,
    add_scaled,
    backward,
    forward,
    init_params,
    make_dropout_masks,
    zeros_like_params,
)

Pair = tuple[str, str, int]


def cosine_embedding_loss(score: float, label: int, margin: float = 0.5) -> float:
    """Hinge-style pair loss on a cosine score: 1 - score for similar
    pairs, max(0, score - margin) for dissimilar ones."""
    if label == 1:
        return 1.0 - score
    if label == -1:
        return max(0.0, score - margin)
    raise ValueError(f"pair label must be +1 or -1, got {label}")


def _cosine_grads(a: np.ndarray, b: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        # A zero embedding means every active unit was gated off (relu or
        # dropout), so no gradient can reach the parameters through this
        # design anyway; score 0 with zero grads is the exact subgradient.
        return 0.0, np.zeros_like(a), np.zeros_like(b)
    score = float(np.dot(a, b)) / (norm_a * norm_b)
    d_a = (b / norm_b - score * a / norm_a) / norm_a
    d_b = (a / norm_a - score * b / norm_b) / norm_b
    return score, d_a, d_b


@dataclass
class TrainConfig:
    lr: float = 0.001
    batch_size: int = 64
    epochs: int = 50
    margin: float = 0.5
    delta: float = 0.5
    seed: int = 0
    patience: int | None = 10
    shuffle: bool = True
    optimizer: str = "sgd"          # sgd | momentum | adam
    momentum: float = 0.9
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    test_acc: float | None


@dataclass
class TrainResult:
    params: ModelParams
    trace: list[EpochStats]
    best_epoch: int
    stopped_early: bool


class _Optimizer:
    def __init__(self, config: TrainConfig, params: ModelParams):
        self.config = config
        self.step_count = 0
        if config.optimizer == "momentum":
            self.velocity = zeros_like_params(params)
        elif config.optimizer == "adam":
            self.first = zeros_like_params(params)
            self.second = zeros_like_params(params)
        elif config.optimizer != "sgd":
            raise ValueError(f"unknown optimizer {config.optimizer!r}")

    def step(self, params: ModelParams, grads: ModelParams):
        cfg = self.config
        self.step_count += 1
        if cfg.optimizer == "sgd":
            add_scaled(params, grads, -cfg.lr)
            return
        if cfg.optimizer == "momentum":
            for vel, g, w in zip(self.velocity.arrays(), grads.arrays(), params.arrays()):
                vel *= cfg.momentum
                vel += g
                w -= cfg.lr * vel
            return
        t = self.step_count
        for m, v, g, w in zip(self.first.arrays(), self.second.arrays(),
                              grads.arrays(), params.arrays()):
            m *= cfg.adam_beta1
            m += (1 - cfg.adam_beta1) * g
            v *= cfg.adam_beta2
            v += (1 - cfg.adam_beta2) * g * g
            m_hat = m / (1 - cfg.adam_beta1 ** t)
            v_hat = v / (1 - cfg.adam_beta2 ** t)
            w -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


def _check_pairs(graphs: dict[str, GraphTensors], pairs: list[Pair]):
    for a, b, label in pairs:
        if a not in graphs:
            raise MissingGraph(a)
        if b not in graphs:
            raise MissingGraph(b)
        if label not in (1, -1):
            raise ValueError(f"pair label must be +1 or -1, got {label!r}")


def evaluate(params: ModelParams, hyper: Hyper, graphs: dict[str, GraphTensors],
             pairs: list[Pair], delta: float) -> tuple[float, list[float]]:
    """Accuracy of score>delta against pair labels, plus raw scores."""
    cache: dict[str, np.ndarray] = {}

    def emb(name: str) -> np.ndarray:
        if name not in cache:
            cache[name] = forward(params, graphs[name], hyper).embedding
        return cache[name]

    # _cosine_grads scores a dead embedding as 0 instead of raising, so a
    # mid-training evaluation never aborts the run.
    scores = [_cosine_grads(emb(a), emb(b))[0] for a, b, _ in pairs]
    correct = sum(
        1 for (a, b, label), s in zip(pairs, scores)
        if (label == 1) == (s > delta)
    )
    return (correct / len(pairs) if pairs else 0.0), scores


def train(graphs: dict[str, GraphTensors], train_pairs: list[Pair],
          test_pairs: list[Pair] | None, hyper: Hyper, config: TrainConfig,
          init: ModelParams | None = None,
          log=None) -> TrainResult:
    _check_pairs(graphs, train_pairs)
    if test_pairs:
        _check_pairs(graphs, test_pairs)
    if not train_pairs:
        raise ValueError("no training pairs")
    params = init.copy() if init is not None else init_params(hyper, config.seed)
    optimizer = _Optimizer(config, params)
    trace: list[EpochStats] = []
    best_params = params.copy()
    best_key: tuple | None = None
    best_epoch = 0
    stale = 0
    stopped_early = False

    for epoch in range(1, config.epochs + 1):
        order = np.arange(len(train_pairs))
        if config.shuffle:
            rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([config.seed, epoch])))
            order = rng.permutation(order)
        loss_sum = 0.0
        correct = 0
        for batch_idx in range(0, len(order), config.batch_size):
            batch = [train_pairs[i] for i in order[batch_idx:batch_idx + config.batch_size]]
            loss_sum_b, correct_b = _train_batch(
                params, optimizer, graphs, batch, hyper, config,
                epoch, batch_idx // config.batch_size)
            loss_sum += loss_sum_b
            correct += correct_b
        train_loss = loss_sum / len(train_pairs)
        train_acc = correct / len(train_pairs)
        test_acc = None
        if test_pairs:
            test_acc, _ = evaluate(params, hyper, graphs, test_pairs, config.delta)
        trace.append(EpochStats(epoch, train_loss, train_acc, test_acc))
        if log is not None:
            log(trace[-1])

        # Higher test accuracy wins; without a test set, lower train loss.
        key = (test_acc, -train_loss) if test_pairs else (-train_loss,)
        if best_key is None or key > best_key:
            best_key = key
            best_params = params.copy()
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if config.patience is not None and stale >= config.patience:
                stopped_early = True
                break

    return TrainResult(params=best_params, trace=trace,
                       best_epoch=best_epoch, stopped_early=stopped_early)


def _train_batch(params: ModelParams, optimizer: _Optimizer,
                 graphs: dict[str, GraphTensors], batch: list[Pair],
                 hyper: Hyper, config: TrainConfig,
                 epoch: int, batch_no: int) -> tuple[float, int]:
    names = sorted({name for a, b, _ in batch for name in (a, b)})
    caches: dict[str, ForwardCache] = {}
    d_emb: dict[str, np.ndarray] = {}
    for slot, name in enumerate(names):
        gt = graphs[name]
        masks = None
        if hyper.dropout > 0.0:
            seq = np.random.SeedSequence([config.seed, epoch, batch_no, slot])
            masks = make_dropout_masks(hyper, gt.num_nodes, np.random.Generator(np.random.PCG64(seq)))
        caches[name] = forward(params, gt, hyper, masks=masks)
        d_emb[name] = np.zeros_like(caches[name].embedding)

    loss_sum = 0.0
    correct = 0
    for a, b, label in batch:
        emb_a = caches[a].embedding
        emb_b = caches[b].embedding
        score, d_a, d_b = _cosine_grads(emb_a, emb_b)
        if label == 1:
            loss = 1.0 - score
            upstream = -1.0
        else:
            loss = max(0.0, score - config.margin)
            upstream = 1.0 if score > config.margin else 0.0
        if not math.isfinite(loss):
            raise NonFiniteLoss(f"epoch {epoch} batch {batch_no} pair ({a}, {b})")
        loss_sum += loss
        if (label == 1) == (score > config.delta):
            correct += 1
        if upstream != 0.0:
            d_emb[a] += upstream * d_a
            d_emb[b] += upstream * d_b

    total = zeros_like_params(params)
    for name in names:
        if not d_emb[name].any():
            continue
        add_scaled(total, backward(params, hyper, caches[name], d_emb[name]))
    for arr in total.arrays():
        arr /= len(batch)
        if not np.isfinite(arr).all():
            raise NonFiniteLoss(f"non-finite gradient in epoch {epoch} batch {batch_no}")
    optimizer.step(params, total)
    return loss_sum, correct


def write_trace(path, trace: list[EpochStats]):
    lines = ["epoch,train_loss,train_acc,test_acc"]
    for row in trace:
        test = "" if row.test_acc is None else f"{row.test_acc:.6f}"
        lines.append(f"{row.epoch},{row.train_loss:.6f},{row.train_acc:.6f},{test}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


# --- checkpoints -------------------------------------------------------------

MAGIC = b"IPSIMNET\x01"
CKPT_VERSION = 1


def save_checkpoint(path, params: ModelParams, hyper: Hyper, meta: dict | None = None) -> bytes:
    """Write a self-describing binary checkpoint; returns the bytes."""
    header = {
        "format_version": CKPT_VERSION,
        "vocab_version": VOCAB_VERSION,
        "hyper": asdict(hyper),
        "meta": meta or {},
        "arrays": len(params.arrays()),
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", len(blob))
    out += blob
    for arr in params.arrays():
        out += struct.pack("<I", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    data = bytes(out)
    if path is not None:
        with open(path, "wb") as fh:
            fh.write(data)
    return data


def load_checkpoint(path=None, data: bytes | None = None) -> tuple[ModelParams, Hyper, dict]:
    if data is None:
        with open(path, "rb") as fh:
            data = fh.read()
    view = memoryview(data)
    pos = 0

    def take(count: int, what: str) -> memoryview:
        nonlocal pos
        if pos + count > len(view):
            raise CheckpointError(f"truncated checkpoint while reading {what}")
        chunk = view[pos:pos + count]
        pos += count
        return chunk

    if bytes(take(len(MAGIC), "magic")) != MAGIC:
        raise CheckpointError("not a model checkpoint (bad magic)")
    (header_len,) = struct.unpack("<I", take(4, "header length"))
    try:
        header = json.loads(bytes(take(header_len, "header")).decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}")
    if header.get("format_version") != CKPT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('format_version')!r}")
    if header.get("vocab_version") != VOCAB_VERSION:
        raise VocabularyMismatch(VOCAB_VERSION, header.get("vocab_version"))
    hyper = Hyper(**header["hyper"])
    arrays = []
    for i in range(header["arrays"]):
        (ndim,) = struct.unpack("<I", take(4, f"array {i} rank"))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim, f"array {i} shape"))
        count = int(np.prod(shape)) if shape else 1
        raw = take(8 * count, f"array {i} data")
        arrays.append(np.frombuffer(raw, dtype="<f8").reshape(shape).copy())
    if pos != len(view):
        raise CheckpointError(f"{len(view) - pos} trailing bytes after checkpoint payload")
    if len(arrays) != hyper.num_layers + 1:
        raise CheckpointError("array count does not match architecture")
    return ModelParams(arrays[:-1], arrays[-1]), hyper, header.get("meta", {})
