"""Similarity scoring and piracy verdicts."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ipsim.errors import ZeroEmbedding

DEFAULT_DELTA = 0.5


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between two embeddings, clamped to [-1, 1]."""
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroEmbedding("cannot score a zero-norm embedding")
    value = float(np.dot(a, b)) / (norm_a * norm_b)
    return max(-1.0, min(1.0, value))


@dataclass(frozen=True)
class Verdict:
    a: str
    b: str
    score: float
    delta: float

    @property
    def label(self) -> str:
        return "piracy" if self.score > self.delta else "no-piracy"

    def to_json(self) -> str:
        return json.dumps(
            {"a": self.a, "b": self.b, "score": self.score,
             "delta": self.delta, "label": self.label},
            separators=(", ", ": "))


def judge(name_a: str, name_b: str, emb_a: np.ndarray, emb_b: np.ndarray,
          delta: float = DEFAULT_DELTA) -> Verdict:
    if not -1.0 <= delta <= 1.0:
        raise ValueError(f"delta must lie in [-1, 1], got {delta}")
    return Verdict(name_a, name_b, cosine_similarity(emb_a, emb_b), delta)
