"""Uniform differentiable interfaces over heterogeneous surrogate models.

Three adapter kinds share a common preprocessing contract: a differentiable
bilinear resize to the adapter's input resolution followed by per-channel
normalization, so pixel-space gradients always flow through the exact input
pipeline each model sees.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from ..errors import UnsupportedSurrogateError
from ..image import Image

ENCODER = "encoder"
CAPTIONER = "captioner"
DETECTOR = "detector"
KINDS = (ENCODER, CAPTIONER, DETECTOR)


@dataclass
class EmbeddingVector:
    values: np.ndarray
    dim: int
    surrogate_id: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if not np.isfinite(self.values).all():
            raise ValueError("embedding contains non-finite values")
        if self.values.shape[0] != self.dim:
            raise ValueError(f"embedding dim {self.values.shape[0]} != declared {self.dim}")


@dataclass
class DetectionOutput:
    """One candidate detection: source anchor, box, confidence score.

    score keeps its autograd path when the adapter was queried with a
    gradient-enabled tensor; box coordinates are clipped to image bounds.
    """

    anchor: int
    box: tuple
    score: object  # float or 0-d torch tensor

    @property
    def score_value(self) -> float:
        s = self.score
        return float(s.detach()) if torch.is_tensor(s) else float(s)


class SurrogateAdapter:
    """Base adapter: id, kind, input geometry, normalization, reentrancy.

    Adapters are non-reentrant unless they declare otherwise; the registry
    hands out independent instances for parallel runs.
    """

    kind: str = ""

    def __init__(self, surrogate_id, input_resolution=None, mean=(0.0, 0.0, 0.0),
                 std=(1.0, 1.0, 1.0), reentrant=False):
        self.id = str(surrogate_id)
        self.input_resolution = input_resolution  # (H, W) or None for native
        self.mean = tuple(float(m) for m in mean)
        self.std = tuple(float(s) for s in std)
        self.reentrant = bool(reentrant)

    def __repr__(self):
        return f"{type(self).__name__}(id={self.id!r}, kind={self.kind!r})"


def as_pixel_tensor(x) -> torch.Tensor:
    """Coerce Image / ndarray / tensor to an (H, W, 3) float64 torch tensor."""
    if isinstance(x, Image):
        x = x.pixels
    if torch.is_tensor(x):
        t = x.to(torch.float64)
    else:
        t = torch.from_numpy(np.ascontiguousarray(np.asarray(x, dtype=np.float64)))
    if t.ndim != 3 or t.shape[-1] != 3:
        raise ValueError(f"expected (H, W, 3) pixels, got shape {tuple(t.shape)}")
    return t


def preprocess(x, adapter: SurrogateAdapter) -> torch.Tensor:
    """Differentiable model-input pipeline: resize then normalize.

    Returns a (1, 3, h, w) tensor. The resize is bilinear without
    antialiasing; gradients flow back to x when x is a torch leaf.
    """
    t = as_pixel_tensor(x)
    chw = t.permute(2, 0, 1).unsqueeze(0)
    res = adapter.input_resolution
    if res is not None:
        size = (int(res), int(res)) if np.isscalar(res) else (int(res[0]), int(res[1]))
        if chw.shape[-2:] != size:
            chw = torch.nn.functional.interpolate(
                chw, size=size, mode="bilinear", align_corners=False, antialias=False
            )
    mean = torch.tensor(adapter.mean, dtype=chw.dtype).view(1, 3, 1, 1)
    std = torch.tensor(adapter.std, dtype=chw.dtype).view(1, 3, 1, 1)
    return (chw - mean) / std


class EncoderAdapter(SurrogateAdapter):
    """Image encoder exposing a pooled global embedding, differentiably."""

    kind = ENCODER

    def embed(self, inputs: torch.Tensor) -> torch.Tensor:
        """Map preprocessed inputs (1, 3, h, w) to a (1, D) embedding."""
        raise NotImplementedError

    @property
    def embedding_dim(self) -> int:
        raise NotImplementedError

    def encode(self, x) -> EmbeddingVector:
        with torch.no_grad():
            emb = self.embed(preprocess(x, self))
        values = emb.reshape(-1).numpy()
        return EmbeddingVector(values=values, dim=values.shape[0], surrogate_id=self.id)


class CaptionerAdapter(SurrogateAdapter):
    """Vision-conditioned language surrogate exposing teacher-forced
    per-token log-probabilities. No chat state; language weights frozen."""

    kind = CAPTIONER

    def tokenize(self, text: str) -> list[int]:
        raise NotImplementedError

    def decode(self, token_ids) -> str:
        raise NotImplementedError

    def token_log_probs(self, inputs: torch.Tensor, prompt: str, target_ids) -> torch.Tensor:
        """Log p(y_t | image, prompt, y_<t) for each target token, shape (L,).

        The adapter owns the prompt template wrapped around the shared
        prompt text; gradients flow through the vision pathway only.
        """
        raise NotImplementedError

    def caption_loglik(self, x, prompt: str, target_ids) -> np.ndarray:
        with torch.no_grad():
            lp = self.token_log_probs(preprocess(x, self), prompt, target_ids)
        return lp.numpy()


class DetectorAdapter(SurrogateAdapter):
    """Face-style detector exposing per-anchor confidence scores."""

    kind = DETECTOR
    decision_threshold: float = 0.5

    def candidate_scores(self, inputs: torch.Tensor):
        """Scores (K,) in [0, 1] with grad path, boxes (K, 4) pixel units."""
        raise NotImplementedError

    def detect(self, x) -> list[DetectionOutput]:
        """All candidate detections; scores stay differentiable when x is a
        gradient-enabled tensor."""
        t = as_pixel_tensor(x)
        h, w = t.shape[0], t.shape[1]
        scores, boxes = self.candidate_scores(preprocess(t, self))
        out = []
        for i in range(scores.shape[0]):
            x0, y0, x1, y1 = (float(v) for v in boxes[i])
            box = (
                min(max(x0, 0.0), w),
                min(max(y0, 0.0), h),
                min(max(x1, 0.0), w),
                min(max(y1, 0.0), h),
            )
            score = scores[i] if scores.requires_grad else float(scores[i])
            out.append(DetectionOutput(anchor=i, box=box, score=score))
        return out


@dataclass
class SurrogateEnsemble:
    """Ordered, homogeneous collection of adapters with unique ids."""

    members: list = field(default_factory=list)

    def __post_init__(self):
        members = list(self.members)
        if not members:
            raise ValueError("ensemble must be non-empty")
        kinds = {m.kind for m in members}
        if len(kinds) != 1:
            raise ValueError(f"ensemble members must share one kind, got {sorted(kinds)}")
        ids = [m.id for m in members]
        if len(set(ids)) != len(ids):
            raise ValueError(f"ensemble ids must be unique, got {ids}")
        self.members = members

    @property
    def kind(self) -> str:
        return self.members[0].kind

    @property
    def ids(self) -> list[str]:
        return [m.id for m in self.members]

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def require_kind(self, kind: str):
        if self.kind != kind:
            raise UnsupportedSurrogateError(
                f"objective requires {kind} adapters, ensemble holds {self.kind}"
            )
        return self


def encode(adapter, x) -> EmbeddingVector:
    if adapter.kind != ENCODER:
        raise UnsupportedSurrogateError(f"{adapter.id} is a {adapter.kind}, not an encoder")
    return adapter.encode(x)


def caption_loglik(adapter, x, prompt: str, target_ids) -> np.ndarray:
    if adapter.kind != CAPTIONER:
        raise UnsupportedSurrogateError(f"{adapter.id} is a {adapter.kind}, not a captioner")
    return adapter.caption_loglik(x, prompt, target_ids)


def detect(adapter, x) -> list[DetectionOutput]:
    if adapter.kind != DETECTOR:
        raise UnsupportedSurrogateError(f"{adapter.id} is a {adapter.kind}, not a detector")
    return adapter.detect(x)
