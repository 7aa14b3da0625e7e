"""Loss objectives: each returns (scalar value, pixel-space gradient).

Three families, all plain unweighted sums over the surrogate ensemble by
default:

  embedding divergence   push encoder embeddings away from the natural
                         image's (maximize sum of squared l2 distances)
  targeted caption       raise teacher-forced log-likelihood of a chosen
                         target sentence under surrogate captioners
  detector evasion       drive every surviving detection's confidence to
                         zero (minimize summed binary cross-entropy)

The attack engine always ascends; minimize-direction objectives are
negated behind `per_surrogate_losses` / `ascent_value` so a rising loss
trace uniformly means the attack is progressing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import ConfigError, UnsupportedSurrogateError
from .image import Image
from .surrogates.base import (
    CAPTIONER,
    DETECTOR,
    ENCODER,
    SurrogateEnsemble,
    as_pixel_tensor,
    preprocess,
)

SCORE_CLAMP = 1e-6  # keeps -log(1 - s) finite at saturated scores

MAXIMIZE = "maximize"
MINIMIZE = "minimize"


@dataclass
class TargetSentence:
    """A target caption with per-surrogate tokenizations.

    Every surrogate tokenizes with its own vocabulary; build() validates a
    non-empty, decode-roundtripping token sequence per captioner.
    """

    text: str
    prompt: str
    token_ids: dict = field(default_factory=dict)

    @classmethod
    def build(cls, text: str, prompt: str, ensemble: SurrogateEnsemble) -> "TargetSentence":
        ensemble.require_kind(CAPTIONER)
        token_ids = {}
        for adapter in ensemble:
            try:
                ids = adapter.tokenize(text)
                adapter.tokenize(prompt)
            except ValueError as exc:
                raise ConfigError(
                    f"target/prompt not tokenizable by surrogate {adapter.id!r}: {exc}"
                ) from exc
            if not ids:
                raise ConfigError(f"target tokenizes to an empty sequence for {adapter.id!r}")
            if adapter.decode(ids) != text:
                raise ConfigError(
                    f"tokenize/decode roundtrip failed for surrogate {adapter.id!r}"
                )
            token_ids[adapter.id] = ids
        return cls(text=text, prompt=prompt, token_ids=token_ids)


def _pixels(x) -> np.ndarray:
    if isinstance(x, Image):
        return x.pixels
    return np.asarray(x, dtype=np.float64)


class LossObjective:
    """Base objective bound to an ensemble; subclasses define the math."""

    kind = ""
    direction = MAXIMIZE

    def __init__(self, ensemble: SurrogateEnsemble, weights=None):
        self.ensemble = ensemble
        self.weights = dict(weights or {})
        unknown = set(self.weights) - set(ensemble.ids)
        if unknown:
            raise ConfigError(f"weights reference unknown surrogate ids: {sorted(unknown)}")

    def weight(self, surrogate_id: str) -> float:
        return float(self.weights.get(surrogate_id, 1.0))

    # -- subclass hook -----------------------------------------------------
    def _surrogate_term(self, adapter, x_t: torch.Tensor) -> torch.Tensor:
        """Operation-space scalar for one surrogate, differentiable in x_t."""
        raise NotImplementedError

    # -- operation-space API ----------------------------------------------
    def per_surrogate_values(self, x) -> dict:
        px = _pixels(x)
        out = {}
        with torch.no_grad():
            x_t = as_pixel_tensor(px)
            for adapter in self.ensemble:
                out[adapter.id] = float(self._surrogate_term(adapter, x_t))
        return out

    def value_and_grad(self, x):
        px = _pixels(x)
        x_t = as_pixel_tensor(px).requires_grad_(True)
        total = None
        for adapter in self.ensemble:
            term = self._surrogate_term(adapter, x_t)
            total = term if total is None else total + term
        (grad,) = torch.autograd.grad(total, x_t)
        return float(total.detach()), grad.numpy()

    # -- ascent-space API used by the engine --------------------------------
    @property
    def ascent_sign(self) -> float:
        return -1.0 if self.direction == MINIMIZE else 1.0

    def per_surrogate_losses(self):
        sign = self.ascent_sign

        def make(adapter):
            def loss(z: np.ndarray):
                x_t = as_pixel_tensor(z).requires_grad_(True)
                term = self._surrogate_term(adapter, x_t)
                (grad,) = torch.autograd.grad(term, x_t)
                return sign * float(term.detach()), sign * grad.numpy()

            return loss

        return [make(adapter) for adapter in self.ensemble]

    def ascent_value(self, x) -> float:
        return self.ascent_sign * sum(self.per_surrogate_values(x).values())

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "surrogates": list(self.ensemble.ids),
            "direction": self.direction,
            "weights": {sid: self.weight(sid) for sid in self.ensemble.ids},
        }


class EmbeddingDivergence(LossObjective):
    """Sum over encoders of ||f_i(x) - f_i(anchor)||^2, maximized."""

    kind = "embedding_divergence"
    direction = MAXIMIZE

    def __init__(self, ensemble, anchor, weights=None):
        ensemble.require_kind(ENCODER)
        super().__init__(ensemble, weights)
        if anchor is None:
            raise ConfigError("embedding_divergence requires an anchor image")
        self.anchor = anchor
        anchor_t = as_pixel_tensor(_pixels(anchor))
        self._anchor_embeddings = {}
        with torch.no_grad():
            for adapter in ensemble:
                if not hasattr(adapter, "embed"):
                    raise UnsupportedSurrogateError(
                        f"surrogate {adapter.id!r} has no differentiable embedding path"
                    )
                self._anchor_embeddings[adapter.id] = adapter.embed(
                    preprocess(anchor_t, adapter)
                ).detach()

    def _surrogate_term(self, adapter, x_t):
        emb = adapter.embed(preprocess(x_t, adapter))
        ref = self._anchor_embeddings[adapter.id]
        return self.weight(adapter.id) * ((emb - ref) ** 2).sum()

    def describe(self):
        doc = super().describe()
        doc["anchor_id"] = getattr(self.anchor, "id", "")
        return doc


class TargetedCaption(LossObjective):
    """Teacher-forced log-likelihood of a target sentence, maximized."""

    kind = "targeted_caption"
    direction = MAXIMIZE

    def __init__(self, ensemble, target: TargetSentence, weights=None):
        ensemble.require_kind(CAPTIONER)
        super().__init__(ensemble, weights)
        if target is None:
            raise ConfigError("targeted_caption requires a target sentence")
        missing = [a.id for a in ensemble if a.id not in target.token_ids]
        if missing:
            raise ConfigError(f"target sentence lacks token ids for surrogates: {missing}")
        self.target = target

    def _surrogate_term(self, adapter, x_t):
        ids = self.target.token_ids[adapter.id]
        log_probs = adapter.token_log_probs(
            preprocess(x_t, adapter), self.target.prompt, ids
        )
        if log_probs.shape[0] != len(ids):
            raise UnsupportedSurrogateError(
                f"surrogate {adapter.id!r} returned {log_probs.shape[0]} token "
                f"log-probs for a {len(ids)}-token target"
            )
        return self.weight(adapter.id) * log_probs.sum()

    def describe(self):
        doc = super().describe()
        doc["target_text"] = self.target.text
        doc["prompt"] = self.target.prompt
        return doc


class DetectorEvasion(LossObjective):
    """Summed BCE-to-zero over candidate detections, minimized.

    Candidates per detector: every detection whose score clears the
    detector's own decision threshold on the anchor (natural) image, plus
    the current highest-scoring candidate, so a gradient survives even
    once all detections are suppressed. Scores are clamped away from
    {0, 1} before the log.
    """

    kind = "detector_evasion"
    direction = MINIMIZE

    def __init__(self, ensemble, anchor=None, weights=None):
        ensemble.require_kind(DETECTOR)
        super().__init__(ensemble, weights)
        self.anchor = anchor
        self._frozen_active = {}
        if anchor is not None:
            anchor_t = as_pixel_tensor(_pixels(anchor))
            with torch.no_grad():
                for adapter in ensemble:
                    scores, _ = adapter.candidate_scores(preprocess(anchor_t, adapter))
                    active = (scores > adapter.decision_threshold).nonzero().reshape(-1)
                    self._frozen_active[adapter.id] = [int(i) for i in active]

    def _surrogate_term(self, adapter, x_t):
        scores, _ = adapter.candidate_scores(preprocess(x_t, adapter))
        if not hasattr(scores, "shape"):
            raise UnsupportedSurrogateError(
                f"surrogate {adapter.id!r} has no differentiable score path"
            )
        if scores.shape[0] == 0:
            return self.weight(adapter.id) * (x_t.sum() * 0.0)
        if adapter.id in self._frozen_active:
            active = set(self._frozen_active[adapter.id])
        else:
            with torch.no_grad():
                above = (scores > adapter.decision_threshold).nonzero().reshape(-1)
            active = {int(i) for i in above}
        active.add(int(torch.argmax(scores.detach())))
        idx = torch.as_tensor(sorted(active), dtype=torch.long)
        picked = torch.clamp(scores[idx], SCORE_CLAMP, 1.0 - SCORE_CLAMP)
        return self.weight(adapter.id) * (-torch.log1p(-picked)).sum()

    def describe(self):
        doc = super().describe()
        doc["anchor_id"] = getattr(self.anchor, "id", "") if self.anchor is not None else ""
        return doc


# -- free-function forms of the four operations -----------------------------

def embedding_divergence(x, anchor, ensemble, weights=None):
    """value = sum_i ||f_i(x) - f_i(anchor)||^2 with its pixel gradient."""
    return EmbeddingDivergence(ensemble, anchor, weights).value_and_grad(x)


def targeted_caption_loglik(x, target: TargetSentence, ensemble, weights=None):
    """value = sum_i sum_t log p_i(y_t | x, prompt, y_<t) with gradient."""
    return TargetedCaption(ensemble, target, weights).value_and_grad(x)


def detector_evasion(x, ensemble, anchor=None, weights=None):
    """value = sum_i sum_candidates -log(1 - score) with gradient."""
    return DetectorEvasion(ensemble, anchor, weights).value_and_grad(x)


# identical objective, detector-backbone encoders supplied by the caller
toxicity_evasion = embedding_divergence


OBJECTIVE_KINDS = {
    "embedding_divergence": EmbeddingDivergence,
    "targeted_caption": TargetedCaption,
    "detector_evasion": DetectorEvasion,
}


def make_objective(kind, ensemble, anchor=None, target=None, weights=None) -> LossObjective:
    """Factory used by the CLI; enforces the per-kind field invariants."""
    if kind == "embedding_divergence":
        if anchor is None:
            raise ConfigError("objective.anchor: required for embedding_divergence")
        return EmbeddingDivergence(ensemble, anchor, weights)
    if kind == "targeted_caption":
        if target is None:
            raise ConfigError("objective.target: required for targeted_caption")
        return TargetedCaption(ensemble, target, weights)
    if kind == "detector_evasion":
        return DetectorEvasion(ensemble, anchor, weights)
    raise ConfigError(
        f"objective.kind: unknown kind {kind!r}, expected one of {sorted(OBJECTIVE_KINDS)}"
    )
