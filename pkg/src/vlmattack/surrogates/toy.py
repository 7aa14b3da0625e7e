"""Desk-scale surrogate suite used by the test and acceptance pipelines.

These models are tiny but real: deterministic weights, smooth activations
(so finite-difference gradient checks pass cleanly), and the same adapter
interface heavyweight pretrained models plug into. Everything runs in
float64 on CPU.
"""

from __future__ import annotations

import numpy as np
import torch

from .base import CaptionerAdapter, DetectorAdapter, EncoderAdapter


def _randn(gen, *shape, scale=0.4):
    return torch.randn(*shape, generator=gen, dtype=torch.float64) * scale


class TinyEncoder(EncoderAdapter):
    """Shared conv stem plus a per-encoder sparse spatial head.

    The stem (seeded by family_seed) is what encoders of one family have
    in common; the head (seeded by seed) pools a random subset of stem
    cells into the embedding. Attacks against one encoder therefore
    concentrate on its own cells, while ensembles cover more of the shared
    feature space and transfer better to held-out family members, the same
    structure that makes real encoder ensembles transfer.
    """

    def __init__(self, surrogate_id, seed=0, family_seed=0, resolution=16, dim=16,
                 channels=6, active_cells=16, mean=(0.5, 0.5, 0.5), std=(0.5, 0.5, 0.5)):
        super().__init__(surrogate_id, input_resolution=resolution, mean=mean, std=std,
                         reentrant=True)
        fam = torch.Generator().manual_seed(int(family_seed))
        c = int(channels)
        self._dim = int(dim)
        self.w1 = _randn(fam, c, 3, 3, 3, scale=0.6)
        self.b1 = _randn(fam, c, scale=0.1)
        gen = torch.Generator().manual_seed(int(seed))
        side = int(resolution) // 2
        n_cells = side * side
        if not (1 <= active_cells <= n_cells):
            raise ValueError(f"active_cells must be in [1, {n_cells}]")
        cells = torch.randperm(n_cells, generator=gen)[: int(active_cells)]
        w3 = torch.zeros(self._dim, c * n_cells, dtype=torch.float64)
        for cell in cells:
            w3[:, int(cell) * c:(int(cell) + 1) * c] = _randn(gen, self._dim, c, scale=0.7)
        self.w3 = w3

    @property
    def embedding_dim(self):
        return self._dim

    def embed(self, inputs):
        h = torch.tanh(torch.nn.functional.conv2d(inputs, self.w1, self.b1, stride=2, padding=1))
        flat = h.squeeze(0).permute(1, 2, 0).reshape(1, -1)  # cell-major
        return flat @ self.w3.T


class IdentityEncoder(EncoderAdapter):
    """f(x) = flatten(x): embedding equals the (preprocessed) pixels."""

    def __init__(self, surrogate_id, resolution=None, dim=None,
                 mean=(0.0, 0.0, 0.0), std=(1.0, 1.0, 1.0)):
        super().__init__(surrogate_id, input_resolution=resolution, mean=mean, std=std,
                         reentrant=True)
        self._dim = dim

    @property
    def embedding_dim(self):
        if self._dim is None:
            raise ValueError("identity encoder dim is input-dependent")
        return int(self._dim)

    def embed(self, inputs):
        # back to HWC order so the embedding matches pixels.flatten()
        return inputs.permute(0, 2, 3, 1).reshape(1, -1)


class LinearEncoder(EncoderAdapter):
    """f(x) = W x over flattened pixels; the simplest non-trivial encoder."""

    def __init__(self, surrogate_id, seed=0, resolution=8, dim=12):
        super().__init__(surrogate_id, input_resolution=resolution, reentrant=True)
        gen = torch.Generator().manual_seed(int(seed))
        size = (int(resolution) ** 2) * 3
        self._dim = int(dim)
        self.weight = _randn(gen, self._dim, size, scale=1.0 / np.sqrt(size))

    @property
    def embedding_dim(self):
        return self._dim

    def embed(self, inputs):
        return inputs.permute(0, 2, 3, 1).reshape(1, -1) @ self.weight.T


BOS = "<bos>"
SEP = "<sep>"
DEFAULT_VOCAB = (
    BOS, SEP,
    "describe", "this", "image", "a", "the", "photo", "of",
    "cat", "dog", "castle", "panda", "face", "stone", "red", "blue",
    "green", "small", "large", "sitting", "standing", "on", "grass",
    "two", "men", "women", "painting", "bird", "tree", "water", "sky",
)


class WordTokenizer:
    """Whitespace word-level tokenizer with an exact decode roundtrip."""

    def __init__(self, vocab=DEFAULT_VOCAB):
        self.vocab = list(vocab)
        self.index = {w: i for i, w in enumerate(self.vocab)}
        if len(self.index) != len(self.vocab):
            raise ValueError("vocabulary contains duplicate words")

    def __len__(self):
        return len(self.vocab)

    def tokenize(self, text: str) -> list[int]:
        ids = []
        for word in text.split():
            if word not in self.index:
                raise ValueError(f"word {word!r} is not in the vocabulary")
            ids.append(self.index[word])
        return ids

    def decode(self, token_ids) -> str:
        return " ".join(self.vocab[int(i)] for i in token_ids)


class _ToyCaptionerBase(CaptionerAdapter):
    def __init__(self, surrogate_id, vocab=DEFAULT_VOCAB, resolution=12):
        super().__init__(surrogate_id, input_resolution=resolution, reentrant=True)
        self.tokenizer = WordTokenizer(vocab)

    @property
    def vocab_size(self):
        return len(self.tokenizer)

    def tokenize(self, text):
        return self.tokenizer.tokenize(text)

    def decode(self, token_ids):
        return self.tokenizer.decode(token_ids)

    def _wrap_prompt(self, prompt: str) -> list[int]:
        # adapter-owned template around the shared prompt text
        return self.tokenize(BOS) + self.tokenize(prompt) + self.tokenize(SEP)


class UniformCaptioner(_ToyCaptionerBase):
    """Emits the uniform next-token distribution regardless of the image.

    log p = -log(V) per token exactly; the pixel gradient is identically
    zero but stays finite and graph-connected.
    """

    def token_log_probs(self, inputs, prompt, target_ids):
        self._wrap_prompt(prompt)  # validates the prompt is tokenizable
        v = self.vocab_size
        logits = torch.zeros(v, dtype=inputs.dtype) + inputs.sum() * 0.0
        log_probs = torch.log_softmax(logits, dim=0)
        idx = torch.as_tensor([int(t) for t in target_ids], dtype=torch.long)
        return log_probs[idx]


class TinyCaptioner(_ToyCaptionerBase):
    """Vision-conditioned bigram language model with teacher forcing.

    Next-token logits depend on the pooled image features and the previous
    token embedding; enough structure for targeted-caption attacks to work
    end to end at desk scale.
    """

    def __init__(self, surrogate_id, seed=0, vocab=DEFAULT_VOCAB, resolution=12, dim=40):
        super().__init__(surrogate_id, vocab=vocab, resolution=resolution)
        gen = torch.Generator().manual_seed(int(seed))
        v = self.vocab_size
        d = int(dim)
        if d < v:
            raise ValueError(f"dim must be >= vocab size ({v}) for the orthogonal output head")
        # vision pathway deliberately dominates the bigram prior, and token
        # output directions are orthogonal, so epsilon-ball attacks can
        # steer the next-token argmax instead of dragging correlated tokens
        self.conv_w = _randn(gen, 4, 3, 3, 3)
        self.conv_b = _randn(gen, 4, scale=0.1)
        self.vision_w = _randn(gen, d, 16, scale=2.0)
        self.token_emb = _randn(gen, v, d, scale=0.5)
        self.u = _randn(gen, d, d, scale=1.6)
        self.r = _randn(gen, d, d, scale=0.3)
        self.hidden_b = _randn(gen, d, scale=0.1)
        raw = torch.randn(d, d, generator=gen, dtype=torch.float64)
        q, _ = torch.linalg.qr(raw)
        self.out_w = q[:v, :] * 2.0
        self.out_b = torch.zeros(v, dtype=torch.float64)

    def _vision_features(self, inputs):
        h = torch.tanh(torch.nn.functional.conv2d(inputs, self.conv_w, self.conv_b, padding=1))
        h = torch.nn.functional.adaptive_avg_pool2d(h, 2)
        return torch.tanh(h.reshape(-1) @ self.vision_w.T)

    def _next_logits(self, feats, prev_id: int):
        h = torch.tanh(feats @ self.u.T + self.token_emb[prev_id] @ self.r.T + self.hidden_b)
        return h @ self.out_w.T + self.out_b

    def token_log_probs(self, inputs, prompt, target_ids):
        feats = self._vision_features(inputs)
        prefix = self._wrap_prompt(prompt)
        sequence = prefix + [int(t) for t in target_ids]
        out = []
        for pos in range(len(prefix), len(sequence)):
            logits = self._next_logits(feats, sequence[pos - 1])
            out.append(torch.log_softmax(logits, dim=0)[sequence[pos]])
        return torch.stack(out)

    def greedy_decode(self, x, prompt, max_len=8) -> list[int]:
        from .base import preprocess

        with torch.no_grad():
            feats = self._vision_features(preprocess(x, self))
            ids = self._wrap_prompt(prompt)
            out = []
            for _ in range(max_len):
                logits = self._next_logits(feats, ids[-1])
                nxt = int(torch.argmax(logits))
                out.append(nxt)
                ids.append(nxt)
        return out


class TinyDetector(DetectorAdapter):
    """Two-layer brightness detector firing on bright square regions.

    conv1 averages a 5x5 neighborhood per channel (tanh squashed), conv2
    pools that into a confidence logit per stride-4 anchor. Bright windows
    (a white square) score near 1, dark backgrounds near 0; the steep gain
    keeps the decision boundary reachable within a 16/255 budget.
    """

    decision_threshold = 0.5

    def __init__(self, surrogate_id, resolution=24, gain=90.0, bias=-64.7):
        super().__init__(surrogate_id, input_resolution=resolution, reentrant=True)
        w1 = torch.full((4, 3, 5, 5), 1.0 / (3 * 25), dtype=torch.float64)
        w2 = torch.full((1, 4, 5, 5), float(gain) / (4 * 25), dtype=torch.float64)
        self.w1, self.w2 = w1, w2
        self.bias = float(bias)
        self.stride = 4
        self.window = 10.0  # receptive-field half-width in model pixels

    def candidate_scores(self, inputs):
        h = torch.tanh(torch.nn.functional.conv2d(inputs, self.w1, padding=2))
        logits = torch.nn.functional.conv2d(h, self.w2, padding=2, stride=self.stride)
        logits = logits.reshape(-1) + self.bias
        scores = torch.sigmoid(logits)
        side = int(np.sqrt(scores.shape[0]))
        boxes = []
        for i in range(scores.shape[0]):
            cy = (i // side) * self.stride + self.stride / 2
            cx = (i % side) * self.stride + self.stride / 2
            boxes.append([cx - self.window / 2, cy - self.window / 2,
                          cx + self.window / 2, cy + self.window / 2])
        return scores, torch.tensor(boxes, dtype=torch.float64)


def white_square_image(size=24, square=10, background=0.05, value=0.95):
    """Dark canvas with a bright centered square; the toy detector fires."""
    px = np.full((size, size, 3), background, dtype=np.float64)
    a = (size - square) // 2
    px[a:a + square, a:a + square, :] = value
    return px
