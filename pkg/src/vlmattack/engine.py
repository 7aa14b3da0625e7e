"""Constrained iterative attack optimizer.

Implements the full update loop used to craft transferable adversarial
images: frequency-domain input augmentation (Gaussian pixel noise plus a
multiplicative DCT-spectrum mask), a common-weakness walk across the
surrogate ensemble (reverse step per surrogate, gradients accumulated with
inner momentum), an outer sign-momentum step, l-inf projection, and a
quantization-safe 8-bit export whose constraint check is exact in integer
arithmetic.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .errors import ConfigError, DivergenceError
from .image import (
    GRID,
    Image,
    atomic_write_bytes,
    encode_png_bytes,
    is_grid_aligned,
    to_uint8,
)

EPS_GRID_TOL = 1e-9


@dataclass(frozen=True)
class AttackBudget:
    """The constraint set: l-inf radius, iteration count, step size.

    epsilon must be an integer multiple of 1/255 so that the constraint
    survives 8-bit export exactly.
    """

    epsilon: float
    iterations: int
    step_size: float
    norm: str = "linf"

    def validate(self):
        if self.norm != "linf":
            raise ConfigError(f"budget.norm: only 'linf' is supported, got {self.norm!r}")
        if not (0.0 < self.epsilon <= 1.0):
            raise ConfigError(f"budget.epsilon: must be in (0, 1], got {self.epsilon}")
        k = round(self.epsilon * GRID)
        if k < 1 or abs(self.epsilon * GRID - k) > EPS_GRID_TOL:
            raise ConfigError(
                f"budget.epsilon: must be an integer multiple of 1/255, got {self.epsilon}"
            )
        if not isinstance(self.iterations, int) or self.iterations < 1:
            raise ConfigError(f"budget.iterations: must be a positive integer, got {self.iterations}")
        # step_size 0 is allowed as the degenerate no-op attack
        if not np.isfinite(self.step_size) or self.step_size < 0:
            raise ConfigError(f"budget.step_size: must be finite and >= 0, got {self.step_size}")
        return self

    @property
    def epsilon_numerator(self) -> int:
        """epsilon expressed as k in k/255."""
        return int(round(self.epsilon * GRID))


@dataclass(frozen=True)
class OptimizerConfig:
    """Knobs of the spectrum-transform + common-weakness optimizer.

    spectrum_samples: augmented copies drawn per iteration.
    spectrum_rho: amplitude of the multiplicative DCT mask, U[1-rho, 1+rho].
    spectrum_sigma: std of the Gaussian pixel noise added before the DCT.
    outer_momentum: decay of both momentum accumulators (outer sign step
        and the inner common-weakness accumulation).
    inner_step_size: reverse-step length of the per-surrogate walk.
    rng_seed: seeds all stochastic draws; runs are bit-reproducible.
    """

    spectrum_samples: int = 20
    spectrum_rho: float = 0.5
    spectrum_sigma: float = 16 / 255
    outer_momentum: float = 0.9
    inner_step_size: float = (16 / 255) / 15
    rng_seed: int = 0

    def validate(self):
        if not isinstance(self.spectrum_samples, int) or self.spectrum_samples < 1:
            raise ConfigError(
                f"optimizer.spectrum_samples: must be a positive integer, got {self.spectrum_samples}"
            )
        for name in ("spectrum_rho", "spectrum_sigma", "outer_momentum", "inner_step_size"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ConfigError(f"optimizer.{name}: must be finite, got {v}")
        if not (0.0 <= self.spectrum_rho < 1.0):
            raise ConfigError(
                f"optimizer.spectrum_rho: must be in [0, 1) so mask entries stay positive, got {self.spectrum_rho}"
            )
        if self.spectrum_sigma < 0:
            raise ConfigError(f"optimizer.spectrum_sigma: must be >= 0, got {self.spectrum_sigma}")
        if not (0.0 <= self.outer_momentum < 1.0):
            raise ConfigError(
                f"optimizer.outer_momentum: must be in [0, 1), got {self.outer_momentum}"
            )
        if self.inner_step_size < 0:
            raise ConfigError(
                f"optimizer.inner_step_size: must be >= 0, got {self.inner_step_size}"
            )
        if not isinstance(self.rng_seed, int) or self.rng_seed < 0:
            raise ConfigError(
                f"optimizer.rng_seed: must be a non-negative integer, got {self.rng_seed}"
            )
        return self


@dataclass
class AttackResult:
    """Adversarial image plus the audit trail of the run that produced it."""

    adversarial: Image
    natural: Image
    loss_trace: list[float]
    per_surrogate_final: dict[str, float]
    budget: AttackBudget
    config: OptimizerConfig
    objective_doc: dict = field(default_factory=dict)
    quantized_ok: bool = False


def project_linf(x: np.ndarray, x_nat: np.ndarray, epsilon: float) -> np.ndarray:
    """Clamp x into the l-inf ball of radius epsilon around x_nat, then [0, 1].

    Coordinate-wise closest point; a point already inside both constraint
    sets is returned bit-exactly.
    """
    x = np.asarray(x, dtype=np.float64)
    x_nat = np.asarray(x_nat, dtype=np.float64)
    if x.shape != x_nat.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x_nat.shape}")
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    lo = np.maximum(x_nat - epsilon, 0.0)
    hi = np.minimum(x_nat + epsilon, 1.0)
    return np.clip(x, lo, hi)


def dct2(x: np.ndarray) -> np.ndarray:
    """Orthonormal type-II 2-D discrete cosine transform of one channel."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"dct2 expects a 2-D array, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise ValueError("dct2 input contains non-finite values")
    return scipy.fft.dctn(x, type=2, norm="ortho")


def idct2(x: np.ndarray) -> np.ndarray:
    """Exact inverse of dct2."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"idct2 expects a 2-D array, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise ValueError("idct2 input contains non-finite values")
    return scipy.fft.idctn(x, type=2, norm="ortho")


def spectrum_transform(
    x: np.ndarray, config: OptimizerConfig, rng: np.random.Generator
) -> np.ndarray:
    """One stochastic frequency-domain augmentation of the image.

    Per channel: idct2(dct2(x + n) * M) with n ~ N(0, sigma^2) pixel noise
    and M i.i.d. uniform on [1-rho, 1+rho]. The output is a model input, not
    a canonical image: it may leave [0, 1]. Deterministic given rng state.
    """
    x = np.asarray(x, dtype=np.float64)
    noise = rng.standard_normal(x.shape) * config.spectrum_sigma
    mask = rng.uniform(1.0 - config.spectrum_rho, 1.0 + config.spectrum_rho, size=x.shape)
    noisy = x + noise
    out = np.empty_like(x)
    for c in range(x.shape[-1]):
        out[..., c] = idct2(dct2(noisy[..., c]) * mask[..., c])
    return out


def cwa_gradient(
    x: np.ndarray,
    losses,
    config: OptimizerConfig,
    iteration: int | None = None,
) -> np.ndarray:
    """Common-weakness direction over an ordered surrogate ensemble.

    Walks the surrogates in sequence: evaluate the current surrogate's
    gradient, fold it into the momentum accumulator, then take a reverse
    step against its sign before evaluating the next surrogate. The
    accumulated direction feeds the outer update. With a single surrogate
    and inner_step_size 0 this collapses to the plain gradient.

    losses: ordered list of callables mapping an image array to
    (scalar value, gradient array), both in ascent orientation.
    """
    losses = list(losses)
    if not losses:
        raise ValueError("losses must be a non-empty list")
    z = np.array(x, dtype=np.float64, copy=True)
    accum = np.zeros_like(z)
    last = len(losses) - 1
    for j, loss in enumerate(losses):
        value, grad = loss(z)
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != z.shape:
            raise ValueError(
                f"loss {j} returned gradient of shape {grad.shape}, expected {z.shape}"
            )
        if not np.isfinite(value) or not np.isfinite(grad).all():
            raise DivergenceError(
                f"surrogate loss {j} returned a non-finite value"
                + (f" at iteration {iteration}" if iteration is not None else ""),
                iteration=iteration,
                surrogate_id=j,
            )
        accum = config.outer_momentum * accum + grad
        if j != last:
            z = z - config.inner_step_size * np.sign(grad)
    return accum


def run_attack(
    x_nat: Image,
    objective,
    budget: AttackBudget,
    config: OptimizerConfig,
) -> AttackResult:
    """Run the full attack loop and return the (unquantized) result.

    Each iteration: draw spectrum_samples augmented copies of the current
    iterate, average their common-weakness directions, take an outer
    sign-momentum step, project onto the epsilon ball and [0, 1]. The loss
    trace records the ascent-oriented objective value at the clean iterate
    entering each iteration, so entries are comparable across iterations.
    """
    budget.validate()
    config.validate()
    base = x_nat.pixels
    losses = objective.per_surrogate_losses()
    rng = np.random.default_rng(config.rng_seed)

    x = base.copy()
    momentum = np.zeros_like(x)
    trace: list[float] = []
    for t in range(budget.iterations):
        value = float(objective.ascent_value(x))
        if not np.isfinite(value):
            raise DivergenceError(
                f"objective value became non-finite at iteration {t}", iteration=t
            )
        trace.append(value)

        direction = np.zeros_like(x)
        for _ in range(config.spectrum_samples):
            transformed = spectrum_transform(x, config, rng)
            direction += cwa_gradient(transformed, losses, config, iteration=t)
        direction /= config.spectrum_samples

        scale = float(np.mean(np.abs(direction)))
        if scale > 0.0:
            direction = direction / scale
        momentum = config.outer_momentum * momentum + direction
        x = project_linf(x + budget.step_size * np.sign(momentum), base, budget.epsilon)

    per_final = {k: float(v) for k, v in objective.per_surrogate_values(x).items()}
    return AttackResult(
        adversarial=Image(x, id=x_nat.id),
        natural=x_nat,
        loss_trace=trace,
        per_surrogate_final=per_final,
        budget=budget,
        config=config,
        objective_doc=objective.describe(),
        quantized_ok=False,
    )


def quantize_and_verify(result: AttackResult) -> AttackResult:
    """Round the adversarial image to the 8-bit grid without leaving the ball.

    Rounds each pixel to k/255, re-projects any pixel the rounding pushed
    out of the epsilon ball, and re-checks the constraint in integer
    arithmetic, which is exact. Requires a grid-aligned natural image (true
    of anything loaded from an 8-bit file).
    """
    nat = result.natural.pixels
    if not is_grid_aligned(nat):
        raise ValueError(
            "quantize_and_verify requires a natural image on the 1/255 grid "
            "(load it from an 8-bit file or snap it first)"
        )
    k = result.budget.epsilon_numerator
    nat_int = to_uint8(nat).astype(np.int64)
    adv_int = np.rint(result.adversarial.pixels * GRID).astype(np.int64)
    lo = np.maximum(nat_int - k, 0)
    hi = np.minimum(nat_int + k, GRID)
    q_int = np.clip(adv_int, lo, hi)
    ok = bool(np.all(np.abs(q_int - nat_int) <= k))
    assert ok, "integer re-projection cannot exit the epsilon ball"
    quantized = Image(q_int.astype(np.float64) / GRID, id=result.adversarial.id)
    return dataclasses.replace(result, adversarial=quantized, quantized_ok=ok)


def config_digest(result: AttackResult) -> str:
    """Stable hash of everything that determined the run."""
    doc = {
        "budget": dataclasses.asdict(result.budget),
        "optimizer": dataclasses.asdict(result.config),
        "objective": result.objective_doc,
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def sidecar_document(result: AttackResult) -> dict:
    """The JSON sidecar exported next to every adversarial PNG."""
    return {
        "id": result.adversarial.id,
        "epsilon_numerator": result.budget.epsilon_numerator,
        "iterations": result.budget.iterations,
        "config_hash": config_digest(result),
        "config": {
            "budget": dataclasses.asdict(result.budget),
            "optimizer": dataclasses.asdict(result.config),
        },
        "objective": result.objective_doc,
        "loss_trace": result.loss_trace,
        "per_surrogate_final": result.per_surrogate_final,
        "quantized_ok": result.quantized_ok,
    }


def export_result(result: AttackResult, out_dir) -> tuple[str, str]:
    """Write <id>.png plus <id>.json under out_dir; returns both paths.

    Only quantization-verified results may be exported: the PNG encoding is
    lossless exactly because the pixels already sit on the 8-bit grid.
    """
    if not result.quantized_ok:
        raise ValueError("export requires a quantization-verified result")
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    stem = result.adversarial.id or "adversarial"
    png_path = os.path.join(out_dir, f"{stem}.png")
    sidecar_path = os.path.join(out_dir, f"{stem}.json")
    atomic_write_bytes(png_path, encode_png_bytes(result.adversarial))
    payload = json.dumps(sidecar_document(result), indent=2, sort_keys=True)
    atomic_write_bytes(sidecar_path, payload.encode("utf-8"))
    return png_path, sidecar_path
