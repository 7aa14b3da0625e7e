"""vlmattack: transferable l-inf adversarial attacks against
vision-language systems, plus the evaluation harness that measures them.
"""

from .engine import (
    AttackBudget,
    AttackResult,
    OptimizerConfig,
    cwa_gradient,
    dct2,
    idct2,
    project_linf,
    quantize_and_verify,
    run_attack,
    spectrum_transform,
)
from .errors import (
    ConfigError,
    DivergenceError,
    IngestionError,
    ManifestError,
    PendingVerdictError,
    RegistryError,
    SurrogateLoadError,
    TargetAuthError,
    TargetError,
    TargetRateLimitError,
    TargetTransportError,
    UnsupportedSurrogateError,
    VlmAttackError,
)
from .harness import (
    EvaluationRecord,
    MetricsReport,
    compute_metrics,
    detect_rejection,
    export_review_manifest,
    import_verdicts,
    load_dataset,
)
from .image import Image, load_image, save_png
from .objectives import (
    EmbeddingDivergence,
    DetectorEvasion,
    LossObjective,
    TargetedCaption,
    TargetSentence,
    detector_evasion,
    embedding_divergence,
    make_objective,
    targeted_caption_loglik,
    toxicity_evasion,
)
from .surrogates import SurrogateEnsemble

__version__ = "0.1.0"

__all__ = [
    "AttackBudget",
    "AttackResult",
    "ConfigError",
    "DetectorEvasion",
    "DivergenceError",
    "EmbeddingDivergence",
    "EvaluationRecord",
    "Image",
    "IngestionError",
    "LossObjective",
    "ManifestError",
    "MetricsReport",
    "OptimizerConfig",
    "PendingVerdictError",
    "RegistryError",
    "SurrogateEnsemble",
    "SurrogateLoadError",
    "TargetAuthError",
    "TargetError",
    "TargetRateLimitError",
    "TargetSentence",
    "TargetTransportError",
    "TargetedCaption",
    "UnsupportedSurrogateError",
    "VlmAttackError",
    "compute_metrics",
    "cwa_gradient",
    "dct2",
    "detect_rejection",
    "detector_evasion",
    "embedding_divergence",
    "export_review_manifest",
    "idct2",
    "import_verdicts",
    "load_dataset",
    "load_image",
    "make_objective",
    "project_linf",
    "quantize_and_verify",
    "run_attack",
    "save_png",
    "spectrum_transform",
    "targeted_caption_loglik",
    "toxicity_evasion",
]
