from .base import (
    CAPTIONER,
    DETECTOR,
    ENCODER,
    CaptionerAdapter,
    DetectionOutput,
    DetectorAdapter,
    EmbeddingVector,
    EncoderAdapter,
    SurrogateAdapter,
    SurrogateEnsemble,
    caption_loglik,
    detect,
    encode,
    preprocess,
)
from .registry import Registry, load_surrogate
from .toy import (
    IdentityEncoder,
    LinearEncoder,
    TinyCaptioner,
    TinyDetector,
    TinyEncoder,
    UniformCaptioner,
    WordTokenizer,
    white_square_image,
)

__all__ = [
    "CAPTIONER",
    "DETECTOR",
    "ENCODER",
    "CaptionerAdapter",
    "DetectionOutput",
    "DetectorAdapter",
    "EmbeddingVector",
    "EncoderAdapter",
    "IdentityEncoder",
    "LinearEncoder",
    "Registry",
    "SurrogateAdapter",
    "SurrogateEnsemble",
    "TinyCaptioner",
    "TinyDetector",
    "TinyEncoder",
    "UniformCaptioner",
    "WordTokenizer",
    "caption_loglik",
    "detect",
    "encode",
    "load_surrogate",
    "preprocess",
    "white_square_image",
]
