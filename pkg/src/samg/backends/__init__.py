from .base import BackendError, EncoderBackend, FeatureGrid, MaskCandidates, PromptSet
from .synthetic import SyntheticBackend


def make_backend(name, model_dir=None, **kwargs):
    """Construct a backend by name: 'synthetic' or 'onnx'."""
    if name == "synthetic":
        return SyntheticBackend(**kwargs)
    if name == "onnx":
        from .onnx import OnnxBackend, resolve_model_dir

        return OnnxBackend(resolve_model_dir(model_dir))
    raise ValueError(f"unknown backend {name!r} (expected 'synthetic' or 'onnx')")


__all__ = [
    "BackendError",
    "EncoderBackend",
    "FeatureGrid",
    "MaskCandidates",
    "PromptSet",
    "SyntheticBackend",
    "make_backend",
]
