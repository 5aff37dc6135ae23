"""Model adapter: exports layer features/gradients for the analysis toolkit."""

__version__ = "0.1.0"

from .hooks import DEFAULT_LAYERS, HookConfig, HookError, capture_slice, dump_slice  # noqa: F401
from .model import ToyVesselNet, build_toy_model, load_toy_model, save_toy_model  # noqa: F401
