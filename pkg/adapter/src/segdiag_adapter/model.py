"""Toy encoder-decoder segmentation network for fixture generation.

A deliberately small two-class network whose module paths match the
layer names the analysis pipeline expects (``encoder.0``..``encoder.5``,
``decoder.0``..``decoder.4``). Weights are built from a Philox stream
keyed by the seed, so a given seed always yields the same network, and
the model runs in float64 to keep finite-difference gradient checks
tight.

Input slices are 64x64; the encoder halves resolution five times
(64 -> 2) and the decoder mirrors it back up to a 64x64 2-class logit
map.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch
from torch import nn

INPUT_SIZE = 64
NUM_CLASSES = 2
FOREGROUND_CLASS = 1

_ENCODER_CHANNELS = [(1, 4), (4, 6), (6, 8), (8, 8), (8, 8), (8, 8)]
_DECODER_CHANNELS = [(8, 8), (8, 8), (8, 8), (8, 6), (6, 4)]


class _ConvBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, stride: int = 1, upsample: bool = False):
        super().__init__()
        self.upsample = nn.Upsample(scale_factor=2, mode="nearest") if upsample else None
        self.conv = nn.Conv2d(in_ch, out_ch, kernel_size=3, stride=stride, padding=1)
        self.act = nn.LeakyReLU(0.1)

    def forward(self, x):
        if self.upsample is not None:
            x = self.upsample(x)
        return self.act(self.conv(x))


class ToyVesselNet(nn.Module):
    """Encoder-decoder with the named-module layout used by the hooks."""

    def __init__(self):
        super().__init__()
        self.encoder = nn.ModuleList(
            [
                _ConvBlock(i, o, stride=1 if idx == 0 else 2)
                for idx, (i, o) in enumerate(_ENCODER_CHANNELS)
            ]
        )
        self.decoder = nn.ModuleList(
            [_ConvBlock(i, o, upsample=True) for i, o in _DECODER_CHANNELS]
        )
        self.head = nn.Conv2d(_DECODER_CHANNELS[-1][1], NUM_CLASSES, kernel_size=1)

    def forward(self, x):
        for block in self.encoder:
            x = block(x)
        for block in self.decoder:
            x = block(x)
        return self.head(x)


def build_toy_model(seed: int = 0, weight_scale: float = 1.6) -> ToyVesselNet:
    """Deterministic random-weight model; identical seeds give identical nets.

    The head is antisymmetric across the two classes (background logit =
    -foreground logit) and its bias is calibrated on a fixed procedural
    slice so the median logit difference is zero; random weights alone
    leave one class dominating everywhere, which makes degenerate
    all-one-class prediction masks.
    """
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    model = ToyVesselNet().double()
    state = model.state_dict()
    new_state = {}
    for name in sorted(state):
        shape = tuple(state[name].shape)
        if name.endswith("bias"):
            # bias-free convs keep the logits input-driven; deep chains of
            # random biases otherwise swamp the signal
            new_state[name] = torch.zeros(shape, dtype=torch.float64)
            continue
        fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else max(shape[0], 1)
        bound = weight_scale / np.sqrt(fan_in)
        values = rng.uniform(-bound, bound, size=shape)
        new_state[name] = torch.from_numpy(values)
    new_state["head.weight"][0] = -new_state["head.weight"][1]
    model.load_state_dict(new_state)
    model.eval()

    calibration = torch.from_numpy(procedural_slice(seed ^ 0xCA11B))[None, None]
    with torch.no_grad():
        logits = model(calibration)
        offset = float(logits[0, FOREGROUND_CLASS].median())
        model.head.bias[FOREGROUND_CLASS] -= offset / 2
        model.head.bias[0] += offset / 2
    return model


def save_toy_model(model: ToyVesselNet, path: str | Path, seed: int | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({"state_dict": model.state_dict(), "seed": seed}, path)
    meta = {"architecture": "ToyVesselNet", "input_size": INPUT_SIZE, "seed": seed}
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def load_toy_model(path: str | Path) -> ToyVesselNet:
    payload = torch.load(Path(path), map_location="cpu", weights_only=True)
    model = ToyVesselNet().double()
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model


def procedural_slice(seed: int, size: int = INPUT_SIZE) -> np.ndarray:
    """Synthetic input slice: a few smooth bumps plus mild noise, in [-1, 1]."""
    rng = np.random.Generator(np.random.Philox(key=int(seed) ^ 0xA11CE))
    ys, xs = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    field = np.zeros((size, size), dtype=np.float64)
    for _ in range(int(rng.integers(2, 5))):
        cy, cx = rng.uniform(8, size - 8, size=2)
        sigma = rng.uniform(3, 9)
        amp = rng.uniform(0.5, 1.5)
        field += amp * np.exp(-(((ys - cy) ** 2 + (xs - cx) ** 2) / (2 * sigma**2)))
    field += rng.standard_normal((size, size)) * 0.05
    field = field / max(np.abs(field).max(), 1e-9)
    return field
