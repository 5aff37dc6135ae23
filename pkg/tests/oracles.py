"""Independent brute-force oracles used by the test suite.

Everything here is written as plain loops over pixels/voxels, on
purpose: these implementations must stay independent of the library
code they check.
"""

from __future__ import annotations

import numpy as np


def mask_counts(a: np.ndarray, b: np.ndarray) -> tuple[int, int, int, int]:
    """(|a|, |b|, |a n b|, |a u b|) by explicit pixel iteration."""
    na = nb = inter = union = 0
    for idx in np.ndindex(a.shape):
        av = int(a[idx]) != 0
        bv = int(b[idx]) != 0
        na += av
        nb += bv
        inter += av and bv
        union += av or bv
    return na, nb, inter, union


def mask_metrics(a: np.ndarray, b: np.ndarray) -> dict[str, float]:
    """iou/dice/precision/recall/f1 from counted pixels, library conventions."""
    na, nb, inter, union = mask_counts(a, b)
    if union == 0:
        iou = 1.0
    elif na == 0 or nb == 0:
        iou = 0.0
    else:
        iou = inter / union
    dice = 1.0 if na + nb == 0 else 2.0 * inter / (na + nb)
    precision = inter / na if na > 0 else 0.0
    recall = inter / nb if nb > 0 else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return {
        "iou": iou,
        "dice": dice,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "counts": (na, nb, inter, union),
    }


def pooled_grad_map(features: np.ndarray, grads: np.ndarray, window: int) -> np.ndarray:
    """Direct loops: ReLU( sum_c max-pooled(G_c) * A_c ), clamped window."""
    C, H, W = features.shape
    lo = -((window - 1) // 2)
    hi = window // 2
    out = np.zeros((H, W), dtype=np.float64)
    for h in range(H):
        for w in range(W):
            acc = 0.0
            for c in range(C):
                best = -np.inf
                for dh in range(lo, hi + 1):
                    for dw in range(lo, hi + 1):
                        hh = min(max(h + dh, 0), H - 1)
                        ww = min(max(w + dw, 0), W - 1)
                        best = max(best, float(grads[c, hh, ww]))
                acc += best * float(features[c, h, w])
            out[h, w] = max(acc, 0.0)
    return out


def channel_weight_map(features: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """Direct loops: ReLU( sum_c mean(G_c) * A_c )."""
    C, H, W = features.shape
    out = np.zeros((H, W), dtype=np.float64)
    for h in range(H):
        for w in range(W):
            acc = 0.0
            for c in range(C):
                total = 0.0
                for hh in range(H):
                    for ww in range(W):
                        total += float(grads[c, hh, ww])
                acc += (total / (H * W)) * float(features[c, h, w])
            out[h, w] = max(acc, 0.0)
    return out


def mean_of_maps(maps: list[np.ndarray]) -> np.ndarray:
    """Pointwise mean by explicit loops."""
    H, W = maps[0].shape
    out = np.zeros((H, W), dtype=np.float64)
    for h in range(H):
        for w in range(W):
            total = 0.0
            for m in maps:
                total += float(m[h, w])
            out[h, w] = total / len(maps)
    return out


def bilinear_upsample(raw: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Corner-aligned bilinear interpolation by explicit loops."""
    h, w = raw.shape
    th, tw = target
    out = np.zeros((th, tw), dtype=np.float64)
    for i in range(th):
        sy = 0.0 if th == 1 or h == 1 else i * (h - 1) / (th - 1)
        y0 = int(np.floor(sy))
        y1 = min(y0 + 1, h - 1)
        wy = sy - y0
        for j in range(tw):
            sx = 0.0 if tw == 1 or w == 1 else j * (w - 1) / (tw - 1)
            x0 = int(np.floor(sx))
            x1 = min(x0 + 1, w - 1)
            wx = sx - x0
            out[i, j] = (
                raw[y0, x0] * (1 - wy) * (1 - wx)
                + raw[y1, x0] * wy * (1 - wx)
                + raw[y0, x1] * (1 - wy) * wx
                + raw[y1, x1] * wy * wx
            )
    return out


def saliency_pipeline(
    layer_arrays: dict[str, tuple[np.ndarray, np.ndarray]],
    input_shape: tuple[int, int],
    window: int = 1,
) -> np.ndarray:
    """Reference per-slice pipeline: raw map, upsample, min-max, mean."""
    per_layer = []
    for feats, grads in layer_arrays.values():
        raw = pooled_grad_map(np.asarray(feats, np.float32), np.asarray(grads, np.float32), window)
        up = bilinear_upsample(raw, input_shape)
        lo, hi = up.min(), up.max()
        per_layer.append(np.zeros(input_shape) if hi - lo < 1e-12 else (up - lo) / (hi - lo))
    return mean_of_maps(per_layer)


def edt_anisotropic(mask: np.ndarray, spacing: tuple[float, float, float]) -> np.ndarray:
    """Exact nearest-background-voxel-center distance, per foreground voxel."""
    fg = np.argwhere(mask)
    bg = np.argwhere(~mask.astype(bool))
    spacing_arr = np.asarray(spacing, dtype=np.float64)
    out = np.zeros(mask.shape, dtype=np.float64)
    for voxel in fg:
        deltas = (bg - voxel).astype(np.float64) * spacing_arr
        sq = np.add.reduce(deltas * deltas, axis=1)
        out[tuple(voxel)] = np.sqrt(sq.min())
    return out


def npy_v1_bytes(descr: str, shape: tuple[int, ...], payload: bytes) -> bytes:
    """Hand-built NPY v1.0 file: magic, version, padded header, raw data."""
    header = ("{'descr': '%s', 'fortran_order': False, 'shape': %s, }" % (descr, repr(shape))).encode("latin1")
    base = len(b"\x93NUMPY") + 2 + 2
    pad = 64 - ((base + len(header) + 1) % 64)
    header = header + b" " * pad + b"\n"
    out = b"\x93NUMPY" + bytes([1, 0]) + len(header).to_bytes(2, "little") + header
    return out + payload
