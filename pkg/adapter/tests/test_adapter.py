import json
from pathlib import Path

import numpy as np
import pytest
import torch

from segdiag_adapter.fixtures import make_toy_fixtures
from segdiag_adapter.hooks import (
    DEFAULT_LAYERS,
    HookConfig,
    HookError,
    capture_slice,
    dump_slice,
    write_dump,
)
from segdiag_adapter.model import (
    build_toy_model,
    load_toy_model,
    procedural_slice,
    save_toy_model,
)


def _snapshot(root: Path) -> dict[str, bytes]:
    return {
        str(path.relative_to(root)): path.read_bytes()
        for path in sorted(root.rglob("*"))
        if path.is_file()
    }


def test_model_build_is_seed_deterministic():
    a = build_toy_model(3)
    b = build_toy_model(3)
    for (name_a, pa), (_, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert torch.equal(pa, pb), name_a
    c = build_toy_model(4)
    assert any(
        not torch.equal(pa, pc) for (_, pa), (_, pc) in zip(a.named_parameters(), c.named_parameters())
    )


def test_model_save_load_round_trip(tmp_path):
    model = build_toy_model(5)
    path = save_toy_model(model, tmp_path / "toy.pt", seed=5)
    again = load_toy_model(path)
    image = torch.from_numpy(procedural_slice(1))[None, None]
    with torch.no_grad():
        assert torch.equal(model(image), again(image))


def test_expected_layer_names_resolve():
    model = build_toy_model(0)
    names = dict(model.named_modules())
    for layer in DEFAULT_LAYERS:
        assert layer in names


def test_dump_shapes_match_live_activations():
    model = build_toy_model(0)
    image = procedural_slice(0)
    live = {}
    handles = []

    def record(name):
        def hook(_module, _inputs, output):
            live[name] = tuple(output.shape[1:])

        return hook

    for name, module in model.named_modules():
        if name in DEFAULT_LAYERS:
            handles.append(module.register_forward_hook(record(name)))
    with torch.no_grad():
        model(torch.from_numpy(image)[None, None])
    for handle in handles:
        handle.remove()

    dump = capture_slice(model, image, "s0")
    for name in DEFAULT_LAYERS:
        assert dump.features[name].shape == live[name]
        assert dump.grads[name].shape == live[name]


def test_dump_byte_stable_across_runs(tmp_path):
    model = build_toy_model(2)
    image = procedural_slice(42)
    for run in ("a", "b"):
        config = HookConfig(out_dir=tmp_path / run)
        dump_slice(model, image, "s0", config)
    assert _snapshot(tmp_path / "a") == _snapshot(tmp_path / "b")


def test_unresolvable_layer_is_hook_error():
    model = build_toy_model(0)
    with pytest.raises(HookError, match="bottleneck.9"):
        capture_slice(model, procedural_slice(0), "s0", HookConfig(layer_names=("bottleneck.9",)))


def test_all_background_prediction_dumps_zero_target(tmp_path):
    model = build_toy_model(0)
    with torch.no_grad():
        model.head.bias[1] -= 1000.0  # force background everywhere
    dump = capture_slice(model, procedural_slice(0), "s0")
    assert dump.zero_target
    assert dump.prediction_mask.sum() == 0
    assert dump.target_value == 0.0
    assert all((dump.grads[name] == 0).all() for name in DEFAULT_LAYERS)
    manifest_path = write_dump(dump, tmp_path)
    payload = json.loads(manifest_path.read_text())
    assert payload["zero_target"] is True


def test_make_fixtures_layout(tmp_path):
    manifests = make_toy_fixtures(seed=1, count=3, out_dir=tmp_path)
    assert len(manifests) == 3
    for path in manifests:
        payload = json.loads(path.read_text())
        assert len(payload["layers"]) == 7
        for entry in payload["layers"]:
            assert (path.parent / entry["features_path"]).is_file()
            assert (path.parent / entry["grads_path"]).is_file()
        assert (path.parent / payload["prediction_mask_path"]).is_file()
        assert (path.parent / payload["ground_truth_mask_path"]).is_file()


def test_fixture_checksums_stable_across_runs(tmp_path):
    make_toy_fixtures(seed=9, count=2, out_dir=tmp_path / "first")
    make_toy_fixtures(seed=9, count=2, out_dir=tmp_path / "second")
    assert _snapshot(tmp_path / "first") == _snapshot(tmp_path / "second")
    make_toy_fixtures(seed=10, count=2, out_dir=tmp_path / "third")
    assert _snapshot(tmp_path / "first") != _snapshot(tmp_path / "third")


def test_dumped_arrays_use_npy_v1(tmp_path):
    make_toy_fixtures(seed=3, count=1, out_dir=tmp_path)
    sample = next(tmp_path.rglob("*.features.npy"))
    blob = sample.read_bytes()
    assert blob.startswith(b"\x93NUMPY\x01\x00")


def test_cli_round_trip(tmp_path):
    from segdiag_adapter.cli import main

    model_path = tmp_path / "toy.pt"
    assert main(["init-toy", "--seed", "6", "--out", str(model_path)]) == 0
    inputs = tmp_path / "inputs"
    inputs.mkdir()
    for i in range(2):
        np.save(inputs / f"s{i}.npy", procedural_slice(600 + i))
    out = tmp_path / "dumps"
    assert main(["dump", "--model", str(model_path), "--input-dir", str(inputs), "--out", str(out)]) == 0
    assert len(list(out.glob("*.manifest.json"))) == 2
    assert main(["make-fixtures", "--seed", "1", "--count", "1", "--out", str(tmp_path / "fx")]) == 0
