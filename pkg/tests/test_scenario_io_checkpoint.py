"""
Scenario files and the binary checkpoint container.
"""

import json
import struct

import numpy as np
import pytest

from occflow.checkpoint import (
    MAGIC,
    decode_weights,
    encode_weights,
    load_weights,
    read_weights,
    save_weights,
)
from occflow.errors import CorruptionError, OccFlowIOError, VersionError
from occflow.nn import Linear, Module
from occflow.scenario_gen import ScenarioSpec, generate
from occflow.scenario_io import load_scenario, save_scenario, scenario_to_dict
from occflow.scene import ModelConfig


class _Tiny(Module):
    def __init__(self, rng, d_out=3):
        self.fc   = Linear(2, d_out, rng)
        self.head = Linear(d_out, 1, rng, bias=False)


# =============================================================================
# Scenario files
# =============================================================================

class TestScenarioFiles:
    def test_save_then_load_reproduces_every_field(self, tmp_path, desk_cfg):
        spec = ScenarioSpec(n_agents=4, n_occluded=1, motion="mixed", road_layout="cross")
        original = generate(21, spec, desk_cfg)
        path = tmp_path / "scenarios" / "s.json"
        save_scenario(original, str(path))
        assert scenario_to_dict(load_scenario(str(path))) == scenario_to_dict(original)

    def test_file_is_plain_json(self, tmp_path, translating_box):
        path = tmp_path / "box.json"
        save_scenario(translating_box, str(path))
        data = json.loads(path.read_text())
        assert data["format"] == "ofk-scenario/1"
        assert data["grid"]["H"] == 32
        assert len(data["agents"][0]["future"]) == 3

    def test_missing_file(self, tmp_path):
        with pytest.raises(OccFlowIOError):
            load_scenario(str(tmp_path / "absent.json"))

    def test_not_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{ not json")
        with pytest.raises(CorruptionError):
            load_scenario(str(path))

    def test_missing_key(self, tmp_path, translating_box):
        data = scenario_to_dict(translating_box)
        del data["agents"][0]["length"]
        path = tmp_path / "broken.json"
        path.write_text(json.dumps(data))
        with pytest.raises(CorruptionError, match="malformed"):
            load_scenario(str(path))

    def test_wrong_format_tag(self, tmp_path, translating_box):
        data = scenario_to_dict(translating_box)
        data["format"] = "ofk-scenario/9"
        path = tmp_path / "future.json"
        path.write_text(json.dumps(data))
        with pytest.raises(CorruptionError, match="unsupported"):
            load_scenario(str(path))


# =============================================================================
# Checkpoints
# =============================================================================

class TestCheckpointContainer:
    def test_encode_decode(self, rng):
        state = {"a": rng.normal(size=(2, 3)), "b.c": np.array(1.5), "d": np.zeros(0)}
        digest = bytes(range(32))
        stored, decoded = decode_weights(encode_weights(state, digest))
        assert stored == digest
        assert list(decoded) == ["a", "b.c", "d"]
        np.testing.assert_array_equal(decoded["a"], state["a"])
        assert decoded["b.c"].shape == ()
        assert decoded["d"].shape == (0,)

    def test_header_layout(self):
        blob = encode_weights({}, b"\x01" * 32)
        assert blob[:4] == MAGIC
        assert struct.unpack("<I", blob[4:8]) == (1,)
        assert len(blob) == 4 + 4 + 32 + 4

    def test_bad_magic(self, rng):
        blob = encode_weights({"a": rng.normal(size=3)}, b"\x00" * 32)
        with pytest.raises(CorruptionError, match="magic"):
            decode_weights(b"XXXX" + blob[4:])

    def test_truncated(self, rng):
        blob = encode_weights({"a": rng.normal(size=3)}, b"\x00" * 32)
        with pytest.raises(CorruptionError, match="truncated"):
            decode_weights(blob[:-5])

    def test_trailing_bytes(self, rng):
        blob = encode_weights({"a": rng.normal(size=3)}, b"\x00" * 32)
        with pytest.raises(CorruptionError, match="trailing"):
            decode_weights(blob + b"\x00")

    def test_unknown_format_version(self):
        blob = bytearray(encode_weights({}, b"\x00" * 32))
        blob[4:8] = struct.pack("<I", 7)
        with pytest.raises(CorruptionError, match="version 7"):
            decode_weights(bytes(blob))


class TestModelWeights:
    def test_save_and_load(self, tmp_path, rng, micro_cfg):
        src, dst = _Tiny(rng), _Tiny(np.random.default_rng(99))
        path = tmp_path / "ckpt" / "epoch_001.ofk"
        save_weights(src, str(path), micro_cfg.digest())
        load_weights(dst, str(path), micro_cfg.digest())
        for (name, a), (_, b) in zip(src.named_parameters(), dst.named_parameters()):
            np.testing.assert_array_equal(a.data, b.data, err_msg=name)

    def test_digest_mismatch_names_both(self, tmp_path, rng, micro_cfg, desk_cfg):
        path = tmp_path / "w.ofk"
        save_weights(_Tiny(rng), str(path), micro_cfg.digest())
        with pytest.raises(VersionError) as info:
            load_weights(_Tiny(rng), str(path), desk_cfg.digest())
        assert micro_cfg.digest().hex() in info.value.message
        assert desk_cfg.digest().hex() in info.value.message
        assert info.value.exit_code == 2

    def test_shape_mismatch(self, tmp_path, rng, micro_cfg):
        path = tmp_path / "w.ofk"
        save_weights(_Tiny(rng, d_out=3), str(path), micro_cfg.digest())
        model = _Tiny(rng, d_out=4)
        before = model.fc.weight.data.copy()
        with pytest.raises(CorruptionError, match="does not fit"):
            load_weights(model, str(path), micro_cfg.digest())
        np.testing.assert_array_equal(model.fc.weight.data, before)

    def test_missing_tensor(self, tmp_path, rng, micro_cfg):
        model = _Tiny(rng)
        state = model.state_dict()
        del state["head.weight"]
        path = tmp_path / "w.ofk"
        path.write_bytes(encode_weights(state, micro_cfg.digest()))
        with pytest.raises(CorruptionError):
            load_weights(model, str(path), micro_cfg.digest())

    def test_missing_file(self, tmp_path):
        with pytest.raises(OccFlowIOError):
            read_weights(str(tmp_path / "nothing.ofk"))

    def test_digest_depends_on_architecture_only(self):
        base = ModelConfig.preset("micro")
        assert ModelConfig.preset("micro", lr=0.5).digest() == base.digest()
        assert ModelConfig.preset("micro", C=12).digest() != base.digest()
