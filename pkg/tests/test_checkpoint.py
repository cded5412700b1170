import numpy as np
import pytest

from stereo3d.autodiff import CheckpointError, ParameterStore, load_checkpoint, save_checkpoint


def test_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    arrays = {
        "enc.w": rng.standard_normal((4, 3, 3, 3)).astype(np.float32),
        "enc.b": rng.standard_normal(4).astype(np.float32),
        "scalar": np.float32(3.25).reshape(()),
        "bn.running_mean": rng.standard_normal(4).astype(np.float32),
    }
    p = tmp_path / "model.ssck"
    save_checkpoint(str(p), arrays, {"arch": "test", "step": "17"})
    loaded, header = load_checkpoint(str(p))
    assert header == {"arch": "test", "step": "17"}
    assert list(loaded) == list(arrays)
    for k in arrays:
        assert loaded[k].shape == np.asarray(arrays[k]).shape
        assert np.array_equal(loaded[k], arrays[k])
        assert loaded[k].dtype == np.float32


def test_empty_header_ok(tmp_path):
    p = tmp_path / "m.ssck"
    save_checkpoint(str(p), {"x": np.zeros(2, np.float32)})
    _, header = load_checkpoint(str(p))
    assert header == {}


def test_bad_magic_rejected(tmp_path):
    p = tmp_path / "junk.ssck"
    p.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(CheckpointError):
        load_checkpoint(str(p))


def test_truncated_file_rejected(tmp_path):
    p = tmp_path / "m.ssck"
    save_checkpoint(str(p), {"x": np.arange(100, dtype=np.float32)})
    blob = p.read_bytes()
    p.write_bytes(blob[:-7])
    with pytest.raises(CheckpointError):
        load_checkpoint(str(p))


def test_header_value_with_equals_sign(tmp_path):
    p = tmp_path / "m.ssck"
    save_checkpoint(str(p), {}, {"cfg": "a=1,b=2"})
    _, header = load_checkpoint(str(p))
    assert header["cfg"] == "a=1,b=2"


def test_parameter_store_roundtrip(tmp_path):
    store = ParameterStore()
    rng = np.random.default_rng(1)
    store.parameter("w", rng.standard_normal((3, 2)))
    store.parameter("b", rng.standard_normal(2))
    store.buffer("running_mean", rng.standard_normal(2))
    p = tmp_path / "s.ssck"
    save_checkpoint(str(p), store.state_arrays())
    loaded, _ = load_checkpoint(str(p))

    other = ParameterStore()
    other.parameter("w", np.zeros((3, 2)))
    other.parameter("b", np.zeros(2))
    other.buffer("running_mean", np.zeros(2))
    other.load_state(loaded)
    for (_, a), (_, b) in zip(store.named_parameters(), other.named_parameters()):
        assert np.array_equal(a.data, b.data)
    assert np.array_equal(store.named_buffers()[0][1], other.named_buffers()[0][1])


def test_parameter_store_rejects_duplicates():
    store = ParameterStore()
    store.parameter("w", np.zeros(2))
    with pytest.raises(ValueError):
        store.parameter("w", np.zeros(2))
    with pytest.raises(ValueError):
        store.buffer("w", np.zeros(2))


def test_load_state_strict_checks():
    store = ParameterStore()
    store.parameter("w", np.zeros(2))
    with pytest.raises(KeyError):
        store.load_state({})
    with pytest.raises(KeyError):
        store.load_state({"w": np.zeros(2), "extra": np.zeros(1)})
    with pytest.raises(ValueError):
        store.load_state({"w": np.zeros(3)})
