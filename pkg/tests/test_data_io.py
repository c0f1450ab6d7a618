"""File formats: IDX, CIFAR binaries, weight bundles, result tables."""

import gzip
import json

import numpy as np
import pytest

from xbarsim.data_io import (
    MNIST_FILES,
    Dataset,
    load_bundle,
    load_cifar10,
    load_dataset,
    load_idx,
    load_idx_pair,
    read_csv,
    save_bundle,
    save_idx,
    write_csv,
)
from xbarsim.errors import FormatError
from xbarsim.network import init_weights, mlp_topology, mnist_topology
from xbarsim.rng import RngStream
from xbarsim.xbar import ClipSpec, Quantizer


def test_idx_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    imgs = rng.integers(0, 256, size=(7, 5, 4), dtype=np.uint8)
    p = tmp_path / "imgs-idx3-ubyte"
    save_idx(p, imgs)
    assert np.array_equal(load_idx(p), imgs)
    labels = rng.integers(0, 10, size=7).astype(np.uint8)
    q = tmp_path / "labels-idx1-ubyte"
    save_idx(q, labels)
    assert np.array_equal(load_idx(q), labels)


def test_idx_gzip_fallback(tmp_path):
    imgs = np.arange(24, dtype=np.uint8).reshape(2, 3, 4)
    plain = tmp_path / "x-idx3-ubyte"
    save_idx(plain, imgs)
    gz = tmp_path / "y-idx3-ubyte.gz"
    with gzip.open(gz, "wb") as f:
        f.write(plain.read_bytes())
    assert np.array_equal(load_idx(tmp_path / "y-idx3-ubyte"), imgs)


def test_idx_error_messages_carry_offsets(tmp_path):
    p = tmp_path / "bad"
    p.write_bytes(b"\x00\x01")
    with pytest.raises(FormatError, match="too short"):
        load_idx(p)
    # wrong dtype code in the magic
    p.write_bytes(bytes([0, 0, 0x09, 1]) + b"\x00" * 8)
    with pytest.raises(FormatError, match="bad magic"):
        load_idx(p)
    # header says 2 dims but only one is present
    p.write_bytes(bytes([0, 0, 0x08, 2]) + b"\x00\x00\x00\x02")
    with pytest.raises(FormatError, match="truncated header"):
        load_idx(p)
    # payload shorter than the declared element count
    p.write_bytes(bytes([0, 0, 0x08, 1]) + b"\x00\x00\x00\x05" + b"abc")
    with pytest.raises(FormatError, match="should be 5 bytes, found 3"):
        load_idx(p)
    with pytest.raises(FormatError, match="no such file"):
        load_idx(tmp_path / "absent")


def test_idx_pair_normalization(tmp_path):
    imgs = np.full((3, 4, 4), 255, dtype=np.uint8)
    labels = np.array([1, 2, 3], dtype=np.uint8)
    save_idx(tmp_path / "x", imgs)
    save_idx(tmp_path / "y", labels)
    x, y = load_idx_pair(tmp_path / "x", tmp_path / "y")
    assert x.shape == (3, 4, 4, 1) and x.dtype == np.float32
    assert x.max() == 1.0
    assert y.dtype == np.int64
    save_idx(tmp_path / "y2", labels[:2])
    with pytest.raises(FormatError, match="labels"):
        load_idx_pair(tmp_path / "x", tmp_path / "y2")


def _write_cifar(path, n, rng):
    labels = rng.integers(0, 10, size=n, dtype=np.uint8)
    pixels = rng.integers(0, 256, size=(n, 3072), dtype=np.uint8)
    rec = np.concatenate([labels[:, None], pixels], axis=1)
    path.write_bytes(rec.tobytes())
    return labels, pixels


def test_cifar_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    for i in range(1, 6):
        _write_cifar(tmp_path / f"data_batch_{i}.bin", 4, rng)
    labels, pixels = _write_cifar(tmp_path / "test_batch.bin", 3, rng)
    x_train, y_train, x_test, y_test = load_cifar10(tmp_path)
    assert x_train.shape == (20, 32, 32, 3)
    assert x_test.shape == (3, 32, 32, 3)
    assert np.array_equal(y_test, labels)
    # channel-planar to HWC: red plane fills channel 0
    assert np.array_equal(x_test[0, :, :, 0].ravel(), pixels[0, :1024])
    assert np.array_equal(x_test[0, :, :, 2].ravel(), pixels[0, 2048:])


def test_cifar_format_errors(tmp_path):
    p = tmp_path / "data_batch_1.bin"
    p.write_bytes(b"\x00" * 100)
    with pytest.raises(FormatError, match="3073"):
        load_cifar10(tmp_path)
    rec = np.zeros((2, 3073), dtype=np.uint8)
    rec[1, 0] = 11  # label out of range
    p.write_bytes(rec.tobytes())
    for i in range(2, 6):
        (tmp_path / f"data_batch_{i}.bin").write_bytes(np.zeros((1, 3073), np.uint8).tobytes())
    (tmp_path / "test_batch.bin").write_bytes(np.zeros((1, 3073), np.uint8).tobytes())
    with pytest.raises(FormatError, match="label 11 out of range at record 1"):
        load_cifar10(tmp_path)


def test_load_dataset_idx_layout(tmp_path):
    d = tmp_path / "tiny"
    rng = np.random.default_rng(2)
    save_idx(d / MNIST_FILES["x_train"], rng.integers(0, 256, (6, 28, 28), dtype=np.uint8))
    save_idx(d / MNIST_FILES["y_train"], (np.arange(6) % 3).astype(np.uint8))
    save_idx(d / MNIST_FILES["x_test"], rng.integers(0, 256, (4, 28, 28), dtype=np.uint8))
    save_idx(d / MNIST_FILES["y_test"], (np.arange(4) % 3).astype(np.uint8))
    ds = load_dataset("tiny", tmp_path)
    assert isinstance(ds, Dataset)
    assert ds.input_shape == (28, 28, 1)
    assert ds.classes == 3


def test_bundle_roundtrip_bit_exact(tmp_path):
    spec = mnist_topology()
    init_weights(spec, RngStream(3, 0))
    spec.sigma_neu = 0.4
    spec.clip = ClipSpec(12.0, 88.0)
    spec.dac = {0: Quantizer(None, 0.0, 1.0)}
    spec.adc = {11: Quantizer(None, -3.5, 4.25)}
    save_bundle(tmp_path / "b", spec, meta={"note": "test"})
    loaded, meta = load_bundle(tmp_path / "b")
    assert meta == {"note": "test"}
    assert loaded.sigma_neu == 0.4
    assert loaded.clip == ClipSpec(12.0, 88.0)
    assert loaded.activation_bound == spec.activation_bound
    assert [type(l) for l in loaded.layers] == [type(l) for l in spec.layers]
    for i in spec.parameterized_indices():
        for name in spec.weights[i]:
            assert np.array_equal(loaded.weights[i][name], spec.weights[i][name])
            assert loaded.weights[i][name].dtype == np.float32
    assert loaded.dac[0].lo == 0.0 and loaded.dac[0].hi == 1.0
    assert loaded.adc[11].lo == -3.5 and loaded.adc[11].hi == 4.25
    assert loaded.adc[11].bits is None


def test_bundle_missing_tensor_names_layer(tmp_path):
    spec = mlp_topology(4, 6, 3)
    init_weights(spec, RngStream(4, 0))
    save_bundle(tmp_path / "b", spec)
    manifest = json.loads((tmp_path / "b" / "manifest.json").read_text())
    del manifest["tensors"]["layer2.weight"]
    (tmp_path / "b" / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(FormatError, match="layer2.weight for layer 2"):
        load_bundle(tmp_path / "b")


def test_bundle_missing_blob_and_bad_size(tmp_path):
    spec = mlp_topology(4, 6, 3)
    init_weights(spec, RngStream(4, 0))
    save_bundle(tmp_path / "b", spec)
    (tmp_path / "b" / "layer0.weight.bin").unlink()
    with pytest.raises(FormatError, match="missing blob layer0.weight.bin"):
        load_bundle(tmp_path / "b")
    save_bundle(tmp_path / "b", spec)
    (tmp_path / "b" / "layer0.weight.bin").write_bytes(b"\x00" * 8)
    with pytest.raises(FormatError, match="has 2 values, expected 24"):
        load_bundle(tmp_path / "b")


def test_bundle_requires_manifest(tmp_path):
    with pytest.raises(FormatError, match="manifest.json"):
        load_bundle(tmp_path)
    (tmp_path / "manifest.json").write_text('{"format": "something-else"}')
    with pytest.raises(FormatError, match="unknown bundle format"):
        load_bundle(tmp_path)


def test_csv_roundtrip_preserves_float_bits(tmp_path):
    header = ["name", "value", "count"]
    rows = [
        ["a", 0.1 + 0.2, 3],
        ["b", 1e-17, 0],
        ["c", -1.5, -2],
    ]
    p = tmp_path / "t.csv"
    write_csv(p, header, rows)
    h, r = read_csv(p)
    assert h == header
    assert float(r[0][1]) == 0.1 + 0.2  # repr round trip is exact
    assert float(r[1][1]) == 1e-17
    assert r[2][2] == "-2"
    with pytest.raises(FormatError, match="row width"):
        write_csv(p, header, [["a", 1.0]])


def test_csv_is_deterministic_text(tmp_path):
    rows = [["x", 0.3333333333333333, 1]]
    write_csv(tmp_path / "a.csv", ["k", "v", "n"], rows)
    write_csv(tmp_path / "b.csv", ["k", "v", "n"], rows)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
