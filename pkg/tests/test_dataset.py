import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from surf import dataset as ds


def test_centering_and_scaling_examples():
    d = ds.standardize(np.array([[0.0, 2.0]]), np.array([1.0, 3.0]))
    np.testing.assert_array_equal(d.y, [-1.0, 1.0])
    assert d.std.y_mean == 2.0
    assert d.std.entry_means[0] == 1.0 and d.std.entry_scales[0] == 1.0
    np.testing.assert_array_equal(d.x[0], [-1.0, 1.0])
    assert np.mean(d.x[0] ** 2) == 1.0


def test_constant_entry_is_masked():
    raw = np.stack([np.array([5.0, 5.0, 5.0]), np.array([1.0, 2.0, 4.0])])
    d = ds.standardize(raw, np.array([1.0, 2.0, 3.0]))
    np.testing.assert_array_equal(d.x[0], 0.0)
    assert d.std.zero_variance_mask.tolist() == [True, False]


def test_standardize_rejects_bad_input():
    with pytest.raises(ValueError):
        ds.standardize(np.ones((2, 3)), np.ones(2))
    with pytest.raises(ValueError):
        ds.standardize(np.ones((2, 1)), np.ones(1))
    with pytest.raises(ValueError):
        ds.standardize(np.array([[np.nan, 1.0]]), np.ones(2))


def test_dataset_is_read_only(rng):
    d = ds.TensorDataset(rng.standard_normal((2, 3, 4)), rng.standard_normal(4))
    with pytest.raises(ValueError):
        d.x[0, 0, 0] = 1.0
    with pytest.raises(ValueError):
        ds.TensorDataset(np.ones((2, 3)), np.ones(2))


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 3), st.integers(1, 3), st.integers(2, 6)),
              elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_standardized_moments(raw):
    y = np.arange(raw.shape[-1], dtype=np.float64)
    d = ds.standardize(raw, y)
    assert abs(d.y.mean()) < 1e-12
    live = ~d.std.zero_variance_mask
    np.testing.assert_allclose(d.x.mean(axis=-1)[live], 0.0, atol=1e-9)
    np.testing.assert_allclose((d.x ** 2).mean(axis=-1)[live], 1.0, rtol=1e-6)
    np.testing.assert_allclose(d.std.invert(d.x)[live], raw[live], rtol=1e-9, atol=1e-9)


def test_roundtrip_bit_identical(tmp_path, rng):
    d = ds.standardize(rng.standard_normal((3, 4, 10)), rng.standard_normal(10))
    path = ds.save(d, tmp_path / "d")
    assert path.name == "dataset.json"
    back = ds.load(tmp_path / "d")
    assert back == d
    assert back.std == d.std


def test_raw_payload_is_standardized_on_load(tmp_path, rng):
    raw_x, raw_y = 3 + 2 * rng.standard_normal((2, 3, 12)), rng.standard_normal(12)
    d = ds.standardize(raw_x, raw_y)
    ds.save(d, tmp_path / "raw.json", raw=True)
    assert json.loads((tmp_path / "raw.json").read_text())["standardized"] is False
    back = ds.load(tmp_path / "raw.json")
    np.testing.assert_allclose(back.x, d.x, atol=1e-12)
    np.testing.assert_allclose(back.y, d.y, atol=1e-12)
    x, y = ds.load_raw(tmp_path / "raw.json")
    np.testing.assert_allclose(x, raw_x, atol=1e-12)
    np.testing.assert_allclose(y, raw_y, atol=1e-12)


def test_unstandardized_dataset_roundtrip(tmp_path, rng):
    d = ds.TensorDataset(rng.standard_normal((2, 2, 5)), rng.standard_normal(5))
    ds.save(d, tmp_path / "u.json")
    x, y, rec = ds.load_arrays(tmp_path / "u.json")
    assert rec is None
    np.testing.assert_array_equal(x, d.x)
    np.testing.assert_array_equal(y, d.y)


@pytest.fixture
def saved(tmp_path, rng):
    d = ds.standardize(rng.standard_normal((2, 3, 6)), rng.standard_normal(6))
    return ds.save(d, tmp_path / "d")


def _code(path):
    with pytest.raises(ds.DatasetError) as info:
        ds.load(path)
    return info.value.code


def test_truncated_payload(saved):
    xf = saved.parent / "dataset.x.f64"
    xf.write_bytes(xf.read_bytes()[:-8])
    assert _code(saved) == "truncated_payload"


def test_shape_mismatch(saved):
    doc = json.loads(saved.read_text())
    doc["shape"] = [3, 3]
    saved.write_text(json.dumps(doc))
    assert _code(saved) == "shape_mismatch"


def test_oversized_payload(saved):
    yf = saved.parent / "dataset.y.f64"
    yf.write_bytes(yf.read_bytes() + b"\0" * 8)
    assert _code(saved) == "shape_mismatch"


def test_missing_and_corrupt(saved, tmp_path):
    assert _code(tmp_path / "nowhere") == "missing_file"
    (saved.parent / "dataset.y.f64").unlink()
    assert _code(saved) == "missing_file"
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert _code(bad) == "corrupt_manifest"
    bad.write_text(json.dumps({"format": "other"}))
    assert _code(bad) == "corrupt_manifest"
