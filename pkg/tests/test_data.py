import json

import numpy as np
import pytest

from udl.data import (
    Dataset,
    Sample,
    load_dataset,
    sample_from_json,
    sample_to_json,
    save_dataset,
)


def make_sample(seed=0, **kw):
    rng = np.random.default_rng(seed)
    grid = rng.integers(0, 2, (25, 25), dtype=np.uint8)
    args = dict(grid=grid, ax=0.5, ay=0.75, tau=0.12, src="dagger-2")
    args.update(kw)
    return Sample(**args)


def test_sample_validation():
    with pytest.raises(ValueError):
        make_sample(ax=1.5)
    with pytest.raises(ValueError):
        make_sample(ay=-0.1)
    with pytest.raises(ValueError):
        make_sample(tau=-0.01)


def test_sample_grid_coerced():
    s = Sample(np.zeros(625), 0.0, 0.0)
    assert s.grid.shape == (25, 25)
    assert s.grid.dtype == np.uint8


def test_json_round_trip():
    s = make_sample()
    s2 = sample_from_json(sample_to_json(s))
    assert np.array_equal(s.grid, s2.grid)
    assert (s2.ax, s2.ay, s2.tau, s2.src) == (s.ax, s.ay, s.tau, s.src)


def test_json_schema():
    obj = json.loads(sample_to_json(make_sample()))
    assert set(obj) == {"grid", "ax", "ay", "tau", "src"}
    assert len(obj["grid"]) == 625
    assert set(obj["grid"]) <= {0, 1}


def test_dataset_append_extend():
    a = Dataset([make_sample(1)])
    b = Dataset([make_sample(2), make_sample(3)])
    a.extend(b)
    assert len(a) == 3
    a.append(make_sample(4))
    assert len(a) == 4


def test_to_arrays_shapes_and_values():
    ds = Dataset([make_sample(1, ax=0.25, ay=1.0, tau=0.0),
                  make_sample(2, ax=0.75, ay=0.5, tau=0.3)])
    x, a, t = ds.to_arrays()
    assert x.shape == (2, 1, 25, 25) and x.dtype == np.float32
    assert a.tolist() == [[0.25, 1.0], [0.75, 0.5]]
    assert t.tolist() == pytest.approx([0.0, 0.3])


def test_save_load_round_trip(tmp_path):
    ds = Dataset([make_sample(i, tau=0.01 * i) for i in range(5)])
    path = tmp_path / "d.jsonl"
    save_dataset(ds, path)
    loaded = load_dataset(path)
    assert len(loaded) == 5
    for s, s2 in zip(ds.samples, loaded.samples):
        assert np.array_equal(s.grid, s2.grid)
        assert (s2.ax, s2.ay, s2.tau, s2.src) == (s.ax, s.ay, s.tau, s.src)
    # byte-stable: saving the loaded dataset reproduces the file exactly
    path2 = tmp_path / "d2.jsonl"
    save_dataset(loaded, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_load_skips_blank_lines(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text(sample_to_json(make_sample()) + "\n\n")
    assert len(load_dataset(path)) == 1
