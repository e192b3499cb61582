import json
import os
import stat

import numpy as np
import pytest

from gdyn import io
from gdyn.errors import ValidationError
from gdyn.integrators import TrajectorySnapshot
from gdyn.observables import FieldGrid


def test_field_grid_round_trip_is_bit_exact(tmp_path, rng):
    vals = rng.normal(size=(4, 3)) / 7
    vals[1, 2] = np.nan
    g = FieldGrid((-1.0, 1.0, -0.3, 0.9), 4, 3, vals, np.abs(rng.normal(size=(4, 3))) * 1e-17,
                  {"N": 4, "source": [[0.5, 0.0, 2]], "z": complex(1, 2)})
    csv_path, json_path = io.write_field_grid(g, tmp_path / "field")
    back = io.read_field_grid(tmp_path / "field")
    assert np.array_equal(back.values, g.values, equal_nan=True)
    assert np.array_equal(back.stderr, g.stderr)
    assert back.window == g.window
    assert back.meta["z"] == [1.0, 2.0]
    assert csv_path.read_text().splitlines()[0] == "re,im,value,stderr"
    assert stat.S_IMODE(os.stat(csv_path).st_mode) == 0o644


def test_field_grid_rejects_complex_values():
    g = FieldGrid((0, 1, 0, 1), 1, 1, np.array([[1 + 1j]]), np.zeros((1, 1)))
    with pytest.raises(ValidationError):
        io.field_grid_csv(g)


def test_field_grid_bad_row_count(tmp_path):
    g = FieldGrid.empty((0, 1, 0, 1), 2, 2)
    io.write_field_grid(g, tmp_path / "f")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    (tmp_path / "f.csv").write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(ValidationError):
        io.read_field_grid(tmp_path / "f")


def test_snapshot_round_trip(tmp_path, rng):
    snaps = [TrajectorySnapshot(k * 10, k * 0.01, rng.normal(size=5) + 1j * rng.normal(size=5)) for k in range(3)]
    p = io.write_atomic(tmp_path / "s.csv", io.snapshots_csv(snaps))
    back = io.read_snapshots_csv(p)
    assert [b[0] for b in back] == [0, 10, 20]
    for (step, t, lam), s in zip(back, snaps):
        assert t == s.time and np.array_equal(lam, s.lambdas)


def test_matrix_round_trip(tmp_path, rng):
    x = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    p = io.write_matrix(tmp_path / "m.gdyn", x)
    raw = p.read_bytes()
    assert raw[:4] == b"GDYN" and raw[4] == 1 and len(raw) == 9 + 16 * 36
    assert np.array_equal(io.read_matrix(p), x)


@pytest.mark.parametrize("raw", [b"GD", b"XXXX\x01\x01\x00\x00\x00" + bytes(16),
                                 b"GDYN\x02\x01\x00\x00\x00" + bytes(16), b"GDYN\x01\x02\x00\x00\x00" + bytes(16)])
def test_matrix_rejects_bad_dumps(raw):
    with pytest.raises(ValidationError):
        io.matrix_from_bytes(raw)


def test_matrix_requires_square():
    with pytest.raises(ValidationError):
        io.matrix_bytes(np.zeros((2, 3)))


def test_manifest_records_hashes(tmp_path):
    a = io.write_atomic(tmp_path / "a.txt", "alpha\n")
    b = io.write_atomic(tmp_path / "sub" / "b.bin", b"\x00\x01")
    m = io.write_manifest(tmp_path / "manifest.json", argv=["x"], config={"n": np.int64(3)}, seed=4,
                          version="0", started="s", finished="f", outputs=[a, b])
    doc = json.loads(m.read_text())
    assert [e["path"] for e in doc["outputs"]] == ["a.txt", "sub/b.bin"]
    assert doc["config"]["n"] == 3
    assert io.verify_manifest(m) == []
    a.write_text("changed\n")
    assert io.verify_manifest(m) == ["a.txt"]


def test_atomic_write_leaves_no_temporaries(tmp_path):
    io.write_atomic(tmp_path / "x.txt", "1")
    io.write_atomic(tmp_path / "x.txt", "2")
    assert sorted(os.listdir(tmp_path)) == ["x.txt"]
    assert (tmp_path / "x.txt").read_text() == "2"
