import os
import numpy as np
import torch
from dataset.image_io import (
    CsvLog,
    fileChecksum,
    loadCheckpoint,
    loadImage,
    loadMask,
    readJson,
    saveCheckpoint,
    saveGrid,
    saveImage,
    saveMask,
    writeJson,
)


def test_sixteen_bit_round_trip(tmp_path):
    pixels = np.random.default_rng(0).random((40, 30))
    path = str(tmp_path / "image.png")
    saveImage(path, pixels)
    loaded = loadImage(path)
    assert loaded.shape == (40, 30)
    assert np.max(np.abs(loaded - pixels)) <= 1 / 65535


def test_mask_round_trip(tmp_path, diskMask):
    mask = diskMask(7, 32)
    path = str(tmp_path / "masks" / "mask.png")
    saveMask(path, mask)
    assert np.array_equal(loadMask(path), mask)


def test_grid_is_eight_bit(tmp_path):
    path = str(tmp_path / "grid.png")
    saveGrid(path, np.linspace(0, 1, 64).reshape(8, 8))
    loaded = loadImage(path)
    assert np.max(np.abs(loaded - np.linspace(0, 1, 64).reshape(8, 8))) <= 0.5 / 255 + 1e-12


def test_json_and_checksum(tmp_path):
    path = str(tmp_path / "data.json")
    writeJson(path, {"b": [1, 2], "a": 0.5})
    assert readJson(path) == {"a": 0.5, "b": [1, 2]}
    first = fileChecksum(path)
    writeJson(path, {"a": 0.5, "b": [1, 2]})
    assert fileChecksum(path) == first


def test_checkpoint_round_trip(tmp_path):
    path = str(tmp_path / "model.pt")
    saveCheckpoint(path, {"weights": torch.arange(4.0), "config": {"stages": 2}})
    checkpoint = loadCheckpoint(path)
    assert torch.equal(checkpoint["weights"], torch.arange(4.0))
    assert checkpoint["config"] == {"stages": 2}


def test_csv_log(tmp_path):
    path = str(tmp_path / "losses.csv")
    log = CsvLog(path, ("step", "loss"))
    log.append({"step": 1, "loss": 0.5, "ignored": 3})
    log.append({"step": 2, "loss": 0.25})
    with open(path) as csvFile:
        assert csvFile.read() == "step,loss\n1,0.5\n2,0.25\n"
    assert log.getRows() == [{"step": 1, "loss": 0.5}, {"step": 2, "loss": 0.25}]


def test_writes_leave_no_temporary_files(tmp_path):
    saveImage(str(tmp_path / "a.png"), np.zeros((4, 4)))
    writeJson(str(tmp_path / "b.json"), {})
    CsvLog(str(tmp_path / "c.csv"), ("x",)).append({"x": 1})
    assert sorted(os.listdir(tmp_path)) == ["a.png", "b.json", "c.csv"]
