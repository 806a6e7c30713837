import json
import numpy as np
import pytest
from conftest import makeDisk
from dataset.dataset_loader import loadDataset
from dataset.image_io import loadMask, saveMask
from geometry.mask_geometry import estimateDiameter
from nodule_synth_main import main, parseFloatList, parseGrid, parseIntList


@pytest.fixture
def configPath(tmp_path):
    path = tmp_path / "config.toml"
    path.write_text("seed = 3\n\n[phantom]\nworkers = 1\nnodule-diameter-max = 20.0\n")
    return str(path)


def test_argument_parsers():
    assert parseGrid("2x3") == (2, 3)
    assert parseIntList("0,50,200") == [0, 50, 200]
    assert parseFloatList("40, 70.5") == [40.0, 70.5]


def test_phantom_command(tmp_path, configPath):
    out = str(tmp_path / "phantom")
    main(["-c", configPath, "phantom", "--normals", "1", "--nodules", "2", "--image-size", "128", "--out", out])
    normals, nodules = loadDataset(out)
    assert len(normals) == 1 and len(nodules) == 2
    assert nodules[0].getShape() == (128, 128)
    with open(f"{out}/manifest.json") as manifestFile:
        assert json.load(manifestFile)["seed"] == 3


def test_measure_and_modulate(tmp_path, configPath, capsys):
    maskPath = str(tmp_path / "disk.png")
    saveMask(maskPath, makeDisk(20, 128))
    main(["-c", configPath, "measure", "--in", maskPath])
    printed = float(capsys.readouterr().out.strip().splitlines()[-1])
    assert printed == pytest.approx(estimateDiameter(makeDisk(20, 128)), abs=1e-3)
    outPath = str(tmp_path / "scaled.png")
    main(["-c", configPath, "modulate", "--in", maskPath, "--d", "60", "--canvas", "128", "--out", outPath])
    assert abs(estimateDiameter(loadMask(outPath)) - 60) <= 1.0


def test_handled_errors_exit(tmp_path, configPath):
    maskPath = str(tmp_path / "disk.png")
    saveMask(maskPath, makeDisk(20, 128))
    with pytest.raises(SystemExit) as info:
        main(["-c", configPath, "modulate", "--in", maskPath, "--d", "200", "--canvas", "128", "--out", "x.png"])
    assert info.value.code == -1
    with pytest.raises(SystemExit) as info:
        main(["-c", configPath, "-s", "texture-gan.stages=three", "measure", "--in", maskPath])
    assert info.value.code == -1


def test_empty_mask_is_reported(tmp_path, configPath):
    maskPath = str(tmp_path / "empty.png")
    saveMask(maskPath, np.zeros((32, 32)))
    with pytest.raises(SystemExit):
        main(["-c", configPath, "modulate", "--in", maskPath, "--d", "10", "--canvas", "32", "--out", "y.png"])
