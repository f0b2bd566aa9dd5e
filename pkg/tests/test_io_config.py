import struct

import numpy as np
import pytest

from xvc import tensorio
from xvc.config import DEFAULT_CONFIG, load_config, parse_counts, parse_sweep
from xvc.errors import ContractError
from xvc.tensor import Tensor


def test_xvt_layout(tmp_path):
    x = np.arange(6.0).reshape(2, 3)
    raw = tensorio.dumps(x)
    assert raw[:4] == b"XVT1"
    assert struct.unpack_from("<3Q", raw, 4) == (2, 2, 3)
    assert np.frombuffer(raw[28:], "<f8").tolist() == x.ravel().tolist()
    tensorio.save(tmp_path / "x.xvt", Tensor(x))
    np.testing.assert_array_equal(tensorio.load(tmp_path / "x.xvt"), x)


def test_xvt_scalar_roundtrip():
    assert tensorio.loads(tensorio.dumps(np.float64(2.5))).item() == 2.5


def test_xvt_rejects_bad_input():
    with pytest.raises(ContractError):
        tensorio.loads(b"NOPE" + bytes(8))
    raw = tensorio.dumps(np.ones(3))
    with pytest.raises(ContractError):
        tensorio.loads(raw[:-8])


def test_depth_sidecar_mask(tmp_path):
    d = np.array([[1.0, 0.0], [3.0, 4.0]])
    m = np.array([[True, False], [False, True]])
    tensorio.save_depth(tmp_path / "d.xvt", d, m)
    assert (tmp_path / "d.xvt.mask").exists()
    depth, mask = tensorio.load_depth(tmp_path / "d.xvt")
    np.testing.assert_array_equal(depth, d)
    np.testing.assert_array_equal(mask, m)


def test_default_config_values(cfg):
    assert cfg.weights == {"alpha": 1.0, "beta": 0.01, "gamma": 0.05, "eta": 0.05}
    assert cfg.grid_counts == (40, 40, 24)
    assert cfg.sweep_counts[1:] == [(20, 20, 24), (40, 40, 24), (60, 60, 24)]
    assert cfg.dfa_groups == 8 and cfg.dfa_kernel == 3
    assert cfg.photometric.ssim_weight == 0.85
    assert len(cfg.digest) == 16


def test_config_file_and_overrides(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("[weights]\nbeta = 0.5\n[grid]\nvoxels = 10x12x14\n")
    cfg = load_config(p, {"experiment.name": "demo"}, seed=7)
    assert cfg.weights["beta"] == 0.5
    assert cfg.grid_counts == (10, 12, 14)
    assert cfg.name == "demo" and cfg.seed == 7
    assert cfg.digest != load_config().digest


def test_user_scene_replaces_default(tmp_path):
    p = tmp_path / "s.cfg"
    p.write_text("[plane back]\naxis = z\noffset = 7\nlo = -9 -9\nhi = 9 9\n"
                 "[photometric]\nobject = back\n[robustness]\nobject = back\n")
    cfg = load_config(p)
    assert [q.name for q in cfg.scene.primitives] == ["back"]


def test_parse_helpers():
    assert parse_counts("40x40x24") == (40, 40, 24)
    assert parse_counts("40, 24, 40") == (40, 24, 40)
    with pytest.raises(ContractError):
        parse_counts("0x1x1")
    assert parse_sweep("voxels=1x1x1,20x20x24") == ("voxelsweep.voxels", "1x1x1, 20x20x24")
    key, val = parse_sweep("delta_x=0.1,0.6")
    assert key == "robustness.deltas" and val == "0.1 0.0 0.0; 0.6 0.0 0.0"
    with pytest.raises(ContractError):
        parse_sweep("bogus=1")
    with pytest.raises(ContractError):
        parse_sweep("voxels")


def test_reference_page_matches_defaults():
    from pathlib import Path
    page = Path(__file__).resolve().parents[1] / "docs" / "config-reference.md"
    assert DEFAULT_CONFIG in page.read_text()
