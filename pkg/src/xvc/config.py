"""Plain-text ``key = value`` configuration with ``[section]`` headers.

Scene primitives are repeated blocks named ``[plane NAME]`` or
``[box NAME]``. Vectors are comma- or whitespace-separated numbers;
rotations are 9 row-major values. See :data:`DEFAULT_CONFIG` for every
key and its default.
"""
import configparser
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .camera import CameraIntrinsics, RigidTransform
from .errors import ContractError
from .photometric import PhotometricConfig
from .scene import Box, Plane, SyntheticScene, Texture
from .voxel import SWEEP_COUNTS, VoxelGrid

DEFAULT_CONFIG = """\
[experiment]
# name used in output file names
name = xvc
seed = 0

[camera]
fx = 60
fy = 60
u0 = 31.5
v0 = 23.5
height = 48
width = 64

[pose]
# camera-to-world pose of the source frame; the reference frame is the identity
rotation = 1 0 0 0 1 0 0 0 1
translation = 0.1 0 0

[weights]
alpha = 1
beta = 0.01
gamma = 0.05
eta = 0.05

[photometric]
ssim_weight = 0.85
ssim_window = 3
ssim_c1 = 1e-4
ssim_c2 = 9e-4
# object motion and camera motion for the vulnerability variants
object = box
object_motion = 0.3 0 0
occlusion_translation = 0.5 0 0
illumination = 1.2

[grid]
# voxel counts (Nx, Ny, Nz); bounds = auto uses the joint bounding box + 1%
voxels = 40 40 24
bounds = auto
kl_eps = 1e-8

[robustness]
# fixed grid with 0.5 m voxels; the probe box sits inside one voxel
bounds = -8 8 -4 2 0 12
voxels = 32 12 24
object = probe
deltas = 0 0 0; 0.1 0 0; 0.2 0 0; 0.1 0.2 0.3; 0.6 0 0; 1.0 0 0

[voxelsweep]
voxels = 1x1x1, 20x20x24, 40x40x24, 60x60x24
motion = 0.3 0 0

[dfa]
groups = 8
kernel = 3
feature_channels = 8

[scene]
light = 1.0

[plane wall]
axis = z
offset = 10
lo = -20 -20
hi = 20 1.5
texture = noise
color = 0.25 0.3 0.35
color2 = 0.75 0.7 0.65
period = 8
seed = 1

[plane ground]
axis = y
offset = 1.5
lo = -20 0.05
hi = 20 10
texture = noise
color = 0.3 0.25 0.2
color2 = 0.7 0.6 0.5
period = 4
seed = 2

[box box]
lo = -0.6 0.3 5.0
hi = 0.6 1.5 6.0
texture = checker
color = 0.1 0.15 0.6
color2 = 0.9 0.85 0.2
period = 1

[box probe]
lo = 2.05 1.05 5.1
hi = 2.35 1.45 5.4
texture = checker
color = 0.8 0.2 0.2
color2 = 0.2 0.8 0.2
period = 0.5
"""


def parse_vector(text, size=None):
    vals = [float(v) for v in text.replace(",", " ").split()]
    if size is not None and len(vals) != size:
        raise ContractError(f"expected {size} values, got {len(vals)} in {text!r}")
    return vals


def parse_counts(text):
    """``"40 40 24"``, ``"40,40,24"`` or ``"40x40x24"`` -> (40, 40, 24)."""
    vals = parse_vector(text.replace("x", " "), 3)
    if any(v != int(v) or v < 1 for v in vals):
        raise ContractError(f"voxel counts must be positive integers, got {text!r}")
    return tuple(int(v) for v in vals)


def parse_vector_list(text, size=3):
    return [parse_vector(part, size) for part in text.split(";") if part.strip()]


@dataclass
class ExperimentConfig:
    name: str = "xvc"
    seed: int = 0
    camera: CameraIntrinsics = None
    height: int = 48
    width: int = 64
    src_pose: RigidTransform = None
    weights: dict = field(default_factory=lambda: {"alpha": 1.0, "beta": 0.01, "gamma": 0.05, "eta": 0.05})
    photometric: PhotometricConfig = field(default_factory=PhotometricConfig)
    moving_object: str = "box"
    object_motion: tuple = (0.3, 0.0, 0.0)
    occlusion_translation: tuple = (0.5, 0.0, 0.0)
    illumination: float = 1.2
    grid_counts: tuple = (40, 40, 24)
    grid_bounds: tuple = None
    kl_eps: float = 1e-8
    robust_grid: VoxelGrid = None
    robust_object: str = "probe"
    robust_deltas: list = field(default_factory=list)
    sweep_counts: list = field(default_factory=lambda: list(SWEEP_COUNTS))
    sweep_motion: tuple = (0.3, 0.0, 0.0)
    dfa_groups: int = 8
    dfa_kernel: int = 3
    feature_channels: int = 8
    scene: SyntheticScene = None
    text: str = ""

    @property
    def digest(self):
        return hashlib.sha256(self.text.encode()).hexdigest()[:16]

    def grid_for(self, *clouds, counts=None):
        counts = counts or self.grid_counts
        if self.grid_bounds is None:
            return VoxelGrid.enclosing(*clouds, counts=counts)
        b = self.grid_bounds
        return VoxelGrid(*b, *counts)


def _texture(sec):
    return Texture(
        kind=sec.get("texture", "noise"),
        color=tuple(parse_vector(sec.get("color", "0.5 0.5 0.5"), 3)),
        color2=tuple(parse_vector(sec.get("color2", "0.8 0.8 0.8"), 3)),
        period=sec.getfloat("period", 2.0),
        seed=sec.getint("seed", 0),
    )


def scene_from_parser(cp):
    prims = []
    for name in cp.sections():
        kind, _, pname = name.partition(" ")
        sec = cp[name]
        if kind == "plane":
            prims.append(Plane(pname, sec["axis"].strip(), sec.getfloat("offset"),
                               tuple(parse_vector(sec["lo"], 2)), tuple(parse_vector(sec["hi"], 2)),
                               _texture(sec)))
        elif kind == "box":
            prims.append(Box(pname, tuple(parse_vector(sec["lo"], 3)),
                             tuple(parse_vector(sec["hi"], 3)), _texture(sec)))
    if not prims:
        raise ContractError("scene has no primitives")
    light = cp.getfloat("scene", "light", fallback=1.0)
    return SyntheticScene(tuple(prims), light)


def _parser(text):
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.read_string(text)
    return cp


def _canonical(cp):
    lines = []
    for s in cp.sections():
        lines.append(f"[{s}]")
        lines.extend(f"{k} = {v}" for k, v in cp[s].items())
    return "\n".join(lines) + "\n"


def load_config(path=None, overrides=None, seed=None):
    """Read a config file layered over the defaults.

    ``overrides`` maps ``"section.key"`` to replacement text. A user file
    that defines any scene primitive replaces the default scene entirely.
    """
    cp = _parser(DEFAULT_CONFIG)
    if path is not None:
        user = _parser(Path(path).read_text())
        if any(s.split(" ")[0] in ("plane", "box") for s in user.sections()):
            for s in list(cp.sections()):
                if s.split(" ")[0] in ("plane", "box"):
                    cp.remove_section(s)
        for s in user.sections():
            if not cp.has_section(s):
                cp.add_section(s)
            for k, v in user[s].items():
                cp[s][k] = v
    for key, value in (overrides or {}).items():
        section, _, k = key.rpartition(".")
        if not section:
            raise ContractError(f"override {key!r} must be section.key")
        if not cp.has_section(section):
            cp.add_section(section)
        cp[section][k] = value
    if seed is not None:
        cp["experiment"]["seed"] = str(int(seed))
    return config_from_parser(cp)


def config_from_parser(cp):
    cam = cp["camera"]
    K = CameraIntrinsics(cam.getfloat("fx"), cam.getfloat("fy"), cam.getfloat("u0"), cam.getfloat("v0"))
    pose = RigidTransform(np.array(parse_vector(cp["pose"]["rotation"], 9)).reshape(3, 3),
                          parse_vector(cp["pose"]["translation"], 3))
    ph = cp["photometric"]
    grid = cp["grid"]
    bounds = grid.get("bounds", "auto").strip()
    rob = cp["robustness"]
    rb = parse_vector(rob["bounds"], 6)
    w = cp["weights"]
    return ExperimentConfig(
        name=cp["experiment"].get("name", "xvc"),
        seed=cp["experiment"].getint("seed", 0),
        camera=K,
        height=cam.getint("height"),
        width=cam.getint("width"),
        src_pose=pose,
        weights={k: w.getfloat(k) for k in ("alpha", "beta", "gamma", "eta")},
        photometric=PhotometricConfig(ph.getfloat("ssim_weight"), ph.getint("ssim_window"),
                                      ph.getfloat("ssim_c1"), ph.getfloat("ssim_c2")),
        moving_object=ph.get("object", "box"),
        object_motion=tuple(parse_vector(ph["object_motion"], 3)),
        occlusion_translation=tuple(parse_vector(ph["occlusion_translation"], 3)),
        illumination=ph.getfloat("illumination"),
        grid_counts=parse_counts(grid["voxels"]),
        grid_bounds=None if bounds == "auto" else tuple(parse_vector(bounds, 6)),
        kl_eps=grid.getfloat("kl_eps", 1e-8),
        robust_grid=VoxelGrid(*rb, *parse_counts(rob["voxels"])),
        robust_object=rob.get("object", "probe"),
        robust_deltas=parse_vector_list(rob["deltas"]),
        sweep_counts=[parse_counts(c) for c in cp["voxelsweep"]["voxels"].split(",")],
        sweep_motion=tuple(parse_vector(cp["voxelsweep"]["motion"], 3)),
        dfa_groups=cp["dfa"].getint("groups"),
        dfa_kernel=cp["dfa"].getint("kernel"),
        feature_channels=cp["dfa"].getint("feature_channels"),
        scene=scene_from_parser(cp),
        text=_canonical(cp),
    )


def parse_sweep(spec):
    """``"k=v1,v2,..."`` -> (config override key, override text).

    Recognised keys: ``voxels`` (``40x40x24`` items), ``deltas`` (``0.1:0:0``
    items), ``delta_x``/``delta_y``/``delta_z`` (scalars along one axis).
    """
    key, sep, vals = spec.partition("=")
    if not sep:
        raise ContractError(f"sweep must look like k=v1,v2,..., got {spec!r}")
    key = key.strip()
    items = [v.strip() for v in vals.split(",") if v.strip()]
    if key == "voxels":
        for it in items:
            parse_counts(it)
        return "voxelsweep.voxels", ", ".join(items)
    if key == "deltas":
        vecs = [parse_vector(it.replace(":", " "), 3) for it in items]
        return "robustness.deltas", "; ".join(" ".join(repr(x) for x in v) for v in vecs)
    if key in ("delta_x", "delta_y", "delta_z"):
        axis = "xyz".index(key[-1])
        vecs = []
        for it in items:
            v = [0.0, 0.0, 0.0]
            v[axis] = float(it)
            vecs.append(v)
        return "robustness.deltas", "; ".join(" ".join(repr(x) for x in v) for v in vecs)
    raise ContractError(f"unknown sweep key {key!r}")
