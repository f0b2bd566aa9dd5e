"""Analytic ray-cast scenes with exact depth, for oracle experiments.

A scene is a tuple of axis-aligned textured planes and boxes plus a global
light scale. Rendering casts one ray per pixel centre and keeps the nearest
hit; depth is the camera-frame z of the hit. Textures are attached to their
primitive, so translating a primitive moves its pattern with it.
"""
from dataclasses import dataclass, field, replace

import numpy as np

from .camera import CameraIntrinsics, RigidTransform
from .errors import ContractError, DomainError

AXES = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class Texture:
    """Procedural colour pattern over 2-D surface coordinates in metres.

    kinds: ``constant``, ``gradient``, ``checker`` (smoothed), ``noise``
    (band-limited sum of sinusoids) and ``noise_hf`` (high-frequency stress
    pattern).
    """

    kind: str = "noise"
    color: tuple = (0.5, 0.5, 0.5)
    color2: tuple = (0.8, 0.8, 0.8)
    period: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("constant", "gradient", "checker", "noise", "noise_hf"):
            raise ContractError(f"unknown texture kind {self.kind!r}")
        if not self.period > 0:
            raise ContractError("texture period must be positive")

    def __call__(self, s, t):
        c1 = np.asarray(self.color, dtype=np.float64)
        c2 = np.asarray(self.color2, dtype=np.float64)
        w = 2.0 * np.pi / self.period
        if self.kind == "constant":
            mix = np.zeros_like(s)
        elif self.kind == "gradient":
            mix = 0.5 + 0.25 * (np.sin(w * s) + np.sin(w * t))
        elif self.kind == "checker":
            mix = 0.5 + 0.5 * np.tanh(2.0 * np.sin(w * s) * np.sin(w * t))
        else:
            rng = np.random.default_rng(self.seed)
            k = 6
            scale = 1.0 if self.kind == "noise" else 12.0
            theta = rng.uniform(0, 2 * np.pi, k)
            freq = w * scale * rng.uniform(0.5, 1.0, k)
            phase = rng.uniform(0, 2 * np.pi, k)
            acc = np.zeros_like(s)
            for a, f, ph in zip(theta, freq, phase):
                acc = acc + np.sin(f * (np.cos(a) * s + np.sin(a) * t) + ph)
            mix = 0.5 + 0.5 * acc / k
        return c1 + mix[..., None] * (c2 - c1)


@dataclass(frozen=True)
class Plane:
    """Rectangle on ``axis = offset``, bounded by ``lo``/``hi`` on the two
    remaining axes (in x, y, z order)."""

    name: str
    axis: str
    offset: float
    lo: tuple
    hi: tuple
    texture: Texture = field(default_factory=Texture)

    def __post_init__(self):
        if self.axis not in AXES:
            raise ContractError(f"plane axis must be x, y or z, got {self.axis!r}")
        if not all(h > l for l, h in zip(self.lo, self.hi)) or len(self.lo) != 2:
            raise ContractError(f"plane {self.name!r} has an empty extent")

    @property
    def anchor(self):
        return np.array(self.lo, dtype=np.float64)

    def translated(self, delta):
        a = AXES[self.axis]
        d = np.asarray(delta, dtype=np.float64)
        rest = np.delete(d, a)
        return replace(self, offset=self.offset + d[a],
                       lo=tuple(np.add(self.lo, rest)), hi=tuple(np.add(self.hi, rest)))

    def intersect(self, origin, dirs):
        """Ray parameter of the hit (inf for misses) and texture coordinates."""
        a = AXES[self.axis]
        others = [i for i in range(3) if i != a]
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (self.offset - origin[a]) / dirs[:, a]
        hit = origin + s[:, None] * dirs
        ok = np.isfinite(s) & (s > 0)
        for j, i in enumerate(others):
            ok &= (hit[:, i] >= self.lo[j]) & (hit[:, i] <= self.hi[j])
        s = np.where(ok, s, np.inf)
        uv = hit[:, others] - self.anchor
        return s, uv[:, 0], uv[:, 1]


@dataclass(frozen=True)
class Box:
    name: str
    lo: tuple
    hi: tuple
    texture: Texture = field(default_factory=Texture)

    def __post_init__(self):
        if len(self.lo) != 3 or not all(h > l for l, h in zip(self.lo, self.hi)):
            raise ContractError(f"box {self.name!r} has an empty extent")

    def translated(self, delta):
        d = np.asarray(delta, dtype=np.float64)
        return replace(self, lo=tuple(np.add(self.lo, d)), hi=tuple(np.add(self.hi, d)))

    def intersect(self, origin, dirs):
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (lo - origin) / dirs
            t2 = (hi - origin) / dirs
        # rays parallel to a slab: inside -> unbounded, outside -> miss
        par = dirs == 0
        inside = (origin >= lo) & (origin <= hi)
        t1 = np.where(par, np.where(inside, -np.inf, np.inf), t1)
        t2 = np.where(par, np.where(inside, np.inf, -np.inf), t2)
        tn = np.minimum(t1, t2)
        tf = np.maximum(t1, t2)
        near = tn.max(axis=1)
        far = tf.min(axis=1)
        ok = (near <= far) & (near > 0)
        s = np.where(ok, near, np.inf)
        face = np.argmax(tn, axis=1)
        hit = origin + np.where(ok, near, 0.0)[:, None] * dirs - lo
        # texture coordinates on the entered face
        first = np.where(face == 0, hit[:, 1], hit[:, 0])
        second = np.where(face == 2, hit[:, 1], hit[:, 2])
        return s, first, second


@dataclass(frozen=True)
class SyntheticScene:
    primitives: tuple
    light: float = 1.0

    def __post_init__(self):
        names = [p.name for p in self.primitives]
        if len(set(names)) != len(names):
            raise ContractError("primitive names must be unique")
        if not self.light > 0:
            raise ContractError("light scale must be positive")

    def index_of(self, object_id):
        if isinstance(object_id, int) and 0 <= object_id < len(self.primitives):
            return object_id
        for i, p in enumerate(self.primitives):
            if p.name == object_id:
                return i
        raise ContractError(f"unknown object {object_id!r}")

    def with_light(self, scale):
        return replace(self, light=float(scale))


def perturb(scene, object_id, delta):
    """New scene with one primitive translated by ``delta`` metres."""
    i = scene.index_of(object_id)
    prims = list(scene.primitives)
    prims[i] = prims[i].translated(delta)
    return replace(scene, primitives=tuple(prims))


@dataclass
class Frame:
    image: np.ndarray   # (H, W, 3)
    depth: np.ndarray   # (H, W), 0 where nothing was hit
    valid: np.ndarray   # (H, W) bool
    ids: np.ndarray     # (H, W) primitive index, -1 for background


def cast(scene, origin, dirs):
    """Nearest hit per ray: ``(param, primitive index, colour)``."""
    best = np.full(dirs.shape[0], np.inf)
    ids = np.full(dirs.shape[0], -1)
    color = np.zeros((dirs.shape[0], 3))
    for i, prim in enumerate(scene.primitives):
        s, a, b = prim.intersect(origin, dirs)
        closer = s < best
        if closer.any():
            best = np.where(closer, s, best)
            ids = np.where(closer, i, ids)
            color[closer] = prim.texture(a[closer], b[closer])
    return best, ids, color * scene.light


def render(scene, K, cam_pose, H, W):
    """Ray-cast ``scene`` from a camera with pose ``cam_pose`` (camera-to-world)."""
    rays = K.rays(H, W)
    dirs = rays @ cam_pose.rotation.T
    best, ids, color = cast(scene, cam_pose.translation, dirs)
    valid = np.isfinite(best)
    if not valid.any():
        raise DomainError("no visible geometry")
    depth = np.where(valid, best, 0.0)
    return Frame(color.reshape(H, W, 3), depth.reshape(H, W), valid.reshape(H, W), ids.reshape(H, W))


def visibility(scene, K, pose_ref, pose_src, H, W, rel_tol=1e-6):
    """For each reference pixel: is its surface point occluded in the source
    view, and does it project outside the source image?

    Returns ``(occluded, out_of_view)`` boolean (H, W) maps computed by
    casting a ray from the source camera to each point.
    """
    ref = render(scene, K, pose_ref, H, W)
    world = pose_ref.apply(ref.depth.reshape(-1, 1) * K.rays(H, W))
    cam = pose_src.inverse().apply(world)
    z = cam[:, 2]
    front = z > 1e-12
    zs = np.where(front, z, 1.0)
    u = K.fx * cam[:, 0] / zs + K.u0
    v = K.fy * cam[:, 1] / zs + K.v0
    out = ~front | (u < 0) | (u > W - 1) | (v < 0) | (v > H - 1)
    dirs = (cam / zs[:, None]) @ pose_src.rotation.T
    best, _, _ = cast(scene, pose_src.translation, dirs)
    occluded = front & (best < z * (1.0 - rel_tol)) & ref.valid.ravel()
    return occluded.reshape(H, W), (out & ref.valid.ravel()).reshape(H, W)


# -- stock scenes ---------------------------------------------------------

def default_camera(H=48, W=64, f=60.0):
    return CameraIntrinsics(f, f, (W - 1) / 2.0, (H - 1) / 2.0)


def static_scene(light=1.0):
    """Back wall at z = 10 and a ground plane at y = 1.5 meeting it."""
    wall = Plane("wall", "z", 10.0, (-20.0, -20.0), (20.0, 1.5),
                 Texture("noise", (0.25, 0.3, 0.35), (0.75, 0.7, 0.65), period=8.0, seed=1))
    ground = Plane("ground", "y", 1.5, (-20.0, 0.05), (20.0, 10.0),
                   Texture("noise", (0.3, 0.25, 0.2), (0.7, 0.6, 0.5), period=4.0, seed=2))
    return SyntheticScene((wall, ground), light)


def object_scene(light=1.0, box_lo=(-0.6, 0.3, 5.0), box_hi=(0.6, 1.5, 6.0)):
    """:func:`static_scene` plus a textured box named ``box`` resting on the ground."""
    box = Box("box", box_lo, box_hi,
              Texture("checker", (0.1, 0.15, 0.6), (0.9, 0.85, 0.2), period=1.0))
    base = static_scene(light)
    return replace(base, primitives=base.primitives + (box,))


def plane_scene(depth=10.0, texture=None):
    """Single fronto-parallel plane filling the view at ``depth``."""
    tex = texture or Texture("gradient", (0.2, 0.3, 0.4), (0.8, 0.7, 0.6), period=6.0)
    return SyntheticScene((Plane("plane", "z", depth, (-1e3, -1e3), (1e3, 1e3), tex),))


__all__ = [
    "Texture", "Plane", "Box", "SyntheticScene", "Frame", "perturb", "render",
    "visibility", "cast", "default_camera", "static_scene", "object_scene",
    "plane_scene", "RigidTransform",
]
