"""Desk-scale experiments tying the loss modules to synthetic ground truth.

Each ``run_*`` function returns an :class:`ExperimentResult` holding the
CSV rows it wrote and the pass/fail status of its declared checks.
"""
import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import camera as cam
from . import deformable as dfm
from . import photometric as ph
from . import tensor as T
from . import voxel as vx
from .gradcheck import finite_difference_check
from .scene import Plane, perturb, render, visibility
from .tensor import Tensor, custom_op

GRADCHECK_TOL = 1e-4
GRADCHECK_EPS = 1e-5


@dataclass
class ExperimentResult:
    name: str
    header: list
    rows: list
    checks: list = field(default_factory=list)
    files: list = field(default_factory=list)

    @property
    def passed(self):
        return all(ok for _, ok, _ in self.checks)

    def check(self, label, ok, detail=""):
        self.checks.append((label, bool(ok), detail))


def _threads():
    try:
        return max(1, int(os.environ.get("XVC_THREADS", os.cpu_count() or 1)))
    except ValueError:
        return 1


def parallel_map(fn, items):
    """``map`` over a thread pool capped by XVC_THREADS; results keep input order."""
    items = list(items)
    n = min(_threads(), len(items))
    if n <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows, digest):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_sha256={digest}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row[h]) for h in header])
    return path


def write_pgm(path, values, vmax=None):
    """8-bit binary PGM; values are scaled so ``vmax`` (default: max) maps to 255."""
    a = np.asarray(values, dtype=np.float64)
    vmax = float(np.max(a)) if vmax is None else float(vmax)
    scaled = np.zeros_like(a) if vmax <= 0 else np.clip(a / vmax, 0, 1)
    img = np.round(scaled * 255).astype(np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(f"P5\n{a.shape[1]} {a.shape[0]}\n255\n".encode() + img.tobytes())
    return path


def write_ppm(path, image):
    """8-bit binary PPM of an (H, W, 3) image in [0, 1]."""
    a = np.clip(np.asarray(image, dtype=np.float64), 0, 1)
    img = np.round(a * 255).astype(np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(f"P6\n{a.shape[1]} {a.shape[0]}\n255\n".encode() + img.tobytes())
    return path


def write_gnuplot(path, csv_name, xcol, ycols, title):
    """Emit a gnuplot script plotting ``ycols`` against ``xcol`` from a CSV."""
    lines = [
        "set datafile separator ','",
        "set datafile commentschars '#'",
        "set key autotitle columnhead",
        f"set title '{title}'",
        f"set terminal pngcairo; set output '{Path(csv_name).stem}.png'",
        "plot " + ", ".join(f"'{csv_name}' using '{xcol}':'{y}' with linespoints" for y in ycols),
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return Path(path)


# -- loss assembly --------------------------------------------------------

TERM_NAMES = ("photometric", "smoothness", "dfa", "vda")
WEIGHT_KEYS = ("alpha", "beta", "gamma", "eta")
DEFAULT_WEIGHTS = {"alpha": 1.0, "beta": 0.01, "gamma": 0.05, "eta": 0.05}


def total_loss(terms, weights=None):
    """alpha*L_ph + beta*L_sm + gamma*L_DFA + eta*L_VDA.

    ``terms`` maps the names in :data:`TERM_NAMES` to tensors or floats.
    Returns ``(total, breakdown)`` where breakdown rows hold each term
    before and after weighting.
    """
    weights = dict(DEFAULT_WEIGHTS if weights is None else weights)
    total = None
    breakdown = []
    for name, key in zip(TERM_NAMES, WEIGHT_KEYS):
        term = T.as_tensor(terms[name])
        weighted = term * weights[key]
        total = weighted if total is None else total + weighted
        breakdown.append({"term": name, "weight": weights[key], "raw": term.item(),
                          "weighted": weighted.item()})
    return total, breakdown


def depth_features(depth, channels=8, seed=0):
    """Fixed per-channel affine maps of mean-normalised disparity, (C, H, W)."""
    depth = T.as_tensor(depth)
    rng = np.random.default_rng(seed)
    scale = rng.uniform(0.5, 1.5, channels).reshape(channels, 1, 1)
    shift = rng.uniform(-0.2, 0.2, channels).reshape(channels, 1, 1)
    disp = 1.0 / depth
    mu = disp / T.mean(disp)
    H, W = depth.shape
    return T.reshape(mu, (1, H, W)) * scale + shift


def rgb_codec(channels=8, seed=0):
    """Encoder (3 -> C) with random weights and its least-squares inverse decoder."""
    rng = np.random.default_rng(seed + 1)
    W = rng.normal(size=(channels, 3))
    return dfm.Encoder(W), dfm.Decoder(np.linalg.pinv(W))


def gt_flow(depth_ref, T_ref_to_src, K):
    """Pixel displacement of every reference pixel into the source view."""
    H, W = depth_ref.shape
    pix, _, _ = cam.project(cam.transform_points(cam.backproject(depth_ref, K), T_ref_to_src), K)
    v, u = np.mgrid[0:H, 0:W]
    return pix.data[:, 0].reshape(H, W) - u, pix.data[:, 1].reshape(H, W) - v


# -- gradient checks ------------------------------------------------------

def _corrupted(t):
    """Identity op whose backward adds 1 to the gradient (negative control)."""
    return custom_op("corrupted", t.data, (t,), lambda g: (g + 1.0,))


def gradcheck_cases(seed=0, size=8):
    """Ordered ``(name, f, x0, surrogate)`` checks, all at ``size`` x ``size``.

    ``surrogate`` is None for smooth ops; straight-through ops carry the
    smooth function their backward rule differentiates.
    """
    rng = np.random.default_rng(seed)
    n = size
    r = rng.uniform(0.5, 1.5, (n, n))
    cases = []

    def add(name, f, x0, surrogate=None):
        cases.append((name, f, np.asarray(x0, dtype=np.float64), surrogate))

    pair = rng.uniform(-1, 1, (2, n, n))
    pos = rng.uniform(0.5, 2.0, (2, n, n))
    add("add", lambda x: T.tsum((x[0] + x[1]) * r), pair)
    add("sub", lambda x: T.tsum((x[0] - x[1]) * r), pair)
    add("mul", lambda x: T.tsum(x[0] * x[1] * r), pair)
    add("div", lambda x: T.tsum(x[0] / x[1] * r), pos)
    add("neg", lambda x: T.tsum(-x * r), pair[0])
    add("pow", lambda x: T.tsum(x ** 2.5 * r), pos[0])
    away = np.where(rng.random((n, n)) < 0.5, -1, 1) * rng.uniform(0.1, 1.0, (n, n))
    add("abs", lambda x: T.tsum(T.tabs(x) * r), away)
    add("exp", lambda x: T.tsum(T.exp(x) * r), pair[0])
    add("log", lambda x: T.tsum(T.log(x) * r), pos[0])
    add("sqrt", lambda x: T.tsum(T.sqrt(x) * r), pos[0])
    clip_x = rng.uniform(-1, 1, (n, n))
    clip_x[np.abs(np.abs(clip_x) - 0.5) < 0.01] = 0.0
    add("clip", lambda x: T.tsum(T.clip(x, -0.5, 0.5) * r), clip_x)
    sep = pair.copy()
    sep[1] = sep[0] + np.where(rng.random((n, n)) < 0.5, -1, 1) * rng.uniform(0.05, 0.5, (n, n))
    add("minimum", lambda x: T.tsum(T.minimum(x[0], x[1]) * r), sep)
    cond = rng.random((n, n)) < 0.5
    add("where", lambda x: T.tsum(T.where(cond, x[0], x[1] * 2.0) * r), pair)
    frac = rng.uniform(-3, 3, (n, n))
    add("floor_ste", lambda x: T.tsum(T.floor_ste(x) * r), frac,
        surrogate=lambda x: T.tsum(x * r))
    band = rng.uniform(-0.5, 1.5, (n, n))
    band[np.minimum(np.abs(band), np.abs(band - 1)) < 0.01] = 0.5
    add("sign_ste", lambda x: T.tsum(T.sign_ste(x) * r), band,
        surrogate=lambda x: T.tsum(Tensor(T.htanh_surrogate(x.data)) * r))
    add("sum", lambda x: T.tsum(T.tsum(x * x, axis=1) * r[0]), pair[0])
    add("reshape", lambda x: T.tsum(T.reshape(x * x, (n * n,)) * r.ravel()), pair[0])
    add("transpose", lambda x: T.tsum(T.transpose(x * x) * r), pair[0])
    idx = rng.integers(0, n, size=3 * n)
    add("getitem", lambda x: T.tsum(x[idx] * x[idx]), pair[0])
    add("stack", lambda x: T.tsum(T.stack([x * x, x], axis=0)[0] * r), pair[0])
    add("concatenate", lambda x: T.tsum(T.concatenate([x * x, x], axis=1)[:, 3:11] * r), pair[0])
    add("matmul", lambda x: T.tsum((x[0] @ x[1]) * r), pair)
    img = rng.uniform(0, 1, (n, n, 2))
    coords = np.stack([rng.uniform(0.2, n - 1.2, n * n), rng.uniform(0.2, n - 1.2, n * n)])
    coords[np.abs(coords - np.round(coords)) < 0.01] += 0.05
    add("bilinear_sample", lambda x: T.tsum(T.bilinear_sample(img, x[0], x[1]) ** 2), coords)

    N = n * n
    V0 = rng.uniform(0.2, N - 1.2, n)
    V0[np.abs(V0 - np.round(V0)) < 0.01] += 0.05
    rc = rng.uniform(0.5, 1.5, N)

    def count_surrogate(x):
        diff = np.abs(x.data[None, :] - np.arange(N)[:, None])
        return float(np.sum((x.size - T.htanh_surrogate(diff).sum(axis=1)) * rc))

    add("count_vector", lambda x: T.tsum(T.count_vector(x, N) * rc), V0, surrogate=count_surrogate)

    # geometry and losses on a small smooth scene
    K = cam.CameraIntrinsics(8.0, 8.0, (n - 1) / 2, (n - 1) / 2)
    yy, xx = np.mgrid[0:n, 0:n] / n
    src = np.stack([0.5 + 0.3 * np.sin(2.1 * xx + 1.3 * yy), 0.5 + 0.2 * np.cos(1.7 * xx - 2.3 * yy),
                    0.4 + 0.3 * xx * yy], axis=-1)
    depth = 4.0 + rng.uniform(-0.5, 0.5, (n, n))
    pose = cam.RigidTransform.from_axis_angle([0.2, 1.0, 0.1], 0.02, [0.07, -0.03, 0.02])
    ref = src + rng.normal(0, 0.05, src.shape)
    pts = cam.backproject(depth, K).data
    add("backproject", lambda x: T.tsum(cam.backproject(x, K) * pts), depth)
    add("transform_points", lambda x: T.tsum(cam.transform_points(x, pose) ** 2), pts)
    add("project", lambda x: T.tsum(cam.project(x, K)[0] * rng_weights(seed, (n * n, 2))), pts)
    add("warp_image.depth", lambda x: T.mean(cam.warp_image(src, x, pose, K)[0]), depth)
    add("warp_image.src", lambda x: T.tsum(cam.warp_image(x, depth, pose, K)[0] * ref), src)
    mask = np.ones((n, n), bool)
    cfg = ph.PhotometricConfig()
    add("photometric_loss", lambda x: ph.photometric_loss(ref, x, mask, cfg), src)
    add("photometric_loss.depth",
        lambda x: ph.photometric_loss(ref, *cam.warp_image(src, x, pose, K), cfg), depth)
    add("smoothness_loss", lambda x: ph.smoothness_loss(x, src), depth)

    G, k = 2, 3
    feat = np.stack([0.5 + 0.3 * np.sin((c + 1) * xx + 2 * yy) for c in range(4)])
    offs = rng.uniform(-0.8, 0.8, (G * 2 * k * k, n, n))
    offs[np.abs(offs - np.round(offs)) < 0.01] += 0.05
    wts = rng.uniform(-0.5, 1.0, (G, k * k))
    add("deformable_sample.src", lambda x: T.tsum(dfm.deformable_sample(x, offs, wts) ** 2), feat)
    add("deformable_sample.offsets", lambda x: T.tsum(dfm.deformable_sample(feat, x, wts) ** 2), offs)
    add("deformable_sample.weights", lambda x: T.tsum(dfm.deformable_sample(feat, offs, x) ** 2), wts)
    add("recon_loss", lambda x: dfm.recon_loss(ref, x), src)
    feat_ref = feat + rng.normal(0, 0.05, feat.shape)
    add("df_loss", lambda x: dfm.df_loss(feat_ref, feat, x, wts), offs)
    enc = dfm.Encoder(rng.normal(size=(4, 3)))
    dec = dfm.Decoder(rng.normal(size=(3, 4)) * 0.3)
    add("dfa_loss", lambda x: dfm.dfa_loss(ref, src, feat_ref, feat, x, wts, dec, enc), offs)

    grid = vx.VoxelGrid(-3, 3, -3, 3, 2, 6, 4, 4, 4)
    cloud = rng.uniform([-2.9, -2.9, 2.1], [2.9, 2.9, 5.9], (n * n, 3))
    rv = rng.uniform(0.5, 1.5, n * n)
    spacing = grid.spacing
    strides = np.array([1.0, grid.nx, grid.nx * grid.ny])
    add("voxel_index", lambda x: T.tsum(vx.voxel_index(x, grid) * rv), cloud,
        surrogate=lambda x: T.tsum(T.tsum((x - grid.lower) / spacing * strides, axis=1) * rv))
    rd = rng.uniform(0.5, 1.5, grid.size)
    add("voxel_density", lambda x: T.tsum(vx.voxel_density(x, grid) * rd), cloud)
    # alpha = 5 keeps every mass well above the finite-difference step
    rho = rng.dirichlet(np.full(N, 5.0))
    q = rng.dirichlet(np.full(N, 5.0))
    add("vda_loss.ref", lambda x: vx.vda_loss(x, q), rho)
    add("vda_loss.src", lambda x: vx.vda_loss(rho, x), q)
    add("point_cloud_loss", lambda x: vx.point_cloud_loss(x, pts + 0.05 + rng_weights(seed, pts.shape) * 0.01), pts)

    codec = (dfm.Encoder(rng.normal(size=(4, 3))), None)
    codec = (codec[0], dfm.Decoder(np.linalg.pinv(codec[0].weight.data)))
    flow_offs = rng.uniform(0.1, 0.4, (2 * 9, n, n))
    w_delta = dfm.delta_weights(1, 3)

    def total(x):
        warped, valid = cam.warp_image(src, x, pose, K)
        feats = depth_features(x, 4, seed)
        terms = {
            "photometric": ph.photometric_loss(ref, warped, valid, cfg),
            "smoothness": ph.smoothness_loss(x, ref),
            "dfa": dfm.dfa_loss(ref, src, feats, depth_features(depth, 4, seed), flow_offs,
                                w_delta, codec[1], codec[0]),
            "vda": vx.vda_loss(vx.voxel_density(cam.backproject(x, K), grid),
                               vx.voxel_density(pts, grid)),
        }
        return total_loss(terms)[0]

    add("total_loss", total, depth)
    return cases


def rng_weights(seed, shape):
    return np.random.default_rng(seed + 99).uniform(0.5, 1.5, shape)


def gradcheck_names(seed=0):
    return [c[0] for c in gradcheck_cases(seed)]


def run_gradcheck(cfg, out_dir, corrupt=None, tol=GRADCHECK_TOL, eps=GRADCHECK_EPS, gnuplot=False):
    """Finite-difference check of every registered case; ``corrupt`` names a
    case whose output is routed through a wrong backward rule."""
    cases = gradcheck_cases(cfg.seed)
    if corrupt is not None and corrupt not in {c[0] for c in cases}:
        raise KeyError(f"unknown gradcheck case {corrupt!r}")

    def one(case):
        name, f, x0, surrogate = case
        if name == corrupt:
            inner = f
            f = lambda x: _corrupted(inner(x))  # noqa: E731
            surrogate = surrogate or inner
        err = finite_difference_check(f, x0, eps, surrogate)
        return {"op": name, "max_rel_err": err, "tol": tol, "pass": err < tol,
                "surrogate": surrogate is not None}

    rows = parallel_map(one, cases)
    header = ["op", "max_rel_err", "tol", "pass", "surrogate"]
    res = ExperimentResult("gradcheck", header, rows)
    covered = {row["op"].split(".")[0] for row in rows}
    missing = [op for op in T.OPS if op not in covered]
    res.check("gradcheck covers every registered op", not missing, f"missing: {missing}")
    for row in rows:
        res.check(f"gradcheck {row['op']}", row["pass"], f"max rel err {row['max_rel_err']:.3e}")
    res.files.append(write_csv(Path(out_dir) / "gradcheck.csv", header, rows, cfg.digest))
    return res


# -- photometric vulnerability -------------------------------------------

def _pair(cfg, scene_ref, scene_src, src_pose):
    K, H, W = cfg.camera, cfg.height, cfg.width
    ref_pose = cam.RigidTransform.identity()
    f_ref = render(scene_ref, K, ref_pose, H, W)
    f_src = render(scene_src, K, src_pose, H, W)
    return f_ref, f_src, cam.relative_pose(ref_pose, src_pose)


def photometric_variant(cfg, variant):
    """Per-pixel photometric error map and validity for one named variant."""
    scene = cfg.scene
    pose = cfg.src_pose
    if variant == "static":
        scene_ref = scene_src = _background(scene)
    elif variant == "moving":
        scene_ref = scene
        scene_src = perturb(scene, cfg.moving_object, cfg.object_motion)
    elif variant == "occlusion":
        scene_ref = scene_src = scene
        pose = cam.RigidTransform(cfg.src_pose.rotation, cfg.occlusion_translation)
    elif variant == "illumination":
        scene_ref = _background(scene)
        scene_src = scene_ref.with_light(scene.light * cfg.illumination)
    else:
        raise KeyError(variant)
    f_ref, f_src, rel = _pair(cfg, scene_ref, scene_src, pose)
    warped, valid = cam.warp_image(f_src.image, f_ref.depth, rel, cfg.camera, f_ref.valid)
    emap = ph.photometric_error_map(f_ref.image, warped, cfg.photometric).data
    loss = ph.photometric_loss(f_ref.image, warped, valid, cfg.photometric).item()
    return f_ref, emap, valid, loss, (scene_ref, pose)


def _background(scene):
    """Planes only: boxes are dropped so camera motion reveals no hidden surface."""
    prims = tuple(p for p in scene.primitives if isinstance(p, Plane))
    return type(scene)(prims, scene.light) if prims else scene


PHOTOMETRIC_VARIANTS = ("static", "moving", "occlusion", "illumination")


def run_photometric_vulnerability(cfg, out_dir, gnuplot=False):
    out_dir = Path(out_dir)
    obj = cfg.scene.index_of(cfg.moving_object)
    results = parallel_map(lambda v: photometric_variant(cfg, v), PHOTOMETRIC_VARIANTS)
    rows = []
    res = ExperimentResult("photometric", [], rows)
    for variant, (f_ref, emap, valid, loss, (scene_ref, pose)) in zip(PHOTOMETRIC_VARIANTS, results):
        if variant == "moving":
            region = (f_ref.ids == obj) & valid
        elif variant == "occlusion":
            occluded, _ = visibility(scene_ref, cfg.camera, cam.RigidTransform(), pose,
                                     cfg.height, cfg.width)
            region = occluded & valid
        else:
            region = np.zeros_like(valid)
        rest = valid & ~region
        r_loss = float(emap[region].mean()) if region.any() else 0.0
        b_loss = float(emap[rest].mean()) if rest.any() else 0.0
        rows.append({"variant": variant, "loss": loss, "region_loss": r_loss,
                     "background_loss": b_loss, "region_pixels": int(region.sum()),
                     "valid_pixels": int(valid.sum())})
        res.files.append(write_pgm(out_dir / f"photometric_{variant}.pgm", np.where(valid, emap, 0.0), 1.0))
    by = {r["variant"]: r for r in rows}
    res.check("static loss < 1e-3", by["static"]["loss"] < 1e-3, f"{by['static']['loss']:.3e}")
    res.check("illumination loss > 0.01", by["illumination"]["loss"] > 0.01,
              f"{by['illumination']['loss']:.3e}")
    m = by["moving"]
    res.check("moving object region > 10x background", m["region_loss"] > 10 * m["background_loss"],
              f"{m['region_loss']:.3e} vs {m['background_loss']:.3e}")
    o = by["occlusion"]
    res.check("occluded region > visible region", o["region_loss"] > o["background_loss"],
              f"{o['region_loss']:.3e} vs {o['background_loss']:.3e}")
    res.header = ["variant", "loss", "region_loss", "background_loss", "region_pixels", "valid_pixels"]
    res.files.append(write_csv(out_dir / "photometric.csv", res.header, rows, cfg.digest))
    if gnuplot:
        res.files.append(write_gnuplot(out_dir / "photometric.gp", "photometric.csv", "variant",
                                       ["loss", "region_loss", "background_loss"], "photometric loss"))
    return res


# -- robustness sweep -----------------------------------------------------

def reference_cloud(cfg, scene=None):
    """GT camera-frame cloud of the reference view and each point's primitive id."""
    f = render(scene or cfg.scene, cfg.camera, cam.RigidTransform(), cfg.height, cfg.width)
    pts = cam.backproject(f.depth, cfg.camera, f.valid).data
    return pts, f.ids[f.valid]


def displaced_cloud(points, ids, obj, delta):
    moved = points.copy()
    moved[ids == obj] += np.asarray(delta, dtype=np.float64)
    return moved


def robustness_row(points, ids, obj, delta, grid, eps):
    moved = displaced_cloud(points, ids, obj, delta)
    n_obj = int((ids == obj).sum())
    l_pc = vx.point_cloud_loss(points, moved).item()
    l_v = vx.voxel_index_loss(points, moved, grid)
    l_vda = vx.vda_loss(vx.voxel_density(points, grid), vx.voxel_density(moved, grid), eps).item()
    crossed = int(vx.crosses_boundary(points[ids == obj], delta, grid).sum())
    return {"delta_x": delta[0], "delta_y": delta[1], "delta_z": delta[2], "n_obj": n_obj,
            "expected_pc": float(np.abs(delta).sum() * n_obj), "point_cloud_loss": l_pc,
            "voxel_index_loss": l_v, "vda_loss": l_vda, "crossings": crossed}


def run_robustness_sweep(cfg, out_dir, gnuplot=False):
    points, ids = reference_cloud(cfg)
    obj = cfg.scene.index_of(cfg.robust_object)
    grid = cfg.robust_grid
    rows = parallel_map(lambda d: robustness_row(points, ids, obj, d, grid, cfg.kl_eps),
                        cfg.robust_deltas)
    header = ["delta_x", "delta_y", "delta_z", "n_obj", "expected_pc", "point_cloud_loss",
              "voxel_index_loss", "vda_loss", "crossings"]
    res = ExperimentResult("robustness", header, rows)
    for r in rows:
        tag = f"delta=({r['delta_x']}, {r['delta_y']}, {r['delta_z']})"
        res.check(f"{tag} L_pc = sum|delta| * n_obj",
                  abs(r["point_cloud_loss"] - r["expected_pc"]) <= 1e-9 * max(1.0, r["expected_pc"]))
        if r["crossings"] == 0:
            res.check(f"{tag} no crossing -> L_v = 0 and L_VDA = 0",
                      r["voxel_index_loss"] == 0 and r["vda_loss"] == 0.0)
        else:
            res.check(f"{tag} crossing -> L_v > 0", r["voxel_index_loss"] > 0)
    res.files.append(write_csv(Path(out_dir) / "robustness.csv", header, rows, cfg.digest))
    if gnuplot:
        res.files.append(write_gnuplot(Path(out_dir) / "robustness.gp", "robustness.csv", "delta_x",
                                       ["point_cloud_loss", "voxel_index_loss", "vda_loss"],
                                       "loss vs object displacement"))
    return res


# -- voxel-count sweep ----------------------------------------------------

def rigid_pair_clouds(cfg):
    """Reference cloud and the source-view cloud moved into the reference frame."""
    f_ref, f_src, rel = _pair(cfg, cfg.scene, cfg.scene, cfg.src_pose)
    p_ref = cam.backproject(f_ref.depth, cfg.camera, f_ref.valid).data
    p_src = cam.backproject(f_src.depth, cfg.camera, f_src.valid).data
    return p_ref, rel.inverse().apply(p_src)


def run_voxel_sweep(cfg, out_dir, gnuplot=False):
    points, ids = reference_cloud(cfg)
    obj = cfg.scene.index_of(cfg.moving_object)
    moved = displaced_cloud(points, ids, obj, cfg.sweep_motion)
    p_ref, p_src = rigid_pair_clouds(cfg)

    def one(counts):
        g_motion = vx.VoxelGrid.enclosing(points, moved, counts=counts)
        g_rigid = vx.VoxelGrid.enclosing(p_ref, p_src, counts=counts)
        dx, dy, dz = g_motion.spacing
        return {
            "nx": counts[0], "ny": counts[1], "nz": counts[2], "voxels": g_motion.size,
            "dx": dx, "dy": dy, "dz": dz,
            "vda_rigid": vx.vda_loss(vx.voxel_density(p_ref, g_rigid),
                                     vx.voxel_density(p_src, g_rigid), cfg.kl_eps).item(),
            "vda_motion": vx.vda_loss(vx.voxel_density(points, g_motion),
                                      vx.voxel_density(moved, g_motion), cfg.kl_eps).item(),
            "voxel_index_loss_motion": vx.voxel_index_loss(points, moved, g_motion),
        }

    rows = parallel_map(one, cfg.sweep_counts)
    header = ["nx", "ny", "nz", "voxels", "dx", "dy", "dz", "vda_rigid", "vda_motion",
              "voxel_index_loss_motion"]
    res = ExperimentResult("voxelsweep", header, rows)
    res.check("one row per grid", len(rows) == len(cfg.sweep_counts))
    for r in rows:
        if r["voxels"] == 1:
            res.check("single voxel -> VDA = 0", r["vda_rigid"] == 0.0 and r["vda_motion"] == 0.0)
    res.files.append(write_csv(Path(out_dir) / "voxelsweep.csv", header, rows, cfg.digest))
    if gnuplot:
        res.files.append(write_gnuplot(Path(out_dir) / "voxelsweep.gp", "voxelsweep.csv", "voxels",
                                       ["vda_rigid", "vda_motion"], "VDA vs voxel count"))
    return res


# -- total loss -----------------------------------------------------------

def loss_terms(cfg):
    """All four loss terms on the configured rendered pair with GT depth and pose."""
    f_ref, f_src, rel = _pair(cfg, cfg.scene, cfg.scene, cfg.src_pose)
    K = cfg.camera
    warped, valid = cam.warp_image(f_src.image, f_ref.depth, rel, K, f_ref.valid)
    l_ph = ph.photometric_loss(f_ref.image, warped, valid, cfg.photometric)
    l_sm = ph.smoothness_loss(f_ref.depth, f_ref.image)
    fx, fy = gt_flow(f_ref.depth, rel, K)
    G, k, C = cfg.dfa_groups, cfg.dfa_kernel, cfg.feature_channels
    enc, dec = rgb_codec(C, cfg.seed)
    offsets = dfm.uniform_offsets(cfg.height, cfg.width, fx, fy, G, k)
    weights = dfm.delta_weights(G, k)
    l_dfa = dfm.dfa_loss(f_ref.image, f_src.image, depth_features(f_ref.depth, C, cfg.seed),
                         depth_features(f_src.depth, C, cfg.seed), offsets, weights, dec, enc)
    p_ref = cam.backproject(f_ref.depth, K, f_ref.valid)
    p_src = cam.transform_points(cam.backproject(f_src.depth, K, f_src.valid), rel.inverse())
    grid = cfg.grid_for(p_ref, p_src)
    l_vda = vx.vda_loss(vx.voxel_density(p_ref, grid), vx.voxel_density(p_src, grid), cfg.kl_eps)
    return {"photometric": l_ph, "smoothness": l_sm, "dfa": l_dfa, "vda": l_vda}


def run_total_loss(cfg, out_dir, gnuplot=False):
    total, breakdown = total_loss(loss_terms(cfg), cfg.weights)
    rows = breakdown + [{"term": "total", "weight": 1.0, "raw": total.item(), "weighted": total.item()}]
    header = ["term", "weight", "raw", "weighted"]
    res = ExperimentResult("totalloss", header, rows)
    s = sum(r["weighted"] for r in breakdown)
    res.check("breakdown sums to total", abs(s - total.item()) <= 1e-12, f"{s!r} vs {total.item()!r}")
    res.files.append(write_csv(Path(out_dir) / "totalloss.csv", header, rows, cfg.digest))
    return res
