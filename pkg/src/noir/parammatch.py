"""One-shot skill-parameter correspondence on dense feature maps.

Given a training feature map and a chosen 2-D image point, the matching
point in a test map is the center of the 3x3 feature patch with maximal
cosine similarity to the training patch. Three reference baselines
(random, on-objects, raw-pixel similarity) and a synthetic scene corpus
are provided for evaluation.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

FMAP_MAGIC = b"FMAP"


class MatchError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureMap:
    data: np.ndarray  # C x H_f x W_f
    img_w: int = 360
    img_h: int = 240
    source: str = "synthetic"

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise MatchError("feature map must be C x H x W")
        if data.shape[1] < 3 or data.shape[2] < 3:
            raise MatchError("feature grid must be at least 3x3")
        if not np.all(np.isfinite(data)):
            raise MatchError("feature map contains non-finite entries")
        if self.img_w <= 0 or self.img_h <= 0:
            raise MatchError("image geometry must be positive")
        object.__setattr__(self, "data", data)

    @property
    def grid_h(self) -> int:
        return self.data.shape[1]

    @property
    def grid_w(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class ParamPoint:
    x: float
    y: float


def image_to_cell(point: ParamPoint, fmap: FeatureMap) -> tuple[int, int]:
    """Proportional image-pixel to feature-grid mapping."""
    if not (0 <= point.x < fmap.img_w and 0 <= point.y < fmap.img_h):
        raise MatchError(f"point ({point.x}, {point.y}) outside image bounds")
    col = min(int(point.x * fmap.grid_w / fmap.img_w), fmap.grid_w - 1)
    row = min(int(point.y * fmap.grid_h / fmap.img_h), fmap.grid_h - 1)
    return row, col


def cell_to_image(cell: tuple[int, int], fmap: FeatureMap) -> ParamPoint:
    """Cell-center pixel coordinates."""
    row, col = cell
    if not (0 <= row < fmap.grid_h and 0 <= col < fmap.grid_w):
        raise MatchError(f"cell {cell} outside grid")
    return ParamPoint(
        x=(col + 0.5) * fmap.img_w / fmap.grid_w,
        y=(row + 0.5) * fmap.img_h / fmap.grid_h,
    )


def _patch_similarity_grid(stack: np.ndarray, patch: np.ndarray) -> np.ndarray:
    """Cosine similarity of a flattened 3x3xC patch against all valid centers."""
    windows = sliding_window_view(stack, (3, 3), axis=(1, 2))  # C x H-2 x W-2 x 3 x 3
    dots = np.einsum("chwij,cij->hw", windows, patch)
    norms = np.sqrt(np.einsum("chwij,chwij->hw", windows, windows))
    p_norm = np.linalg.norm(patch)
    if p_norm == 0:
        raise MatchError("degenerate all-zero training patch")
    with np.errstate(invalid="ignore", divide="ignore"):
        sim = dots / (norms * p_norm)
    sim[norms == 0] = 0.0
    return sim


def _clamp_interior(row: int, col: int, h: int, w: int) -> tuple[int, int]:
    return min(max(row, 1), h - 2), min(max(col, 1), w - 2)


def match_point(
    train_map: FeatureMap, train_point: ParamPoint, test_map: FeatureMap
) -> tuple[ParamPoint, float, tuple[int, int]]:
    """Best-matching point in the test map for a training point.

    Returns (image point at the winning cell center, cosine similarity,
    winning cell). Border train cells are clamped inward so a full 3x3
    patch exists; ties break row-major-first.
    """
    if train_map.data.shape[0] != test_map.data.shape[0]:
        raise MatchError("train and test maps have different channel counts")
    r, c = image_to_cell(train_point, train_map)
    r, c = _clamp_interior(r, c, train_map.grid_h, train_map.grid_w)
    patch = train_map.data[:, r - 1 : r + 2, c - 1 : c + 2]
    sim = _patch_similarity_grid(test_map.data, patch)
    idx = int(np.argmax(sim))  # row-major first occurrence on ties
    row, col = divmod(idx, sim.shape[1])
    cell = (row + 1, col + 1)
    return cell_to_image(cell, test_map), float(sim[row, col]), cell


def baseline_random(img_w: int, img_h: int, seed: int) -> ParamPoint:
    """Uniform over image pixels."""
    rng = np.random.default_rng(seed)
    return ParamPoint(x=float(rng.integers(img_w)), y=float(rng.integers(img_h)))


def baseline_on_objects(masks: np.ndarray, seed: int) -> ParamPoint:
    """Uniform over the true pixels of an H x W object-mask union."""
    ys, xs = np.nonzero(np.asarray(masks, dtype=bool))
    if len(xs) == 0:
        raise MatchError("empty object mask")
    rng = np.random.default_rng(seed)
    i = int(rng.integers(len(xs)))
    return ParamPoint(x=float(xs[i]), y=float(ys[i]))


def baseline_pixel_similarity(
    train_img: np.ndarray, train_point: ParamPoint, test_img: np.ndarray
) -> tuple[ParamPoint, float]:
    """Same sliding-window cosine argmax, but on raw 3 x H x W pixels."""
    train_img = np.asarray(train_img, dtype=np.float64)
    test_img = np.asarray(test_img, dtype=np.float64)
    if train_img.shape != test_img.shape:
        raise MatchError("train and test images differ in size")
    h, w = train_img.shape[1], train_img.shape[2]
    col = min(max(int(train_point.x), 1), w - 2)
    row = min(max(int(train_point.y), 1), h - 2)
    patch = train_img[:, row - 1 : row + 2, col - 1 : col + 2]
    sim = _patch_similarity_grid(test_img, patch)
    idx = int(np.argmax(sim))
    r, c = divmod(idx, sim.shape[1])
    return ParamPoint(x=float(c + 1), y=float(r + 1)), float(sim[r, c])


def write_feature_map(path, fmap: FeatureMap):
    """FMAP: magic, u32 C/H_f/W_f, u32 W_img/H_img, C x H_f x W_f f32."""
    with open(path, "wb") as fh:
        fh.write(FMAP_MAGIC)
        c, h, w = fmap.data.shape
        fh.write(struct.pack("<IIIII", c, h, w, fmap.img_w, fmap.img_h))
        fh.write(fmap.data.astype("<f4").tobytes(order="C"))


def read_feature_map(path) -> FeatureMap:
    with open(path, "rb") as fh:
        if fh.read(4) != FMAP_MAGIC:
            raise MatchError("not an FMAP file")
        c, h, w, img_w, img_h = struct.unpack("<IIIII", fh.read(20))
        data = np.frombuffer(fh.read(c * h * w * 4), dtype="<f4").reshape(c, h, w)
    return FeatureMap(data=data.astype(np.float64), img_w=img_w, img_h=img_h, source="ingested")


# ---------------------------------------------------------------------------
# Synthetic scene corpus
# ---------------------------------------------------------------------------

MATCH_VARIATIONS = ("position", "orientation", "instance", "context", "combined")


@dataclass(frozen=True)
class ScenePair:
    """One train/test correspondence trial."""

    variation: str
    train_map: FeatureMap
    test_map: FeatureMap
    train_img: np.ndarray  # 3 x H_img x W_img
    test_img: np.ndarray
    train_point: ParamPoint
    true_test_point: ParamPoint
    test_masks: np.ndarray  # H_img x W_img bool, all objects


def _smooth_field(rng, c, h, w, sigma=4.0):
    return ndimage.gaussian_filter(rng.standard_normal((c, h, w)), sigma=(0, sigma, sigma))


def _blob_footprint(h, w, r0, c0, radius, elong=1.0, angle=0.0):
    rows, cols = np.mgrid[0:h, 0:w].astype(float)
    dr, dc = rows - r0, cols - c0
    ca, sa = np.cos(angle), np.sin(angle)
    u = ca * dc + sa * dr
    v = -sa * dc + ca * dr
    return np.exp(-0.5 * ((u / (radius * elong)) ** 2 + (v / radius) ** 2))


def make_scene_pair(
    variation: str,
    seed: int,
    channels: int = 64,
    grid_h: int = 75,
    grid_w: int = 100,
    img_w: int = 360,
    img_h: int = 240,
    n_distractors: int = 3,
    blob_radius: float = 4.0,
    blob_amp: float = 6.0,
    bg_amp: float = 1.0,
) -> ScenePair:
    """Generate a train/test pair for one variation regime.

    The target object is a localized blob carrying a consistent feature
    direction over a smooth background field; distractor blobs carry
    unrelated directions. The raw images encode each blob's color so the
    pixel-similarity baseline has honest signal to work with.
    """
    if variation not in MATCH_VARIATIONS:
        raise MatchError(f"unknown variation {variation!r}")
    rng = np.random.default_rng(seed)

    def unit(v):
        return v / np.linalg.norm(v)

    target_u = unit(rng.standard_normal(channels))
    # part-structure directions: the blob's feature direction tilts with the
    # offset from its center, so a 3x3 patch pins down the exact center
    part_u_r = unit(rng.standard_normal(channels))
    part_u_c = unit(rng.standard_normal(channels))
    target_color = rng.uniform(0.3, 1.0, 3)
    distract_us = [unit(rng.standard_normal(channels)) for _ in range(n_distractors)]
    distract_colors = [rng.uniform(0.0, 1.0, 3) for _ in range(n_distractors)]
    bg_seed_train = rng.integers(2**32)
    bg_color_train = rng.uniform(0.0, 0.4, 3)

    margin = 12
    def rand_pos(r):
        return (
            float(r.uniform(margin, grid_h - margin)),
            float(r.uniform(margin, grid_w - margin)),
        )

    train_pos = rand_pos(rng)
    distract_pos = [rand_pos(rng) for _ in range(n_distractors)]
    train_angle = 0.0
    elong = 1.6

    # variation regime
    test_u = target_u
    test_color = target_color
    bg_seed_test = bg_seed_train
    bg_color_test = bg_color_train
    test_angle = train_angle
    test_pos = train_pos
    test_distract_pos = distract_pos

    if variation in ("position", "combined"):
        test_pos = rand_pos(rng)
        test_distract_pos = [rand_pos(rng) for _ in range(n_distractors)]
    if variation in ("orientation", "combined"):
        test_angle = float(rng.uniform(0, np.pi))
    if variation in ("instance", "combined"):
        test_u = unit(target_u + 0.35 * rng.standard_normal(channels))
        test_color = np.clip(target_color + rng.uniform(-0.5, 0.5, 3), 0, 1)
    if variation in ("context", "combined"):
        bg_seed_test = rng.integers(2**32)
        bg_color_test = rng.uniform(0.0, 0.4, 3)

    def build(bg_seed, bg_color, pos, angle, u, color, d_pos):
        bg_rng = np.random.default_rng(bg_seed)
        fmap = bg_amp * _smooth_field(bg_rng, channels, grid_h, grid_w)
        foot = _blob_footprint(grid_h, grid_w, pos[0], pos[1], blob_radius, elong, angle)
        rows, cols = np.mgrid[0:grid_h, 0:grid_w].astype(float)
        off_r = np.clip((rows - pos[0]) / blob_radius, -2, 2)
        off_c = np.clip((cols - pos[1]) / blob_radius, -2, 2)
        local_u = (
            u[:, None, None]
            + off_r[None] * part_u_r[:, None, None]
            + off_c[None] * part_u_c[:, None, None]
        )
        fmap = fmap + blob_amp * foot[None] * local_u
        mask_grid = foot > 0.3
        for (dp, du, dcol) in zip(d_pos, distract_us, distract_colors):
            dfoot = _blob_footprint(grid_h, grid_w, dp[0], dp[1], blob_radius, 1.0, 0.0)
            fmap = fmap + blob_amp * dfoot[None] * du[:, None, None]
            mask_grid |= dfoot > 0.3
        # raw image: upscaled color rendering of the same scene
        img_grid = bg_color[:, None, None] * (
            0.5 + 0.2 * bg_amp * _smooth_field(np.random.default_rng(bg_seed + 1), 1, grid_h, grid_w)[0]
        )
        img_grid = img_grid + color[:, None, None] * foot[None]
        for (dp, _, dcol) in zip(d_pos, distract_us, distract_colors):
            dfoot = _blob_footprint(grid_h, grid_w, dp[0], dp[1], blob_radius, 1.0, 0.0)
            img_grid = img_grid + dcol[:, None, None] * dfoot[None]
        zoom = (1, img_h / grid_h, img_w / grid_w)
        img = ndimage.zoom(np.clip(img_grid, 0, 2), zoom, order=1)
        mask = ndimage.zoom(mask_grid.astype(float), zoom[1:], order=0) > 0.5
        return FeatureMap(fmap, img_w=img_w, img_h=img_h), img, mask

    train_map, train_img, _ = build(
        bg_seed_train, bg_color_train, train_pos, train_angle,
        target_u, target_color, distract_pos,
    )
    test_map, test_img, test_mask = build(
        bg_seed_test, bg_color_test, test_pos, test_angle,
        test_u, test_color, test_distract_pos,
    )

    def grid_to_img(pos):
        return ParamPoint(
            x=(pos[1] + 0.5) * img_w / grid_w, y=(pos[0] + 0.5) * img_h / grid_h
        )

    return ScenePair(
        variation=variation,
        train_map=train_map,
        test_map=test_map,
        train_img=train_img,
        test_img=test_img,
        train_point=grid_to_img(train_pos),
        true_test_point=grid_to_img(test_pos),
        test_masks=test_mask,
    )


def make_match_corpus(
    n_pairs: int = 200,
    seed: int = 0,
    variations=MATCH_VARIATIONS,
    **scene_kwargs,
) -> list[ScenePair]:
    """Round-robin over variation regimes, one independent scene per pair."""
    return [
        make_scene_pair(variations[i % len(variations)], seed=seed + i, **scene_kwargs)
        for i in range(n_pairs)
    ]


def _pixel_error(pred: ParamPoint, truth: ParamPoint) -> float:
    return float(np.hypot(pred.x - truth.x, pred.y - truth.y))


def evaluate_matching(corpus: list[ScenePair], seed: int = 0) -> dict:
    """Per-method, per-variation error statistics over a corpus.

    Reports mean Euclidean pixel error and mean squared error in
    grid-cell units for each method.
    """
    rows = []
    for i, pair in enumerate(corpus):
        gw, gh = pair.test_map.grid_w, pair.test_map.grid_h
        cell_w = pair.test_map.img_w / gw
        cell_h = pair.test_map.img_h / gh

        preds = {}
        preds["match_point"], _, _ = match_point(pair.train_map, pair.train_point, pair.test_map)
        preds["pixel_similarity"], _ = baseline_pixel_similarity(
            pair.train_img, pair.train_point, pair.test_img
        )
        preds["on_objects"] = baseline_on_objects(pair.test_masks, seed=seed + 7919 * i)
        preds["random"] = baseline_random(
            pair.test_map.img_w, pair.test_map.img_h, seed=seed + 104729 * i
        )
        for method, pred in preds.items():
            err_px = _pixel_error(pred, pair.true_test_point)
            err_cells_sq = ((pred.x - pair.true_test_point.x) / cell_w) ** 2 + (
                (pred.y - pair.true_test_point.y) / cell_h
            ) ** 2
            rows.append(
                {
                    "pair": i,
                    "variation": pair.variation,
                    "method": method,
                    "pixel_error": err_px,
                    "cell_sq_error": err_cells_sq,
                }
            )

    summary: dict = {"rows": rows, "by_method": {}, "by_method_variation": {}}
    methods = ("match_point", "pixel_similarity", "on_objects", "random")
    for m in methods:
        sel = [r for r in rows if r["method"] == m]
        summary["by_method"][m] = {
            "mean_pixel_error": float(np.mean([r["pixel_error"] for r in sel])),
            "mean_cell_sq_error": float(np.mean([r["cell_sq_error"] for r in sel])),
        }
        for v in {r["variation"] for r in sel}:
            vsel = [r for r in sel if r["variation"] == v]
            summary["by_method_variation"][(m, v)] = {
                "mean_pixel_error": float(np.mean([r["pixel_error"] for r in vsel])),
                "mean_cell_sq_error": float(np.mean([r["cell_sq_error"] for r in vsel])),
            }
    return summary


def matching_report_csv(summary: dict) -> str:
    """Deterministic CSV rendering of an evaluate_matching summary."""
    lines = ["method,variation,mean_pixel_error,mean_cell_sq_error"]
    for m in ("match_point", "pixel_similarity", "on_objects", "random"):
        stats = summary["by_method"][m]
        lines.append(
            f"{m},all,{stats['mean_pixel_error']:.6f},{stats['mean_cell_sq_error']:.6f}"
        )
        for (mm, v), s in sorted(summary["by_method_variation"].items()):
            if mm == m:
                lines.append(
                    f"{m},{v},{s['mean_pixel_error']:.6f},{s['mean_cell_sq_error']:.6f}"
                )
    return "\n".join(lines) + "\n"
