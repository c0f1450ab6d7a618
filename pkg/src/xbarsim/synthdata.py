"""Procedurally generated image datasets in the standard file formats.

Benchmarks in this package read datasets from disk through the IDX loaders.
When the real scanned corpora are not available, these generators write
drop-in stand-ins: ten stroke-drawn digit glyphs, randomly perturbed per
sample (affine warp, stroke-width jitter, contrast jitter, pixel noise).
Difficulty is graded (easy/medium/hard/veryhard) and a set may mix levels
per sample, giving it a heavy tail of ambiguous images the way natural
corpora have; harder variants add stronger warps and structured clutter.
Generated sets are written as real IDX files and re-read through the same
code path as downloaded data.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .data_io import MNIST_FILES, save_idx
from .errors import ParameterError
from .rng import RngStream

SIDE = 28

# Strokes live in the unit square, x right, y down, drawn with margins so
# augmentation warps rarely push ink off the canvas.
_A = "arc"  # (cx, cy, rx, ry, t0, t1)
_L = "line"  # (p0, p1)
_B = "bez"  # quadratic (p0, p1, p2)

GLYPH_STROKES = {
    0: [(_A, (0.50, 0.50, 0.21, 0.30, 0.0, 2 * np.pi))],
    1: [(_L, ((0.40, 0.30), (0.55, 0.16))), (_L, ((0.55, 0.16), (0.55, 0.84)))],
    2: [
        (_B, ((0.32, 0.35), (0.50, 0.10), (0.68, 0.35))),
        (_B, ((0.68, 0.35), (0.68, 0.55), (0.34, 0.84))),
        (_L, ((0.34, 0.84), (0.72, 0.84))),
    ],
    3: [
        (_B, ((0.34, 0.22), (0.52, 0.10), (0.63, 0.28))),
        (_B, ((0.63, 0.28), (0.66, 0.45), (0.48, 0.50))),
        (_B, ((0.48, 0.50), (0.70, 0.52), (0.66, 0.72))),
        (_B, ((0.66, 0.72), (0.55, 0.90), (0.33, 0.78))),
    ],
    4: [
        (_L, ((0.60, 0.16), (0.30, 0.62))),
        (_L, ((0.30, 0.62), (0.74, 0.62))),
        (_L, ((0.62, 0.40), (0.62, 0.86))),
    ],
    5: [
        (_L, ((0.66, 0.18), (0.36, 0.18))),
        (_L, ((0.36, 0.18), (0.34, 0.48))),
        (_B, ((0.34, 0.48), (0.70, 0.40), (0.66, 0.66))),
        (_B, ((0.66, 0.66), (0.62, 0.88), (0.32, 0.80))),
    ],
    6: [
        (_B, ((0.62, 0.16), (0.38, 0.24), (0.36, 0.52))),
        (_B, ((0.36, 0.52), (0.34, 0.84), (0.52, 0.82))),
        (_B, ((0.52, 0.82), (0.70, 0.80), (0.64, 0.60))),
        (_B, ((0.64, 0.60), (0.58, 0.46), (0.36, 0.56))),
    ],
    7: [
        (_L, ((0.30, 0.18), (0.70, 0.18))),
        (_L, ((0.70, 0.18), (0.44, 0.85))),
        (_L, ((0.38, 0.52), (0.64, 0.52))),
    ],
    8: [
        (_A, (0.50, 0.32, 0.16, 0.15, 0.0, 2 * np.pi)),
        (_A, (0.50, 0.67, 0.19, 0.17, 0.0, 2 * np.pi)),
    ],
    9: [
        (_A, (0.52, 0.34, 0.17, 0.16, 0.0, 2 * np.pi)),
        (_L, ((0.69, 0.36), (0.64, 0.60))),
        (_B, ((0.64, 0.60), (0.58, 0.86), (0.34, 0.78))),
    ],
}


def _stroke_points(stroke, per_unit=220):
    kind, p = stroke
    if kind == _A:
        cx, cy, rx, ry, t0, t1 = p
        n = max(12, int(abs(t1 - t0) * max(rx, ry) * per_unit))
        t = np.linspace(t0, t1, n)
        return np.stack([cx + rx * np.cos(t), cy + ry * np.sin(t)], axis=1)
    if kind == _L:
        (x0, y0), (x1, y1) = p
        n = max(8, int(np.hypot(x1 - x0, y1 - y0) * per_unit))
        t = np.linspace(0.0, 1.0, n)[:, None]
        return (1 - t) * np.array([x0, y0]) + t * np.array([x1, y1])
    if kind == _B:
        p0, p1, p2 = (np.array(q) for q in p)
        coarse = np.hypot(*(p1 - p0)) + np.hypot(*(p2 - p1))
        n = max(10, int(coarse * per_unit))
        t = np.linspace(0.0, 1.0, n)[:, None]
        return (1 - t) ** 2 * p0 + 2 * (1 - t) * t * p1 + t**2 * p2
    raise ParameterError(f"unknown stroke kind {kind!r}")


_GLYPH_CACHE: dict = {}


def glyph(digit: int) -> np.ndarray:
    """Clean (SIDE, SIDE) float prototype of one digit, max intensity 1."""
    if digit not in GLYPH_STROKES:
        raise ParameterError(f"no glyph for digit {digit}")
    if digit not in _GLYPH_CACHE:
        canvas = np.zeros((SIDE, SIDE))
        pts = np.concatenate([_stroke_points(s) for s in GLYPH_STROKES[digit]])
        xs = pts[:, 0] * SIDE - 0.5
        ys = pts[:, 1] * SIDE - 0.5
        # bilinear scatter of unit mass per sample point
        x0 = np.floor(xs).astype(int)
        y0 = np.floor(ys).astype(int)
        fx = xs - x0
        fy = ys - y0
        for dx, dy, w in (
            (0, 0, (1 - fx) * (1 - fy)),
            (1, 0, fx * (1 - fy)),
            (0, 1, (1 - fx) * fy),
            (1, 1, fx * fy),
        ):
            xi = np.clip(x0 + dx, 0, SIDE - 1)
            yi = np.clip(y0 + dy, 0, SIDE - 1)
            np.add.at(canvas, (yi, xi), w)
        canvas = ndimage.gaussian_filter(canvas, 0.75)
        canvas /= canvas.max()
        _GLYPH_CACHE[digit] = np.clip(canvas, 0.0, 1.0)
    return _GLYPH_CACHE[digit]


# Pairs of digits whose glyphs share most of their stroke structure; used to
# draw borderline samples that sit near the decision boundary on purpose.
CONFUSABLE = {
    0: (8, 6), 1: (7,), 2: (3, 7), 3: (8, 5), 4: (9,),
    5: (6, 3), 6: (5, 8), 7: (1, 2), 8: (3, 0), 9: (4, 0),
}

# Augmentation strength per difficulty level: rotation (rad), scale range,
# shear, translation (px), stroke-blur range, clutter glyph intensity,
# smooth background field, pixel noise (fixed or per-sample range),
# foreground intensity range. morph
# blends the warped prototype with an independently warped confusable digit
# by alpha in the given range (label unchanged): each such sample is a novel
# chimera whose class evidence is partly contradicted, so a trained model
# cannot widen its margin on them by interpolating between seen samples.
LEVELS = {
    "easy": dict(rot=0.20, scale=(0.86, 1.14), shear=0.10, shift=2.0,
                 blur=(0.2, 0.7), clutter=0.0, field=0.0, pixel=0.04, fg=(0.70, 1.0),
                 thick=True),
    "medium": dict(rot=0.30, scale=(0.80, 1.20), shear=0.16, shift=3.0,
                   blur=(0.3, 1.0), clutter=0.20, field=0.06, pixel=0.06, fg=(0.65, 1.0)),
    "hard": dict(rot=0.35, scale=(0.78, 1.22), shear=0.22, shift=3.0,
                 blur=(0.3, 1.1), clutter=0.30, field=0.12, pixel=0.08, fg=(0.60, 1.0)),
    "veryhard": dict(rot=0.40, scale=(0.76, 1.24), shear=0.26, shift=3.0,
                     blur=(0.4, 1.3), clutter=0.45, field=0.16, pixel=0.10, fg=(0.55, 0.95)),
    # low stroke contrast over a pixel-noise floor
    "faint": dict(rot=0.30, scale=(0.80, 1.20), shear=0.16, shift=3.0,
                  blur=(0.3, 1.0), clutter=0.12, field=0.05, pixel=0.06, fg=(0.20, 0.45)),
    # heavy per-sample pixel noise over variable contrast: the label stays
    # unambiguous (noise carries no class evidence) but every sample sits at
    # a random offset from the stroke manifold, eroding test-time margins
    "speckle": dict(rot=0.25, scale=(0.84, 1.16), shear=0.12, shift=2.5,
                    blur=(0.2, 0.8), clutter=0.0, field=0.0, pixel=(0.13, 0.25),
                    fg=(0.55, 0.95), thick=True),
    # handwriting-like intraclass diversity: every sample gets its own smooth
    # elastic displacement field (amplitude range in pixels) on top of the
    # affine warp, so no two samples share stroke geometry
    "script": dict(rot=0.28, scale=(0.82, 1.18), shear=0.15, shift=3.0,
                   blur=(0.3, 0.9), clutter=0.06, field=0.04, pixel=0.06,
                   fg=(0.70, 1.0), elastic=(0.7, 1.8), thick=True),
    # boundary-adjacent samples: a faint ghost of a confusable digit is
    # blended in, so the class margin is thin by construction
    "morphlite": dict(rot=0.25, scale=(0.84, 1.16), shear=0.12, shift=2.5,
                      blur=(0.2, 0.8), clutter=0.0, field=0.0, pixel=0.05,
                      fg=(0.70, 1.0), morph=(0.10, 0.24), thick=True),
    # borderline samples: a partial blend with a confusable class
    "morph": dict(rot=0.30, scale=(0.80, 1.20), shear=0.16, shift=3.0,
                  blur=(0.3, 1.0), clutter=0.10, field=0.04, pixel=0.06, fg=(0.60, 1.0),
                  morph=(0.18, 0.38)),
}


def _sample_levels(level, n: int, rng: RngStream):
    """Per-sample difficulty names; `level` is one name or {name: weight}.

    Mixtures give the set a heavy tail of genuinely ambiguous samples, which
    natural handwriting corpora have and single-level augmentation lacks.
    """
    if isinstance(level, str):
        if level not in LEVELS:
            raise ParameterError(f"unknown difficulty {level!r}, pick one of {sorted(LEVELS)}")
        return [level] * n
    pairs = sorted(level.items()) if isinstance(level, dict) else list(level)
    names = [p[0] for p in pairs]
    for nm in names:
        if nm not in LEVELS:
            raise ParameterError(f"unknown difficulty {nm!r}, pick one of {sorted(LEVELS)}")
    w = np.array([p[1] for p in pairs], dtype=np.float64)
    if np.any(w < 0) or w.sum() <= 0:
        raise ParameterError("mixture weights must be non-negative and not all zero")
    cum = np.cumsum(w / w.sum())
    picks = np.searchsorted(cum, rng.uniform(size=n), side="right")
    return [names[min(int(i), len(names) - 1)] for i in picks]


def _level_glyph(digit: int, k: dict) -> np.ndarray:
    """Level-appropriate prototype; `thick` levels widen strokes by ~1 px."""
    base = glyph(digit)
    if k.get("thick"):
        base = ndimage.grey_dilation(base, size=(2, 2))
    return base


def _rand_warp(base: np.ndarray, k: dict, rng: RngStream) -> np.ndarray:
    """Random affine warp of one glyph at level strength k."""
    theta = rng.uniform(-k["rot"], k["rot"])
    scale = rng.uniform(*k["scale"])
    shear = rng.uniform(-k["shear"], k["shear"])
    shift = rng.uniform(-k["shift"], k["shift"], size=2)
    c, s = np.cos(theta), np.sin(theta)
    # output->input pixel map: rotate, shear, then inverse-scale
    mat = np.array([[c, -s], [s, c]]) @ np.array([[1.0, shear], [0.0, 1.0]]) / scale
    center = (SIDE - 1) / 2.0
    offset = np.array([center, center]) - mat @ np.array([center, center]) + shift
    return ndimage.affine_transform(base, mat, offset=offset, order=1, mode="constant")


def render_digit(digit: int, rng: RngStream, level: str = "easy") -> np.ndarray:
    """One augmented uint8 sample of a digit."""
    if level not in LEVELS:
        raise ParameterError(f"unknown difficulty {level!r}, pick one of {sorted(LEVELS)}")
    k = LEVELS[level]
    img = _rand_warp(_level_glyph(digit, k), k, rng)
    if "morph" in k:
        # blend with a separately warped confusable glyph so every morph is
        # a fresh chimera rather than a point on one fixed interpolation path
        partners = CONFUSABLE[digit]
        partner = partners[int(rng.integers(0, len(partners)))]
        alpha = rng.uniform(*k["morph"])
        img = (1.0 - alpha) * img + alpha * _rand_warp(_level_glyph(partner, k), k, rng)
    if "elastic" in k:
        amp = rng.uniform(*k["elastic"])
        dy = ndimage.gaussian_filter(rng.standard_normal((SIDE, SIDE)), 4.0)
        dx = ndimage.gaussian_filter(rng.standard_normal((SIDE, SIDE)), 4.0)
        dy *= amp / max(dy.std(), 1e-9)
        dx *= amp / max(dx.std(), 1e-9)
        yy, xx = np.meshgrid(np.arange(SIDE), np.arange(SIDE), indexing="ij")
        img = ndimage.map_coordinates(img, [yy + dy, xx + dx], order=1, mode="constant")
    img = ndimage.gaussian_filter(img, rng.uniform(*k["blur"]))
    if k["clutter"] > 0:
        clutter = glyph(int(rng.integers(0, 10)))
        roll = rng.integers(-9, 10, size=2)
        img = img + k["clutter"] * np.roll(clutter, tuple(roll), axis=(0, 1))
    if k["field"] > 0:
        img = img + k["field"] * ndimage.gaussian_filter(rng.standard_normal((SIDE, SIDE)), 1.5)
    peak = img.max()
    if peak > 0:
        img = img / peak
    img = img * rng.uniform(*k["fg"])
    pixel = rng.uniform(*k["pixel"]) if isinstance(k["pixel"], tuple) else k["pixel"]
    img = img + pixel * rng.standard_normal((SIDE, SIDE))
    return (np.clip(img, 0.0, 1.0) * 255.0).round().astype(np.uint8)


def make_digits(n_train: int, n_test: int, rng: RngStream, level="easy"):
    """Balanced augmented splits; returns (x_train, y_train, x_test, y_test) uint8.

    level is a difficulty name or a {name: weight} mixture applied per sample.
    """
    canon = level if isinstance(level, str) else tuple(sorted(dict(level).items()))
    out = []
    for split, n in (("train", n_train), ("test", n_test)):
        srng = rng.child(("digits", split, canon))
        y = np.arange(n) % 10
        y = y[srng.permutation(n)]
        levels = _sample_levels(level, n, srng)
        imgs = [render_digit(int(d), srng, lv) for d, lv in zip(y, levels)]
        x = np.stack(imgs) if imgs else np.zeros((0, SIDE, SIDE), dtype=np.uint8)
        out.extend([x, y.astype(np.uint8)])
    return tuple(out)


def write_digit_set(data_dir, name: str, n_train: int, n_test: int, seed: int, level="easy") -> None:
    """Generate a digit set and write it in IDX layout under data_dir/name."""
    from pathlib import Path

    rng = RngStream(seed, stream_id=17)
    x_train, y_train, x_test, y_test = make_digits(n_train, n_test, rng, level)
    d = Path(data_dir) / name
    save_idx(d / MNIST_FILES["x_train"], x_train)
    save_idx(d / MNIST_FILES["y_train"], y_train)
    save_idx(d / MNIST_FILES["x_test"], x_test)
    save_idx(d / MNIST_FILES["y_test"], y_test)


SYNTH_SETS = {
    # name -> (difficulty level or mixture, train size, test size, seed)
    "digits": ({"easy": 0.15, "script": 0.55, "speckle": 0.30}, 20000, 2000, 1234),
    "digits_hard": ("hard", 6000, 1500, 4321),
}


def ensure_dataset(name: str, data_dir) -> None:
    """Generate a synthetic set under data_dir if its files are not present."""
    from pathlib import Path

    if name not in SYNTH_SETS:
        raise ParameterError(f"no synthetic generator for dataset {name!r}")
    d = Path(data_dir) / name
    if all((d / f).exists() for f in MNIST_FILES.values()):
        return
    level, n_train, n_test, seed = SYNTH_SETS[name]
    write_digit_set(data_dir, name, n_train, n_test, seed, level)


def make_blobs(n: int, rng: RngStream, classes: int = 3, spread: float = 0.10):
    """Tiny 2-D Gaussian-blob classification set for trainer tests."""
    angles = 2 * np.pi * np.arange(classes) / classes
    centers = 0.5 + 0.30 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    y = rng.integers(0, classes, size=n)
    x = centers[y] + spread * rng.standard_normal((n, 2))
    return x.astype(np.float32), y.astype(np.int64)
