"""Deterministic synthetic image corpora.

Two generators live here:

* ``blob_collection`` - the separable-blob source used by unit tests: class 0
  lights up one image region, class 1 another, linearly separable by design.

* ``generate_family`` / ``write_corpus`` - 28x28 grayscale corpora that stand
  in for the digit / garment / doodle datasets when the real files are not
  on disk.  Each family has a coherent drawing style (digits are thin
  strokes, garments are filled silhouettes, doodles are outline icons), and
  every image gets per-sample jitter (shift, rotation, scale, stroke width,
  brightness, pixel noise), so binary indicator tasks on them are learnable
  but not trivial.

Rendering is pure NumPy: shapes are boolean masks evaluated on a 2x
supersampled coordinate grid and box-downsampled, so the corpus is
bit-reproducible for a fixed seed on any platform.
"""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError
from . import idx

SIZE = 28
SS = 2  # supersample factor for antialiasing

DIGIT_CLASSES = tuple(str(d) for d in range(10))
FASHION_CLASSES = ("tshirt", "trouser", "pullover", "dress", "coat",
                   "sandal", "shirt", "sneaker", "bag", "ankle_boot")
QUICKDRAW_CLASSES = ("apple", "baseball_bat", "bear", "envelope", "guitar",
                     "lollipop", "moon", "mouse", "mushroom", "rabbit")

FAMILY_CLASSES = {
    "mnist": DIGIT_CLASSES,
    "fashion_mnist": FASHION_CLASSES,
    "quickdraw": QUICKDRAW_CLASSES,
}


# -- geometry helpers --------------------------------------------------------

def _jittered_grid(rng, max_shift=2.0, max_rot=0.25, scale=(0.85, 1.1)):
    """Canvas coordinates mapped into a jittered shape frame (pixel units)."""
    n = SIZE * SS
    c = (np.arange(n) + 0.5) / SS
    Y, X = np.meshgrid(c, c, indexing="ij")
    theta = rng.uniform(-max_rot, max_rot)
    s = rng.uniform(*scale)
    tx, ty = rng.uniform(-max_shift, max_shift, size=2)
    xc, yc = X - 14.0 - tx, Y - 14.0 - ty
    ct, st = np.cos(theta), np.sin(theta)
    U = (ct * xc + st * yc) / s + 14.0
    V = (-st * xc + ct * yc) / s + 14.0
    return U, V


def _disk(U, V, cx, cy, r):
    return (U - cx) ** 2 + (V - cy) ** 2 <= r * r


def _ring(U, V, cx, cy, r, w):
    d = np.sqrt((U - cx) ** 2 + (V - cy) ** 2)
    return np.abs(d - r) <= w / 2


def _seg(U, V, x1, y1, x2, y2, w):
    """Capsule stroke: distance to the segment [p1, p2] at most w/2."""
    px, py = x2 - x1, y2 - y1
    norm = px * px + py * py
    if norm == 0:
        return _disk(U, V, x1, y1, w / 2)
    t = np.clip(((U - x1) * px + (V - y1) * py) / norm, 0.0, 1.0)
    dx, dy = U - (x1 + t * px), V - (y1 + t * py)
    return dx * dx + dy * dy <= (w / 2) ** 2


def _arc(U, V, cx, cy, r, a0, a1, w):
    """Ring segment with angles in [a0, a1] (radians, wrapping allowed)."""
    d = np.sqrt((U - cx) ** 2 + (V - cy) ** 2)
    ang = np.arctan2(V - cy, U - cx)
    span = (a1 - a0) % (2 * np.pi)
    rel = (ang - a0) % (2 * np.pi)
    return (np.abs(d - r) <= w / 2) & (rel <= span)


def _box(U, V, cx, cy, hw, hh):
    return (np.abs(U - cx) <= hw) & (np.abs(V - cy) <= hh)


def _trapezoid(U, V, cx, top_y, bot_y, top_hw, bot_hw):
    t = np.clip((V - top_y) / max(bot_y - top_y, 1e-6), 0.0, 1.0)
    hw = top_hw + (bot_hw - top_hw) * t
    return (V >= top_y) & (V <= bot_y) & (np.abs(U - cx) <= hw)


def _crescent(U, V, cx, cy, r, bite_dx, bite_r):
    return _disk(U, V, cx, cy, r) & ~_disk(U, V, cx + bite_dx, cy, bite_r)


# -- class drawings ----------------------------------------------------------

def _draw_digit(cls, U, V, rng):
    w = rng.uniform(1.8, 2.6)
    m = np.zeros_like(U, dtype=bool)
    if cls == "0":
        m |= _ring(U, V, 14, 14, rng.uniform(5.5, 7.0), w)
    elif cls == "1":
        m |= _seg(U, V, 14, 6, 14, 22, w)
        m |= _seg(U, V, 14, 6, 11, 9, w)
    elif cls == "2":
        m |= _arc(U, V, 14, 10, 4.5, np.pi, 0.25 * np.pi, w)
        m |= _seg(U, V, 17.5, 12, 9, 21, w)
        m |= _seg(U, V, 9, 21, 19, 21, w)
    elif cls == "3":
        m |= _arc(U, V, 13, 10.5, 4, 0.75 * np.pi, 0.45 * np.pi, w)
        m |= _arc(U, V, 13, 17.5, 4, 0.6 * np.pi, 0.35 * np.pi, w)
    elif cls == "4":
        m |= _seg(U, V, 16.5, 6, 16.5, 22, w)
        m |= _seg(U, V, 16.5, 6, 9, 16, w)
        m |= _seg(U, V, 9, 16, 20, 16, w)
    elif cls == "5":
        m |= _seg(U, V, 10, 7, 18, 7, w)
        m |= _seg(U, V, 10, 7, 10, 13, w)
        m |= _arc(U, V, 13, 16.5, 4.5, 0.65 * np.pi, 0.5 * np.pi, w)
    elif cls == "6":
        m |= _ring(U, V, 13.5, 17, 4.5, w)
        m |= _arc(U, V, 16, 11, 7, 0.75 * np.pi, 1.35 * np.pi, w)
    elif cls == "7":
        m |= _seg(U, V, 9, 7, 19, 7, w)
        m |= _seg(U, V, 19, 7, 12, 22, w)
    elif cls == "8":
        m |= _ring(U, V, 14, 10, 3.6, w)
        m |= _ring(U, V, 14, 17.5, 4.2, w)
    elif cls == "9":
        m |= _ring(U, V, 14.5, 11, 4.5, w)
        m |= _seg(U, V, 18.5, 12, 15.5, 22, w)
    return m


def _draw_fashion(cls, U, V, rng):
    m = np.zeros_like(U, dtype=bool)
    if cls == "tshirt":
        m |= _box(U, V, 14, 15, 4.5, 7)
        m |= _box(U, V, 8.2, 10.5, 2.5, 2)
        m |= _box(U, V, 19.8, 10.5, 2.5, 2)
    elif cls == "trouser":
        m |= _box(U, V, 11.2, 16, 2.0, 8)
        m |= _box(U, V, 16.8, 16, 2.0, 8)
        m |= _box(U, V, 14, 8.8, 4.8, 1.4)
    elif cls == "pullover":
        m |= _box(U, V, 14, 15, 4.5, 7)
        m |= _seg(U, V, 9, 9.5, 5.5, 20, 4.0)
        m |= _seg(U, V, 19, 9.5, 22.5, 20, 4.0)
    elif cls == "dress":
        m |= _trapezoid(U, V, 14, 7, 22, 2.5, 7.5)
    elif cls == "coat":
        m |= _box(U, V, 14, 15.5, 5, 7.5)
        m |= _seg(U, V, 9, 9.5, 6.5, 21, 3.4)
        m |= _seg(U, V, 19, 9.5, 21.5, 21, 3.4)
        m &= ~_seg(U, V, 14, 9, 14, 22, 0.9)
    elif cls == "sandal":
        m |= _seg(U, V, 7, 19, 21, 17, 2.6)
        m |= _seg(U, V, 9, 13, 13, 18, 1.6)
        m |= _seg(U, V, 15, 12, 17, 17.5, 1.6)
    elif cls == "shirt":
        m |= _box(U, V, 14, 15, 4.2, 7)
        m |= _box(U, V, 8.5, 11, 2.2, 2.5)
        m |= _box(U, V, 19.5, 11, 2.2, 2.5)
        m &= ~_trapezoid(U, V, 14, 8, 12.5, 1.8, 0.3)
    elif cls == "sneaker":
        m |= _trapezoid(U, V, 14, 13.5, 19.5, 3.0, 8.5)
        m |= _box(U, V, 10, 12.5, 3.2, 2.2)
    elif cls == "bag":
        m |= _box(U, V, 14, 16.5, 6.5, 5)
        m |= _ring(U, V, 14, 11, 3.0, 1.6) & (V <= 11.5)
    elif cls == "ankle_boot":
        m |= _box(U, V, 11, 13, 2.8, 5.5)
        m |= _trapezoid(U, V, 14.5, 15.5, 19.5, 4.5, 7.0)
    return m


def _draw_quickdraw(cls, U, V, rng):
    w = rng.uniform(1.5, 2.1)
    m = np.zeros_like(U, dtype=bool)
    if cls == "apple":
        m |= _ring(U, V, 14, 15.5, 5.5, w)
        m |= _seg(U, V, 14, 10, 15.5, 6.5, w * 0.8)
    elif cls == "baseball_bat":
        m |= _seg(U, V, 8, 21, 19, 8, 2.6)
        m |= _seg(U, V, 19.5, 7.5, 20.5, 6.5, 3.4)
    elif cls == "bear":
        m |= _ring(U, V, 14, 15, 5.5, w)
        m |= _ring(U, V, 9.5, 9.5, 2.2, w)
        m |= _ring(U, V, 18.5, 9.5, 2.2, w)
    elif cls == "envelope":
        m |= _seg(U, V, 7, 10, 21, 10, w)
        m |= _seg(U, V, 7, 19, 21, 19, w)
        m |= _seg(U, V, 7, 10, 7, 19, w)
        m |= _seg(U, V, 21, 10, 21, 19, w)
        m |= _seg(U, V, 7, 10, 14, 15, w)
        m |= _seg(U, V, 21, 10, 14, 15, w)
    elif cls == "guitar":
        m |= _ring(U, V, 12, 18, 4.2, w)
        m |= _ring(U, V, 13.5, 12.5, 2.8, w)
        m |= _seg(U, V, 15, 10.5, 19, 5.5, w)
    elif cls == "lollipop":
        m |= _ring(U, V, 14, 10, 4.0, w)
        m |= _seg(U, V, 14, 14, 14, 23, w)
    elif cls == "moon":
        bite = rng.uniform(3.2, 4.2)
        m |= _ring(U, V, 14, 14, 6.5, w) & ~_disk(U, V, 14 + bite, 14, 5.8)
        m |= _ring(U, V, 14 + bite, 14, 5.8, w) & _disk(U, V, 14, 14, 6.5)
    elif cls == "mouse":
        m |= _ring(U, V, 14, 16, 4.5, w)
        m |= _ring(U, V, 10, 10.5, 2.0, w)
        m |= _ring(U, V, 18, 10.5, 2.0, w)
        m |= _arc(U, V, 21, 18, 3.5, 1.2 * np.pi, 1.9 * np.pi, w * 0.7)
    elif cls == "mushroom":
        m |= _arc(U, V, 14, 14, 6.0, np.pi, 2 * np.pi, w)
        m |= _seg(U, V, 8, 14, 20, 14, w)
        m |= _seg(U, V, 11.5, 14, 11.5, 21, w)
        m |= _seg(U, V, 16.5, 14, 16.5, 21, w)
        m |= _seg(U, V, 11.5, 21, 16.5, 21, w)
    elif cls == "rabbit":
        m |= _ring(U, V, 14, 17, 4.2, w)
        m |= _ring(U, V, 11.5, 8, 1.8, w * 0.9)
        m |= _ring(U, V, 16.5, 8, 1.8, w * 0.9)
    return m


_FAMILY_DRAW = {
    "mnist": (_draw_digit, DIGIT_CLASSES),
    "fashion_mnist": (_draw_fashion, FASHION_CLASSES),
    "quickdraw": (_draw_quickdraw, QUICKDRAW_CLASSES),
}


def render_sample(family: str, cls: str, rng: np.random.Generator) -> np.ndarray:
    """One uint8 28x28 image of class ``cls`` drawn in the family style."""
    draw, classes = _FAMILY_DRAW[family]
    if cls not in classes:
        raise ValidationError(f"unknown class {cls!r} for family {family!r}")
    U, V = _jittered_grid(rng)
    mask = draw(cls, U, V, rng).astype(np.float32)
    img = mask.reshape(SIZE, SS, SIZE, SS).mean(axis=(1, 3))
    img *= rng.uniform(0.72, 1.0)
    img += rng.normal(0.0, 0.04, size=img.shape).astype(np.float32)
    np.clip(img, 0.0, 1.0, out=img)
    return np.round(img * 255.0).astype(np.uint8)


def generate_family(family: str, n_per_class: int, seed: int):
    """Renders a full family: (images uint8 (N,28,28), labels uint8 (N,)).

    Per-sample RNG streams are keyed by (seed, class, index), so the corpus
    is reproducible regardless of generation order.
    """
    if family not in _FAMILY_DRAW:
        raise ValidationError(f"unknown family {family!r}; "
                              f"choose from {sorted(_FAMILY_DRAW)}")
    _, classes = _FAMILY_DRAW[family]
    images = np.empty((n_per_class * len(classes), SIZE, SIZE), dtype=np.uint8)
    labels = np.empty(n_per_class * len(classes), dtype=np.uint8)
    pos = 0
    for ci, cls in enumerate(classes):
        for k in range(n_per_class):
            rng = np.random.default_rng(np.random.SeedSequence((seed, ci, k)))
            images[pos] = render_sample(family, cls, rng)
            labels[pos] = ci
            pos += 1
    return images, labels


def write_corpus(root, family: str, n_per_class: int, seed: int,
                 test_fraction: float = 0.15) -> None:
    """Writes a family corpus in its on-disk container format.

    mnist / fashion_mnist: IDX pairs (train-*, t10k-*) under ``root``.
    quickdraw: one <category>.npy bitmap array (N, 784) uint8 per category.
    """
    root = __import__("pathlib").Path(root)
    root.mkdir(parents=True, exist_ok=True)
    images, labels = generate_family(family, n_per_class, seed)
    if family == "quickdraw":
        _, classes = _FAMILY_DRAW[family]
        for ci, cls in enumerate(classes):
            sel = labels == ci
            np.save(root / f"{cls}.npy", images[sel].reshape(-1, SIZE * SIZE))
        return
    n_test = int(round(test_fraction * len(labels)))
    # deterministic interleaved holdout, balanced across classes
    order = np.random.default_rng(seed).permutation(len(labels))
    test_idx, train_idx = order[:n_test], order[n_test:]
    idx.write_idx_images(root / "train-images-idx3-ubyte", images[train_idx])
    idx.write_idx_labels(root / "train-labels-idx1-ubyte", labels[train_idx])
    idx.write_idx_images(root / "t10k-images-idx3-ubyte", images[test_idx])
    idx.write_idx_labels(root / "t10k-labels-idx1-ubyte", labels[test_idx])


def blob_collection(n_per_class: int = 200, seed: int = 0, spread: float = 2.0):
    """Separable two-class blob images for tests.

    Class 0 is a bright blob in the upper-left quadrant, class 1 in the
    lower-right; positions jitter by ``spread`` pixels.  A linear probe on
    raw pixels separates the classes, which the tests verify closed-form.
    """
    rng = np.random.default_rng(seed)
    n = 2 * n_per_class
    images = np.zeros((n, SIZE, SIZE), dtype=np.float32)
    labels = np.repeat(np.arange(2, dtype=np.int64), n_per_class)
    centers = {0: (9.0, 9.0), 1: (19.0, 19.0)}
    c = np.arange(SIZE) + 0.5
    Y, X = np.meshgrid(c, c, indexing="ij")
    for i in range(n):
        cy, cx = centers[int(labels[i])]
        cy += rng.uniform(-spread, spread)
        cx += rng.uniform(-spread, spread)
        r = rng.uniform(2.5, 3.5)
        images[i] = np.exp(-(((X - cx) ** 2 + (Y - cy) ** 2) / (2 * r * r)))
    images += rng.normal(0, 0.02, size=images.shape).astype(np.float32)
    np.clip(images, 0.0, 1.0, out=images)
    order = rng.permutation(n)
    images8 = np.round(images[order] * 255).astype(np.uint8)
    return images8, labels[order]
