"""Seeded image augmentation pipelines.

Covers the color jitter used for robustness scoring, joint rotation and
flipping of image/mask pairs, the 448 -> 224 rotated-crop recipe for
retina slices, and the ImageNet pretraining pipeline (crop, flip, mixup,
CutMix, random erasing, label smoothing).

Images are ``(H, W, 3)`` float arrays with values in ``[0, 1]``; every
operation clamps its output back into that range.  Masks are ``(H, W)``
integer arrays and always receive the same geometric transform as their
image.

Every operation accepts either an integer seed or an existing
:class:`~robsel.prng.PrngStream` in its ``seed`` argument.  With an
integer, the op derives a private stream from a fixed role constant, so
two different ops called with the same seed do not share draws.  Draw
order within an op is fixed and listed in its docstring; composite
pipelines thread a single stream through their stages in program order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betaincinv

from .errors import ShapeMismatchError
from .prng import PrngStream, compose_stream_id

# Role constants separating the draw streams of independently seeded ops.
_ROLE_JITTER = 101
_ROLE_ROTATE_FLIP = 102
_ROLE_ROTATED_CROP = 103
_ROLE_RESIZED_CROP = 104
_ROLE_CUTMIX = 105
_ROLE_ERASING = 106
_ROLE_IMAGENET = 107

GRAYSCALE_WEIGHTS = (0.2989, 0.587, 0.114)

MIXUP_BETA = 0.8
LABEL_SMOOTHING = 0.1
ERASING_PROBABILITY = 0.25
ERASING_AREA_RANGE = (0.02, 0.33)
ERASING_RATIO_RANGE = (0.3, 3.3)


def _as_stream(seed, role: int) -> PrngStream:
    if isinstance(seed, PrngStream):
        return seed
    return PrngStream(int(seed), compose_stream_id(role))


def _check_image(img) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ShapeMismatchError(f"expected an (H, W, 3) image, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("image contains non-finite values")
    return arr


def _check_mask(mask, img_shape) -> np.ndarray:
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ShapeMismatchError(f"expected an (H, W) mask, got shape {arr.shape}")
    if arr.shape != img_shape[:2]:
        raise ShapeMismatchError(
            f"mask shape {arr.shape} does not match image spatial dims {img_shape[:2]}"
        )
    return arr


def _check_label(lab) -> np.ndarray:
    arr = np.asarray(lab, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 1:
        raise ShapeMismatchError(f"expected a 1-D label vector, got shape {arr.shape}")
    if (arr < 0).any() or abs(float(arr.sum()) - 1.0) > 1e-9:
        raise ValueError("label vector must be nonnegative and sum to 1")
    return arr


@dataclass(frozen=True)
class JitterParams:
    """Uniform sampling ranges for the four color jitter factors.

    Each range must contain its identity value (1 for the multiplicative
    factors, 0 for the hue shift) so that narrowing a range toward the
    identity weakens the jitter instead of biasing it.
    """

    brightness: tuple[float, float] = (0.9, 1.1)
    contrast: tuple[float, float] = (0.95, 1.05)
    saturation: tuple[float, float] = (0.9, 1.1)
    hue: tuple[float, float] = (-0.05, 0.05)
    grayscale_weights: tuple[float, float, float] = GRAYSCALE_WEIGHTS

    def __post_init__(self):
        for name, (lo, hi), ident in (
            ("brightness", self.brightness, 1.0),
            ("contrast", self.contrast, 1.0),
            ("saturation", self.saturation, 1.0),
            ("hue", self.hue, 0.0),
        ):
            if not lo <= ident <= hi:
                raise ValueError(f"{name} range {(lo, hi)} must contain {ident}")
        # the published luma constants sum to 0.9999, so allow that much slack
        if abs(sum(self.grayscale_weights) - 1.0) > 1e-3:
            raise ValueError("grayscale weights must sum to 1 (within 1e-3)")

    @classmethod
    def identity(cls) -> "JitterParams":
        """Degenerate ranges that make color_jitter a no-op."""
        return cls((1.0, 1.0), (1.0, 1.0), (1.0, 1.0), (0.0, 0.0))


def rgb_to_hsv(img) -> np.ndarray:
    """RGB image in [0, 1] to HSV with all channels in [0, 1].

    Gray pixels get hue 0 and saturation 0 by convention; the channel
    priority for the hue sextant matches ``colorsys``.
    """
    img = _check_image(img)
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    maxc = img.max(axis=-1)
    minc = img.min(axis=-1)
    chroma = maxc - minc
    safe_max = np.where(maxc != 0.0, maxc, 1.0)
    sat = np.where(maxc != 0.0, chroma / safe_max, 0.0)
    safe_chroma = np.where(chroma != 0.0, chroma, 1.0)
    rc = (maxc - r) / safe_chroma
    gc = (maxc - g) / safe_chroma
    bc = (maxc - b) / safe_chroma
    hue = np.where(
        r == maxc, bc - gc, np.where(g == maxc, 2.0 + rc - bc, 4.0 + gc - rc)
    )
    hue = np.where(chroma == 0.0, 0.0, (hue / 6.0) % 1.0)
    return np.stack([hue, sat, maxc], axis=-1)


def hsv_to_rgb(img) -> np.ndarray:
    """Inverse of :func:`rgb_to_hsv`; round trips within 1e-6 per channel."""
    img = _check_image(img)
    hue, sat, val = img[..., 0], img[..., 1], img[..., 2]
    hue = hue % 1.0
    hue = np.where(hue >= 1.0, 0.0, hue)  # tiny negatives can wrap to exactly 1.0
    sextant = np.minimum(np.floor(hue * 6.0).astype(np.int64), 5)
    frac = hue * 6.0 - sextant
    p = val * (1.0 - sat)
    q = val * (1.0 - sat * frac)
    t = val * (1.0 - sat * (1.0 - frac))
    r = np.choose(sextant, [val, q, p, p, t, val])
    g = np.choose(sextant, [t, val, val, q, p, p])
    b = np.choose(sextant, [p, p, t, val, val, q])
    return np.stack([r, g, b], axis=-1)


def color_jitter(img, params: JitterParams = JitterParams(), seed=0) -> np.ndarray:
    """Jitter brightness, contrast, saturation, and hue, in that order.

    Draws, in order: brightness factor, contrast factor, saturation
    factor, hue shift, each uniform over its configured range.  The
    grayscale reference is computed once, right after the brightness
    scale, and reused by both the contrast and saturation mixes.  The
    hue shift wraps modulo 1 in HSV space.  Output is clamped to [0, 1].
    """
    img = _check_image(img)
    rng = _as_stream(seed, _ROLE_JITTER)
    lam_b = rng.uniform(*params.brightness)
    lam_c = rng.uniform(*params.contrast)
    lam_s = rng.uniform(*params.saturation)
    lam_h = rng.uniform(*params.hue)

    x = lam_b * img
    gray = x @ np.asarray(params.grayscale_weights, dtype=np.float64)
    mean_intensity = float(gray.mean())
    x = lam_c * x + (1.0 - lam_c) * mean_intensity
    x = lam_s * x + (1.0 - lam_s) * gray[..., None]
    hsv = rgb_to_hsv(x)
    hsv[..., 0] = (hsv[..., 0] + lam_h) % 1.0
    x = hsv_to_rgb(hsv)
    return np.clip(x, 0.0, 1.0)


def rotate_about_center(arr, angle: float, interpolation: str, out_shape=None) -> np.ndarray:
    """Rotate array content by ``angle`` radians about the array center.

    Each output pixel is inverse-mapped into the source and sampled with
    bilinear weights (``"bilinear"``) or the nearest source pixel
    (``"nearest"``); source locations outside the array contribute zero.
    ``out_shape`` selects a larger output canvas whose center coincides
    with the source center (used for padded rotations).  The rotation
    matrix acts on (row, col) offsets as ``[[cos, -sin], [sin, cos]]``.
    """
    a = np.asarray(arr)
    if a.ndim not in (2, 3):
        raise ShapeMismatchError(f"can only rotate 2-D or 3-D arrays, got shape {a.shape}")
    if interpolation not in ("bilinear", "nearest"):
        raise ValueError(f"unknown interpolation {interpolation!r}")
    src_h, src_w = a.shape[:2]
    out_h, out_w = (src_h, src_w) if out_shape is None else out_shape
    cy_src, cx_src = (src_h - 1) / 2.0, (src_w - 1) / 2.0
    cy_out, cx_out = (out_h - 1) / 2.0, (out_w - 1) / 2.0

    rows, cols = np.meshgrid(np.arange(out_h), np.arange(out_w), indexing="ij")
    dy = rows - cy_out
    dx = cols - cx_out
    cos_a, sin_a = math.cos(angle), math.sin(angle)
    src_r = cy_src + cos_a * dy + sin_a * dx
    src_c = cx_src - sin_a * dy + cos_a * dx

    def gather(ri, ci):
        valid = (ri >= 0) & (ri < src_h) & (ci >= 0) & (ci < src_w)
        ri = np.clip(ri, 0, src_h - 1)
        ci = np.clip(ci, 0, src_w - 1)
        vals = a[ri, ci]
        if a.ndim == 3:
            return np.where(valid[..., None], vals, 0)
        return np.where(valid, vals, 0)

    if interpolation == "nearest":
        return gather(
            np.floor(src_r + 0.5).astype(np.int64), np.floor(src_c + 0.5).astype(np.int64)
        )

    r0 = np.floor(src_r).astype(np.int64)
    c0 = np.floor(src_c).astype(np.int64)
    fr = src_r - r0
    fc = src_c - c0
    if a.ndim == 3:
        fr = fr[..., None]
        fc = fc[..., None]
    out = (1.0 - fr) * (1.0 - fc) * gather(r0, c0)
    out += (1.0 - fr) * fc * gather(r0, c0 + 1)
    out += fr * (1.0 - fc) * gather(r0 + 1, c0)
    out += fr * fc * gather(r0 + 1, c0 + 1)
    return out


def rotate_flip(img, mask, seed) -> tuple[np.ndarray, np.ndarray]:
    """Jointly rotate and maybe vertically flip an image and its mask.

    The angle is uniform over [0, pi]; the image is sampled bilinearly
    and the mask with nearest neighbor, both zero padded, and the flip
    (probability 0.5) applies to both.  Draws, in order: angle, flip
    (flip when the draw is below 0.5).
    """
    img = _check_image(img)
    mask = _check_mask(mask, img.shape)
    rng = _as_stream(seed, _ROLE_ROTATE_FLIP)
    angle = rng.uniform(0.0, math.pi)
    flip = rng.uniform() < 0.5
    out_img = rotate_about_center(img, angle, "bilinear")
    out_mask = rotate_about_center(mask, angle, "nearest")
    if flip:
        out_img = out_img[::-1].copy()
        out_mask = out_mask[::-1].copy()
    return np.clip(out_img, 0.0, 1.0), out_mask


def rotated_crop_geometry(
    phi: float, u_h: float, u_w: float, side: int = 448, crop: int = 224
):
    """Window placement for the rotated-crop recipe.

    Evaluates, for rotation angle ``phi`` and uniform draws ``u_h, u_w``:

        h0 = crop * cos(phi) * sin(phi)
        w0 = (side - crop * cos(phi)) * cos(phi)
        ell = side - crop * (sin(phi) + cos(phi))

    samples the corner from ``[h0, h0 + ell] x [w0, w0 + ell]``, and
    clamps it so the ``crop x crop`` window fits the padded canvas of
    side ``ceil(side * (|sin(phi)| + |cos(phi)|))``.  The published
    formulas assume angles in the first quadrant and can place the
    unclamped corner outside the canvas elsewhere (and even at phi = 0,
    where w ranges up to ``side``); the clamp is what guarantees
    containment.  Returns ``(h0, w0, ell, canvas_side, top, left)``.
    """
    h0 = crop * math.cos(phi) * math.sin(phi)
    w0 = (side - crop * math.cos(phi)) * math.cos(phi)
    ell = side - crop * (math.sin(phi) + math.cos(phi))
    canvas = math.ceil(side * (abs(math.sin(phi)) + abs(math.cos(phi))))
    top = min(max(int(math.floor(h0 + u_h * ell)), 0), canvas - crop)
    left = min(max(int(math.floor(w0 + u_w * ell)), 0), canvas - crop)
    return h0, w0, ell, canvas, top, left


def rotated_crop_idrid(
    img, mask, seed, jitter: JitterParams = JitterParams()
) -> tuple[np.ndarray, np.ndarray]:
    """448x448 -> 224x224 rotated training crop for retina slices.

    Rotates by an angle uniform over [0, 2*pi) into a zero-padded square
    canvas, samples the window corner from the interval formulas of
    :func:`rotated_crop_geometry` (clamped into the canvas), flips
    vertically with probability 0.5, and color-jitters the image only.
    Draws, in order: angle, corner row, corner col, flip, then the four
    jitter factors.
    """
    img = _check_image(img)
    mask = _check_mask(mask, img.shape)
    if img.shape[:2] != (448, 448):
        raise ShapeMismatchError(
            f"rotated crop expects a 448x448 input, got {img.shape[:2]}"
        )
    rng = _as_stream(seed, _ROLE_ROTATED_CROP)
    phi = rng.uniform(0.0, 2.0 * math.pi)
    u_h = rng.uniform()
    u_w = rng.uniform()
    *_, canvas, top, left = rotated_crop_geometry(phi, u_h, u_w)
    rot_img = rotate_about_center(img, phi, "bilinear", out_shape=(canvas, canvas))
    rot_mask = rotate_about_center(mask, phi, "nearest", out_shape=(canvas, canvas))
    out_img = rot_img[top : top + 224, left : left + 224]
    out_mask = rot_mask[top : top + 224, left : left + 224]
    if rng.uniform() < 0.5:
        out_img = out_img[::-1]
        out_mask = out_mask[::-1]
    out_img = color_jitter(out_img, jitter, rng)
    return out_img, out_mask.copy()


def resize_bilinear(arr, out_shape) -> np.ndarray:
    """Bilinear resize with half-pixel centers and edge clamping.

    Resizing to the input shape is the identity.  Works on 2-D and 3-D
    arrays (channels last).
    """
    a = np.asarray(arr, dtype=np.float64)
    src_h, src_w = a.shape[:2]
    out_h, out_w = out_shape
    sy = np.clip((np.arange(out_h) + 0.5) * (src_h / out_h) - 0.5, 0.0, src_h - 1)
    sx = np.clip((np.arange(out_w) + 0.5) * (src_w / out_w) - 0.5, 0.0, src_w - 1)
    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    y1 = np.minimum(y0 + 1, src_h - 1)
    x1 = np.minimum(x0 + 1, src_w - 1)
    fy = (sy - y0)[:, None]
    fx = (sx - x0)[None, :]
    if a.ndim == 3:
        fy = fy[..., None]
        fx = fx[..., None]
    top = (1.0 - fx) * a[y0][:, x0] + fx * a[y0][:, x1]
    bottom = (1.0 - fx) * a[y1][:, x0] + fx * a[y1][:, x1]
    return (1.0 - fy) * top + fy * bottom


def crop_shape_for_area(height: int, width: int, area: float) -> tuple[int, int]:
    """Crop dimensions covering relative area ``area`` at the source aspect ratio."""
    scale = math.sqrt(area)
    return max(1, round(height * scale)), max(1, round(width * scale))


def random_resized_crop(
    img, seed, area_range: tuple[float, float] = (0.8, 1.0), out_size: int = 224
) -> np.ndarray:
    """Crop a uniform relative area (aspect preserved), resize to ``out_size``.

    Draws, in order: relative area, corner row, corner col.
    """
    img = _check_image(img)
    rng = _as_stream(seed, _ROLE_RESIZED_CROP)
    return _resized_crop_core(img, rng, area_range, out_size)


def _resized_crop_core(img, rng, area_range, out_size):
    height, width = img.shape[:2]
    area = rng.uniform(*area_range)
    crop_h, crop_w = crop_shape_for_area(height, width, area)
    top = rng.randint(height - crop_h + 1)
    left = rng.randint(width - crop_w + 1)
    crop = img[top : top + crop_h, left : left + crop_w]
    return np.clip(resize_bilinear(crop, (out_size, out_size)), 0.0, 1.0)


def mixup(img1, img2, lab1, lab2, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Convex blend of two samples: ``lam * first + (1 - lam) * second``."""
    img1 = _check_image(img1)
    img2 = _check_image(img2)
    lab1 = _check_label(lab1)
    lab2 = _check_label(lab2)
    if img1.shape != img2.shape or lab1.shape != lab2.shape:
        raise ShapeMismatchError("mixup inputs must have identical shapes")
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"mixing coefficient must be in [0, 1], got {lam}")
    img = lam * img1 + (1.0 - lam) * img2
    lab = lam * lab1 + (1.0 - lam) * lab2
    return np.clip(img, 0.0, 1.0), lab


def cutmix_box(img1, img2, lab1, lab2, box) -> tuple[np.ndarray, np.ndarray]:
    """CutMix with an explicit ``(top, left, bottom, right)`` rectangle.

    The rectangle of the first image is replaced by the second image's
    pixels and the labels are mixed by the realized area fraction.
    """
    img1 = _check_image(img1)
    img2 = _check_image(img2)
    lab1 = _check_label(lab1)
    lab2 = _check_label(lab2)
    if img1.shape != img2.shape or lab1.shape != lab2.shape:
        raise ShapeMismatchError("cutmix inputs must have identical shapes")
    top, left, bottom, right = box
    height, width = img1.shape[:2]
    if not (0 <= top <= bottom <= height and 0 <= left <= right <= width):
        raise ValueError(f"box {box} does not fit a {height}x{width} image")
    out = img1.copy()
    out[top:bottom, left:right] = img2[top:bottom, left:right]
    frac = (bottom - top) * (right - left) / (height * width)
    lab = (1.0 - frac) * lab1 + frac * lab2
    return out, lab


def cutmix(img1, img2, lab1, lab2, seed) -> tuple[np.ndarray, np.ndarray]:
    """Paste a random rectangle of the second image into the first.

    The kept fraction ``lam`` is uniform on [0, 1); the pasted rectangle
    has relative side ``sqrt(1 - lam)``, is centered on a uniform pixel,
    and is clipped at the borders.  Labels are mixed by the realized
    area fraction.  Draws, in order: lam, center row, center col.
    """
    rng = _as_stream(seed, _ROLE_CUTMIX)
    return _cutmix_core(img1, img2, lab1, lab2, rng)


def _cutmix_core(img1, img2, lab1, lab2, rng):
    height, width = np.asarray(img1).shape[:2]
    lam = rng.uniform()
    ratio = math.sqrt(1.0 - lam)
    cut_h = round(height * ratio)
    cut_w = round(width * ratio)
    cy = rng.randint(height)
    cx = rng.randint(width)
    top = max(cy - cut_h // 2, 0)
    bottom = min(cy - cut_h // 2 + cut_h, height)
    left = max(cx - cut_w // 2, 0)
    right = min(cx - cut_w // 2 + cut_w, width)
    if bottom < top:
        bottom = top
    if right < left:
        right = left
    return cutmix_box(img1, img2, lab1, lab2, (top, left, bottom, right))


def erasing_extent(area: float, ratio: float) -> tuple[float, float]:
    """Relative height and width of an erased rectangle, each capped at 1."""
    return min(1.0, math.sqrt(area * ratio)), min(1.0, math.sqrt(area / ratio))


def random_erasing(img, seed, probability: float = ERASING_PROBABILITY) -> np.ndarray:
    """Blacken a random rectangle with the given probability.

    When the gate draw is at most ``probability``: relative area S and
    aspect ratio r are drawn uniformly from (0.02, 0.33) and (0.3, 3.3),
    the rectangle gets relative height sqrt(S*r) and width sqrt(S/r)
    (each capped at 1), is placed uniformly inside the image, and is set
    to 0.  Draws, in order: gate, S, r, corner row, corner col (the last
    four only when the gate passes).
    """
    img = _check_image(img)
    rng = _as_stream(seed, _ROLE_ERASING)
    return _erasing_core(img, rng, probability)


def _erasing_core(img, rng, probability):
    if rng.uniform() > probability:
        return img.copy()
    height, width = img.shape[:2]
    area = rng.uniform(*ERASING_AREA_RANGE)
    ratio = rng.uniform(*ERASING_RATIO_RANGE)
    rel_h, rel_w = erasing_extent(area, ratio)
    erase_h = min(height, round(rel_h * height))
    erase_w = min(width, round(rel_w * width))
    top = rng.randint(height - erase_h + 1)
    left = rng.randint(width - erase_w + 1)
    out = img.copy()
    out[top : top + erase_h, left : left + erase_w] = 0.0
    return out


def smooth_labels(lab, coefficient: float = LABEL_SMOOTHING) -> np.ndarray:
    """Label smoothing: ``(1 - c) * lab + c / K``."""
    lab = _check_label(lab)
    return (1.0 - coefficient) * lab + coefficient / lab.shape[0]


def imagenet_augment(
    img,
    lab,
    mode: str,
    seed,
    pair_provider=None,
    policy_hook=None,
    out_size: int = 224,
) -> tuple[np.ndarray, np.ndarray]:
    """ImageNet pretraining augmentation pipeline.

    Both modes crop a uniform relative area in [0.8, 1] (aspect
    preserved), resize to ``out_size``, and horizontally flip with
    probability 0.5.  ``"advanced"`` then applies ``policy_hook``
    (identity when None; the slot for learned augmentation policies),
    with probability 0.9 mixes in a second sample from ``pair_provider``
    (CutMix when the mixing draw is at most 0.5, otherwise mixup with a
    Beta(0.8, 0.8) coefficient), and erases a random rectangle with
    probability 0.25.  Label smoothing with coefficient 0.1 is applied
    last in both modes.

    ``pair_provider`` is called with the pipeline's stream and must
    return an ``(image, label)`` pair matching the post-crop shapes; it
    is required in advanced mode.  ``policy_hook`` is called as
    ``hook(image, stream)`` and must return an image of the same shape.
    """
    if mode not in ("simple", "advanced"):
        raise ValueError(f"unknown mode {mode!r}, expected 'simple' or 'advanced'")
    if mode == "advanced" and pair_provider is None:
        raise ValueError("advanced mode requires a pair_provider callback")
    img = _check_image(img)
    lab = _check_label(lab)
    rng = _as_stream(seed, _ROLE_IMAGENET)

    out = _resized_crop_core(img, rng, (0.8, 1.0), out_size)
    if rng.uniform() < 0.5:
        out = out[:, ::-1].copy()
    out_lab = lab.copy()

    if mode == "advanced":
        if policy_hook is not None:
            out = np.clip(_check_image(policy_hook(out, rng)), 0.0, 1.0)
        xi = rng.uniform()
        if xi <= 0.9:
            img2, lab2 = pair_provider(rng)
            if xi <= 0.5:
                out, out_lab = _cutmix_core(out, img2, out_lab, lab2, rng)
            else:
                lam = float(betaincinv(MIXUP_BETA, MIXUP_BETA, rng.uniform()))
                out, out_lab = mixup(out, img2, out_lab, lab2, lam)
        out = _erasing_core(out, rng, ERASING_PROBABILITY)

    out_lab = smooth_labels(out_lab, LABEL_SMOOTHING)
    return np.clip(out, 0.0, 1.0), out_lab
