"""Synthetic defect images, patchification, and imbalance-controlled pools.

The generator stands in for the source datasets at desk scale: grayscale
noise backgrounds around mid-gray, with elliptical intensity-shifted blobs
as defects. Everything is a pure function of its config and seed; per-image
randomness derives from (seed, image index) so generation order never
matters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import (
    DatasetManifest,
    ManifestEntry,
    PatchRecord,
    read_image,
    read_mask,
    save_manifest,
    write_image,
    write_mask,
)
from .seeding import derive_seed


class PoolError(ValueError):
    """Raised when a pool spec cannot be satisfied."""


def round_half_away(x: float) -> int:
    """round-half-away-from-zero, the pinned stratum-count rounding."""
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


@dataclass(frozen=True)
class SynthConfig:
    n_images: int = 200
    height: int = 48
    width: int = 48
    defect_probability: float = 0.5
    defect_count_range: tuple[int, int] = (1, 2)
    defect_radius_range: tuple[int, int] = (2, 5)
    background_noise_sd: float = 0.08
    defect_contrast: float = 0.18
    seed: int = 0

    def __post_init__(self):
        if self.n_images <= 0 or self.height <= 0 or self.width <= 0:
            raise ValueError("n_images, height and width must be positive")
        if not 0.0 <= self.defect_probability <= 1.0:
            raise ValueError("defect_probability must lie in [0, 1]")
        lo, hi = self.defect_count_range
        if lo > hi or lo < 0:
            raise ValueError(f"empty defect_count_range {self.defect_count_range}")
        rlo, rhi = self.defect_radius_range
        if rlo > rhi or rlo < 1:
            raise ValueError(f"empty defect_radius_range {self.defect_radius_range}")
        if 2 * rhi >= min(self.height, self.width):
            raise ValueError(
                f"defect radius {rhi} too large for {self.height}x{self.width} image"
            )
        if self.background_noise_sd < 0:
            raise ValueError("background_noise_sd must be >= 0")
        if not 0.0 < self.defect_contrast <= 1.0:
            raise ValueError("defect_contrast must lie in (0, 1]")


@dataclass(frozen=True)
class PoolSpec:
    target_faulty_fraction: float
    size: int
    seed: int
    role: str = "pool"

    def __post_init__(self):
        if not 0.0 <= self.target_faulty_fraction <= 1.0:
            raise ValueError("target_faulty_fraction must lie in [0, 1]")
        if self.size <= 0:
            raise ValueError("size must be positive")
        if self.role not in ("pool", "test"):
            raise ValueError(f"role must be 'pool' or 'test', got {self.role!r}")

    @property
    def n_faulty(self) -> int:
        return round_half_away(self.size * self.target_faulty_fraction)

    @property
    def n_healthy(self) -> int:
        return self.size - self.n_faulty


def _render_synthetic(index: int, config: SynthConfig) -> tuple[np.ndarray, np.ndarray]:
    """Render one image+mask pair; randomness depends only on (seed, index)."""
    rng = np.random.default_rng(derive_seed(config.seed, index, "synth-image"))
    h, w = config.height, config.width
    image = 0.5 + config.background_noise_sd * rng.standard_normal((h, w))
    mask = np.zeros((h, w), dtype=np.uint8)
    if rng.random() < config.defect_probability:
        lo, hi = config.defect_count_range
        n_blobs = int(rng.integers(lo, hi + 1))
        for _ in range(n_blobs):
            _stamp_ellipse(image, mask, rng, config)
    np.clip(image, 0.0, 1.0, out=image)
    return image[None, :, :], mask


def _stamp_ellipse(image, mask, rng, config: SynthConfig) -> None:
    rlo, rhi = config.defect_radius_range
    a = float(rng.uniform(rlo, rhi))
    b = float(rng.uniform(rlo, rhi))
    r = int(math.ceil(max(a, b)))
    h, w = mask.shape
    cy = float(rng.uniform(r, h - 1 - r))
    cx = float(rng.uniform(r, w - 1 - r))
    theta = float(rng.uniform(0.0, math.pi))
    yy, xx = np.mgrid[0:h, 0:w]
    dy, dx = yy - cy, xx - cx
    u = dx * math.cos(theta) + dy * math.sin(theta)
    v = -dx * math.sin(theta) + dy * math.cos(theta)
    inside = (u / a) ** 2 + (v / b) ** 2 <= 1.0
    # the center pixel is always inside, so a stamped blob is never empty
    image[inside] += config.defect_contrast
    mask[inside] = 1


def generate_synthetic(config: SynthConfig, out_dir: str | Path) -> DatasetManifest:
    """Generate n_images records under out_dir and write manifest.json."""
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    masks_dir = out_dir / "masks"
    images_dir.mkdir(parents=True, exist_ok=True)
    masks_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(config.n_images):
        image, mask = _render_synthetic(i, config)
        image_path = images_dir / f"img{i:05d}.png"
        mask_path = masks_dir / f"mask{i:05d}.png"
        write_image(image, image_path)
        write_mask(mask, mask_path)
        entries.append(
            ManifestEntry(
                id=i,
                image_path=image_path.resolve(),
                mask_path=mask_path.resolve(),
                faulty=bool(mask.sum() > 0),
            )
        )
    manifest = DatasetManifest(entries=tuple(entries), role="pool")
    return save_manifest(manifest, out_dir / "manifest.json")


def patchify(
    manifest: DatasetManifest, patch_h: int, patch_w: int, out_dir: str | Path
) -> DatasetManifest:
    """Tile every record into non-overlapping patch_h x patch_w patches.

    Patch ids are assigned sequentially in sorted (source id, row, col)
    order; the filenames spell out the source position.
    """
    if patch_h <= 0 or patch_w <= 0:
        raise ValueError("patch dimensions must be positive")
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    masks_dir = out_dir / "masks"
    images_dir.mkdir(parents=True, exist_ok=True)
    masks_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    next_id = 0
    for entry in manifest.entries:
        image = read_image(entry.image_path)
        mask = read_mask(entry.mask_path)
        h, w = mask.shape
        if h % patch_h != 0 or w % patch_w != 0:
            raise ValueError(
                f"record {entry.id}: size {h}x{w} not divisible by patch {patch_h}x{patch_w}"
            )
        for row in range(h // patch_h):
            for col in range(w // patch_w):
                ys = slice(row * patch_h, (row + 1) * patch_h)
                xs = slice(col * patch_w, (col + 1) * patch_w)
                sub_image = image[:, ys, xs]
                sub_mask = mask[ys, xs]
                stem = f"img{entry.id:05d}_r{row}_c{col}"
                image_path = images_dir / f"{stem}.png"
                mask_path = masks_dir / f"{stem}_mask.png"
                write_image(sub_image, image_path)
                write_mask(sub_mask, mask_path)
                entries.append(
                    ManifestEntry(
                        id=next_id,
                        image_path=image_path.resolve(),
                        mask_path=mask_path.resolve(),
                        faulty=bool(sub_mask.sum() > 0),
                    )
                )
                next_id += 1
    patched = DatasetManifest(entries=tuple(entries), role=manifest.role)
    return save_manifest(patched, out_dir / "manifest.json")


def _split_strata(manifest: DatasetManifest) -> tuple[list[int], list[int]]:
    faulty = [e.id for e in manifest.entries if e.faulty]
    healthy = [e.id for e in manifest.entries if not e.faulty]
    return faulty, healthy


def _sample_stratified(
    faulty: list[int], healthy: list[int], spec: PoolSpec
) -> list[int]:
    nf, nh = spec.n_faulty, spec.n_healthy
    if nf > len(faulty):
        raise PoolError(
            f"need {nf} faulty records but only {len(faulty)} available "
            f"(shortfall {nf - len(faulty)})"
        )
    if nh > len(healthy):
        raise PoolError(
            f"need {nh} healthy records but only {len(healthy)} available "
            f"(shortfall {nh - len(healthy)})"
        )
    rng = np.random.default_rng(derive_seed(spec.seed, spec.role, "stratified-pool"))
    picked_f = rng.choice(np.asarray(sorted(faulty), dtype=np.int64), size=nf, replace=False)
    picked_h = rng.choice(np.asarray(sorted(healthy), dtype=np.int64), size=nh, replace=False)
    return sorted(int(i) for i in np.concatenate([picked_f, picked_h]))


def build_pool(source: DatasetManifest, spec: PoolSpec) -> DatasetManifest:
    """Stratified uniform sample hitting spec.target_faulty_fraction exactly
    (after round-half-away rounding); references the same underlying files."""
    faulty, healthy = _split_strata(source)
    ids = _sample_stratified(faulty, healthy, spec)
    return source.subset(ids, role=spec.role)


def build_disjoint_pools(
    source: DatasetManifest, pool_spec: PoolSpec, test_spec: PoolSpec
) -> tuple[DatasetManifest, DatasetManifest]:
    """Build id-disjoint pool and test manifests from one source."""
    faulty, healthy = _split_strata(source)
    need_f = pool_spec.n_faulty + test_spec.n_faulty
    need_h = pool_spec.n_healthy + test_spec.n_healthy
    problems = []
    if need_f > len(faulty):
        problems.append(f"faulty shortfall {need_f - len(faulty)} (need {need_f}, have {len(faulty)})")
    if need_h > len(healthy):
        problems.append(f"healthy shortfall {need_h - len(healthy)} (need {need_h}, have {len(healthy)})")
    if problems:
        raise PoolError("insufficient records for disjoint pools: " + "; ".join(problems))
    pool_ids = _sample_stratified(faulty, healthy, pool_spec)
    taken = set(pool_ids)
    rest_f = [i for i in faulty if i not in taken]
    rest_h = [i for i in healthy if i not in taken]
    test_ids = _sample_stratified(rest_f, rest_h, test_spec)
    pool = source.subset(pool_ids, role="pool")
    test = source.subset(test_ids, role="test")
    return pool, test
