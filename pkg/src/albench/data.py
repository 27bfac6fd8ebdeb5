"""Domain types and file IO: patch records, dataset manifests, image/mask files.

Conventions (shared with every other module and the wire protocol):
  - images are 8-bit lossless PNG, grayscale or RGB, normalized to [0, 1]
    on read;
  - masks are 8-bit grayscale PNG, 0 = healthy, any nonzero pixel = faulty;
  - a record is "faulty" iff its mask contains at least one set pixel;
  - manifest ids are assigned once and never reused; all cross-module
    references are by id.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from PIL import Image

from .validation import check_image, check_mask

MANIFEST_ROLES = ("pool", "test")


class ManifestError(ValueError):
    """Raised on malformed or inconsistent manifests."""


@dataclass(frozen=True)
class PatchRecord:
    """One image patch with its binary mask and derived faulty flag."""

    id: int
    image: np.ndarray  # float64, channels x H x W, values in [0, 1]
    mask: np.ndarray  # uint8, H x W, values in {0, 1}
    faulty: bool

    def __post_init__(self):
        if self.id < 0:
            raise ValueError(f"id must be non-negative, got {self.id}")
        image = check_image(self.image)
        mask = check_mask(self.mask)
        if image.shape[1:] != mask.shape:
            raise ValueError(
                f"record {self.id}: image {image.shape[1:]} and mask {mask.shape} disagree"
            )
        expected = bool(mask.sum() > 0)
        if self.faulty != expected:
            raise ValueError(
                f"record {self.id}: faulty flag {self.faulty} contradicts mask (sum>0 is {expected})"
            )
        object.__setattr__(self, "image", image)
        object.__setattr__(self, "mask", mask)

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @classmethod
    def from_arrays(cls, id: int, image: np.ndarray, mask: np.ndarray) -> "PatchRecord":
        mask = check_mask(mask)
        return cls(id=id, image=image, mask=mask, faulty=bool(mask.sum() > 0))


@dataclass(frozen=True)
class ManifestEntry:
    id: int
    image_path: Path
    mask_path: Path
    faulty: bool


@dataclass(frozen=True)
class DatasetManifest:
    """Ordered collection of patch entries with a role (pool or test).

    Entries are kept sorted by id; paths are absolute after loading.
    """

    entries: tuple[ManifestEntry, ...]
    role: str
    path: Path | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.role not in MANIFEST_ROLES:
            raise ManifestError(f"role must be one of {MANIFEST_ROLES}, got {self.role!r}")
        ids = [e.id for e in self.entries]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})[0]
            raise ManifestError(f"duplicate id {dup}")
        if ids != sorted(ids):
            object.__setattr__(
                self, "entries", tuple(sorted(self.entries, key=lambda e: e.id))
            )

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def ids(self) -> list[int]:
        return [e.id for e in self.entries]

    @property
    def n_faulty(self) -> int:
        return sum(1 for e in self.entries if e.faulty)

    @property
    def realized_faulty_fraction(self) -> Fraction:
        if not self.entries:
            return Fraction(0)
        return Fraction(self.n_faulty, len(self.entries))

    def entry(self, id: int) -> ManifestEntry:
        i = _bisect_id(self.entries, id)
        if i is None:
            raise KeyError(f"unknown id {id}")
        return self.entries[i]

    def __contains__(self, id: int) -> bool:
        return _bisect_id(self.entries, id) is not None

    def subset(self, ids, role: str | None = None) -> "DatasetManifest":
        """New manifest restricted to the given ids (same underlying files)."""
        picked = tuple(self.entry(i) for i in sorted(ids))
        return DatasetManifest(entries=picked, role=role or self.role)


def _bisect_id(entries: tuple[ManifestEntry, ...], id: int):
    lo, hi = 0, len(entries)
    while lo < hi:
        mid = (lo + hi) // 2
        if entries[mid].id < id:
            lo = mid + 1
        else:
            hi = mid
    if lo < len(entries) and entries[lo].id == id:
        return lo
    return None


# ---------------------------------------------------------------------------
# image / mask files


def write_image(image: np.ndarray, path: str | Path) -> None:
    """Write a [0,1] float image as 8-bit PNG (grayscale or RGB)."""
    arr = check_image(image)
    data = np.rint(arr * 255.0).clip(0, 255).astype(np.uint8)
    if data.shape[0] == 1:
        Image.fromarray(data[0], mode="L").save(path, format="PNG")
    else:
        Image.fromarray(np.moveaxis(data, 0, 2), mode="RGB").save(path, format="PNG")


def write_mask(mask: np.ndarray, path: str | Path) -> None:
    """Write a {0,1} mask as 8-bit grayscale PNG with faulty pixels at 255."""
    arr = check_mask(mask)
    Image.fromarray(arr * np.uint8(255), mode="L").save(path, format="PNG")


def read_image(path: str | Path) -> np.ndarray:
    """Read an 8-bit PNG into channels x H x W floats in [0, 1]."""
    try:
        with Image.open(path) as im:
            im = im.convert("L") if im.mode in ("L", "I;16", "1") else im.convert("RGB")
            arr = np.asarray(im, dtype=np.float64) / 255.0
    except (OSError, SyntaxError) as exc:
        raise ManifestError(f"undecodable image file {path}: {exc}") from exc
    if arr.ndim == 2:
        return arr[None, :, :]
    return np.moveaxis(arr, 2, 0)


def read_mask(path: str | Path) -> np.ndarray:
    """Read a mask PNG; any nonzero pixel becomes 1."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("L"))
    except (OSError, SyntaxError) as exc:
        raise ManifestError(f"undecodable mask file {path}: {exc}") from exc
    return (arr != 0).astype(np.uint8)


def read_patch(manifest: DatasetManifest, id: int) -> PatchRecord:
    """Decode one record; image normalized to [0,1], mask binarized."""
    entry = manifest.entry(id)
    image = read_image(entry.image_path)
    mask = read_mask(entry.mask_path)
    if image.shape[1:] != mask.shape:
        raise ManifestError(
            f"record {id}: image/mask shape mismatch {image.shape[1:]} vs {mask.shape}"
        )
    return PatchRecord(id=id, image=image, mask=mask, faulty=bool(mask.sum() > 0))


# ---------------------------------------------------------------------------
# manifest files

def save_manifest(manifest: DatasetManifest, path: str | Path) -> DatasetManifest:
    """Write the manifest JSON with paths relative to its directory."""
    path = Path(path).resolve()
    base = path.parent
    payload = {
        "role": manifest.role,
        "entries": [
            {
                "id": e.id,
                "image": _relpath(e.image_path, base),
                "mask": _relpath(e.mask_path, base),
                "faulty": e.faulty,
            }
            for e in manifest.entries
        ],
    }
    base.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")
    return DatasetManifest(entries=manifest.entries, role=manifest.role, path=path)


def _relpath(target: Path, base: Path) -> str:
    import os

    return os.path.relpath(Path(target).resolve(), base).replace("\\", "/")


def load_manifest(path: str | Path, verify: bool = True) -> DatasetManifest:
    """Load a manifest JSON, resolving paths and enforcing invariants.

    With verify=True (default), every referenced file must exist, image and
    mask dimensions must agree, and stored faulty flags must match the mask
    content; missing faulty flags are recomputed from the masks.
    """
    path = Path(path).resolve()
    if not path.is_file():
        raise ManifestError(f"manifest file not found: {path}")
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(payload, dict) or "entries" not in payload or "role" not in payload:
        raise ManifestError(f"{path}: manifest must be an object with 'role' and 'entries'")
    role = payload["role"]
    if role not in MANIFEST_ROLES:
        raise ManifestError(f"{path}: bad role {role!r}")
    base = path.parent
    entries: list[ManifestEntry] = []
    seen: set[int] = set()
    for raw in payload["entries"]:
        try:
            id = int(raw["id"])
            image_rel = raw["image"]
            mask_rel = raw["mask"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"{path}: malformed entry {raw!r}: {exc}") from exc
        if id < 0:
            raise ManifestError(f"{path}: id {id}: ids must be non-negative")
        if id in seen:
            raise ManifestError(f"{path}: duplicate id {id}")
        seen.add(id)
        image_path = (base / image_rel).resolve()
        mask_path = (base / mask_rel).resolve()
        declared = raw.get("faulty")
        if verify:
            faulty = _verify_entry(id, image_path, mask_path, declared)
        else:
            if declared is None:
                raise ManifestError(f"{path}: id {id}: faulty flag absent (verify=False)")
            faulty = bool(declared)
        entries.append(
            ManifestEntry(id=id, image_path=image_path, mask_path=mask_path, faulty=faulty)
        )
    return DatasetManifest(entries=tuple(entries), role=role, path=path)


def _verify_entry(id: int, image_path: Path, mask_path: Path, declared) -> bool:
    if not image_path.is_file():
        raise ManifestError(f"id {id}: missing image file {image_path}")
    if not mask_path.is_file():
        raise ManifestError(f"id {id}: missing mask file {mask_path}")
    try:
        with Image.open(image_path) as im:
            image_size = im.size
        with Image.open(mask_path) as mm:
            mask_size = mm.size
    except (OSError, SyntaxError) as exc:
        raise ManifestError(f"id {id}: undecodable file: {exc}") from exc
    if image_size != mask_size:
        raise ManifestError(
            f"id {id}: image/mask shape mismatch {image_size} vs {mask_size}"
        )
    actual = bool(read_mask(mask_path).sum() > 0)
    if declared is not None and bool(declared) != actual:
        raise ManifestError(
            f"id {id}: faulty flag mismatch (declared {bool(declared)}, mask says {actual})"
        )
    return actual
