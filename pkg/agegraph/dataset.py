import csv
import hashlib
import json
import logging as log
import os
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from PIL import Image

from .common import ConfigError, DataError, floor_count, make_rng
from .graph import ImageSample

MANIFEST_FORMAT = 'agegraph-manifest'
MIN_AGE, MAX_AGE = 0.0, 120.0
SPLITS = ('train', 'val', 'test')


class ManifestEntry(NamedTuple):
    path: str  # relative to the manifest root; the sample id
    age: float
    split: str = ''
    pixels: Optional[np.ndarray] = None  # in-memory images only


class DatasetManifest(NamedTuple):
    root: str
    entries: Tuple[ManifestEntry, ...]
    checksum: str  # sha256 of the label file
    image_size: int = 64
    errors: Tuple[str, ...] = ()


def read_image(path: str, size: int) -> np.ndarray:
    """
    Decodes any Pillow-readable file as 8-bit RGB, center-crops it to a
    square and resizes to size×size, returning values in [0, 1].
    """
    with Image.open(path) as im:
        im = im.convert('RGB')
        w, h = im.size
        side = min(w, h)
        left, top = (w - side) // 2, (h - side) // 2
        im = im.crop((left, top, left + side, top + side))
        if side != size:
            im = im.resize((size, size), Image.BILINEAR)
        return np.asarray(im, dtype=np.float64) / 255.0


def _checksum(path: str) -> str:
    with open(path, 'rb') as f:
        return hashlib.sha256(f.read()).hexdigest()


def _parse_age(raw: str, where: str) -> float:
    try:
        age = float(raw)
    except (TypeError, ValueError):
        raise DataError(f'{where}: age {raw!r} is not a number')
    if not MIN_AGE <= age <= MAX_AGE:
        raise DataError(f'{where}: age {age} outside [{MIN_AGE:g}, {MAX_AGE:g}]')
    return age


def _read_cache(cache: str, checksum: str, image_size: int) -> Optional[DatasetManifest]:
    try:
        with open(cache) as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError):
        return None
    if (data.get('format') != MANIFEST_FORMAT or data.get('checksum') != checksum
            or data.get('image_size') != image_size):
        log.info('manifest cache {} is stale, rebuilding'.format(cache))
        return None
    entries = tuple(ManifestEntry(e['path'], float(e['age']), e.get('split', ''))
                    for e in data['entries'])
    return DatasetManifest(data['root'], entries, checksum, image_size, tuple(data.get('errors', ())))


def load_manifest(labels_csv: str, image_root: str, image_size: int = 64,
                  cache: Optional[str] = None) -> DatasetManifest:
    """
    Reads a `filename,age` label file. Bad ages and duplicate paths abort with
    DataError; files that are missing or cannot be decoded are dropped and
    reported in `errors`. A `cache` file whose checksum matches the label
    file is reused instead of probing every image.
    """
    if not os.path.exists(labels_csv):
        raise DataError(f'label file {labels_csv} does not exist')
    checksum = _checksum(labels_csv)
    if cache is not None:
        cached = _read_cache(cache, checksum, image_size)
        if cached is not None:
            log.debug('using manifest cache {}'.format(cache))
            return cached

    entries: List[ManifestEntry] = []
    errors: List[str] = []
    seen = set()
    with open(labels_csv, newline='') as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {'filename', 'age'} <= set(reader.fieldnames):
            raise DataError(f'{labels_csv}: expected a header with columns filename,age')
        for lineno, row in enumerate(reader, start=2):
            where = f'{labels_csv}:{lineno}'
            name = (row['filename'] or '').strip()
            age = _parse_age(row['age'], where)
            if name in seen:
                raise DataError(f'{where}: duplicate image path {name}')
            seen.add(name)

            path = os.path.join(image_root, name)
            if not os.path.isfile(path):
                errors.append(f'{path}: missing file')
                continue
            try:
                read_image(path, image_size)
            except (OSError, ValueError) as e:
                errors.append(f'{path}: cannot decode image ({e})')
                continue
            entries.append(ManifestEntry(name, age))

    for err in errors:
        log.warning(err)
    manifest = DatasetManifest(image_root, tuple(entries), checksum, image_size, tuple(errors))
    if cache is not None:
        save_manifest(manifest, cache)
    return manifest


def save_manifest(manifest: DatasetManifest, path: str):
    data = {
        'format': MANIFEST_FORMAT,
        'root': manifest.root,
        'checksum': manifest.checksum,
        'image_size': manifest.image_size,
        'entries': [{'path': e.path, 'age': e.age, 'split': e.split} for e in manifest.entries],
        'errors': list(manifest.errors),
    }
    with open(path, 'w') as f:
        json.dump(data, f, indent=1)
        f.write('\n')


def synthetic_age(pixels: np.ndarray) -> float:
    """
    100 × the lowest spatial-frequency band of the gray image, i.e. the DC
    term of its 2-D spectrum normalized by area.
    """
    gray = pixels.mean(axis=2)
    if gray.size == 0:
        return 0.0
    return float(100.0 * np.fft.fft2(gray)[0, 0].real / gray.size)


def _blob_image(h: int, w: int, rng) -> np.ndarray:
    ys, xs = np.mgrid[0:h, 0:w]
    img = np.full((h, w, 3), rng.uniform(0.05, 0.6))
    for _ in range(rng.integers(2, 6)):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        sigma = rng.uniform(min(h, w) / 8, min(h, w) / 3)
        bump = np.exp(-((ys - cy)**2 + (xs - cx)**2) / (2 * sigma**2))
        tint = rng.uniform(0.8, 1.2, size=3)
        img += rng.uniform(-0.3, 0.4) * bump[:, :, None] * tint
    return np.clip(img, 0.0, 1.0)


def make_synthetic(count: int, h: int = 64, w: int = 64, seed: int = 0,
                   prefix: str = 'synthetic') -> DatasetManifest:
    """
    Smooth random blob images whose label is synthetic_age of their pixels,
    so the age is recoverable from patch statistics. Seeded.
    """
    if count < 1:
        raise ConfigError(f'synthetic sample count must be at least 1, got {count}')
    rng = make_rng(seed)
    entries = []
    for i in range(count):
        pixels = _blob_image(h, w, rng)
        entries.append(ManifestEntry(f'{prefix}-{seed}-{i:05d}', synthetic_age(pixels), '', pixels))
    labels = np.array([e.age for e in entries])
    checksum = hashlib.sha256(labels.tobytes()).hexdigest()
    return DatasetManifest('<synthetic>', tuple(entries), checksum, h)


def synthetic_splits(count: int, size: int = 64, seed: int = 0) -> Tuple[DatasetManifest, ...]:
    """
    `count` training images plus max(1, count // 5) validation and test
    images, each drawn from its own seed stream.
    """
    held_out = max(1, count // 5)
    return tuple(
        split_all(make_synthetic(n, size, size, 3 * seed + k, prefix=name), name)
        for k, (name, n) in enumerate(zip(SPLITS, (count, held_out, held_out))))


def split_all(manifest: DatasetManifest, name: str) -> DatasetManifest:
    return manifest._replace(entries=tuple(e._replace(split=name) for e in manifest.entries))


def split(manifest: DatasetManifest, fractions=(0.8, 0.1, 0.1), seed: int = 0) -> DatasetManifest:
    """
    Seeded shuffle, then contiguous train/val/test slices of ⌊f·n⌋ entries
    (test takes the remainder).
    """
    if len(fractions) != 3 or min(fractions) < 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f'split fractions must be three non-negative values summing to 1, got {fractions}')
    n = len(manifest.entries)
    order = make_rng(seed).permutation(n)
    n_train = floor_count(fractions[0], n)
    n_val = min(floor_count(fractions[1], n), n - n_train)
    names = np.array(['test'] * n, dtype=object)
    names[order[:n_train]] = 'train'
    names[order[n_train:n_train + n_val]] = 'val'

    counts = {s: int(np.sum(names == s)) for s in SPLITS}
    for s, frac in zip(SPLITS, fractions):
        if counts[s] == 0 and frac > 0:
            log.warning('{} split is empty ({} of {} entries)'.format(s, frac, n))
    log.debug('split {} entries into {}'.format(n, counts))
    return manifest._replace(
        entries=tuple(e._replace(split=str(s)) for e, s in zip(manifest.entries, names)))


def samples(manifest: DatasetManifest, split_name: Optional[str] = None) -> List[ImageSample]:
    """
    ImageSamples of one split (all entries when `split_name` is None), in
    manifest order. Files are decoded on demand.
    """
    out = []
    for e in manifest.entries:
        if split_name is not None and e.split != split_name:
            continue
        pixels = e.pixels
        if pixels is None:
            pixels = read_image(os.path.join(manifest.root, e.path), manifest.image_size)
        out.append(ImageSample(pixels, e.age, e.path))
    return out


def merge(manifests: Sequence[DatasetManifest]) -> DatasetManifest:
    """Concatenates in-memory manifests (e.g. the synthetic splits)."""
    first = manifests[0]
    entries = tuple(e for m in manifests for e in m.entries)
    digest = hashlib.sha256(''.join(m.checksum for m in manifests).encode()).hexdigest()
    return DatasetManifest(first.root, entries, digest, first.image_size)
