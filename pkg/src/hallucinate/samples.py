"""Sample-image loading: from a local directory or from a JSON manifest
produced by an external fetcher, with a guard against samples that are just
the input image itself."""

import json
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import NoSamplesError
from .imgcore import load_image, resample_area, resample_bilinear

DUPLICATE_RMS = 1.0


@dataclass
class SampleEntry:
    image: np.ndarray
    source_id: str          # file path or source URL
    rank: int = 0


@dataclass
class SampleSet:
    entries: list = field(default_factory=list)
    keyword: str = ""
    query_time: str = ""

    def __len__(self):
        return len(self.entries)


def _resize_to(img, w, h):
    if img.shape[0] >= h and img.shape[1] >= w:
        return resample_area(img, w, h)
    return resample_bilinear(img, w, h)


def is_duplicate(sample, base):
    """Whether a sample is effectively the input image: RMS distance below
    1.0 after resizing the sample to the input's dims."""
    h, w = base.shape[:2]
    resized = _resize_to(sample, w, h)
    return float(np.sqrt(np.mean((resized - base) ** 2))) < DUPLICATE_RMS


def load_local_samples(directory, base, m_max=8):
    """Up to m_max decodable images from a directory, in lexicographic
    filename order; near-copies of the input are skipped."""
    entries = []
    for name in sorted(os.listdir(directory)):
        if len(entries) >= m_max:
            break
        path = os.path.join(directory, name)
        if not os.path.isfile(path):
            continue
        try:
            img = load_image(path)
        except Exception:
            continue
        if base is not None and is_duplicate(img, base):
            warnings.warn(f"sample {name} matches the input image; skipped",
                          RuntimeWarning)
            continue
        entries.append(SampleEntry(image=img, source_id=path,
                                   rank=len(entries)))
    if not entries:
        raise NoSamplesError(f"no usable sample images in {directory}")
    return SampleSet(entries=entries)


def load_manifest_samples(manifest_path, base=None, m_max=None):
    """Samples listed in a JSON manifest, in rank order.

    The manifest has the shape
    {"keyword": ..., "query_time": ..., "entries":
     [{"rank": 1, "path": ..., "source_url": ...}, ...]};
    relative paths resolve against the manifest's directory.  Missing or
    undecodable files are skipped with a warning."""
    with open(manifest_path) as f:
        data = json.load(f)
    root = os.path.dirname(os.path.abspath(manifest_path))
    entries = []
    for item in sorted(data.get("entries", []), key=lambda e: e["rank"]):
        if m_max is not None and len(entries) >= m_max:
            break
        path = item["path"]
        if not os.path.isabs(path):
            path = os.path.join(root, path)
        try:
            img = load_image(path)
        except Exception:
            warnings.warn(f"manifest entry rank {item['rank']} unreadable "
                          f"({item['path']}); skipped", RuntimeWarning)
            continue
        if base is not None and is_duplicate(img, base):
            warnings.warn(f"manifest entry rank {item['rank']} matches the "
                          f"input image; skipped", RuntimeWarning)
            continue
        entries.append(SampleEntry(image=img,
                                   source_id=item.get("source_url", path),
                                   rank=item["rank"]))
    if not entries:
        raise NoSamplesError(f"no usable sample images in {manifest_path}")
    return SampleSet(entries=entries, keyword=data.get("keyword", ""),
                     query_time=data.get("query_time", ""))
