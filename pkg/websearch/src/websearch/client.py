"""Reverse-image-search sample fetching.

A driver turns a query (image plus optional keyword) into ranked results;
fetch_samples copies the result images into a samples directory and writes
the manifest consumed by the upsampling pipeline:

    {"keyword": str, "query_time": ISO-8601 str,
     "entries": [{"rank": int, "path": str, "source_url": str|null}]}

The fixture driver serves results from a local directory, deterministic and
fully offline, so tests never depend on a live search service."""

import datetime
import json
import os
import shutil
import warnings
from dataclasses import dataclass, field

import numpy as np
from PIL import Image


@dataclass
class QuerySpec:
    image_path: str
    keyword: str = ""
    m: int = 8
    output_dir: str = "samples"

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if not os.path.isfile(self.image_path):
            raise ValueError(f"query image not readable: {self.image_path}")


@dataclass
class SearchResult:
    rank: int
    path: str            # local file holding the image
    source_url: str = None


class NoResultsError(Exception):
    pass


class FixtureDriver:
    """Offline driver: results are the decodable images in a directory, in
    lexicographic filename order.  An optional meta.json maps filenames to
    their original source URLs."""

    def __init__(self, fixture_dir):
        self.fixture_dir = fixture_dir

    def search(self, image_path, keyword, m):
        meta = {}
        meta_path = os.path.join(self.fixture_dir, "meta.json")
        if os.path.isfile(meta_path):
            with open(meta_path) as f:
                meta = json.load(f)
        results = []
        for name in sorted(os.listdir(self.fixture_dir)):
            path = os.path.join(self.fixture_dir, name)
            if name == "meta.json" or not os.path.isfile(path):
                continue
            try:
                with Image.open(path) as img:
                    img.verify()
            except Exception:
                continue
            results.append(SearchResult(rank=len(results) + 1, path=path,
                                        source_url=meta.get(name)))
        return results


class LiveDriver:
    """Placeholder for a browser-automation driver against a live image
    search service.  Selectors and endpoints rot quickly, so they belong in
    deployment configuration; none ships by default."""

    def __init__(self, config_path=None):
        self.config_path = config_path

    def search(self, image_path, keyword, m):
        raise NoResultsError(
            "no live search backend configured; use a fixture directory "
            "(--fixture) or provide a driver configuration")


def _pixels(path):
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def _identical(a, b):
    return a.shape == b.shape and np.array_equal(a, b)


def fetch_samples(query, driver):
    """Run the search, copy up to query.m result images into
    query.output_dir, and write a manifest there.

    Results pixel-identical to the query image are skipped (hallucinating
    from the query itself would be self-dealing).  Returns the manifest
    path; raises NoResultsError when nothing usable comes back."""
    results = driver.search(query.image_path, query.keyword, query.m)
    query_px = _pixels(query.image_path)
    os.makedirs(query.output_dir, exist_ok=True)
    entries = []
    for res in results:
        if len(entries) >= query.m:
            break
        try:
            px = _pixels(res.path)
        except Exception as e:
            warnings.warn(f"result {res.rank} unreadable ({e}); skipped",
                          RuntimeWarning)
            continue
        if _identical(px, query_px):
            continue
        rank = len(entries) + 1
        ext = os.path.splitext(res.path)[1] or ".png"
        name = f"sample_{rank:02d}{ext}"
        shutil.copyfile(res.path, os.path.join(query.output_dir, name))
        entries.append({"rank": rank, "path": name,
                        "source_url": res.source_url})
    if not entries:
        raise NoResultsError("no retrievable results")
    manifest = {
        "keyword": query.keyword,
        "query_time": datetime.datetime.now(datetime.timezone.utc)
        .isoformat(timespec="seconds"),
        "entries": entries,
    }
    manifest_path = os.path.join(query.output_dir, "manifest.json")
    with open(manifest_path, "w") as f:
        json.dump(manifest, f, indent=2)
    return manifest_path
