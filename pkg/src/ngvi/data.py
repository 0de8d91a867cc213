"""LIBSVM datasets: parsing, label mapping, splitting and a caching downloader."""

import bz2
import gzip
import hashlib
import io
import os
import re
import tempfile
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import FetchError, IntegrityError, ParseError, SplitError

BASE_URL = "https://www.csie.ntu.edu.tw/~cjlin/libsvmtools/datasets/"
CACHE_ENV = "NGVI_CACHE_DIR"
MANIFEST = "MANIFEST"
_TOKEN = re.compile(r"\S+")


@dataclass(frozen=True)
class DatasetInfo:
    name: str
    files: tuple
    n_features: int
    n_rows: int
    positive: tuple = None   # for multiclass sources: labels mapped to +1


# Sizes in bytes of the hosted files are unknown here; the manifest records
# the length observed at download time and later cache reads check against it.
DATASETS = {
    "australian": DatasetInfo("australian", ("binary/australian_scale",), 14, 690),
    "diabetes": DatasetInfo("diabetes", ("binary/diabetes_scale",), 8, 768),
    "breast-cancer": DatasetInfo("breast-cancer", ("binary/breast-cancer_scale",), 10, 683),
    "mushrooms": DatasetInfo("mushrooms", ("binary/mushrooms",), 112, 8124),
    "phishing": DatasetInfo("phishing", ("binary/phishing",), 68, 11055),
    "mnist": DatasetInfo("mnist", ("multiclass/mnist.bz2", "multiclass/mnist.t.bz2"), 784, 70000,
                         positive=(5.0, 6.0, 7.0, 8.0, 9.0)),
    "covtype": DatasetInfo("covtype", ("binary/covtype.libsvm.binary.scale.bz2",), 54, 581012),
    "leukemia": DatasetInfo("leukemia", ("binary/leu.bz2",), 7129, 38),
}
ALIASES = {"diabetes-scale": "diabetes", "australian-scale": "australian",
           "covtype-scale": "covtype", "breast-cancer-scale": "breast-cancer",
           "leu": "leukemia"}


def dataset_info(name):
    key = ALIASES.get(name, name)
    if key not in DATASETS:
        raise KeyError(f"unknown dataset {name!r}; known: {', '.join(sorted(DATASETS))}")
    return DATASETS[key]


@dataclass(frozen=True)
class DesignMatrix:
    """Sparse data matrix (rows are datapoints) with labels in {-1, +1}."""

    X: sp.csr_matrix
    y: np.ndarray

    def __post_init__(self):
        X = sp.csr_matrix(self.X, dtype=float)
        X.sort_indices()
        y = np.asarray(self.y, dtype=float).ravel()
        if X.shape[0] != y.size:
            raise ValueError("row count and label count differ")
        if not np.all(np.abs(y) == 1):
            raise ValueError("labels must be -1 or +1")
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    def rows(self, idx):
        return DesignMatrix(self.X[idx], self.y[idx])

    def equals(self, other):
        return (self.X.shape == other.X.shape and np.array_equal(self.y, other.y)
                and (self.X != other.X).nnz == 0)


def map_labels(raw, positive=None):
    """Map raw labels onto {-1, +1}.

    Two-valued label sets map the smaller value to -1 and the larger to +1
    (so {0, 1}, {1, 2} and {-1, 1} all work).  Multiclass labels need an
    explicit ``positive`` set.
    """
    raw = np.asarray(raw, dtype=float)
    if positive is not None:
        return np.where(np.isin(raw, positive), 1.0, -1.0)
    vals = np.unique(raw)
    if vals.size == 1:
        return np.where(raw > 0, 1.0, -1.0)
    if vals.size != 2:
        raise ValueError(f"{vals.size} distinct labels; pass positive= to binarize")
    return np.where(raw == vals[1], 1.0, -1.0)


def _open_text(path):
    path = Path(path)
    if path.suffix == ".bz2":
        return io.TextIOWrapper(bz2.open(path, "rb"), encoding="ascii")
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="ascii")
    return open(path, encoding="ascii")


def parse_libsvm(stream, n_features=None, positive=None, map_to_pm1=True):
    """Parse LIBSVM text ``<label> <idx>:<val> ...`` into a DesignMatrix.

    ``stream`` is any iterable of lines, or a path.  Indices are 1-based and
    must increase strictly within a line.
    """
    if isinstance(stream, (str, os.PathLike)):
        with _open_text(stream) as fh:
            return parse_libsvm(fh, n_features, positive, map_to_pm1)
    labels, indptr, indices, data = [], [0], [], []
    max_idx = 0
    for lineno, line in enumerate(stream, 1):
        body = line.split("#", 1)[0]
        if not body.strip():
            continue
        tokens = [(m.group(), m.start() + 1) for m in _TOKEN.finditer(body)]
        head, col = tokens[0]
        try:
            labels.append(float(head))
        except ValueError:
            raise ParseError(f"bad label {head!r}", lineno, col) from None
        prev = 0
        for tok, col in tokens[1:]:
            key, sep, val = tok.partition(":")
            if key == "qid":
                continue
            if not sep or not key or not val:
                raise ParseError(f"malformed feature {tok!r}", lineno, col)
            try:
                j = int(key)
                v = float(val)
            except ValueError:
                raise ParseError(f"malformed feature {tok!r}", lineno, col) from None
            if j < 1:
                raise ParseError(f"feature index {j} is not 1-based", lineno, col)
            if j <= prev:
                raise ParseError(f"feature indices not ascending ({prev} then {j})", lineno, col)
            prev = j
            indices.append(j - 1)
            data.append(v)
        max_idx = max(max_idx, prev)
        indptr.append(len(indices))
    d = max_idx if n_features is None else n_features
    if max_idx > d:
        raise ParseError(f"feature index {max_idx} exceeds n_features={d}")
    X = sp.csr_matrix((np.array(data, dtype=float), np.array(indices, dtype=np.int64),
                       np.array(indptr, dtype=np.int64)), shape=(len(labels), d))
    y = map_labels(labels, positive) if map_to_pm1 else np.array(labels)
    return DesignMatrix(X, y)


def dump_libsvm(dm, stream):
    X = dm.X
    for i in range(dm.n):
        lo, hi = X.indptr[i], X.indptr[i + 1]
        feats = " ".join(f"{j + 1}:{float(v)!r}" for j, v in zip(X.indices[lo:hi], X.data[lo:hi]))
        stream.write(f"{int(dm.y[i]):+d} {feats}".rstrip() + "\n")


def cache_root(cache_dir=None):
    if cache_dir is not None:
        return Path(cache_dir)
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "ngvi"


def read_manifest(folder):
    path = Path(folder) / MANIFEST
    entries = {}
    if not path.exists():
        return entries
    for line in path.read_text().splitlines():
        parts = line.split("\t")
        if len(parts) == 4:
            fname, url, length, stamp = parts
            entries[fname] = {"url": url, "length": int(length), "retrieved": stamp}
    return entries


def _atomic_write(path, payload):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_manifest(folder, entries):
    lines = [f"{k}\t{v['url']}\t{v['length']}\t{v['retrieved']}" for k, v in sorted(entries.items())]
    _atomic_write(Path(folder) / MANIFEST, ("\n".join(lines) + "\n").encode())


def _download(url, opener, timeout):
    try:
        with opener(url, timeout=timeout) as resp:
            payload = resp.read()
            expected = resp.headers.get("Content-Length") if hasattr(resp, "headers") else None
    except (urllib.error.URLError, OSError) as exc:
        raise FetchError(f"download of {url} failed: {exc}") from exc
    if expected is not None and int(expected) != len(payload):
        raise IntegrityError(f"{url}: got {len(payload)} bytes, server announced {expected}")
    return payload


def fetch_dataset(name, cache_dir=None, offline=False, base_url=BASE_URL,
                  opener=urllib.request.urlopen, timeout=60):
    """Return local paths of a dataset's files, downloading what is missing.

    Files land in ``<cache>/<name>/<file>`` next to a manifest that records
    URL, byte length and retrieval time.  Cached files are checked against
    the recorded length.
    """
    info = dataset_info(name)
    folder = cache_root(cache_dir) / info.name
    manifest = read_manifest(folder)
    paths = []
    for rel in info.files:
        fname = rel.rsplit("/", 1)[-1]
        path = folder / fname
        if path.exists():
            rec = manifest.get(fname)
            if rec is not None and path.stat().st_size != rec["length"]:
                raise IntegrityError(
                    f"{path}: {path.stat().st_size} bytes on disk, manifest says {rec['length']}")
            paths.append(path)
            continue
        if offline:
            raise FetchError(f"{info.name}: {fname} not in cache {folder} and offline mode is on")
        url = base_url + rel
        payload = _download(url, opener, timeout)
        folder.mkdir(parents=True, exist_ok=True)
        _atomic_write(path, payload)
        manifest[fname] = {"url": url, "length": len(payload),
                           "retrieved": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())}
        write_manifest(folder, manifest)
        paths.append(path)
    return paths


def seed_cache(name, source_path, cache_dir=None, url=None):
    """Install a local copy of a dataset file into the cache."""
    info = dataset_info(name)
    if len(info.files) != 1:
        raise ValueError("seed_cache only handles single-file datasets")
    fname = info.files[0].rsplit("/", 1)[-1]
    folder = cache_root(cache_dir) / info.name
    folder.mkdir(parents=True, exist_ok=True)
    payload = Path(source_path).read_bytes()
    _atomic_write(folder / fname, payload)
    manifest = read_manifest(folder)
    manifest[fname] = {"url": url or f"file://{Path(source_path).resolve()}",
                       "length": len(payload), "retrieved": "seeded"}
    write_manifest(folder, manifest)
    return folder / fname


def file_digest(paths):
    h = hashlib.sha256()
    for p in paths:
        h.update(Path(p).read_bytes())
    return h.hexdigest()


def load_dataset(name, cache_dir=None, offline=False, **fetch_kw):
    """Fetch, parse and concatenate a dataset; returns (DesignMatrix, digest)."""
    info = dataset_info(name)
    paths = fetch_dataset(name, cache_dir, offline, **fetch_kw)
    parts = [parse_libsvm(p, n_features=info.n_features, map_to_pm1=False) for p in paths]
    X = sp.vstack([p.X for p in parts], format="csr")
    raw = np.concatenate([p.y for p in parts])
    return DesignMatrix(X, map_labels(raw, info.positive)), file_digest(paths)


@dataclass(frozen=True)
class SplitSpec:
    train_count: int
    shuffle_seed: int = 0
    scale: bool = False
    shuffle: bool = True


def scale_rows(dm):
    """Divide all features by the largest row 2-norm so every row has norm <= 1."""
    norms = np.sqrt(np.asarray(dm.X.multiply(dm.X).sum(axis=1)).ravel())
    top = norms.max() if norms.size else 0.0
    if top <= 1.0:
        return dm
    return DesignMatrix(dm.X / top, dm.y)


def split(dm, spec):
    """Seeded shuffle, then the first ``train_count`` rows train and the rest test."""
    if not (0 < spec.train_count < dm.n):
        raise SplitError(f"train_count must be in (0, {dm.n}), got {spec.train_count}")
    if spec.scale:
        dm = scale_rows(dm)
    if spec.shuffle:
        order = np.random.default_rng(spec.shuffle_seed).permutation(dm.n)
    else:
        order = np.arange(dm.n)
    return dm.rows(order[:spec.train_count]), dm.rows(order[spec.train_count:])


def subsample(dm, count, seed=0):
    if count >= dm.n:
        return dm
    idx = np.sort(np.random.default_rng(seed).choice(dm.n, size=count, replace=False))
    return dm.rows(idx)
