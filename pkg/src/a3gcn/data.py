"""Datasets: plain-text bundles, a planted-partition generator, and perturbations.

A bundle is a directory holding::

    meta.json      {"num_nodes": N, "num_classes": C, "feature_dim": d}
    edges.csv      "u,v" per line, 0-indexed, u < v, no header
    features.csv   N lines of d comma-separated reals
    labels.csv     N lines, one integer class id each
    splits.json    {"train": [...], "val": [...], "test": [...]}
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .graph import canonical_edges


class BundleError(Exception):
    """Base class for bundle loading failures."""


class MissingFileError(BundleError):
    pass


class DimensionMismatchError(BundleError):
    pass


class LabelRangeError(BundleError):
    pass


class EdgeFormatError(BundleError):
    pass


class SplitError(BundleError):
    pass


BUNDLE_FILES = ("meta.json", "edges.csv", "features.csv", "labels.csv", "splits.json")


@dataclass(frozen=True, eq=False)
class Dataset:
    num_nodes: int
    edges: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    num_classes: int
    name: str = ""

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    def validate(self) -> None:
        n = self.num_nodes
        if self.features.shape[0] != n:
            raise DimensionMismatchError(f"features have {self.features.shape[0]} rows, expected {n}")
        if self.labels.shape != (n,):
            raise DimensionMismatchError(f"labels have length {self.labels.shape[0]}, expected {n}")
        if not np.all(np.isfinite(self.features)):
            raise DimensionMismatchError("non-finite feature value")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise LabelRangeError(f"label outside [0, {self.num_classes})")
        parts = [self.train, self.val, self.test]
        for ids in parts:
            if ids.size and (ids.min() < 0 or ids.max() >= n):
                raise SplitError("split id out of range")
            if np.unique(ids).size != ids.size:
                raise SplitError("duplicate id inside a split")
        joined = np.concatenate(parts)
        if np.unique(joined).size != joined.size:
            raise SplitError("train/val/test splits overlap")
        missing = set(range(self.num_classes)) - set(self.labels[self.train].tolist())
        if missing:
            raise SplitError(f"classes {sorted(missing)} have no training node")

    def summary_line(self) -> str:
        return (f"{self.name or 'dataset'}: nodes={self.num_nodes} edges={self.num_edges} "
                f"features={self.feature_dim} classes={self.num_classes}")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.num_nodes == other.num_nodes and self.num_classes == other.num_classes
                and all(np.array_equal(getattr(self, f), getattr(other, f))
                        for f in ("edges", "features", "labels", "train", "val", "test")))


def _ids(a) -> np.ndarray:
    return np.asarray(sorted(int(i) for i in a), dtype=np.int64)


def row_normalize(features: np.ndarray) -> np.ndarray:
    s = features.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore"):
        inv = np.where(s != 0, 1.0 / s, 0.0)
    return features * inv


# ---------------------------------------------------------------- bundle io

def load_bundle(path) -> Dataset:
    path = Path(path)
    for name in BUNDLE_FILES:
        if not (path / name).is_file():
            raise MissingFileError(f"{path / name} not found")
    meta = json.loads((path / "meta.json").read_text())
    try:
        n, c, d = int(meta["num_nodes"]), int(meta["num_classes"]), int(meta["feature_dim"])
    except KeyError as exc:
        raise DimensionMismatchError(f"meta.json lacks {exc.args[0]!r}") from None

    edges = _read_edges(path / "edges.csv", n)
    features = _read_features(path / "features.csv", n, d)
    labels = _read_labels(path / "labels.csv", n, c)
    splits = json.loads((path / "splits.json").read_text())
    try:
        train, val, test = (_ids(splits[k]) for k in ("train", "val", "test"))
    except KeyError as exc:
        raise SplitError(f"splits.json lacks {exc.args[0]!r}") from None

    ds = Dataset(n, edges, features, labels, train, val, test, c, name=path.name)
    ds.validate()
    return ds


def _read_edges(p: Path, n: int) -> np.ndarray:
    pairs = []
    with open(p, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row:
                continue
            if len(row) != 2:
                raise EdgeFormatError(f"{p}:{lineno}: expected 'u,v'")
            u, v = int(row[0]), int(row[1])
            if not u < v:
                raise EdgeFormatError(f"{p}:{lineno}: edge ({u},{v}) is not canonical (need u < v)")
            if v >= n or u < 0:
                raise EdgeFormatError(f"{p}:{lineno}: node id out of range [0, {n})")
            pairs.append((u, v))
    e = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    return canonical_edges(e, n)


def _read_features(p: Path, n: int, d: int) -> np.ndarray:
    with open(p) as fh:
        lines = [ln for ln in fh.read().split("\n") if ln]
    if len(lines) != n:
        raise DimensionMismatchError(f"{p}: {len(lines)} rows, expected {n}")
    x = np.empty((n, d))
    for i, ln in enumerate(lines):
        vals = ln.split(",")
        if len(vals) != d:
            raise DimensionMismatchError(f"{p}: row {i} has {len(vals)} columns, expected {d}")
        x[i] = [float(v) for v in vals]
    return x


def _read_labels(p: Path, n: int, c: int) -> np.ndarray:
    with open(p) as fh:
        vals = [int(ln) for ln in fh.read().split("\n") if ln.strip()]
    if len(vals) != n:
        raise DimensionMismatchError(f"{p}: {len(vals)} labels, expected {n}")
    y = np.asarray(vals, dtype=np.int64)
    if y.size and (y.min() < 0 or y.max() >= c):
        raise LabelRangeError(f"{p}: label outside [0, {c})")
    return y


def write_bundle(ds: Dataset, path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = {"num_nodes": ds.num_nodes, "num_classes": ds.num_classes, "feature_dim": ds.feature_dim}
    (path / "meta.json").write_text(json.dumps(meta) + "\n")
    with open(path / "edges.csv", "w", newline="\n") as fh:
        fh.writelines(f"{u},{v}\n" for u, v in ds.edges.tolist())
    with open(path / "features.csv", "w", newline="\n") as fh:
        for row in ds.features:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    with open(path / "labels.csv", "w", newline="\n") as fh:
        fh.writelines(f"{int(y)}\n" for y in ds.labels)
    splits = {k: getattr(ds, k).tolist() for k in ("train", "val", "test")}
    (path / "splits.json").write_text(json.dumps(splits) + "\n")
    return path


# ---------------------------------------------------------------- synthetic

def standard_split(labels: np.ndarray, num_classes: int, rng: np.random.Generator,
                   per_class: int = 20, num_val: int = 500, num_test: int = 1000):
    """20-per-class train, then val and test drawn from the rest.

    When fewer than ``num_val + num_test`` nodes remain, val takes half of
    them and test the other half.
    """
    n = labels.shape[0]
    train = []
    for c in range(num_classes):
        members = np.flatnonzero(labels == c)
        train.extend(rng.choice(members, size=min(per_class, members.size), replace=False).tolist())
    train_set = set(train)
    rest = np.asarray([i for i in rng.permutation(n).tolist() if i not in train_set], dtype=np.int64)
    if rest.size < num_val + num_test:
        num_val = rest.size // 2
        num_test = rest.size - num_val
    return _ids(train), _ids(rest[:num_val]), _ids(rest[num_val:num_val + num_test])


def generate_sbm(num_nodes: int, num_classes: int, p_intra: float, p_inter: float,
                 feature_dim: int, feature_noise: float, rng: np.random.Generator) -> Dataset:
    """Planted-partition graph with noisy one-hot class features."""
    for name, p in (("p_intra", p_intra), ("p_inter", p_inter)):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"{name} must be in [0, 1], got {p}")
    if feature_dim < num_classes:
        raise ValueError("feature_dim must be >= num_classes")
    # equal blocks; the first N mod C classes get one extra node
    labels = np.repeat(np.arange(num_classes), [num_nodes // num_classes + (c < num_nodes % num_classes)
                                                for c in range(num_classes)]).astype(np.int64)
    iu, ju = np.triu_indices(num_nodes, k=1)
    same = labels[iu] == labels[ju]
    prob = np.where(same, p_intra, p_inter)
    keep = rng.random(iu.shape[0]) < prob
    edges = np.stack([iu[keep], ju[keep]], axis=1).astype(np.int64)

    features = np.zeros((num_nodes, feature_dim))
    features[np.arange(num_nodes), labels] = 1.0
    features += feature_noise * rng.standard_normal((num_nodes, feature_dim))

    train, val, test = standard_split(labels, num_classes, rng)
    ds = Dataset(num_nodes, edges, features, labels, train, val, test, num_classes, name="sbm")
    ds.validate()
    return ds


# ---------------------------------------------------------------- perturbations

def make_label_rate_split(ds: Dataset, per_class: int, rng: np.random.Generator) -> Dataset:
    """Exactly ``per_class`` random training nodes per class; every other
    non-validation node becomes a test node."""
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    val_set = set(ds.val.tolist())
    train = []
    for c in range(ds.num_classes):
        members = np.asarray([i for i in np.flatnonzero(ds.labels == c).tolist() if i not in val_set])
        if members.size < per_class:
            raise ValueError(f"class {c} has only {members.size} nodes outside val, need {per_class}")
        train.extend(rng.choice(members, size=per_class, replace=False).tolist())
    train_ids = _ids(train)
    taken = set(train) | val_set
    test = _ids(i for i in range(ds.num_nodes) if i not in taken)
    return replace(ds, train=train_ids, test=test)


def inject_noisy_edges(ds: Dataset, q: float, rng: np.random.Generator) -> Dataset:
    """Drop every inter-class edge, then add ``floor(q * |E_intra|)`` random
    distinct inter-class edges."""
    if q < 0:
        raise ValueError("q must be >= 0")
    y = ds.labels
    e = ds.edges
    clean = e[y[e[:, 0]] == y[e[:, 1]]] if e.size else e.reshape(0, 2)
    n_add = int(np.floor(q * clean.shape[0] + 1e-9))
    counts = np.bincount(y, minlength=ds.num_classes)
    available = (ds.num_nodes ** 2 - int((counts ** 2).sum())) // 2
    if n_add > available:
        raise ValueError(f"cannot add {n_add} inter-class edges; only {available} pairs exist")

    n = ds.num_nodes
    chosen: set[tuple[int, int]] = set()
    added = []
    # rejection sampling in batches; dense enumeration only when the request is a large share
    if n_add > available // 4:
        iu, ju = np.triu_indices(n, k=1)
        cross = y[iu] != y[ju]
        pool = np.stack([iu[cross], ju[cross]], axis=1)
        added = pool[np.sort(rng.choice(pool.shape[0], size=n_add, replace=False))]
    else:
        while len(added) < n_add:
            u = rng.integers(0, n, size=2 * (n_add - len(added)) + 16)
            v = rng.integers(0, n, size=u.shape[0])
            for a, b in zip(u.tolist(), v.tolist()):
                if y[a] == y[b]:
                    continue
                pair = (a, b) if a < b else (b, a)
                if pair in chosen:
                    continue
                chosen.add(pair)
                added.append(pair)
                if len(added) == n_add:
                    break
        added = np.asarray(added, dtype=np.int64).reshape(-1, 2)
    edges = canonical_edges(np.concatenate([clean, added]), n)
    return replace(ds, edges=edges)


# ---------------------------------------------------------------- embeddings

def export_embeddings(matrix: np.ndarray, labels: np.ndarray, high_conf: np.ndarray,
                      agreed: np.ndarray, path) -> Path:
    """Write ``node,h0..h{d-1},label,high_conf,agreed`` rows (floats as repr)."""
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    d = matrix.shape[1]
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(["node", *(f"h{j}" for j in range(d)), "label", "high_conf", "agreed"]) + "\n")
        for u in range(matrix.shape[0]):
            vals = ",".join(repr(float(v)) for v in matrix[u])
            fh.write(f"{u},{vals},{int(labels[u])},{int(bool(high_conf[u]))},{int(bool(agreed[u]))}\n")
    return path


def read_embeddings(path) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    body = rows[1:]
    mat = np.asarray([[float(v) for v in r[1:-3]] for r in body]).reshape(len(body), -1)
    lab = np.asarray([int(r[-3]) for r in body], dtype=np.int64)
    hc = np.asarray([r[-2] == "1" for r in body])
    ag = np.asarray([r[-1] == "1" for r in body])
    return mat, lab, hc, ag

