"""Convert the public Planetoid pickles (ind.<name>.*) into a plain-text bundle.

    python scripts/convert_planetoid.py <raw_dir> <name> <out_dir>

``raw_dir`` holds ind.<name>.{x,y,tx,ty,allx,ally,graph,test.index} as
distributed with the original GCN code.  The split is the standard one:
the first |y| nodes train, the next 500 validate, and test.index nodes test.
Only unpickle files from a source you trust.
"""

from __future__ import annotations

import argparse
import pickle
import sys
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from a3gcn.data import Dataset, write_bundle


def _load(raw: Path, name: str, part: str):
    with open(raw / f"ind.{name}.{part}", "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def convert(raw, name: str) -> Dataset:
    raw = Path(raw)
    x, y, tx, ty, allx, ally, graph = (_load(raw, name, p) for p in ("x", "y", "tx", "ty", "allx", "ally", "graph"))
    test_idx = [int(line) for line in (raw / f"ind.{name}.test.index").read_text().split()]
    test_sorted = np.sort(test_idx)

    tx, ty = sp.csr_matrix(tx), np.asarray(ty)
    lo, hi = int(test_sorted[0]), int(test_sorted[-1])
    if hi - lo + 1 != len(test_idx):
        # some test ids have no features (citeseer): pad them with zero rows
        full_x = sp.lil_matrix((hi - lo + 1, tx.shape[1]))
        full_x[test_sorted - lo, :] = tx
        full_y = np.zeros((hi - lo + 1, ty.shape[1]))
        full_y[test_sorted - lo, :] = ty
        tx, ty = full_x.tocsr(), full_y

    features = sp.vstack([sp.csr_matrix(allx), tx]).tolil()
    labels = np.vstack([np.asarray(ally), ty])
    features[test_idx, :] = features[test_sorted, :]
    labels[test_idx, :] = labels[test_sorted, :]
    n = features.shape[0]

    pairs = {(min(u, v), max(u, v)) for u, nbrs in graph.items() for v in nbrs if u != v and max(u, v) < n}
    edges = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)

    train = np.arange(len(y))
    val = np.arange(len(y), len(y) + 500)
    ds = Dataset(n, edges, features.toarray(), labels.argmax(axis=1).astype(np.int64), train, val,
                 test_sorted.astype(np.int64), labels.shape[1], name=name)
    ds.validate()
    return ds


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("raw_dir")
    ap.add_argument("name", help="cora, citeseer or pubmed")
    ap.add_argument("out_dir")
    args = ap.parse_args(argv)
    ds = convert(args.raw_dir, args.name)
    write_bundle(ds, args.out_dir)
    print(ds.summary_line())
    return 0


if __name__ == "__main__":
    sys.exit(main())
