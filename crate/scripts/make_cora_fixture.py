#!/usr/bin/env python3
"""Build the portable Cora fixture from the LINQS distribution (cora.content, cora.cites).

The LINQS files ship inside the `pgl` wheel under pgl/data/cora/. Node order follows
cora.content; class ids follow the sorted class names. The split mirrors the usual
public-split sizes (20 labelled nodes per class, 500 validation, 1000 test) drawn with
a fixed seed, since the Planetoid node ordering is not part of the LINQS release.

usage: make_cora_fixture.py <linqs_dir> <out_dir> [--seed N]
"""
import argparse
import json
import random
import struct
from pathlib import Path


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("linqs_dir", type=Path)
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    ids, rows, names = [], [], []
    for line in (args.linqs_dir / "cora.content").read_text().splitlines():
        parts = line.split()
        ids.append(parts[0])
        rows.append([float(x) for x in parts[1:-1]])
        names.append(parts[-1])
    index = {pid: i for i, pid in enumerate(ids)}
    classes = sorted(set(names))
    labels = [classes.index(c) for c in names]
    n, d = len(ids), len(rows[0])

    edges, self_loops, raw = set(), 0, 0
    for line in (args.linqs_dir / "cora.cites").read_text().splitlines():
        a, b = line.split()
        raw += 1
        u, v = index[a], index[b]
        if u == v:
            self_loops += 1
            continue
        edges.add((min(u, v), max(u, v)))
    edges = sorted(edges)

    rng = random.Random(args.seed)
    order = list(range(n))
    rng.shuffle(order)
    per_class = {c: 0 for c in range(len(classes))}
    train = []
    for v in order:
        if per_class[labels[v]] < 20:
            per_class[labels[v]] += 1
            train.append(v)
    taken = set(train)
    rest = [v for v in order if v not in taken]
    val, test = rest[:500], rest[500:1500]

    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "name": "cora",
        "num_nodes": n,
        "num_features": d,
        "num_classes": len(classes),
        "num_undirected_edges": len(edges),
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    with open(out / "edges.u32le", "wb") as f:
        for u, v in edges:
            f.write(struct.pack("<II", u, v))
    with open(out / "features.f32le", "wb") as f:
        for r in rows:
            f.write(struct.pack("<%df" % d, *r))
    with open(out / "labels.u32le", "wb") as f:
        f.write(struct.pack("<%dI" % n, *labels))
    split = {"train": sorted(train), "val": sorted(val), "test": sorted(test)}
    (out / "split.json").write_text(json.dumps(split) + "\n")
    print(f"{n} nodes, {len(edges)} undirected edges ({raw} raw citations, "
          f"{self_loops} self-citations), {d} features, {len(classes)} classes")


if __name__ == "__main__":
    main()
