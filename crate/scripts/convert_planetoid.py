#!/usr/bin/env python3
"""Convert public citation/reference graph distributions into the text
formats this tool reads (edges.txt / features.txt / labels.txt).

Supported inputs (all obtained manually; this script never touches the
network):

  cora / citeseer (LINQS tarballs: <name>.content + <name>.cites)
      https://linqs.org/datasets/
  pubmed (Pubmed-Diabetes.NODE.paper.tab + .DIRECTED.cites.tab)
      https://linqs.org/datasets/
  wikics (data.json from the WikiCS release)
      https://github.com/pmernyei/wiki-cs-dataset

Usage:
  python3 scripts/convert_planetoid.py cora     path/to/cora/     data/cora/
  python3 scripts/convert_planetoid.py citeseer path/to/citeseer/ data/citeseer/
  python3 scripts/convert_planetoid.py pubmed   path/to/pubmed/   data/pubmed/
  python3 scripts/convert_planetoid.py wikics   path/to/data.json data/wikics/

Output conventions match the loader: 0-based ids, one "u v" edge per line
(u < v, deduplicated, self-loops dropped, edges referencing unknown ids
dropped), one integer label per line, features as an "N F" header plus N
rows of F values.
"""

import json
import os
import sys


def write_outputs(out_dir, edges, labels, features):
    os.makedirs(out_dir, exist_ok=True)
    edges = sorted({(min(u, v), max(u, v)) for (u, v) in edges if u != v})
    with open(os.path.join(out_dir, "edges.txt"), "w") as fh:
        for u, v in edges:
            fh.write(f"{u} {v}\n")
    with open(os.path.join(out_dir, "labels.txt"), "w") as fh:
        for l in labels:
            fh.write(f"{l}\n")
    with open(os.path.join(out_dir, "features.txt"), "w") as fh:
        n = len(features)
        f = len(features[0]) if n else 0
        fh.write(f"{n} {f}\n")
        for row in features:
            fh.write(" ".join(format(x, "g") for x in row) + "\n")
    degree = [0] * len(labels)
    for u, v in edges:
        degree[u] += 1
        degree[v] += 1
    isolated = sum(1 for d in degree if d == 0)
    print(
        f"{out_dir}: {len(labels)} nodes, {len(edges)} edges, "
        f"{len(features[0]) if features else 0} features, "
        f"{len(set(labels))} classes, {isolated} isolated nodes"
    )
    if isolated:
        print("  warning: the loader rejects isolated nodes; "
              "consider dropping them or adding their strongest link")


def convert_linqs_content(name, in_dir, out_dir):
    """cora/citeseer: <name>.content rows are `id feat... label`."""
    content = os.path.join(in_dir, f"{name}.content")
    cites = os.path.join(in_dir, f"{name}.cites")
    ids = {}
    features = []
    label_names = {}
    labels = []
    with open(content) as fh:
        for line in fh:
            parts = line.strip().split()
            if not parts:
                continue
            node_id, feat, label = parts[0], parts[1:-1], parts[-1]
            ids[node_id] = len(ids)
            features.append([float(x) for x in feat])
            labels.append(label_names.setdefault(label, len(label_names)))
    edges = []
    skipped = 0
    with open(cites) as fh:
        for line in fh:
            parts = line.strip().split()
            if len(parts) != 2:
                continue
            a, b = parts
            if a in ids and b in ids:
                edges.append((ids[a], ids[b]))
            else:
                skipped += 1
    if skipped:
        print(f"  note: skipped {skipped} citation lines referencing unknown ids")
    write_outputs(out_dir, edges, labels, features)


def convert_pubmed(in_dir, out_dir):
    node_file = os.path.join(in_dir, "Pubmed-Diabetes.NODE.paper.tab")
    cite_file = os.path.join(in_dir, "Pubmed-Diabetes.DIRECTED.cites.tab")
    ids = {}
    labels = []
    rows = []
    vocab = {}
    with open(node_file) as fh:
        lines = fh.read().splitlines()
    # line 0 is a comment, line 1 declares the fields
    for field in lines[1].split("\t"):
        if field.startswith("numeric:w-"):
            word = field.split(":")[1]
            vocab[word] = len(vocab)
    for line in lines[2:]:
        parts = line.split("\t")
        if len(parts) < 2:
            continue
        node_id = parts[0]
        ids[node_id] = len(ids)
        label = None
        weights = {}
        for item in parts[1:]:
            if item.startswith("label="):
                label = int(item.split("=")[1]) - 1
            elif "=" in item:
                key, val = item.split("=", 1)
                if key in vocab:
                    weights[vocab[key]] = float(val)
        labels.append(label)
        rows.append(weights)
    features = [[0.0] * len(vocab) for _ in rows]
    for i, weights in enumerate(rows):
        for j, w in weights.items():
            features[i][j] = w
    edges = []
    with open(cite_file) as fh:
        for line in fh.read().splitlines()[2:]:
            parts = line.split("\t")
            if len(parts) < 4:
                continue
            a = parts[1].split(":")[-1]
            b = parts[3].split(":")[-1]
            if a in ids and b in ids:
                edges.append((ids[a], ids[b]))
    write_outputs(out_dir, edges, labels, features)


def convert_wikics(json_path, out_dir):
    with open(json_path) as fh:
        data = json.load(fh)
    features = data["features"]
    labels = data["labels"]
    edges = []
    for u, nbrs in enumerate(data["links"]):
        for v in nbrs:
            edges.append((u, v))
    write_outputs(out_dir, edges, labels, features)


def main():
    if len(sys.argv) != 4:
        print(__doc__)
        sys.exit(1)
    name, src, dst = sys.argv[1], sys.argv[2], sys.argv[3]
    if name in ("cora", "citeseer"):
        convert_linqs_content(name, src, dst)
    elif name == "pubmed":
        convert_pubmed(src, dst)
    elif name == "wikics":
        convert_wikics(src, dst)
    else:
        print(f"unknown dataset {name!r}; expected cora, citeseer, pubmed or wikics")
        sys.exit(1)


if __name__ == "__main__":
    main()
