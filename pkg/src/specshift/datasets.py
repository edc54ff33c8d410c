"""Reading TUDataset text directories and reading/writing the JSONL graph format.

JSONL schema, one graph per line::

    {"n": 3, "edges": [[0, 1], [1, 2], [0, 2]], "label": 0, "features": [[1.0], [1.0], [1.0]]}

``features`` is optional. Floats are written with ``repr`` precision so a
write/parse round trip is bit-exact for finite values.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .graph import Graph, GraphError

PathLike = Union[str, os.PathLike]


class DatasetError(ValueError):
    """Malformed or missing dataset input."""


@dataclass
class Dataset:
    graphs: list[Graph]
    name: str = "dataset"
    class_count: int = field(default=0)

    def __post_init__(self) -> None:
        labels = [g.label for g in self.graphs if g.label is not None]
        if self.class_count <= 0:
            self.class_count = (max(labels) + 1) if labels else 1
        for g in self.graphs:
            if g.label is not None and not 0 <= g.label < self.class_count:
                raise DatasetError(f"label {g.label} outside [0, {self.class_count})")
        widths = {g.feature_width if g.features is not None else None for g in self.graphs}
        if len(widths) > 1:
            raise DatasetError(f"inconsistent feature widths across graphs: {widths}")

    def __len__(self) -> int:
        return len(self.graphs)

    def __getitem__(self, i: int) -> Graph:
        return self.graphs[i]

    @property
    def labels(self) -> np.ndarray:
        return np.array([-1 if g.label is None else g.label for g in self.graphs], dtype=np.int64)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([g.n for g in self.graphs], dtype=np.int64)

    def subset(self, indices, name: Optional[str] = None) -> "Dataset":
        return Dataset([self.graphs[i] for i in indices], name or self.name, self.class_count)

    def replace_graphs(self, graphs: list[Graph]) -> "Dataset":
        return Dataset(graphs, self.name, self.class_count)


def _read_lines(path: Path) -> list[str]:
    with open(path) as fh:
        return [ln.strip() for ln in fh if ln.strip()]


def parse_tudataset(directory: PathLike, name: str) -> Dataset:
    """Parse a TUDataset directory (``NAME_A.txt`` and friends, 1-indexed)."""
    root = Path(directory)

    def req(suffix: str) -> Path:
        p = root / f"{name}_{suffix}.txt"
        if not p.exists():
            raise DatasetError(f"dataset file missing: {p.name}")
        return p

    edge_path, ind_path, glab_path = req("A"), req("graph_indicator"), req("graph_labels")

    indicator = np.array([int(x) for x in _read_lines(ind_path)], dtype=np.int64)
    raw_glabels = [int(float(x)) for x in _read_lines(glab_path)]
    n_graphs = len(raw_glabels)
    if indicator.size and (indicator.min() < 1 or indicator.max() > n_graphs):
        raise DatasetError("indicator out of range")
    n_nodes = indicator.size
    graph_of = indicator - 1

    # node ids are global and contiguous per graph; compute local offsets
    counts = np.bincount(graph_of, minlength=n_graphs)
    first = np.zeros(n_graphs, dtype=np.int64)
    seen = np.zeros(n_graphs, dtype=bool)
    for node, gid in enumerate(graph_of):
        if not seen[gid]:
            first[gid] = node
            seen[gid] = True
    local = np.arange(n_nodes) - first[graph_of]

    edges: list[list[tuple[int, int]]] = [[] for _ in range(n_graphs)]
    for lineno, line in enumerate(_read_lines(edge_path), start=1):
        parts = line.split(",")
        if len(parts) != 2:
            raise DatasetError(f"malformed edge at {edge_path.name}:{lineno}")
        u, v = int(parts[0]) - 1, int(parts[1]) - 1
        if not (0 <= u < n_nodes and 0 <= v < n_nodes):
            raise DatasetError(f"node index out of range at {edge_path.name}:{lineno}")
        gu, gv = graph_of[u], graph_of[v]
        if gu != gv:
            raise DatasetError(f"edge crosses graphs at {edge_path.name}:{lineno}")
        if u == v:
            continue
        edges[gu].append((int(local[u]), int(local[v])))

    blocks: list[np.ndarray] = []
    nl_path = root / f"{name}_node_labels.txt"
    if nl_path.exists():
        node_labels = np.array([int(float(x.split(",")[0])) for x in _read_lines(nl_path)])
        if node_labels.size != n_nodes:
            raise DatasetError("node label count does not match indicator")
        vocab = np.unique(node_labels)
        onehot = np.zeros((n_nodes, vocab.size), dtype=np.float64)
        onehot[np.arange(n_nodes), np.searchsorted(vocab, node_labels)] = 1.0
        blocks.append(onehot)
    na_path = root / f"{name}_node_attributes.txt"
    if na_path.exists():
        rows = [[float(x) for x in line.split(",")] for line in _read_lines(na_path)]
        if len(rows) != n_nodes:
            raise DatasetError("node attribute count does not match indicator")
        if len({len(r) for r in rows}) > 1:
            raise DatasetError("ragged attribute row")
        blocks.append(np.array(rows, dtype=np.float64))
    feats = np.hstack(blocks) if blocks else None

    label_vocab = sorted(set(raw_glabels))
    remap = {lab: i for i, lab in enumerate(label_vocab)}
    graphs = []
    for gid in range(n_graphs):
        f = None
        if feats is not None:
            f = feats[first[gid]: first[gid] + counts[gid]]
        graphs.append(Graph(int(counts[gid]), tuple(edges[gid]), f, remap[raw_glabels[gid]]))
    return Dataset(graphs, name, max(len(label_vocab), 1))


def graph_to_record(g: Graph) -> dict:
    rec: dict = {"n": g.n, "edges": [list(e) for e in g.edges], "label": g.label}
    if g.features is not None:
        rec["features"] = g.features.tolist()
    return rec


def graph_from_record(rec: dict) -> Graph:
    feats = rec.get("features")
    return Graph(
        int(rec["n"]),
        tuple(tuple(e) for e in rec["edges"]),
        None if feats is None else np.array(feats, dtype=np.float64).reshape(int(rec["n"]), -1),
        None if rec.get("label") is None else int(rec["label"]),
    )


def parse_jsonl(path: PathLike, name: Optional[str] = None, class_count: int = 0) -> Dataset:
    path = Path(path)
    graphs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                graphs.append(graph_from_record(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError, GraphError) as exc:
                raise DatasetError(f"JSONL parse error at line {lineno}: {exc}") from exc
    return Dataset(graphs, name or path.stem, class_count)


def write_jsonl(dataset: Dataset, path: PathLike) -> None:
    with open(path, "w") as fh:
        for g in dataset.graphs:
            fh.write(json.dumps(graph_to_record(g)))
            fh.write("\n")


def load_dataset(path: PathLike, name: Optional[str] = None) -> Dataset:
    """Load either a JSONL file or a TUDataset directory.

    For a directory the dataset name defaults to the directory's basename.
    """
    p = Path(path)
    if p.is_dir():
        return parse_tudataset(p, name or p.name)
    if not p.exists():
        raise DatasetError(f"dataset file missing: {p}")
    return parse_jsonl(p, name)
