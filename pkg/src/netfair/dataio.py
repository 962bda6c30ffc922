"""Reading and writing datasets, manifests, generator configs and results."""
from __future__ import annotations

import csv
import json
import os
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .graph import GraphError, build_graph, read_edge_list, write_edge_list
from .nscm import GenConfig, GenerationError, NodeTable

ROOT_ENV = "NETFAIR_ROOT"


class DataError(ValueError):
    pass


class DataWarning(UserWarning):
    pass


def workspace_root(root=None):
    """Explicit ``root`` wins, then ``$NETFAIR_ROOT``, then the cwd."""
    if root is not None:
        return Path(root)
    env = os.environ.get(ROOT_ENV)
    return Path(env) if env else Path.cwd()


def resolve(path, root=None):
    path = Path(path)
    return path if path.is_absolute() else workspace_root(root) / path


# ----------------------------------------------------------------- manifest

@dataclass(frozen=True)
class DatasetManifest:
    name: str
    node_file: str
    edge_file: str
    sensitive_column: str
    label_column: str
    z_columns: tuple = ()
    feature_columns: tuple = ()
    categorical_columns: tuple = ()
    positive_values: dict = field(default_factory=dict)
    standardize: bool = True
    dedupe_edges: bool = True

    def __post_init__(self):
        for key in ("z_columns", "feature_columns", "categorical_columns"):
            object.__setattr__(self, key, tuple(getattr(self, key)))
        roles = [self.sensitive_column, self.label_column, *self.z_columns, *self.feature_columns]
        dupes = sorted({c for c in roles if roles.count(c) > 1})
        if dupes:
            raise DataError(f"manifest {self.name!r}: columns used in more than one role: {dupes}")

    @classmethod
    def from_mapping(cls, mapping):
        required = ("name", "node_file", "edge_file", "sensitive_column", "label_column")
        missing = [k for k in required if k not in mapping]
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(mapping) - known)
        problems = [f"missing key {k!r}" for k in missing] + [f"unknown key {k!r}" for k in unknown]
        if problems:
            raise DataError("manifest: " + "; ".join(problems))
        return cls(**mapping)

    def to_mapping(self):
        return asdict(self)


def read_manifest(path):
    with open(path) as fh:
        try:
            return DatasetManifest.from_mapping(json.load(fh))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: not a JSON document ({exc})") from None


def write_manifest(path, manifest):
    with open(path, "w") as fh:
        json.dump(manifest.to_mapping(), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ------------------------------------------------------------------ loading

def _read_rows(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            rows.append((lineno, [cell.strip() for cell in row]))
    return header, rows


def _numeric(path, column, cells):
    out = np.empty(len(cells))
    for k, (lineno, value) in enumerate(cells):
        try:
            out[k] = float(value)
        except ValueError:
            raise DataError(f"{path}:{lineno}: column {column!r} has non-numeric value {value!r}") from None
    return out


def _binary(path, column, cells, positive=None):
    values = [v for _, v in cells]
    levels = sorted(set(values), key=_level_key)
    if len(levels) > 2:
        raise DataError(f"{path}: column {column!r} must be binary, found {len(levels)} values {levels[:5]}")
    if positive is not None:
        positive = str(positive)
        if positive not in levels:
            raise DataError(f"{path}: positive value {positive!r} not present in column {column!r}")
        one = positive
    else:
        one = levels[-1]
    mapping = {lvl: int(lvl == one) for lvl in levels}
    return np.array([mapping[v] for v in values], dtype=np.int64), mapping


def _level_key(value):
    try:
        return (0, float(value), value)
    except ValueError:
        return (1, 0.0, value)


def _parses(value):
    try:
        float(value)
    except ValueError:
        return False
    return True


def _is_textual(cells):
    """True when no cell parses as a number; mixed columns stay numeric so
    the offending row is reported."""
    return not any(_parses(v) for _, v in cells)


@dataclass
class Standardizer:
    """Per-column affine map; ``scale`` is 1 for zero-variance columns."""
    names: tuple
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, names, data):
        mean = data.mean(axis=0)
        std = data.std(axis=0)
        flat = std == 0
        constant = [str(name) for name, f in zip(names, flat) if f]
        for name in constant:
            warnings.warn(f"column {name!r} has zero variance; passed through as zeros", DataWarning, stacklevel=3)
        return cls(tuple(names), mean, np.where(flat, 1.0, std)), constant

    def transform(self, data):
        return (data - self.mean) / self.scale

    def inverse(self, data):
        return data * self.scale + self.mean


def _encode_columns(path, header, rows, columns, categorical):
    """Numeric matrix plus expanded column names; categoricals one-hot."""
    blocks, names = [], []
    for col in columns:
        k = header.index(col)
        cells = [(lineno, row[k]) for lineno, row in rows]
        if col in categorical or _is_textual(cells):
            levels = sorted({v for _, v in cells}, key=_level_key)
            values = [v for _, v in cells]
            blocks.append(np.array([[v == lvl for lvl in levels] for v in values], dtype=np.float64))
            names += [f"{col}={lvl}" for lvl in levels]
        else:
            blocks.append(_numeric(path, col, cells)[:, None])
            names.append(col)
    if not blocks:
        return np.zeros((len(rows), 0)), []
    return np.hstack(blocks), names


def load_dataset(manifest, root=None):
    """Read node and edge files named by ``manifest`` into ``(graph, table)``.

    Per-column standardisation and any warnings are kept in ``table.meta``.
    """
    node_path = resolve(manifest.node_file, root)
    edge_path = resolve(manifest.edge_file, root)
    for p in (node_path, edge_path):
        if not p.exists():
            raise DataError(f"dataset {manifest.name!r}: file not found: {p}")
    header, rows = _read_rows(node_path)
    if not rows:
        raise DataError(f"{node_path}: no data rows")
    features = list(manifest.feature_columns)
    if not features:
        reserved = {manifest.sensitive_column, manifest.label_column, *manifest.z_columns, "id"}
        features = [c for c in header if c not in reserved]
    wanted = [manifest.sensitive_column, manifest.label_column, *manifest.z_columns, *features]
    absent = [c for c in wanted if c not in header]
    if absent:
        raise DataError(f"{node_path}: missing columns {absent}; header is {header}")

    def cells(col):
        k = header.index(col)
        return [(lineno, row[k]) for lineno, row in rows]

    s, s_map = _binary(node_path, manifest.sensitive_column, cells(manifest.sensitive_column),
                       manifest.positive_values.get(manifest.sensitive_column))
    y, y_map = _binary(node_path, manifest.label_column, cells(manifest.label_column),
                       manifest.positive_values.get(manifest.label_column))
    categorical = set(manifest.categorical_columns)
    z, z_names = _encode_columns(node_path, header, rows, manifest.z_columns, categorical)
    x, x_names = _encode_columns(node_path, header, rows, features, categorical)

    meta = {"name": manifest.name, "x_names": tuple(x_names), "z_names": tuple(z_names),
            "mappings": {manifest.sensitive_column: s_map, manifest.label_column: y_map},
            "warnings": []}
    if manifest.standardize:
        for key, names, data in (("x", x_names, x), ("z", z_names, z)):
            if data.shape[1] == 0:
                continue
            std, flat = Standardizer.fit(names, data)
            meta[f"{key}_standardizer"] = std
            meta["warnings"] += [f"zero variance: {name}" for name in flat]
            if key == "x":
                x = std.transform(data)
            else:
                z = std.transform(data)

    try:
        pairs, _ = read_edge_list(edge_path, n=len(rows))
        graph = build_graph(len(rows), pairs, dedupe=manifest.dedupe_edges)
    except GraphError as exc:
        raise DataError(str(exc)) from None
    return graph, NodeTable(s=s, z=z, x=x, y=y, meta=meta)


# ------------------------------------------------------------ generator I/O

def parse_gen_config(text):
    """JSON object or ``key = value`` lines (``#`` comments allowed)."""
    stripped = text.strip()
    if stripped.startswith("{"):
        mapping = json.loads(stripped)
    else:
        mapping = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"config line {lineno}: expected key = value, got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            mapping[key] = value
    try:
        return GenConfig.from_mapping(mapping)
    except (GenerationError, ValueError) as exc:
        raise DataError(f"invalid generator config: {exc}") from None


def load_gen_config(path):
    with open(path) as fh:
        return parse_gen_config(fh.read())


def _fmt(v):
    return repr(float(v))


def write_dataset(directory, graph, table, provenance=None):
    """Write ``nodes.csv``, ``edges.csv``, ``manifest.json`` and, when the
    table has ground truth, ``interventional.csv``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    z_names = list(table.meta.get("z_names") or [f"z{j}" for j in range(table.z.shape[1])])
    x_names = list(table.meta.get("x_names") or [f"x{j}" for j in range(table.x.shape[1])])
    with open(directory / "nodes.csv", "w") as fh:
        fh.write(",".join(["id", "s", *z_names, *x_names, "y"]) + "\n")
        for i in range(len(table)):
            row = [str(i), str(table.s[i]), *map(_fmt, table.z[i]), *map(_fmt, table.x[i]), str(table.y[i])]
            fh.write(",".join(row) + "\n")
    write_edge_list(directory / "edges.csv", graph)
    if table.has_ground_truth:
        cols = [f"do{v}_{name}" for v in (0, 1) for name in x_names] + ["y_do0", "y_do1"]
        with open(directory / "interventional.csv", "w") as fh:
            fh.write(",".join(["id", *cols]) + "\n")
            for i in range(len(table)):
                row = [*map(_fmt, table.x_do[0][i]), *map(_fmt, table.x_do[1][i]),
                       str(table.y_do[0][i]), str(table.y_do[1][i])]
                fh.write(",".join([str(i), *row]) + "\n")
    manifest = DatasetManifest(
        name=str(table.meta.get("name", directory.name)), node_file="nodes.csv", edge_file="edges.csv",
        sensitive_column="s", label_column="y", z_columns=tuple(z_names), feature_columns=tuple(x_names),
        positive_values={"s": "1", "y": "1"}, standardize=False, dedupe_edges=False)
    write_manifest(directory / "manifest.json", manifest)
    if provenance is not None:
        with open(directory / "provenance.json", "w") as fh:
            json.dump(provenance, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return directory


def read_dataset(directory):
    """Inverse of :func:`write_dataset`; attaches ground truth if present."""
    directory = Path(directory)
    if not (directory / "manifest.json").exists():
        raise DataError(f"{directory}: not a dataset directory (no manifest.json)")
    manifest = read_manifest(directory / "manifest.json")
    graph, table = load_dataset(manifest, root=directory)
    gt = directory / "interventional.csv"
    if gt.exists():
        header, rows = _read_rows(gt)
        data = np.array([[float(c) for c in row] for _, row in rows])
        if len(data) != len(table):
            raise DataError(f"{gt}: {len(data)} rows but the node table has {len(table)}")
        d = table.x.shape[1]
        table.x_do = {0: data[:, 1:1 + d], 1: data[:, 1 + d:1 + 2 * d]}
        table.y_do = {0: data[:, -2].astype(np.int64), 1: data[:, -1].astype(np.int64)}
    prov = directory / "provenance.json"
    if prov.exists():
        with open(prov) as fh:
            table.meta["provenance"] = json.load(fh)
        table.meta.setdefault("digest", table.meta["provenance"].get("digest", ""))
        table.meta.setdefault("seed", table.meta["provenance"].get("seed"))
    return graph, table
