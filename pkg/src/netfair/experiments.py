"""End-to-end studies on generated data: fit, audit, mitigate, select lambda."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dataio, fairness, nscm
from .mpva import MpvaConfig, MpvaModel


@dataclass
class Prepared:
    graph: object
    table: object
    spec: object
    model: MpvaModel
    x_tilde: tuple
    split: tuple


def prepare(preset, seed, mpva_overrides=None, **gen_overrides):
    """Generate ``preset`` data and fit an MPVA whose depth matches the hops."""
    graph, table, spec = nscm.generate_preset(preset, seed=seed, **gen_overrides)
    cfg = MpvaConfig(layers=spec.hops, seed=seed, **(mpva_overrides or {}))
    model = MpvaModel(table.x.shape[1], table.z.shape[1], cfg).fit(graph, table)
    x_tilde = fairness.interventional_features(model, graph, table)
    split = fairness.split_nodes(table.s, seed=seed)
    return Prepared(graph, table, spec, model, x_tilde, split)


def own_metric(h, prep, objective, nodes):
    return fairness.own_metric(h, prep.table, objective, nodes, prep.x_tilde)


def _cfg(prep, cfg):
    return cfg or fairness.ClassifierConfig(seed=int(prep.table.meta.get("seed", 0)))


def train(prep, objective="none", lam=0.0, cfg=None):
    return fairness.train_fair_classifier(prep.graph, prep.table, objective=objective, lam=lam,
                                          cfg=_cfg(prep, cfg), split=prep.split, x_tilde=prep.x_tilde)


def select_lambda(prep, objective, grid=fairness.LAMBDA_GRID, budget=0.02, cfg=None):
    return fairness.select_lambda(prep.graph, prep.table, objective, grid, budget, _cfg(prep, cfg),
                                  split=prep.split, x_tilde=prep.x_tilde)


def summarize(values):
    values = np.asarray(values, dtype=np.float64)
    return float(values.mean()), float(values.std())


GERMAN_FEATURES = ("LoanAmount", "LoanDuration", "PurposeOfLoan", "InstallmentRate", "Savings", "CheckingAccount")


def write_german_format(directory, preset="d1", seed=0, n=1000):
    """Write a dataset laid out like the public German credit graph files.

    Sex and label are string/signed coded (``Female``/``Male``,
    ``GoodCustomer`` in ``{-1, 1}``), one covariate is categorical text,
    every edge is listed in both orientations, and no interventional ground
    truth is shipped.  The values come from the semi-synthetic generator.
    Returns the manifest path.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    graph, table, _ = nscm.generate_preset(preset, seed=seed, n=n)
    purpose = np.array(["car", "education", "furniture", "business"])
    # categorical column: quartile of the third covariate, written as text
    bucket = np.searchsorted(np.quantile(table.x[:, 2], [0.25, 0.5, 0.75]), table.x[:, 2])
    header = ["Gender", "Age", "Single", "Telephone", *GERMAN_FEATURES, "GoodCustomer"]
    with open(directory / "german.csv", "w") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(len(table)):
            x = [f"{v:.6f}" for v in table.x[i]]
            x[2] = purpose[bucket[i]]
            row = ["Male" if table.s[i] else "Female", *(f"{v:.6f}" for v in table.z[i]), *x,
                   "1" if table.y[i] else "-1"]
            fh.write(",".join(row) + "\n")
    with open(directory / "german_edges.csv", "w") as fh:
        fh.write("src,dst\n")
        for i, j in graph.edge_array():
            fh.write(f"{i},{j}\n{j},{i}\n")
    manifest = dataio.DatasetManifest(
        name=f"german-format-{preset}-seed{seed}", node_file="german.csv", edge_file="german_edges.csv",
        sensitive_column="Gender", label_column="GoodCustomer", z_columns=("Age", "Single", "Telephone"),
        categorical_columns=("PurposeOfLoan",), positive_values={"Gender": "Male", "GoodCustomer": "1"})
    path = directory / "manifest.json"
    dataio.write_manifest(path, manifest)
    return path
