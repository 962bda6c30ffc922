"""Fairness metrics, their smooth regularisers and the regularised trainer.

All metrics use ``{0, 1}`` labels.  ``risk_difference`` and ``gcf`` audits
threshold the classifier; ``iid_cf`` and the regularisers use sigmoid scores.
"""
from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass

import numpy as np
from sklearn.linear_model import LogisticRegression
from sklearn.model_selection import train_test_split

from . import autodiff as ad
from . import nn
from .autodiff import Tensor

OBJECTIVES = ("none", "rd", "cf", "gcf")
LAMBDA_GRID = (0.1, 0.5, 1.0, 2.0, 5.0, 10.0)
PROPENSITY_CLIP = (0.01, 0.99)


class FairnessError(ValueError):
    pass


# --------------------------------------------------------------- classifier

@dataclass(frozen=True)
class ClassifierConfig:
    hidden: int = 16
    lr: float = 0.01
    epochs: int = 600
    temperature: float = 1.0
    test_frac: float = 0.2
    gcn: bool = False
    seed: int = 0


class Classifier(nn.Module):
    """MLP from ``x`` to one logit.

    With ``gcn=True`` each layer first propagates over the normalised
    adjacency, the "conventional GCN" baseline; such a classifier must be
    bound to a graph via :meth:`bind` before use.
    """

    def __init__(self, x_dim, hidden=16, rng=None, gcn=False):
        rng = np.random.default_rng(0) if rng is None else rng
        self.x_dim = x_dim
        self.gcn = gcn
        self.net = nn.MLP([x_dim, hidden, 1], rng)
        self._propagate = None

    def bind(self, graph):
        """Shallow copy that shares parameters but propagates over ``graph``."""
        out = copy.copy(self)
        if self.gcn:
            adj = graph.adjacency_matrix(self_loops=True)
            deg = np.asarray(adj.sum(axis=1)).ravel()
            inv = 1.0 / np.sqrt(deg)
            out._propagate = adj.multiply(inv[:, None]).multiply(inv[None, :]).tocsr()
        return out

    def logits(self, x):
        h = ad.as_tensor(x)
        if not self.gcn:
            return self.net(h)
        if self._propagate is None:
            raise FairnessError("GCN classifier used before bind(graph)")
        first, second = self.net.layers
        h = ad.tanh(first(ad.spmm(self._propagate, h)))
        return second(ad.spmm(self._propagate, h))

    def scores(self, x):
        return ad.sigmoid(self.logits(x)).data.ravel()

    def predict(self, x):
        return (self.logits(x).data.ravel() > 0.0).astype(np.int64)


class ConstantClassifier:
    """Predicts the same label everywhere; useful as a fairness reference."""

    def __init__(self, label=1):
        self.label = int(label)

    def bind(self, graph):
        return self

    def logits(self, x):
        return Tensor(np.full((len(x), 1), 8.0 if self.label else -8.0))

    def scores(self, x):
        return ad.sigmoid(self.logits(x)).data.ravel()

    def predict(self, x):
        return np.full(len(x), self.label, dtype=np.int64)


# ------------------------------------------------------------------ metrics

def _nodes(n, nodes):
    return np.arange(n) if nodes is None else np.asarray(nodes)


def _groups(s, nodes):
    s = np.asarray(s)[nodes]
    pos, neg = nodes[s == 1], nodes[s == 0]
    if len(pos) == 0 or len(neg) == 0:
        raise FairnessError("risk difference needs both sensitive groups to be non-empty")
    return pos, neg


def risk_difference(h, table, nodes=None):
    nodes = _nodes(len(table), nodes)
    pos, neg = _groups(table.s, nodes)
    pred = h.predict(table.x)
    return float(abs(pred[pos].mean() - pred[neg].mean()))


def propensity_weights(s, z, clip=PROPENSITY_CLIP):
    """``P(s_i) / P(s_i | z_i)`` with a logistic propensity model."""
    s = np.asarray(s, dtype=np.int64)
    z = np.asarray(z, dtype=np.float64)
    if len(np.unique(s)) < 2:
        raise FairnessError("propensity model needs both values of s")
    if z.ndim == 1:
        z = z[:, None]
    if z.shape[1] == 0 or np.all(z.std(axis=0) == 0):
        # no usable covariate: P(s|z) = P(s) and every weight is one
        return np.ones(len(s))
    model = LogisticRegression(C=1e4, max_iter=2000).fit(z, s)
    p1 = np.clip(model.predict_proba(z)[:, 1], *clip)
    p_s1 = s.mean()
    return np.where(s == 1, p_s1 / p1, (1.0 - p_s1) / (1.0 - p1))


def group_normalised(weights, s):
    """Rescale ``weights`` to mean one inside each ``s`` group.

    Each group's weights have expectation one, so this keeps the target
    while making a constant score give exactly zero disparity.
    """
    weights = np.asarray(weights, dtype=np.float64).copy()
    s = np.asarray(s)
    for v in (0, 1):
        if np.any(s == v):
            weights[s == v] /= weights[s == v].mean()
    return weights


def iid_do_means(scores, s, weights):
    """Propensity-weighted ``P(y | do(s))`` for ``s = 0, 1``."""
    s = np.asarray(s)
    weights = group_normalised(weights, s)
    return {v: float(np.mean(weights[s == v] * scores[s == v])) for v in (0, 1)}


def iid_cf(h, table, nodes=None, weights=None):
    nodes = _nodes(len(table), nodes)
    _groups(table.s, nodes)
    s = np.asarray(table.s)[nodes]
    if weights is None:
        weights = propensity_weights(s, table.z[nodes])
    means = iid_do_means(h.scores(table.x)[nodes], s, weights)
    return abs(means[1] - means[0])


def gcf_from_features(h, x_pos, x_neg, nodes=None):
    """Hard-threshold gap ``|P(h(x+) = 1) - P(h(x-) = 1)|`` over ``nodes``."""
    nodes = _nodes(len(x_pos), nodes)
    return float(abs(h.predict(x_pos)[nodes].mean() - h.predict(x_neg)[nodes].mean()))


def true_gcf(h, table, nodes=None):
    if not table.has_ground_truth:
        raise FairnessError("table carries no interventional ground truth")
    return gcf_from_features(h, table.x_do[1], table.x_do[0], nodes)


# -------------------------------------------------------------- regularisers

def _smooth(h, x, temperature):
    return ad.sigmoid(ad.mul(h.logits(x), 1.0 / temperature))


def _masked_mean(t, nodes):
    return ad.reduce_mean(ad.slice_(t, (np.asarray(nodes), slice(None))))


def gcf_regularizer(h, x_pos, x_neg, nodes=None, temperature=1.0):
    """``|mean u(h(x+)) - mean u(h(x-))|`` with ``u = sigmoid(logit / T)``.

    The interventional features are constants, so only ``h`` is trained.
    """
    nodes = _nodes(len(x_pos), nodes)
    gap = ad.sub(_masked_mean(_smooth(h, x_pos, temperature), nodes),
                 _masked_mean(_smooth(h, x_neg, temperature), nodes))
    return ad.abs(gap)


def rd_regularizer(h, table, nodes=None, temperature=1.0):
    nodes = _nodes(len(table), nodes)
    pos, neg = _groups(table.s, nodes)
    score = _smooth(h, table.x, temperature)
    return ad.abs(ad.sub(_masked_mean(score, pos), _masked_mean(score, neg)))


def cf_regularizer(h, table, nodes=None, temperature=1.0, weights=None):
    nodes = _nodes(len(table), nodes)
    pos, neg = _groups(table.s, nodes)
    s = np.asarray(table.s)
    if weights is None:
        w = np.empty(len(table))
        w[nodes] = propensity_weights(s[nodes], table.z[nodes])
    else:
        w = np.asarray(weights, dtype=np.float64).copy()
    w[nodes] = group_normalised(w[nodes], s[nodes])
    weighted = ad.mul(_smooth(h, table.x, temperature), w[:, None])
    return ad.abs(ad.sub(_masked_mean(weighted, pos), _masked_mean(weighted, neg)))


# ------------------------------------------------------------------ training

@dataclass
class FairnessReport:
    dataset: str = ""
    method: str = "none"
    seed: int = 0
    lam: float = 0.0
    accuracy: float = float("nan")
    rd: float = float("nan")
    cf: float = float("nan")
    gcf: float = None
    true_gcf: float = None
    own_train: float = None
    own_test: float = None
    digest: str = ""
    notes: str = ""

    HEADER = ("dataset", "method", "seed", "lam", "accuracy", "rd", "cf", "gcf",
              "true_gcf", "own_train", "own_test", "digest", "notes")

    def to_record(self):
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return f"{v:.6f}"
            return str(v).replace(",", ";")
        return ",".join(fmt(getattr(self, k)) for k in self.HEADER)

    @classmethod
    def from_record(cls, line):
        parts = line.rstrip("\n").split(",")
        if len(parts) != len(cls.HEADER):
            raise FairnessError(f"expected {len(cls.HEADER)} fields, got {len(parts)}: {line!r}")
        out = {}
        for key, raw in zip(cls.HEADER, parts):
            if raw == "" and key in ("gcf", "true_gcf", "own_train", "own_test"):
                out[key] = None
            elif key in ("seed",):
                out[key] = int(raw)
            elif key in ("dataset", "method", "digest", "notes"):
                out[key] = raw
            else:
                out[key] = float(raw)
        return cls(**out)

    def check_finite(self):
        for key in ("accuracy", "rd", "cf", "gcf", "true_gcf"):
            v = getattr(self, key)
            if v is not None and not np.isfinite(v):
                raise FairnessError(f"report metric {key} is not finite")
        return self

    def as_dict(self):
        return asdict(self)


def split_nodes(s, test_frac=0.2, seed=0):
    """80/20 style split stratified on ``s``; returns sorted index arrays."""
    idx = np.arange(len(s))
    train, test = train_test_split(idx, test_size=test_frac, stratify=s, random_state=seed)
    return np.sort(train), np.sort(test)


def interventional_features(mpva, graph, table):
    pair = mpva.interventional_pair(graph, table)
    return pair[1], pair[0]


def train_fair_classifier(graph, table, mpva=None, objective="none", lam=0.0,
                          cfg=ClassifierConfig(), split=None, x_tilde=None, dataset=""):
    """Minimise cross-entropy plus ``lam`` times the chosen fairness term.

    ``x_tilde`` optionally supplies precomputed ``(x+, x-)`` interventional
    features so sweeps can reuse one MPVA pass.  Metrics are reported on the
    held-out nodes; the regulariser value is reported on both splits.
    """
    if objective not in OBJECTIVES:
        raise FairnessError(f"unknown objective {objective!r}; choose from {OBJECTIVES}")
    if lam < 0:
        raise FairnessError(f"lambda must be non-negative, got {lam}")
    if x_tilde is None and mpva is not None:
        x_tilde = interventional_features(mpva, graph, table)
    if objective == "gcf" and x_tilde is None:
        raise FairnessError("objective 'gcf' requires a trained MPVA model")

    train, test = split if split is not None else split_nodes(table.s, cfg.test_frac, cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    h = Classifier(table.x.shape[1], cfg.hidden, rng, gcn=cfg.gcn).bind(graph)
    weights = np.empty(len(table))
    weights[train] = propensity_weights(table.s[train], table.z[train])
    weights[test] = propensity_weights(table.s[test], table.z[test])

    def penalty(nodes):
        if objective == "rd":
            return rd_regularizer(h, table, nodes, cfg.temperature)
        if objective == "cf":
            return cf_regularizer(h, table, nodes, cfg.temperature, weights)
        return gcf_regularizer(h, x_tilde[0], x_tilde[1], nodes, cfg.temperature)

    y = table.y.astype(np.float64)[:, None]
    opt = nn.Adam(h.parameters(), lr=cfg.lr)
    for epoch in range(cfg.epochs):
        opt.zero_grad()
        logits = h.logits(table.x)
        loss = nn.bce_with_logits(ad.slice_(logits, (train, slice(None))), y[train])
        if objective != "none" and lam > 0:
            loss = ad.add(loss, ad.mul(penalty(train), lam))
        if not np.isfinite(loss.data).all():
            raise FairnessError(f"classifier training diverged at epoch {epoch}")
        ad.backward(loss)
        opt.step()

    report = evaluate(h, graph, table, test, x_tilde=x_tilde, weights=weights)
    report.dataset = dataset
    report.method = objective
    report.seed = cfg.seed
    report.lam = float(lam)
    report.digest = str(table.meta.get("digest", ""))
    if objective != "none":
        report.own_train = float(penalty(train).item())
        report.own_test = float(penalty(test).item())
    if table.z.shape[1] == 0:
        report.notes = "no z columns: cf equals the group-mean difference"
    return h, report.check_finite()


def own_metric(h, table, objective, nodes, x_tilde=None):
    """Hard-threshold value of the quantity ``objective`` penalises."""
    if objective == "gcf":
        return gcf_from_features(h, x_tilde[0], x_tilde[1], nodes)
    if objective == "rd":
        return risk_difference(h, table, nodes)
    return iid_cf(h, table, nodes)


def select_lambda(graph, table, objective, grid=LAMBDA_GRID, budget=0.02, cfg=ClassifierConfig(),
                  split=None, x_tilde=None, dataset=""):
    """Smallest ``lam`` in ``grid`` whose own metric on training nodes is
    within ``budget``, else the grid value with the lowest one.

    Only training nodes and the model's own estimates are consulted, never
    interventional ground truth.  Returns ``(lam, h, report, tried)`` where
    ``tried`` lists ``(own_train, lam)`` pairs in the order visited.
    """
    if objective == "none":
        raise FairnessError("lambda selection needs a fairness objective")
    split = split if split is not None else split_nodes(table.s, cfg.test_frac, cfg.seed)
    tried, best = [], None
    for lam in sorted(grid):
        h, report = train_fair_classifier(graph, table, objective=objective, lam=lam, cfg=cfg,
                                          split=split, x_tilde=x_tilde, dataset=dataset)
        value = own_metric(h, table, objective, split[0], x_tilde)
        tried.append((value, lam))
        if best is None or value < best[0]:
            best = (value, lam, h, report)
        if value <= budget:
            return lam, h, report, tried
    return best[1], best[2], best[3], tried


def evaluate(h, graph, table, nodes=None, x_tilde=None, weights=None):
    nodes = _nodes(len(table), nodes)
    pred = h.predict(table.x)
    report = FairnessReport(
        accuracy=float((pred[nodes] == table.y[nodes]).mean()),
        rd=risk_difference(h, table, nodes),
        cf=iid_cf(h, table, nodes, None if weights is None else weights[nodes]),
    )
    if x_tilde is not None:
        report.gcf = gcf_from_features(h, x_tilde[0], x_tilde[1], nodes)
    if table.has_ground_truth:
        report.true_gcf = true_gcf(h, table, nodes)
    return report


# ------------------------------------------------------------- persistence

def save_classifier(path, h):
    nn.save_checkpoint(path, h.state_dict())
    meta = {"x_dim": h.x_dim, "hidden": h.net.layers[0].weight.shape[1], "gcn": h.gcn}
    with open(str(path) + ".json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def load_classifier(path, graph=None):
    with open(str(path) + ".json") as fh:
        meta = json.load(fh)
    h = Classifier(meta["x_dim"], meta["hidden"], gcn=meta["gcn"])
    h.load_state_dict(nn.load_checkpoint(path))
    return h.bind(graph) if graph is not None else h
