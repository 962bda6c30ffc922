"""Semi-synthetic networked datasets with known interventional ground truth.

A dataset is produced by an additive network structural causal model

    S_i ~ Bernoulli(f_s(Z_i))
    A   = g(S)                      fixed random k-hop message passing over S
    X_i = A_i + C_i + xi_i          xi ~ N(0, sigma^2)
    Y_i = 1[f_y(X_i) > 0.5]

on a graph whose edges are drawn from a logistic function of covariate
distance plus an S-homophily bonus.  Because every exogenous term is stored
on the :class:`NodeTable`, forcing ``S`` to a constant and re-running the
mechanism gives exact interventional features.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
from sklearn.linear_model import LogisticRegression

from .graph import Graph, build_graph


class GenerationError(ValueError):
    pass


@dataclass(frozen=True)
class GenConfig:
    preset: str = "custom"
    seed: int = 0
    n: int = 2000
    hops: int = 1
    noise_sigma: float = 0.3
    alpha: float = -5.0
    beta: float = 1.0
    gamma: float = 1.0
    effect: float = 1.0
    width: int = 4

    def validate(self):
        problems = []
        if self.n < 2:
            problems.append(f"n must be >= 2 (got {self.n})")
        if self.hops < 1:
            problems.append(f"hops must be >= 1 (got {self.hops})")
        if self.noise_sigma < 0:
            problems.append(f"noise_sigma must be >= 0 (got {self.noise_sigma})")
        if self.beta < 0:
            problems.append(f"beta must be >= 0 (got {self.beta})")
        if self.width < 1:
            problems.append(f"width must be >= 1 (got {self.width})")
        if problems:
            raise GenerationError("; ".join(problems))
        return self

    def digest(self):
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_mapping(cls, mapping):
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(mapping) - set(known))
        if unknown:
            raise GenerationError(f"unknown config keys: {', '.join(unknown)}")
        base = PRESETS[mapping["preset"]] if mapping.get("preset") in PRESETS else cls()
        typed = {k: type(getattr(base, k))(v) for k, v in mapping.items()}
        return replace(base, **typed).validate()


# D1 is sparser with a weak neighbourhood effect; D2 is denser, more
# homophilous and less noisy, with a strong effect.  S3 reaches three hops.
PRESETS = {
    "d1": GenConfig(preset="d1", hops=1, noise_sigma=0.3, alpha=-4.0, beta=1.0, gamma=2.0, effect=0.6),
    "d2": GenConfig(preset="d2", hops=1, noise_sigma=0.2, alpha=-3.5, beta=1.0, gamma=2.5, effect=2.0),
    "s3": GenConfig(preset="s3", hops=3, noise_sigma=0.3, alpha=-4.0, beta=1.0, gamma=2.0, effect=1.0),
}


def preset(name, **overrides):
    if name not in PRESETS:
        raise GenerationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return replace(PRESETS[name], **overrides).validate()


# ------------------------------------------------------------------ tables

@dataclass
class BaseTable:
    """Covariates plus raw sensitive attribute and label.

    ``z`` holds the designated pre-treatment covariates, ``r`` the remaining
    ones.  ``s`` and ``y`` are the raw (observed) binary columns the
    generator's logistic models are fitted to.
    """

    z: np.ndarray
    r: np.ndarray
    s: np.ndarray
    y: np.ndarray
    z_names: tuple = ("education", "marriage", "age")
    r_names: tuple = ()

    def __len__(self):
        return len(self.s)


@dataclass
class NodeTable:
    s: np.ndarray
    z: np.ndarray
    x: np.ndarray
    y: np.ndarray
    y_prob: np.ndarray | None = None
    base: np.ndarray | None = None
    xi: np.ndarray | None = None
    x_do: dict = field(default_factory=dict)
    y_do: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.s)
        self.s = np.asarray(self.s, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.z = np.asarray(self.z, dtype=np.float64).reshape(n, -1)
        self.x = np.asarray(self.x, dtype=np.float64).reshape(n, -1)
        for name in ("z", "x", "y"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name} has length {len(getattr(self, name))}, expected {n}")
        if not np.isin(self.s, (0, 1)).all():
            raise ValueError("s must be binary {0,1}")
        if not np.isin(self.y, (0, 1)).all():
            raise ValueError("y must be binary {0,1}")

    def __len__(self):
        return len(self.s)

    @property
    def has_ground_truth(self):
        return 0 in self.x_do and 1 in self.x_do

    def subset(self, idx):
        idx = np.asarray(idx)
        pick = lambda a: None if a is None else a[idx]
        return NodeTable(
            s=self.s[idx], z=self.z[idx], x=self.x[idx], y=self.y[idx],
            y_prob=pick(self.y_prob), base=pick(self.base), xi=pick(self.xi),
            x_do={k: v[idx] for k, v in self.x_do.items()},
            y_do={k: v[idx] for k, v in self.y_do.items()},
            meta=dict(self.meta),
        )

    def permute(self, perm):
        """Reorder so that old row ``i`` becomes row ``perm[i]``."""
        inv = np.argsort(perm)
        return self.subset(inv)


def make_credit_like_base(n, seed=0, n_r=6, resid=0.4):
    """Synthetic stand-in for the Credit Defaulter table.

    Education, marriage and age act as ``z``.  The remaining covariates are
    linear in ``z`` plus an independent residual of scale ``resid``.  Raw sex
    depends on ``z`` only; raw default on the ``z``-explained part of the
    remaining covariates.
    """
    rng = np.random.default_rng(seed)
    education = rng.choice([1, 2, 3, 4], size=n, p=[0.35, 0.45, 0.15, 0.05]).astype(float)
    marriage = rng.choice([1, 2, 3], size=n, p=[0.45, 0.5, 0.05]).astype(float)
    age = np.clip(rng.gamma(9.0, 4.0, size=n), 21, 79)
    z = np.column_stack([education, marriage, age])
    z = (z - z.mean(0)) / z.std(0)

    loading = rng.normal(scale=1.0 / np.sqrt(3), size=(3, n_r))
    explained = z @ loading
    r = explained + resid * rng.normal(size=(n, n_r))
    mu, sd = r.mean(0), r.std(0)
    r = (r - mu) / sd

    logit_s = 0.2 + z @ np.array([0.6, -0.5, 0.4])
    s = (rng.random(n) < 1 / (1 + np.exp(-logit_s))).astype(np.int64)
    logit_y = -0.3 + 2.0 * ((explained - mu) / sd) @ rng.normal(size=n_r)
    y = (rng.random(n) < 1 / (1 + np.exp(-logit_y))).astype(np.int64)
    names = ("limit_bal", "bill_amt", "pay_amt", "pay_delay", "utilization", "balance_trend")[:n_r]
    return BaseTable(z=z, r=r, s=s, y=y, r_names=names)


# --------------------------------------------------------------- mechanism

@dataclass
class LogisticModel:
    coef: np.ndarray
    intercept: float

    @classmethod
    def fit(cls, features, target):
        target = np.asarray(target)
        if len(np.unique(target)) < 2:
            raise GenerationError("degenerate base data: target column is constant")
        model = LogisticRegression(C=1e4, max_iter=2000).fit(features, target)
        return cls(model.coef_[0].astype(np.float64), float(model.intercept_[0]))

    def logit(self, features):
        return np.asarray(features) @ self.coef + self.intercept

    def proba(self, features):
        return 1.0 / (1.0 + np.exp(-self.logit(features)))


@dataclass
class MessagePassingMechanism:
    """Fixed random sum-aggregation GNN mapping the S column to ``a``.

    ``h <- tanh(scale * (A + I) h W_l)`` for each hop, then ``a = h W_out``.
    ``scale`` is ``1 / (1 + mean degree)``, a constant, so aggregation stays
    a sum and ``a_i`` depends only on S within ``len(weights)`` hops.
    """

    weights: list
    readout: np.ndarray
    scale: float = 1.0

    @classmethod
    def random(cls, hops, width, out_dim, effect, rng, scale=1.0):
        dims = [1] + [width] * hops
        weights = [rng.normal(scale=np.sqrt(1.0 / a), size=(a, b)) for a, b in zip(dims[:-1], dims[1:])]
        readout = effect * rng.normal(scale=np.sqrt(1.0 / width), size=(width, out_dim))
        return cls(weights, readout, scale)

    @property
    def hops(self):
        return len(self.weights)

    def hidden(self, graph, s):
        prop = graph.adjacency_matrix(self_loops=True)
        h = np.asarray(s, dtype=np.float64).reshape(-1, 1)
        for w in self.weights:
            h = np.tanh(self.scale * (prop @ h) @ w)
        return h

    def __call__(self, graph, s):
        return self.hidden(graph, s) @ self.readout


class ZeroMechanism:
    """No interference: ``a`` is identically zero."""

    hops = 0

    def __init__(self, out_dim):
        self.out_dim = out_dim

    def __call__(self, graph, s):
        return np.zeros((len(s), self.out_dim))


@dataclass
class NscmSpec:
    hops: int
    f_mp: object
    noise_sigma: float
    f_y: LogisticModel
    f_s: LogisticModel | None = None
    config: GenConfig | None = None

    def f_int(self, a, base, xi):
        return a + base + xi

    def label(self, x):
        prob = self.f_y.proba(x)
        return (prob > 0.5).astype(np.int64), prob


def sample_edges(features, s, alpha, beta, gamma, rng, block=512):
    """Draw each pair independently with probability
    ``sigmoid(alpha - beta * ||c_i - c_j|| + gamma * [s_i == s_j])``."""
    n = len(features)
    sq = (features**2).sum(1)
    out = []
    for lo in range(0, n, block):
        hi = min(n, lo + block)
        d2 = sq[lo:hi, None] + sq[None, :] - 2.0 * features[lo:hi] @ features.T
        dist = np.sqrt(np.maximum(d2, 0.0))
        logits = alpha - beta * dist + gamma * (s[lo:hi, None] == s[None, :])
        prob = 1.0 / (1.0 + np.exp(-logits))
        draw = rng.random(prob.shape) < prob
        ii, jj = np.nonzero(draw)
        ii = ii + lo
        keep = ii < jj
        out.append(np.column_stack([ii[keep], jj[keep]]))
    return np.concatenate(out) if out else np.zeros((0, 2), dtype=np.int64)


def _orient_readout(graph, f_mp, f_y, base_x, effect, rng, cos=0.3):
    """Rewrite the readout so the mean do(1)-minus-do(0) feature shift has
    cosine ``cos`` with the label direction and moves the label logit by
    ``effect`` standard deviations of the S-free logit.

    Only the readout component along the mean hidden shift is replaced; the
    rest stays random, so per-node effects still vary with structure.
    """
    hidden_shift = (f_mp.hidden(graph, np.ones(graph.n)) - f_mp.hidden(graph, np.zeros(graph.n))).mean(0)
    w = f_y.coef / np.linalg.norm(f_y.coef)
    other = rng.normal(size=w.shape)
    other -= (other @ w) * w
    other /= np.linalg.norm(other)
    direction = cos * w + np.sqrt(1.0 - cos**2) * other
    spread = float(np.std(base_x @ f_y.coef))
    target = direction * effect * spread / (cos * np.linalg.norm(f_y.coef))
    u = hidden_shift / (hidden_shift @ hidden_shift)
    proj = np.eye(len(u)) - np.outer(hidden_shift, u)
    f_mp.readout = proj @ f_mp.readout + np.outer(u, target)


def generate_semi_synthetic(base, cfg, seed=None):
    """Build ``(graph, table, spec)`` from a base table; see module docstring.

    The returned table already carries ground-truth interventional columns
    for ``s = 0`` and ``s = 1``.
    """
    cfg = cfg.validate()
    seed = cfg.seed if seed is None else seed
    if len(base) == 0:
        raise GenerationError("base table is empty")
    rng = np.random.default_rng(seed)
    n = len(base)

    f_s = LogisticModel.fit(base.z, base.s)
    s = (rng.random(n) < f_s.proba(base.z)).astype(np.int64)

    covariates = np.column_stack([base.z, base.r])
    edges = sample_edges(covariates, s, cfg.alpha, cfg.beta, cfg.gamma, rng)
    graph = build_graph(n, edges)

    mean_degree = 2.0 * graph.num_edges / n
    x_dim = base.r.shape[1]
    base_x = base.r
    f_y = LogisticModel.fit(base_x, base.y)

    f_mp = MessagePassingMechanism.random(cfg.hops, cfg.width, x_dim, 1.0, rng,
                                          scale=1.0 / (1.0 + mean_degree))
    _orient_readout(graph, f_mp, f_y, base_x, cfg.effect, rng)

    xi = rng.normal(scale=cfg.noise_sigma, size=(n, x_dim)) if cfg.noise_sigma > 0 else np.zeros((n, x_dim))
    spec = NscmSpec(cfg.hops, f_mp, cfg.noise_sigma, f_y, f_s, cfg)
    x = spec.f_int(f_mp(graph, s), base_x, xi)
    y, y_prob = spec.label(x)
    table = NodeTable(s=s, z=base.z, x=x, y=y, y_prob=y_prob, base=base_x, xi=xi,
                      meta={"z_names": tuple(base.z_names), "x_names": tuple(base.r_names),
                            "digest": cfg.digest(), "seed": seed})
    for value in (0, 1):
        table.x_do[value] = ground_truth_intervention(graph, spec, table, value)
        table.y_do[value] = spec.label(table.x_do[value])[0]
    return graph, table, spec


def ground_truth_intervention(graph, spec, table, s_value):
    """Features under do(S = s_value) for every node, reusing stored noise."""
    if table.xi is None or table.base is None:
        raise GenerationError("table carries no stored exogenous terms; cannot intervene")
    if s_value not in (0, 1):
        raise GenerationError(f"s_value must be 0 or 1, got {s_value!r}")
    forced = np.full(len(table), s_value, dtype=np.int64)
    return spec.f_int(spec.f_mp(graph, forced), table.base, table.xi)


def generate_preset(name, seed=0, base_resid=0.4, **overrides):
    cfg = preset(name, seed=seed, **overrides)
    base = make_credit_like_base(cfg.n, seed=seed, resid=base_resid)
    return generate_semi_synthetic(base, cfg)
