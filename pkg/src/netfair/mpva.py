"""Message Passing Variational Autoencoder (MPVA) for interventional features.

Phase 1 fits an MPNN over the sensitive column together with an MLP that
predicts ``x`` from the aggregate ``a_hat`` and covariates ``z``.  Phase 2
freezes both and fits a conditional VAE for ``P(x | a_hat, z)``.  Inference
follows abduction-action-prediction: encode the observed node, force every
``s`` to a constant, recompute the aggregate and decode.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class MpvaConfig:
    layers: int = 1
    a_dim: int = 8
    v_dim: int = 8
    hidden: int = 32
    lr: float = 0.01
    epochs_phase1: int = 500
    epochs_phase2: int = 2000
    kl_beta: float = 1.0
    recon_sigma: float = 0.2
    seed: int = 0

    def validate(self):
        problems = [f"{k} must be >= 1 (got {getattr(self, k)})"
                    for k in ("layers", "a_dim", "v_dim", "hidden") if getattr(self, k) < 1]
        problems += [f"{k} must be >= 0 (got {getattr(self, k)})"
                     for k in ("epochs_phase1", "epochs_phase2", "kl_beta") if getattr(self, k) < 0]
        if self.lr <= 0:
            problems.append(f"lr must be > 0 (got {self.lr})")
        if self.recon_sigma <= 0:
            problems.append(f"recon_sigma must be > 0 (got {self.recon_sigma})")
        if problems:
            raise ValueError("; ".join(problems))
        return self


class MPNN(nn.Module):
    """``h <- tanh(norm * (A + I) h W + b)`` repeated ``layers`` times.

    Nodes enter as one-hot ``[1 - s, s]`` so that sum aggregation sees the
    neighbourhood size as well as the count of ``s = 1`` members.
    """

    def __init__(self, layers, a_dim, rng):
        dims = [2] + [a_dim] * layers
        self.layers = [nn.Linear(a, b, rng) for a, b in zip(dims[:-1], dims[1:])]

    def __call__(self, propagate, s):
        s = np.asarray(s, dtype=np.float64).reshape(-1, 1)
        h = Tensor(np.hstack([1.0 - s, s]))
        for layer in self.layers:
            h = ad.tanh(layer(ad.spmm(propagate, h)))
        return h


class MpvaModel(nn.Module):
    def __init__(self, x_dim, z_dim, cfg=MpvaConfig()):
        cfg = cfg.validate()
        rng = np.random.default_rng(cfg.seed)
        self.cfg = cfg
        self.x_dim = x_dim
        self.z_dim = z_dim
        self.mpnn = MPNN(cfg.layers, cfg.a_dim, rng)
        self.mlp = nn.MLP([cfg.a_dim + z_dim, cfg.hidden, x_dim], rng)
        self.encoder = nn.MLP([x_dim + cfg.a_dim + z_dim, cfg.hidden, 2 * cfg.v_dim], rng)
        self.decoder = nn.MLP([cfg.v_dim + cfg.a_dim + z_dim, cfg.hidden, x_dim], rng)
        self.trained = {"phase1": False, "phase2": False}
        self.loss_trace = {"phase1": [], "phase2": []}

    # ---------------------------------------------------------- components

    def propagation(self, graph):
        """``(A + I) / (1 + mean degree)``; a constant rescaling of the sum."""
        mean_degree = 2.0 * graph.num_edges / graph.n
        return graph.adjacency_matrix(self_loops=True) * (1.0 / (1.0 + mean_degree))

    def aggregate(self, graph, s, propagate=None):
        propagate = self.propagation(graph) if propagate is None else propagate
        return self.mpnn(propagate, s)

    def encode(self, x, a_hat, z):
        out = self.encoder(ad.concat([ad.as_tensor(x), a_hat, ad.as_tensor(z)], axis=1))
        d = self.cfg.v_dim
        return ad.slice_(out, (slice(None), slice(0, d))), ad.slice_(out, (slice(None), slice(d, 2 * d)))

    def decode(self, v, a_hat, z):
        return self.decoder(ad.concat([ad.as_tensor(v), a_hat, ad.as_tensor(z)], axis=1))

    def predict_x(self, a_hat, z):
        return self.mlp(ad.concat([a_hat, ad.as_tensor(z)], axis=1))

    # ------------------------------------------------------------ training

    def train_phase1(self, graph, table, epochs=None, lr=None):
        epochs = self.cfg.epochs_phase1 if epochs is None else epochs
        params = self.mpnn.parameters() + self.mlp.parameters()
        opt = nn.Adam(params, lr=self.cfg.lr if lr is None else lr)
        prop = self.propagation(graph)
        trace = self.loss_trace["phase1"]
        for epoch in range(epochs):
            opt.zero_grad()
            loss = nn.mse(self.predict_x(self.aggregate(graph, table.s, prop), table.z), table.x)
            _check_finite(loss, "phase1", epoch)
            ad.backward(loss)
            opt.step()
            trace.append(loss.item())
        self.trained["phase1"] = True
        return trace

    def train_phase2(self, graph, table, epochs=None, lr=None):
        if not self.trained["phase1"]:
            raise TrainingError("phase 2 requires a completed phase 1")
        epochs = self.cfg.epochs_phase2 if epochs is None else epochs
        opt = nn.Adam(self.encoder.parameters() + self.decoder.parameters(),
                      lr=self.cfg.lr if lr is None else lr)
        # MPNN is frozen, so its output is a constant for the whole phase
        a_hat = Tensor(self.aggregate(graph, table.s).data)
        rng = np.random.default_rng(self.cfg.seed + 1)
        weight = 1.0 / (2.0 * self.cfg.recon_sigma**2)
        trace = self.loss_trace["phase2"]
        for epoch in range(epochs):
            opt.zero_grad()
            mu, logvar = self.encode(table.x, a_hat, table.z)
            v = ad.gaussian_sample(mu, logvar, rng.standard_normal(mu.shape))
            recon = nn.sum_squared_error(self.decode(v, a_hat, table.z), table.x)
            loss = ad.add(ad.mul(recon, weight), ad.mul(nn.kl_std_normal(mu, logvar), self.cfg.kl_beta))
            _check_finite(loss, "phase2", epoch)
            ad.backward(loss)
            opt.step()
            trace.append(loss.item())
        self.trained["phase2"] = True
        return trace

    def fit(self, graph, table):
        self.train_phase1(graph, table)
        self.train_phase2(graph, table)
        return self

    # ----------------------------------------------------------- inference

    def reconstruct(self, graph, table):
        """Decoder output at the encoder mean under the observed ``s``."""
        a_hat = self.aggregate(graph, table.s)
        mu, _ = self.encode(table.x, a_hat, table.z)
        return self.decode(mu, a_hat, table.z).data

    def intervene(self, graph, table, s_value, sample=False, rng=None):
        """Abduction-action-prediction under do(S = s_value) for every node.

        Returns an :class:`Intervention` whose ``x_tilde`` row ``i`` is the
        interventional feature vector of node ``i``.  ``sample=True`` draws
        the latent from the encoder posterior instead of using its mean.
        """
        if not all(self.trained.values()):
            raise TrainingError("intervene requires a trained model (both phases)")
        a_hat = self.aggregate(graph, table.s)
        mu, logvar = self.encode(table.x, a_hat, table.z)
        v = mu.data
        if sample:
            rng = np.random.default_rng() if rng is None else rng
            v = ad.gaussian_sample(mu, logvar, rng.standard_normal(mu.shape)).data
        forced = np.full(len(table), s_value, dtype=np.float64)
        a_tilde = self.aggregate(graph, forced)
        x_tilde = self.decode(Tensor(v), a_tilde, table.z)
        return Intervention(s_value, x_tilde, a_tilde.data, v)

    def interventional_pair(self, graph, table):
        return {s: self.intervene(graph, table, s).x_tilde for s in (0, 1)}

    # ------------------------------------------------------------- persist

    def metadata(self):
        return {"x_dim": self.x_dim, "z_dim": self.z_dim, "config": asdict(self.cfg),
                "trained": dict(self.trained)}

    def save(self, path):
        nn.save_checkpoint(path, self.state_dict())
        with open(str(path) + ".json", "w") as fh:
            json.dump(self.metadata(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path):
        with open(str(path) + ".json") as fh:
            meta = json.load(fh)
        model = cls(meta["x_dim"], meta["z_dim"], MpvaConfig(**meta["config"]))
        model.load_state_dict(nn.load_checkpoint(path))
        model.trained = dict(meta["trained"])
        return model


@dataclass
class Intervention:
    s_value: int
    x_tilde_tensor: Tensor = field(repr=False)
    a_tilde: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)

    @property
    def x_tilde(self):
        return self.x_tilde_tensor.data

    def sample(self, node):
        return InterventionalSample(node, self.s_value, self.x_tilde[node], self.a_tilde[node], self.v[node])


@dataclass(frozen=True)
class InterventionalSample:
    node: int
    s_value: int
    x_tilde: np.ndarray
    a_tilde: np.ndarray
    v: np.ndarray


def _check_finite(loss, phase, epoch):
    if not np.isfinite(loss.data).all():
        raise TrainingError(f"{phase} diverged at epoch {epoch}: loss={loss.item()}")


def interventional_error(x_tilde, x_true):
    """Mean absolute deviation between estimated and true interventional rows."""
    return float(np.mean(np.abs(np.asarray(x_tilde) - np.asarray(x_true))))


def estimate_gcf(model, h, graph, table, nodes=None):
    """Hard-threshold gCF of ``h`` on the model's interventional features."""
    pair = model.interventional_pair(graph, table)
    pos, neg = h.predict(pair[1]), h.predict(pair[0])
    nodes = np.arange(len(table)) if nodes is None else np.asarray(nodes)
    return float(abs(pos[nodes].mean() - neg[nodes].mean()))
