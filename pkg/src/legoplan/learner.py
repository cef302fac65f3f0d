"""Conditional variational autoencoder written directly in numpy.

The encoder maps a configuration ``x`` and its condition ``y`` (problem
features) to a diagonal Gaussian over a small latent space; the decoder maps a
latent draw plus ``y`` back to a configuration. Training minimizes

    mean squared reconstruction error + lambda * KL(q(z | x, y) || N(0, I))

with hand-written backpropagation and Adam. At test time only the decoder is
used: ``z ~ N(0, I)`` is decoded under the test problem's features.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

FORMAT_VERSION = 1

Layer = tuple[np.ndarray, np.ndarray]


def default_latent_dim(output_dim: int) -> int:
    return 3 if output_dim <= 5 else 5


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 1e-3
    lam: float = 2e-4
    latent_samples: int = 1
    hidden_width: int = 512
    latent_dim: int = 3

    def __post_init__(self):
        if min(self.epochs, self.batch_size, self.latent_samples, self.hidden_width, self.latent_dim) < 1:
            raise ValueError("epochs, batch_size, latent_samples, hidden_width and latent_dim must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")


@dataclass(eq=False)
class CvaeModel:
    """Encoder and decoder layer stacks plus the dimensions tying them together.

    ``encoder`` maps ``[x, y]`` to ``[mu, log_var]`` (width ``2 * latent_dim``);
    ``decoder`` maps ``[z, y]`` to ``x``. Hidden layers use ReLU, output layers
    are linear.
    """

    encoder: list[Layer]
    decoder: list[Layer]
    latent_dim: int
    feature_dim: int
    output_dim: int
    lam: float = 2e-4
    rng_seed: int = 0
    loss_curve: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def __post_init__(self):
        q, m, d = self.latent_dim, self.feature_dim, self.output_dim
        if q < 1:
            raise ValueError("latent_dim must be >= 1")
        _check_stack(self.encoder, d + m, 2 * q, "encoder")
        _check_stack(self.decoder, q + m, d, "decoder")

    @property
    def params(self) -> list[np.ndarray]:
        return [a for layer in self.encoder + self.decoder for a in layer]

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params)

    def copy(self) -> "CvaeModel":
        return CvaeModel(
            [(W.copy(), b.copy()) for W, b in self.encoder],
            [(W.copy(), b.copy()) for W, b in self.decoder],
            self.latent_dim,
            self.feature_dim,
            self.output_dim,
            self.lam,
            self.rng_seed,
            self.loss_curve.copy(),
        )

    def save(self, path: str | Path) -> None:
        arrays = {}
        for name, stack in (("enc", self.encoder), ("dec", self.decoder)):
            for i, (W, b) in enumerate(stack):
                arrays[f"{name}_W{i}"] = W
                arrays[f"{name}_b{i}"] = b
        meta = {
            "version": FORMAT_VERSION,
            "latent_dim": self.latent_dim,
            "feature_dim": self.feature_dim,
            "output_dim": self.output_dim,
            "lambda": self.lam,
            "rng_seed": self.rng_seed,
            "n_enc": len(self.encoder),
            "n_dec": len(self.decoder),
        }
        with open(path, "wb") as fh:
            np.savez(fh, meta=np.array(json.dumps(meta)), loss_curve=self.loss_curve, **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "CvaeModel":
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            if meta.get("version") != FORMAT_VERSION:
                raise ValueError(f"unsupported model format version {meta.get('version')}")
            enc = [(z[f"enc_W{i}"], z[f"enc_b{i}"]) for i in range(meta["n_enc"])]
            dec = [(z[f"dec_W{i}"], z[f"dec_b{i}"]) for i in range(meta["n_dec"])]
            curve = z["loss_curve"]
        return cls(
            enc,
            dec,
            meta["latent_dim"],
            meta["feature_dim"],
            meta["output_dim"],
            meta["lambda"],
            meta["rng_seed"],
            curve,
        )


def _check_stack(stack: Sequence[Layer], n_in: int, n_out: int, name: str) -> None:
    if not stack:
        raise ValueError(f"{name} has no layers")
    width = n_in
    for W, b in stack:
        if W.shape[0] != width or b.shape != (W.shape[1],):
            raise ValueError(f"{name} layer shapes are inconsistent")
        width = W.shape[1]
    if width != n_out:
        raise ValueError(f"{name} outputs {width} values, expected {n_out}")


def _init_stack(rng: np.random.Generator, sizes: Sequence[int]) -> list[Layer]:
    layers = []
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        last = i == len(sizes) - 2
        # small output layers keep the untrained decoder nearly blind to z
        scale = 0.1 * np.sqrt(1.0 / a) if last else np.sqrt(2.0 / a)
        layers.append((rng.normal(0.0, scale, size=(a, b)), np.zeros(b)))
    return layers


def init_model(
    output_dim: int,
    feature_dim: int,
    latent_dim: int = 3,
    hidden: Sequence[int] = (512, 512),
    lam: float = 2e-4,
    seed: int = 0,
) -> CvaeModel:
    rng = np.random.default_rng([seed, 17])
    enc = _init_stack(rng, [output_dim + feature_dim, *hidden, 2 * latent_dim])
    dec = _init_stack(rng, [latent_dim + feature_dim, *hidden, output_dim])
    return CvaeModel(enc, dec, latent_dim, feature_dim, output_dim, lam, seed)


# -- forward and backward ----------------------------------------------------------


def _forward(stack: Sequence[Layer], a: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Run the stack; returns the output and the input to every layer."""
    inputs = []
    for i, (W, b) in enumerate(stack):
        inputs.append(a)
        a = a @ W + b
        if i < len(stack) - 1:
            a = np.maximum(a, 0.0)
    return a, inputs


def _backward(stack: Sequence[Layer], inputs: list[np.ndarray], grad_out: np.ndarray):
    """Gradients w.r.t. every layer and w.r.t. the stack input."""
    grads: list[Layer] = [None] * len(stack)  # type: ignore[list-item]
    g = grad_out
    for i in range(len(stack) - 1, -1, -1):
        W, _ = stack[i]
        a = inputs[i]
        grads[i] = (a.T @ g, g.sum(axis=0))
        g = g @ W.T
        if i > 0:
            g = g * (a > 0)
    return grads, g


def _check_dims(model: CvaeModel, x: np.ndarray | None, y: np.ndarray) -> None:
    if y.shape[-1] != model.feature_dim:
        raise ValueError(f"feature vector has {y.shape[-1]} entries, model expects {model.feature_dim}")
    if x is not None and x.shape[-1] != model.output_dim:
        raise ValueError(f"config has {x.shape[-1]} entries, model expects {model.output_dim}")


def encode(model: CvaeModel, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and log-variance of q(z | x, y). Accepts single vectors or row batches."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    _check_dims(model, x, y)
    single = x.ndim == 1
    X, Y = np.atleast_2d(x), np.atleast_2d(y)
    out, _ = _forward(model.encoder, np.hstack([X, Y]))
    mu, log_var = out[:, : model.latent_dim], out[:, model.latent_dim :]
    return (mu[0], log_var[0]) if single else (mu, log_var)


def decode(model: CvaeModel, z: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Decoder mean for latent ``z`` under condition ``y``; touches only decoder weights."""
    z, y = np.asarray(z, dtype=float), np.asarray(y, dtype=float)
    _check_dims(model, None, y)
    single = z.ndim == 1
    Z = np.atleast_2d(z)
    Y = np.broadcast_to(np.atleast_2d(y), (len(Z), model.feature_dim))
    out, _ = _forward(model.decoder, np.hstack([Z, Y]))
    return out[0] if single else out


def kl_to_standard_normal(mu: np.ndarray, log_var: np.ndarray) -> float | np.ndarray:
    """KL(N(mu, diag(exp(log_var))) || N(0, I)), summed over the last axis."""
    mu, log_var = np.asarray(mu, dtype=float), np.asarray(log_var, dtype=float)
    # expm1(v) - v >= 0 exactly; clamp guards the last-ulp rounding
    return 0.5 * np.sum(mu**2 + np.maximum(np.expm1(log_var) - log_var, 0.0), axis=-1)


@dataclass
class LossParts:
    recon: float
    kl: float
    total: float


def loss_and_grads(
    model: CvaeModel, X: np.ndarray, Y: np.ndarray, eps: np.ndarray, lam: float
) -> tuple[LossParts, list[Layer], list[Layer]]:
    """Batch loss and its gradients for fixed noise ``eps`` of shape ``(n_z, B, q)``.

    Loss per example: squared error averaged over output dims and the
    ``n_z`` draws, plus ``lam`` times the KL term; the batch loss is the mean.
    """
    B, d = X.shape
    n_z, q = eps.shape[0], model.latent_dim
    enc_out, enc_in = _forward(model.encoder, np.hstack([X, Y]))
    mu, log_var = enc_out[:, :q], enc_out[:, q:]
    sd = np.exp(0.5 * log_var)
    Z = (mu[None] + sd[None] * eps).reshape(n_z * B, q)
    YY = np.tile(Y, (n_z, 1))
    Xh, dec_in = _forward(model.decoder, np.hstack([Z, YY]))
    resid = Xh - np.tile(X, (n_z, 1))
    recon = float(np.sum(resid**2) / (d * n_z * B))
    kl_each = kl_to_standard_normal(mu, log_var)
    kl = float(np.mean(kl_each))
    total = recon + lam * kl

    g_xh = 2.0 * resid / (d * n_z * B)
    dec_grads, g_in = _backward(model.decoder, dec_in, g_xh)
    g_z = g_in[:, :q].reshape(n_z, B, q)
    g_mu = g_z.sum(axis=0) + lam * mu / B
    g_lv = (g_z * eps).sum(axis=0) * 0.5 * sd + lam * 0.5 * (np.exp(log_var) - 1.0) / B
    enc_grads, _ = _backward(model.encoder, enc_in, np.hstack([g_mu, g_lv]))
    return LossParts(recon, kl, total), enc_grads, dec_grads


def elbo_loss(
    model: CvaeModel,
    x: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig | None = None,
    eps: np.ndarray | None = None,
    seed: int = 0,
) -> float:
    """Negative ELBO (reconstruction + lambda * KL) for one example or a batch.

    ``eps`` fixes the reparameterization noise, shape ``(n_z, B, q)``; without
    it noise is drawn from ``seed``.
    """
    cfg = cfg or TrainConfig(latent_dim=model.latent_dim, lam=model.lam)
    X, Y = np.atleast_2d(np.asarray(x, dtype=float)), np.atleast_2d(np.asarray(y, dtype=float))
    _check_dims(model, X, Y)
    if eps is None:
        eps = np.random.default_rng(seed).standard_normal((cfg.latent_samples, len(X), model.latent_dim))
    parts, _, _ = loss_and_grads(model, X, Y, eps, cfg.lam)
    return parts.total


# -- training ------------------------------------------------------------------------


class _Adam:
    def __init__(self, params: list[np.ndarray], lr: float, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def flatten_dataset(dataset: Iterable[tuple[object, np.ndarray]]) -> tuple[np.ndarray, np.ndarray]:
    """Pairs every node of every example with that example's features."""
    xs, ys = [], []
    for nodes, feats in dataset:
        configs = getattr(nodes, "configs", nodes)
        configs = np.asarray(configs, dtype=float)
        if configs.size == 0:
            continue
        configs = configs.reshape(len(configs), -1)
        xs.append(configs)
        ys.append(np.broadcast_to(np.asarray(feats, dtype=float), (len(configs), len(feats))))
    if not xs:
        raise ValueError("dataset holds no training nodes")
    return np.vstack(xs), np.vstack(ys)


def train(
    dataset: Iterable[tuple[object, np.ndarray]],
    cfg: TrainConfig = TrainConfig(),
    seed: int = 0,
    model: CvaeModel | None = None,
) -> CvaeModel:
    """Fit a CVAE with minibatch Adam; deterministic given ``seed``.

    ``dataset`` holds ``(nodes, features)`` pairs where ``nodes`` is a
    NodeSet or an array of configs. The returned model carries the per-epoch
    loss curve ``(recon, kl, total)``.
    """
    X, Y = flatten_dataset(dataset)
    n, d = X.shape
    if model is None:
        model = init_model(
            d, Y.shape[1], cfg.latent_dim, (cfg.hidden_width, cfg.hidden_width), cfg.lam, seed
        )
    else:
        model = model.copy()
        _check_dims(model, X, Y)
    rng = np.random.default_rng([seed, 29])
    params = model.params
    opt = _Adam(params, cfg.learning_rate)
    curve = np.zeros((cfg.epochs, 3))
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        sums = np.zeros(3)
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            eps = rng.standard_normal((cfg.latent_samples, len(idx), model.latent_dim))
            parts, eg, dg = loss_and_grads(model, X[idx], Y[idx], eps, cfg.lam)
            grads = [a for layer in eg + dg for a in layer]
            opt.step(params, grads)
            sums += np.array([parts.recon, parts.kl, parts.total]) * len(idx)
        curve[epoch] = sums / n
    model.loss_curve = curve
    model.lam = cfg.lam
    return model


def write_loss_curve(model: CvaeModel, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "recon", "kl", "total"])
        for i, (r, k, t) in enumerate(model.loss_curve):
            w.writerow([i, repr(float(r)), repr(float(k)), repr(float(t))])


def sample(model: CvaeModel, y: np.ndarray, n: int, seed: int = 0) -> np.ndarray:
    """``n`` decoded draws from the prior under features ``y``, clamped to the unit cube."""
    if n < 1:
        raise ValueError("n must be >= 1")
    z = np.random.default_rng([seed, 31]).standard_normal((n, model.latent_dim))
    return np.clip(decode(model, z, y), 0.0, 1.0)
