"""Toy feed-forward embedder, manual backprop, optimizers, training loop.

The network is a stack of affine layers with relu hidden activations and
an identity output (the embedding). Gradients are hand-derived; the
finite-difference oracle in ``numeric`` is the referee. Training updates
the layer parameters and the proxy bank jointly, with all randomness
drawn from named streams split off one seed:

    init      weight / proxy initialization
    shuffle   epoch-level batch order
    synthesis pair indices and interpolation coefficients
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, InvalidParameterError, TrainingDivergedError
from .losses import (
    EmbeddingBatch,
    LossConfig,
    ProxyBank,
    loss_forward_backward,
    loss_value,
)
from .numeric import (
    beta_sample,
    finite_diff_grad,
    make_rng,
    relative_grad_error,
    split_rng,
)
from .synthesis import AugmentMode, augment, scatter_gradients

ACTIVATIONS = ("relu", "identity")

CHECKPOINT_FORMAT = "ps-lab-checkpoint"
CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------------------
# Network
# ---------------------------------------------------------------------------

@dataclass
class Layer:
    weights: np.ndarray  # in_dim x out_dim
    bias: np.ndarray     # out_dim
    activation: str

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise InvalidParameterError(
                f"unknown activation {self.activation!r}; expected {ACTIVATIONS}")


@dataclass
class MlpModel:
    layers: list

    @property
    def in_dim(self) -> int:
        return self.layers[0].weights.shape[0]

    @property
    def embedding_dim(self) -> int:
        return self.layers[-1].weights.shape[1]


def init_mlp(dims, rng: np.random.Generator) -> MlpModel:
    """Build a relu MLP for the given dimension chain.

    dims = (in, hidden..., embedding). Weights are Gaussian with
    std 1/sqrt(fan_in); biases start at zero; the last layer is linear.
    """
    if len(dims) < 2:
        raise InvalidParameterError("need at least an input and an output dim")
    layers = []
    for i in range(len(dims) - 1):
        fan_in, fan_out = dims[i], dims[i + 1]
        w = rng.normal(scale=1.0 / math.sqrt(fan_in), size=(fan_in, fan_out))
        b = np.zeros(fan_out)
        act = "identity" if i == len(dims) - 2 else "relu"
        layers.append(Layer(w, b, act))
    return MlpModel(layers)


def mlp_forward(model: MlpModel, inputs: np.ndarray):
    """Forward pass. Returns (embeddings, cache) with cache holding the
    per-layer inputs and pre-activations needed by the backward pass."""
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.in_dim:
        raise ContractError(
            f"inputs must be (batch, {model.in_dim}), got {x.shape}")
    cache = []
    for layer in model.layers:
        z = x @ layer.weights + layer.bias
        cache.append((x, z))
        x = np.maximum(z, 0.0) if layer.activation == "relu" else z
    return x, cache


def mlp_backward(model: MlpModel, cache, d_embeddings: np.ndarray):
    """Backpropagate d(loss)/d(embeddings) into per-layer (dW, db).

    Returns (grads, d_inputs) where grads is a list parallel to
    model.layers.
    """
    if len(cache) != len(model.layers):
        raise ContractError(
            f"cache holds {len(cache)} layers, model has {len(model.layers)}")
    upstream = np.asarray(d_embeddings, dtype=np.float64)
    if upstream.shape != (cache[-1][1].shape[0], model.embedding_dim):
        raise ContractError(
            f"upstream gradient shape {upstream.shape} does not match the "
            f"cached forward batch")
    grads = [None] * len(model.layers)
    for idx in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[idx]
        x_in, z = cache[idx]
        dz = upstream * (z > 0.0) if layer.activation == "relu" else upstream
        grads[idx] = (x_in.T @ dz, dz.sum(axis=0))
        upstream = dz @ layer.weights.T
    return grads, upstream


# ---------------------------------------------------------------------------
# Optimizers
# ---------------------------------------------------------------------------

@dataclass
class OptimState:
    """Adam or SGD-with-momentum over a flat list of parameter arrays."""

    kind: str
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    momentum: float = 0.9
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def init_optimizer(kind: str, params, learning_rate: float,
                   momentum: float = 0.9) -> OptimState:
    if kind not in ("adam", "sgd_momentum"):
        raise InvalidParameterError(f"unknown optimizer {kind!r}")
    if not (learning_rate > 0 and math.isfinite(learning_rate)):
        raise InvalidParameterError(f"learning rate must be positive, got {learning_rate!r}")
    state = OptimState(kind=kind, learning_rate=learning_rate, momentum=momentum)
    state.m = [np.zeros_like(p) for p in params]
    if kind == "adam":
        state.v = [np.zeros_like(p) for p in params]
    return state


def apply_updates(state: OptimState, params, grads):
    """One in-place optimizer step over parallel param/grad lists."""
    if len(params) != len(state.m) or len(params) != len(grads):
        raise ContractError("optimizer state does not match parameter list")
    state.step += 1
    if state.kind == "sgd_momentum":
        for p, g, buf in zip(params, grads, state.m):
            buf *= state.momentum
            buf += g
            p -= state.learning_rate * buf
        return
    t = state.step
    bias1 = 1.0 - state.beta1 ** t
    bias2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + state.eps)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    """Everything a training run needs; defaults mirror the toy 2-D setup."""

    loss: LossConfig = field(default_factory=LossConfig)
    ps_enabled: bool = False
    alpha: float = 0.4
    mu: float = 1.0
    static_lambda: float | None = None
    mode: AugmentMode = field(default_factory=AugmentMode)
    epochs: int = 200
    batch_size: int = 64
    seed: int = 0
    hidden_dims: tuple = (64, 64)
    embedding_dim: int = 2
    num_classes: int | None = None  # inferred from labels when None
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    momentum: float = 0.9
    grad_check: bool = True

    def __post_init__(self):
        if self.epochs < 0:
            raise InvalidParameterError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise InvalidParameterError(
                f"batch_size must be >= 1, got {self.batch_size}")
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise InvalidParameterError(f"alpha must be positive, got {self.alpha!r}")
        if self.mu < 0:
            raise InvalidParameterError(f"mu must be >= 0, got {self.mu!r}")
        if self.static_lambda is not None and not 0.0 <= self.static_lambda <= 1.0:
            raise InvalidParameterError(
                f"static_lambda must lie in [0, 1], got {self.static_lambda!r}")
        self.mode.validate()


@dataclass
class TrainResult:
    model: MlpModel
    bank: ProxyBank
    history: list  # per-epoch mean loss
    grad_check_passed: bool | None
    batch_rows_logged: list  # (embedding_rows, proxy_rows) for epoch-0 batches


def _collect_params(model: MlpModel, proxies: np.ndarray):
    params = []
    for layer in model.layers:
        params.append(layer.weights)
        params.append(layer.bias)
    params.append(proxies)
    return params


def composed_loss_and_grads(model: MlpModel, proxies: np.ndarray, inputs,
                            labels, cfg: TrainConfig,
                            syn_rng: np.random.Generator | None):
    """inputs -> MLP -> (optional synthesis) -> loss -> full gradient set.

    Returns (loss, layer_grads, d_proxies, aug_rows). When ps_enabled
    the loss is taken over the augmented batch per the configured mode
    and gradients are routed back through the interpolation adjoint.
    Modes that keep no synthetic rows never touch syn_rng.
    """
    embeddings, cache = mlp_forward(model, inputs)
    batch = EmbeddingBatch(embeddings, labels)
    bank = ProxyBank(proxies)
    if cfg.ps_enabled and cfg.mode.needs_synthetics:
        aug = augment(batch, bank, cfg.mu, syn_rng, alpha=cfg.alpha,
                      static_lambda=cfg.static_lambda, mode=cfg.mode)
        out = loss_forward_backward(aug.as_batch(), aug.as_bank(), cfg.loss)
        routed = scatter_gradients(out, aug.backmap)
        aug_rows = (aug.embeddings.shape[0], aug.proxies.shape[0])
    else:
        routed = loss_forward_backward(batch, bank, cfg.loss)
        aug_rows = (batch.n, bank.num_classes)
    layer_grads, _ = mlp_backward(model, cache, routed.d_embeddings)
    return routed.loss, layer_grads, routed.d_proxies, aug_rows


def composed_loss_only(model, proxies, inputs, labels, cfg, pairs):
    """Forward-only twin of composed_loss_and_grads with pinned pairs
    (the target the finite-difference gate perturbs)."""
    from .synthesis import assemble, synthesize

    embeddings, _ = mlp_forward(model, inputs)
    batch = EmbeddingBatch(embeddings, labels)
    bank = ProxyBank(proxies)
    if cfg.ps_enabled and cfg.mode.needs_synthetics:
        aug = assemble(batch, bank, synthesize(batch, bank, pairs), cfg.mode)
        return loss_value(aug.as_batch(), aug.as_bank(), cfg.loss)
    return loss_value(batch, bank, cfg.loss)


def gradient_check_gate(cfg: TrainConfig, n_instances: int = 10,
                        tol: float = 1e-4, seed: int = 987654321) -> bool:
    """Verify the composed analytic gradient on small random instances.

    Checks layer weights, biases, and proxies of a compact network
    against central finite differences at the configured loss kind and
    augmentation mode. Returns True when every instance stays within
    tol; training refuses to start otherwise.
    """
    from .synthesis import assemble, scatter_gradients as scatter, synthesize

    rng = make_rng(seed)
    n, c, d_in, d_emb = 6, 3, 2, 4
    for _ in range(n_instances):
        model = init_mlp((d_in, 8, d_emb), rng)
        proxies = rng.normal(size=(c, d_emb))
        inputs = rng.normal(size=(n, d_in))
        labels = np.concatenate([np.arange(c), rng.integers(0, c, size=n - c)])
        pairs = []
        if cfg.ps_enabled and cfg.mode.needs_synthetics:
            m = int(math.floor(cfg.mu * n))
            ii, jj = np.nonzero(labels[:, None] != labels[None, :])
            for _ in range(m):
                k = int(rng.integers(0, ii.size))
                lam = (cfg.static_lambda if cfg.static_lambda is not None
                       else float(rng.beta(cfg.alpha, cfg.alpha)))
                pairs.append((int(ii[k]), int(jj[k]), lam))

        def run(model=model, proxies=proxies):
            embeddings, cache = mlp_forward(model, inputs)
            batch = EmbeddingBatch(embeddings, labels)
            bank = ProxyBank(proxies)
            if pairs or (cfg.ps_enabled and cfg.mode.needs_synthetics):
                aug = assemble(batch, bank, synthesize(batch, bank, pairs),
                               cfg.mode)
                out = loss_forward_backward(aug.as_batch(), aug.as_bank(),
                                            cfg.loss)
                routed = scatter(out, aug.backmap)
            else:
                routed = loss_forward_backward(batch, bank, cfg.loss)
            layer_grads, _ = mlp_backward(model, cache, routed.d_embeddings)
            return routed, layer_grads

        routed, layer_grads = run()
        num_dp = finite_diff_grad(
            lambda p: composed_loss_only(model, p, inputs, labels, cfg, pairs),
            proxies)
        if relative_grad_error(routed.d_proxies, num_dp) >= tol:
            return False
        for li, layer in enumerate(model.layers):
            def loss_of_weights(w, li=li):
                probe = MlpModel([Layer(w if i == li else l.weights,
                                        l.bias, l.activation)
                                  for i, l in enumerate(model.layers)])
                return composed_loss_only(probe, proxies, inputs, labels, cfg,
                                          pairs)

            num_dw = finite_diff_grad(loss_of_weights, layer.weights)
            if relative_grad_error(layer_grads[li][0], num_dw) >= tol:
                return False
    return True


def train(cfg: TrainConfig, points, labels) -> TrainResult:
    """Train the toy embedder and proxies on a labeled point set.

    Deterministic for a fixed config: identical seeds give bit-identical
    parameters. Raises TrainingDivergedError (with the epoch) on a
    non-finite loss.
    """
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if points.ndim != 2 or points.shape[0] != labels.shape[0]:
        raise ContractError(
            f"points {points.shape} and labels {labels.shape} do not align")
    num_classes = cfg.num_classes or int(labels.max()) + 1

    gate_result = None
    if cfg.grad_check:
        gate_result = gradient_check_gate(cfg)
        if not gate_result:
            raise ContractError(
                "gradient self-check failed for the configured loss/mode; "
                "refusing to train")

    streams = split_rng(cfg.seed, ["init", "shuffle", "synthesis"])
    dims = (points.shape[1], *cfg.hidden_dims, cfg.embedding_dim)
    model = init_mlp(dims, streams["init"])
    proxies = streams["init"].normal(
        scale=1.0 / math.sqrt(cfg.embedding_dim),
        size=(num_classes, cfg.embedding_dim))

    params = _collect_params(model, proxies)
    optim = init_optimizer(cfg.optimizer, params, cfg.learning_rate,
                           cfg.momentum)
    history = []
    batch_rows_logged = []
    n = points.shape[0]
    for epoch in range(cfg.epochs):
        order = streams["shuffle"].permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, layer_grads, d_proxies, aug_rows = composed_loss_and_grads(
                model, proxies, points[idx], labels[idx], cfg,
                streams["synthesis"])
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch)
            if epoch == 0:
                batch_rows_logged.append(aug_rows)
            grads = []
            for dw, db in layer_grads:
                grads.append(dw)
                grads.append(db)
            grads.append(d_proxies)
            apply_updates(optim, params, grads)
            epoch_loss += loss * idx.size
        history.append(epoch_loss / n)
    return TrainResult(model=model, bank=ProxyBank(proxies), history=history,
                       grad_check_passed=gate_result,
                       batch_rows_logged=batch_rows_logged)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def _loss_config_dict(loss: LossConfig) -> dict:
    return {"kind": loss.kind, "gamma": loss.gamma, "margin": loss.margin,
            "pa_alpha": loss.pa_alpha, "pa_delta": loss.pa_delta}


def train_config_dict(cfg: TrainConfig) -> dict:
    return {
        "loss": _loss_config_dict(cfg.loss),
        "ps_enabled": cfg.ps_enabled,
        "alpha": cfg.alpha,
        "mu": cfg.mu,
        "static_lambda": cfg.static_lambda,
        "mode": {
            "use_original_embeddings": cfg.mode.use_original_embeddings,
            "use_synthetic_embeddings": cfg.mode.use_synthetic_embeddings,
            "use_original_proxies": cfg.mode.use_original_proxies,
            "use_synthetic_proxies": cfg.mode.use_synthetic_proxies,
        },
        "epochs": cfg.epochs,
        "batch_size": cfg.batch_size,
        "seed": cfg.seed,
        "hidden_dims": list(cfg.hidden_dims),
        "embedding_dim": cfg.embedding_dim,
        "num_classes": cfg.num_classes,
        "optimizer": cfg.optimizer,
        "learning_rate": cfg.learning_rate,
        "momentum": cfg.momentum,
        "grad_check": cfg.grad_check,
    }


def train_config_from_dict(data: dict) -> TrainConfig:
    loss = LossConfig(**data["loss"])
    mode = AugmentMode(**data["mode"])
    return TrainConfig(
        loss=loss, ps_enabled=data["ps_enabled"], alpha=data["alpha"],
        mu=data["mu"], static_lambda=data["static_lambda"], mode=mode,
        epochs=data["epochs"], batch_size=data["batch_size"],
        seed=data["seed"], hidden_dims=tuple(data["hidden_dims"]),
        embedding_dim=data["embedding_dim"], num_classes=data["num_classes"],
        optimizer=data["optimizer"], learning_rate=data["learning_rate"],
        momentum=data["momentum"], grad_check=data["grad_check"])


def save_checkpoint(path, model: MlpModel, bank: ProxyBank,
                    cfg: TrainConfig) -> None:
    """Write a JSON checkpoint. Floats go through repr, so the round
    trip is bit-exact."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "seed": cfg.seed,
        "config": train_config_dict(cfg),
        "layers": [
            {"weights": layer.weights.tolist(), "bias": layer.bias.tolist(),
             "activation": layer.activation}
            for layer in model.layers
        ],
        "proxies": bank.proxies.tolist(),
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n",
                          encoding="utf-8")


def load_checkpoint(path):
    """Read a checkpoint back. Returns (model, bank, config)."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("format") != CHECKPOINT_FORMAT:
        raise ContractError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    if data.get("version") != CHECKPOINT_VERSION:
        raise ContractError(
            f"checkpoint version {data.get('version')} unsupported")
    layers = [Layer(np.array(entry["weights"], dtype=np.float64),
                    np.array(entry["bias"], dtype=np.float64),
                    entry["activation"])
              for entry in data["layers"]]
    model = MlpModel(layers)
    bank = ProxyBank(np.array(data["proxies"], dtype=np.float64))
    cfg = train_config_from_dict(data["config"])
    return model, bank, cfg
