"""Small dense-network engine: PReLU, inverted dropout, exact backprop, Adam.

Networks are stacks of affine layers. Every hidden layer applies a PReLU with
one learnable slope shared across its units and optional dropout; the output
layer is affine only. Inputs are row batches of shape ``(n, in_dim)``.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path as FsPath
from typing import Sequence

import numpy as np

from .geometry import ContractViolation

INIT_SLOPE = 0.25


class Mode(str, Enum):
    TRAIN = "train"
    STOCHASTIC = "stochastic_infer"
    DETERMINISTIC = "deterministic_infer"


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str = "prelu"
    dropout_p: float = 0.0

    def __post_init__(self):
        if self.in_dim <= 0 or self.out_dim <= 0:
            raise ContractViolation(f"layer dims must be positive: {self}")
        if self.activation not in ("prelu", "identity"):
            raise ContractViolation(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout_p <= 1.0:
            raise ContractViolation(f"dropout_p outside [0, 1]: {self.dropout_p}")


def stack_specs(sizes: Sequence[int], dropout_p: float = 0.0, dropout_last_hidden: bool = True) -> list[LayerSpec]:
    """PReLU hidden layers between ``sizes[0]`` and ``sizes[-1]``, affine output.

    With ``dropout_last_hidden=False`` the final hidden layer carries no
    dropout.
    """
    if len(sizes) < 2:
        raise ContractViolation("need at least input and output sizes")
    specs = []
    n_hidden = len(sizes) - 2
    for i in range(len(sizes) - 1):
        if i == n_hidden:
            specs.append(LayerSpec(sizes[i], sizes[i + 1], "identity", 0.0))
        else:
            p = dropout_p if (dropout_last_hidden or i < n_hidden - 1) else 0.0
            specs.append(LayerSpec(sizes[i], sizes[i + 1], "prelu", p))
    return specs


@dataclass
class MlpParams:
    """Weights ``(out, in)``, biases ``(out,)`` and one PReLU slope per layer.

    The same container carries gradients and optimizer moments.
    """

    specs: list[LayerSpec]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    slopes: np.ndarray

    def __post_init__(self):
        if not (len(self.specs) == len(self.weights) == len(self.biases) == len(self.slopes)):
            raise ContractViolation("layer count differs between specs and parameters")
        for i, (s, W, b) in enumerate(zip(self.specs, self.weights, self.biases)):
            if W.shape != (s.out_dim, s.in_dim) or b.shape != (s.out_dim,):
                raise ContractViolation(
                    f"layer {i}: weight {W.shape} / bias {b.shape} do not match spec {s}"
                )
            if i and self.specs[i - 1].out_dim != s.in_dim:
                raise ContractViolation(f"layer {i} input {s.in_dim} != previous output")

    @property
    def in_dim(self) -> int:
        return self.specs[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.specs[-1].out_dim

    def arrays(self) -> list[np.ndarray]:
        """Flat view list in serialisation order (weights, bias, slope per layer)."""
        out = []
        for i in range(len(self.specs)):
            out += [self.weights[i], self.biases[i], self.slopes[i : i + 1]]
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(
            list(self.specs),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.slopes.copy(),
        )

    def zeros_like(self) -> "MlpParams":
        return MlpParams(
            list(self.specs),
            [np.zeros_like(w) for w in self.weights],
            [np.zeros_like(b) for b in self.biases],
            np.zeros_like(self.slopes),
        )

    def n_values(self) -> int:
        return sum(a.size for a in self.arrays())

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def equals(self, other: "MlpParams") -> bool:
        return self.specs == other.specs and all(
            np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays())
        )


def init_params(specs: Sequence[LayerSpec], seed: int = 0, zeros: bool = False) -> MlpParams:
    """Glorot-uniform weights, zero biases, slopes at 0.25."""
    rng = np.random.default_rng(seed)
    weights = []
    for s in specs:
        if zeros:
            weights.append(np.zeros((s.out_dim, s.in_dim)))
        else:
            lim = math.sqrt(6.0 / (s.in_dim + s.out_dim))
            weights.append(rng.uniform(-lim, lim, size=(s.out_dim, s.in_dim)))
    biases = [np.zeros(s.out_dim) for s in specs]
    slopes = np.full(len(specs), INIT_SLOPE)
    return MlpParams(list(specs), weights, biases, slopes)


def prelu(x, a):
    """``x`` where non-negative, ``a * x`` otherwise."""
    x = np.asarray(x, dtype=float)
    out = np.where(x >= 0, x, a * x)
    return float(out) if out.ndim == 0 else out


@dataclass
class ForwardCache:
    inputs: list[np.ndarray] = field(default_factory=list)
    preacts: list[np.ndarray] = field(default_factory=list)
    masks: list[np.ndarray | None] = field(default_factory=list)
    n_layers: int = 0


def forward(
    params: MlpParams,
    x,
    mode: Mode | str = Mode.DETERMINISTIC,
    rng: np.random.Generator | None = None,
    masks: Sequence[np.ndarray | None] | None = None,
) -> tuple[np.ndarray, ForwardCache]:
    """Run the network on a batch.

    In ``train`` and ``stochastic_infer`` modes every unit of a hidden layer
    with ``dropout_p > 0`` is zeroed with that probability and the survivors
    scaled by ``1 / (1 - p)``. ``masks`` replays a previous draw (one entry
    per layer, ``None`` for no dropout) instead of consuming ``rng``.
    """
    mode = Mode(mode)
    h = np.asarray(x, dtype=float)
    single = h.ndim == 1
    if single:
        h = h[None, :]
    if h.ndim != 2 or h.shape[1] != params.in_dim:
        raise ContractViolation(f"input shape {np.shape(x)} does not match in_dim {params.in_dim}")
    drop = mode is not Mode.DETERMINISTIC
    if drop and masks is None and rng is None:
        raise ContractViolation(f"{mode.value} mode needs an rng or explicit masks")
    cache = ForwardCache(n_layers=len(params.specs))
    for i, spec in enumerate(params.specs):
        cache.inputs.append(h)
        z = h @ params.weights[i].T + params.biases[i]
        cache.preacts.append(z)
        if spec.activation == "prelu":
            h = np.where(z >= 0, z, params.slopes[i] * z)
        else:
            h = z
        mask = None
        if drop and spec.dropout_p > 0:
            if masks is not None:
                mask = masks[i]
                if mask is None or mask.shape != h.shape:
                    raise ContractViolation(f"replayed mask for layer {i} has wrong shape")
            else:
                p = spec.dropout_p
                keep = rng.random(h.shape) >= p
                mask = keep / (1.0 - p) if p < 1.0 else np.zeros(h.shape)
            h = h * mask
        cache.masks.append(mask)
    return (h[0] if single else h), cache


def backward(
    params: MlpParams,
    cache: ForwardCache,
    grad_out,
    weight_decay: float = 0.0,
) -> tuple[MlpParams, np.ndarray]:
    """Exact gradients of a scalar loss given ``dL/d(output)``.

    ``weight_decay`` adds the gradient ``2 * weight_decay * W`` of the penalty
    ``weight_decay * sum(W ** 2)`` on weight matrices (biases and slopes are
    not penalised). Returns parameter gradients and ``dL/d(input)``.
    """
    if cache.n_layers != len(params.specs):
        raise ContractViolation("cache was produced by a network of different depth")
    g = np.asarray(grad_out, dtype=float)
    if g.ndim == 1:
        g = g[None, :]
    if g.shape != cache.preacts[-1].shape:
        raise ContractViolation(f"output gradient {g.shape} vs output {cache.preacts[-1].shape}")
    grads = params.zeros_like()
    for i in range(len(params.specs) - 1, -1, -1):
        spec = params.specs[i]
        if cache.masks[i] is not None:
            g = g * cache.masks[i]
        z = cache.preacts[i]
        if spec.activation == "prelu":
            neg = z < 0
            grads.slopes[i] = np.sum(g * np.where(neg, z, 0.0))
            g = np.where(neg, params.slopes[i] * g, g)
        grads.weights[i] = g.T @ cache.inputs[i]
        if weight_decay:
            grads.weights[i] += 2.0 * weight_decay * params.weights[i]
        grads.biases[i] = g.sum(axis=0)
        g = g @ params.weights[i]
    return grads, g


def _stack(arrays) -> np.ndarray:
    if isinstance(arrays, np.ndarray):
        return np.atleast_2d(arrays).astype(float)
    if len(arrays) == 0:
        raise ContractViolation("empty batch")
    return np.array([np.asarray(a, dtype=float).ravel() for a in arrays])


def mse_loss(predicted, target, n_p: int) -> float:
    """Summed squared error over transitions divided by ``n_p``."""
    pred, targ = _stack(predicted), _stack(target)
    if pred.size == 0:
        raise ContractViolation("empty batch")
    if pred.shape != targ.shape:
        raise ContractViolation(f"prediction {pred.shape} vs target {targ.shape}")
    if n_p <= 0:
        raise ContractViolation("n_p must be positive")
    return float(np.sum((pred - targ) ** 2) / n_p)


def mse_grad(predicted, target, n_p: int) -> np.ndarray:
    pred, targ = _stack(predicted), _stack(target)
    return 2.0 * (pred - targ) / n_p


def weight_penalty(params: MlpParams) -> float:
    return float(sum(np.sum(W * W) for W in params.weights))


def cae_loss(batch, reconstructed, encoder_params: MlpParams, lam: float, n_obs: int) -> float:
    """Reconstruction error over ``n_obs`` clouds plus ``lam`` times the
    squared encoder weight entries."""
    if lam < 0:
        raise ContractViolation("penalty coefficient must be non-negative")
    x, xh = _stack(batch), _stack(reconstructed)
    if x.shape != xh.shape:
        raise ContractViolation(f"batch {x.shape} vs reconstruction {xh.shape}")
    if n_obs <= 0:
        raise ContractViolation("n_obs must be positive")
    return float(np.sum((x - xh) ** 2) / n_obs + lam * weight_penalty(encoder_params))


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: MlpParams | None = None
    v: MlpParams | None = None


def optimizer_step(params: MlpParams, grads: MlpParams, state: AdamState) -> tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update, applied in place."""
    if state.m is None:
        state.m, state.v = params.zeros_like(), params.zeros_like()
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.m.arrays(), state.v.arrays()):
        if p.shape != g.shape:
            raise ContractViolation(f"gradient shape {g.shape} vs parameter {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    # slopes live in a shared vector; arrays() hands out views so updates stick
    return params, state


class MalformedWeights(ValueError):
    pass


def _created_stamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = (
        _dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc)
        if epoch
        else _dt.datetime.now(_dt.timezone.utc)
    )
    return when.strftime("%Y-%m-%dT%H:%M:%SZ")


def save_params(params: MlpParams, path, seed: int = 0, created: str | None = None) -> FsPath:
    """Write ``path`` (JSON manifest) and ``path`` + ``.bin`` (float64 LE blob)."""
    path = FsPath(path)
    blob = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in params.arrays())
    blob_path = path.with_name(path.name + ".bin")
    path.parent.mkdir(parents=True, exist_ok=True)
    blob_path.write_bytes(blob)
    manifest = {
        "spec": [asdict(s) for s in params.specs],
        "seed": int(seed),
        "created": created if created is not None else _created_stamp(),
        "blob": blob_path.name,
        "n_values": params.n_values(),
        "sha256": hashlib.sha256(blob).hexdigest(),
    }
    path.write_text(json.dumps(manifest, indent=1) + "\n")
    return path


def load_params(path) -> MlpParams:
    path = FsPath(path)
    try:
        manifest = json.loads(path.read_text())
        specs = [LayerSpec(**s) for s in manifest["spec"]]
        blob_name = manifest["blob"]
    except (json.JSONDecodeError, KeyError, TypeError, ContractViolation) as exc:
        raise MalformedWeights(f"{path}: unreadable manifest ({exc})") from exc
    if not specs:
        raise MalformedWeights(f"{path}: no layers declared")
    for i in range(1, len(specs)):
        if specs[i].in_dim != specs[i - 1].out_dim:
            raise MalformedWeights(
                f"{path}: layer {i} declares in_dim {specs[i].in_dim} but layer {i - 1} "
                f"outputs {specs[i - 1].out_dim}"
            )
    raw = (path.parent / blob_name).read_bytes()
    if "sha256" in manifest and hashlib.sha256(raw).hexdigest() != manifest["sha256"]:
        raise MalformedWeights(f"{path}: blob {blob_name} does not match its recorded hash")
    if len(raw) % 8:
        raise MalformedWeights(f"{path}: blob length {len(raw)} is not a whole number of float64 values")
    data = np.frombuffer(raw, dtype="<f8")
    expected = sum(s.out_dim * s.in_dim + s.out_dim + 1 for s in specs)
    if data.size != expected or manifest.get("n_values", expected) != expected:
        raise MalformedWeights(
            f"{path}: declared shapes need {expected} values, blob holds {data.size}"
        )
    weights, biases, slopes = [], [], []
    off = 0
    for s in specs:
        n = s.out_dim * s.in_dim
        weights.append(data[off : off + n].reshape(s.out_dim, s.in_dim).astype(float))
        off += n
        biases.append(data[off : off + s.out_dim].astype(float))
        off += s.out_dim
        slopes.append(data[off])
        off += 1
    return MlpParams(specs, weights, biases, np.array(slopes, dtype=float))


def file_sha256(path) -> str:
    return hashlib.sha256(FsPath(path).read_bytes()).hexdigest()
