"""Encoder (trained as a contractive autoencoder) and the planning network."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import neuralnet as nn
from .geometry import ContractViolation, state_delta, wrap_angle
from .pointcloud import Bounds, PointCloud, denormalize, flatten_cloud, normalize

ENCODER_HIDDEN = (512, 256, 128)
PNET_HIDDEN = (512, 512, 384, 384, 256, 256, 128, 128, 64, 64, 32, 32)
DROPOUT_P = 0.5
LAMBDA = 1e-3


def default_latent_dim(dim: int) -> int:
    return 64 if dim == 3 else 28


class TrainingDiverged(RuntimeError):
    def __init__(self, seed: int, epoch: int, what: str = "loss"):
        super().__init__(f"{what} became non-finite at epoch {epoch} (seed {seed})")
        self.seed = seed
        self.epoch = epoch


class NonFiniteOutput(ValueError):
    def __init__(self, inputs: np.ndarray, output: np.ndarray):
        super().__init__(f"planning network produced {output} for input {inputs}")
        self.inputs = inputs
        self.output = output


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 100
    lr: float = 1e-3
    lam: float = LAMBDA
    seed: int = 0
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size <= 0 or self.lr <= 0 or self.lam < 0:
            raise ContractViolation(f"invalid training configuration {self}")
        if not 0.0 < self.val_fraction <= 0.5:
            raise ContractViolation("val_fraction must lie in (0, 0.5]")


@dataclass
class EncoderModel:
    params: nn.MlpParams
    bounds: Bounds
    n_pc: int

    @property
    def latent_dim(self) -> int:
        return self.params.out_dim

    @property
    def dim(self) -> int:
        return len(self.bounds.min)


@dataclass
class DecoderModel:
    params: nn.MlpParams


@dataclass
class PlannerModel:
    params: nn.MlpParams
    bounds: Bounds
    latent_dim: int
    dropout_p: float
    rigid: bool = False

    @property
    def state_dim(self) -> int:
        return len(self.bounds.min)


@dataclass
class ImitationDataset:
    """Expert transitions ``(cloud, x_t, x_T) -> x_{t+1}``, all normalised.

    ``clouds`` holds one flattened cloud per workspace; records point into it
    through ``ws_index``. ``path_id``/``step`` record provenance.
    """

    workspace_ids: list[str]
    clouds: np.ndarray
    ws_index: np.ndarray
    x_t: np.ndarray
    x_goal: np.ndarray
    x_next: np.ndarray
    path_id: np.ndarray
    step: np.ndarray
    bounds: Bounds = None

    def __len__(self) -> int:
        return len(self.x_t)


def build_dataset(
    paths: dict[str, Sequence[Sequence[np.ndarray]]],
    clouds: dict[str, np.ndarray],
    state_bounds: Bounds,
    rigid: bool = False,
) -> ImitationDataset:
    """Turn expert paths (keyed by workspace id) into imitation records.

    For headings the target is ``x_t`` plus the shortest-arc step, so it may
    leave ``[-pi, pi)``; the planner wraps its predictions.
    """
    ws_ids = sorted(paths)
    rows = {k: [] for k in ("ws", "xt", "xg", "xn", "pid", "step")}
    pid = 0
    for wi, ws in enumerate(ws_ids):
        for path in paths[ws]:
            path = np.asarray(path, dtype=float)
            goal = path[-1]
            for t in range(len(path) - 1):
                nxt = path[t] + state_delta(path[t], path[t + 1], rigid) if rigid else path[t + 1]
                rows["ws"].append(wi)
                rows["xt"].append(path[t])
                rows["xg"].append(goal)
                rows["xn"].append(nxt)
                rows["pid"].append(pid)
                rows["step"].append(t)
            pid += 1
    if not rows["ws"]:
        raise ContractViolation("no expert transitions to learn from")
    return ImitationDataset(
        workspace_ids=ws_ids,
        clouds=np.array([clouds[w] for w in ws_ids]),
        ws_index=np.array(rows["ws"], dtype=np.int64),
        x_t=normalize(np.array(rows["xt"]), state_bounds),
        x_goal=normalize(np.array(rows["xg"]), state_bounds),
        x_next=normalize(np.array(rows["xn"]), state_bounds),
        path_id=np.array(rows["pid"], dtype=np.int64),
        step=np.array(rows["step"], dtype=np.int64),
        bounds=state_bounds,
    )


def encoder_specs(input_dim: int, latent_dim: int, hidden=ENCODER_HIDDEN) -> list[nn.LayerSpec]:
    return nn.stack_specs([input_dim, *hidden, latent_dim])


def decoder_specs(latent_dim: int, output_dim: int, hidden=ENCODER_HIDDEN) -> list[nn.LayerSpec]:
    return nn.stack_specs([latent_dim, *reversed(hidden), output_dim])


def planner_specs(latent_dim: int, state_dim: int, hidden=PNET_HIDDEN, dropout_p: float = DROPOUT_P):
    # the last hidden layer is left without dropout
    return nn.stack_specs([latent_dim + 2 * state_dim, *hidden, state_dim], dropout_p, dropout_last_hidden=False)


def _batches(n: int, size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for i in range(0, n, size):
        yield order[i : i + size]


def _cae_eval(enc, dec, x, lam):
    z, _ = nn.forward(enc, x)
    xh, _ = nn.forward(dec, z)
    return nn.cae_loss(x, xh, enc, lam, len(x))


def train_cae(
    clouds: Sequence[np.ndarray],
    cfg: TrainConfig,
    latent_dim: int,
    bounds: Bounds,
    n_pc: int,
    hidden=ENCODER_HIDDEN,
    zero_init: bool = False,
) -> tuple[EncoderModel, DecoderModel, dict]:
    """Fit encoder and mirrored decoder on flattened clouds.

    History entry 0 is the loss at initialisation; entry ``e`` the full
    training-set loss after epoch ``e``.
    """
    x = np.array([np.asarray(c, dtype=float) for c in clouds])
    if len(x) < 1:
        raise ContractViolation("need at least one cloud")
    if x.shape[1] != n_pc * len(bounds.min):
        raise ContractViolation(f"cloud length {x.shape[1]} != n_pc * dim")
    rng = np.random.default_rng(cfg.seed)
    n_val = int(math.floor(len(x) * cfg.val_fraction))
    perm = rng.permutation(len(x))
    val, train = x[perm[:n_val]], x[perm[n_val:]]
    enc = nn.init_params(encoder_specs(x.shape[1], latent_dim, hidden), cfg.seed, zeros=zero_init)
    dec = nn.init_params(decoder_specs(latent_dim, x.shape[1], hidden), cfg.seed + 1, zeros=zero_init)
    opt_e, opt_d = nn.AdamState(lr=cfg.lr), nn.AdamState(lr=cfg.lr)
    history = {"train": [_cae_eval(enc, dec, train, cfg.lam)], "val": []}
    if n_val:
        history["val"].append(_cae_eval(enc, dec, val, cfg.lam))
    for epoch in range(1, cfg.epochs + 1):
        for idx in _batches(len(train), cfg.batch_size, rng):
            xb = train[idx]
            z, ce = nn.forward(enc, xb, nn.Mode.TRAIN, rng)
            xh, cd = nn.forward(dec, z, nn.Mode.TRAIN, rng)
            g_dec, g_z = nn.backward(dec, cd, 2.0 * (xh - xb) / len(xb))
            g_enc, _ = nn.backward(enc, ce, g_z, weight_decay=cfg.lam)
            nn.optimizer_step(dec, g_dec, opt_d)
            nn.optimizer_step(enc, g_enc, opt_e)
        loss = _cae_eval(enc, dec, train, cfg.lam)
        if not math.isfinite(loss):
            raise TrainingDiverged(cfg.seed, epoch, "CAE loss")
        history["train"].append(loss)
        if n_val:
            history["val"].append(_cae_eval(enc, dec, val, cfg.lam))
    return EncoderModel(enc, bounds, n_pc), DecoderModel(dec), history


def encode_flat(enc: EncoderModel, flat) -> np.ndarray:
    flat = np.asarray(flat, dtype=float)
    if flat.shape[-1] != enc.params.in_dim:
        raise ContractViolation(f"flattened cloud length {flat.shape[-1]} != {enc.params.in_dim}")
    z, _ = nn.forward(enc.params, flat)
    return z


def encode(enc: EncoderModel, cloud: PointCloud) -> np.ndarray:
    """Latent code of a cloud; deterministic (no dropout in the encoder)."""
    if cloud.points.shape != (enc.n_pc, enc.dim):
        raise ContractViolation(
            f"cloud shape {cloud.points.shape} does not match encoder ({enc.n_pc}, {enc.dim})"
        )
    z = encode_flat(enc, flatten_cloud(cloud, enc.bounds))
    if not np.all(np.isfinite(z)):
        raise NonFiniteOutput(cloud.points, z)
    return z


def _pnet_inputs(ds: ImitationDataset, latents: np.ndarray, idx) -> np.ndarray:
    return np.hstack([latents[ds.ws_index[idx]], ds.x_t[idx], ds.x_goal[idx]])


def _pnet_eval(params, ds, latents, idx) -> float:
    if len(idx) == 0:
        return float("nan")
    out, _ = nn.forward(params, _pnet_inputs(ds, latents, idx))
    return nn.mse_loss(out, ds.x_next[idx], len(idx))


def split_by_path(ds: ImitationDataset, val_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Hold out whole expert paths; returns (train_idx, val_idx)."""
    paths = np.unique(ds.path_id)
    rng = np.random.default_rng(seed)
    n_val = int(math.floor(len(paths) * val_fraction))
    held = set(rng.permutation(paths)[:n_val].tolist())
    is_val = np.array([p in held for p in ds.path_id], dtype=bool)
    return np.nonzero(~is_val)[0], np.nonzero(is_val)[0]


def train_pnet(
    ds: ImitationDataset,
    enc: EncoderModel,
    cfg: TrainConfig,
    hidden=PNET_HIDDEN,
    dropout_p: float = DROPOUT_P,
    rigid: bool = False,
    max_steps: int | None = None,
) -> tuple[PlannerModel, dict]:
    """Imitation training with the encoder frozen.

    ``history["train"][0]`` is the loss at initialisation. Dropout is active
    during updates; recorded losses are evaluated without it.
    """
    if len(ds) == 0:
        raise ContractViolation("empty imitation dataset")
    latents = np.array([encode_flat(enc, c) for c in ds.clouds])
    d = ds.x_t.shape[1]
    params = nn.init_params(planner_specs(enc.latent_dim, d, hidden, dropout_p), cfg.seed)
    opt = nn.AdamState(lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    if len(np.unique(ds.path_id)) > 1:
        train_idx, val_idx = split_by_path(ds, cfg.val_fraction, cfg.seed)
    else:
        train_idx, val_idx = np.arange(len(ds)), np.arange(0)
    history = {
        "train": [_pnet_eval(params, ds, latents, train_idx)],
        "val": [_pnet_eval(params, ds, latents, val_idx)] if len(val_idx) else [],
        "steps": 0,
    }
    steps = 0
    for epoch in range(1, cfg.epochs + 1):
        for b in _batches(len(train_idx), cfg.batch_size, rng):
            idx = train_idx[b]
            out, cache = nn.forward(params, _pnet_inputs(ds, latents, idx), nn.Mode.TRAIN, rng)
            grads, _ = nn.backward(params, cache, nn.mse_grad(out, ds.x_next[idx], len(idx)))
            nn.optimizer_step(params, grads, opt)
            steps += 1
            if max_steps is not None and steps >= max_steps:
                break
        loss = _pnet_eval(params, ds, latents, train_idx)
        if not math.isfinite(loss):
            raise TrainingDiverged(cfg.seed, epoch, "planning-network loss")
        history["train"].append(loss)
        if len(val_idx):
            history["val"].append(_pnet_eval(params, ds, latents, val_idx))
        if max_steps is not None and steps >= max_steps:
            break
    history["steps"] = steps
    model = PlannerModel(params, ds.bounds, enc.latent_dim, dropout_p, rigid)
    return model, history


def pnet_step(
    pl: PlannerModel,
    z: np.ndarray,
    x_t,
    x_goal,
    rng: np.random.Generator | None = None,
    stochastic: bool = True,
) -> np.ndarray:
    """Predict the next state (workspace coordinates) from ``x_t`` toward ``x_goal``."""
    x_t = np.asarray(x_t, dtype=float)
    x_goal = np.asarray(x_goal, dtype=float)
    if len(z) != pl.latent_dim or x_t.shape != (pl.state_dim,) or x_goal.shape != x_t.shape:
        raise ContractViolation("pnet_step input dimensions do not match the model")
    inp = np.concatenate([z, normalize(x_t, pl.bounds), normalize(x_goal, pl.bounds)])
    mode = nn.Mode.STOCHASTIC if stochastic else nn.Mode.DETERMINISTIC
    out, _ = nn.forward(pl.params, inp, mode, rng)
    x = denormalize(out, pl.bounds)
    if not np.all(np.isfinite(x)):
        raise NonFiniteOutput(inp, x)
    if pl.rigid:
        x[2] = wrap_angle(x[2])
    return x
