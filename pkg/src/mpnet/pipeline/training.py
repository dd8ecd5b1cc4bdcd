"""Training stages that read the dataset directory and write weight files."""

from __future__ import annotations

import datetime as _dt
import json
import logging
import os
from pathlib import Path as FsPath

import numpy as np

from .. import neuralnet as nn
from ..models import (
    EncoderModel,
    PlannerModel,
    TrainConfig,
    build_dataset,
    encode,
    train_cae,
    train_pnet,
)
from ..planner import MpnetModels
from ..pointcloud import Bounds, flatten_cloud
from .config import PipelineConfig, derive_seed
from .dataset import DataBundle, load_data, sha256_file, write_json

log = logging.getLogger(__name__)


class FingerprintMismatch(RuntimeError):
    pass


def encoder_training_ids(data: DataBundle) -> list[str]:
    """Clouds the encoder may see: training and encoder-only layouts, never unseen ones."""
    ids = data.ids("seen") + data.ids("cae")
    leaked = set(ids) & set(data.ids("unseen"))
    if leaked:
        raise ValueError(f"unseen workspaces in a training set: {sorted(leaked)}")
    return ids


def artifact_stamp() -> str:
    """Creation stamp for pipeline weights: SOURCE_DATE_EPOCH, else the Unix epoch.

    Pipeline artifacts are content addressed, so a wall-clock stamp would make
    two runs under one seed differ.
    """
    epoch = int(os.environ.get("SOURCE_DATE_EPOCH", "0"))
    return _dt.datetime.fromtimestamp(epoch, _dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _models_dir(out_dir) -> FsPath:
    return FsPath(out_dir) / "models"


def _read_model_manifest(out_dir) -> dict:
    path = _models_dir(out_dir) / "manifest.json"
    return json.loads(path.read_text()) if path.exists() else {}


def _write_model_manifest(out_dir, manifest: dict) -> None:
    write_json(_models_dir(out_dir) / "manifest.json", manifest)


def _first_workspace(data: DataBundle):
    return data.workspaces[data.ids("seen")[0]]


def train_cae_stage(cfg: PipelineConfig, out_dir) -> dict:
    data = load_data(out_dir)
    w = _first_workspace(data)
    bounds = Bounds.of_workspace(w)
    ids = encoder_training_ids(data)
    flats = [flatten_cloud(data.clouds[i], bounds) for i in ids]
    tcfg = TrainConfig(
        epochs=cfg.model.cae_epochs, batch_size=cfg.model.cae_batch, lr=cfg.model.cae_lr,
        lam=cfg.model.lam, seed=derive_seed(cfg.seed, "cae"), val_fraction=cfg.model.val_fraction,
    )
    enc, dec, hist = train_cae(flats, tcfg, cfg.model.latent_dim, bounds, cfg.data.n_pc, cfg.model.encoder_hidden)
    mdir = _models_dir(out_dir)
    nn.save_params(enc.params, mdir / "encoder.json", tcfg.seed, artifact_stamp())
    nn.save_params(dec.params, mdir / "decoder.json", tcfg.seed, artifact_stamp())
    manifest = {
        "dataset_fingerprint": data.fingerprint,
        "encoder": {
            "file": "encoder.json",
            "sha256": sha256_file(mdir / "encoder.json"),
            "blob_sha256": sha256_file(mdir / "encoder.json.bin"),
            "decoder": "decoder.json",
            "decoder_sha256": sha256_file(mdir / "decoder.json"),
            "bounds": bounds.to_dict(),
            "cloud_normalization": "per-axis affine map of the workspace bounds onto [-1, 1]",
            "n_pc": cfg.data.n_pc,
            "latent_dim": cfg.model.latent_dim,
            "trained_on": ids,
            "history": hist,
        },
    }
    _write_model_manifest(out_dir, manifest)
    return manifest


def load_encoder(out_dir, fingerprint: str | None = None) -> EncoderModel:
    man = _read_model_manifest(out_dir)
    if "encoder" not in man:
        raise FileNotFoundError("no trained encoder; run train-cae first")
    _check_fingerprint(man, fingerprint)
    mdir = _models_dir(out_dir)
    e = man["encoder"]
    _check_hash(mdir / e["file"], e["sha256"])
    _check_hash(mdir / (e["file"] + ".bin"), e["blob_sha256"])
    return EncoderModel(nn.load_params(mdir / e["file"]), Bounds.from_dict(e["bounds"]), e["n_pc"])


def train_pnet_stage(cfg: PipelineConfig, out_dir) -> dict:
    data = load_data(out_dir)
    enc = load_encoder(out_dir, data.fingerprint)
    w = _first_workspace(data)
    bounds = Bounds.of_states(w)
    seen = data.ids("seen")
    paths = {i: [p.states for p in data.paths[i]] for i in seen}
    flats = {i: flatten_cloud(data.clouds[i], enc.bounds) for i in seen}
    ds = build_dataset(paths, flats, bounds, w.is_rigid)
    tcfg = TrainConfig(
        epochs=cfg.model.pnet_epochs, batch_size=cfg.model.pnet_batch, lr=cfg.model.pnet_lr,
        lam=cfg.model.lam, seed=derive_seed(cfg.seed, "pnet"), val_fraction=cfg.model.val_fraction,
    )
    pl, hist = train_pnet(ds, enc, tcfg, cfg.model.pnet_hidden, cfg.model.dropout_p, w.is_rigid)
    mdir = _models_dir(out_dir)
    nn.save_params(pl.params, mdir / "pnet.json", tcfg.seed, artifact_stamp())
    manifest = _read_model_manifest(out_dir)
    manifest["pnet"] = {
        "file": "pnet.json",
        "sha256": sha256_file(mdir / "pnet.json"),
        "blob_sha256": sha256_file(mdir / "pnet.json.bin"),
        "bounds": bounds.to_dict(),
        "latent_dim": enc.latent_dim,
        "dropout_p": cfg.model.dropout_p,
        "rigid": w.is_rigid,
        "records": len(ds),
        "trained_on": seen,
        "history": hist,
    }
    _write_model_manifest(out_dir, manifest)
    return manifest


def load_models(out_dir, fingerprint: str | None = None) -> MpnetModels:
    enc = load_encoder(out_dir, fingerprint)
    man = _read_model_manifest(out_dir)
    if "pnet" not in man:
        raise FileNotFoundError("no trained planning network; run train-pnet first")
    mdir = _models_dir(out_dir)
    p = man["pnet"]
    _check_hash(mdir / p["file"], p["sha256"])
    _check_hash(mdir / (p["file"] + ".bin"), p["blob_sha256"])
    pl = PlannerModel(
        nn.load_params(mdir / p["file"]), Bounds.from_dict(p["bounds"]), p["latent_dim"], p["dropout_p"], p["rigid"]
    )
    return MpnetModels(enc, pl)


def _check_fingerprint(man: dict, fingerprint: str | None) -> None:
    if fingerprint is not None and man.get("dataset_fingerprint") != fingerprint:
        raise FingerprintMismatch(
            "trained models were built from a different dataset "
            f"({man.get('dataset_fingerprint')} != {fingerprint}); retrain or regenerate"
        )


def _check_hash(path: FsPath, digest: str) -> None:
    if sha256_file(path) != digest:
        raise nn.MalformedWeights(f"hash mismatch for {path}")


def latents_for(models: MpnetModels, data: DataBundle, ids) -> dict[str, np.ndarray]:
    return {i: encode(models.encoder, data.clouds[i]) for i in ids}
