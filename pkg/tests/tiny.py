"""Small pipeline configurations shared by the pipeline and acceptance tests."""

from mpnet.pipeline.config import defaults_for


def tiny_config(kind="simple2d", seed=0, **data):
    cfg = defaults_for(kind)
    cfg.seed = seed
    ws = cfg.workspace
    ws.n_train, ws.n_unseen = 2, 1
    d = cfg.data
    d.paths_per_workspace = 4
    d.problems_per_unseen = 2
    d.seen_problems = 2
    d.cae_extra_workspaces = 1
    d.n_pc = 60
    d.expert_iters = 600
    for k, v in data.items():
        setattr(d, k, v)
    m = cfg.model
    m.encoder_hidden = (32, 16, 16)
    m.latent_dim = 6
    m.pnet_hidden = (32, 32, 16, 16)
    m.cae_epochs = 5
    m.cae_batch = 2
    m.pnet_epochs = 5
    m.pnet_batch = 8
    cfg.plan.fallback_iters = 5000
    cfg.plan.baseline_iters = 5000
    return cfg
