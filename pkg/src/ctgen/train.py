"""Alternating-update training loop.

Each step does one discriminator update on a real batch plus freshly
generated fakes (held constant for that update), then one generator update
through the frozen discriminator on new noise. A single seeded generator
drives batch shuffling, noise, and dropout masks in a fixed order, so runs
are bit-reproducible and checkpoints resume exactly.
"""

import os
import time
from dataclasses import replace

import numpy as np

from ctgen import checkpoint as ckpt
from ctgen.autodiff import Tape
from ctgen.data import write_sample_grid
from ctgen.errors import ConfigError, DomainError, NumericalError
from ctgen.model import (
    GanConfig,
    build_discriminator,
    build_generator,
    d_loss_node,
    g_loss_node,
    sample_noise,
)
from ctgen.optim import make_optimizer


class TrainState:
    """Everything the loop owns: nets, optimizers, PRNG, progress."""

    def __init__(self, cfg, disc, gen, d_opt, g_opt, rng):
        self.cfg = cfg
        self.disc = disc
        self.gen = gen
        self.d_opt = d_opt
        self.g_opt = g_opt
        self.rng = rng
        self.step = 0
        self.order = np.zeros(0, dtype=np.int64)  # current epoch permutation
        self.pos = 0
        self.history = []


def init_train_state(cfg):
    rng = np.random.default_rng(cfg.seed)
    disc = build_discriminator(cfg, rng)
    gen = build_generator(cfg, rng)
    d_opt = make_optimizer(cfg.optimizer, cfg.lr_d, cfg.weight_decay)
    g_opt = make_optimizer(cfg.optimizer, cfg.lr_g, cfg.weight_decay)
    return TrainState(cfg, disc, gen, d_opt, g_opt, rng)


def load_train_state(path):
    manifest = ckpt.read_manifest(path)
    cfg = GanConfig.from_dict(manifest["config"])
    state = init_train_state(cfg)
    ckpt.restore_into(state, path)
    return state


def train_step(state, real_batch):
    """One alternating update; returns the step's metrics."""
    cfg = state.cfg
    rng = state.rng
    if real_batch.shape != (cfg.batch_size, cfg.image_size, cfg.image_size, cfg.channels):
        raise ConfigError(
            f"real batch shape {real_batch.shape} does not match config "
            f"({cfg.batch_size},{cfg.image_size},{cfg.image_size},{cfg.channels})"
        )
    if real_batch.min() < 0.0 or real_batch.max() > 2.0:
        raise DomainError("real batch values must lie in [0, 2]")

    try:
        # Discriminator update; generated images are constants here.
        z = sample_noise(cfg.batch_size, cfg.noise_dim, rng)
        fake = state.gen.forward(z, mode="train", rng=rng)
        tape = Tape()
        d_real = state.disc.forward(real_batch, ctx=tape, mode="train", rng=rng)
        d_fake = state.disc.forward(fake, ctx=tape, mode="train", rng=rng)
        loss_d = d_loss_node(tape, d_real, d_fake)
        tape.backward(loss_d)
        state.d_opt.step(state.disc.params)

        # Generator update through the (frozen) discriminator on fresh noise.
        z2 = sample_noise(cfg.batch_size, cfg.noise_dim, rng)
        tape = Tape()
        fake2 = state.gen.forward(z2, ctx=tape, mode="train", rng=rng)
        d_fake2 = state.disc.forward(fake2, ctx=tape, mode="train", rng=rng)
        loss_g = g_loss_node(tape, d_fake2, cfg.g_loss_mode)
        tape.backward(loss_g)
        state.g_opt.step(state.gen.params)
    except DomainError as e:
        # Sigmoid output is clamped into (0,1), so a domain failure in the
        # loss means the forward pass went non-finite.
        raise NumericalError(f"non-finite activations at step {state.step + 1}: {e}")

    state.step += 1
    metrics = {
        "step": state.step,
        "d_loss": float(loss_d.value),
        "g_loss": float(loss_g.value),
        "mean_d_real": float(d_real.value.mean()),
        "mean_d_fake": float(d_fake.value.mean()),
    }
    for key in ("d_loss", "g_loss", "mean_d_real", "mean_d_fake"):
        if not np.isfinite(metrics[key]):
            raise NumericalError(f"non-finite {key}={metrics[key]} at step {state.step}")
    state.history.append(metrics)
    return metrics


def generate_samples(state, n, rng):
    """Inference-mode generator samples [n, S, S, C] (running BN stats,
    dropout off); legal for any n >= 1."""
    z = sample_noise(n, state.cfg.noise_dim, rng)
    return state.gen.forward(z, mode="infer", rng=rng)


def _next_batch(state, dataset):
    n = len(dataset.items)
    if state.pos + state.cfg.batch_size > len(state.order):
        state.order = state.rng.permutation(n)
        state.pos = 0
    idx = state.order[state.pos:state.pos + state.cfg.batch_size]
    state.pos += state.cfg.batch_size
    return np.stack([dataset.items[i] for i in idx])


def train(cfg, dataset, out_dir, checkpoint_interval=1000, sample_interval=1000,
          log_interval=10, resume=None, progress=None):
    """Run ``cfg.steps`` total steps over the dataset; emits checkpoints,
    sample grids, and an append-only metric log under ``out_dir``.

    ``resume`` continues bit-identically from a checkpoint directory (the
    step counter is absolute: a run resumed at 50 with steps=100 performs
    50 more). Returns the final TrainState.
    """
    if len(dataset.items) < cfg.batch_size:
        raise ConfigError(
            f"dataset has {len(dataset.items)} images, need at least {cfg.batch_size}"
        )
    os.makedirs(out_dir, exist_ok=True)
    if resume is not None:
        state = load_train_state(resume)
        # The step target is the one knob a resumed run may change.
        if replace(state.cfg, steps=cfg.steps) != cfg:
            raise ConfigError("resume checkpoint config does not match the run config")
        state.cfg = cfg
    else:
        state = init_train_state(cfg)

    log_path = os.path.join(out_dir, "metrics.tsv")
    with open(log_path, "a") as log:
        while state.step < cfg.steps:
            batch = _next_batch(state, dataset)
            t0 = time.perf_counter()
            m = train_step(state, batch)
            wall_ms = (time.perf_counter() - t0) * 1e3
            if log_interval > 0 and state.step % log_interval == 0:
                log.write(
                    f"{m['step']}\t{m['d_loss']:.17g}\t{m['g_loss']:.17g}\t"
                    f"{m['mean_d_real']:.17g}\t{m['mean_d_fake']:.17g}\t{wall_ms:.3f}\n"
                )
                log.flush()
            if progress is not None:
                progress(m)
            if checkpoint_interval > 0 and state.step % checkpoint_interval == 0:
                ckpt.save_checkpoint(
                    os.path.join(out_dir, f"ckpt_{state.step:08d}"), state
                )
            if sample_interval > 0 and state.step % sample_interval == 0:
                _write_samples(state, out_dir)

    ckpt.save_checkpoint(os.path.join(out_dir, "final"), state)
    return state


def _write_samples(state, out_dir, n=16, cols=4):
    # Sampling uses its own derived stream so grids never perturb training.
    rng = np.random.default_rng([state.cfg.seed, state.step])
    samples = generate_samples(state, n, rng)
    write_sample_grid(samples, cols, os.path.join(out_dir, f"samples_{state.step:08d}.pgm"))
