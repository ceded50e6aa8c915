"""Command-line interface.

Subcommands: ``preprocess`` (images -> dataset cache), ``train`` (run the
loop from a config file, optionally resuming a checkpoint), ``generate``
(sample a grid from a checkpoint), and ``gradcheck`` (finite-difference
verification of both architectures at reduced width).

Exit codes: 0 success, 1 verification failure, 2 usage/config/data error,
3 runtime numerical failure.
"""

import argparse
import os
import sys

import numpy as np

from ctgen import data as dp
from ctgen.autodiff import Tape
from ctgen.config import load_run_config
from ctgen.train import generate_samples, load_train_state
from ctgen.train import train as run_training
from ctgen.errors import (
    ConfigError,
    ContractError,
    CtgenError,
    DimensionError,
    DomainError,
    FormatError,
    NumericalError,
    StateError,
)
from ctgen.gradcheck import VERIFICATION_SEED, grad_check, verification_init
from ctgen.model import (
    GanConfig,
    build_discriminator,
    build_generator,
    d_loss_node,
    g_loss_node,
    sample_noise,
)

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3


def _build_parser():
    parser = argparse.ArgumentParser(prog="ctgen", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="build a dataset cache from raw images")
    p.add_argument("--input", required=True, help="directory of PGM/PNG images")
    p.add_argument("--output", required=True, help="cache manifest path (blob at <output>.bin)")
    p.add_argument("--size", required=True, type=int, help="target square size")
    p.add_argument("--channels", type=int, default=3)
    p.add_argument("--scaling", choices=("per-image", "global"), default="per-image")

    p = sub.add_parser("train", help="train from a key=value config file")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", default=None, help="checkpoint directory to continue from")

    p = sub.add_parser("generate", help="write a sample grid from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--count", required=True, type=int)
    p.add_argument("--cols", required=True, type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("gradcheck", help="finite-difference check of both networks")
    p.add_argument("--size", type=int, default=8)
    p.add_argument("--kernel", type=int, default=3)
    p.add_argument("--tol", type=float, default=1e-5)
    return parser


def cmd_preprocess(args):
    if not os.path.isdir(args.input):
        print(f"error: {args.input} is not a directory", file=sys.stderr)
        return EXIT_USAGE
    images, sources, failures = [], [], []
    for name in sorted(os.listdir(args.input)):
        path = os.path.join(args.input, name)
        if not os.path.isfile(path):
            continue
        try:
            images.append(dp.load_grayscale_image(path))
            sources.append(name)
        except (FormatError, OSError) as e:
            failures.append((name, str(e)))
    for name, reason in failures:
        print(f"skipped {name}: {reason}", file=sys.stderr)
    if not images:
        print("error: no readable images in input directory", file=sys.stderr)
        return EXIT_USAGE
    ds = dp.preprocess_images(images, args.size, args.channels, args.scaling)
    ds.sources = sources
    dp.save_dataset(ds, args.output)
    print(f"wrote {len(ds.items)} tensors [{ds.size},{ds.size},{ds.channels}] "
          f"fingerprint {ds.fingerprint}")
    return EXIT_OK


def cmd_train(args):
    run = load_run_config(args.config)
    if not run.data_dir:
        raise ConfigError("config must set data_dir (path to a dataset cache manifest)")
    if not run.out_dir:
        raise ConfigError("config must set out_dir")
    dataset = dp.load_dataset(run.data_dir)
    state = run_training(
        run.gan, dataset, run.out_dir,
        checkpoint_interval=run.checkpoint_interval,
        sample_interval=run.sample_interval,
        log_interval=run.log_interval,
        resume=args.resume,
    )
    print(f"finished at step {state.step}; final checkpoint in "
          f"{os.path.join(run.out_dir, 'final')}")
    return EXIT_OK


def cmd_generate(args):
    state = load_train_state(args.checkpoint)
    rng = np.random.default_rng(args.seed)
    samples = generate_samples(state, args.count, rng)
    dp.write_sample_grid(samples, args.cols, args.out)
    print(f"wrote {args.count} samples to {args.out}")
    return EXIT_OK


def _gradcheck_config(size, kernel):
    return GanConfig(
        image_size=size, noise_dim=(size // 4) ** 2, kernel_size=kernel,
        batch_size=2, filter_scale=16,
    )


def cmd_gradcheck(args):
    cfg = _gradcheck_config(args.size, args.kernel)
    disc = build_discriminator(cfg)
    gen = build_generator(cfg)
    vrng = np.random.default_rng(VERIFICATION_SEED)
    verification_init((disc, gen), vrng)
    real = vrng.uniform(0.0, 2.0, size=(2, cfg.image_size, cfg.image_size, cfg.channels))
    fake = vrng.uniform(0.0, 2.0, size=real.shape)
    noise = sample_noise(2, cfg.noise_dim, vrng)

    # Deterministic paths: dropout runs in inference mode, batch norm uses
    # frozen running statistics.
    def d_path():
        tape = Tape()
        d_real = disc.forward(real, ctx=tape, mode="infer")
        d_fake = disc.forward(fake, ctx=tape, mode="infer")
        return tape, d_loss_node(tape, d_real, d_fake)

    def g_path():
        tape = Tape()
        img = gen.forward(noise, ctx=tape, mode="infer")
        d_fake = disc.forward(img, ctx=tape, mode="infer")
        return tape, g_loss_node(tape, d_fake, cfg.g_loss_mode)

    failed = False
    for label, f, params in (
        ("d_loss", d_path, list(disc.params.values())),
        ("g_loss", g_path, list(gen.params.values())),
    ):
        report = grad_check(f, params, h=1e-4, tol=args.tol)
        print(f"== {label} path ==")
        print(report.format_table())
        if not report.passed:
            worst = report.worst()
            print(
                f"FAIL {label}: {worst.name}{list(worst.worst_index)} analytic "
                f"{worst.analytic:.12g} vs numeric {worst.numeric:.12g} "
                f"(rel err {worst.max_rel_err:.3e} > tol {args.tol:g})",
                file=sys.stderr,
            )
            failed = True
    return EXIT_VERIFY if failed else EXIT_OK


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "preprocess": cmd_preprocess,
        "train": cmd_train,
        "generate": cmd_generate,
        "gradcheck": cmd_gradcheck,
    }
    try:
        return handlers[args.command](args)
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, FormatError, DimensionError, DomainError, StateError,
            ContractError, CtgenError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
