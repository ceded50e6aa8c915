"""The finite-difference harness itself: quadratic sanity, determinism
detection, and the reduced-width network paths."""

import numpy as np
import pytest

from ctgen.autodiff import Parameter, Tape
from ctgen.errors import ContractError
from ctgen.gradcheck import VERIFICATION_SEED, grad_check, verification_init
from ctgen.model import (
    GanConfig,
    build_discriminator,
    build_generator,
    d_loss_node,
    g_loss_node,
    sample_noise,
)


def test_quadratic():
    w = Parameter("w", np.array([[3.0]]))

    def f():
        t = Tape()
        node = t.param(w)
        return t, t.mean(t.dense(node, node, t.constant(np.zeros(1))))

    report = grad_check(f, [w], h=1e-4)
    # d(w^2)/dw at w=3: central differences of a quadratic are exact.
    assert abs(report.entries[0].numeric - 6.0) < 1e-7
    assert report.passed


def test_nondeterministic_function_rejected():
    w = Parameter("w", np.ones((2, 1)))
    rng = np.random.default_rng(0)

    def f():
        t = Tape()
        h = t.dropout(t.param(w), 0.5, "train", rng)  # fresh mask every call
        return t, t.mean(h)

    with pytest.raises(ContractError):
        grad_check(f, [w])


def test_report_table_format():
    w = Parameter("w", np.array([2.0]))

    def f():
        t = Tape()
        return t, t.mean(t.param(w))

    report = grad_check(f, [w], tol=1e-5)
    table = report.format_table()
    assert "w" in table and "OVERALL" in table


def _reduced_networks(kernel=3):
    cfg = GanConfig(image_size=8, noise_dim=4, kernel_size=kernel,
                    batch_size=2, filter_scale=16)
    disc = build_discriminator(cfg)
    gen = build_generator(cfg)
    rng = np.random.default_rng(VERIFICATION_SEED)
    verification_init((disc, gen), rng)
    return cfg, disc, gen, rng


def test_discriminator_loss_path():
    cfg, disc, gen, rng = _reduced_networks()
    real = rng.uniform(0.0, 2.0, size=(2, 8, 8, 3))
    fake = rng.uniform(0.0, 2.0, size=(2, 8, 8, 3))

    def f():
        t = Tape()
        return t, d_loss_node(
            t, disc.forward(real, ctx=t, mode="infer"),
            disc.forward(fake, ctx=t, mode="infer"),
        )

    report = grad_check(f, list(disc.params.values()), h=1e-4, tol=1e-5)
    assert report.passed, report.format_table()


def test_generator_loss_path():
    cfg, disc, gen, rng = _reduced_networks()
    rng.uniform(0.0, 2.0, size=(4, 8, 8, 3))  # keep stream aligned with d path
    noise = sample_noise(2, cfg.noise_dim, rng)

    def f():
        t = Tape()
        img = gen.forward(noise, ctx=t, mode="infer")
        return t, g_loss_node(t, disc.forward(img, ctx=t, mode="infer"))

    report = grad_check(f, list(gen.params.values()), h=1e-4, tol=1e-5)
    assert report.passed, report.format_table()
