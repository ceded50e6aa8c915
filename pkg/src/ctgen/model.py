"""Discriminator/generator construction and the adversarial objective.

The discriminator is four same-padded convolutions (256/128/64/32 filters,
stride 2 on the first only), each LeakyReLU + dropout, then dense 128 and a
sigmoid head. The generator reshapes the noise vector onto a (S/4, S/4, 1)
map and upsamples through six transposed convolutions (256/128/64/32/16/C
filters, stride 2 on the first two), batch norm + LeakyReLU on all but the
linear output layer. Filter widths divide by ``filter_scale`` for cheap
reduced-width builds used in verification.
"""

from dataclasses import dataclass, asdict

import numpy as np

from ctgen.autodiff import Evaluator, Node, Parameter
from ctgen.errors import ConfigError, DomainError
from ctgen.ops import BatchNormState, as_tensor
from ctgen.optim import init_gaussian

D_FILTERS = (256, 128, 64, 32)
D_STRIDES = (2, 1, 1, 1)
D_DENSE_UNITS = 128
G_FILTERS = (256, 128, 64, 32, 16)
G_STRIDES = (2, 2, 1, 1, 1, 1)

WEIGHT_STD = 0.02
BN_EPS = 1e-5


@dataclass
class GanConfig:
    """Every knob of the training recipe, with the reference defaults."""

    image_size: int = 40
    channels: int = 3
    noise_dim: int = 100
    kernel_size: int = 3
    batch_size: int = 16
    lr_d: float = 1e-4
    lr_g: float = 2e-4
    optimizer: str = "rmsprop"
    leaky_slope: float = 0.2
    dropout_p: float = 0.6
    bn_momentum: float = 0.9
    weight_decay: float = 1e-5
    g_loss_mode: str = "nonsaturating"
    steps: int = 30000
    seed: int = 0
    filter_scale: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.image_size <= 0 or self.image_size % 4 != 0:
            raise ConfigError(f"image_size must be a positive multiple of 4, got {self.image_size}")
        if self.noise_dim != (self.image_size // 4) ** 2:
            raise ConfigError(
                f"noise_dim must equal (image_size/4)^2 = {(self.image_size // 4) ** 2}, "
                f"got {self.noise_dim}"
            )
        if self.kernel_size not in (3, 5):
            raise ConfigError(f"kernel_size must be 3 or 5, got {self.kernel_size}")
        if self.channels <= 0:
            raise ConfigError(f"channels must be positive, got {self.channels}")
        if self.batch_size <= 0:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if self.lr_d <= 0 or self.lr_g <= 0:
            raise ConfigError("learning rates must be positive")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"dropout_p must be in [0,1), got {self.dropout_p}")
        if not 0.0 <= self.leaky_slope < 1.0:
            raise ConfigError(f"leaky_slope must be in [0,1), got {self.leaky_slope}")
        if not 0.0 < self.bn_momentum < 1.0:
            raise ConfigError(f"bn_momentum must be in (0,1), got {self.bn_momentum}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be non-negative, got {self.weight_decay}")
        if self.optimizer not in ("rmsprop", "adam"):
            raise ConfigError(f"optimizer must be rmsprop or adam, got {self.optimizer!r}")
        if self.g_loss_mode not in ("nonsaturating", "minimax"):
            raise ConfigError(f"g_loss_mode must be nonsaturating or minimax, got {self.g_loss_mode!r}")
        if self.steps < 0:
            raise ConfigError(f"steps must be non-negative, got {self.steps}")
        if self.filter_scale < 1:
            raise ConfigError(f"filter_scale must be >= 1, got {self.filter_scale}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def scaled(self, width):
        return max(1, width // self.filter_scale)


@dataclass
class LayerSpec:
    """Declarative description of one layer block."""

    kind: str  # conv | tconv | dense | flatten | reshape
    name: str
    filters: int = 0
    kernel: int = 0
    stride: int = 1
    activation: str = "linear"  # leaky_relu | sigmoid | linear
    batch_norm: bool = False
    dropout_p: float = 0.0
    units: int = 0
    target_shape: tuple = ()


class Network:
    """A layer stack with its parameter registry and batch-norm state.

    ``forward`` runs against either a recording ``Tape`` or a value-only
    ``Evaluator``; layer order within a block is conv/dense, then batch
    norm, then activation, then dropout.
    """

    def __init__(self, name, layers, input_shape, cfg, rng):
        self.name = name
        self.layers = layers
        self.input_shape = tuple(input_shape)
        self.leaky_slope = cfg.leaky_slope
        self.params = {}
        self.bn_states = {}
        self._build(cfg, rng)

    def _add_param(self, name, value, role):
        p = Parameter(f"{self.name}/{name}", value, role)
        self.params[p.name] = p
        return p

    def _build(self, cfg, rng):
        shape = self.input_shape  # per-sample shape, no batch axis
        for spec in self.layers:
            if spec.kind == "reshape":
                shape = spec.target_shape
            elif spec.kind == "flatten":
                shape = (int(np.prod(shape)),)
            elif spec.kind == "conv":
                cin = shape[-1]
                k, f = spec.kernel, spec.filters
                self._add_param(f"{spec.name}/w", init_gaussian((k, k, cin, f), WEIGHT_STD, rng), "weight")
                self._add_param(f"{spec.name}/b", np.zeros(f), "bias")
                shape = ((shape[0] - 1) // spec.stride + 1, (shape[1] - 1) // spec.stride + 1, f)
            elif spec.kind == "tconv":
                cin = shape[-1]
                k, f = spec.kernel, spec.filters
                self._add_param(f"{spec.name}/w", init_gaussian((k, k, f, cin), WEIGHT_STD, rng), "weight")
                self._add_param(f"{spec.name}/b", np.zeros(f), "bias")
                shape = (shape[0] * spec.stride, shape[1] * spec.stride, f)
            elif spec.kind == "dense":
                fin = shape[-1]
                self._add_param(f"{spec.name}/w", init_gaussian((fin, spec.units), WEIGHT_STD, rng), "weight")
                self._add_param(f"{spec.name}/b", np.zeros(spec.units), "bias")
                shape = (spec.units,)
            else:
                raise ConfigError(f"unknown layer kind {spec.kind!r}")
            if spec.batch_norm:
                f = shape[-1]
                self._add_param(f"{spec.name}/gamma", np.ones(f), "bn_gamma")
                self._add_param(f"{spec.name}/beta", np.zeros(f), "bn_beta")
                self.bn_states[spec.name] = BatchNormState(f, cfg.bn_momentum, BN_EPS)
        self.output_shape = shape

    def forward(self, x, ctx=None, mode="infer", rng=None, trace=None, update_stats=None):
        """Run the stack. ``trace``, if a list, collects (layer, shape) pairs."""
        ctx = ctx if ctx is not None else Evaluator()
        if update_stats is None:
            update_stats = mode == "train"
        h = x if isinstance(x, Node) else ctx.constant(x)
        batch = (h.value if isinstance(h, Node) else h).shape[0]
        if trace is not None:
            trace.append(("input", self._shape_of(h)))
        for spec in self.layers:
            if spec.kind == "reshape":
                h = ctx.reshape(h, (batch,) + spec.target_shape)
            elif spec.kind == "flatten":
                h = ctx.flatten(h)
            elif spec.kind == "conv":
                h = ctx.conv2d(h, self._p(spec, "w"), self._p(spec, "b"), spec.stride)
            elif spec.kind == "tconv":
                h = ctx.conv2d_transpose(h, self._p(spec, "w"), self._p(spec, "b"), spec.stride)
            elif spec.kind == "dense":
                h = ctx.dense(h, self._p(spec, "w"), self._p(spec, "b"))
            if spec.batch_norm:
                h = ctx.batch_norm(
                    h, self._p(spec, "gamma"), self._p(spec, "beta"),
                    self.bn_states[spec.name], mode, update_stats,
                )
            if spec.activation == "leaky_relu":
                h = ctx.leaky_relu(h, self.leaky_slope)
            elif spec.activation == "sigmoid":
                h = ctx.sigmoid(h)
            if spec.dropout_p > 0.0:
                h = ctx.dropout(h, spec.dropout_p, mode, rng)
            if trace is not None:
                trace.append((spec.name, self._shape_of(h)))
        return h

    def _p(self, spec, part):
        return self.params[f"{self.name}/{spec.name}/{part}"]

    @staticmethod
    def _shape_of(h):
        return tuple((h.value if isinstance(h, Node) else h).shape)

    def parameter_count(self):
        return sum(p.value.size for p in self.params.values())


def build_discriminator(cfg, rng=None, strides=D_STRIDES):
    """Image -> probability-real network per the reference architecture."""
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    k = cfg.kernel_size
    layers = []
    for i, (f, s) in enumerate(zip(D_FILTERS, strides), start=1):
        layers.append(LayerSpec(
            kind="conv", name=f"conv{i}", filters=cfg.scaled(f), kernel=k, stride=s,
            activation="leaky_relu", dropout_p=cfg.dropout_p,
        ))
    layers.append(LayerSpec(kind="flatten", name="flatten"))
    layers.append(LayerSpec(kind="dense", name="dense5", units=cfg.scaled(D_DENSE_UNITS),
                            activation="leaky_relu"))
    layers.append(LayerSpec(kind="dense", name="dense6", units=1, activation="sigmoid"))
    s = cfg.image_size
    return Network("d", layers, (s, s, cfg.channels), cfg, rng)


def build_generator(cfg, rng=None, strides=G_STRIDES):
    """Noise -> image network per the reference architecture."""
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    k = cfg.kernel_size
    side = cfg.image_size // 4
    layers = [LayerSpec(kind="reshape", name="reshape0", target_shape=(side, side, 1))]
    for i, f in enumerate(G_FILTERS, start=1):
        layers.append(LayerSpec(
            kind="tconv", name=f"tconv{i}", filters=cfg.scaled(f), kernel=k,
            stride=strides[i - 1], activation="leaky_relu", batch_norm=True,
        ))
    layers.append(LayerSpec(
        kind="tconv", name="tconv6", filters=cfg.channels, kernel=k,
        stride=strides[5], activation="linear",
    ))
    return Network("g", layers, (cfg.noise_dim,), cfg, rng)


def sample_noise(n, dim, rng):
    """[n, dim] of i.i.d. Uniform[-1, 1] latent vectors."""
    if n <= 0 or dim <= 0:
        raise ConfigError(f"noise batch and dimension must be positive, got {n}, {dim}")
    return rng.uniform(-1.0, 1.0, size=(n, dim))


# ---------------------------------------------------------------------------
# Adversarial objective. The value function is
#   mean(log D(x)) + mean(log(1 - D(G(z))))
# estimated over the batch; the discriminator minimizes its negation and the
# generator either minimizes mean(log(1 - D(G(z)))) (minimax) or the
# non-saturating -mean(log D(G(z))) surrogate.
# ---------------------------------------------------------------------------

def _check_unit_interval(x, label):
    x = as_tensor(x)
    if x.size == 0:
        raise DomainError(f"{label} must be non-empty")
    if not np.all((x > 0.0) & (x < 1.0)):
        raise DomainError(f"{label} values must lie strictly in (0,1)")
    return x


def gan_value(d_real, d_fake):
    """Batch estimator of the adversarial value function."""
    d_real = _check_unit_interval(d_real, "d_real")
    d_fake = _check_unit_interval(d_fake, "d_fake")
    return float(np.log(d_real).mean() + np.log(1.0 - d_fake).mean())


def d_loss(d_real, d_fake):
    """Discriminator loss: exact negation of the value function."""
    return -gan_value(d_real, d_fake)


def g_loss(d_fake, mode="nonsaturating"):
    """Generator loss in the chosen mode; strictly decreasing in D(G(z))."""
    d_fake = _check_unit_interval(d_fake, "d_fake")
    if mode == "minimax":
        return float(np.log(1.0 - d_fake).mean())
    if mode == "nonsaturating":
        return float(-np.log(d_fake).mean())
    raise ConfigError(f"unknown generator loss mode {mode!r}")


def gan_value_node(tape, d_real, d_fake):
    """Tape version of gan_value over discriminator output nodes."""
    _check_unit_interval(d_real.value, "d_real")
    _check_unit_interval(d_fake.value, "d_fake")
    return tape.add(tape.mean(tape.log(d_real)), tape.mean(tape.log(tape.rsub(1.0, d_fake))))


def d_loss_node(tape, d_real, d_fake):
    return tape.neg(gan_value_node(tape, d_real, d_fake))


def g_loss_node(tape, d_fake, mode="nonsaturating"):
    _check_unit_interval(d_fake.value, "d_fake")
    if mode == "minimax":
        return tape.mean(tape.log(tape.rsub(1.0, d_fake)))
    if mode == "nonsaturating":
        return tape.neg(tape.mean(tape.log(d_fake)))
    raise ConfigError(f"unknown generator loss mode {mode!r}")
