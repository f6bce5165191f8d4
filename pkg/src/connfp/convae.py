"""Convolutional autoencoder over connectome matrices, in plain numpy.

The encoder stacks strided 2-d convolutions (each halving the spatial size
with ceiling) followed by an affine map to a latent vector; the decoder
mirrors it with transposed convolutions whose output_padding is chosen so the
shapes invert exactly for any input size. Transposed convolutions are
implemented as the exact adjoint of the strided convolution, which keeps the
backward passes symmetric and easy to verify. All gradients are analytic
gradients of the mean squared reconstruction error and are checked against
central finite differences in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DimensionError, TrainingDivergenceError
from .rng import substream

# substream tags relative to the training seed
_INIT_STREAM = 0
_SHUFFLE_STREAM = 1


def _apply_act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    if name == "linear":
        return z
    raise ConfigurationError(f"unknown activation {name!r}")


def _act_backward(name: str, out: np.ndarray, g: np.ndarray) -> np.ndarray:
    # derivative expressed through the cached layer output
    if name == "tanh":
        return g * (1.0 - out * out)
    return g


@dataclass
class ConvLayer:
    weight: np.ndarray  # (c_out, c_in, k, k)
    bias: np.ndarray  # (c_out,)
    stride: int = 2
    padding: int = 1
    activation: str = "tanh"


@dataclass
class DeconvLayer:
    weight: np.ndarray  # (c_in, c_out, k, k), adjoint-convolution convention
    bias: np.ndarray  # (c_out,)
    stride: int = 2
    padding: int = 1
    output_padding: int = 0
    activation: str = "tanh"


@dataclass
class DenseLayer:
    weight: np.ndarray  # (d_out, d_in)
    bias: np.ndarray  # (d_out,)
    activation: str = "tanh"


@dataclass
class ArchitectureConfig:
    """Shape of the autoencoder, independent of the input size."""

    channels: tuple[int, ...] = (8, 16)
    kernel_size: int = 3
    stride: int = 2
    latent_dim: int = 64
    activation: str = "tanh"

    def validate(self) -> None:
        if not self.channels or any(int(c) < 1 for c in self.channels):
            raise ConfigurationError(f"channels must be positive integers, got {self.channels!r}")
        if int(self.kernel_size) < 1 or int(self.kernel_size) % 2 == 0:
            raise ConfigurationError(f"kernel_size must be odd and >= 1, got {self.kernel_size}")
        if int(self.stride) < 1:
            raise ConfigurationError(f"stride must be >= 1, got {self.stride}")
        if int(self.latent_dim) < 1:
            raise ConfigurationError(f"latent_dim must be >= 1, got {self.latent_dim}")
        if self.activation not in ("tanh", "linear"):
            raise ConfigurationError(f"unknown activation {self.activation!r}")


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 16
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    init_scale: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if int(self.epochs) < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")
        if int(self.batch_size) < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        # learning_rate 0 is allowed so a no-update run can serve as a control
        if not np.isfinite(self.learning_rate) or self.learning_rate < 0:
            raise ConfigurationError(f"learning_rate must be >= 0, got {self.learning_rate}")
        for name in ("beta1", "beta2"):
            v = getattr(self, name)
            if not (0.0 <= v < 1.0):
                raise ConfigurationError(f"{name} must lie in [0, 1), got {v}")
        if self.epsilon <= 0:
            raise ConfigurationError(f"epsilon must be > 0, got {self.epsilon}")
        if self.init_scale <= 0:
            raise ConfigurationError(f"init_scale must be > 0, got {self.init_scale}")


@dataclass
class AutoencoderParams:
    """All weights plus the fixed geometry they were built for.

    Two configurations are supported: the full encoder/decoder used by the
    pipeline (convs, dense to latent, dense back, deconvs) and a conv-only
    stack (no dense layers, no decoder) that is handy for hand-built networks
    in tests, where the encoder output doubles as the reconstruction.
    """

    input_size: int
    latent_dim: int
    enc_convs: list[ConvLayer] = field(default_factory=list)
    enc_dense: DenseLayer | None = None
    dec_dense: DenseLayer | None = None
    dec_shape: tuple[int, int, int] | None = None
    dec_deconvs: list[DeconvLayer] = field(default_factory=list)

    def __post_init__(self):
        full = self.enc_dense is not None and self.dec_dense is not None
        conv_only = (
            self.enc_dense is None
            and self.dec_dense is None
            and not self.dec_deconvs
            and self.enc_convs
        )
        if not (full or conv_only):
            raise ConfigurationError(
                "params must either have both dense layers (full autoencoder) "
                "or be a conv-only stack"
            )
        if full and self.dec_shape is None:
            raise ConfigurationError("full autoencoder needs dec_shape to unflatten the decoder")
        _check_geometry(self)

    def _layers(self):
        layers: list = list(self.enc_convs)
        if self.enc_dense is not None:
            layers.append(self.enc_dense)
        if self.dec_dense is not None:
            layers.append(self.dec_dense)
        layers.extend(self.dec_deconvs)
        return layers

    def arrays(self) -> list[np.ndarray]:
        """Parameter tensors in canonical (forward) order: weight then bias per layer."""
        out = []
        for layer in self._layers():
            out.extend([layer.weight, layer.bias])
        return out

    def names(self) -> list[str]:
        labels = [f"enc_conv{i}" for i in range(len(self.enc_convs))]
        if self.enc_dense is not None:
            labels.append("enc_dense")
        if self.dec_dense is not None:
            labels.append("dec_dense")
        labels += [f"dec_deconv{i}" for i in range(len(self.dec_deconvs))]
        out = []
        for lab in labels:
            out.extend([f"{lab}.weight", f"{lab}.bias"])
        return out

    def n_parameters(self) -> int:
        return sum(a.size for a in self.arrays())


def _conv_out_size(n: int, k: int, s: int, p: int) -> int:
    return (n + 2 * p - k) // s + 1


def _deconv_out_size(n: int, k: int, s: int, p: int, op: int) -> int:
    return (n - 1) * s - 2 * p + k + op


def _check_geometry(params: AutoencoderParams) -> None:
    """Verify that encoder/decoder shapes compose back to the input shape."""
    size = params.input_size
    channels = 1
    for i, layer in enumerate(params.enc_convs):
        c_out, c_in, k, k2 = layer.weight.shape
        if k != k2:
            raise DimensionError(f"enc_conv{i} kernel must be square, got {layer.weight.shape}")
        if c_in != channels:
            raise DimensionError(
                f"enc_conv{i} expects {c_in} input channels but gets {channels}"
            )
        size = _conv_out_size(size, k, layer.stride, layer.padding)
        if size < 1:
            raise DimensionError(f"enc_conv{i} collapses the spatial size to {size}")
        channels = c_out
    flat = channels * size * size
    if params.enc_dense is not None:
        d_out, d_in = params.enc_dense.weight.shape
        if d_in != flat:
            raise DimensionError(f"enc_dense expects input size {d_in} but encoder yields {flat}")
        if d_out != params.latent_dim:
            raise DimensionError(
                f"enc_dense output {d_out} does not match latent_dim {params.latent_dim}"
            )
    if params.dec_dense is not None:
        d_out, d_in = params.dec_dense.weight.shape
        if d_in != params.latent_dim:
            raise DimensionError(f"dec_dense expects latent input {params.latent_dim}, got {d_in}")
        c, h, w = params.dec_shape
        if d_out != c * h * w:
            raise DimensionError(f"dec_dense output {d_out} does not match dec_shape {params.dec_shape}")
        size, channels = h, c
        if h != w:
            raise DimensionError("dec_shape must be spatially square")
    for i, layer in enumerate(params.dec_deconvs):
        c_in, c_out, k, k2 = layer.weight.shape
        if k != k2:
            raise DimensionError(f"dec_deconv{i} kernel must be square, got {layer.weight.shape}")
        if c_in != channels:
            raise DimensionError(
                f"dec_deconv{i} expects {c_in} input channels but gets {channels}"
            )
        if not (0 <= layer.output_padding < layer.stride):
            raise ConfigurationError(
                f"dec_deconv{i} output_padding must lie in [0, stride), got {layer.output_padding}"
            )
        size = _deconv_out_size(size, k, layer.stride, layer.padding, layer.output_padding)
        channels = c_out
    if params.dec_deconvs or params.dec_dense is not None:
        if channels != 1 or size != params.input_size:
            raise DimensionError(
                f"decoder produces ({channels}, {size}, {size}) but input is (1, "
                f"{params.input_size}, {params.input_size})"
            )


def build_params(
    arch: ArchitectureConfig, input_size: int, seed: int, init_scale: float = 1.0
) -> AutoencoderParams:
    """Seeded fan-in-scaled uniform init: weights ~ U(-a, a), a = scale / sqrt(fan_in)."""
    arch.validate()
    p = int(input_size)
    if p < 2:
        raise ConfigurationError(f"input_size must be >= 2, got {input_size}")
    k = int(arch.kernel_size)
    stride = int(arch.stride)
    pad = (k - 1) // 2
    channels = (1, *[int(c) for c in arch.channels])

    sizes = [p]
    for _ in arch.channels:
        nxt = _conv_out_size(sizes[-1], k, stride, pad)
        if nxt < 1:
            raise ConfigurationError(
                f"input size {p} is too small for {len(arch.channels)} stride-{stride} layers"
            )
        sizes.append(nxt)

    def uniform(rng, fan_in, shape):
        a = init_scale / math.sqrt(fan_in)
        return rng.uniform(-a, a, size=shape)

    enc = []
    for i in range(len(arch.channels)):
        c_in, c_out = channels[i], channels[i + 1]
        w = uniform(substream(seed, _INIT_STREAM, 0, i), c_in * k * k, (c_out, c_in, k, k))
        enc.append(ConvLayer(w, np.zeros(c_out), stride, pad, arch.activation))

    side = sizes[-1]
    flat = channels[-1] * side * side
    latent = int(arch.latent_dim)
    enc_dense = DenseLayer(
        uniform(substream(seed, _INIT_STREAM, 1), flat, (latent, flat)),
        np.zeros(latent),
        arch.activation,
    )
    dec_dense = DenseLayer(
        uniform(substream(seed, _INIT_STREAM, 2), latent, (flat, latent)),
        np.zeros(flat),
        arch.activation,
    )

    deconvs = []
    for i in reversed(range(len(arch.channels))):
        c_in, c_out = channels[i + 1], channels[i]
        in_size, out_size = sizes[i + 1], sizes[i]
        op = out_size - _deconv_out_size(in_size, k, stride, pad, 0)
        if not (0 <= op < stride):
            raise ConfigurationError(
                f"cannot invert size {in_size} -> {out_size} with kernel {k}, stride {stride}"
            )
        w = uniform(substream(seed, _INIT_STREAM, 3, i), c_in * k * k, (c_in, c_out, k, k))
        act = "linear" if i == 0 else arch.activation
        deconvs.append(DeconvLayer(w, np.zeros(c_out), stride, pad, op, act))

    return AutoencoderParams(
        input_size=p,
        latent_dim=latent,
        enc_convs=enc,
        enc_dense=enc_dense,
        dec_dense=dec_dense,
        dec_shape=(channels[-1], side, side),
        dec_deconvs=deconvs,
    )


# ---------------------------------------------------------------------------
# conv primitives (im2col / col2im)


def _im2col(x: np.ndarray, k: int, s: int, p: int, ho: int, wo: int) -> np.ndarray:
    n, c, _, _ = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    cols = np.empty((n, c, k, k, ho, wo), dtype=x.dtype)
    for a in range(k):
        for b in range(k):
            cols[:, :, a, b] = xp[:, :, a : a + s * ho : s, b : b + s * wo : s]
    return cols.reshape(n, c * k * k, ho * wo)


def _col2im(cols: np.ndarray, x_shape, k: int, s: int, p: int, ho: int, wo: int) -> np.ndarray:
    n, c, h, w = x_shape
    dxp = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=cols.dtype)
    cols = cols.reshape(n, c, k, k, ho, wo)
    for a in range(k):
        for b in range(k):
            dxp[:, :, a : a + s * ho : s, b : b + s * wo : s] += cols[:, :, a, b]
    return dxp[:, :, p : p + h, p : p + w]


def _conv_forward(x: np.ndarray, layer: ConvLayer):
    c_out, c_in, k, _ = layer.weight.shape
    n, c, h, w = x.shape
    ho = _conv_out_size(h, k, layer.stride, layer.padding)
    wo = _conv_out_size(w, k, layer.stride, layer.padding)
    cols = _im2col(x, k, layer.stride, layer.padding, ho, wo)
    out = np.matmul(layer.weight.reshape(c_out, -1), cols) + layer.bias[:, None]
    return out.reshape(n, c_out, ho, wo), (x.shape, cols, ho, wo)


def _conv_backward(g: np.ndarray, layer: ConvLayer, cache):
    x_shape, cols, ho, wo = cache
    n = g.shape[0]
    c_out = layer.weight.shape[0]
    gm = g.reshape(n, c_out, ho * wo)
    d_weight = np.einsum("ncl,nkl->ck", gm, cols).reshape(layer.weight.shape)
    d_bias = gm.sum(axis=(0, 2))
    dcols = np.matmul(layer.weight.reshape(c_out, -1).T, gm)
    dx = _col2im(dcols, x_shape, layer.weight.shape[2], layer.stride, layer.padding, ho, wo)
    return dx, d_weight, d_bias


def _deconv_forward(x: np.ndarray, layer: DeconvLayer):
    # exact adjoint of a strided convolution with the same weights
    c_in, c_out, k, _ = layer.weight.shape
    n, c, h, w = x.shape
    ho = _deconv_out_size(h, k, layer.stride, layer.padding, layer.output_padding)
    wo = _deconv_out_size(w, k, layer.stride, layer.padding, layer.output_padding)
    xm = x.reshape(n, c_in, h * w)
    cols = np.matmul(layer.weight.reshape(c_in, -1).T, xm)
    out = _col2im(cols, (n, c_out, ho, wo), k, layer.stride, layer.padding, h, w)
    out += layer.bias[None, :, None, None]
    return out, (x, (n, c_out, ho, wo), h, w)


def _deconv_backward(g: np.ndarray, layer: DeconvLayer, cache):
    x, out_shape, h, w = cache
    c_in, c_out, k, _ = layer.weight.shape
    n = g.shape[0]
    cols_g = _im2col(g, k, layer.stride, layer.padding, h, w)
    dx = np.matmul(layer.weight.reshape(c_in, -1), cols_g).reshape(n, c_in, h, w)
    d_weight = np.einsum("ncl,nkl->ck", x.reshape(n, c_in, h * w), cols_g).reshape(
        layer.weight.shape
    )
    d_bias = g.sum(axis=(0, 2, 3))
    return dx, d_weight, d_bias


# ---------------------------------------------------------------------------
# network forward/backward over a recorded tape


def _forward_tape(params: AutoencoderParams, x: np.ndarray):
    """x: (n, p, p). Returns (latent (n, d), recon (n, p, p), tape)."""
    n = x.shape[0]
    tape: list[tuple] = []
    z = x[:, None, :, :]
    for layer in params.enc_convs:
        pre, cache = _conv_forward(z, layer)
        out = _apply_act(layer.activation, pre)
        tape.append(("conv", layer, cache, out))
        z = out
    if params.enc_dense is None:
        # conv-only stack: encoder output doubles as the reconstruction
        latent = z.reshape(n, -1)
        recon = z
    else:
        img_shape = z.shape
        flat = z.reshape(n, -1)
        tape.append(("reshape", img_shape, flat.shape))
        pre = flat @ params.enc_dense.weight.T + params.enc_dense.bias
        out = _apply_act(params.enc_dense.activation, pre)
        tape.append(("dense", params.enc_dense, flat, out))
        latent = out

        pre = latent @ params.dec_dense.weight.T + params.dec_dense.bias
        out = _apply_act(params.dec_dense.activation, pre)
        tape.append(("dense", params.dec_dense, latent, out))
        z = out
        dec_img = (n, *params.dec_shape)
        tape.append(("reshape", z.shape, dec_img))
        z = z.reshape(dec_img)
        for layer in params.dec_deconvs:
            pre, cache = _deconv_forward(z, layer)
            out = _apply_act(layer.activation, pre)
            tape.append(("deconv", layer, cache, out))
            z = out
        recon = z
    if recon.shape != (n, 1, params.input_size, params.input_size):
        raise DimensionError(
            f"network produced reconstruction of shape {recon.shape[1:]}, expected "
            f"(1, {params.input_size}, {params.input_size})"
        )
    return latent, recon[:, 0, :, :], tape


def _backward_tape(params: AutoencoderParams, tape, g_recon: np.ndarray) -> list[np.ndarray]:
    grads_by_layer: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    g = g_recon[:, None, :, :]
    for entry in reversed(tape):
        kind = entry[0]
        if kind == "reshape":
            _, from_shape, _ = entry
            g = g.reshape(from_shape)
        elif kind == "dense":
            _, layer, x_in, out = entry
            g = _act_backward(layer.activation, out, g)
            grads_by_layer[id(layer)] = (g.T @ x_in, g.sum(axis=0))
            g = g @ layer.weight
        elif kind == "conv":
            _, layer, cache, out = entry
            g = _act_backward(layer.activation, out, g)
            g, dw, db = _conv_backward(g, layer, cache)
            grads_by_layer[id(layer)] = (dw, db)
        else:
            _, layer, cache, out = entry
            g = _act_backward(layer.activation, out, g)
            g, dw, db = _deconv_backward(g, layer, cache)
            grads_by_layer[id(layer)] = (dw, db)
    grads: list[np.ndarray] = []
    for layer in params._layers():
        dw, db = grads_by_layer[id(layer)]
        grads.extend([dw, db])
    return grads


def _stack_inputs(dataset) -> np.ndarray:
    mats = [np.asarray(getattr(m, "matrix", m), dtype=float) for m in dataset]
    if not mats:
        raise ValueError("dataset must contain at least one matrix")
    x = np.stack(mats)
    if x.ndim != 3 or x.shape[1] != x.shape[2]:
        raise DimensionError(f"dataset matrices must be square, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("dataset contains non-finite values")
    return x


def forward(params: AutoencoderParams, matrix) -> tuple[np.ndarray, np.ndarray]:
    """Encode and reconstruct a single p x p matrix.

    Returns (latent vector, reconstruction). Deterministic: no dropout or
    other stochastic pieces exist anywhere in the network.
    """
    x = _stack_inputs([matrix])
    if x.shape[1] != params.input_size:
        raise DimensionError(
            f"input is {x.shape[1]}x{x.shape[2]} but params were built for "
            f"{params.input_size}x{params.input_size}"
        )
    latent, recon, _ = _forward_tape(params, x)
    return latent[0].copy(), recon[0].copy()


def _loss_terms(params: AutoencoderParams, x: np.ndarray):
    latent, recon, tape = _forward_tape(params, x)
    diff = recon - x
    per_sample = np.einsum("nij,nij->n", diff, diff) / (x.shape[1] * x.shape[2])
    return diff, per_sample, tape


def loss_and_grad(params: AutoencoderParams, batch) -> tuple[float, list[np.ndarray]]:
    """Mean over the batch of ||input - reconstruction||_F^2 / p^2, plus exact grads.

    Gradients come back as a list of arrays aligned with ``params.arrays()``.
    """
    x = _stack_inputs(batch)
    if x.shape[1] != params.input_size:
        raise DimensionError(
            f"batch matrices are {x.shape[1]}x{x.shape[2]} but params expect "
            f"{params.input_size}x{params.input_size}"
        )
    diff, per_sample, tape = _loss_terms(params, x)
    loss = float(per_sample.mean())
    g_recon = (2.0 / diff.size) * diff
    grads = _backward_tape(params, tape, g_recon)
    return loss, grads


def train(dataset, arch: ArchitectureConfig, cfg: TrainConfig):
    """Minibatch adaptive gradient descent on the reconstruction error.

    Uses moment-tracking updates (decay rates cfg.beta1/cfg.beta2 with bias
    correction). The per-epoch loss is the mean per-sample loss observed
    during the epoch, accumulated in dataset order so it does not depend on
    the shuffle. Returns (params, loss_history).
    """
    cfg.validate()
    x = _stack_inputs(dataset)
    n, p, _ = x.shape
    params = build_params(arch, p, cfg.seed, cfg.init_scale)
    arrays = params.arrays()
    m1 = [np.zeros_like(a) for a in arrays]
    m2 = [np.zeros_like(a) for a in arrays]
    shuffle = substream(cfg.seed, _SHUFFLE_STREAM)
    history = []
    step = 0
    for epoch in range(cfg.epochs):
        order = shuffle.permutation(n)
        sample_losses = np.empty(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            diff, per_sample, tape = _loss_terms(params, x[idx])
            batch_loss = float(per_sample.mean())
            if not np.isfinite(batch_loss):
                raise TrainingDivergenceError(epoch)
            sample_losses[idx] = per_sample
            grads = _backward_tape(params, tape, (2.0 / diff.size) * diff)
            step += 1
            c1 = 1.0 - cfg.beta1**step
            c2 = 1.0 - cfg.beta2**step
            for a, g, u, v in zip(arrays, grads, m1, m2):
                u *= cfg.beta1
                u += (1.0 - cfg.beta1) * g
                v *= cfg.beta2
                v += (1.0 - cfg.beta2) * g * g
                a -= cfg.learning_rate * (u / c1) / (np.sqrt(v / c2) + cfg.epsilon)
        history.append(float(sample_losses.mean()))
    return params, np.asarray(history)


@dataclass
class ResidualConnectome:
    """What the autoencoder could not reconstruct: symmetrized, zero diagonal."""

    matrix: np.ndarray
    subject_id: str = ""
    session_label: str = ""

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"residual matrix must be square, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("residual matrix contains non-finite entries")
        m = (m + m.T) / 2.0
        np.fill_diagonal(m, 0.0)
        self.matrix = m

    @property
    def p(self) -> int:
        return self.matrix.shape[0]


def residual(connectome, params: AutoencoderParams) -> ResidualConnectome:
    """Input minus reconstruction, symmetrized as (R + R.T) / 2 with zero diagonal."""
    m = np.asarray(getattr(connectome, "matrix", connectome), dtype=float)
    _, recon = forward(params, m)
    return ResidualConnectome(
        m - recon,
        getattr(connectome, "subject_id", ""),
        getattr(connectome, "session_label", ""),
    )
