"""Shallow patch-approximation network: forward pass, exact backprop, Adam.

The network is a two-layer stack applied independently to each 3D patch:
a 3x3x3 convolution with K filters and zero padding (output shape equals
input shape), a voxel-wise ReLU, and a 1x1x1 combination layer with
identity activation.  Complex patches enter as two real channels; the
real-valued variant runs real and imaginary parts separately through a
single-channel network.

All heavy math is expressed as two matrix products per minibatch over an
im2col layout, which keeps 400 optimizer steps on a few hundred patches in
the seconds range without any framework dependency.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, FormatError, PreconditionError

NETWORK_MAGIC = b"ALNENET1"

_KSIZE = 3
_TAPS = _KSIZE**3


@dataclass
class NetworkParams:
    """Trainable parameters: K conv kernels + biases and the 1x1x1
    combination layer (weights and biases)."""

    mode: str  # "complex" (2 channels) or "real" (1 channel)
    kernels: np.ndarray  # (K, C, 3, 3, 3)
    bias1: np.ndarray  # (K,)
    comb_w: np.ndarray  # (C, K)
    comb_b: np.ndarray  # (C,)

    def __post_init__(self):
        if self.mode not in ("complex", "real"):
            raise PreconditionError(f"unknown network mode {self.mode!r}")
        c = self.channels
        k = self.kernels.shape[0]
        if self.kernels.shape != (k, c, _KSIZE, _KSIZE, _KSIZE):
            raise DimensionError(f"kernel shape {self.kernels.shape} invalid for mode")
        if self.bias1.shape != (k,) or self.comb_w.shape != (c, k) or self.comb_b.shape != (c,):
            raise DimensionError("parameter shapes are inconsistent")
        for arr in (self.kernels, self.bias1, self.comb_w, self.comb_b):
            if not np.isfinite(arr).all():
                raise PreconditionError("network parameters must be finite")

    @property
    def channels(self) -> int:
        return 2 if self.mode == "complex" else 1

    @property
    def n_filters(self) -> int:
        return self.kernels.shape[0]

    @property
    def q(self) -> int:
        return self.kernels.size + self.bias1.size + self.comb_w.size + self.comb_b.size

    def to_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.kernels.ravel(), self.bias1, self.comb_w.ravel(), self.comb_b]
        )

    @classmethod
    def from_vector(cls, mode: str, n_filters: int, vec: np.ndarray) -> "NetworkParams":
        """Rebuild parameters from a flat vector; the arrays are views into
        vec, so in-place vector updates propagate (used by the optimizer)."""
        c = 2 if mode == "complex" else 1
        sizes = [n_filters * c * _TAPS, n_filters, c * n_filters, c]
        if vec.size != sum(sizes):
            raise DimensionError(f"vector length {vec.size} does not match q={sum(sizes)}")
        parts = np.split(np.asarray(vec, dtype=np.float64), np.cumsum(sizes)[:-1])
        return cls(
            mode,
            parts[0].reshape(n_filters, c, _KSIZE, _KSIZE, _KSIZE),
            parts[1],
            parts[2].reshape(c, n_filters),
            parts[3],
        )

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            self.mode, self.kernels.copy(), self.bias1.copy(),
            self.comb_w.copy(), self.comb_b.copy(),
        )


def parameter_count(n_filters: int, mode: str) -> int:
    c = 2 if mode == "complex" else 1
    return n_filters * _TAPS * c + n_filters + c * n_filters + c


def init_network_params(n_filters: int, mode: str = "complex", seed: int = 0) -> NetworkParams:
    """Seeded initialization: kernels from a scaled normal with
    std = sqrt(2 / fan_in), biases zero."""
    if n_filters < 1:
        raise PreconditionError("need at least one filter")
    c = 2 if mode == "complex" else 1
    rng = np.random.default_rng(seed)
    kernels = rng.normal(0.0, np.sqrt(2.0 / (c * _TAPS)), size=(n_filters, c, _KSIZE, _KSIZE, _KSIZE))
    comb_w = rng.normal(0.0, np.sqrt(2.0 / n_filters), size=(c, n_filters))
    return NetworkParams(mode, kernels, np.zeros(n_filters), comb_w, np.zeros(c))


@dataclass(frozen=True)
class TrainConfig:
    n_backprops: int = 400
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    penalty_weight: float = 1e-4
    batch_size: int = 64
    seed: int = 0
    eval_every: int = 100  # best-so-far checkpoints on the full-set loss

    def __post_init__(self):
        if self.n_backprops < 1:
            raise PreconditionError("n_backprops must be >= 1")
        if self.learning_rate <= 0:
            raise PreconditionError("learning rate must be > 0")


# ---------------------------------------------------------------------------
# channel plumbing and im2col


def complex_to_channels(blocks: np.ndarray) -> np.ndarray:
    """(n, px, py, pt) complex -> (n, 2, px, py, pt) real channels."""
    return np.stack([blocks.real, blocks.imag], axis=1)


def channels_to_complex(ch: np.ndarray) -> np.ndarray:
    return ch[:, 0] + 1j * ch[:, 1]


def _im2col(channels: np.ndarray, padding: str) -> np.ndarray:
    """(n, C, px, py, pt) -> (C * 27, n, vox) with vox in C order, so the
    tap layout matches kernels.reshape(K, C * 27)."""
    if padding == "zero":
        mode = "constant"
    elif padding == "circular":
        mode = "wrap"
    else:
        raise PreconditionError(f"unknown padding {padding!r}")
    n, c = channels.shape[:2]
    vox = int(np.prod(channels.shape[2:]))
    padded = np.pad(channels, ((0, 0), (0, 0), (1, 1), (1, 1), (1, 1)), mode=mode)
    win = sliding_window_view(padded, (_KSIZE, _KSIZE, _KSIZE), axis=(2, 3, 4))
    # win: (n, C, px, py, pt, 3, 3, 3) -> (C, 3, 3, 3, n, px*py*pt)
    cols = win.transpose(1, 5, 6, 7, 0, 2, 3, 4).reshape(c * _TAPS, n, vox)
    return np.ascontiguousarray(cols)


def _forward_cols(params: NetworkParams, cols2: np.ndarray):
    """Dense forward on a (C*27, b*vox) column matrix; returns hidden
    activations and outputs as 2D matrices."""
    wk = params.kernels.reshape(params.n_filters, -1)
    pre = wk @ cols2
    pre += params.bias1[:, None]
    hidden = np.maximum(pre, 0.0, out=pre)
    out = params.comb_w @ hidden
    out += params.comb_b[:, None]
    return hidden, out


def forward_channels(params: NetworkParams, channels: np.ndarray, padding: str = "zero") -> np.ndarray:
    """Forward pass on a (n, C, px, py, pt) channel batch."""
    if channels.ndim != 5 or channels.shape[1] != params.channels:
        raise DimensionError(
            f"channel batch shape {channels.shape} does not match {params.channels}-channel mode"
        )
    n = channels.shape[0]
    spatial = channels.shape[2:]
    cols = _im2col(np.asarray(channels, dtype=np.float64), padding)
    _, out = _forward_cols(params, cols.reshape(cols.shape[0], -1))
    return out.reshape(params.channels, n, *spatial).swapaxes(0, 1)


def forward(params: NetworkParams, patch: np.ndarray, padding: str = "zero") -> np.ndarray:
    """Apply the network to one patch.

    Complex mode takes a complex 3D block; real mode takes a real 3D block.
    The output has the shape and dtype of the input.
    """
    patch = np.asarray(patch)
    if patch.ndim != 3:
        raise DimensionError(f"patch must be a 3D block, got shape {patch.shape}")
    if np.iscomplexobj(patch):
        if params.mode != "complex":
            raise PreconditionError("complex patch requires a complex-mode network")
        ch = complex_to_channels(patch.astype(np.complex128)[None])
        return channels_to_complex(forward_channels(params, ch, padding))[0]
    if params.mode != "real":
        raise PreconditionError("real patch requires a real-mode network")
    ch = patch.astype(np.float64)[None, None]
    return forward_channels(params, ch, padding)[0, 0]


def forward_batch(params: NetworkParams, blocks: np.ndarray, padding: str = "zero",
                  chunk: int = 256) -> np.ndarray:
    """Forward over a batch of complex (or real-mode real) patch blocks,
    chunked to bound the im2col working set."""
    blocks = np.asarray(blocks)
    out = np.empty_like(blocks, dtype=np.complex128 if np.iscomplexobj(blocks) else np.float64)
    for start in range(0, blocks.shape[0], chunk):
        piece = blocks[start : start + chunk]
        if np.iscomplexobj(blocks):
            ch = complex_to_channels(piece)
            out[start : start + chunk] = channels_to_complex(
                forward_channels(params, ch, padding)
            )
        else:
            out[start : start + chunk] = forward_channels(
                params, piece[:, None], padding
            )[:, 0]
    return out


# ---------------------------------------------------------------------------
# loss, gradient, training


def kernel_penalty(params: NetworkParams) -> float:
    """Sum of squared first-layer kernel entries (biases and the 1x1x1
    layer are excluded)."""
    return float(np.sum(params.kernels**2))


def _blocks_of(patchset) -> np.ndarray:
    if hasattr(patchset, "blocks"):
        return patchset.blocks()
    return np.asarray(patchset)


def _loss_grad_dense(params: NetworkParams, cols2: np.ndarray, targets2: np.ndarray,
                     lam: float, penalty_weight: float):
    """Loss and gradient on prepared 2D column/target matrices."""
    wk = params.kernels.reshape(params.n_filters, -1)
    hidden, out = _forward_cols(params, cols2)
    diff = out - targets2
    loss = 0.5 * lam * float(np.sum(diff * diff)) + penalty_weight * float(np.sum(wk * wk))
    grad_out = lam * diff
    g_comb_w = grad_out @ hidden.T
    g_comb_b = grad_out.sum(axis=1)
    g_hidden = params.comb_w.T @ grad_out
    g_hidden *= hidden > 0.0
    g_wk = g_hidden @ cols2.T
    g_wk += (2.0 * penalty_weight) * wk
    g_b1 = g_hidden.sum(axis=1)
    grad = np.concatenate([g_wk.ravel(), g_b1, g_comb_w.ravel(), g_comb_b])
    return loss, grad


def _prepare(params: NetworkParams, blocks: np.ndarray, padding: str):
    """Channel split + im2col for a block batch; returns (cols, targets) in
    channel-major (CC, n, vox) / (C, n, vox) layout."""
    if np.iscomplexobj(blocks):
        if params.mode != "complex":
            raise PreconditionError("complex patches require a complex-mode network")
        channels = complex_to_channels(blocks)
    else:
        if params.mode != "real":
            raise PreconditionError("real patches require a real-mode network")
        channels = np.asarray(blocks, dtype=np.float64)[:, None]
    n = channels.shape[0]
    vox = int(np.prod(channels.shape[2:]))
    cols = _im2col(channels, padding)
    targets = np.ascontiguousarray(channels.swapaxes(0, 1).reshape(params.channels, n, vox))
    return cols, targets


def loss_and_gradient(params: NetworkParams, patchset, lam: float,
                      penalty_weight: float, padding: str = "zero"):
    """Patch-reproduction loss lam/2 * sum_j |p_j - f(p_j)|^2 plus the
    weighted kernel penalty, with its exact gradient over all parameters
    (ReLU subgradient 0 at 0)."""
    blocks = _blocks_of(patchset)
    cols, targets = _prepare(params, blocks, padding)
    cc, n, vox = cols.shape
    return _loss_grad_dense(
        params, cols.reshape(cc, n * vox), targets.reshape(params.channels, n * vox),
        lam, penalty_weight,
    )


def dataset_loss(params: NetworkParams, patchset, lam: float, penalty_weight: float,
                 padding: str = "zero") -> float:
    blocks = _blocks_of(patchset)
    out = forward_batch(params, blocks, padding)
    diff = out - blocks
    data = float(np.sum(np.abs(diff) ** 2))
    return 0.5 * lam * data + penalty_weight * kernel_penalty(params)


def train(params: NetworkParams, patchset, lam: float, config: TrainConfig,
          padding: str = "zero") -> NetworkParams:
    """Run config.n_backprops Adam steps on minibatches drawn cyclically
    from a seeded shuffle of the patch set.

    The full-set loss is checkpointed every config.eval_every steps and the
    best parameters seen are returned, so the exit loss never exceeds the
    entry loss.
    """
    blocks = _blocks_of(patchset)
    n = blocks.shape[0]
    if n == 0:
        raise PreconditionError("cannot train on an empty patch set")
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(n)
    cols, targets = _prepare(params, blocks[order], padding)
    cc, _, vox = cols.shape
    c = params.channels
    batch = min(config.batch_size, n)
    full_cols2 = cols.reshape(cc, n * vox)
    full_targets2 = targets.reshape(c, n * vox)

    vec = params.to_vector()
    work = NetworkParams.from_vector(params.mode, params.n_filters, vec)

    def full_loss() -> float:
        wk2 = work.kernels.reshape(work.n_filters, -1)
        _, out = _forward_cols(work, full_cols2)
        diff = out - full_targets2
        return 0.5 * lam * float(np.sum(diff * diff)) + config.penalty_weight * float(
            np.sum(wk2 * wk2)
        )

    best_vec = vec.copy()
    best_loss = full_loss()

    m = np.zeros_like(vec)
    v = np.zeros_like(vec)

    def batch_views(step: int):
        start = (step * batch) % n
        end = start + batch
        if end <= n:
            return (
                cols[:, start:end, :].reshape(cc, batch * vox),
                targets[:, start:end, :].reshape(c, batch * vox),
            )
        wrap = end - n
        csel = np.concatenate([cols[:, start:, :], cols[:, :wrap, :]], axis=1)
        tsel = np.concatenate([targets[:, start:, :], targets[:, :wrap, :]], axis=1)
        return csel.reshape(cc, batch * vox), tsel.reshape(c, batch * vox)

    for step in range(config.n_backprops):
        cols2, targets2 = batch_views(step)
        _, grad = _loss_grad_dense(work, cols2, targets2, lam, config.penalty_weight)
        t = step + 1
        m += (1.0 - config.beta1) * (grad - m)
        v += (1.0 - config.beta2) * (grad * grad - v)
        m_hat = m / (1.0 - config.beta1**t)
        v_hat = v / (1.0 - config.beta2**t)
        vec -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)
        if (t % config.eval_every == 0) or t == config.n_backprops:
            loss = full_loss()
            if loss < best_loss:
                best_loss = loss
                best_vec = vec.copy()
    result = NetworkParams.from_vector(params.mode, params.n_filters, best_vec)
    return result.copy()


# ---------------------------------------------------------------------------
# serialization


def save_network(path, params: NetworkParams) -> None:
    """Checkpoint format: magic, u8 mode (0 real / 1 complex), u32 K, then
    the parameter vector as little-endian float64."""
    with open(path, "wb") as fh:
        fh.write(NETWORK_MAGIC)
        fh.write(struct.pack("<BI", 1 if params.mode == "complex" else 0, params.n_filters))
        fh.write(params.to_vector().astype("<f8").tobytes())


def load_network(path) -> NetworkParams:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != NETWORK_MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        header = fh.read(5)
        if len(header) != 5:
            raise FormatError("truncated header")
        mode_flag, k = struct.unpack("<BI", header)
        if mode_flag not in (0, 1) or k < 1:
            raise FormatError("bad mode or filter count")
        mode = "complex" if mode_flag == 1 else "real"
        q = parameter_count(k, mode)
        raw = fh.read(8 * q + 1)
        if len(raw) != 8 * q:
            raise FormatError(f"payload has {len(raw)} bytes, expected {8 * q}")
    vec = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    return NetworkParams.from_vector(mode, k, vec)
