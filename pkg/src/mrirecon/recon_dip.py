"""Scan-specific deep image prior with a fixed 3-layer conv generator.

The generator maps a fixed noise tensor ``z [16, ny, nx]`` through
conv3x3(16->32) -> ReLU -> conv3x3(32->32) -> ReLU -> conv3x3(32->2), reflect
padding, and reads the two output channels as real / imaginary parts.  Forward
and reverse passes are written out by hand in numpy (float64).
"""
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import CDTYPE, ParameterError
from .encoding import SamplingMask, apply_A, apply_AH
from .phantom import rng

CHANNELS = (16, 32, 32, 2)
KSIZE = 3


@dataclass(frozen=True, eq=False)
class DipNetwork:
    """Parameters as ``[W1, b1, W2, b2, W3, b3]`` with ``W`` shaped ``[c_out, c_in, 3, 3]``."""

    params: tuple

    @property
    def weights(self):
        return self.params[0::2]

    @property
    def biases(self):
        return self.params[1::2]

    @property
    def n_params(self):
        return int(sum(p.size for p in self.params))


@dataclass(frozen=True, eq=False)
class NoiseSeed:
    z: np.ndarray
    seed: int


@dataclass(frozen=True, eq=False)
class AdamState:
    m: tuple
    v: tuple
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def n_params_expected():
    total = 0
    for cin, cout in zip(CHANNELS[:-1], CHANNELS[1:]):
        total += cin * cout * KSIZE * KSIZE + cout
    return total


def dip_init(seed, ny, nx, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """Uniform(+-sqrt(1/fan_in)) weights and biases, standard normal noise input."""
    if ny < 2 or nx < 2:
        raise ParameterError("grid too small for 3x3 reflect-padded convolutions")
    g = rng(seed)
    params = []
    for cin, cout in zip(CHANNELS[:-1], CHANNELS[1:]):
        bound = np.sqrt(1.0 / (cin * KSIZE * KSIZE))
        params.append(g.uniform(-bound, bound, size=(cout, cin, KSIZE, KSIZE)))
        params.append(g.uniform(-bound, bound, size=cout))
    z = g.standard_normal((CHANNELS[0], ny, nx))
    state = AdamState(
        tuple(np.zeros_like(p) for p in params), tuple(np.zeros_like(p) for p in params),
        0, lr, beta1, beta2, eps,
    )
    return DipNetwork(tuple(params)), NoiseSeed(z, int(seed)), state


def _im2col(x):
    # x [C, H, W] -> reflect pad -> columns [C * 9, H * W]
    c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)), mode="reflect")
    win = sliding_window_view(xp, (KSIZE, KSIZE), axis=(1, 2))  # [C, H, W, 3, 3]
    return np.ascontiguousarray(win.transpose(0, 3, 4, 1, 2)).reshape(c * KSIZE * KSIZE, h * w)


def _col2im(cols, shape):
    """Adjoint of :func:`_im2col` (scatter-add, then fold the reflected border back)."""
    c, h, w = shape
    cols = cols.reshape(c, KSIZE, KSIZE, h, w)
    xp = np.zeros((c, h + 2, w + 2))
    for a in range(KSIZE):
        for b in range(KSIZE):
            xp[:, a:a + h, b:b + w] += cols[:, a, b]
    # reflect pad of width 1: padded[0] = x[1], padded[-1] = x[-2]
    xp[:, :, 2] += xp[:, :, 0]
    xp[:, :, -3] += xp[:, :, -1]
    xp = xp[:, :, 1:-1]
    xp[:, 2, :] += xp[:, 0, :]
    xp[:, -3, :] += xp[:, -1, :]
    return xp[:, 1:-1, :]


def _forward_cache(net, z):
    x = np.asarray(z, dtype=np.float64)
    cache = []
    n_layers = len(net.weights)
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        cols = _im2col(x)
        y = W.reshape(W.shape[0], -1) @ cols + b[:, None]
        y = y.reshape(W.shape[0], *x.shape[1:])
        pre = y
        if i < n_layers - 1:
            y = np.maximum(y, 0.0)
        cache.append((x.shape, cols, pre))
        x = y
    return x, cache


def dip_forward(net, z):
    """G_theta(z) as a complex ``[ny, nx]`` image."""
    out, _ = _forward_cache(net, z.z if isinstance(z, NoiseSeed) else z)
    return (out[0] + 1j * out[1]).astype(CDTYPE)


def _backward(net, cache, grad_out):
    grads = [None] * len(net.params)
    g = grad_out
    n_layers = len(net.weights)
    for i in reversed(range(n_layers)):
        W = net.weights[i]
        in_shape, cols, pre = cache[i]
        if i < n_layers - 1:
            g = g * (pre > 0)  # ReLU'(0) := 0
        g2 = g.reshape(W.shape[0], -1)
        grads[2 * i] = (g2 @ cols.T).reshape(W.shape)
        grads[2 * i + 1] = g2.sum(axis=1)
        if i > 0:
            g = _col2im(W.reshape(W.shape[0], -1).T @ g2, in_shape)
    return grads


def dip_loss_grad(net, z, d, model):
    """Loss ||P F C G(z) - d||^2 and its gradient over every parameter.

    The image-side gradient is 2 A^H (A G(z) - d), split into the real and
    imaginary output channels and back-propagated through the conv stack.
    """
    zz = z.z if isinstance(z, NoiseSeed) else z
    out, cache = _forward_cache(net, zz)
    img = out[0] + 1j * out[1]
    resid = apply_A(img, model) - d
    loss = float(np.vdot(resid, resid).real)
    gimg = 2.0 * apply_AH(resid, model)
    grad_out = np.stack([gimg.real, gimg.imag])
    return loss, _backward(net, cache, grad_out)


def adam_step(net, grads, state):
    """One bias-corrected Adam update; returns the new (network, state)."""
    step = state.step + 1
    b1, b2 = state.beta1, state.beta2
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(net.params, grads, state.m, state.v):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** step)
        vhat = v / (1 - b2 ** step)
        new_p.append(p - state.lr * mhat / (np.sqrt(vhat) + state.eps))
        new_m.append(m)
        new_v.append(v)
    return DipNetwork(tuple(new_p)), replace(state, m=tuple(new_m), v=tuple(new_v), step=step)


def split_validation(mask, val_fraction, seed):
    """Hold out a random ``val_fraction`` of sampled k-space locations."""
    if not 0 < val_fraction <= 0.2:
        raise ParameterError(f"val_fraction must lie in (0, 0.2], got {val_fraction}")
    sampled = np.flatnonzero(mask.data.ravel())
    n_val = int(round(val_fraction * sampled.size))
    if n_val == 0:
        raise ParameterError("validation split is empty")
    pick = rng(seed + 1).choice(sampled, size=n_val, replace=False)
    val = np.zeros(mask.data.size, dtype=bool)
    val[pick] = True
    val = val.reshape(mask.data.shape)
    return mask.data & ~val, val


@dataclass
class DipHistory:
    train_loss: list = field(default_factory=list)
    val_steps: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_step: int = 0
    best_val: float = np.inf
    stopped_at: int = 0

    def as_dict(self):
        return {
            "train_loss": self.train_loss,
            "val_steps": self.val_steps,
            "val_loss": self.val_loss,
            "best_step": self.best_step,
            "best_val": self.best_val,
            "stopped_at": self.stopped_at,
        }


def dip_recon(d, model, seed=0, max_steps=5000, val_fraction=0.1, patience=5,
              lr=1e-3, check_every=25):
    """Fit the generator to the training part of ``d`` with validation early stopping.

    Returns the image at the best validation checkpoint and a :class:`DipHistory`.
    """
    if patience < 1:
        raise ParameterError("patience must be >= 1")
    d = np.asarray(d, dtype=CDTYPE)
    train, val = split_validation(model.mask, val_fraction, seed)
    train_model = model.with_mask(SamplingMask(train.astype(np.uint8)))
    val_model = model.with_mask(SamplingMask(val.astype(np.uint8)))
    d_train = d * train
    d_val = d * val
    ny, nx = model.geometry.shape
    net, z, state = dip_init(seed, ny, nx, lr=lr)
    hist = DipHistory()
    best_img = dip_forward(net, z)
    stale = 0
    for step in range(max_steps + 1):
        if step % check_every == 0:
            img = dip_forward(net, z)
            r = apply_A(img, val_model) - d_val
            vloss = float(np.vdot(r, r).real)
            hist.val_steps.append(step)
            hist.val_loss.append(vloss)
            if vloss < hist.best_val:
                hist.best_val, hist.best_step, best_img = vloss, step, img
                stale = 0
            else:
                stale += 1
                if stale >= patience:
                    break
        if step == max_steps:
            break
        loss, grads = dip_loss_grad(net, z, d_train, train_model)
        hist.train_loss.append(loss)
        net, state = adam_step(net, grads, state)
    hist.stopped_at = step
    return best_img, hist
