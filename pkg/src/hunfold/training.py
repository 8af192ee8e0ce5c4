"""Loss, analytic backpropagation and Adam training for unfolded networks.

The loss is the batch NMSE  sum_i ||x_i - xhat_i|| / sum_i ||x_i||  (plain
norms, not squared).  Gradients are computed by a hand-rolled reverse pass
in the split real/imaginary parameterisation: the complex soft threshold
contributes its exact Jacobian away from the |u| = theta sphere and a zero
subgradient on it, matrix adjoints are conjugate transposes, and kernel
adjoints are correlations (convolution with the flipped conjugate).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cplx import ComplexArray, NumericError
from .harmonic import Dataset
from .nets import Layer, UnfoldedNetwork, conv_grid, forward_planes
from .spectral import conv_full_planes, conv_full2_planes

__all__ = [
    "AdamState",
    "LayerGrads",
    "NetGradients",
    "TrainConfig",
    "TrainReport",
    "adam_step",
    "backward",
    "estimate_dictionary",
    "init_adam_state",
    "loss_nmse",
    "train",
]


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 128
    epochs: int = 30
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    lr_decay_patience: int = 5
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.adam_beta1 < 1.0 and 0.0 < self.adam_beta2 < 1.0):
            raise ValueError("Adam moment factors must lie in (0, 1)")
        if self.learning_rate <= 0.0 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("bad training configuration")


@dataclass
class TrainReport:
    loss_history: list[float] = field(default_factory=list)
    val_history: list[float] = field(default_factory=list)
    best_epoch: int | None = None


@dataclass
class LayerGrads:
    filt: ComplexArray | None
    filt_kernel: ComplexArray | None
    inhibit: ComplexArray
    threshold: float


@dataclass
class NetGradients:
    layers: list[LayerGrads]
    loss: float


def _batch_planes(ds: Dataset):
    """Column-major dataset planes -> batch-major (count, dim) copies."""
    return (np.ascontiguousarray(ds.obs.re.T), np.ascontiguousarray(ds.obs.im.T),
            np.ascontiguousarray(ds.truth.re.T), np.ascontiguousarray(ds.truth.im.T))


def _nmse_sums(xr, xi, tr, ti):
    err = np.sqrt(np.sum((xr - tr) ** 2 + (xi - ti) ** 2, axis=1))
    ref = np.sqrt(np.sum(tr ** 2 + ti ** 2, axis=1))
    return float(np.sum(err)), float(np.sum(ref))


def loss_nmse(net: UnfoldedNetwork, batch: Dataset, chunk: int = 2048) -> float:
    """Batch NMSE of the network's recoveries against the labels."""
    if batch.count == 0:
        raise ValueError("empty batch")
    yr, yi, tr, ti = _batch_planes(batch)
    num = 0.0
    den = 0.0
    for lo in range(0, batch.count, chunk):
        sl = slice(lo, lo + chunk)
        xr, xi, _ = forward_planes(net, yr[sl], yi[sl])
        e, r = _nmse_sums(xr, xi, tr[sl], ti[sl])
        num += e
        den += r
    if den == 0.0:
        raise ValueError("loss undefined: all-zero ground truth batch")
    return num / den


def _soft_threshold_adjoint(gr, gi, ur, ui, theta):
    """Pull a gradient back through the complex soft threshold at u.

    Returns plane gradients on u plus the scalar gradient on theta.  The
    operator is treated as constant zero on the closed ball |u| <= theta,
    so the kink contributes a zero subgradient.
    """
    mag = np.hypot(ur, ui)
    active = mag > theta
    inv = np.where(active, 1.0 / np.where(active, mag, 1.0), 0.0)
    dot = gr * ur + gi * ui
    gtheta = -float(np.sum(np.where(active, dot * inv, 0.0)))
    if theta == 0.0:
        # identity map; gtheta above is the one-sided derivative at zero
        return gr.copy(), gi.copy(), gtheta
    c1 = 1.0 - theta * inv
    inv3 = inv ** 3
    gur = np.where(active, gr * c1 + theta * ur * inv3 * dot, 0.0)
    gui = np.where(active, gi * c1 + theta * ui * inv3 * dot, 0.0)
    return gur, gui, gtheta


def _dense_adjoint(gr, gi, vr, vi):
    """Gradient of sum Re(g^H W v) style bilinear terms wrt the matrix W:
    accumulates g conj(v)^T over the batch."""
    return ComplexArray(gr.T @ vr + gi.T @ vi, gi.T @ vr - gr.T @ vi)


def _kernel_grad_1d(gr, gi, vr, vi):
    """Correlation of the layer gradient with the conjugate input: the
    adjoint of a windowed 1-D convolution wrt its kernel."""
    fr = vr[..., ::-1]
    fi = -vi[..., ::-1]
    rr, ri = conv_full_planes(gr, gi, fr, fi)
    return ComplexArray(rr.sum(axis=0), ri.sum(axis=0))


def _kernel_backprop_1d(kr, ki, gr, gi, out_len):
    """Push a gradient through a windowed 1-D convolution back to its input:
    convolve with the flipped conjugate kernel on the same window."""
    k2r = kr[::-1].copy()
    k2i = -ki[::-1]
    rr, ri = conv_full_planes(k2r, k2i, gr, gi)
    lo = (kr.shape[-1] + 1) // 2 - 1  # kernel origin: (len+1)/2 - 1
    return rr[..., lo:lo + out_len], ri[..., lo:lo + out_len]


def backward(net: UnfoldedNetwork, batch: Dataset) -> NetGradients:
    """Gradients of the batch NMSE wrt every layer parameter plane."""
    if batch.count == 0:
        raise ValueError("empty batch")
    yr, yi, tr, ti = _batch_planes(batch)
    grads, _, _, loss = _backward_planes(net, yr, yi, tr, ti)
    return NetGradients(grads, loss)


def _backward_planes(net: UnfoldedNetwork, yr, yi, tr, ti):
    xr, xi, cache = forward_planes(net, yr, yi, keep_cache=True)
    err_r = xr - tr
    err_i = xi - ti
    per = np.sqrt(np.sum(err_r ** 2 + err_i ** 2, axis=1))
    den = float(np.sum(np.sqrt(np.sum(tr ** 2 + ti ** 2, axis=1))))
    if den == 0.0:
        raise ValueError("loss undefined: all-zero ground truth batch")
    loss = float(np.sum(per)) / den
    w = np.where(per > 0.0, 1.0 / (np.where(per > 0.0, per, 1.0) * den), 0.0)
    gr = err_r * w[:, None]
    gi = err_i * w[:, None]

    m = net.total
    is_2d_kernel = net.arch == "toeplitz2d" or (net.arch == "convlista"
                                                and len(net.shape) == 2)
    grads: list[LayerGrads | None] = [None] * net.depth
    for t in range(net.depth - 1, -1, -1):
        layer = net.layers[t]
        ctx = cache[t]
        gur, gui, gtheta = _soft_threshold_adjoint(
            gr, gi, ctx["u_r"], ctx["u_i"], layer.threshold)

        # observation branch
        if net.arch == "convlista":
            gfilt = None
            gkernel = _kernel_grad_1d(gur, gui, yr, yi)
        else:
            gfilt = _dense_adjoint(gur, gui, yr, yi)
            gkernel = None

        # inhibition branch (layer 0 sees the zero spectrum: no gradient)
        if t == 0:
            ginhib = ComplexArray.zeros(layer.inhibit.shape)
            new_gr = new_gi = None
        elif net.arch == "lista":
            ginhib = _dense_adjoint(gur, gui, ctx["x_r"], ctx["x_i"])
            wr, wi = layer.inhibit.re, layer.inhibit.im
            new_gr = gur @ wr + gui @ wi
            new_gi = gui @ wr - gur @ wi
        elif not is_2d_kernel:
            full = _kernel_grad_1d(gur, gui, ctx["x_r"], ctx["x_i"])
            ginhib = full
            new_gr, new_gi = _kernel_backprop_1d(
                layer.inhibit.re, layer.inhibit.im, gur, gui, m)
        else:
            g1, g2 = conv_grid(net.shape)
            b = gur.shape[0]
            gm_r = np.ascontiguousarray(gur.reshape(b, g2, g1).swapaxes(1, 2))
            gm_i = np.ascontiguousarray(gui.reshape(b, g2, g1).swapaxes(1, 2))
            xm_r = np.ascontiguousarray(ctx["x_r"].reshape(b, g2, g1).swapaxes(1, 2))
            xm_i = np.ascontiguousarray(ctx["x_i"].reshape(b, g2, g1).swapaxes(1, 2))
            rr, ri = conv_full2_planes(gm_r, gm_i,
                                       xm_r[..., ::-1, ::-1].copy(),
                                       -xm_i[..., ::-1, ::-1])
            ginhib = ComplexArray(rr.sum(axis=0), ri.sum(axis=0))
            k2r = layer.inhibit.re[::-1, ::-1].copy()
            k2i = -layer.inhibit.im[::-1, ::-1]
            br, bi = conv_full2_planes(k2r, k2i, gm_r, gm_i)
            lo1, lo2 = g1 - 1, g2 - 1
            br = br[..., lo1:lo1 + g1, lo2:lo2 + g2]
            bi = bi[..., lo1:lo1 + g1, lo2:lo2 + g2]
            new_gr = np.ascontiguousarray(br.swapaxes(1, 2)).reshape(b, -1)
            new_gi = np.ascontiguousarray(bi.swapaxes(1, 2)).reshape(b, -1)

        grads[t] = LayerGrads(gfilt, gkernel, ginhib, gtheta)
        if t > 0:
            gr, gi = new_gr, new_gi

    err_sum = float(np.sum(per))
    ref_sum = den
    return grads, err_sum, ref_sum, loss


# -- Adam ------------------------------------------------------------------


@dataclass
class AdamState:
    step: int
    mom1: list[np.ndarray]
    mom2: list[np.ndarray]


def init_adam_state(params: list[np.ndarray]) -> AdamState:
    return AdamState(0, [np.zeros_like(p) for p in params],
                     [np.zeros_like(p) for p in params])


def adam_step(params: list[np.ndarray], grads: list[np.ndarray],
              state: AdamState, cfg: TrainConfig,
              clamp_nonneg: list[bool] | None = None,
              learning_rate: float | None = None):
    """Bias-corrected moment update applied to every plane.

    Updates ``params`` and ``state`` in place and returns them.  Entries
    flagged in ``clamp_nonneg`` are projected onto [0, inf) after the step
    (used for per-layer thresholds).
    """
    if len(params) != len(grads):
        raise ValueError("parameter/gradient lists differ in length")
    lr = cfg.learning_rate if learning_rate is None else learning_rate
    state.step += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        m = state.mom1[i]
        v = state.mom2[i]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps)
        if clamp_nonneg is not None and clamp_nonneg[i]:
            np.maximum(p, 0.0, out=p)
    return params, state


# -- parameter flattening ----------------------------------------------------


def net_param_arrays(net: UnfoldedNetwork):
    """Copy a network into a flat list of planes (thresholds as 0-d arrays).

    Returns (params, clamp_flags); thresholds are the only clamped entries.
    """
    params: list[np.ndarray] = []
    clamp: list[bool] = []
    for layer in net.layers:
        obs = layer.filt_kernel if net.arch == "convlista" else layer.filt
        for arr in (obs.re, obs.im, layer.inhibit.re, layer.inhibit.im):
            params.append(arr.copy())
            clamp.append(False)
        params.append(np.array(layer.threshold))
        clamp.append(True)
    return params, clamp


def grad_arrays(grads: NetGradients, arch: str) -> list[np.ndarray]:
    out: list[np.ndarray] = []
    for g in grads.layers:
        obs = g.filt_kernel if arch == "convlista" else g.filt
        out.extend((obs.re, obs.im, g.inhibit.re, g.inhibit.im))
        out.append(np.array(g.threshold))
    return out


def assemble_network(arch: str, shape, n_obs: int,
                     params: list[np.ndarray]) -> UnfoldedNetwork:
    """Wrap flat parameter planes back into a network (shares the buffers)."""
    layers = []
    for i in range(0, len(params), 5):
        obs = ComplexArray(params[i], params[i + 1])
        inhibit = ComplexArray(params[i + 2], params[i + 3])
        theta = float(params[i + 4])
        if arch == "convlista":
            layers.append(Layer(None, obs, inhibit, theta))
        else:
            layers.append(Layer(obs, None, inhibit, theta))
    return UnfoldedNetwork(arch, tuple(shape), n_obs, layers)


# -- training loop -----------------------------------------------------------


def train(net: UnfoldedNetwork, train_ds: Dataset, val_ds: Dataset,
          cfg: TrainConfig):
    """Mini-batch Adam on the NMSE loss with plateau-driven LR decay.

    Validation runs once per epoch; the parameters achieving the best
    validation NMSE are returned.  After ``lr_decay_patience`` validation
    checks without improvement the learning rate drops by 10x.  The whole
    procedure is deterministic for a fixed (config, seed).
    """
    if train_ds.obs.shape[0] != net.n_obs or train_ds.truth.shape[0] != net.total:
        raise ValueError("training data dimensions do not match the network")
    report = TrainReport()
    if cfg.epochs == 0:
        return net, report

    yr, yi, tr, ti = _batch_planes(train_ds)
    params, clamp = net_param_arrays(net)
    state = init_adam_state(params)
    rng = np.random.default_rng(cfg.seed)
    count = train_ds.count
    lr = cfg.learning_rate
    best_val = np.inf
    best_params = [p.copy() for p in params]
    stalled = 0

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(count)
        num = 0.0
        den = 0.0
        for lo in range(0, count, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            work = assemble_network(net.arch, net.shape, net.n_obs, params)
            try:
                grads, e_sum, r_sum, loss = _backward_planes(
                    work, yr[idx], yi[idx], tr[idx], ti[idx])
            except NumericError as exc:
                raise NumericError(
                    f"epoch {epoch}, batch {lo // cfg.batch_size}: {exc}") from exc
            if not np.isfinite(loss):
                raise NumericError(
                    f"epoch {epoch}, batch {lo // cfg.batch_size}: loss diverged")
            flat = grad_arrays(NetGradients(grads, loss), net.arch)
            adam_step(params, flat, state, cfg, clamp, learning_rate=lr)
            num += e_sum
            den += r_sum
        report.loss_history.append(num / den)

        work = assemble_network(net.arch, net.shape, net.n_obs, params)
        val = loss_nmse(work, val_ds)
        report.val_history.append(val)
        if val < best_val:
            best_val = val
            best_params = [p.copy() for p in params]
            report.best_epoch = epoch
            stalled = 0
        else:
            stalled += 1
            if stalled >= cfg.lr_decay_patience:
                lr *= 0.1
                stalled = 0

    final = assemble_network(net.arch, net.shape, net.n_obs, best_params)
    return final, report


# -- dictionary estimation ---------------------------------------------------


def estimate_dictionary(ds: Dataset) -> ComplexArray:
    """Least-squares operator estimate from labelled pairs.

    Solves  min ||Y - A X||_F  through the normal equations
    A = Y X^H (X X^H)^{-1}, with a vanishing ridge for numerical safety.
    Needs at least as many samples as grid cells and a full-rank label
    matrix.
    """
    x = ds.truth.to_complex()
    y = ds.obs.to_complex()
    m = x.shape[0]
    if ds.count < m:
        raise ValueError(f"need at least {m} samples to estimate, got {ds.count}")
    g = x @ x.conj().T
    b = y @ x.conj().T
    evals = np.linalg.eigvalsh(g)
    if evals[-1] <= 0.0 or evals[0] <= 1e-12 * evals[-1]:
        raise ValueError("label matrix is rank deficient; cannot estimate")
    ridge = 1e-10 * np.trace(g).real / m
    g += ridge * np.eye(m)
    est = np.linalg.solve(g.T, b.T).T
    return ComplexArray(np.ascontiguousarray(est.real),
                        np.ascontiguousarray(est.imag))
