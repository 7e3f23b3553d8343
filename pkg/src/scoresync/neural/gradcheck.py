"""Central finite-difference checks of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..softdtw import (soft_dtw, soft_dtw_divergence, soft_dtw_divergence_grad, soft_dtw_grad)
from .layers import Conv2d, Dense, Layer, MaxPool2d, MaxUnpool2d, ReLU, Sasa
from .losses import (contrastive_loss, contrastive_loss_grad, divergence_batch_loss,
                     mse_padded_value_and_grad, siamese_contrastive)
from .model import ToyModel, build_inflection_model, build_path_model


def relative_error(analytic, numeric) -> float:
    """Max componentwise |a - n| / max(|a|, |n|), with the denominator floored at
    1e-3 of the largest numeric component so negligible entries are judged
    against the tensor's scale."""
    a = np.ravel(np.asarray(analytic, dtype=np.float64))
    n = np.ravel(np.asarray(numeric, dtype=np.float64))
    scale = np.max(np.abs(n)) if n.size else 0.0
    if scale == 0.0 and not np.any(a):
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-3 * max(scale, np.max(np.abs(a))))
    return float(np.max(np.abs(a - n) / denom))


def numeric_grad(f, x, h=1e-4, indices=None):
    """Central differences of scalar f at x, for all (or the given flat) indices."""
    x = np.array(x, dtype=np.float64)
    flat = x.reshape(-1)
    idx = range(flat.size) if indices is None else indices
    out = np.zeros(len(idx))
    for k, i in enumerate(idx):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        out[k] = (fp - fm) / (2 * h)
    return out


@dataclass
class GradReport:
    name: str
    errors: dict = field(default_factory=dict)  # tensor name -> max relative error
    kinked: int = 0                             # entries skipped because x +- h straddles a kink

    @property
    def max_rel_err(self) -> float:
        return max(self.errors.values(), default=0.0)

    def passed(self, tol: float) -> bool:
        return self.max_rel_err < tol


def _signature(layers):
    """ReLU on/off patterns and pooling argmaxes of the last forward pass."""
    sig = []
    for layer in layers:
        if isinstance(layer, ReLU):
            sig.append(layer._on.copy())
        elif isinstance(layer, MaxPool2d):
            sig.append(layer.mask.indices.copy())
    return sig


def _same(a, b):
    return all(np.array_equal(u, v) for u, v in zip(a, b))


def finite_diff_check(target, x, h=1e-4, max_per_tensor=None, seed=0, name=None, check_input=True):
    """Compare backprop gradients of sum(output * R) against central differences.

    ``target`` is a Layer or ToyModel; R is a fixed random projection. With
    ``max_per_tensor`` only that many randomly chosen entries of each
    tensor are differenced. When x - h and x + h fall on different sides of
    a ReLU or pooling kink the quotient is meaningless: the step is shrunk
    tenfold up to twice, after which the entry is skipped and counted.
    """
    rng = np.random.default_rng(seed)
    layers = target.layers if isinstance(target, ToyModel) else [target]
    x = np.asarray(x, dtype=np.float64)

    def run(inp):
        out = inp
        for layer in layers:
            out = layer.forward(out)
        return out

    out = run(x)
    proj = rng.normal(size=out.shape)
    base = _signature(layers)
    dy = proj
    for layer in reversed(layers):
        dy = layer.backward(dy)
    report = GradReport(name or type(target).__name__)

    def pick(size):
        if max_per_tensor is None or size <= max_per_tensor:
            return list(range(size))
        return sorted(rng.choice(size, max_per_tensor, replace=False).tolist())

    def difference(flat, j, inp):
        old = flat[j]
        for step in (h, h / 10, h / 100):
            flat[j] = old + step
            fp = float(np.sum(run(inp) * proj))
            smooth = _same(_signature(layers), base)
            flat[j] = old - step
            fm = float(np.sum(run(inp) * proj))
            smooth = smooth and _same(_signature(layers), base)
            flat[j] = old
            if smooth:
                return (fp - fm) / (2 * step)
        return None

    def compare(key, analytic, flat, idx, inp):
        got, want = [], []
        for j in idx:
            g = difference(flat, j, inp)
            if g is None:
                report.kinked += 1
            else:
                got.append(analytic[j])
                want.append(g)
        report.errors[key] = relative_error(got, want)

    for i, layer in enumerate(layers):
        for pname in sorted(layer.params):
            param = layer.params[pname]
            compare(f"{i}.{pname}", layer.grads[pname].reshape(-1).copy(), param.reshape(-1),
                    pick(param.size), x)
    if check_input:
        xc = x.copy()
        compare("input", dy.reshape(-1), xc.reshape(-1), pick(x.size), xc)
    run(x)
    return report


def _scalar_report(name, analytic, f, x, h=1e-4):
    return GradReport(name, {"input": relative_error(analytic, numeric_grad(f, x, h))})


def standard_suite(seed: int = 0, include_networks: bool = True):
    """The default gradient-check suite: (report, tolerance) pairs."""
    rng = np.random.default_rng(seed)
    out = []
    for lam in (0.05, 0.1, 0.5):
        for n in (3, 5, 8):
            p, t = rng.normal(size=n) * 2, rng.normal(size=n + 1) * 2
            out.append((_scalar_report(f"soft_dtw n={n} lam={lam}", soft_dtw_grad(p, t, lam),
                                       lambda z: soft_dtw(z, t, lam), p), 1e-4))
            out.append((_scalar_report(f"divergence n={n} lam={lam}", soft_dtw_divergence_grad(p, t, lam),
                                       lambda z: soft_dtw_divergence(z, t, lam), p), 1e-4))
    for d in (1, 2, 3):
        layer = Conv2d(2, 3, 3, d, rng)
        out.append((finite_diff_check(layer, rng.normal(size=(2, 2, 9, 9)), name=f"conv2d d={d}", seed=seed), 1e-4))
    out.append((finite_diff_check(Dense(6, 4, rng), rng.normal(size=(3, 6)), name="dense", seed=seed), 1e-4))
    out.append((finite_diff_check(Sasa(8, 1, 4, rng), rng.normal(size=(2, 8, 6, 6)), name="sasa k=1", seed=seed), 1e-4))
    pool = MaxPool2d()
    xp = rng.normal(size=(2, 3, 6, 6))
    out.append((finite_diff_check(pool, xp, name="max_pool2d", seed=seed), 1e-4))
    xr = rng.normal(size=(2, 5))
    xr[np.abs(xr) < 0.05] += 0.2
    out.append((finite_diff_check(ReLU(), xr, name="relu", seed=seed), 1e-4))

    pred, tgt = rng.normal(size=6) * 10, rng.normal(size=6) * 10
    out.append((_scalar_report("mse_padded", mse_padded_value_and_grad(pred, tgt)[1],
                               lambda z: mse_padded_value_and_grad(z, tgt)[0], pred), 1e-4))
    bp, bt = rng.normal(size=(2, 5)) * 3, rng.normal(size=(2, 5)) * 3
    out.append((_scalar_report("divergence_batch", divergence_batch_loss(bp, bt)[1],
                               lambda z: divergence_batch_loss(z, bt)[0], bp), 1e-4))
    for label, dist in ((0, 0.7), (1, 0.4)):
        g = contrastive_loss_grad(dist, label)
        out.append((_scalar_report(f"contrastive Y={label}", np.array([g]),
                                   lambda z: contrastive_loss(float(z[0]), label), np.array([dist])), 1e-4))
    e1, e2 = rng.normal(size=4), rng.normal(size=4)
    _, g1, _ = siamese_contrastive(e1, e2, 1, margin=10.0)
    out.append((_scalar_report("siamese contrastive", g1,
                               lambda z: siamese_contrastive(z, e2, 1, margin=10.0)[0], e1), 1e-4))

    if include_networks:
        x = rng.normal(size=(1, 1, 64, 64))
        inf_model = build_inflection_model(seed=seed)
        out.append((finite_diff_check(inf_model, x, max_per_tensor=12, name="inflection network", seed=seed), 1e-3))
        path_model = build_path_model(seed=seed)
        out.append((finite_diff_check(path_model, x, max_per_tensor=12, name="path network (SASA)", seed=seed), 1e-3))
    return out


__all__ = ["GradReport", "finite_diff_check", "numeric_grad", "relative_error", "standard_suite",
           "Layer", "MaxUnpool2d"]
