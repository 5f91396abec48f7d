"""Finite-difference spot checks of the loss gradients and the SGD update rule.

The heavyweight whole-model checks live in the acceptance suite; these are
small, fast sanity versions of the same idea.
"""

import numpy as np
import pytest
import torch

from endotrans import losses


def _fd_grad(fn, x, eps=1e-6):
    """Central finite differences of a scalar function of a tensor."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = fn(torch.from_numpy(x))
        flat[i] = orig - eps
        lo = fn(torch.from_numpy(x))
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * eps)
    return g


def test_cycle_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, size=(2, 3, 3, 3))
    rx = rng.uniform(-1, 1, size=(2, 3, 3, 3))
    y = torch.from_numpy(rng.uniform(-1, 1, size=(1, 3, 3, 3)))

    def f(recon):
        return float(losses.cycle_terms(torch.from_numpy(x), recon, y, y.clone()))

    t = torch.from_numpy(rx.copy()).requires_grad_(True)
    losses.cycle_terms(torch.from_numpy(x), t, y, y.clone()).backward()
    fd = _fd_grad(f, rx.copy())
    assert np.allclose(t.grad.numpy(), fd, atol=1e-5)


def test_adversarial_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    probs = rng.uniform(0.1, 0.9, size=4)
    half = torch.full((4,), 0.5, dtype=torch.float64)

    def f(p):
        return float(losses.adversarial_terms(p, half, half, half))

    t = torch.from_numpy(probs.copy()).requires_grad_(True)
    losses.adversarial_terms(t, half, half, half).backward()
    fd = _fd_grad(f, probs.copy())
    assert np.allclose(t.grad.numpy(), fd, rtol=1e-5, atol=1e-7)


def test_sgd_momentum_weight_decay_recursion():
    """torch.optim.SGD must follow: g' = g + wd*w ; v = mu*v + g' ; w -= lr*v."""
    rng = np.random.default_rng(2)
    w0 = rng.normal(size=(4,))
    lr, mu, wd = 0.1, 0.9, 0.05
    param = torch.nn.Parameter(torch.from_numpy(w0.copy()))
    opt = torch.optim.SGD([param], lr=lr, momentum=mu, weight_decay=wd)

    w_ref = w0.copy()
    v_ref = np.zeros_like(w0)
    target = torch.from_numpy(rng.normal(size=(4,)))
    for step in range(6):
        opt.zero_grad()
        loss = ((param - target) ** 2).sum()
        loss.backward()
        g = param.grad.numpy().copy()
        opt.step()
        g_eff = g + wd * w_ref
        v_ref = mu * v_ref + g_eff
        w_ref = w_ref - lr * v_ref
        assert np.allclose(param.detach().numpy(), w_ref, rtol=1e-10, atol=1e-12), f"step {step}"
