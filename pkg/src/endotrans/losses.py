"""Training objectives for the unpaired translation model.

Two objectives are used.  The cycle-consistency loss is the sum of the two
round-trip reconstruction errors, each a batch mean of the per-pixel mean
absolute difference:

    L_c = E_x[ mean|G(F(x)) - x| ] + E_y[ mean|F(G(y)) - y| ]

The adversarial loss is the four-term log-likelihood game

    L_d = E_x[ log D_X(x) + log(1 - D_Y(F(x))) ]
        + E_y[ log(1 - D_X(G(y))) + log D_Y(y) ]

where each discriminator output grid is averaged to a single probability per
image before the logs are taken, and probabilities are clamped to
[1e-7, 1 - 1e-7].  Generators *minimize* L_d while discriminators *maximize*
it; both views share the same terms and are exposed below as descent
objectives.  A least-squares variant (the convention of the widespread
reference implementation, selectable via config) is also provided; it scores
the raw discriminator grids against 0/1 targets instead.
"""

from __future__ import annotations

from typing import Callable

import torch

from .errors import InternalError, ValidationError

CLAMP_EPS = 1e-7

DiscriminatorFn = Callable[[torch.Tensor], torch.Tensor]
GeneratorFn = Callable[[torch.Tensor], torch.Tensor]


def _check_batch(name: str, batch: torch.Tensor) -> None:
    if batch.ndim < 1 or batch.shape[0] == 0:
        raise ValidationError(f"{name} batch must be nonempty")


def _check_same_shape(what: str, out: torch.Tensor, ref: torch.Tensor) -> None:
    if out.shape != ref.shape:
        raise ValidationError(f"{what}: generator output shape {tuple(out.shape)} != input shape {tuple(ref.shape)}")


def per_image_probability(d_out: torch.Tensor) -> torch.Tensor:
    """Average a probability grid over everything but the batch dimension.

    Accepts per-image scalars ``(N,)`` or grids ``(N, ...)``; returns ``(N,)``
    clamped to [CLAMP_EPS, 1 - CLAMP_EPS].
    """
    p = d_out if d_out.ndim == 1 else d_out.reshape(d_out.shape[0], -1).mean(dim=1)
    p = torch.clamp(p, CLAMP_EPS, 1.0 - CLAMP_EPS)
    if not bool(torch.isfinite(p).all()) or bool((p <= 0).any()) or bool((p >= 1).any()):
        raise InternalError("discriminator probabilities are outside (0,1) after clamping")
    return p


def cycle_terms(batch_x: torch.Tensor, recon_x: torch.Tensor, batch_y: torch.Tensor, recon_y: torch.Tensor) -> torch.Tensor:
    """Cycle loss from precomputed round-trip reconstructions."""
    _check_same_shape("x round trip", recon_x, batch_x)
    _check_same_shape("y round trip", recon_y, batch_y)
    nx = batch_x.shape[0]
    ny = batch_y.shape[0]
    term_x = (recon_x - batch_x).abs().reshape(nx, -1).mean(dim=1).mean()
    term_y = (recon_y - batch_y).abs().reshape(ny, -1).mean(dim=1).mean()
    return term_x + term_y


def cycle_loss(F: GeneratorFn, G: GeneratorFn, batch_x: torch.Tensor, batch_y: torch.Tensor) -> torch.Tensor:
    """Round-trip L1 loss for generators F: X->Y and G: Y->X."""
    _check_batch("x", batch_x)
    _check_batch("y", batch_y)
    fake_y = F(batch_x)
    _check_same_shape("F(x)", fake_y, batch_x)
    fake_x = G(batch_y)
    _check_same_shape("G(y)", fake_x, batch_y)
    return cycle_terms(batch_x, G(fake_y), batch_y, F(fake_x))


def adversarial_terms(
    p_real_x: torch.Tensor,
    p_fake_y: torch.Tensor,
    p_fake_x: torch.Tensor,
    p_real_y: torch.Tensor,
) -> torch.Tensor:
    """Four-term log expression from per-image probabilities (each ``(N,)``)."""
    term_x = (torch.log(p_real_x) + torch.log1p(-p_fake_y)).mean()
    term_y = (torch.log1p(-p_fake_x) + torch.log(p_real_y)).mean()
    return term_x + term_y


def adversarial_loss(
    F: GeneratorFn,
    G: GeneratorFn,
    D_X: DiscriminatorFn,
    D_Y: DiscriminatorFn,
    batch_x: torch.Tensor,
    batch_y: torch.Tensor,
) -> torch.Tensor:
    """The adversarial loss value.

    ``D_X`` / ``D_Y`` must return probabilities (a post-sigmoid grid or
    per-image scalars); generators minimize the returned value, discriminators
    maximize it.
    """
    _check_batch("x", batch_x)
    _check_batch("y", batch_y)
    fake_y = F(batch_x)
    _check_same_shape("F(x)", fake_y, batch_x)
    fake_x = G(batch_y)
    _check_same_shape("G(y)", fake_x, batch_y)
    return adversarial_terms(
        per_image_probability(D_X(batch_x)),
        per_image_probability(D_Y(fake_y)),
        per_image_probability(D_X(fake_x)),
        per_image_probability(D_Y(batch_y)),
    )


def generator_adversarial_objective(p_fake_y: torch.Tensor, p_fake_x: torch.Tensor) -> torch.Tensor:
    """Generator view of the log loss, as a descent objective.

    The real-sample terms of the full expression are constant with respect to
    the generators, so descending this equals descending the full loss.
    """
    return torch.log1p(-p_fake_y).mean() + torch.log1p(-p_fake_x).mean()


def discriminator_adversarial_objective(
    p_real_x: torch.Tensor,
    p_fake_y: torch.Tensor,
    p_fake_x: torch.Tensor,
    p_real_y: torch.Tensor,
) -> torch.Tensor:
    """Discriminator view: ascent on the loss, implemented as descent on its negation."""
    return -adversarial_terms(p_real_x, p_fake_y, p_fake_x, p_real_y)


def lsgan_generator_objective(score_fake_y: torch.Tensor, score_fake_x: torch.Tensor) -> torch.Tensor:
    """Least-squares variant, generator side: push fake scores toward 1."""
    return ((score_fake_y - 1.0) ** 2).mean() + ((score_fake_x - 1.0) ** 2).mean()


def lsgan_discriminator_objective(
    score_real_x: torch.Tensor,
    score_fake_y: torch.Tensor,
    score_fake_x: torch.Tensor,
    score_real_y: torch.Tensor,
) -> torch.Tensor:
    """Least-squares variant, discriminator side: reals toward 1, fakes toward 0."""
    real = ((score_real_x - 1.0) ** 2).mean() + ((score_real_y - 1.0) ** 2).mean()
    fake = (score_fake_x**2).mean() + (score_fake_y**2).mean()
    return 0.5 * (real + fake)
