"""Translation networks: U-Net generator and patch-wise discriminator.

Parameter initialization is driven by a numpy generator rather than torch's
global RNG so that a given seed reproduces bit-identical parameters on any
machine.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn

from .errors import ValidationError


def _conv_block(in_ch: int, out_ch: int, norm: bool = True) -> nn.Sequential:
    layers: list[nn.Module] = [nn.Conv2d(in_ch, out_ch, 3, padding=1)]
    if norm:
        layers.append(nn.InstanceNorm2d(out_ch))
    layers.append(nn.ReLU(inplace=True))
    layers.append(nn.Conv2d(out_ch, out_ch, 3, padding=1))
    if norm:
        layers.append(nn.InstanceNorm2d(out_ch))
    layers.append(nn.ReLU(inplace=True))
    return nn.Sequential(*layers)


class UNetGenerator(nn.Module):
    """Encoder-decoder with skip connections and a tanh output in [-1, 1].

    Output spatial size equals input size; the input side must be divisible
    by ``2**depth``.  Channel widths double per level up to ``max_channels``.

    The two blocks touching the image (first encoder, last decoder) skip
    instance normalization: normalized maps have zero spatial mean, so a
    normalized final block would pin every output channel's mean to a single
    learned bias and absolute color could only leak through nonlinearities.
    Leaving the rim un-normalized keeps per-image brightness and tint cheap
    to reconstruct.
    """

    def __init__(
        self,
        in_channels: int = 3,
        out_channels: int = 3,
        base_channels: int = 64,
        depth: int = 6,
        max_channels: int = 512,
    ):
        super().__init__()
        if depth < 1:
            raise ValidationError(f"depth must be >= 1, got {depth}")
        self.depth = depth
        chans = [min(base_channels * 2**i, max_channels) for i in range(depth + 1)]
        self.downs = nn.ModuleList(
            [
                _conv_block(in_channels if i == 0 else chans[i - 1], chans[i], norm=i > 0)
                for i in range(depth)
            ]
        )
        self.pool = nn.MaxPool2d(2)
        self.bottleneck = _conv_block(chans[depth - 1], chans[depth])
        self.ups = nn.ModuleList(
            [nn.ConvTranspose2d(chans[i + 1], chans[i], 2, stride=2) for i in reversed(range(depth))]
        )
        self.decoders = nn.ModuleList(
            [_conv_block(chans[i] * 2, chans[i], norm=i > 0) for i in reversed(range(depth))]
        )
        self.head = nn.Conv2d(chans[0], out_channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h, w = x.shape[-2], x.shape[-1]
        div = 2**self.depth
        if h % div or w % div:
            raise ValidationError(f"input size {h}x{w} not divisible by 2**depth = {div}")
        skips = []
        for down in self.downs:
            x = down(x)
            skips.append(x)
            x = self.pool(x)
        x = self.bottleneck(x)
        for up, dec, skip in zip(self.ups, self.decoders, reversed(skips)):
            x = dec(torch.cat([up(x), skip], dim=1))
        return torch.tanh(self.head(x))


class PatchDiscriminator(nn.Module):
    """Convolutional critic emitting a grid of real/fake logits.

    Each grid score is driven by a bounded window of the input (the receptive
    field of the stacked strided convolutions); instance normalization adds a
    weak global coupling through its per-map statistics, but no score ever
    sees distant content directly.  Apply a sigmoid to obtain the probability
    grid.
    """

    def __init__(self, in_channels: int = 3, base_channels: int = 64, n_layers: int = 3):
        super().__init__()
        if n_layers < 1:
            raise ValidationError(f"n_layers must be >= 1, got {n_layers}")
        layers: list[nn.Module] = [
            nn.Conv2d(in_channels, base_channels, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
        ]
        ch = base_channels
        for _ in range(1, n_layers):
            layers += [
                nn.Conv2d(ch, min(ch * 2, 512), 4, stride=2, padding=1),
                nn.InstanceNorm2d(min(ch * 2, 512)),
                nn.LeakyReLU(0.2, inplace=True),
            ]
            ch = min(ch * 2, 512)
        layers += [
            nn.Conv2d(ch, min(ch * 2, 512), 4, stride=1, padding=1),
            nn.InstanceNorm2d(min(ch * 2, 512)),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(min(ch * 2, 512), 1, 4, stride=1, padding=1),
        ]
        self.net = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)

    def probability_grid(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.net(x))


def init_gan_weights(module: nn.Module, seed: int) -> nn.Module:
    """Normal(0, 0.02) conv weights, zero biases, drawn from a seeded numpy RNG."""
    rng = np.random.default_rng(seed)
    fill_normal_(module, rng, std=0.02)
    return module


def fill_normal_(module: nn.Module, rng: np.random.Generator, std: float = 0.02) -> None:
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
            w = rng.normal(0.0, std, size=tuple(m.weight.shape)).astype(np.float32)
            with torch.no_grad():
                m.weight.copy_(torch.from_numpy(w))
                if m.bias is not None:
                    m.bias.zero_()


def fill_fanin_uniform_(module: nn.Module, rng: np.random.Generator) -> None:
    """U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
            if isinstance(m, nn.Linear):
                fan_in = m.weight.shape[1]
            elif isinstance(m, nn.ConvTranspose2d):
                fan_in = m.weight.shape[0] * m.kernel_size[0] * m.kernel_size[1]
            else:
                fan_in = m.weight.shape[1] * m.kernel_size[0] * m.kernel_size[1]
            bound = 1.0 / float(np.sqrt(fan_in))
            w = rng.uniform(-bound, bound, size=tuple(m.weight.shape)).astype(np.float32)
            with torch.no_grad():
                m.weight.copy_(torch.from_numpy(w))
                if m.bias is not None:
                    b = rng.uniform(-bound, bound, size=tuple(m.bias.shape)).astype(np.float32)
                    m.bias.copy_(torch.from_numpy(b))


def state_dict_arrays(module: nn.Module) -> dict[str, np.ndarray]:
    """Module parameters and buffers as plain numpy arrays (checkpoint payload)."""
    return {k: v.detach().cpu().numpy().copy() for k, v in module.state_dict().items()}


def load_state_arrays(module: nn.Module, arrays: dict[str, np.ndarray]) -> None:
    module.load_state_dict({k: torch.from_numpy(np.asarray(v).copy()) for k, v in arrays.items()})
