"""Iterative curve projection for low-light enhancement.

A single projection step brightens (or darkens) every pixel along the
quadratic curve ``x <- x + I * x * (1 - x)``, where the illumination map I
lives in [-1, 1].  Because ``x * (1 - x)`` vanishes at both interval ends,
the step maps [0, 1] onto itself and keeps 0 and 1 as fixed points.  The
robust variant additionally subtracts a noise map N from the pixel value
before every projection step, so denoising and illumination retouching
happen jointly.  Both maps stay constant across all iterations; the network
estimates one map pair per image.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch


@dataclass(frozen=True)
class ProjectionConfig:
    """Iteration count and clamping behaviour of the robust projection.

    ``clamp_each_step`` keeps intermediate values inside [0, 1] after every
    noise subtraction; the projection itself never leaves the interval, but
    subtraction can, and range preservation requires clamped inputs.
    """

    iterations: int = 8
    clamp_each_step: bool = True

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")


@dataclass
class CurveMaps:
    """Paired illumination and noise maps, both in [-1, 1].

    Both maps share the spatial layout of the image they enhance.
    """

    illumination: torch.Tensor
    noise: torch.Tensor

    def __post_init__(self):
        if self.illumination.shape != self.noise.shape:
            raise ValueError(
                "illumination and noise maps must share a shape, got "
                f"{tuple(self.illumination.shape)} vs {tuple(self.noise.shape)}"
            )


def project_step(image: torch.Tensor, illumination: torch.Tensor) -> torch.Tensor:
    """One curve projection step: ``x + illumination * x * (1 - x)``.

    For ``image`` in [0, 1] and ``illumination`` in [-1, 1] the output is
    again in [0, 1]; pixels at exactly 0 or 1 are unchanged.
    """
    if image.shape != illumination.shape:
        raise ValueError(
            f"image shape {tuple(image.shape)} does not match "
            f"illumination map shape {tuple(illumination.shape)}"
        )
    return image + illumination * image * (1.0 - image)


def robust_enhance(
    image: torch.Tensor,
    maps: CurveMaps,
    config: ProjectionConfig | None = None,
) -> torch.Tensor:
    """Run the noise-aware projection for ``config.iterations`` steps.

    Every iteration subtracts the same noise map, clamps the result back to
    [0, 1] (unless ``clamp_each_step`` is off), and applies
    :func:`project_step` with the same illumination map.  With a zero noise
    map this is exactly the iterated plain projection.
    """
    if config is None:
        config = ProjectionConfig()
    if image.shape != maps.illumination.shape:
        raise ValueError(
            f"image shape {tuple(image.shape)} does not match "
            f"curve map shape {tuple(maps.illumination.shape)}"
        )
    x = image
    for _ in range(config.iterations):
        x = x - maps.noise
        if config.clamp_each_step:
            x = torch.clamp(x, 0.0, 1.0)
        x = project_step(x, maps.illumination)
    return x
