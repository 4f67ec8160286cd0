"""
Image augmentation applied to replayed observations: a random shift
(replicate padding, random crop) followed by random intensity scaling.
"""

import numpy as np

SHIFT_PAD = 4
INTENSITY_SCALE = 0.05
INTENSITY_CLIP = 2.0


def random_shift(observations: np.ndarray, rng: np.random.Generator, pad: int = SHIFT_PAD) -> np.ndarray:
    """
    Replicate-pad each image by `pad` pixels and crop back at a random offset.

    An offset of (pad, pad) returns the input unchanged.
    """
    observations = np.asarray(observations)
    if observations.ndim != 4:
        raise ValueError(f"expected an (N, C, H, W) batch, got shape {observations.shape}")
    height, width = observations.shape[2], observations.shape[3]
    if height < pad or width < pad:
        raise ValueError(f"spatial size {height}x{width} is smaller than shift padding {pad}")
    offsets = rng.integers(0, 2 * pad + 1, size=(observations.shape[0], 2))
    if pad == 0:
        return observations.copy()
    padded = np.pad(observations, ((0, 0), (0, 0), (pad, pad), (pad, pad)), mode='edge')
    shifted = np.empty_like(observations)
    for i, (dy, dx) in enumerate(offsets):
        shifted[i] = padded[i, :, dy:dy + height, dx:dx + width]
    return shifted


def random_intensity(observations: np.ndarray, rng: np.random.Generator,
                     scale: float = INTENSITY_SCALE) -> np.ndarray:
    """x * (1 + scale * g) per sample, g standard normal clipped to [-2, 2]."""
    observations = np.asarray(observations)
    noise = np.clip(rng.standard_normal(observations.shape[0]), -INTENSITY_CLIP, INTENSITY_CLIP)
    factor = (1.0 + scale * noise).astype(observations.dtype)
    return observations * factor.reshape((-1,) + (1,) * (observations.ndim - 1))


def augment(observations: np.ndarray, rng: np.random.Generator, pad: int = SHIFT_PAD,
            intensity_scale: float = INTENSITY_SCALE) -> np.ndarray:
    """
    Shift then intensity-scale a batch of images.

    Args:
        observations: Batch of shape (N, C, H, W)
        rng: Generator owned by the caller; equal seeds give identical output
        pad: Replicate padding on each side for the shift
        intensity_scale: Standard deviation of the multiplicative jitter

    Returns:
        Augmented batch with the input's shape and dtype
    """
    return random_intensity(random_shift(observations, rng, pad), rng, intensity_scale)
