import numpy as np

from utils.image_ops import add_noise, gaussian_blur


def corrupt(patch: np.ndarray, cfg, rng: np.random.Generator) -> np.ndarray:
    """Noise (with probability ``cfg.noise_probability``), clamp, then blur.

    The gate is always the first draw from ``rng``; the noise field follows it.
    """
    noisy = patch
    apply_noise = rng.random() < cfg.noise_probability
    if apply_noise and cfg.noise.is_active:
        noisy = add_noise(patch, cfg.noise, rng)
    return gaussian_blur(noisy, cfg.blur_radius)
