"""Shared test utilities: independent oracles and fixture factories."""

import numpy as np


def grid_image(shape=(16, 16, 3), seed=0):
    """Random image already on the 1/255 grid, like anything from a PNG."""
    rng = np.random.default_rng(seed)
    return np.round(rng.random(shape) * 255) / 255


def ramp_checker(h=16, w=16):
    """The deterministic probe image used for golden-embedding fixtures."""
    yy, xx = np.mgrid[0:h, 0:w]
    px = np.stack(
        [
            (yy * 255 // (h - 1)),
            (xx * 255 // (w - 1)),
            ((yy + xx) % 2) * 255,
        ],
        axis=-1,
    ).astype(np.uint8)
    return px / 255.0


def finite_difference(f, x, coord, h=1e-5):
    xp = x.copy()
    xm = x.copy()
    xp.flat[coord] += h
    xm.flat[coord] -= h
    return (f(xp) - f(xm)) / (2.0 * h)


def max_rel_grad_error(value_and_grad, x, n_coords=100, h=1e-5, seed=0):
    """Worst relative error between the analytic gradient and central
    finite differences over randomly sampled coordinates."""
    _, grad = value_and_grad(x)
    grad = np.asarray(grad)
    rng = np.random.default_rng(seed)
    coords = rng.choice(x.size, size=min(n_coords, x.size), replace=False)

    def f(z):
        return value_and_grad(z)[0]

    worst = 0.0
    for c in coords:
        fd = finite_difference(f, x, int(c), h)
        g = grad.flat[int(c)]
        worst = max(worst, abs(g - fd) / max(abs(fd), abs(g), 1e-6))
    return worst
