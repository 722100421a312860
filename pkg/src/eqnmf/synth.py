"""Synthetic simplex-structured data with the noise models matched to beta.

Gaussian noise pairs with beta = 2, Poisson with beta = 1 and unit-mean
multiplicative gamma with beta = 0.  A level of zero always returns the
exact product.
"""

from __future__ import annotations

import numpy as np

NOISE_KINDS = ("gaussian", "poisson", "gamma-multiplicative")


def synth_simplex(
    F: int,
    K: int,
    N: int,
    noise: str = "poisson",
    level: float = 1.0,
    seed: int = 0,
    pure_cols: int = 0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw (V, W_true, H_true) with the columns of H_true on the unit simplex.

    W_true is uniform-positive and H_true has Dirichlet(1, ..., 1) columns.
    ``pure_cols`` plants that many one-hot columns per component at the front
    of H_true, so scaled copies of every W_true column appear among the data
    columns (separable data).  Noise kinds:

    - gaussian: additive, standard deviation level * mean(W @ H), clipped at 0
    - poisson: V = level * Poisson(W @ H / level); variance equals the mean
      at level 1
    - gamma-multiplicative: entries scaled by unit-mean gamma variates with
      variance level**2
    """
    if F <= 0 or K <= 0 or N <= 0:
        raise ValueError("dimensions must be positive")
    if level < 0.0:
        raise ValueError("noise level must be nonnegative")
    if noise not in NOISE_KINDS:
        raise ValueError(f"unknown noise kind {noise!r}; pick one of {NOISE_KINDS}")
    if pure_cols * K > N:
        raise ValueError("pure_cols * K may not exceed N")

    rng = np.random.default_rng(seed)
    W = 1.0 - rng.random((F, K))
    H = rng.dirichlet(np.ones(K), size=N).T
    for k in range(K):
        for r in range(pure_cols):
            H[:, k * pure_cols + r] = 0.0
            H[k, k * pure_cols + r] = 1.0
    Y = W @ H

    if level == 0.0:
        return Y.copy(), W, H
    if noise == "gaussian":
        V = Y + level * float(Y.mean()) * rng.standard_normal(Y.shape)
        V = np.maximum(V, 0.0)
    elif noise == "poisson":
        V = level * rng.poisson(Y / level).astype(float)
    else:
        shape = 1.0 / level**2
        V = Y * rng.gamma(shape, 1.0 / shape, size=Y.shape)
    return V, W, H
