"""Pure-NumPy path-recursion kernels.

These mirror the compiled kernels in `_kernels.pyx` operation for operation
(same multiply/add grouping, same atom lookup) so both backends produce
bit-identical samples from the same uniforms.  Keep the two files in sync.
"""

from __future__ import annotations

import numpy as np

RULE_AFFINE = 0    # action = (kappa - x) * direction
RULE_CONSTANT = 1  # action = direction


def sample_indices(cumprobs: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Inverse-CDF atom lookup: first index j with u < cumprobs[j]."""
    idx = np.searchsorted(cumprobs, uniforms, side="right")
    return np.minimum(idx, len(cumprobs) - 1)


def mv_paths(x0, growths, kinds, kappas, directions, atoms, cumprobs, uniforms,
             out) -> np.ndarray:
    """Wealth recursion x' = growth * (x + a . r) along all paths.

    x0 (P,); growths/kinds/kappas (N,); directions (N, d); atoms[n] (m_n, d)
    with cumulative weights cumprobs[n] (m_n,); uniforms (N, P).  Fills and
    returns out (N+1, P) with every intermediate stage.
    """
    n_stages = len(growths)
    d = directions.shape[1]
    x = x0.copy()
    out[0] = x
    for n in range(n_stages):
        j = sample_indices(cumprobs[n], uniforms[n])
        r = atoms[n][j]
        if kinds[n] == RULE_AFFINE:
            coef = kappas[n] - x
        else:
            coef = np.ones_like(x)
        pay = np.zeros_like(x)
        for k in range(d):
            pay += (coef * directions[n, k]) * r[:, k]
        x = growths[n] * (x + pay)
        out[n + 1] = x
    return out


def lq_paths(x0, b, d, sigma, slopes, intercepts, atoms, cumprobs, uniforms,
             states, actions) -> tuple[np.ndarray, np.ndarray]:
    """Recursion x' = b*x + d*a + sigma*r with linear rules a = m*x + t.

    Fills states (N+1, P) and actions (N, P); returns both.
    """
    n_stages = len(slopes)
    x = x0.copy()
    states[0] = x
    for n in range(n_stages):
        j = sample_indices(cumprobs[n], uniforms[n])
        r = atoms[n][j]
        a = slopes[n] * x + intercepts[n]
        actions[n] = a
        x = (b * x + d * a) + sigma * r
        states[n + 1] = x
    return states, actions
