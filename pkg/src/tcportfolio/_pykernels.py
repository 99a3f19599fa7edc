"""Pure numpy versions of the scenario-loop kernels.

Every function here has a compiled twin in ``_ckernels.pyx`` with the same
signature and semantics. ``orientation`` selects how the next-period state
``z = s + P'K`` is split into the "upper" branch (governed by the
surplus-side coefficients) and the "lower" branch:

* ``orientation = +1``: upper is ``z >= 0``, lower is ``z < 0``
* ``orientation = -1``: upper is ``z <= 0``, lower is ``z > 0``
"""

import numpy as np


def branch_sums(P, K, s, orientation):
    """Return ``(E[z 1_up], E[z 1_low], E[z^2 1_up], E[z^2 1_low])``."""
    K = np.asarray(K, dtype=float)
    if K.shape[0] != P.shape[1]:
        raise ValueError(f"K has length {K.shape[0]}, scenarios have {P.shape[1]} assets")
    z = s + P @ K
    up = (z >= 0.0) if orientation > 0 else (z <= 0.0)
    zz = z * z
    N = z.shape[0]
    return (
        float(np.sum(z, where=up) / N),
        float(np.sum(z, where=~up) / N),
        float(np.sum(zz, where=up) / N),
        float(np.sum(zz, where=~up) / N),
    )


def upper_fraction(P, K, s, orientation):
    z = s + P @ np.asarray(K, dtype=float)
    up = (z >= 0.0) if orientation > 0 else (z <= 0.0)
    return float(np.count_nonzero(up) / z.shape[0])


def wealth_paths(P, s, ref, k_up, k_down, x0):
    """Forward wealth under ``u_t = K(X_t - ref_t)`` with K switching on the sign."""
    T, N, _ = P.shape
    X = np.empty((N, T + 1))
    X[:, 0] = x0
    x = np.full(N, float(x0))
    for t in range(T):
        y = x - ref[t]
        gain = np.where(y >= 0.0, P[t] @ k_up[t], P[t] @ k_down[t])
        x = s[t] * x + gain * y
        X[:, t + 1] = x
    return X
