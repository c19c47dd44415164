"""Feature-level and sample-level attention.

Intra (per particle): score each feature column s_j with
b_j = v_a^T tanh(W_a s_j + U_a ctx), softmax the scores into weights p, and
return the convex feature mix c = sum_j p_j s_j.  W_a, U_a, v_a are shared
across particles; ctx is the particle's previous-iteration context vector.

Inter (across particles): Q holds position similarities
q_ij = exp(-|x_i - x_j|^2 / (2 l)) normalized per column; M is the column
softmax of context dot products c_i . c_j.  The mixed output is
e_j = gamma * sum_r m_rj q_rj c_r + c_j, with gamma fixed at 1 by default.
"""

from __future__ import annotations

import numpy as np

from . import tape as td
from .errors import ShapeError


def intra_attend(features: list[td.Tensor], context: td.Tensor,
                 w_a: td.Tensor, u_a: td.Tensor, v_a: td.Tensor) -> tuple[td.Tensor, td.Tensor]:
    """Feature mix c and attention weights p for one particle."""
    if not features:
        raise ShapeError("intra_attend: no feature columns")
    n = features[0].shape[0]
    if w_a.shape != (n, n) or u_a.shape != (n, n) or v_a.shape != (n, 1):
        raise ShapeError(
            f"intra_attend: parameter shapes {w_a.shape}, {u_a.shape}, {v_a.shape} do not fit n={n}")
    ctx_part = td.matmul(u_a, context)
    scores = []
    for s in features:
        h = td.tanh(td.matmul(w_a, s) + ctx_part)
        scores.append(td.matmul(td.transpose(v_a), h))
    p = td.softmax(td.vstack(scores), axis=0)
    c = None
    for j, s in enumerate(features):
        term = td.slice_rows(p, j, j + 1) * s
        c = term if c is None else c + term
    return c, p


def inter_attend(contexts: list[td.Tensor], positions: list[td.Tensor],
                 gamma: float, length_scale: float) -> tuple[list[td.Tensor], td.Tensor, td.Tensor]:
    """Population-mixed vectors e_j plus the Q and M matrices."""
    k = len(contexts)
    if k == 0:
        raise ShapeError("inter_attend: empty particle set")
    if len(positions) != k:
        raise ShapeError(f"inter_attend: {k} contexts but {len(positions)} positions")
    xmat = td.vstack([td.transpose(x) for x in positions])           # (k, n)
    qraw = td.exp(td.pairwise_sqdist(xmat) * (-0.5 / length_scale))  # diagonal is 1
    colsum = td.matmul(td.Tensor(np.ones((k, 1))), td.sum_axis(qraw, axis=0))
    q = qraw / colsum
    cmat = td.hstack(contexts)                                       # (n, k)
    m = td.softmax(td.matmul(td.transpose(cmat), cmat), axis=0)
    mixed = td.matmul(cmat, td.mul(m, q))
    e_all = gamma * mixed + cmat
    es = [td.slice_cols(e_all, j, j + 1) for j in range(k)]
    return es, q, m


def trace_share(q: np.ndarray, m: np.ndarray, gamma: float) -> float:
    """Diagonal share of gamma * (Q o M) + I; the self-impact measure."""
    g = gamma * (np.asarray(q) * np.asarray(m)) + np.eye(q.shape[0])
    return float(np.trace(g) / g.sum())
