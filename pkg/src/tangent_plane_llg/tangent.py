"""Nodal tangent frames for unit-length P1 fields.

Each node carries a 3x2 matrix with orthonormal columns spanning the plane
orthogonal to the local magnetization; stacking them block-diagonally gives
the 3N x 2N change of basis between tangent coefficients and full vectors.
The default construction is a Householder reflection mapping e3 to -m; a
global signed-axis involution T relabels the coordinate axes first, and can
be picked adaptively to keep 1 + (T m)_3 away from zero at every node.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

_E = np.eye(3)

# The six admissible axis involutions, keyed as in the CLI (--tn).
FIXED_INVOLUTIONS = {
    "t1+": np.column_stack([-_E[:, 2], _E[:, 1], -_E[:, 0]]),
    "t1-": np.column_stack([_E[:, 2], _E[:, 1], _E[:, 0]]),
    "t2+": np.column_stack([_E[:, 0], -_E[:, 2], -_E[:, 1]]),
    "t2-": np.column_stack([_E[:, 0], _E[:, 2], _E[:, 1]]),
    "t3+": np.column_stack([_E[:, 0], _E[:, 1], -_E[:, 2]]),
    "t3-": np.eye(3),
}
_ADAPTIVE_ORDER = ["t1+", "t1-", "t2+", "t2-", "t3+", "t3-"]

FRAME_STRATEGIES = ("householder", "signflip", "rotation")

# Below this distance from -e3 the reflection vector w degenerates; use the
# exact -e3 branch instead.
_POLE_GUARD = 1e-8


class FrameError(ValueError):
    pass


def _check_unit(m, tol=1e-12):
    nrm = float(np.linalg.norm(m))
    if abs(nrm - 1.0) > tol:
        raise FrameError(f"frame input must be a unit vector, |m| = {nrm}")


def householder_frame(m):
    """3x2 frame from the reflection I - 2 w w^T with w = (m + e3)/|m + e3|.

    The reflection maps e3 to -m, so its first two columns are orthonormal
    and span the plane orthogonal to m.  At m = -e3 the limit branch
    [e1, e2, -e3] applies.
    """
    m = np.asarray(m, dtype=np.float64)
    _check_unit(m)
    w = m + _E[:, 2]
    wn = np.linalg.norm(w)
    if wn < _POLE_GUARD:
        return np.column_stack([_E[:, 0], _E[:, 1]])
    w = w / wn
    return np.eye(3)[:, :2] - 2.0 * np.outer(w, w[:2])


def _signflip_frame(m):
    sigma = 1.0 if m[2] >= 0 else -1.0
    w = m + sigma * _E[:, 2]
    w = w / np.linalg.norm(w)
    return np.eye(3)[:, :2] - 2.0 * np.outer(w, w[:2])


def _rotation_frame(m):
    # Rotation about e3 x m carrying e3 onto m; first two columns span m-perp.
    axis = np.cross(_E[:, 2], m)
    s = np.linalg.norm(axis)
    if s < _POLE_GUARD:
        # axis degenerates at m = +-e3: fall back to the reflection branch
        return householder_frame(m)
    axis = axis / s
    c = m[2]
    K = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    rot = c * np.eye(3) + s * K + (1 - c) * np.outer(axis, axis)
    return rot[:, :2]


def alt_frame(m, strategy):
    """Alternative frame constructions (sign-flip reflection or rotation)."""
    m = np.asarray(m, dtype=np.float64)
    _check_unit(m)
    if strategy == "signflip":
        return _signflip_frame(m)
    if strategy == "rotation":
        return _rotation_frame(m)
    raise FrameError(f"unknown frame strategy {strategy!r}")


def frame_columns(m, strategy="householder"):
    if strategy == "householder":
        return householder_frame(m)
    return alt_frame(m, strategy)


@dataclass(frozen=True)
class FrameSelection:
    """Outcome of the adaptive axis-involution choice."""

    d_plus: np.ndarray   # (3,) values 1 - max_z m_l(z)
    d_minus: np.ndarray  # (3,) values 1 + min_z m_l(z)
    chosen_key: str
    chosen_T: np.ndarray
    gamma: float

    def all_d(self):
        """The six candidates in scan order (1+, 1-, 2+, 2-, 3+, 3-)."""
        return np.array([self.d_plus[0], self.d_minus[0], self.d_plus[1],
                         self.d_minus[1], self.d_plus[2], self.d_minus[2]])


def select_tn_adaptive(m):
    """Pick the axis involution maximizing the nodal bound on 1 + (T m)_3.

    Ties are broken by the fixed scan order t1+, t1-, t2+, t2-, t3+, t3-.
    gamma = 0 is a valid outcome (all six signed axes present in the field).
    """
    m = np.asarray(m, dtype=np.float64)
    d_plus = 1.0 - m.max(axis=0)
    d_minus = 1.0 + m.min(axis=0)
    order = [d_plus[0], d_minus[0], d_plus[1], d_minus[1], d_plus[2], d_minus[2]]
    best = int(np.argmax(order))
    key = _ADAPTIVE_ORDER[best]
    return FrameSelection(
        d_plus=d_plus,
        d_minus=d_minus,
        chosen_key=key,
        chosen_T=FIXED_INVOLUTIONS[key],
        gamma=float(order[best]),
    )


def frame_gamma(m, T):
    """min over nodes of 1 + m(z) . (T e3)."""
    axis = np.asarray(T)[:, 2]
    return float(1.0 + (np.asarray(m) @ axis).min())


class TangentFrame:
    """Per-node orthonormal tangent bases under a global axis involution."""

    def __init__(self, T, blocks, strategy):
        self.T = np.asarray(T, dtype=np.float64)
        self.blocks = blocks  # (N, 3, 2)
        self.strategy = strategy
        self._sparse = None
        blocks.setflags(write=False)

    @property
    def n_nodes(self):
        return self.blocks.shape[0]

    def as_sparse(self):
        """Block-diagonal 3N x 2N CSR matrix of the frame."""
        if self._sparse is None:
            n = self.n_nodes
            rows = (3 * np.arange(n)[:, None, None] + np.arange(3)[None, :, None])
            cols = (2 * np.arange(n)[:, None, None] + np.arange(2)[None, None, :])
            rows = np.broadcast_to(rows, (n, 3, 2)).ravel()
            cols = np.broadcast_to(cols, (n, 3, 2)).ravel()
            self._sparse = sp.coo_array(
                (self.blocks.ravel(), (rows, cols)), shape=(3 * n, 2 * n)
            ).tocsr()
        return self._sparse


def build_frame(m, T=None, strategy="householder"):
    """Build the nodal frame field: block i = T frame(T m(z_i)).

    T must be a symmetric involution (defaults to the identity).
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[1] != 3:
        raise FrameError(f"magnetization must be (N, 3), got {m.shape}")
    if T is None:
        T = np.eye(3)
    T = np.asarray(T, dtype=np.float64)
    if np.abs(T - T.T).max() > 1e-14 or np.abs(T @ T - np.eye(3)).max() > 1e-14:
        raise FrameError("T must be a symmetric involution (T = T^T, T T = I)")
    if strategy not in FRAME_STRATEGIES:
        raise FrameError(f"unknown frame strategy {strategy!r}")

    n = len(m)
    blocks = np.empty((n, 3, 2))
    for i in range(n):
        try:
            blocks[i] = T @ frame_columns(T @ m[i], strategy)
        except FrameError as exc:
            raise FrameError(f"node {i}: {exc}") from exc
    return TangentFrame(T=T, blocks=blocks, strategy=strategy)


def apply_q(frame, x):
    """Lift tangent coefficients (2N,) to a stacked vector field (3N,)."""
    n = frame.n_nodes
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (2 * n,):
        raise FrameError(f"expected ({2 * n},) vector, got {x.shape}")
    return np.einsum("npq,nq->np", frame.blocks, x.reshape(n, 2)).ravel()


def apply_qt(frame, y):
    """Project a stacked vector field (3N,) onto tangent coefficients (2N,)."""
    n = frame.n_nodes
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (3 * n,):
        raise FrameError(f"expected ({3 * n},) vector, got {y.shape}")
    return np.einsum("npq,np->nq", frame.blocks, y.reshape(n, 3)).ravel()
