"""Small parameterized embeddings with hand-written backprop.

Parameter layout (flat, row-major):

* ``linear``:    W (n x d), b (n)
* ``two_layer``: W1 (h x d), b1 (h), W2 (n x h), b2 (n); ReLU on the hidden layer

The ReLU derivative at exactly 0 is taken to be 0.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, DimensionError

KINDS = ("linear", "two_layer")
FORMAT_TAG = "tripperm-model v1"


def n_params(kind: str, in_dim: int, out_dim: int, hidden: Optional[int] = None) -> int:
    if kind == "linear":
        return out_dim * in_dim + out_dim
    if kind == "two_layer":
        if hidden is None:
            raise ConfigError("two_layer model needs a hidden width")
        return hidden * in_dim + hidden + out_dim * hidden + out_dim
    raise ConfigError(f"unknown model kind {kind!r}; expected one of {KINDS}")


@dataclass(frozen=True, eq=False)
class EmbeddingModel:
    kind: str
    in_dim: int
    out_dim: int
    params: np.ndarray
    hidden: Optional[int] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1 or (self.hidden is not None and self.hidden < 1):
            raise ConfigError("model dimensions must be >= 1")
        if self.kind == "linear" and self.hidden is not None:
            raise ConfigError("linear model takes no hidden width")
        params = np.array(self.params, dtype=np.float64).reshape(-1)
        expected = n_params(self.kind, self.in_dim, self.out_dim, self.hidden)
        if params.size != expected:
            raise DimensionError(
                f"{self.kind} model ({self.in_dim}->{self.out_dim}) needs {expected} params, got {params.size}"
            )
        if not np.all(np.isfinite(params)):
            raise ValueError("model parameters must be finite")
        params.flags.writeable = False
        object.__setattr__(self, "params", params)

    def __eq__(self, other):
        if not isinstance(other, EmbeddingModel):
            return NotImplemented
        return (
            (self.kind, self.in_dim, self.out_dim, self.hidden, self.seed)
            == (other.kind, other.in_dim, other.out_dim, other.hidden, other.seed)
            and np.array_equal(self.params.view(np.uint64), other.params.view(np.uint64))
        )

    def with_params(self, params) -> "EmbeddingModel":
        return replace(self, params=params)

    def unpack(self):
        """Views of the weight blocks, in layout order."""
        d, n, h, w = self.in_dim, self.out_dim, self.hidden, self.params
        if self.kind == "linear":
            return w[: n * d].reshape(n, d), w[n * d:]
        i = 0
        W1 = w[i:i + h * d].reshape(h, d); i += h * d
        b1 = w[i:i + h]; i += h
        W2 = w[i:i + n * h].reshape(n, h); i += n * h
        b2 = w[i:i + n]
        return W1, b1, W2, b2


def init_model(kind, in_dim, out_dim, hidden=None, seed=0, scale=0.1) -> EmbeddingModel:
    """Parameters drawn i.i.d. uniform in ``[-scale, scale]``."""
    if not scale >= 0:
        raise ConfigError("scale must be non-negative")
    size = n_params(kind, in_dim, out_dim, hidden)
    rng = np.random.default_rng(seed)
    params = rng.uniform(-scale, scale, size=size) if scale > 0 else np.zeros(size)
    return EmbeddingModel(kind, in_dim, out_dim, params, hidden=hidden, seed=seed)


def linear_model(W, b=None) -> EmbeddingModel:
    W = np.atleast_2d(np.asarray(W, dtype=np.float64))
    n, d = W.shape
    b = np.zeros(n) if b is None else np.asarray(b, dtype=np.float64)
    return EmbeddingModel("linear", d, n, np.concatenate([W.ravel(), b]))


def identity_model(d: int) -> EmbeddingModel:
    return linear_model(np.eye(d))


def _check_inputs(model, X):
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != model.in_dim:
        raise DimensionError(f"input dimension {X.shape[-1]} != model in_dim {model.in_dim}")
    return X


def _forward(model, X):
    """Returns output and the cache needed by :func:`backprop`."""
    if model.kind == "linear":
        W, b = model.unpack()
        return X @ W.T + b, None
    W1, b1, W2, b2 = model.unpack()
    Z = X @ W1.T + b1
    H = np.maximum(Z, 0.0)
    return H @ W2.T + b2, (Z, H)


def embed(model: EmbeddingModel, x) -> np.ndarray:
    """Feature vector(s) for one input ``(d,)`` or a stack ``(m, d)``."""
    X = _check_inputs(model, x)
    out, _ = _forward(model, np.atleast_2d(X))
    return out[0] if X.ndim == 1 else out


def backprop(model: EmbeddingModel, X, grad_out) -> np.ndarray:
    """Flat parameter gradient of ``sum(grad_out * embed(model, X))``."""
    X = np.atleast_2d(_check_inputs(model, X))
    G = np.atleast_2d(np.asarray(grad_out, dtype=np.float64))
    if G.shape != (X.shape[0], model.out_dim):
        raise DimensionError(f"grad_out has shape {G.shape}, expected {(X.shape[0], model.out_dim)}")
    if model.kind == "linear":
        return np.concatenate([(G.T @ X).ravel(), G.sum(axis=0)])
    W1, b1, W2, b2 = model.unpack()
    _, (Z, H) = _forward(model, X)
    dH = G @ W2
    dZ = dH * (Z > 0)
    return np.concatenate([
        (dZ.T @ X).ravel(), dZ.sum(axis=0),
        (G.T @ H).ravel(), G.sum(axis=0),
    ])


def hidden_preactivations(model: EmbeddingModel, X) -> Optional[np.ndarray]:
    if model.kind != "two_layer":
        return None
    _, (Z, _) = _forward(model, np.atleast_2d(_check_inputs(model, X)))
    return Z


def sq_dist(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionError(f"shape mismatch {u.shape} vs {v.shape}")
    diff = u - v
    return float(np.dot(diff, diff))


def sq_dists_rows(U, V) -> np.ndarray:
    """Row-wise squared distances of two equally shaped stacks."""
    diff = U - V
    return np.einsum("ij,ij->i", diff, diff)


def pairwise_sq_dists(U, V) -> np.ndarray:
    """``D[i, j] = |U_i - V_j|^2`` computed from explicit differences."""
    U = np.atleast_2d(U)
    V = np.atleast_2d(V)
    if U.shape[1] != V.shape[1]:
        raise DimensionError(f"feature dimensions differ: {U.shape[1]} vs {V.shape[1]}")
    diff = U[:, None, :] - V[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


# --- serialization -----------------------------------------------------------

def save_model(model: EmbeddingModel, path) -> None:
    lines = [
        f"# {FORMAT_TAG}",
        f"kind={model.kind}",
        f"in_dim={model.in_dim}",
        f"out_dim={model.out_dim}",
        f"hidden={'' if model.hidden is None else model.hidden}",
        f"seed={'' if model.seed is None else model.seed}",
        f"n_params={model.params.size}",
    ]
    lines.extend(repr(float(x)) for x in model.params)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path) -> EmbeddingModel:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != f"# {FORMAT_TAG}":
        raise ValueError(f"{path}: not a {FORMAT_TAG} file")
    header = {}
    for line in lines[1:7]:
        key, _, value = line.partition("=")
        header[key] = value
    missing = {"kind", "in_dim", "out_dim", "hidden", "seed", "n_params"} - header.keys()
    if missing:
        raise ValueError(f"{path}: header lacks {sorted(missing)}")
    params = np.array([float(x) for x in lines[7:]], dtype=np.float64)
    if params.size != int(header["n_params"]):
        raise ValueError(f"{path}: expected {header['n_params']} params, found {params.size}")
    return EmbeddingModel(
        header["kind"],
        int(header["in_dim"]),
        int(header["out_dim"]),
        params,
        hidden=int(header["hidden"]) if header["hidden"] else None,
        seed=int(header["seed"]) if header["seed"] else None,
    )
