"""Two-layer GELU MLP mapping encoder outputs into the decoder embedding space."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .numkit import gelu, gelu_grad, matmul

INIT_STD = 0.02
FULL_DIMS = (1152, 4304, 3584)


@dataclass
class ProjectorParams:
    w1: np.ndarray  # (d_hidden, d_model)
    b1: np.ndarray  # (d_hidden,)
    w2: np.ndarray  # (d_llm, d_hidden)
    b2: np.ndarray  # (d_llm,)

    def __post_init__(self):
        self.w1, self.b1, self.w2, self.b2 = (
            np.asarray(a, dtype=np.float64) for a in (self.w1, self.b1, self.w2, self.b2)
        )
        if self.b1.shape != (self.w1.shape[0],) or self.w2.shape[1] != self.w1.shape[0] \
                or self.b2.shape != (self.w2.shape[0],):
            raise ShapeError(
                "inconsistent projector shapes", self.w1.shape, self.b1.shape, self.w2.shape, self.b2.shape
            )

    @property
    def d_model(self) -> int:
        return self.w1.shape[1]

    @property
    def d_llm(self) -> int:
        return self.w2.shape[0]

    @classmethod
    def init(cls, d_model=8, d_hidden=16, d_llm=12, seed=0, std=INIT_STD) -> "ProjectorParams":
        rng = np.random.default_rng(seed)
        return cls(
            rng.normal(0.0, std, (d_hidden, d_model)),
            np.zeros(d_hidden),
            rng.normal(0.0, std, (d_llm, d_hidden)),
            np.zeros(d_llm),
        )

    def to_dict(self, prefix="proj.") -> dict:
        return {f"{prefix}{k}": getattr(self, k) for k in ("w1", "b1", "w2", "b2")}

    @classmethod
    def from_dict(cls, tensors: dict, prefix="proj.") -> "ProjectorParams":
        return cls(*(tensors[f"{prefix}{k}"] for k in ("w1", "b1", "w2", "b2")))


def project(h_v, params: ProjectorParams) -> np.ndarray:
    """H_proj = W2 . GELU(W1 . h + b1) + b2, applied to each row of H_v."""
    h_v = np.asarray(h_v, dtype=np.float64)
    if h_v.ndim != 2 or h_v.shape[1] != params.d_model:
        raise ShapeError("H_v width differs from projector input", h_v.shape, params.w1.shape)
    return matmul(gelu(matmul(h_v, params.w1.T) + params.b1), params.w2.T) + params.b2


def project_backward(d_out, h_v, params: ProjectorParams):
    """Returns (dH_v, grads) where grads maps w1/b1/w2/b2 to their gradients."""
    a = h_v @ params.w1.T + params.b1
    z = gelu(a)
    grads = {"w2": d_out.T @ z, "b2": d_out.sum(axis=0)}
    da = (d_out @ params.w2) * gelu_grad(a)
    grads["w1"] = da.T @ h_v
    grads["b1"] = da.sum(axis=0)
    return da @ params.w1, grads
