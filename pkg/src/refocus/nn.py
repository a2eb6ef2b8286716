"""A small convolutional velocity predictor with hand-written backprop.

Everything runs in float64 numpy so analytic gradients can be checked against
central finite differences. The network consumes a channel stack of the noisy
latent, the reference image, the (possibly zeroed) depth map, a broadcast
camera token, and a broadcast sinusoidal timestep embedding, and emits a
velocity field of the latent's shape.
"""

from __future__ import annotations

import numpy as np

from .simulate import CameraCondition

BOKEH_NORM = 20.0  # simulation grid maximum; keeps the conditioning triple O(1)


def camera_token(cond: CameraCondition, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Project (f_x, f_y, b / 20) through a learnable linear map."""
    weights = np.asarray(weights, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if weights.ndim != 2 or weights.shape[1] != 3 or bias.shape != (weights.shape[0],):
        raise ValueError("camera projector needs (d_emb, 3) weights and (d_emb,) bias")
    triple = np.array([cond.f_x, cond.f_y, cond.b / BOKEH_NORM])
    return weights @ triple + bias


def timestep_embedding(t: float, dim: int) -> np.ndarray:
    """Fixed sinusoidal embedding of a scalar timestep in [0, 1]."""
    half = dim // 2
    freqs = 2.0 ** np.arange(half)
    angles = 2.0 * np.pi * freqs * t
    return np.concatenate([np.sin(angles), np.cos(angles)])


def _conv3x3_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Same-padding 3x3 convolution on (B, C, H, W); returns output and the
    im2col patch matrix needed for the backward pass."""
    batch, cin, h, w_ = x.shape
    cout = w.shape[0]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    slices = [
        xp[:, :, dy:dy + h, dx:dx + w_]
        for dy in range(3)
        for dx in range(3)
    ]
    patches = np.stack(slices, axis=2).reshape(batch, cin * 9, h * w_)
    flat = np.matmul(w.reshape(cout, cin * 9), patches)
    out = flat.reshape(batch, cout, h, w_) + b[None, :, None, None]
    return out, patches


def _conv3x3_backward(dout: np.ndarray, patches: np.ndarray, w: np.ndarray, x_shape):
    batch, cin, h, w_ = x_shape
    cout = w.shape[0]
    flat = dout.reshape(batch, cout, h * w_)
    dw = np.matmul(flat, patches.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
    db = flat.sum(axis=(0, 2))
    dpatches = np.matmul(w.reshape(cout, cin * 9).T, flat)
    dpatches = dpatches.reshape(batch, cin, 9, h, w_)
    dxp = np.zeros((batch, cin, h + 2, w_ + 2))
    k = 0
    for dy in range(3):
        for dx in range(3):
            dxp[:, :, dy:dy + h, dx:dx + w_] += dpatches[:, :, k]
            k += 1
    return dxp[:, :, 1:h + 1, 1:w_ + 1], dw, db


class VelocityPredictor:
    """Conv stack: three hidden 3x3 layers with tanh, then a linear 3x3 head.

    Parameters are named float64 arrays; ``forward`` caches activations for
    ``backward``, which returns gradients for every parameter.
    """

    def __init__(
        self,
        image_channels: int = 3,
        d_emb: int = 8,
        t_dim: int = 8,
        hidden: int = 16,
        hidden_layers: int = 3,
        seed: int = 0,
    ):
        if t_dim % 2:
            raise ValueError("t_dim must be even")
        self.image_channels = image_channels
        self.d_emb = d_emb
        self.t_dim = t_dim
        self.hidden = hidden
        self.hidden_layers = hidden_layers
        self.in_channels = 2 * image_channels + 1 + d_emb + t_dim

        rng = np.random.default_rng(seed)
        self.params: dict[str, np.ndarray] = {
            "cam_w": rng.normal(0.0, 1.0 / np.sqrt(3), size=(d_emb, 3)),
            "cam_b": np.zeros(d_emb),
        }
        widths = [self.in_channels] + [hidden] * hidden_layers + [image_channels]
        for i, (cin, cout) in enumerate(zip(widths[:-1], widths[1:])):
            scale = 1.0 / np.sqrt(cin * 9)
            if i == hidden_layers:
                scale *= 0.1  # start the head near zero output
            self.params[f"conv{i}_w"] = rng.normal(0.0, scale, size=(cout, cin, 3, 3))
            self.params[f"conv{i}_b"] = np.zeros(cout)

    @property
    def descriptor(self) -> dict:
        return {
            "image_channels": self.image_channels,
            "d_emb": self.d_emb,
            "t_dim": self.t_dim,
            "hidden": self.hidden,
            "hidden_layers": self.hidden_layers,
        }

    @classmethod
    def from_descriptor(cls, descriptor: dict) -> "VelocityPredictor":
        return cls(**descriptor)

    def param_shapes(self) -> dict:
        return {name: arr.shape for name, arr in self.params.items()}

    # -- input assembly ----------------------------------------------------

    def _conds_matrix(self, conds) -> np.ndarray:
        rows = [[c.f_x, c.f_y, c.b / BOKEH_NORM] for c in conds]
        return np.asarray(rows, dtype=np.float64)

    def _assemble(self, xs, ts, conds, refs, depths):
        batch, h, w, c = xs.shape
        if c != self.image_channels:
            raise ValueError(f"model expects {self.image_channels}-channel input, got {c}")
        if refs.shape != xs.shape:
            raise ValueError("reference batch must match the noisy-latent batch shape")
        if depths.shape != (batch, h, w):
            raise ValueError("depth batch must be (B, H, W) aligned with the latents")

        conds_m = self._conds_matrix(conds)
        tokens = conds_m @ self.params["cam_w"].T + self.params["cam_b"]

        t_embs = np.stack([timestep_embedding(float(t), self.t_dim) for t in ts])

        planes = [
            np.moveaxis(xs, 3, 1),
            np.moveaxis(refs, 3, 1),
            depths[:, None, :, :],
            np.broadcast_to(tokens[:, :, None, None], (batch, self.d_emb, h, w)),
            np.broadcast_to(t_embs[:, :, None, None], (batch, self.t_dim, h, w)),
        ]
        return np.concatenate(planes, axis=1), conds_m

    # -- forward / backward -------------------------------------------------

    def forward(self, xs, ts, conds, refs, depths):
        """Batched forward pass on (B, H, W, C) stacks; returns (out, cache)."""
        xs = np.asarray(xs, dtype=np.float64)
        refs = np.asarray(refs, dtype=np.float64)
        depths = np.asarray(depths, dtype=np.float64)
        x, conds_m = self._assemble(xs, ts, conds, refs, depths)

        cache = {"conds_m": conds_m, "patches": [], "shapes": [], "acts": []}
        h = x
        for i in range(self.hidden_layers):
            out, patches = _conv3x3_forward(h, self.params[f"conv{i}_w"], self.params[f"conv{i}_b"])
            act = np.tanh(out)
            cache["patches"].append(patches)
            cache["shapes"].append(h.shape)
            cache["acts"].append(act)
            h = act
        out, patches = _conv3x3_forward(
            h, self.params[f"conv{self.hidden_layers}_w"], self.params[f"conv{self.hidden_layers}_b"]
        )
        cache["patches"].append(patches)
        cache["shapes"].append(h.shape)
        return np.moveaxis(out, 1, 3), cache

    def backward(self, cache, dout) -> dict:
        """Gradients of every parameter given d(loss)/d(output)."""
        grads = {}
        d = np.moveaxis(np.asarray(dout, dtype=np.float64), 3, 1)

        i = self.hidden_layers
        d, dw, db = _conv3x3_backward(d, cache["patches"][i], self.params[f"conv{i}_w"], cache["shapes"][i])
        grads[f"conv{i}_w"] = dw
        grads[f"conv{i}_b"] = db
        for i in range(self.hidden_layers - 1, -1, -1):
            d = d * (1.0 - cache["acts"][i] ** 2)
            d, dw, db = _conv3x3_backward(
                d, cache["patches"][i], self.params[f"conv{i}_w"], cache["shapes"][i]
            )
            grads[f"conv{i}_w"] = dw
            grads[f"conv{i}_b"] = db

        # The token plane sits between the depth plane and the t-embedding.
        tok_start = 2 * self.image_channels + 1
        dtoken = d[:, tok_start:tok_start + self.d_emb].sum(axis=(2, 3))
        grads["cam_w"] = dtoken.T @ cache["conds_m"]
        grads["cam_b"] = dtoken.sum(axis=0)
        return grads

    # -- single-instance convenience ----------------------------------------

    def predict(self, xt, t, cond, ref, depth) -> np.ndarray:
        """Velocity prediction for one (H, W, C) instance."""
        xt = np.asarray(xt, dtype=np.float64)
        ref = np.asarray(ref, dtype=np.float64)
        depth = np.asarray(depth, dtype=np.float64)
        out, _ = self.forward(xt[None], [t], [cond], ref[None], depth[None])
        return out[0]
