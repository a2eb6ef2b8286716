"""Toy-scale rectified-flow training with a stacking constraint and depth
dropout.

The model regresses the straight-path velocity v = eps - x0 from the noisy
latent x^t = x0 + v t. Beyond the plain flow-matching loss, a pair of renders
of the same scene contributes a stacking term: their focus-stack blend is
perturbed with one shared noise tensor and the mask-blended pair of
predictions must reproduce the blend's velocity. Losses and analytic
gradients are implemented side by side so the whole trainer can be verified
against finite differences.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .nn import VelocityPredictor
from .raster import DepthMap, RasterImage
from .simulate import CameraCondition, SamplerSchedule, group_by_scene, sample_pair, synth_probability
from .stacking import LatentCodec, downsample_mask, resize_bilinear, stack_blend, stack_mask

CHECKPOINT_MAGIC = b"RFVP"
CHECKPOINT_VERSION = 1


def _as_image_array(x) -> np.ndarray:
    if isinstance(x, RasterImage):
        return x.data
    return np.asarray(x, dtype=np.float64)


def _as_depth_array(x) -> np.ndarray:
    if isinstance(x, DepthMap):
        return x.data
    return np.asarray(x, dtype=np.float64)


@dataclass(frozen=True)
class FlowSample:
    """A rectified-flow tuple (x0, eps, t, v, xt) with v = eps - x0 and
    xt = x0 + v t holding exactly."""

    x0: np.ndarray
    eps: np.ndarray
    t: float
    v: np.ndarray
    xt: np.ndarray

    def __post_init__(self):
        if not (self.x0.shape == self.eps.shape == self.v.shape == self.xt.shape):
            raise ValueError("flow sample tensors must share one shape")
        if not 0.0 <= self.t <= 1.0:
            raise ValueError("t must lie in [0, 1]")
        if not np.array_equal(self.v, self.eps - self.x0):
            raise ValueError("v must equal eps - x0 exactly")
        if not np.array_equal(self.xt, self.x0 + self.v * self.t):
            raise ValueError("xt must equal x0 + v t exactly")


def perturb(x0: np.ndarray, eps: np.ndarray, t: float) -> FlowSample:
    """Noise-perturb a target along the straight path to eps."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ValueError(f"x0 shape {x0.shape} != eps shape {eps.shape}")
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    v = eps - x0
    return FlowSample(x0=x0, eps=eps, t=float(t), v=v, xt=x0 + v * float(t))


def predict_velocity(model, xt, t: float, cond: CameraCondition, ref_img, depth) -> np.ndarray:
    """Run a velocity model on one instance after checking spatial alignment."""
    xt = _as_image_array(xt)
    ref = _as_image_array(ref_img)
    depth_arr = _as_depth_array(depth)
    if ref.shape != xt.shape:
        raise ValueError(f"reference shape {ref.shape} != latent shape {xt.shape}")
    if depth_arr.shape != xt.shape[:2]:
        raise ValueError(f"depth shape {depth_arr.shape} != spatial dims {xt.shape[:2]}")
    out = model.predict(xt, float(t), cond, ref, depth_arr)
    if out.shape != xt.shape:
        raise ValueError(f"model returned shape {out.shape}, expected {xt.shape}")
    return out


def _norm_loss(residual: np.ndarray, norm: str) -> float:
    if norm == "mse":
        return float(np.mean(residual**2))
    if norm == "l1":
        return float(np.mean(np.abs(residual)))
    raise ValueError(f"unknown loss norm {norm!r}")


def _norm_grad(residual: np.ndarray, norm: str) -> np.ndarray:
    """d(loss)/d(residual) for the chosen norm."""
    if norm == "mse":
        return 2.0 * residual / residual.size
    if norm == "l1":
        return np.sign(residual) / residual.size
    raise ValueError(f"unknown loss norm {norm!r}")


def flow_loss(model, sample: FlowSample, cond: CameraCondition, ref, depth, norm: str = "mse") -> float:
    """Velocity regression loss for one perturbed target."""
    pred = predict_velocity(model, sample.xt, sample.t, cond, ref, depth)
    return _norm_loss(sample.v - pred, norm)


@dataclass(frozen=True)
class StackingInputs:
    """Everything the stacking constraint consumes, in pixel space."""

    img1: RasterImage
    img2: RasterImage
    cond1: CameraCondition
    cond2: CameraCondition
    ref: RasterImage
    depth: DepthMap
    eps_shared: np.ndarray
    t: float


def _stacking_forward(inputs: StackingInputs, codec: LatentCodec, smooth_sigma: float):
    """Shared setup for the stacking loss: blend, encode, perturb, masks."""
    mask = stack_mask(inputs.img1, inputs.img2, smooth_sigma)
    stacked = stack_blend(inputs.img1, inputs.img2, mask)
    z_stack = codec.encode(stacked.data)
    eps = np.asarray(inputs.eps_shared, dtype=np.float64)
    if eps.shape != z_stack.shape:
        raise ValueError(f"shared noise shape {eps.shape} != latent shape {z_stack.shape}")
    sample = perturb(z_stack, eps, inputs.t)
    lat_h, lat_w = z_stack.shape[:2]
    m_lat = downsample_mask(mask, lat_w, lat_h).data[:, :, None]
    ref_lat = codec.encode(inputs.ref.data)
    depth_lat = resize_bilinear(inputs.depth.data, lat_h, lat_w)
    return sample, m_lat, ref_lat, depth_lat


def stacking_loss(
    model,
    img1,
    img2,
    cond1: CameraCondition,
    cond2: CameraCondition,
    ref,
    depth,
    eps_shared: np.ndarray,
    t: float,
    codec: LatentCodec = LatentCodec(),
    smooth_sigma: float = 2.0,
    norm: str = "mse",
) -> float:
    """Stacking-constraint loss for one same-scene pair with shared noise."""
    inputs = StackingInputs(
        img1=img1, img2=img2, cond1=cond1, cond2=cond2,
        ref=ref, depth=depth, eps_shared=eps_shared, t=t,
    )
    sample, m_lat, ref_lat, depth_lat = _stacking_forward(inputs, codec, smooth_sigma)
    v1 = predict_velocity(model, sample.xt, sample.t, cond1, ref_lat, depth_lat)
    v2 = predict_velocity(model, sample.xt, sample.t, cond2, ref_lat, depth_lat)
    blended = m_lat * v1 + (1.0 - m_lat) * v2
    return _norm_loss(sample.v - blended, norm)


# ---------------------------------------------------------------------------
# Losses with analytic parameter gradients (for training and gradient checks)
# ---------------------------------------------------------------------------


def _flow_batch_loss_grads(model: VelocityPredictor, xts, ts, conds, refs, depths, vs, norm="mse"):
    pred, cache = model.forward(xts, ts, conds, refs, depths)
    residual = vs - pred
    loss = _norm_loss(residual, norm)
    grads = model.backward(cache, -_norm_grad(residual, norm))
    return loss, grads


def _stack_batch_loss_grads(model: VelocityPredictor, xts, ts, conds1, conds2, refs, depths,
                            v_stacks, m_lats, norm="mse"):
    batch = xts.shape[0]
    both = np.concatenate([xts, xts], axis=0)
    pred, cache = model.forward(
        both,
        np.concatenate([ts, ts]),
        list(conds1) + list(conds2),
        np.concatenate([refs, refs], axis=0),
        np.concatenate([depths, depths], axis=0),
    )
    v1, v2 = pred[:batch], pred[batch:]
    blended = m_lats * v1 + (1.0 - m_lats) * v2
    residual = v_stacks - blended
    loss = _norm_loss(residual, norm)
    dblended = -_norm_grad(residual, norm)
    dout = np.concatenate([dblended * m_lats, dblended * (1.0 - m_lats)], axis=0)
    grads = model.backward(cache, dout)
    return loss, grads


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 500
    batch: int = 8
    lr: float = 1e-3
    seed: int = 0
    lambda_stack: float = 0.1
    depth_dropout_p: float = 0.5
    optimizer: str = "momentum"  # momentum | sgd | adam
    momentum: float = 0.9
    loss_norm: str = "mse"
    smooth_sigma: float = 2.0
    schedule: SamplerSchedule = field(default_factory=SamplerSchedule)
    codec: LatentCodec = field(default_factory=LatentCodec)

    def __post_init__(self):
        if not 0.0 <= self.depth_dropout_p <= 1.0:
            raise ValueError("depth_dropout_p must lie in [0, 1]")
        if self.lambda_stack < 0.0:
            raise ValueError("lambda_stack must be >= 0")
        if self.optimizer not in ("momentum", "sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass(frozen=True)
class LossBreakdown:
    l_flow: float
    l_stack: float
    l_total: float

    def __post_init__(self):
        if min(self.l_flow, self.l_stack, self.l_total) < 0.0:
            raise ValueError("losses must be non-negative")


@dataclass(frozen=True)
class PairBatchItem:
    """One training example: a flow pair plus a same-scene sibling pair."""

    ref: np.ndarray
    target: np.ndarray
    cond: CameraCondition
    depth: np.ndarray
    sib1: np.ndarray
    sib2: np.ndarray
    sib_cond1: CameraCondition
    sib_cond2: CameraCondition
    source_kind: str = "synthetic"


@dataclass
class TrainScene:
    """In-memory scene: decoded variant images plus the shared depth map."""

    scene_id: str
    variants: list
    images: dict
    depth: np.ndarray
    source_kind: str = "synthetic"


class Trainer:
    """Single-writer training loop over a velocity predictor."""

    def __init__(self, model: VelocityPredictor, config: TrainConfig):
        self.model = model
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        self.step_count = 0
        self.dropout_events = 0
        self.sample_count = 0
        self._adam_t = 0
        self._slot1 = {n: np.zeros_like(p) for n, p in model.params.items()}
        self._slot2 = {n: np.zeros_like(p) for n, p in model.params.items()}

    # -- batch assembly -----------------------------------------------------

    def _pick_scene(self, scenes: list) -> TrainScene:
        step = min(self.step_count, self.config.steps)
        p_synth = synth_probability(step, self.config.steps, self.config.schedule)
        want = "synthetic" if self.rng.random() < p_synth else "photo"
        pool = [s for s in scenes if s.source_kind == want] or scenes
        return pool[int(self.rng.integers(len(pool)))]

    def draw_batch(self, scenes: list) -> list:
        batch = []
        for _ in range(self.config.batch):
            scene = self._pick_scene(scenes)
            ref_v, tgt_v, cond = sample_pair(scene.variants, self.rng)
            # sibling pair: both sides need focus points of their own
            valid = [v for v in scene.variants if v.focus_point_samples]
            if len(valid) < 2:
                raise ValueError(f"scene {scene.scene_id} lacks two variants with focus points")
            i = int(self.rng.integers(len(valid)))
            j = int(self.rng.integers(len(valid) - 1))
            sib1_v = valid[i]
            sib2_v = valid[(i + 1 + j) % len(valid)]
            sib_cond1 = _condition_for(sib1_v, self.rng)
            sib_cond2 = _condition_for(sib2_v, self.rng)
            batch.append(
                PairBatchItem(
                    ref=scene.images[ref_v.image_path],
                    target=scene.images[tgt_v.image_path],
                    cond=cond,
                    depth=scene.depth,
                    sib1=scene.images[sib1_v.image_path],
                    sib2=scene.images[sib2_v.image_path],
                    sib_cond1=sib_cond1,
                    sib_cond2=sib_cond2,
                    source_kind=scene.source_kind,
                )
            )
        return batch

    # -- one optimization step ----------------------------------------------

    def train_step(self, batch: list) -> LossBreakdown:
        if not batch:
            raise ValueError("batch must not be empty")
        cfg = self.config
        codec = cfg.codec

        flow_xts, flow_vs, flow_ts, flow_conds, flow_refs, flow_depths = [], [], [], [], [], []
        stk_xts, stk_vs, stk_ts, stk_m = [], [], [], []
        stk_c1, stk_c2, stk_refs, stk_depths = [], [], [], []

        for item in batch:
            dropped = self.rng.random() < cfg.depth_dropout_p
            self.dropout_events += dropped
            self.sample_count += 1
            depth = np.zeros_like(item.depth) if dropped else item.depth

            z0 = codec.encode(item.target)
            eps = self.rng.standard_normal(z0.shape)
            sample = perturb(z0, eps, float(self.rng.uniform()))
            lat_h, lat_w = z0.shape[:2]
            flow_xts.append(sample.xt)
            flow_vs.append(sample.v)
            flow_ts.append(sample.t)
            flow_conds.append(item.cond)
            flow_refs.append(codec.encode(item.ref))
            flow_depths.append(resize_bilinear(depth, lat_h, lat_w))

            inputs = StackingInputs(
                img1=RasterImage(item.sib1),
                img2=RasterImage(item.sib2),
                cond1=item.sib_cond1,
                cond2=item.sib_cond2,
                ref=RasterImage(item.ref),
                depth=DepthMap(depth),
                eps_shared=self.rng.standard_normal(z0.shape),
                t=float(self.rng.uniform()),
            )
            s_sample, m_lat, ref_lat, depth_lat = _stacking_forward(inputs, codec, cfg.smooth_sigma)
            stk_xts.append(s_sample.xt)
            stk_vs.append(s_sample.v)
            stk_ts.append(s_sample.t)
            stk_m.append(m_lat)
            stk_c1.append(item.sib_cond1)
            stk_c2.append(item.sib_cond2)
            stk_refs.append(ref_lat)
            stk_depths.append(depth_lat)

        l_flow, g_flow = _flow_batch_loss_grads(
            self.model, np.stack(flow_xts), np.array(flow_ts), flow_conds,
            np.stack(flow_refs), np.stack(flow_depths), np.stack(flow_vs), cfg.loss_norm,
        )
        if cfg.lambda_stack > 0.0:
            l_stack, g_stack = _stack_batch_loss_grads(
                self.model, np.stack(stk_xts), np.array(stk_ts), stk_c1, stk_c2,
                np.stack(stk_refs), np.stack(stk_depths), np.stack(stk_vs),
                np.stack(stk_m), cfg.loss_norm,
            )
        else:
            l_stack, g_stack = 0.0, {n: 0.0 for n in g_flow}

        grads = {n: g_flow[n] + cfg.lambda_stack * g_stack[n] for n in g_flow}
        self._apply_update(grads)
        self.step_count += 1
        return LossBreakdown(
            l_flow=l_flow, l_stack=l_stack, l_total=l_flow + cfg.lambda_stack * l_stack
        )

    def _apply_update(self, grads: dict) -> None:
        cfg = self.config
        params = self.model.params
        if cfg.optimizer == "sgd":
            for n, g in grads.items():
                params[n] -= cfg.lr * g
        elif cfg.optimizer == "momentum":
            for n, g in grads.items():
                self._slot1[n] = cfg.momentum * self._slot1[n] - cfg.lr * g
                params[n] += self._slot1[n]
        else:  # adam
            self._adam_t += 1
            b1, b2, eps = 0.9, 0.999, 1e-8
            t = self._adam_t
            for n, g in grads.items():
                self._slot1[n] = b1 * self._slot1[n] + (1 - b1) * g
                self._slot2[n] = b2 * self._slot2[n] + (1 - b2) * g * g
                m_hat = self._slot1[n] / (1 - b1**t)
                v_hat = self._slot2[n] / (1 - b2**t)
                params[n] -= cfg.lr * m_hat / (np.sqrt(v_hat) + eps)

    def train(self, scenes: list, steps: int | None = None) -> list:
        """Run the loop and return the per-step loss breakdowns."""
        history = []
        for _ in range(steps if steps is not None else self.config.steps):
            history.append(self.train_step(self.draw_batch(scenes)))
        return history

    @property
    def dropout_fraction(self) -> float:
        return self.dropout_events / self.sample_count if self.sample_count else 0.0


def _condition_for(variant, rng: np.random.Generator) -> CameraCondition:
    if not variant.focus_point_samples:
        raise ValueError(f"variant {variant.image_path} has no focus points")
    f_x, f_y = variant.focus_point_samples[int(rng.integers(len(variant.focus_point_samples)))]
    return CameraCondition(f_x=f_x, f_y=f_y, b=variant.bokeh_level)


def train_step(model: VelocityPredictor, batch: list, config: TrainConfig,
               rng: np.random.Generator) -> LossBreakdown:
    """One-off training step with fresh optimizer state (see Trainer for runs)."""
    trainer = Trainer(model, config)
    trainer.rng = rng
    return trainer.train_step(batch)


def load_training_scenes(manifest_path, variants=None) -> list:
    """Materialize manifest scenes into memory for the trainer."""
    from pathlib import Path

    from .raster import read_depth, read_image
    from .simulate import read_manifest

    base = Path(manifest_path).parent
    variants = read_manifest(manifest_path) if variants is None else variants
    scenes = []
    for scene_id, group in group_by_scene(variants).items():
        images = {v.image_path: read_image(base / v.image_path).data for v in group}
        depth = read_depth(base / group[0].depth_path).data
        scenes.append(
            TrainScene(
                scene_id=scene_id,
                variants=group,
                images=images,
                depth=depth,
                source_kind=group[0].source_kind,
            )
        )
    return scenes


# ---------------------------------------------------------------------------
# Gradient verification
# ---------------------------------------------------------------------------


def max_relative_error(grads_a: dict, grads_b: dict, floor: float = 1e-4) -> float:
    """Largest entrywise relative disagreement between two gradient sets."""
    worst = 0.0
    for name, ga in grads_a.items():
        gb = grads_b[name]
        denom = np.maximum(np.maximum(np.abs(ga), np.abs(gb)), floor)
        worst = max(worst, float(np.max(np.abs(ga - gb) / denom)))
    return worst


def finite_difference_grads(model: VelocityPredictor, loss_fn, h: float = 1e-5) -> dict:
    """Central finite differences of ``loss_fn()`` over every parameter entry."""
    grads = {}
    for name, param in model.params.items():
        grad = np.zeros_like(param)
        flat_p = param.ravel()
        flat_g = grad.ravel()
        for i in range(flat_p.size):
            original = flat_p[i]
            flat_p[i] = original + h
            hi = loss_fn()
            flat_p[i] = original - h
            lo = loss_fn()
            flat_p[i] = original
            flat_g[i] = (hi - lo) / (2.0 * h)
        grads[name] = grad
    return grads


def gradient_check(model: VelocityPredictor, instance: dict, loss_kind: str,
                   h: float = 1e-5) -> float:
    """Compare analytic gradients to central finite differences; returns the
    max relative error over all parameters.

    ``instance`` carries the loss inputs: for ``flow`` the keys (x0, eps, t,
    cond, ref, depth); for ``stack`` the keys (img1, img2, cond1, cond2, ref,
    depth, eps_shared, t) plus optional codec and smooth_sigma.
    """
    if loss_kind == "flow":
        sample = perturb(instance["x0"], instance["eps"], instance["t"])
        ref = _as_image_array(instance["ref"])
        depth = _as_depth_array(instance["depth"])
        cond = instance["cond"]

        def loss_fn() -> float:
            return flow_loss(model, sample, cond, ref, depth)

        _, analytic = _flow_batch_loss_grads(
            model, sample.xt[None], np.array([sample.t]), [cond], ref[None], depth[None],
            sample.v[None],
        )
    elif loss_kind == "stack":
        codec = instance.get("codec", LatentCodec())
        sigma = instance.get("smooth_sigma", 0.0)
        inputs = StackingInputs(
            img1=instance["img1"], img2=instance["img2"],
            cond1=instance["cond1"], cond2=instance["cond2"],
            ref=instance["ref"], depth=instance["depth"],
            eps_shared=instance["eps_shared"], t=instance["t"],
        )
        sample, m_lat, ref_lat, depth_lat = _stacking_forward(inputs, codec, sigma)

        def loss_fn() -> float:
            return stacking_loss(
                model, inputs.img1, inputs.img2, inputs.cond1, inputs.cond2,
                inputs.ref, inputs.depth, inputs.eps_shared, inputs.t, codec, sigma,
            )

        _, analytic = _stack_batch_loss_grads(
            model, sample.xt[None], np.array([sample.t]), [inputs.cond1], [inputs.cond2],
            ref_lat[None], depth_lat[None], sample.v[None], m_lat[None],
        )
    else:
        raise ValueError(f"unknown loss kind {loss_kind!r}")

    numeric = finite_difference_grads(model, loss_fn, h)
    return max_relative_error(analytic, numeric)


# ---------------------------------------------------------------------------
# Inference and checkpoints
# ---------------------------------------------------------------------------


def sample_image(model, cond: CameraCondition, ref, depth, n_steps: int,
                 codec: LatentCodec = LatentCodec(), rng=None, eps=None) -> RasterImage:
    """Euler-integrate the learned velocity field from pure noise to an image."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    ref_arr = _as_image_array(ref)
    depth_arr = _as_depth_array(depth)
    ref_lat = codec.encode(ref_arr)
    lat_h, lat_w = ref_lat.shape[:2]
    depth_lat = resize_bilinear(depth_arr, lat_h, lat_w)

    if eps is None:
        rng = np.random.default_rng(0) if rng is None else rng
        eps = rng.standard_normal(ref_lat.shape)
    x = np.asarray(eps, dtype=np.float64).copy()

    dt = 1.0 / n_steps
    for i in range(n_steps):
        t = 1.0 - i * dt
        v = model.predict(x, t, cond, ref_lat, depth_lat)
        x = x - dt * v
    return RasterImage(np.clip(codec.decode(x), 0.0, 1.0))


def save_checkpoint(model: VelocityPredictor, path) -> None:
    """Persist: magic, header (format version, architecture, parameter table),
    then raw little-endian float32 arrays in table order."""
    names = sorted(model.params)
    header = {
        "format_version": CHECKPOINT_VERSION,
        "arch": model.descriptor,
        "d_emb": model.d_emb,
        "params": [{"name": n, "shape": list(model.params[n].shape)} for n in names],
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(model.params[n].astype("<f4").tobytes())


def load_checkpoint(path) -> VelocityPredictor:
    """Rebuild a predictor, validating stored shapes against its architecture."""
    with open(path, "rb") as fh:
        if fh.read(4) != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a velocity-predictor checkpoint")
        (length,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(length).decode("utf-8"))
        if header.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version")
        model = VelocityPredictor.from_descriptor(header["arch"])
        expected = model.param_shapes()
        listed = {entry["name"]: tuple(entry["shape"]) for entry in header["params"]}
        if listed != expected:
            raise ValueError(f"{path}: parameter table does not match architecture")
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 4)
            if len(raw) != count * 4:
                raise ValueError(f"{path}: truncated parameter data")
            model.params[entry["name"]] = (
                np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)
            )
    return model
