"""Unsupervised path regression: scene descriptor in, spline parameters out.

A fully connected trunk with highway layers maps a flat scene descriptor
plus normalized start/goal onto per-anchor output heads; each head emits
one anchor (squashed into the scene bounds) and one weight logit.  The
network trains end to end against the path cost alone - no reference paths
anywhere - by chaining the analytic cost gradient through a hand-written
backward pass.  The forward pass is dtype-generic, so the tape engine can
differentiate the exact same code at small sizes for verification.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from . import cost as cost_mod
from .autodiff import NumericError
from .cost import CostParams
from .geom import Box, Scene, Sphere, inflate_scene, min_sdf_points, scene_to_json
from .optimizer import AdamState
from .spline import SplinePath, straight_line_spline

CHECKPOINT_VERSION = 1
KIND_SPHERE = 1.0
KIND_BOX = 2.0


class GenerationError(RuntimeError):
    """Rejection sampling ran out of attempts."""


class CapacityError(ValueError):
    """A scene holds more obstacles than the descriptor layout allows."""


# scene descriptors ---------------------------------------------------------------


def descriptor_length(k_max: int, dim: int) -> int:
    return k_max * (1 + 2 * dim)


def vectorize_scene(scene: Scene, k_max: int) -> np.ndarray:
    """Flat descriptor: per obstacle a kind flag, center, and size block.

    Layout per slot (1 + 2d values): kind (1 sphere, 2 box, 0 empty),
    center normalized per axis to [-1, 1], then d size values (box half
    extents per axis, sphere radius in the first slot) normalized by the
    bound half extents.  Unused slots are zero.
    """
    if len(scene.obstacles) > k_max:
        raise CapacityError(
            f"scene has {len(scene.obstacles)} obstacles, descriptor holds {k_max}"
        )
    dim = scene.dim
    mid = scene.center
    half = scene.half_extent
    scale = float(half.mean())
    out = np.zeros(descriptor_length(k_max, dim))
    stride = 1 + 2 * dim
    for slot, obstacle in enumerate(scene.obstacles):
        base = slot * stride
        center = (obstacle.center - mid) / half
        if isinstance(obstacle, Sphere):
            out[base] = KIND_SPHERE
            out[base + 1 : base + 1 + dim] = center
            out[base + 1 + dim] = obstacle.radius / scale
        else:
            out[base] = KIND_BOX
            out[base + 1 : base + 1 + dim] = center
            out[base + 1 + dim : base + 1 + 2 * dim] = obstacle.half_extents / half
    return out


def normalize_point(scene: Scene, point) -> np.ndarray:
    return (np.asarray(point, dtype=float) - scene.center) / scene.half_extent


@dataclass(frozen=True, eq=False)
class ProblemSample:
    """One training or evaluation instance with its precomputed descriptor."""

    scene: Scene
    descriptor: np.ndarray
    start: np.ndarray
    goal: np.ndarray
    straight_line_collides: bool

    def network_input(self) -> np.ndarray:
        return np.concatenate(
            [
                self.descriptor,
                normalize_point(self.scene, self.start),
                normalize_point(self.scene, self.goal),
            ]
        )


def mixture_flag(index: int, collide_fraction: float) -> bool:
    """Deterministic alternation hitting the requested fraction exactly."""
    f = float(collide_fraction)
    return int(np.floor((index + 1) * f)) - int(np.floor(index * f)) >= 1


def sample_problem(
    scene_source,
    collide_fraction: float,
    seed: int,
    *,
    n_anchors: int,
    degree: int,
    cost_params: CostParams,
    k_max: int,
    budget: int = 10_000,
) -> ProblemSample:
    """Rejection-sample endpoints whose straight-line flag matches the mixture.

    The seed doubles as the stream index for the deterministic alternation,
    so consecutive seeds realize the requested fraction exactly.  Both
    endpoints land strictly outside every obstacle; the flag comes from
    densely sampling the straight spline at the cost sampling step.
    """
    if not 0.0 <= collide_fraction <= 1.0:
        raise ValueError("collide fraction must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    scene = scene_source(rng) if callable(scene_source) else scene_source
    want = mixture_flag(seed, collide_fraction)
    for _ in range(budget):
        start = rng.uniform(scene.bounds_min, scene.bounds_max)
        goal = rng.uniform(scene.bounds_min, scene.bounds_max)
        if min_sdf_points(scene, np.vstack([start, goal])).min() <= 0.0:
            continue
        straight = straight_line_spline(start, goal, n_anchors, degree)
        samples = cost_mod.sample_path(straight, cost_params.step)
        collides = bool((min_sdf_points(scene, samples.points) < 0.0).any())
        if collides == want:
            return ProblemSample(
                scene=scene,
                descriptor=vectorize_scene(scene, k_max),
                start=start,
                goal=goal,
                straight_line_collides=collides,
            )
    raise GenerationError(
        f"no endpoint pair with straight-line-collides={want} in {budget} attempts"
    )


# network -------------------------------------------------------------------------


@dataclass(frozen=True)
class NetConfig:
    dim: int
    k_max: int
    n_anchors: int
    degree: int = 2
    input_widths: tuple = (128, 128)
    trunk_width: int = 256
    highway_layers: int = 4
    head_widths: tuple = (128, 128)
    output_mode: str = "absolute"  # "absolute": squash around scene center;
    # "residual": squash around the straight-line anchors (still in bounds)
    seed: int = 0

    def __post_init__(self):
        if self.output_mode not in ("absolute", "residual"):
            raise ValueError(f"unknown output mode {self.output_mode!r}")

    @property
    def input_dim(self) -> int:
        return descriptor_length(self.k_max, self.dim) + 2 * self.dim

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "k_max": self.k_max,
            "n_anchors": self.n_anchors,
            "degree": self.degree,
            "input_widths": list(self.input_widths),
            "trunk_width": self.trunk_width,
            "highway_layers": self.highway_layers,
            "head_widths": list(self.head_widths),
            "output_mode": self.output_mode,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, data: dict) -> "NetConfig":
        return cls(
            dim=data["dim"],
            k_max=data["k_max"],
            n_anchors=data["n_anchors"],
            degree=data["degree"],
            input_widths=tuple(data["input_widths"]),
            trunk_width=data["trunk_width"],
            highway_layers=data["highway_layers"],
            head_widths=tuple(data["head_widths"]),
            output_mode=data.get("output_mode", "absolute"),
            seed=data["seed"],
        )


def _param_spec(config: NetConfig) -> list:
    """Ordered (name, shape, init) triples; the order fixes flattening."""
    spec = []
    widths = [config.input_dim, *config.input_widths, config.trunk_width]
    for i in range(len(widths) - 1):
        spec.append((f"in{i}_w", (widths[i], widths[i + 1]), "uniform"))
        spec.append((f"in{i}_b", (widths[i + 1],), "zeros"))
    w = config.trunk_width
    for i in range(config.highway_layers):
        spec.append((f"hw{i}_tw", (w, w), "uniform"))
        spec.append((f"hw{i}_tb", (w,), "zeros"))
        spec.append((f"hw{i}_gw", (w, w), "uniform"))
        spec.append((f"hw{i}_gb", (w,), "gate"))
    head = [w, *config.head_widths, config.dim + 1]
    for j in range(config.n_anchors):
        for i in range(len(head) - 1):
            spec.append((f"head{j}_{i}_w", (head[i], head[i + 1]), "uniform"))
            spec.append((f"head{j}_{i}_b", (head[i + 1],), "zeros"))
    return spec


def _init_params(config: NetConfig) -> dict:
    rng = np.random.default_rng(config.seed)
    params = {}
    for name, shape, kind in _param_spec(config):
        if kind == "uniform":
            bound = 1.0 / np.sqrt(shape[0])
            params[name] = rng.uniform(-bound, bound, shape)
        elif kind == "gate":
            # negative gate bias: early training passes inputs through
            params[name] = np.full(shape, -1.0)
        else:
            params[name] = np.zeros(shape)
    return params


def _sigmoid_array(x):
    """Logistic over arrays, overflow-free, dtype-generic via tanh."""
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def network_forward(params: dict, config: NetConfig, inputs: np.ndarray):
    """Raw head outputs (B, n, dim + 1) plus the cache for backward.

    Works on float64 and on object arrays of tracked scalars alike; all
    activations are tanh, gates are logistic.
    """
    cache = {"inputs": inputs, "pre": [], "post": [], "hw": [], "heads": []}
    h = inputs
    for i in range(len(config.input_widths) + 1):
        pre = h @ params[f"in{i}_w"] + params[f"in{i}_b"]
        h_next = np.tanh(pre)
        cache["pre"].append(h)
        cache["post"].append(h_next)
        h = h_next
    for i in range(config.highway_layers):
        t = np.tanh(h @ params[f"hw{i}_tw"] + params[f"hw{i}_tb"])
        g = _sigmoid_array(h @ params[f"hw{i}_gw"] + params[f"hw{i}_gb"])
        out = g * t + (1.0 - g) * h
        cache["hw"].append((h, t, g))
        h = out
    cache["trunk"] = h
    raws = []
    for j in range(config.n_anchors):
        a = h
        states = [a]
        for i in range(len(config.head_widths)):
            a = np.tanh(a @ params[f"head{j}_{i}_w"] + params[f"head{j}_{i}_b"])
            states.append(a)
        last = len(config.head_widths)
        raw = a @ params[f"head{j}_{last}_w"] + params[f"head{j}_{last}_b"]
        cache["heads"].append(states)
        raws.append(raw)
    stacked = np.stack(raws, axis=1) if raws else np.zeros((inputs.shape[0], 0, config.dim + 1))
    return stacked, cache


def network_backward(params: dict, config: NetConfig, cache: dict, d_raw: np.ndarray) -> dict:
    """Parameter gradients for a batch, given gradients of the raw outputs."""
    grads = {name: np.zeros_like(arr) for name, arr in params.items()}
    d_trunk = np.zeros_like(cache["trunk"])
    for j in range(config.n_anchors):
        states = cache["heads"][j]
        last = len(config.head_widths)
        da = d_raw[:, j, :]
        grads[f"head{j}_{last}_w"] += states[-1].T @ da
        grads[f"head{j}_{last}_b"] += da.sum(axis=0)
        da = da @ params[f"head{j}_{last}_w"].T
        for i in range(len(config.head_widths) - 1, -1, -1):
            da = da * (1.0 - states[i + 1] ** 2)
            grads[f"head{j}_{i}_w"] += states[i].T @ da
            grads[f"head{j}_{i}_b"] += da.sum(axis=0)
            da = da @ params[f"head{j}_{i}_w"].T
        d_trunk += da
    dh = d_trunk
    for i in range(config.highway_layers - 1, -1, -1):
        x, t, g = cache["hw"][i]
        dg = dh * (t - x)
        dt = dh * g
        dx = dh * (1.0 - g)
        dt_pre = dt * (1.0 - t**2)
        grads[f"hw{i}_tw"] += x.T @ dt_pre
        grads[f"hw{i}_tb"] += dt_pre.sum(axis=0)
        dx += dt_pre @ params[f"hw{i}_tw"].T
        dg_pre = dg * g * (1.0 - g)
        grads[f"hw{i}_gw"] += x.T @ dg_pre
        grads[f"hw{i}_gb"] += dg_pre.sum(axis=0)
        dx += dg_pre @ params[f"hw{i}_gw"].T
        dh = dx
    for i in range(len(config.input_widths), -1, -1):
        dh = dh * (1.0 - cache["post"][i] ** 2)
        grads[f"in{i}_w"] += cache["pre"][i].T @ dh
        grads[f"in{i}_b"] += dh.sum(axis=0)
        dh = dh @ params[f"in{i}_w"].T
    return grads


def squash_center(scene: Scene, config: NetConfig, start, goal) -> np.ndarray:
    """Pre-activation offsets centering the anchor squash, shape (n, d).

    Absolute mode centers on the scene midpoint (zero offsets); residual
    mode centers on the straight-line anchors, so a zero-output network
    predicts the straight connection and learns detour offsets on top.
    """
    if config.output_mode == "absolute":
        return np.zeros((config.n_anchors, scene.dim))
    straight = straight_line_spline(start, goal, config.n_anchors, 1).anchors
    normalized = (straight - scene.center) / scene.half_extent
    return np.arctanh(np.clip(normalized, -1.0 + 1e-9, 1.0 - 1e-9))


def squash_outputs(scene: Scene, raw, base=None):
    """Map raw head outputs into scene-bounded anchors and (0, 1) weights.

    Returns (anchors, weights, tanh_state); the third element is the tanh
    of the shifted pre-activations, which the backward pass needs.
    """
    dim = scene.dim
    mid = scene.center
    half = scene.half_extent
    shifted = raw[:, :dim] if base is None else raw[:, :dim] + base
    state = np.tanh(shifted)
    anchors = mid + half * state
    weights = _sigmoid_array(raw[:, dim])
    return anchors, weights, state


class MlpNet:
    """Trainable regression network; parameters live in a flat name -> array dict."""

    def __init__(self, config: NetConfig, params: dict | None = None):
        self.config = config
        self.params = params if params is not None else _init_params(config)
        self.spec = _param_spec(config)

    @property
    def parameter_count(self) -> int:
        return sum(arr.size for arr in self.params.values())

    def forward_batch(self, inputs: np.ndarray):
        return network_forward(self.params, self.config, inputs)

    def forward(self, sample: ProblemSample) -> SplinePath:
        """Regressed path for one problem, anchored at its start and goal."""
        inputs = sample.network_input()
        if inputs.shape[0] != self.config.input_dim:
            raise ValueError(
                f"descriptor length {inputs.shape[0]} does not match the"
                f" network input width {self.config.input_dim}"
            )
        raw, _ = self.forward_batch(inputs[None, :])
        base = squash_center(sample.scene, self.config, sample.start, sample.goal)
        anchors, weights, _ = squash_outputs(sample.scene, raw[0], base)
        return SplinePath(
            degree=self.config.degree,
            start=sample.start,
            goal=sample.goal,
            anchors=anchors,
            weights=weights,
        )

    def parameter_vector(self) -> np.ndarray:
        return np.concatenate([self.params[name].ravel() for name, _, _ in self.spec])

    def set_parameter_vector(self, vector: np.ndarray) -> None:
        offset = 0
        for name, shape, _ in self.spec:
            size = int(np.prod(shape))
            self.params[name] = np.asarray(vector[offset : offset + size]).reshape(shape)
            offset += size

    def save(self, path: str) -> None:
        meta = {"version": CHECKPOINT_VERSION, "config": self.config.to_json()}
        np.savez(path, __meta__=json.dumps(meta), **self.params)

    @classmethod
    def load(cls, path: str) -> "MlpNet":
        data = np.load(path, allow_pickle=False)
        meta = json.loads(str(data["__meta__"]))
        if meta["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        config = NetConfig.from_json(meta["config"])
        params = {k: data[k] for k in data.files if k != "__meta__"}
        return cls(config, params)


# training ------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    scene_source: Callable
    steps: int
    batch_size: int
    learning_rate: float
    seed: int
    k_max: int
    n_anchors: int
    degree: int
    cost_params: CostParams
    collide_fraction: float = 0.5
    obstacle_inflation: float = 0.0  # clearance margin on training obstacles only
    final_learning_rate: float | None = None  # geometric decay target; None keeps it flat
    output_mode: str = "absolute"
    train_weight_heads: bool = True  # False freezes spline weights at their logits
    input_widths: tuple = (128, 128)
    trunk_width: int = 256
    highway_layers: int = 4
    head_widths: tuple = (128, 128)
    checkpoint_path: str | None = None
    trace_path: str | None = None
    dim: int = 2


def _sample_batch(config: TrainConfig, step: int) -> list:
    base = config.seed * 1_000_003
    return [
        sample_problem(
            config.scene_source,
            config.collide_fraction,
            base + step * config.batch_size + b,
            n_anchors=config.n_anchors,
            degree=config.degree,
            cost_params=config.cost_params,
            k_max=config.k_max,
        )
        for b in range(config.batch_size)
    ]


def batch_loss_and_grads(
    net: MlpNet,
    batch: list,
    cost_params: CostParams,
    obstacle_inflation: float = 0.0,
    train_weight_heads: bool = True,
):
    """Mean smooth loss over the batch plus parameter gradients.

    The cost gradient with respect to each sample's anchors and weights is
    chained through the output squashing and the network backward pass.
    With an inflation margin, the loss sees grown obstacles: grazing
    equilibria of the smooth cost then sit clear of the real boundaries.
    """
    config = net.config
    inputs = np.stack([sample.network_input() for sample in batch])
    raw, cache = net.forward_batch(inputs)
    dim = config.dim
    d_raw = np.zeros_like(raw)
    losses = np.zeros(len(batch))
    successes = 0
    for b, sample in enumerate(batch):
        base = squash_center(sample.scene, config, sample.start, sample.goal)
        anchors, weights, state = squash_outputs(sample.scene, raw[b], base)
        path = SplinePath(
            degree=net.config.degree,
            start=sample.start,
            goal=sample.goal,
            anchors=anchors,
            weights=weights,
        )
        scene = inflate_scene(sample.scene, obstacle_inflation)
        breakdown, anchor_grad, weight_grad = cost_mod.loss_and_grad(
            scene, path, cost_params, train_weights=True
        )
        losses[b] = breakdown.total_smooth
        successes += breakdown.exact_collision == 0.0
        half = sample.scene.half_extent
        d_raw[b, :, :dim] = anchor_grad * half[None, :] * (1.0 - state**2)
        if train_weight_heads:
            d_raw[b, :, dim] = weight_grad * weights * (1.0 - weights)
    d_raw /= len(batch)
    grads = network_backward(net.params, config, cache, d_raw)
    return float(losses.mean()), successes / len(batch), grads, losses


def train(config: TrainConfig):
    """Fresh-batch gradient descent on the mean smooth path cost.

    Returns the trained network and the per-step trace of
    (step, mean loss, batch success estimate).  A non-finite loss aborts
    with a diagnostic dump of the offending batch.
    """
    net = MlpNet(
        NetConfig(
            dim=config.dim,
            k_max=config.k_max,
            n_anchors=config.n_anchors,
            degree=config.degree,
            input_widths=config.input_widths,
            trunk_width=config.trunk_width,
            highway_layers=config.highway_layers,
            head_widths=config.head_widths,
            output_mode=config.output_mode,
            seed=config.seed,
        )
    )
    adam = {
        name: AdamState(arr.shape, 0.9, 0.999, 1e-8) for name, arr in net.params.items()
    }
    trace = []
    for step in range(config.steps):
        batch = _sample_batch(config, step)
        mean_loss, success_rate, grads, losses = batch_loss_and_grads(
            net,
            batch,
            config.cost_params,
            config.obstacle_inflation,
            config.train_weight_heads,
        )
        if not np.isfinite(mean_loss):
            _dump_diagnostic_batch(config, step, batch, losses)
            raise NumericError(f"non-finite training loss at step {step}")
        trace.append((step, mean_loss, success_rate))
        rate = _step_rate(config, step)
        if rate != 0.0:
            for name in net.params:
                net.params[name] = net.params[name] - rate * adam[name].step(grads[name])
    if config.trace_path:
        write_trace(trace, config.trace_path)
    if config.checkpoint_path:
        net.save(config.checkpoint_path)
    return net, trace


def _step_rate(config: TrainConfig, step: int) -> float:
    if config.final_learning_rate is None or config.steps <= 1 or config.learning_rate == 0.0:
        return config.learning_rate
    fraction = step / (config.steps - 1)
    return config.learning_rate * (config.final_learning_rate / config.learning_rate) ** fraction


def _dump_diagnostic_batch(config: TrainConfig, step: int, batch, losses) -> None:
    path = (config.checkpoint_path or "train") + f".diagnostic.step{step}.json"
    payload = {
        "step": step,
        "losses": [float(v) for v in losses],
        "problems": [
            {
                "scene": scene_to_json(s.scene),
                "start": s.start.tolist(),
                "goal": s.goal.tolist(),
                "straight_line_collides": s.straight_line_collides,
            }
            for s in batch
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)


def write_trace(trace: list, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "mean_loss", "success_rate_estimate"])
        for row in trace:
            writer.writerow([row[0], repr(row[1]), repr(row[2])])


# evaluation ----------------------------------------------------------------------


def evaluate(net, problems: list, cost_params: CostParams) -> dict:
    """Success rate, mean length ratio on successes, and forward-pass time.

    Success means zero exact collision cost on a sampling twice as fine as
    the cost step (guards against inter-sample tunneling); the length ratio
    divides by the straight start-to-goal distance.
    """
    if not problems:
        raise ValueError("evaluation needs at least one problem")
    dense = CostParams(step=cost_params.step / 2.0, safe_distance=cost_params.safe_distance)
    successes = 0
    ratios = []
    seconds = []
    records = []
    for sample in problems:
        begin = time.perf_counter()
        path = net.forward(sample)
        seconds.append(time.perf_counter() - begin)
        breakdown = cost_mod.total_loss(sample.scene, path, dense)
        ok = breakdown.exact_collision == 0.0
        successes += ok
        straight = float(np.linalg.norm(sample.goal - sample.start))
        ratio = breakdown.length / straight if ok and straight > 0.0 else None
        if ratio is not None:
            ratios.append(ratio)
        records.append({"success": bool(ok), "length": breakdown.length, "ratio": ratio})
    return {
        "count": len(problems),
        "success_rate": successes / len(problems),
        "mean_length_ratio": float(np.mean(ratios)) if ratios else None,
        "mean_inference_s": float(np.mean(seconds)),
        "records": records,
    }


# verification hook ---------------------------------------------------------------


def composed_loss_fn(net: MlpNet, sample: ProblemSample, cost_params: CostParams):
    """(objective, initial vector) over the flat network parameters.

    The objective runs the dtype-generic forward pass and the generic cost
    route, so the tape engine can differentiate the full composition for
    gradient checking; on plain floats it evaluates fast for finite
    differences.
    """
    config = net.config
    spec = net.spec
    inputs = sample.network_input()[None, :]
    template = straight_line_spline(
        sample.start, sample.goal, config.n_anchors, config.degree
    )

    def objective(xs):
        tracked = len(xs) > 0 and isinstance(xs[0], ad.AdScalar)
        dtype = object if tracked else float
        params = {}
        offset = 0
        for name, shape, _ in spec:
            size = int(np.prod(shape))
            params[name] = np.array(xs[offset : offset + size], dtype=dtype).reshape(shape)
            offset += size
        raw, _ = network_forward(params, config, inputs)
        base = squash_center(sample.scene, config, sample.start, sample.goal)
        anchors, weights, _ = squash_outputs(sample.scene, raw[0], base)
        flat = [*anchors.ravel(), *weights.ravel()] if tracked else [
            *np.asarray(anchors, float).ravel(),
            *np.asarray(weights, float).ravel(),
        ]
        return cost_mod.generic_smooth_loss(
            sample.scene, template, cost_params, flat, train_weights=True
        )

    return objective, net.parameter_vector()
