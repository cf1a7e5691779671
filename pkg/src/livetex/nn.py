"""Minimal neural core: LSTM, linear, dropout, ReLU, log-softmax, with
hand-derived gradients, plus the two sequence-classifier architectures.

  single: dropout(0.10) -> LSTM(d -> 480) -> dropout(0.50) -> linear(480 -> 2)
          producing logits;
  dual:   LSTM(d -> 240) -> dropout(0.40) -> LSTM(240 -> 240)
          -> linear(240 -> 240) -> ReLU -> linear(240 -> 2) -> log-softmax.

The classification head reads the final-timestep hidden state. The LSTM is
the standard forget-gate formulation with sigmoid gates and tanh cell
nonlinearities; forget biases start at 1. All math is plain numpy; batches
are processed time-major internally. Class order is (attack, bonafide).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import HistogramSpec, NormStats

CLASS_ORDER = ("attack", "bonafide")
CHECKPOINT_MAGIC = b"LTCK"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Unreadable or inconsistent model checkpoint."""


@dataclass
class ModelConfig:
    variant: str  # "single" | "dual"
    input_dim: int
    hidden: int | None = None  # per-variant default when None
    dropout: tuple[float, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.variant not in ("single", "dual"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.hidden is None:
            self.hidden = 480 if self.variant == "single" else 240
        if self.dropout is None:
            self.dropout = (0.10, 0.50) if self.variant == "single" else (0.40,)
        expected = 2 if self.variant == "single" else 1
        if len(self.dropout) != expected:
            raise ValueError(f"{self.variant} variant takes {expected} dropout rate(s)")
        for p in self.dropout:
            if not 0.0 <= p < 1.0:
                raise ValueError(f"dropout rate {p} outside [0, 1)")

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "input_dim": self.input_dim,
            "hidden": self.hidden,
            "dropout": list(self.dropout),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            variant=d["variant"],
            input_dim=d["input_dim"],
            hidden=d["hidden"],
            dropout=tuple(d["dropout"]),
            seed=d["seed"],
        )


# ---------------------------------------------------------------------------
# Primitive layers
# ---------------------------------------------------------------------------

def linear_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    if x.shape[-1] != w.shape[0]:
        raise ValueError(f"linear input {x.shape[-1]} != weight rows {w.shape[0]}")
    return x @ w + b


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def log_softmax_forward(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=-1, keepdims=True)
    shifted = z - m
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def dropout_forward(
    x: np.ndarray, rate: float, train: bool, rng: np.random.Generator | None
) -> tuple[np.ndarray, np.ndarray | None]:
    """Inverted dropout: zero with probability ``rate``, survivors scaled by
    1/(1-rate). Inference mode is exactly the identity (mask None)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate {rate} outside [0, 1)")
    if not train or rate == 0.0:
        mask = np.ones_like(x) if train else None
        return (x * mask if mask is not None else x), mask
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def nll_loss(log_probs: np.ndarray, labels) -> float:
    """Mean negative log-likelihood of the true classes."""
    log_probs = np.atleast_2d(log_probs)
    labels = np.atleast_1d(labels)
    if np.any((labels < 0) | (labels >= log_probs.shape[1])):
        raise ValueError("label outside class range")
    picked = log_probs[np.arange(log_probs.shape[0]), labels]
    return float(-picked.mean())


# ---------------------------------------------------------------------------
# LSTM layer
# ---------------------------------------------------------------------------

def lstm_init(rng: np.random.Generator, input_dim: int, hidden: int) -> dict[str, np.ndarray]:
    """Uniform init in +-1/sqrt(hidden); forget-gate biases start at 1."""
    k = 1.0 / np.sqrt(hidden)
    w_x = rng.uniform(-k, k, size=(input_dim, 4 * hidden))
    w_h = rng.uniform(-k, k, size=(hidden, 4 * hidden))
    b = rng.uniform(-k, k, size=4 * hidden)
    b[hidden : 2 * hidden] = 1.0  # forget slab
    return {"w_x": w_x, "w_h": w_h, "b": b}


def lstm_forward(x: np.ndarray, w_x: np.ndarray, w_h: np.ndarray, b: np.ndarray):
    """Run the recurrence over time-major input (n, B, d_in) from zero state.

    Returns the hidden sequence (n, B, h) and the cache backward needs.
    Gate slab order along the last axis: input, forget, output, cell
    (sigmoid gates contiguous so one fused tanh covers the whole slab).
    """
    if x.ndim != 3:
        raise ValueError(f"expected (time, batch, features) input, got {x.shape}")
    if x.shape[2] != w_x.shape[0]:
        raise ValueError(f"input width {x.shape[2]} != weight rows {w_x.shape[0]}")
    if not np.isfinite(x).all():
        raise ValueError("non-finite values in LSTM input")
    n, batch, _ = x.shape
    hidden = w_h.shape[0]
    h3 = 3 * hidden

    # input contribution for every timestep in one GEMM
    z_x = (x.reshape(n * batch, -1) @ w_x).reshape(n, batch, 4 * hidden)

    gates = np.empty((n, batch, 4 * hidden))
    c_all = np.empty((n, batch, hidden))
    tanh_c = np.empty((n, batch, hidden))
    h_all = np.empty((n, batch, hidden))
    h_prev = np.zeros((batch, hidden))
    c_prev = np.zeros((batch, hidden))
    c_prev_all = np.empty((n, batch, hidden))
    z = np.empty((batch, 4 * hidden))

    for t in range(n):
        np.matmul(h_prev, w_h, out=z)
        z += z_x[t]
        z += b
        z[:, :h3] *= 0.5
        gate = gates[t]
        np.tanh(z, out=gate)
        # sigmoid(v) = 0.5 + 0.5*tanh(v/2) for the three gate slabs
        gate[:, :h3] *= 0.5
        gate[:, :h3] += 0.5
        i = gate[:, :hidden]
        f = gate[:, hidden : 2 * hidden]
        o = gate[:, 2 * hidden : h3]
        g = gate[:, h3:]
        c_prev_all[t] = c_prev
        c = c_all[t]
        np.multiply(f, c_prev, out=c)
        c += i * g
        tc = tanh_c[t]
        np.tanh(c, out=tc)
        np.multiply(o, tc, out=h_all[t])
        h_prev, c_prev = h_all[t], c

    cache = {
        "x": x, "gates": gates, "c": c_all, "c_prev": c_prev_all,
        "tanh_c": tanh_c, "h": h_all, "w_x": w_x, "w_h": w_h,
    }
    return h_all, cache


def lstm_backward(cache: dict, dh_out: np.ndarray):
    """Backprop through time. ``dh_out`` is the gradient w.r.t. every
    timestep's hidden output, shape (n, B, h). Returns (dx, grads)."""
    x, gates = cache["x"], cache["gates"]
    c_prev, tanh_c = cache["c_prev"], cache["tanh_c"]
    w_x, w_h = cache["w_x"], cache["w_h"]
    n, batch, hidden = tanh_c.shape

    dz_all = np.empty((n, batch, 4 * hidden))
    dh_next = np.zeros((batch, hidden))
    dc_next = np.zeros((batch, hidden))

    h3 = 3 * hidden
    for t in range(n - 1, -1, -1):
        i = gates[t, :, :hidden]
        f = gates[t, :, hidden : 2 * hidden]
        o = gates[t, :, 2 * hidden : h3]
        g = gates[t, :, h3:]

        dh = dh_out[t] + dh_next
        do = dh * tanh_c[t]
        dc = dc_next + dh * o * (1.0 - tanh_c[t] ** 2)
        di = dc * g
        df = dc * c_prev[t]
        dg = dc * i
        dc_next = dc * f

        dz = dz_all[t]
        dz[:, :hidden] = di * i * (1.0 - i)
        dz[:, hidden : 2 * hidden] = df * f * (1.0 - f)
        dz[:, 2 * hidden : h3] = do * o * (1.0 - o)
        dz[:, h3:] = dg * (1.0 - g ** 2)
        dh_next = dz @ w_h.T

    # weight/input gradients batched over all timesteps
    dz_flat = dz_all.reshape(n * batch, 4 * hidden)
    h_seq = cache["h"]
    h_prev_flat = np.concatenate(
        [np.zeros((1, batch, hidden)), h_seq[:-1]]
    ).reshape(n * batch, hidden)
    d_wx = x.reshape(n * batch, -1).T @ dz_flat
    d_wh = h_prev_flat.T @ dz_flat
    d_b = dz_flat.sum(axis=0)
    dx = (dz_flat @ w_x.T).reshape(x.shape)

    return dx, {"w_x": d_wx, "w_h": d_wh, "b": d_b}


# ---------------------------------------------------------------------------
# Full models
# ---------------------------------------------------------------------------

def _linear_init(rng: np.random.Generator, fan_in: int, fan_out: int):
    k = 1.0 / np.sqrt(fan_in)
    return {
        "w": rng.uniform(-k, k, size=(fan_in, fan_out)),
        "b": rng.uniform(-k, k, size=fan_out),
    }


class Model:
    """Sequence classifier over (B, n, d) inputs; outputs one row of two
    values per sample: logits for the single variant, log-probabilities for
    the dual variant."""

    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        d, h = config.input_dim, config.hidden
        self.params: dict[str, np.ndarray] = {}
        if config.variant == "single":
            self._add("lstm", lstm_init(rng, d, h))
            self._add("head", _linear_init(rng, h, 2))
        else:
            self._add("lstm1", lstm_init(rng, d, h))
            self._add("lstm2", lstm_init(rng, h, h))
            self._add("fc1", _linear_init(rng, h, h))
            self._add("fc2", _linear_init(rng, h, 2))

    def _add(self, prefix: str, tensors: dict[str, np.ndarray]):
        for name, value in tensors.items():
            self.params[f"{prefix}.{name}"] = value

    def _p(self, prefix: str):
        return (
            self.params[f"{prefix}.w_x"],
            self.params[f"{prefix}.w_h"],
            self.params[f"{prefix}.b"],
        )

    def forward(self, x: np.ndarray, train: bool = False, rng=None):
        """Returns (out, cache); ``out`` is (B, 2)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3 or x.shape[2] != self.config.input_dim:
            raise ValueError(
                f"expected (batch, time, {self.config.input_dim}) input, got {x.shape}"
            )
        xt = np.ascontiguousarray(np.swapaxes(x, 0, 1))  # time-major
        cache: dict = {"train": train}

        if self.config.variant == "single":
            p_in, p_out = self.config.dropout
            xd, cache["mask_in"] = dropout_forward(xt, p_in, train, rng)
            h_seq, cache["lstm"] = lstm_forward(xd, *self._p("lstm"))
            h_last = h_seq[-1]
            hd, cache["mask_out"] = dropout_forward(h_last, p_out, train, rng)
            cache["head_in"] = hd
            out = linear_forward(hd, self.params["head.w"], self.params["head.b"])
            cache["logits"] = out
        else:
            (p_mid,) = self.config.dropout
            h1, cache["lstm1"] = lstm_forward(xt, *self._p("lstm1"))
            h1d, cache["mask_mid"] = dropout_forward(h1, p_mid, train, rng)
            h2, cache["lstm2"] = lstm_forward(h1d, *self._p("lstm2"))
            cache["fc1_in"] = h2[-1]
            z1 = linear_forward(h2[-1], self.params["fc1.w"], self.params["fc1.b"])
            cache["z1"] = z1
            a1 = relu_forward(z1)
            cache["a1"] = a1
            logits = linear_forward(a1, self.params["fc2.w"], self.params["fc2.b"])
            cache["logits"] = logits
            out = log_softmax_forward(logits)
        cache["out"] = out
        return out, cache

    def loss(self, out: np.ndarray, labels) -> float:
        """Mean NLL; the single variant's logits go through log-softmax first."""
        log_probs = out if self.config.variant == "dual" else log_softmax_forward(out)
        return nll_loss(log_probs, labels)

    def backward(self, cache: dict, labels) -> dict[str, np.ndarray]:
        """Gradients of the mean NLL over the batch w.r.t. every parameter."""
        labels = np.atleast_1d(labels)
        logits = cache["logits"]
        batch = logits.shape[0]
        probs = np.exp(log_softmax_forward(logits))
        dlogits = probs.copy()
        dlogits[np.arange(batch), labels] -= 1.0
        dlogits /= batch

        grads: dict[str, np.ndarray] = {}
        if self.config.variant == "single":
            hd = cache["head_in"]
            grads["head.w"] = hd.T @ dlogits
            grads["head.b"] = dlogits.sum(axis=0)
            dhd = dlogits @ self.params["head.w"].T
            if cache["mask_out"] is not None:
                dhd = dhd * cache["mask_out"]
            n = cache["lstm"]["x"].shape[0]
            dh_seq = np.zeros_like(cache["lstm"]["h"])
            dh_seq[n - 1] = dhd
            dx, g = lstm_backward(cache["lstm"], dh_seq)
            for k, v in g.items():
                grads[f"lstm.{k}"] = v
            if cache["mask_in"] is not None:
                dx = dx * cache["mask_in"]
            grads["_input"] = np.swapaxes(dx, 0, 1)
        else:
            a1 = cache["a1"]
            grads["fc2.w"] = a1.T @ dlogits
            grads["fc2.b"] = dlogits.sum(axis=0)
            da1 = dlogits @ self.params["fc2.w"].T
            dz1 = da1 * (cache["z1"] > 0)
            grads["fc1.w"] = cache["fc1_in"].T @ dz1
            grads["fc1.b"] = dz1.sum(axis=0)
            dh2_last = dz1 @ self.params["fc1.w"].T
            n = cache["lstm2"]["x"].shape[0]
            dh2 = np.zeros_like(cache["lstm2"]["h"])
            dh2[n - 1] = dh2_last
            dh1d, g2 = lstm_backward(cache["lstm2"], dh2)
            for k, v in g2.items():
                grads[f"lstm2.{k}"] = v
            if cache["mask_mid"] is not None:
                dh1d = dh1d * cache["mask_mid"]
            dx, g1 = lstm_backward(cache["lstm1"], dh1d)
            for k, v in g1.items():
                grads[f"lstm1.{k}"] = v
            grads["_input"] = np.swapaxes(dx, 0, 1)
        return grads

    def scores(self, x: np.ndarray) -> np.ndarray:
        """Bonafide probability per sample, inference mode."""
        out, _ = self.forward(x, train=False)
        log_probs = out if self.config.variant == "dual" else log_softmax_forward(out)
        return np.exp(log_probs[:, CLASS_ORDER.index("bonafide")])


# ---------------------------------------------------------------------------
# Checkpoint format: magic, version, json header, f32 LE tensors in order
# ---------------------------------------------------------------------------

def save_checkpoint(
    path,
    model: Model,
    norm: NormStats,
    spec: HistogramSpec,
    frames_per_sample: int,
    extra: dict | None = None,
) -> None:
    """Self-contained inference artifact: config, weights, normalization
    stats, and the feature spec the model was trained against."""
    tensors = dict(model.params)
    tensors["norm.mu"] = norm.mu
    tensors["norm.sigma"] = norm.sigma
    header = {
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "class_order": list(CLASS_ORDER),
        "params": [{"name": k, "shape": list(v.shape)} for k, v in tensors.items()],
        "norm_fitted_on": norm.fitted_on,
        "feature_spec": spec.to_dict(),
        "frames_per_sample": frames_per_sample,
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<HI", CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for value in tensors.values():
            fh.write(np.ascontiguousarray(value, dtype="<f4").tobytes())


def load_checkpoint(path) -> tuple[Model, NormStats, HistogramSpec, int, dict]:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 10 or data[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a model checkpoint")
    version, hlen = struct.unpack_from("<HI", data, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(data[10 : 10 + hlen].decode("utf-8"))
    model = Model(ModelConfig.from_dict(header["config"]))

    offset = 10 + hlen
    tensors: dict[str, np.ndarray] = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 4 * count
        if end > len(data):
            raise CheckpointError(f"{path}: truncated tensor {entry['name']}")
        tensors[entry["name"]] = (
            np.frombuffer(data, dtype="<f4", count=count, offset=offset)
            .astype(np.float64)
            .reshape(shape)
        )
        offset = end
    if offset != len(data):
        raise CheckpointError(f"{path}: {len(data) - offset} trailing bytes")

    for name in model.params:
        if name not in tensors:
            raise CheckpointError(f"{path}: missing tensor {name}")
        if tensors[name].shape != model.params[name].shape:
            raise CheckpointError(f"{path}: shape mismatch for {name}")
        model.params[name] = tensors[name]
    # f32 storage can underflow tiny stds to 0; degenerate columns are
    # signal-free, so fall back to 1 exactly like the fitting rule.
    sigma = tensors["norm.sigma"]
    norm = NormStats(
        mu=tensors["norm.mu"],
        sigma=np.where(sigma <= 0.0, 1.0, sigma),
        fitted_on=header.get("norm_fitted_on", ""),
    )
    spec = HistogramSpec.from_dict(header["feature_spec"])
    return model, norm, spec, header["frames_per_sample"], header.get("extra", {})
