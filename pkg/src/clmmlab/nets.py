"""Dense dueling Q-network with hand-rolled backprop.

No autograd framework: the network is a fixed two-layer ReLU trunk with a
scalar value head and a per-action advantage head,

    q(s, a) = V(s) + A(s, a) - mean_a' A(s, a'),

so mean_a q(s, a) = V(s) identically. Gradients of the squared TD loss are
derived analytically and checked against central finite differences in the
test suite. Everything is float64 numpy; training is deterministic given
the init seed and data order.
"""

import json
import math
import warnings
from dataclasses import dataclass, fields
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

CHECKPOINT_FORMAT = "dueling-mlp-v1"

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class CheckpointError(ValueError):
    """Checkpoint file is malformed or does not match the expected shapes."""


class TrainingDiverged(RuntimeError):
    """Non-finite loss or gradients encountered."""


@dataclass
class NetworkParams:
    """Weights of the dueling MLP; biases are 1-d, weights are (in, out)."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    wv: np.ndarray
    bv: np.ndarray
    wa: np.ndarray
    ba: np.ndarray

    def names(self) -> List[str]:
        return [f.name for f in fields(self)]

    def arrays(self) -> List[Tuple[str, np.ndarray]]:
        return [(name, getattr(self, name)) for name in self.names()]

    @property
    def input_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.wa.shape[1]

    def copy(self) -> "NetworkParams":
        return NetworkParams(**{n: a.copy() for n, a in self.arrays()})

    def validate(self) -> None:
        h1 = self.w1.shape[1]
        h2 = self.w2.shape[1]
        expected = {
            "w1": (self.w1.shape[0], h1), "b1": (h1,),
            "w2": (h1, h2), "b2": (h2,),
            "wv": (h2, 1), "bv": (1,),
            "wa": (h2, self.wa.shape[1]), "ba": (self.wa.shape[1],),
        }
        for name, arr in self.arrays():
            if arr.shape != expected[name]:
                raise CheckpointError(
                    f"parameter {name} has shape {arr.shape}, expected {expected[name]}"
                )
            if not np.all(np.isfinite(arr)):
                raise CheckpointError(f"parameter {name} contains non-finite values")


def init_params(
    input_dim: int,
    n_outputs: int,
    hidden: Tuple[int, int] = (64, 64),
    seed: int = 0,
) -> NetworkParams:
    """Uniform fan-in init, zero biases, seeded for reproducibility."""
    rng = np.random.default_rng(seed)

    def layer(n_in, n_out):
        bound = 1.0 / math.sqrt(n_in)
        return rng.uniform(-bound, bound, size=(n_in, n_out))

    h1, h2 = hidden
    return NetworkParams(
        w1=layer(input_dim, h1), b1=np.zeros(h1),
        w2=layer(h1, h2), b2=np.zeros(h2),
        wv=layer(h2, 1), bv=np.zeros(1),
        wa=layer(h2, n_outputs), ba=np.zeros(n_outputs),
    )


def _forward_all(params: NetworkParams, x: np.ndarray):
    z1 = x @ params.w1 + params.b1
    h1 = np.maximum(z1, 0.0)
    z2 = h1 @ params.w2 + params.b2
    h2 = np.maximum(z2, 0.0)
    v = h2 @ params.wv + params.bv
    adv = h2 @ params.wa + params.ba
    q = v + adv - adv.mean(axis=1, keepdims=True)
    return q, v, adv, (z1, h1, z2, h2)


def forward(params: NetworkParams, s: np.ndarray):
    """Q-values for a single state or a batch.

    Returns (q, v, adv); for a single 1-d input the outputs are squeezed.
    """
    s = np.asarray(s, dtype=float)
    single = s.ndim == 1
    x = s[None, :] if single else s
    if x.shape[1] != params.input_dim:
        raise CheckpointError(
            f"input dim {x.shape[1]} does not match network input {params.input_dim}"
        )
    q, v, adv, _ = _forward_all(params, x)
    if single:
        return q[0], float(v[0, 0]), adv[0]
    return q, v[:, 0], adv


def loss_and_gradients(
    params: NetworkParams,
    states: np.ndarray,
    actions: np.ndarray,
    targets: np.ndarray,
) -> Tuple[float, NetworkParams]:
    """Mean squared TD error and its analytic gradients.

    loss = mean_i (q(s_i, a_i) - y_i)^2. The gradient container reuses
    NetworkParams field-for-field.
    """
    x = np.asarray(states, dtype=float)
    a = np.asarray(actions, dtype=int)
    y = np.asarray(targets, dtype=float)
    if x.ndim != 2 or len(x) == 0:
        raise ValueError("states must be a non-empty (batch, dim) array")
    if len(a) != len(x) or len(y) != len(x):
        raise ValueError("states, actions, targets must have equal length")
    n = len(x)
    q, v, adv, (z1, h1, z2, h2) = _forward_all(params, x)
    q_sel = q[np.arange(n), a]
    err = q_sel - y
    loss = float(np.mean(err * err))

    # d loss / d q_sel, scattered back over the action axis
    dq = np.zeros_like(q)
    dq[np.arange(n), a] = 2.0 * err / n
    dv = dq.sum(axis=1, keepdims=True)
    dadv = dq - dq.mean(axis=1, keepdims=True)

    dwv = h2.T @ dv
    dbv = dv.sum(axis=0)
    dwa = h2.T @ dadv
    dba = dadv.sum(axis=0)
    dh2 = dv @ params.wv.T + dadv @ params.wa.T
    dz2 = dh2 * (z2 > 0.0)
    dw2 = h1.T @ dz2
    db2 = dz2.sum(axis=0)
    dh1 = dz2 @ params.w2.T
    dz1 = dh1 * (z1 > 0.0)
    dw1 = x.T @ dz1
    db1 = dz1.sum(axis=0)

    grads = NetworkParams(w1=dw1, b1=db1, w2=dw2, b2=db2,
                          wv=dwv, bv=dbv, wa=dwa, ba=dba)
    return loss, grads


def global_norm(grads: NetworkParams) -> float:
    total = 0.0
    for _, g in grads.arrays():
        total += float(np.sum(g * g))
    return math.sqrt(total)


def clip_by_global_norm(grads: NetworkParams, max_norm: float) -> NetworkParams:
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return grads
    scale = max_norm / norm
    return NetworkParams(**{n: g * scale for n, g in grads.arrays()})


@dataclass
class OptimizerState:
    """Adam accumulators plus the fixed hyperparameters."""

    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    step: int = 0
    learning_rate: float = 1e-4
    clip_norm: float = 0.7

    @classmethod
    def for_params(cls, params: NetworkParams, learning_rate: float = 1e-4,
                   clip_norm: float = 0.7) -> "OptimizerState":
        return cls(
            m={n: np.zeros_like(a) for n, a in params.arrays()},
            v={n: np.zeros_like(a) for n, a in params.arrays()},
            step=0, learning_rate=learning_rate, clip_norm=clip_norm,
        )


def apply_update(
    params: NetworkParams,
    opt: OptimizerState,
    grads: NetworkParams,
) -> NetworkParams:
    """Clip by global norm, then one Adam step. Mutates `opt`, returns new params."""
    for name, g in grads.arrays():
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(f"non-finite gradient in {name}")
    grads = clip_by_global_norm(grads, opt.clip_norm)
    opt.step += 1
    t = opt.step
    out = {}
    for name, p in params.arrays():
        g = getattr(grads, name)
        opt.m[name] = ADAM_BETA1 * opt.m[name] + (1.0 - ADAM_BETA1) * g
        opt.v[name] = ADAM_BETA2 * opt.v[name] + (1.0 - ADAM_BETA2) * (g * g)
        m_hat = opt.m[name] / (1.0 - ADAM_BETA1 ** t)
        v_hat = opt.v[name] / (1.0 - ADAM_BETA2 ** t)
        out[name] = p - opt.learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return NetworkParams(**out)


def soft_update(target: NetworkParams, local: NetworkParams,
                rate: float = 0.01) -> NetworkParams:
    """target' = rate * local + (1 - rate) * target, elementwise."""
    out = {}
    for name, tgt in target.arrays():
        loc = getattr(local, name)
        if loc.shape != tgt.shape:
            raise CheckpointError(
                f"shape mismatch in {name}: {loc.shape} vs {tgt.shape}"
            )
        out[name] = rate * loc + (1.0 - rate) * tgt
    return NetworkParams(**out)


def _encode_array(arr: np.ndarray) -> Dict:
    return {"shape": list(arr.shape), "data": arr.reshape(-1).tolist()}


def _decode_array(name: str, blob) -> np.ndarray:
    if not isinstance(blob, dict) or "shape" not in blob or "data" not in blob:
        raise CheckpointError(f"field {name} is not an array record")
    shape = tuple(blob["shape"])
    data = np.asarray(blob["data"], dtype=float)
    expected = int(np.prod(shape)) if shape else 1
    if data.size != expected:
        raise CheckpointError(
            f"field {name}: {data.size} values do not fill shape {shape}"
        )
    return data.reshape(shape)


def save_checkpoint(
    path: str,
    params: NetworkParams,
    opt: Optional[OptimizerState] = None,
    metadata: Optional[Dict] = None,
) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "metadata": metadata or {},
        "params": {n: _encode_array(a) for n, a in params.arrays()},
    }
    if opt is not None:
        doc["optimizer"] = {
            "step": opt.step,
            "learning_rate": opt.learning_rate,
            "clip_norm": opt.clip_norm,
            "m": {n: _encode_array(a) for n, a in opt.m.items()},
            "v": {n: _encode_array(a) for n, a in opt.v.items()},
        }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(
    path: str,
    expect_config_hash: Optional[str] = None,
) -> Tuple[NetworkParams, Optional[OptimizerState], Dict]:
    """Read a checkpoint; a metadata hash mismatch warns but still loads."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise CheckpointError(f"not valid JSON: {e}") from None
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"unknown checkpoint format {doc.get('format')!r}")
    raw = doc.get("params")
    if not isinstance(raw, dict):
        raise CheckpointError("missing params section")
    names = [f.name for f in fields(NetworkParams)]
    missing = [n for n in names if n not in raw]
    if missing:
        raise CheckpointError(f"missing parameter fields: {missing}")
    params = NetworkParams(**{n: _decode_array(n, raw[n]) for n in names})
    params.validate()
    opt = None
    if "optimizer" in doc:
        blob = doc["optimizer"]
        opt = OptimizerState(
            m={n: _decode_array(f"optimizer.m.{n}", blob["m"][n]) for n in names},
            v={n: _decode_array(f"optimizer.v.{n}", blob["v"][n]) for n in names},
            step=int(blob["step"]),
            learning_rate=float(blob["learning_rate"]),
            clip_norm=float(blob["clip_norm"]),
        )
    metadata = doc.get("metadata", {})
    if expect_config_hash is not None:
        found = metadata.get("config_hash")
        if found != expect_config_hash:
            warnings.warn(
                f"checkpoint config hash {found!r} does not match expected "
                f"{expect_config_hash!r}; loading anyway",
                stacklevel=2,
            )
    return params, opt, metadata
