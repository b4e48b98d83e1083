"""Pedestrian trajectory prediction.

Two predictors share the :class:`PredictedTrajectory` output type:

* :func:`predict_constant_velocity` -- repeats the last observed displacement.
* :func:`predict_srlstm` -- a small recurrent predictor in which each pedestrian's
  LSTM cell state is refined with messages from nearby pedestrians before the
  next displacement is decoded.

The recurrent model consumes frame-to-frame displacements, expressed in multiples
of ``model.unit`` metres on both the input and the decoded output. Refinement for
pedestrian ``i`` is::

    c_i <- c_i + sum_j a_ij * tanh(W_msg [h_j; p_j - p_i] + b_msg)

over neighbours ``j != i`` within ``neighbor_radius``, where ``a_ij`` is a softmax
over those neighbours of ``att_scale * h_i.h_j - att_dist * |p_j - p_i|``. After
each refinement round ``h = o * tanh(c)`` with the step's output gate ``o``.

Gradients are computed by explicit backpropagation through time, including the
autoregressive feedback of predicted displacements and positions.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .scenario import PedestrianTrack, Point2, split_obs_pred, InsufficientFrames

log = logging.getLogger(__name__)

CHECKPOINT_SCHEMA = "ecas.srlstm/v1"


@dataclass(frozen=True)
class PredictedTrajectory:
    ped_id: int
    waypoints: tuple[tuple[float, Point2], ...]
    frame_interval: float = 0.4

    def __post_init__(self):
        object.__setattr__(self, "waypoints",
                           tuple((float(t), Point2(float(p[0]), float(p[1]))) for t, p in self.waypoints))
        ts = [t for t, _ in self.waypoints]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("waypoint time offsets must be strictly increasing")

    def __len__(self):
        return len(self.waypoints)

    @property
    def positions(self) -> np.ndarray:
        return np.array([p for _, p in self.waypoints], dtype=float).reshape(-1, 2)


def _trajectory(ped_id, positions, frame_interval) -> PredictedTrajectory:
    wps = tuple(((k + 1) * frame_interval, Point2(float(x), float(y)))
                for k, (x, y) in enumerate(positions))
    return PredictedTrajectory(ped_id, wps, frame_interval)


def predict_constant_velocity(history: PedestrianTrack, pred_len: int = 12) -> PredictedTrajectory:
    if len(history) < 2:
        raise ValueError(f"pedestrian {history.ped_id}: constant-velocity prediction needs >= 2 frames")
    (x0, y0), (x1, y1) = history.positions[-2:]
    vx, vy = x1 - x0, y1 - y0
    pts = [(x1 + k * vx, y1 + k * vy) for k in range(1, pred_len + 1)]
    return _trajectory(history.ped_id, pts, history.frame_interval)


# -- metrics -----------------------------------------------------------------

def _pair(pred: PredictedTrajectory, truth: PedestrianTrack):
    a = pred.positions
    b = np.array(truth.positions, dtype=float).reshape(-1, 2)
    if len(a) != len(b) or len(a) == 0:
        raise ValueError(f"length mismatch: {len(a)} predicted vs {len(b)} ground-truth steps")
    return a, b


def mad(pred: PredictedTrajectory, truth: PedestrianTrack) -> float:
    """Mean Euclidean displacement over all predicted steps."""
    a, b = _pair(pred, truth)
    return float(np.mean(np.hypot(a[:, 0] - b[:, 0], a[:, 1] - b[:, 1])))


def fad(pred: PredictedTrajectory, truth: PedestrianTrack) -> float:
    """Euclidean displacement at the final predicted step."""
    a, b = _pair(pred, truth)
    return float(math.hypot(a[-1, 0] - b[-1, 0], a[-1, 1] - b[-1, 1]))


# -- recurrent model ---------------------------------------------------------

class RecurrentState(NamedTuple):
    h: np.ndarray
    c: np.ndarray


PARAM_NAMES = ("embed_W", "embed_b", "lstm_W", "lstm_b", "msg_W", "msg_b",
               "att_scale", "att_dist", "dec_W", "dec_b")


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class SrLstmModel:
    hidden: int
    embed: int
    neighbor_radius: float = 2.0
    refinement_layers: int = 1
    params: dict = field(default_factory=dict)
    unit: float = 0.1  # metres per model unit, for input and decoded displacements

    def __post_init__(self):
        if self.hidden < 1 or self.embed < 1:
            raise ValueError("hidden and embed sizes must be >= 1")
        if not self.neighbor_radius > 0:
            raise ValueError("neighbor_radius must be positive")
        if not self.unit > 0:
            raise ValueError("unit must be positive")
        if self.refinement_layers < 1:
            raise ValueError("refinement_layers must be >= 1")
        expected = self.shapes()
        if not self.params:
            self.params = {k: np.zeros(s) for k, s in expected.items()}
        for k, s in expected.items():
            if k not in self.params:
                raise ValueError(f"missing parameter {k}")
            arr = np.asarray(self.params[k], dtype=float)
            if arr.shape != s:
                raise ValueError(f"parameter {k} has shape {arr.shape}, expected {s}")
            self.params[k] = arr

    def shapes(self) -> dict:
        H, E = self.hidden, self.embed
        return {
            "embed_W": (E, 2), "embed_b": (E,),
            "lstm_W": (4 * H, E + H), "lstm_b": (4 * H,),
            "msg_W": (H, H + 2), "msg_b": (H,),
            "att_scale": (), "att_dist": (),
            "dec_W": (2, H), "dec_b": (2,),
        }

    @classmethod
    def initialize(cls, hidden: int = 16, embed: int = 8, neighbor_radius: float = 2.0,
                   refinement_layers: int = 1, seed: int = 0, unit: float = 0.1) -> "SrLstmModel":
        """Weights uniform in [-0.1, 0.1]; biases zero except forget-gate bias 1."""
        m = cls(hidden, embed, neighbor_radius, refinement_layers, unit=unit)
        rng = np.random.default_rng(seed)
        for k, s in m.shapes().items():
            if k.endswith("_b"):
                continue
            m.params[k] = rng.uniform(-0.1, 0.1, size=s)
        m.params["lstm_b"][hidden:2 * hidden] = 1.0
        return m

    def copy(self) -> "SrLstmModel":
        return SrLstmModel(self.hidden, self.embed, self.neighbor_radius, self.refinement_layers,
                           {k: v.copy() for k, v in self.params.items()}, self.unit)

    def zero_state(self, n: int | None = None) -> RecurrentState:
        shape = (self.hidden,) if n is None else (n, self.hidden)
        return RecurrentState(np.zeros(shape), np.zeros(shape))


# forward pieces -------------------------------------------------------------

def _cell_forward(model: SrLstmModel, x, h, c):
    p = model.params
    H = model.hidden
    e = (x / model.unit) @ p["embed_W"].T + p["embed_b"]
    xh = np.concatenate([e, h], axis=-1)
    z = xh @ p["lstm_W"].T + p["lstm_b"]
    i = _sigmoid(z[..., :H])
    f = _sigmoid(z[..., H:2 * H])
    o = _sigmoid(z[..., 2 * H:3 * H])
    g = np.tanh(z[..., 3 * H:])
    c1 = f * c + i * g
    h1 = o * np.tanh(c1)
    cache = dict(x=x, xh=xh, c_prev=c, i=i, f=f, o=o, g=g, c1=c1)
    return h1, c1, cache


def lstm_step(model: SrLstmModel, displacement, state: RecurrentState) -> RecurrentState:
    """One gated recurrence update on a displacement (shape (2,) or (N, 2))."""
    x = np.asarray(displacement, dtype=float)
    h, c = np.asarray(state.h, dtype=float), np.asarray(state.c, dtype=float)
    if x.shape[-1] != 2:
        raise ValueError(f"input must have last dimension 2, got {x.shape}")
    if h.shape != c.shape or h.shape[-1] != model.hidden or h.shape[:-1] != x.shape[:-1]:
        raise ValueError(f"state shapes {h.shape}/{c.shape} do not match hidden={model.hidden} "
                         f"and input {x.shape}")
    h1, c1, _ = _cell_forward(model, x, h, c)
    return RecurrentState(h1, c1)


def _refine_forward(model: SrLstmModel, h, c, pos):
    p = model.params
    H = model.hidden
    R = pos[None, :, :] - pos[:, None, :]            # R[i, j] = p_j - p_i
    dist = np.sqrt((R ** 2).sum(-1))
    mask = (dist <= model.neighbor_radius) & ~np.eye(len(pos), dtype=bool)
    Wh, Wr = p["msg_W"][:, :H], p["msg_W"][:, H:]
    msg = np.tanh((h @ Wh.T)[None, :, :] + R @ Wr.T + p["msg_b"])
    S = p["att_scale"] * (h @ h.T) - p["att_dist"] * dist
    S = np.where(mask, S, -np.inf)
    rowmax = np.max(S, axis=1, keepdims=True)
    rowmax = np.where(np.isfinite(rowmax), rowmax, 0.0)
    ex = np.where(mask, np.exp(S - rowmax), 0.0)
    denom = ex.sum(axis=1, keepdims=True)
    a = np.divide(ex, denom, out=np.zeros_like(ex), where=denom > 0)
    c_hat = c + np.einsum("ij,ijh->ih", a, msg)
    cache = dict(h=h, R=R, dist=dist, mask=mask, msg=msg, a=a)
    return c_hat, cache


def attention_weights(model: SrLstmModel, states: Sequence[RecurrentState], positions) -> np.ndarray:
    h = np.array([s.h for s in states], dtype=float).reshape(len(states), model.hidden)
    pos = np.asarray(positions, dtype=float).reshape(len(states), 2)
    _, cache = _refine_forward(model, h, np.zeros_like(h), pos)
    return cache["a"]


def refine_states(model: SrLstmModel, states: Sequence[RecurrentState], positions) -> list[np.ndarray]:
    """One round of neighbour refinement; returns the refined cell vector per pedestrian."""
    if len(states) != len(positions):
        raise ValueError(f"{len(states)} states but {len(positions)} positions")
    if not states:
        return []
    h = np.array([s.h for s in states], dtype=float)
    c = np.array([s.c for s in states], dtype=float)
    if h.shape != (len(states), model.hidden) or c.shape != h.shape:
        raise ValueError("state dimensions do not match the model")
    c_hat, _ = _refine_forward(model, h, c, np.asarray(positions, dtype=float).reshape(-1, 2))
    return list(c_hat)


def _step(model, x, h, c, pos, refine):
    h1, c1, cache = _cell_forward(model, x, h, c)
    rounds = []
    if refine:
        o = cache["o"]
        for _ in range(model.refinement_layers):
            c1, rc = _refine_forward(model, h1, c1, pos)
            h1 = o * np.tanh(c1)
            rc["c_out"] = c1
            rounds.append(rc)
    cache["rounds"] = rounds
    return h1, c1, cache


def _forward(model: SrLstmModel, obs: np.ndarray, pred_len: int, refine: bool = True):
    """obs: (N, T, 2) absolute positions. Returns predicted positions (N, pred_len, 2)."""
    n, T, _ = obs.shape
    h, c = np.zeros((n, model.hidden)), np.zeros((n, model.hidden))
    obs_caches, pred_caches, dec_h = [], [], []
    for t in range(1, T):
        h, c, cache = _step(model, obs[:, t] - obs[:, t - 1], h, c, obs[:, t], refine)
        obs_caches.append(cache)
    p = obs[:, -1]
    out = np.empty((n, pred_len, 2))
    W, b = model.params["dec_W"], model.params["dec_b"]
    for k in range(pred_len):
        d = model.unit * (h @ W.T + b)
        dec_h.append(h)
        p = p + d
        out[:, k] = p
        if k < pred_len - 1:
            h, c, cache = _step(model, d, h, c, p, refine)
            pred_caches.append(cache)
    return out, dict(obs=obs_caches, pred=pred_caches, dec_h=dec_h)


# backward pieces ------------------------------------------------------------

def _refine_backward(model, rc, gc_hat, grads):
    """Backprop through c_hat = c + sum_j a_ij msg_ij. Returns (gh, gc, gpos)."""
    p = model.params
    H = model.hidden
    h, R, dist, mask, msg, a = rc["h"], rc["R"], rc["dist"], rc["mask"], rc["msg"], rc["a"]
    Wh, Wr = p["msg_W"][:, :H], p["msg_W"][:, H:]

    g_a = np.einsum("ih,ijh->ij", gc_hat, msg)
    g_A = a[:, :, None] * gc_hat[:, None, :] * (1.0 - msg ** 2)      # (N, N, H)
    g_Asum_j = g_A.sum(axis=0)                                         # indexed by j
    grads["msg_W"][:, :H] += g_Asum_j.T @ h
    grads["msg_W"][:, H:] += np.einsum("ijh,ijk->hk", g_A, R)
    grads["msg_b"] += g_A.sum(axis=(0, 1))
    gh = g_Asum_j @ Wh
    gR = g_A @ Wr                                                      # (N, N, 2)

    g_S = a * (g_a - np.sum(a * g_a, axis=1, keepdims=True))
    g_S = np.where(mask, g_S, 0.0)
    HH = h @ h.T
    grads["att_scale"] += np.sum(g_S * HH)
    grads["att_dist"] -= np.sum(g_S * dist)
    gh += p["att_scale"] * (g_S @ h + g_S.T @ h)
    g_dist = -p["att_dist"] * g_S
    rhat = np.divide(R, dist[:, :, None], out=np.zeros_like(R), where=dist[:, :, None] > 0)
    gR += g_dist[:, :, None] * rhat

    gpos = gR.sum(axis=0) - gR.sum(axis=1)
    return gh, gc_hat, gpos


def _step_backward(model, cache, gh, gc, grads):
    """Backprop one recurrent step. Returns (gh_prev, gc_prev, gx, gpos)."""
    p = model.params
    E = model.embed
    o = cache["o"]
    go = np.zeros_like(o)
    gpos = 0.0
    for rc in reversed(cache["rounds"]):
        tc = np.tanh(rc["c_out"])
        go += gh * tc
        gc = gc + gh * o * (1.0 - tc ** 2)
        gh, gc, gp = _refine_backward(model, rc, gc, grads)
        gpos = gpos + gp
    tc = np.tanh(cache["c1"])
    go += gh * tc
    gc = gc + gh * o * (1.0 - tc ** 2)
    i, f, g = cache["i"], cache["f"], cache["g"]
    gc_prev = gc * f
    dz = np.concatenate([
        gc * g * i * (1 - i),
        gc * cache["c_prev"] * f * (1 - f),
        go * o * (1 - o),
        gc * i * (1 - g ** 2),
    ], axis=-1)
    grads["lstm_W"] += dz.T @ cache["xh"]
    grads["lstm_b"] += dz.sum(axis=0)
    gxh = dz @ p["lstm_W"]
    ge, gh_prev = gxh[:, :E], gxh[:, E:]
    grads["embed_W"] += ge.T @ (cache["x"] / model.unit)
    grads["embed_b"] += ge.sum(axis=0)
    gx = (ge @ p["embed_W"]) / model.unit
    return gh_prev, gc_prev, gx, gpos


def _backward(model, caches, g_out):
    """Gradients of sum(g_out * predicted positions) w.r.t. every parameter."""
    grads = {k: np.zeros_like(v) for k, v in model.params.items()}
    n, P, _ = g_out.shape
    W = model.params["dec_W"]
    gh = np.zeros((n, model.hidden))
    gc = np.zeros((n, model.hidden))
    gp_carry = np.zeros((n, 2))
    for k in range(P - 1, -1, -1):
        gd = np.zeros((n, 2))
        gp_k = g_out[:, k] + gp_carry
        if k < P - 1:
            gh, gc, gx, gpos = _step_backward(model, caches["pred"][k], gh, gc, grads)
            gd += gx
            gp_k = gp_k + gpos
        gd = model.unit * (gd + gp_k)
        grads["dec_W"] += gd.T @ caches["dec_h"][k]
        grads["dec_b"] += gd.sum(axis=0)
        gh = gh + gd @ W
        gp_carry = gp_k
    for cache in reversed(caches["obs"]):
        gh, gc, _, _ = _step_backward(model, cache, gh, gc, grads)
    return grads


# prediction / training --------------------------------------------------------

def _stack_histories(histories: Sequence[PedestrianTrack]) -> np.ndarray:
    if not histories:
        return np.zeros((0, 0, 2))
    ids = histories[0].frame_ids
    for hst in histories:
        if hst.frame_ids != ids:
            raise ValueError(f"pedestrian {hst.ped_id}: observation frames are not aligned with "
                             f"pedestrian {histories[0].ped_id}")
    if len(ids) < 2:
        raise ValueError("recurrent prediction needs >= 2 observed frames")
    return np.array([hst.positions for hst in histories], dtype=float)


def predict_srlstm(model: SrLstmModel, histories: Sequence[PedestrianTrack], pred_len: int = 12,
                   refine: bool = True) -> list[PredictedTrajectory]:
    """Jointly predict frame-aligned pedestrians; ``refine=False`` skips neighbour refinement."""
    obs = _stack_histories(histories)
    if len(histories) == 0:
        return []
    out, _ = _forward(model, obs, pred_len, refine)
    return [_trajectory(hst.ped_id, out[n], hst.frame_interval) for n, hst in enumerate(histories)]


def sequence_loss(model: SrLstmModel, obs: np.ndarray, truth: np.ndarray, refine: bool = True) -> float:
    """Mean squared position error (m^2) over all pedestrians and predicted steps."""
    pred, _ = _forward(model, obs, truth.shape[1], refine)
    return float(np.mean(np.sum((pred - truth) ** 2, axis=-1)))


def loss_and_grad(model: SrLstmModel, obs: np.ndarray, truth: np.ndarray, refine: bool = True):
    pred, caches = _forward(model, obs, truth.shape[1], refine)
    diff = pred - truth
    n, P, _ = diff.shape
    loss = float(np.mean(np.sum(diff ** 2, axis=-1)))
    grads = _backward(model, caches, 2.0 * diff / (n * P))
    return loss, grads


def make_batches(tracks: Sequence[PedestrianTrack], obs_len: int, pred_len: int, batch: int):
    """Group split tracks by aligned observation frames, chunked to ``batch`` pedestrians."""
    groups: dict[tuple, list] = {}
    for t in tracks:
        try:
            hist, truth = split_obs_pred(t, obs_len, pred_len)
        except InsufficientFrames as err:
            log.warning("skipping track: %s", err)
            continue
        groups.setdefault(tuple(hist.frame_ids), []).append((hist, truth))
    batches = []
    for key in sorted(groups):
        items = groups[key]
        for s in range(0, len(items), batch):
            chunk = items[s:s + batch]
            obs = np.array([h.positions for h, _ in chunk], dtype=float)
            tru = np.array([t.positions for _, t in chunk], dtype=float)
            batches.append((obs, tru))
    return batches


def train_desk_scale(model: SrLstmModel, tracks: Sequence[PedestrianTrack], epochs: int = 500,
                     batch: int = 64, lr: float = 0.1, obs_len: int = 8, pred_len: int = 12,
                     clip_norm: float | None = 1.0):
    """Gradient descent on the mean squared position error, one update per batch.

    When the global gradient norm exceeds ``clip_norm`` the gradient is rescaled
    to that norm (``None`` disables clipping). Returns ``(trained_model, loss_trace)``;
    the input model is not modified. Each trace entry is the mean batch loss seen
    during that epoch.
    """
    if not tracks:
        raise ValueError("train_desk_scale needs at least one track")
    batches = make_batches(tracks, obs_len, pred_len, batch)
    if not batches:
        raise ValueError("no track is long enough for the observation/prediction split")
    model = model.copy()
    trace = []
    for epoch in range(epochs):
        losses = []
        for obs, tru in batches:
            loss, grads = loss_and_grad(model, obs, tru)
            losses.append(loss)
            scale = lr
            if clip_norm is not None:
                gnorm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
                if gnorm > clip_norm:
                    scale = lr * clip_norm / gnorm
            if scale:
                for k in model.params:
                    model.params[k] = model.params[k] - scale * grads[k]
        trace.append(float(np.mean(losses)))
        if epoch % 100 == 0:
            log.debug("epoch %d loss %.6g", epoch, trace[-1])
    return model, trace


# -- checkpoints ---------------------------------------------------------------

def model_to_json(model: SrLstmModel) -> str:
    doc = {
        "schema": CHECKPOINT_SCHEMA,
        "hyper": {"hidden": model.hidden, "embed": model.embed,
                  "neighbor_radius": model.neighbor_radius,
                  "refinement_layers": model.refinement_layers, "unit": model.unit},
        "arrays": {k: {"shape": list(np.shape(v)), "data": np.ravel(v).tolist()}
                   for k, v in sorted(model.params.items())},
    }
    return json.dumps(doc, indent=1)


def model_from_json(text: str) -> SrLstmModel:
    doc = json.loads(text)
    if doc.get("schema") != CHECKPOINT_SCHEMA:
        raise ValueError(f"unsupported checkpoint schema {doc.get('schema')!r}")
    params = {}
    for k, spec in doc["arrays"].items():
        arr = np.asarray(spec["data"], dtype=float)
        shape = tuple(spec["shape"])
        if arr.size != math.prod(shape):
            raise ValueError(f"array {k}: {arr.size} values for shape {shape}")
        params[k] = arr.reshape(shape)
    hy = doc["hyper"]
    return SrLstmModel(int(hy["hidden"]), int(hy["embed"]), float(hy["neighbor_radius"]),
                       int(hy["refinement_layers"]), params, float(hy["unit"]))
