"""Generator and discriminator assembly, forward/backward composition, and
bit-exact checkpoint serialization.

The generator repeats the latent vector as the input at each output time
step, runs it through three stacked LSTM layers and maps every hidden state
through a shared dense + tanh head to one value per step. The discriminator
runs a single LSTM over the window and scores the last hidden state with a
dense sigmoid head; its full hidden-state sequence doubles as the feature
representation used by the detector.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import CheckpointError, ShapeError
from .rng import Rng

CKPT_MAGIC = b"GLSM"
CKPT_VERSION = 1
_META_PREFIX = "_meta."

PAPER_LATENT_DIM = 100
PAPER_HIDDEN_SIZES = (32, 64, 128)
PAPER_DISC_HIDDEN = 100
PAPER_WINDOW = 60


@dataclass
class Generator:
    latent_dim: int
    output_len: int
    layers: list[nn.LstmParams]  # stacked, input side first
    out_w: np.ndarray  # [1, last hidden]
    out_b: np.ndarray  # [1]


@dataclass
class Discriminator:
    window_length: int
    lstm: nn.LstmParams
    out_w: np.ndarray  # [1, hidden]
    out_b: np.ndarray  # [1]


def init_generator(
    rng: Rng,
    latent_dim: int = PAPER_LATENT_DIM,
    hidden_sizes: tuple[int, ...] = PAPER_HIDDEN_SIZES,
    output_len: int = PAPER_WINDOW,
) -> Generator:
    layers = []
    size_in = latent_dim
    for h in hidden_sizes:
        layers.append(nn.init_lstm(rng, size_in, h))
        size_in = h
    bound = 1.0 / np.sqrt(size_in)
    return Generator(
        latent_dim=latent_dim,
        output_len=output_len,
        layers=layers,
        out_w=rng.uniform(-bound, bound, (1, size_in)),
        out_b=np.zeros(1, np.float32),
    )


def init_discriminator(
    rng: Rng, hidden_size: int = PAPER_DISC_HIDDEN, window_length: int = PAPER_WINDOW
) -> Discriminator:
    bound = 1.0 / np.sqrt(hidden_size)
    return Discriminator(
        window_length=window_length,
        lstm=nn.init_lstm(rng, 1, hidden_size),
        out_w=rng.uniform(-bound, bound, (1, hidden_size)),
        out_b=np.zeros(1, np.float32),
    )


# ---------------------------------------------------------------------------
# Named parameter access


def generator_params(g: Generator) -> dict[str, np.ndarray]:
    out = {}
    for i, layer in enumerate(g.layers):
        out[f"g.lstm{i}.W"] = layer.W
        out[f"g.lstm{i}.U"] = layer.U
        out[f"g.lstm{i}.b"] = layer.b
    out["g.out.w"] = g.out_w
    out["g.out.b"] = g.out_b
    return out


def discriminator_params(d: Discriminator) -> dict[str, np.ndarray]:
    return {
        "d.lstm.W": d.lstm.W,
        "d.lstm.U": d.lstm.U,
        "d.lstm.b": d.lstm.b,
        "d.out.w": d.out_w,
        "d.out.b": d.out_b,
    }


def param_count(g: Generator, d: Discriminator) -> int:
    tensors = {**generator_params(g), **discriminator_params(d)}
    return sum(t.size for t in tensors.values())


def params_digest(g: Generator, d: Discriminator) -> str:
    """SHA-256 over all parameter bytes; used to assert frozen models."""
    h = hashlib.sha256()
    for name, t in sorted({**generator_params(g), **discriminator_params(d)}.items()):
        h.update(name.encode())
        h.update(np.ascontiguousarray(t).tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Forward / backward


@dataclass
class GenCache:
    z: np.ndarray  # [B, latent]
    layer_caches: list
    hidden_last: np.ndarray  # [T, B, H_last]
    y: np.ndarray  # [T, B, 1] tanh output


def generate_batch(g: Generator, z: np.ndarray, want_cache: bool = False):
    """Map latent codes z [B, latent_dim] to sequences [B, output_len]."""
    if z.ndim != 2 or z.shape[1] != g.latent_dim:
        raise ShapeError(f"z dims: expected [B, {g.latent_dim}], got {z.shape}")
    B = z.shape[0]
    x = np.ascontiguousarray(np.broadcast_to(z, (g.output_len, B, g.latent_dim)))
    caches = []
    for layer in g.layers:
        x, cache = nn.lstm_forward_batch(layer, x)
        caches.append(cache)
    y = np.tanh(nn.dense_forward(g.out_w, g.out_b, x))
    out = np.ascontiguousarray(y[:, :, 0].T)
    if want_cache:
        return out, GenCache(z=z, layer_caches=caches, hidden_last=x, y=y)
    return out


def generate(g: Generator, z: np.ndarray) -> np.ndarray:
    """Map one latent vector [latent_dim] to a sequence [output_len]."""
    if z.ndim != 1:
        return generate_batch(g, z)
    if not np.all(np.isfinite(z)):
        raise ValueError("z must be finite")
    return generate_batch(g, z[None, :])[0]


def generator_backward(g: Generator, cache: GenCache, grad_out: np.ndarray, with_params: bool = True):
    """Gradients of a scalar loss with grad_out [B, output_len] w.r.t. the
    generator parameters and z. Returns (param grads dict, dz [B, latent]);
    with_params=False skips the parameter gradients (frozen generator)."""
    dy = np.ascontiguousarray(grad_out.T)[:, :, None] * nn.tanh_grad(cache.y)
    grads = {}
    if with_params:
        dw_out, db_out, dh = nn.dense_backward(g.out_w, cache.hidden_last, dy)
        grads = {"g.out.w": dw_out, "g.out.b": db_out}
        for i in range(len(g.layers) - 1, -1, -1):
            (dW, dU, db), dh, _, _ = nn.lstm_backward(cache.layer_caches[i], dh)
            grads[f"g.lstm{i}.W"] = dW
            grads[f"g.lstm{i}.U"] = dU
            grads[f"g.lstm{i}.b"] = db
    else:
        dh = dy @ g.out_w
        for i in range(len(g.layers) - 1, -1, -1):
            dh = nn.lstm_backward_input(cache.layer_caches[i], dh)
    return grads, dh.sum(axis=0)


@dataclass
class DiscCache:
    lstm_cache: object
    features: np.ndarray  # [T, B, H] hidden sequence
    h_last: np.ndarray  # [B, H]
    scores: np.ndarray  # [B] post-sigmoid


def discriminate_batch(d: Discriminator, x: np.ndarray, want_cache: bool = False):
    """Score windows x [B, window_length]. Returns (scores [B],
    features [T, B, hidden]) and optionally the backward cache."""
    if x.ndim != 2 or x.shape[1] != d.window_length:
        raise ShapeError(f"x dims: expected [B, {d.window_length}], got {x.shape}")
    seq = np.ascontiguousarray(x.T)[:, :, None]
    hidden, cache = nn.lstm_forward_batch(d.lstm, seq)
    h_last = hidden[-1]
    pre = nn.dense_forward(d.out_w, d.out_b, h_last)[:, 0]
    p = nn.sigmoid(pre)
    if want_cache:
        return p, hidden, DiscCache(lstm_cache=cache, features=hidden, h_last=h_last, scores=p)
    return p, hidden


def discriminate(d: Discriminator, x: np.ndarray):
    """Score one window [window_length]; returns (score in (0, 1),
    features [window_length, hidden])."""
    if x.ndim != 1:
        raise ShapeError(f"x rank: expected 1 ([window_length]), got {x.ndim}")
    p, feat = discriminate_batch(d, x[None, :])
    return float(p[0]), feat[:, 0, :]


def discriminator_backward(
    d: Discriminator,
    cache: DiscCache,
    grad_score_pre: np.ndarray | None = None,
    grad_features: np.ndarray | None = None,
    with_params: bool = True,
):
    """Backward through the discriminator.

    grad_score_pre [B] is the loss gradient at the dense head pre-activation
    (callers fold the sigmoid derivative in, which keeps BCE compositions
    stable); grad_features [T, B, H] flows into the hidden sequence. Returns
    (param grads dict, grad w.r.t. input sequence [T, B, 1]); with
    with_params=False only the input gradient is computed (frozen network).
    """
    feat = cache.features
    dhseq = np.zeros_like(feat) if grad_features is None else grad_features.astype(feat.dtype, copy=True)
    if grad_score_pre is not None:
        dw_out, db_out, dh_last = nn.dense_backward(d.out_w, cache.h_last, grad_score_pre[:, None])
        dhseq[-1] += dh_last
    else:
        dw_out = np.zeros_like(d.out_w)
        db_out = np.zeros_like(d.out_b)
    if not with_params:
        return {}, nn.lstm_backward_input(cache.lstm_cache, dhseq)
    (dW, dU, db), dx, _, _ = nn.lstm_backward(cache.lstm_cache, dhseq)
    grads = {"d.lstm.W": dW, "d.lstm.U": dU, "d.lstm.b": db, "d.out.w": dw_out, "d.out.b": db_out}
    return grads, dx


# ---------------------------------------------------------------------------
# Checkpoints


@dataclass
class ModelCheckpoint:
    generator: Generator
    discriminator: Discriminator
    latent_dim: int
    window_length: int
    clip_c: float
    seed: int
    epoch: int = 0
    loss_d: float = 0.0
    loss_g: float = 0.0
    extra_tensors: dict[str, np.ndarray] = field(default_factory=dict)


def _write_tensor(fh, name: str, t: np.ndarray) -> None:
    nb = name.encode("utf-8")
    fh.write(struct.pack("<H", len(nb)))
    fh.write(nb)
    arr = np.ascontiguousarray(t, "<f4")
    fh.write(struct.pack("<B", arr.ndim))
    for dim in arr.shape:
        fh.write(struct.pack("<I", dim))
    fh.write(arr.tobytes())


def save_checkpoint(path, ckpt: ModelCheckpoint) -> None:
    """GLSM container: magic, u32 version, config block (latent_dim u32,
    window_length u32, clip_c f32, seed u64), u32 tensor count, then named
    tensors (u16 name, u8 rank, u32 dims, float32 little-endian data).
    Training metadata travels as reserved "_meta.*" scalar tensors."""
    tensors = {**generator_params(ckpt.generator), **discriminator_params(ckpt.discriminator)}
    tensors[_META_PREFIX + "epoch"] = np.array([ckpt.epoch], np.float32)
    tensors[_META_PREFIX + "loss_d"] = np.array([ckpt.loss_d], np.float32)
    tensors[_META_PREFIX + "loss_g"] = np.array([ckpt.loss_g], np.float32)
    tensors.update(ckpt.extra_tensors)
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<IIIfQ", CKPT_VERSION, ckpt.latent_dim, ckpt.window_length, ckpt.clip_c, ckpt.seed))
        fh.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            _write_tensor(fh, name, tensors[name])


def _rebuild_lstm(tensors: dict[str, np.ndarray], prefix: str) -> nn.LstmParams:
    try:
        p = nn.LstmParams(W=tensors[prefix + ".W"], U=tensors[prefix + ".U"], b=tensors[prefix + ".b"])
    except KeyError as e:
        raise CheckpointError("truncated", f"missing tensor {e.args[0]}") from None
    p.validate()
    return p


def load_checkpoint(path, expect: dict | None = None) -> ModelCheckpoint:
    """Read a GLSM checkpoint. expect may pin config keys (latent_dim,
    window_length, clip_c, seed); a differing stored value raises a
    config-mismatch CheckpointError."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CKPT_MAGIC:
        raise CheckpointError("magic", f"{path}: bad magic {data[:4]!r}, expected {CKPT_MAGIC!r}")
    try:
        version, latent_dim, window_length, clip_c, seed = struct.unpack_from("<IIIfQ", data, 4)
    except struct.error:
        raise CheckpointError("truncated", f"{path}: truncated header") from None
    if version != CKPT_VERSION:
        raise CheckpointError("version", f"{path}: unsupported version {version}")
    try:
        (count,) = struct.unpack_from("<I", data, 28)
        pos = 32
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos : pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<B", data, pos)
            pos += 1
            dims = struct.unpack_from(f"<{rank}I", data, pos)
            pos += 4 * rank
            n = int(np.prod(dims)) if rank else 1
            flat = np.frombuffer(data, "<f4", n, pos)
            if flat.size != n:
                raise struct.error
            pos += 4 * n
            tensors[name] = flat.reshape(dims).copy()
    except (struct.error, ValueError, UnicodeDecodeError):
        raise CheckpointError("truncated", f"{path}: truncated or corrupt tensor table") from None

    config = {"latent_dim": latent_dim, "window_length": window_length, "clip_c": clip_c, "seed": seed}
    for key, want in (expect or {}).items():
        got = config.get(key)
        if got is None or not np.isclose(got, want):
            raise CheckpointError("config", f"{path}: config {key}={got}, expected {want}")

    n_layers = len({k.split(".")[1] for k in tensors if k.startswith("g.lstm")})
    layers = [_rebuild_lstm(tensors, f"g.lstm{i}") for i in range(n_layers)]
    try:
        g = Generator(latent_dim, window_length, layers, tensors["g.out.w"], tensors["g.out.b"])
        d = Discriminator(window_length, _rebuild_lstm(tensors, "d.lstm"), tensors["d.out.w"], tensors["d.out.b"])
    except KeyError as e:
        raise CheckpointError("truncated", f"{path}: missing tensor {e.args[0]}") from None
    meta = {k[len(_META_PREFIX):]: float(v[0]) for k, v in tensors.items() if k.startswith(_META_PREFIX)}
    extra = {
        k: v
        for k, v in tensors.items()
        if not (k.startswith(("g.", "d.")) or k.startswith(_META_PREFIX))
    }
    return ModelCheckpoint(
        generator=g,
        discriminator=d,
        latent_dim=latent_dim,
        window_length=window_length,
        clip_c=clip_c,
        seed=seed,
        epoch=int(meta.get("epoch", 0)),
        loss_d=meta.get("loss_d", 0.0),
        loss_g=meta.get("loss_g", 0.0),
        extra_tensors=extra,
    )
