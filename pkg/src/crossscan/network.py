"""Shared-weight embedding network with hand-written gradients.

Pipeline for image patches: valid 3x3 convolution (15 -> 13), ReLU, 2x2
max-pool stride 2 (13 -> 6), flatten, append the scanner ID as one extra
input, dense -> h1 (ReLU, dropout), dense -> h2 (ReLU, dropout), linear
dense -> output.  A "vector" variant skips the convolution front end and
feeds (features + domain bit) straight into the dense stack; it is used
for the 2-D margin study.

The same stack serves two heads: a Siamese contrastive loss over pairs of
embeddings (distance pulls similar pairs together, a hinge on the margin
pushes dissimilar ones apart) and a softmax cross-entropy head for the
supervised baseline classifiers.  Both arms of a pair share one parameter
set; gradients from the two arms sum into it.

Dropout is inverted: kept activations are scaled by 1/(1-rate) at train
time and inference applies no masking at all.
"""

import time
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import CorruptModelError, NumericError, ShapeError
from .sampling import ALL_KINDS, batch_index_plan
from .seeds import derive

PATCH_SIZE = 15
KERNEL = 3
CONV_OUT = PATCH_SIZE - KERNEL + 1          # 13
POOLED = CONV_OUT // 2                      # 6

WEIGHT_KEYS = ("conv_w", "w1", "w2", "w3")  # l2-penalized (biases are not)


@dataclass(frozen=True)
class NetConfig:
    conv_kernels: int = 8
    dense1: int = 16
    dense2: int = 8
    embed_dim: int = 2
    dropout_rate: float = 0.2
    l2_lambda: float = 0.001
    margin: float = 1.0
    norm_p: int = 1

    def __post_init__(self):
        if min(self.conv_kernels, self.dense1, self.dense2, self.embed_dim) < 1:
            raise ValueError("layer widths must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.margin < 0.0:
            raise ValueError(f"margin must be >= 0, got {self.margin}")
        if self.norm_p < 1:
            raise ValueError(f"norm_p must be >= 1, got {self.norm_p}")


def flat_width(conv_kernels):
    """Dense-stack input width for image patches: pooled map plus scanner ID."""
    return POOLED * POOLED * conv_kernels + 1


def param_count(config):
    """Total scalar parameters of the image-patch network."""
    k, h1, h2, e = (config.conv_kernels, config.dense1,
                    config.dense2, config.embed_dim)
    return (KERNEL * KERNEL + 1) * k + flat_width(k) * h1 + h1 \
        + h1 * h2 + h2 + h2 * e + e


@dataclass
class SiameseModel:
    config: NetConfig
    kind: str                   # "patch" or "vector"
    out_dim: int
    vector_dim: int             # only meaningful for kind == "vector"
    params: dict

    def n_scalars(self):
        return sum(p.size for p in self.params.values())

    def copy(self):
        return SiameseModel(self.config, self.kind, self.out_dim,
                            self.vector_dim,
                            {k: v.copy() for k, v in self.params.items()})


def _glorot(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_model(config, seed, kind="patch", out_dim=None, vector_dim=None):
    """Fan-based uniform weights, zero biases, deterministic per seed."""
    rng = np.random.default_rng(int(seed))
    out_dim = config.embed_dim if out_dim is None else int(out_dim)
    k, h1, h2 = config.conv_kernels, config.dense1, config.dense2
    params = {}
    if kind == "patch":
        params["conv_w"] = _glorot(rng, (k, KERNEL, KERNEL),
                                   KERNEL * KERNEL, KERNEL * KERNEL * k)
        params["conv_b"] = np.zeros(k)
        d1_in = flat_width(k)
        vector_dim = 0
    elif kind == "vector":
        if vector_dim is None or vector_dim < 1:
            raise ValueError("vector models need vector_dim >= 1")
        d1_in = vector_dim + 1
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    params["w1"] = _glorot(rng, (d1_in, h1), d1_in, h1)
    params["b1"] = np.zeros(h1)
    params["w2"] = _glorot(rng, (h1, h2), h1, h2)
    params["b2"] = np.zeros(h2)
    params["w3"] = _glorot(rng, (h2, out_dim), h2, out_dim)
    params["b3"] = np.zeros(out_dim)
    return SiameseModel(config, kind, out_dim, int(vector_dim or 0), params)


def _check_finite(name, arr):
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite activations in layer {name}")


def _forward(model, x, bits, rng=None, want_cache=False, check=False):
    """Batch forward pass.

    ``x`` is (n, 15, 15) for patch models or (n, vector_dim) for vector
    models; ``bits`` is the per-sample scanner/domain indicator.  When
    ``rng`` is given and the configured rate is positive, dropout masks are
    drawn (training mode); otherwise no dropout is applied.
    """
    p = model.params
    cfg = model.config
    rate = cfg.dropout_rate if rng is not None else 0.0
    cache = {} if want_cache else None

    if model.kind == "patch":
        if x.ndim != 3 or x.shape[1:] != (PATCH_SIZE, PATCH_SIZE):
            raise ShapeError(f"expected (n, {PATCH_SIZE}, {PATCH_SIZE}) patches, "
                             f"got {x.shape}")
        n = x.shape[0]
        k = cfg.conv_kernels
        win = sliding_window_view(x, (KERNEL, KERNEL), axis=(1, 2))
        win_flat = np.ascontiguousarray(win).reshape(n * CONV_OUT * CONV_OUT,
                                                     KERNEL * KERNEL)
        z0 = (win_flat @ p["conv_w"].reshape(k, -1).T).reshape(
            n, CONV_OUT, CONV_OUT, k) + p["conv_b"]
        if check:
            _check_finite("conv", z0)
        a0 = np.maximum(z0, 0.0)
        # 2x2 stride-2 max pool; the four window positions as strided views
        c00 = a0[:, 0:2 * POOLED:2, 0:2 * POOLED:2, :]
        c01 = a0[:, 0:2 * POOLED:2, 1:2 * POOLED:2, :]
        c10 = a0[:, 1:2 * POOLED:2, 0:2 * POOLED:2, :]
        c11 = a0[:, 1:2 * POOLED:2, 1:2 * POOLED:2, :]
        pooled = np.maximum(np.maximum(c00, c01), np.maximum(c10, c11))
        h0 = np.concatenate([pooled.reshape(n, -1), bits[:, None]], axis=1)
        if want_cache:
            cache.update(win_flat=win_flat, z0=z0,
                         pool_cells=(c00, c01, c10, c11), pooled=pooled)
    else:
        if x.ndim != 2 or x.shape[1] != model.vector_dim:
            raise ShapeError(f"expected (n, {model.vector_dim}) vectors, "
                             f"got {x.shape}")
        h0 = np.concatenate([x, bits[:, None]], axis=1)

    if h0.shape[1] != p["w1"].shape[0]:
        raise ShapeError(f"dense input width {h0.shape[1]} does not match "
                         f"model ({p['w1'].shape[0]})")

    z1 = h0 @ p["w1"] + p["b1"]
    a1 = np.maximum(z1, 0.0)
    if rate > 0.0:
        m1 = (rng.random(a1.shape) >= rate) / (1.0 - rate)
        a1 = a1 * m1
    else:
        m1 = None
    z2 = a1 @ p["w2"] + p["b2"]
    a2 = np.maximum(z2, 0.0)
    if rate > 0.0:
        m2 = (rng.random(a2.shape) >= rate) / (1.0 - rate)
        a2 = a2 * m2
    else:
        m2 = None
    out = a2 @ p["w3"] + p["b3"]
    if check:
        _check_finite("dense1", z1)
        _check_finite("dense2", z2)
        _check_finite("output", out)
    if want_cache:
        cache.update(h0=h0, z1=z1, z2=z2, a1=a1, a2=a2, m1=m1, m2=m2)
    return out, cache


def _backward(model, cache, dout):
    """Gradients of a scalar loss wrt every parameter, given d(loss)/d(out)."""
    p = model.params
    cfg = model.config
    grads = {}
    grads["w3"] = cache["a2"].T @ dout
    grads["b3"] = dout.sum(axis=0)
    da2 = dout @ p["w3"].T
    if cache["m2"] is not None:
        da2 = da2 * cache["m2"]
    dz2 = da2 * (cache["z2"] > 0.0)
    grads["w2"] = cache["a1"].T @ dz2
    grads["b2"] = dz2.sum(axis=0)
    da1 = dz2 @ p["w2"].T
    if cache["m1"] is not None:
        da1 = da1 * cache["m1"]
    dz1 = da1 * (cache["z1"] > 0.0)
    grads["w1"] = cache["h0"].T @ dz1
    grads["b1"] = dz1.sum(axis=0)

    if model.kind == "patch":
        dh0 = dz1 @ p["w1"].T
        n = dh0.shape[0]
        k = cfg.conv_kernels
        dpooled = dh0[:, :-1].reshape(n, POOLED, POOLED, k)
        # route pool gradient to the first maximal cell, in (00, 01, 10, 11) order
        pooled = cache["pooled"]
        da0 = np.zeros((n, CONV_OUT, CONV_OUT, k))
        taken = np.zeros(pooled.shape, dtype=bool)
        views = (da0[:, 0:2 * POOLED:2, 0:2 * POOLED:2, :],
                 da0[:, 0:2 * POOLED:2, 1:2 * POOLED:2, :],
                 da0[:, 1:2 * POOLED:2, 0:2 * POOLED:2, :],
                 da0[:, 1:2 * POOLED:2, 1:2 * POOLED:2, :])
        for cell, view in zip(cache["pool_cells"], views):
            hit = (cell == pooled) & ~taken
            view += np.where(hit, dpooled, 0.0)
            taken |= hit
        dz0 = da0 * (cache["z0"] > 0.0)
        dz0_flat = dz0.reshape(n * CONV_OUT * CONV_OUT, k)
        grads["conv_w"] = (dz0_flat.T @ cache["win_flat"]).reshape(
            k, KERNEL, KERNEL)
        grads["conv_b"] = dz0_flat.sum(axis=0)
    return grads


def _add_l2(model, loss, grads):
    lam = model.config.l2_lambda
    if lam > 0.0:
        for key in WEIGHT_KEYS:
            if key in model.params:
                w = model.params[key]
                loss += lam * float((w * w).sum())
                grads[key] += 2.0 * lam * w
    return loss


# ---------------------------------------------------------------------------
# Distances and losses

def lp_distance(u, v, p=1):
    """(sum |u_i - v_i|^p)^(1/p) between two equal-length vectors."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ShapeError(f"dimension mismatch: {u.shape} vs {v.shape}")
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    diff = np.abs(u - v)
    if p == 1:
        return float(diff.sum())
    return float((diff ** p).sum() ** (1.0 / p))


def lp_distance_grad(u, v, p=1):
    """d distance / d u; the subgradient at zero coordinates is 0."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ShapeError(f"dimension mismatch: {u.shape} vs {v.shape}")
    diff = u - v
    if p == 1:
        return np.sign(diff)
    d = lp_distance(u, v, p)
    if d == 0.0:
        return np.zeros_like(diff)
    return np.sign(diff) * np.abs(diff) ** (p - 1) / d ** (p - 1)


def siamese_loss(d, y, margin):
    """Per-pair loss: y * d^2 + (1 - y) * max(0, margin - d)."""
    if d < 0.0 or margin < 0.0:
        raise ValueError("distance and margin must be >= 0")
    return y * d * d + (1 - y) * max(0.0, margin - d)


def _pair_distances(emb_a, emb_b, p):
    diff = emb_a - emb_b
    absd = np.abs(diff)
    if p == 1:
        d = absd.sum(axis=1)
        dgrad = np.sign(diff)
    else:
        d = (absd ** p).sum(axis=1) ** (1.0 / p)
        safe = np.where(d > 0.0, d, 1.0)
        dgrad = np.sign(diff) * absd ** (p - 1) / safe[:, None] ** (p - 1)
        dgrad[d == 0.0] = 0.0
    return d, dgrad


def _pair_arrays_loss_grads(model, xa, xb, bits, y, rng=None):
    """Siamese loss and gradients over pre-stacked pair arrays."""
    cfg = model.config
    x = np.concatenate([xa, xb], axis=0)
    out, cache = _forward(model, x, bits, rng=rng, want_cache=True, check=True)
    n = len(y)
    emb_a, emb_b = out[:n], out[n:]

    d, dgrad = _pair_distances(emb_a, emb_b, cfg.norm_p)
    hinge_active = (d < cfg.margin).astype(float)
    loss = float((y * d * d + (1.0 - y) * np.maximum(0.0, cfg.margin - d)).sum())
    dl_dd = 2.0 * y * d - (1.0 - y) * hinge_active
    dout_a = dl_dd[:, None] * dgrad
    dout = np.concatenate([dout_a, -dout_a], axis=0)

    grads = _backward(model, cache, dout)
    loss = _add_l2(model, loss, grads)
    return loss, grads


def pair_batch_loss_grads(model, pairs, rng=None):
    """Batch Siamese loss (sum over pairs plus the l2 term) and gradients.

    Both arms run through the single parameter set; each arm draws its own
    dropout masks, and the same masks are reused for the backward pass.
    """
    if not pairs:
        raise ValueError("empty pair batch")
    xa = np.stack([np.asarray(p.a.pixels, dtype=float) for p in pairs])
    xb = np.stack([np.asarray(p.b.pixels, dtype=float) for p in pairs])
    bits = np.array([float(p.a.scanner_id) for p in pairs]
                    + [float(p.b.scanner_id) for p in pairs])
    y = np.array([p.y for p in pairs], dtype=float)
    return _pair_arrays_loss_grads(model, xa, xb, bits, y, rng=rng)


def softmax_batch_loss_grads(model, x, bits, labels, rng=None):
    """Mean cross-entropy over a labeled batch plus the l2 term."""
    out, cache = _forward(model, x, bits, rng=rng, want_cache=True, check=True)
    n = out.shape[0]
    shifted = out - out.max(axis=1, keepdims=True)
    expz = np.exp(shifted)
    probs = expz / expz.sum(axis=1, keepdims=True)
    loss = float(-np.log(probs[np.arange(n), labels] + 1e-300).mean())
    dout = probs
    dout[np.arange(n), labels] -= 1.0
    dout /= n
    grads = _backward(model, cache, dout)
    loss = _add_l2(model, loss, grads)
    return loss, grads


# ---------------------------------------------------------------------------
# Inference helpers

def forward(model, patch, mode="infer", dropout_seed=0):
    """Embed a single patch; ``mode`` is "infer" or "train"."""
    x = np.asarray(patch.pixels, dtype=float)[None]
    bits = np.array([float(patch.scanner_id)])
    rng = np.random.default_rng(int(dropout_seed)) if mode == "train" else None
    out, _ = _forward(model, x, bits, rng=rng)
    return out[0]


def embed_batch(model, patches, chunk=1024):
    """Inference-mode outputs for a list of patches, (n, out_dim)."""
    outs = []
    for lo in range(0, len(patches), chunk):
        part = patches[lo:lo + chunk]
        x = np.stack([np.asarray(p.pixels, dtype=float) for p in part])
        bits = np.array([float(p.scanner_id) for p in part])
        out, _ = _forward(model, x, bits)
        outs.append(out)
    return np.concatenate(outs, axis=0)


# ---------------------------------------------------------------------------
# RMSprop

@dataclass
class OptimizerState:
    learning_rate: float = 0.001
    rho: float = 0.9
    epsilon: float = 1e-8
    decay: float = 0.0
    iteration: int = 0
    cache: dict = field(default_factory=dict)


def rmsprop_init(params, learning_rate=0.001, rho=0.9, epsilon=1e-8, decay=0.0):
    cache = {k: np.zeros_like(v) for k, v in params.items()}
    return OptimizerState(learning_rate, rho, epsilon, decay, 0, cache)


def rmsprop_step(state, params, grads):
    """In-place update: cache <- rho*cache + (1-rho)*g^2, then normalize g."""
    lr = state.learning_rate / (1.0 + state.decay * state.iteration)
    state.iteration += 1
    for key, g in grads.items():
        c = state.cache[key]
        c *= state.rho
        c += (1.0 - state.rho) * g * g
        params[key] -= lr * g / (np.sqrt(c) + state.epsilon)
    return params, state


# ---------------------------------------------------------------------------
# Training loops

def train_siamese(dataset, config, epochs, batch_size, run_seed,
                  model=None, kind="patch", vector_dim=None, log_path=None,
                  optimizer=None):
    """Train the embedding network on a pair dataset.

    The run seed controls initialization, dropout and batch shuffling, so a
    fixed seed reproduces the whole parameter trajectory.  Returns the model
    and the per-epoch mean batch loss history.
    """
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty pair dataset")
    if model is None:
        model = init_model(config, derive(run_seed, "init"),
                           kind=kind, vector_dim=vector_dim)
    state = optimizer or rmsprop_init(model.params)
    droprng = np.random.default_rng(derive(run_seed, "dropout"))
    use_rng = droprng if config.dropout_rate > 0.0 else None

    pairs = dataset.pairs
    xa = np.stack([np.asarray(p.a.pixels, dtype=float) for p in pairs])
    xb = np.stack([np.asarray(p.b.pixels, dtype=float) for p in pairs])
    bits_a = np.array([float(p.a.scanner_id) for p in pairs])
    bits_b = np.array([float(p.b.scanner_id) for p in pairs])
    yv = np.array([p.y for p in pairs], dtype=float)
    codes = np.array([ALL_KINDS.index(p.kind) for p in pairs])

    history = []
    rows = []
    for epoch in range(epochs):
        started = time.perf_counter()
        plan, _ = batch_index_plan(codes, batch_size,
                                   derive(run_seed, "shuffle", epoch))
        total = 0.0
        for b, idx in enumerate(plan):
            bits = np.concatenate([bits_a[idx], bits_b[idx]])
            loss, grads = _pair_arrays_loss_grads(
                model, xa[idx], xb[idx], bits, yv[idx], rng=use_rng)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch} batch {b}")
            rmsprop_step(state, model.params, grads)
            total += loss
        mean_loss = total / len(plan)
        history.append(mean_loss)
        rows.append((epoch, mean_loss,
                     (time.perf_counter() - started) * 1000.0))
    if log_path is not None:
        _write_loss_log(log_path, rows)
    return model, history


def train_classifier(patches, class_labels, config, epochs, batch_size,
                     run_seed, n_classes, log_path=None):
    """Train the same architecture as a softmax tissue classifier."""
    if not patches:
        raise ValueError("cannot train on an empty patch list")
    model = init_model(config, derive(run_seed, "init"),
                       kind="patch", out_dim=n_classes)
    state = rmsprop_init(model.params)
    droprng = np.random.default_rng(derive(run_seed, "dropout"))
    use_rng = droprng if config.dropout_rate > 0.0 else None
    x = np.stack([np.asarray(p.pixels, dtype=float) for p in patches])
    bits = np.array([float(p.scanner_id) for p in patches])
    labels = np.asarray(class_labels, dtype=int)
    n = len(patches)
    history = []
    rows = []
    for epoch in range(epochs):
        started = time.perf_counter()
        order = np.random.default_rng(
            derive(run_seed, "shuffle", epoch)).permutation(n)
        total = 0.0
        n_batches = 0
        for lo in range(0, n, batch_size):
            idx = order[lo:lo + batch_size]
            loss, grads = softmax_batch_loss_grads(
                model, x[idx], bits[idx], labels[idx], rng=use_rng)
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite loss at epoch {epoch} batch {n_batches}")
            rmsprop_step(state, model.params, grads)
            total += loss
            n_batches += 1
        mean_loss = total / max(n_batches, 1)
        history.append(mean_loss)
        rows.append((epoch, mean_loss,
                     (time.perf_counter() - started) * 1000.0))
    if log_path is not None:
        _write_loss_log(log_path, rows)
    return model, history


def predict_classes(model, patches):
    """Arg-max class indices from the softmax head, inference mode."""
    return embed_batch(model, patches).argmax(axis=1)


def _write_loss_log(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,mean_loss,wall_ms\n")
        for epoch, mean_loss, wall_ms in rows:
            fh.write(f"{epoch},{mean_loss!r},{wall_ms:.3f}\n")


# ---------------------------------------------------------------------------
# Persistence

_MODEL_MAGIC = "MRAI-MODEL v1"


def save_model(model, path):
    """Text manifest (config + parameter shapes) then little-endian float64
    parameter blocks in manifest order.  Round-trips bit-exactly."""
    cfg = model.config
    lines = [
        _MODEL_MAGIC,
        f"kind {model.kind}",
        f"out_dim {model.out_dim}",
        f"vector_dim {model.vector_dim}",
        f"conv_kernels {cfg.conv_kernels}",
        f"dense1 {cfg.dense1}",
        f"dense2 {cfg.dense2}",
        f"embed_dim {cfg.embed_dim}",
        f"dropout_rate {cfg.dropout_rate!r}",
        f"l2_lambda {cfg.l2_lambda!r}",
        f"margin {cfg.margin!r}",
        f"norm_p {cfg.norm_p}",
    ]
    for key in sorted(model.params):
        shape = " ".join(str(s) for s in model.params[key].shape)
        lines.append(f"param {key} {shape}")
    lines.append("END")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode())
        for key in sorted(model.params):
            fh.write(model.params[key].astype("<f8").tobytes())


def load_model(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    try:
        head_end = blob.index(b"\nEND\n") + len(b"\nEND\n")
    except ValueError:
        raise CorruptModelError(f"{path}: manifest terminator missing")
    lines = blob[:head_end].decode("utf-8", errors="replace").splitlines()
    if not lines or lines[0] != _MODEL_MAGIC:
        raise CorruptModelError(f"{path}: bad magic line")
    fields = {}
    shapes = []
    for line in lines[1:]:
        if line == "END":
            break
        key, _, rest = line.partition(" ")
        if key == "param":
            bits = rest.split()
            shapes.append((bits[0], tuple(int(s) for s in bits[1:])))
        else:
            fields[key] = rest
    try:
        config = NetConfig(
            conv_kernels=int(fields["conv_kernels"]),
            dense1=int(fields["dense1"]),
            dense2=int(fields["dense2"]),
            embed_dim=int(fields["embed_dim"]),
            dropout_rate=float(fields["dropout_rate"]),
            l2_lambda=float(fields["l2_lambda"]),
            margin=float(fields["margin"]),
            norm_p=int(fields["norm_p"]),
        )
        kind = fields["kind"]
        out_dim = int(fields["out_dim"])
        vector_dim = int(fields["vector_dim"])
    except (KeyError, ValueError) as exc:
        raise CorruptModelError(f"{path}: bad manifest: {exc}") from exc

    expected = _expected_shapes(config, kind, out_dim, vector_dim)
    if dict(shapes) != expected:
        raise CorruptModelError(f"{path}: manifest shapes do not match config")

    total = sum(int(np.prod(s)) for _, s in shapes)
    payload = blob[head_end:]
    if len(payload) != total * 8:
        raise CorruptModelError(
            f"{path}: expected {total} float64 values, found {len(payload) // 8}")
    flat = np.frombuffer(payload, dtype="<f8")
    params = {}
    offset = 0
    for key, shape in shapes:
        size = int(np.prod(shape))
        params[key] = flat[offset:offset + size].reshape(shape).copy()
        offset += size
    return SiameseModel(config, kind, out_dim, vector_dim, params)


def _expected_shapes(config, kind, out_dim, vector_dim):
    k, h1, h2 = config.conv_kernels, config.dense1, config.dense2
    shapes = {}
    if kind == "patch":
        shapes["conv_w"] = (k, KERNEL, KERNEL)
        shapes["conv_b"] = (k,)
        d1_in = flat_width(k)
    else:
        d1_in = vector_dim + 1
    shapes["w1"] = (d1_in, h1)
    shapes["b1"] = (h1,)
    shapes["w2"] = (h1, h2)
    shapes["b2"] = (h2,)
    shapes["w3"] = (h2, out_dim)
    shapes["b3"] = (out_dim,)
    return shapes
