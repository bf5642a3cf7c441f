"""Masked-autoencoder vision transformer in plain numpy with exact backprop.

Pre-norm attention/MLP blocks, learned 1D positional embeddings over the patch
grid, a learned mask token filling the horizon region before decoding, and a
linear head back to patch pixels.  Low-rank adapters can hook the Q/K/V
projections of every encoder layer; the temporal grounding adapter slots in
between patch embedding and the positional embedding.

Parameters live in a flat name -> float64 array dict so that optimization,
freezing, and serialization stay uniform.  The on-disk format ("NTF1") is a
little-endian named-tensor container with bit-exact round trips.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import adapter

_LN_EPS = 1e-6
_GELU_C0 = np.sqrt(2.0 / np.pi)
_GELU_C1 = 0.044715


@dataclass(frozen=True)
class BackboneConfig:
    image_height: int = 224
    image_width: int = 224
    patch_size: int = 16
    d_model: int = 512
    n_heads: int = 8
    e_layers: int = 2
    d_layers: int = 1
    d_ff: int = 2048
    dropout: float = 0.1
    frozen: bool = True

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if self.image_height % self.patch_size or self.image_width % self.patch_size:
            raise ValueError("image dims must be divisible by patch_size")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    @property
    def grid_rows(self) -> int:
        return self.image_height // self.patch_size

    @property
    def grid_cols(self) -> int:
        return self.image_width // self.patch_size

    @property
    def n_patches(self) -> int:
        return self.grid_rows * self.grid_cols

    @property
    def patch_dim(self) -> int:
        return 3 * self.patch_size * self.patch_size


def desk_config(**overrides) -> BackboneConfig:
    """Small configuration sized for CPU tests and finite-difference checks."""
    base = dict(
        image_height=64,
        image_width=64,
        patch_size=16,
        d_model=64,
        n_heads=4,
        e_layers=2,
        d_layers=1,
        d_ff=256,
        dropout=0.1,
        frozen=True,
    )
    base.update(overrides)
    return BackboneConfig(**base)


@dataclass(frozen=True)
class PatchSequence:
    tokens: np.ndarray  # [L, patch_dim] pixel patches or [L, D] embeddings
    grid_shape: tuple[int, int]
    visible_count: int


# ---------------------------------------------------------------------------
# patch handling


def patchify(image: np.ndarray, patch: int) -> np.ndarray:
    """[3, H, W] -> [L, 3*patch*patch] in row-major grid order."""
    c, H, W = image.shape
    if H % patch or W % patch:
        raise ValueError(f"image dims {H}x{W} not divisible by patch {patch}")
    gh, gw = H // patch, W // patch
    x = image.reshape(c, gh, patch, gw, patch)
    return x.transpose(1, 3, 0, 2, 4).reshape(gh * gw, c * patch * patch)


def unpatchify(patches: np.ndarray, grid_shape: tuple[int, int], patch: int) -> np.ndarray:
    """Exact inverse of patchify."""
    gh, gw = grid_shape
    c = patches.shape[1] // (patch * patch)
    x = patches.reshape(gh, gw, c, patch, patch)
    return x.transpose(2, 0, 3, 1, 4).reshape(c, gh * patch, gw * patch)


def visible_indices(grid_shape: tuple[int, int], vis_cols: int) -> np.ndarray:
    """Row-major indices of patches whose grid column lies in the visible region."""
    gh, gw = grid_shape
    if not 1 <= vis_cols <= gw:
        raise ValueError(f"vis_cols {vis_cols} outside [1, {gw}]")
    cols = np.arange(gh * gw) % gw
    return np.nonzero(cols < vis_cols)[0]


# ---------------------------------------------------------------------------
# parameter initialization


def _linear_init(rng, out_dim, in_dim):
    bound = 1.0 / np.sqrt(in_dim)
    return rng.uniform(-bound, bound, size=(out_dim, in_dim))


def _block_params(rng, prefix: str, D: int, d_ff: int, params: dict):
    params[f"{prefix}.ln1.g"] = np.ones(D)
    params[f"{prefix}.ln1.b"] = np.zeros(D)
    for name in ("wq", "wk", "wv", "wo"):
        params[f"{prefix}.attn.{name}"] = _linear_init(rng, D, D)
    for name in ("bq", "bk", "bv", "bo"):
        params[f"{prefix}.attn.{name}"] = np.zeros(D)
    params[f"{prefix}.ln2.g"] = np.ones(D)
    params[f"{prefix}.ln2.b"] = np.zeros(D)
    params[f"{prefix}.mlp.w1"] = _linear_init(rng, d_ff, D)
    params[f"{prefix}.mlp.b1"] = np.zeros(d_ff)
    params[f"{prefix}.mlp.w2"] = _linear_init(rng, D, d_ff)
    params[f"{prefix}.mlp.b2"] = np.zeros(D)


def init_backbone(cfg: BackboneConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    D, pd, L = cfg.d_model, cfg.patch_dim, cfg.n_patches
    params: dict[str, np.ndarray] = {}
    params["patch_embed.w"] = _linear_init(rng, D, pd)
    params["patch_embed.b"] = np.zeros(D)
    params["enc_pos"] = rng.normal(0.0, 0.02, size=(L, D))
    for i in range(cfg.e_layers):
        _block_params(rng, f"enc{i}", D, cfg.d_ff, params)
    params["mask_token"] = rng.normal(0.0, 0.02, size=D)
    params["dec_pos"] = rng.normal(0.0, 0.02, size=(L, D))
    for i in range(cfg.d_layers):
        _block_params(rng, f"dec{i}", D, cfg.d_ff, params)
    params["dec_norm.g"] = np.ones(D)
    params["dec_norm.b"] = np.zeros(D)
    params["head.w"] = _linear_init(rng, pd, D)
    params["head.b"] = np.zeros(pd)
    return params


# ---------------------------------------------------------------------------
# primitives


def _layernorm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    invstd = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = (x - mu) * invstd
    return g * xhat + b, {"xhat": xhat, "invstd": invstd, "g": g}


def _layernorm_backward(gr, cache):
    xhat, invstd, g = cache["xhat"], cache["invstd"], cache["g"]
    dg = (gr * xhat).sum(axis=0)
    db = gr.sum(axis=0)
    gg = gr * g
    mg = gg.mean(axis=-1, keepdims=True)
    mgx = (gg * xhat).mean(axis=-1, keepdims=True)
    dx = invstd * (gg - mg - xhat * mgx)
    return dx, dg, db


def _gelu(x):
    u = _GELU_C0 * (x + _GELU_C1 * x**3)
    t = np.tanh(u)
    return 0.5 * x * (1.0 + t), t


def _gelu_backward(gr, x, t):
    du = _GELU_C0 * (1.0 + 3.0 * _GELU_C1 * x * x)
    return gr * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


def _dropout_scale(shape, rate, train, rng):
    if not train or rate <= 0.0:
        return None
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    return (rng.random(shape) >= rate) / (1.0 - rate)


def _softmax(s):
    m = s.max(axis=-1, keepdims=True)
    e = np.exp(s - m)
    return e / e.sum(axis=-1, keepdims=True)


def _split_heads(x, n_heads):
    L, D = x.shape
    return x.reshape(L, n_heads, D // n_heads).transpose(1, 0, 2)


def _merge_heads(x):
    nh, L, dh = x.shape
    return x.transpose(1, 0, 2).reshape(L, nh * dh)


# ---------------------------------------------------------------------------
# attention / MLP / block


def _attn_forward(x, params, prefix, cfg, lora=None, train=False, rng=None, lora_drop=0.0):
    p = lambda n: params[f"{prefix}.attn.{n}"]
    cache = {"x": x}
    proj, probs = {}, None
    for name in ("q", "k", "v"):
        factor = lora.get(name) if lora else None
        drop = (
            _dropout_scale(x.shape, lora_drop, train, rng)
            if (factor is not None and lora_drop > 0.0)
            else None
        )
        y, c = adapter.lora_project(x, p("w" + name), p("b" + name), factor, drop)
        proj[name] = y
        cache[name] = c
    dh = cfg.d_model // cfg.n_heads
    q = _split_heads(proj["q"], cfg.n_heads)
    k = _split_heads(proj["k"], cfg.n_heads)
    v = _split_heads(proj["v"], cfg.n_heads)
    scores = q @ k.transpose(0, 2, 1) / np.sqrt(dh)
    probs = _softmax(scores)
    ctx = probs @ v
    merged = _merge_heads(ctx)
    out = merged @ p("wo").T + p("bo")
    drop_o = _dropout_scale(out.shape, cfg.dropout, train, rng)
    if drop_o is not None:
        out = out * drop_o
    cache.update(
        probs=probs, qh=q, kh=k, vh=v, merged=merged, drop_o=drop_o, dh=dh
    )
    return out, cache


def _attn_backward(gr, params, prefix, cfg, cache, grads, lora_grads):
    p = lambda n: params[f"{prefix}.attn.{n}"]
    if cache["drop_o"] is not None:
        gr = gr * cache["drop_o"]
    grads[f"{prefix}.attn.wo"] += gr.T @ cache["merged"]
    grads[f"{prefix}.attn.bo"] += gr.sum(axis=0)
    gmerged = gr @ p("wo")
    gctx = _split_heads(gmerged, cfg.n_heads)
    probs, q, k, v = cache["probs"], cache["qh"], cache["kh"], cache["vh"]
    gprobs = gctx @ v.transpose(0, 2, 1)
    gv = probs.transpose(0, 2, 1) @ gctx
    gscores = probs * (gprobs - (gprobs * probs).sum(axis=-1, keepdims=True))
    gscores /= np.sqrt(cache["dh"])
    gq = gscores @ k
    gk = gscores.transpose(0, 2, 1) @ q
    gx = np.zeros_like(cache["x"])
    for name, gh in (("q", gq), ("k", gk), ("v", gv)):
        gflat = _merge_heads(gh)
        dW, db, dx, fg = adapter.lora_project_backward(gflat, p("w" + name), cache[name])
        grads[f"{prefix}.attn.w{name}"] += dW
        grads[f"{prefix}.attn.b{name}"] += db
        gx += dx
        if fg is not None:
            lg = lora_grads.setdefault(prefix, {}).setdefault(name, {"A": 0.0, "B": 0.0})
            lg["A"] = lg["A"] + fg["A"]
            lg["B"] = lg["B"] + fg["B"]
    return gx


def _mlp_forward(x, params, prefix, cfg, train=False, rng=None):
    w1, b1 = params[f"{prefix}.mlp.w1"], params[f"{prefix}.mlp.b1"]
    w2, b2 = params[f"{prefix}.mlp.w2"], params[f"{prefix}.mlp.b2"]
    h = x @ w1.T + b1
    a, tanh_u = _gelu(h)
    drop_h = _dropout_scale(a.shape, cfg.dropout, train, rng)
    ad = a * drop_h if drop_h is not None else a
    y = ad @ w2.T + b2
    drop_y = _dropout_scale(y.shape, cfg.dropout, train, rng)
    if drop_y is not None:
        y = y * drop_y
    return y, {"x": x, "h": h, "tanh_u": tanh_u, "ad": ad, "drop_h": drop_h, "drop_y": drop_y}


def _mlp_backward(gr, params, prefix, cache, grads):
    w1, w2 = params[f"{prefix}.mlp.w1"], params[f"{prefix}.mlp.w2"]
    if cache["drop_y"] is not None:
        gr = gr * cache["drop_y"]
    grads[f"{prefix}.mlp.w2"] += gr.T @ cache["ad"]
    grads[f"{prefix}.mlp.b2"] += gr.sum(axis=0)
    gad = gr @ w2
    if cache["drop_h"] is not None:
        gad = gad * cache["drop_h"]
    gh = _gelu_backward(gad, cache["h"], cache["tanh_u"])
    grads[f"{prefix}.mlp.w1"] += gh.T @ cache["x"]
    grads[f"{prefix}.mlp.b1"] += gh.sum(axis=0)
    return gh @ w1


def _block_forward(x, params, prefix, cfg, lora=None, train=False, rng=None, lora_drop=0.0):
    n1, ln1 = _layernorm(x, params[f"{prefix}.ln1.g"], params[f"{prefix}.ln1.b"])
    a, attn = _attn_forward(n1, params, prefix, cfg, lora, train, rng, lora_drop)
    x2 = x + a
    n2, ln2 = _layernorm(x2, params[f"{prefix}.ln2.g"], params[f"{prefix}.ln2.b"])
    m, mlp = _mlp_forward(n2, params, prefix, cfg, train, rng)
    out = x2 + m
    if np.isnan(out).any():
        raise FloatingPointError(f"NaN detected after block {prefix}")
    return out, {"ln1": ln1, "attn": attn, "ln2": ln2, "mlp": mlp}


def _block_backward(gr, params, prefix, cfg, cache, grads, lora_grads):
    gm = _mlp_backward(gr, params, prefix, cache["mlp"], grads)
    gx2, dg2, db2 = _layernorm_backward(gm, cache["ln2"])
    grads[f"{prefix}.ln2.g"] += dg2
    grads[f"{prefix}.ln2.b"] += db2
    gx2 = gx2 + gr
    ga = _attn_backward(gx2, params, prefix, cfg, cache["attn"], grads, lora_grads)
    gx, dg1, db1 = _layernorm_backward(ga, cache["ln1"])
    grads[f"{prefix}.ln1.g"] += dg1
    grads[f"{prefix}.ln1.b"] += db1
    return gx + gx2


# ---------------------------------------------------------------------------
# encoder / decoder


def embed(patches: np.ndarray, params: dict) -> np.ndarray:
    """Affine projection of pixel patches to token space."""
    return patches @ params["patch_embed.w"].T + params["patch_embed.b"]


def encode(tokens, params, cfg: BackboneConfig, lora=None, train=False, rng=None, lora_drop=0.0):
    """Run encoder blocks over (visible) tokens; returns (latent, caches)."""
    x = tokens
    caches = []
    for i in range(cfg.e_layers):
        layer_lora = lora.get(f"enc{i}") if lora else None
        x, c = _block_forward(x, params, f"enc{i}", cfg, layer_lora, train, rng, lora_drop)
        caches.append(c)
    return x, caches


def encode_backward(gr, params, cfg, caches, grads, lora_grads):
    for i in reversed(range(cfg.e_layers)):
        gr = _block_backward(gr, params, f"enc{i}", cfg, caches[i], grads, lora_grads)
    return gr


def decode_with_mask_tokens(latent, vis_idx, params, cfg: BackboneConfig, train=False, rng=None):
    """Scatter visible latents into the full grid, fill the rest with the mask
    token, add decoder positions, decode, and project to patch pixels."""
    L = cfg.n_patches
    if latent.shape[0] != vis_idx.shape[0]:
        raise ValueError(
            f"latent count {latent.shape[0]} != visible count {vis_idx.shape[0]}"
        )
    full = np.tile(params["mask_token"], (L, 1))
    full[vis_idx] = latent
    x = full + params["dec_pos"]
    caches = []
    for i in range(cfg.d_layers):
        x, c = _block_forward(x, params, f"dec{i}", cfg, None, train, rng)
        caches.append(c)
    n, ln = _layernorm(x, params["dec_norm.g"], params["dec_norm.b"])
    out = n @ params["head.w"].T + params["head.b"]
    return out, {"blocks": caches, "ln": ln, "n": n, "vis_idx": vis_idx, "L": L}


def decode_backward(gr, params, cfg, cache, grads, lora_grads):
    grads["head.w"] += gr.T @ cache["n"]
    grads["head.b"] += gr.sum(axis=0)
    gn = gr @ params["head.w"]
    gx, dg, db = _layernorm_backward(gn, cache["ln"])
    grads["dec_norm.g"] += dg
    grads["dec_norm.b"] += db
    for i in reversed(range(cfg.d_layers)):
        gx = _block_backward(gx, params, f"dec{i}", cfg, cache["blocks"][i], grads, lora_grads)
    grads["dec_pos"] += gx
    vis_idx = cache["vis_idx"]
    masked = np.ones(cache["L"], dtype=bool)
    masked[vis_idx] = False
    grads["mask_token"] += gx[masked].sum(axis=0)
    return gx[vis_idx]


# ---------------------------------------------------------------------------
# full autoencoder pass (one branch)


def autoencode(
    image3: np.ndarray,
    params: dict,
    cfg: BackboneConfig,
    vis_cols: int,
    lora=None,
    tga: adapter.TgaParams | None = None,
    tga_table: np.ndarray | None = None,
    train: bool = False,
    rng=None,
    lora_drop: float = 0.0,
):
    """Image -> patches -> tokens (-> TGA) -> +pos -> encode -> decode -> image."""
    grid = (cfg.grid_rows, cfg.grid_cols)
    vis_idx = visible_indices(grid, vis_cols)
    seq = PatchSequence(
        tokens=patchify(image3, cfg.patch_size),
        grid_shape=grid,
        visible_count=vis_idx.size,
    )
    tokens = embed(seq.tokens, params)
    tga_cache = None
    if tga is not None:
        tokens, tga_cache = adapter.tga_forward(tokens, tga, tga_table)
    tokens = tokens + params["enc_pos"]
    latent, enc_caches = encode(
        tokens[vis_idx], params, cfg, lora, train, rng, lora_drop
    )
    out_patches, dec_cache = decode_with_mask_tokens(
        latent, vis_idx, params, cfg, train, rng
    )
    image_out = unpatchify(out_patches, seq.grid_shape, cfg.patch_size)
    cache = {
        "patches": seq.tokens,
        "tga": tga_cache,
        "vis_idx": vis_idx,
        "enc": enc_caches,
        "dec": dec_cache,
        "grid": seq.grid_shape,
    }
    return image_out, cache


def autoencode_backward(grad_image3, params, cfg: BackboneConfig, cache, tga=None):
    """Gradients for backbone params, adapters, and the input image.

    Base-weight gradients are zeroed when cfg.frozen (adapters still receive
    theirs); the returned dicts always carry every key for uniform handling.
    """
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    lora_grads: dict = {}
    gp = patchify(grad_image3, cfg.patch_size)
    glat = decode_backward(gp, params, cfg, cache["dec"], grads, lora_grads)
    gvis = encode_backward(glat, params, cfg, cache["enc"], grads, lora_grads)
    gtokens = np.zeros((cfg.n_patches, cfg.d_model))
    gtokens[cache["vis_idx"]] = gvis
    grads["enc_pos"] += gtokens
    tga_grads = None
    if cache["tga"] is not None:
        tga_grads, gtokens = adapter.tga_backward(gtokens, cache["tga"], tga)
    grads["patch_embed.w"] += gtokens.T @ cache["patches"]
    grads["patch_embed.b"] += gtokens.sum(axis=0)
    gpatches = gtokens @ params["patch_embed.w"]
    grad_image = unpatchify(gpatches, cache["grid"], cfg.patch_size)
    if cfg.frozen:
        grads = {k: np.zeros_like(v) for k, v in grads.items()}
    return grads, lora_grads, tga_grads, grad_image


# ---------------------------------------------------------------------------
# named-tensor serialization (magic "NTF1", little-endian)

_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def save_weights(path, tensors: dict[str, np.ndarray]) -> None:
    """Write a name -> array dict; row-major payloads, bit-exact round trip."""
    with open(path, "wb") as fh:
        fh.write(b"NTF1")
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr)
            code = _DTYPE_CODES.get(arr.dtype)
            if code is None:
                raise ValueError(f"tensor {name!r} has unsupported dtype {arr.dtype}")
            nb = name.encode("utf-8")
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<BB", code, arr.ndim))
            for d in arr.shape:
                fh.write(struct.pack("<I", d))
            fh.write(arr.astype(_DTYPES[code], copy=False).tobytes())


def read_weights(path) -> dict[str, np.ndarray]:
    """Read an NTF1 file back into a name -> array dict."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != b"NTF1":
        raise ValueError(f"{path}: bad magic {raw[:4]!r}")
    off = 4
    (count,) = struct.unpack_from("<I", raw, off)
    off += 4
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off : off + nlen].decode("utf-8")
        off += nlen
        code, rank = struct.unpack_from("<BB", raw, off)
        off += 2
        if code not in _DTYPES:
            raise ValueError(f"{path}: tensor {name!r} has unknown dtype code {code}")
        shape = struct.unpack_from(f"<{rank}I", raw, off) if rank else ()
        off += 4 * rank
        dtype = _DTYPES[code]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize if rank else dtype.itemsize
        if off + nbytes > len(raw):
            raise ValueError(f"{path}: truncated payload for tensor {name!r}")
        arr = np.frombuffer(raw[off : off + nbytes], dtype=dtype).reshape(shape)
        off += nbytes
        if name in out:
            raise ValueError(f"{path}: duplicate tensor name {name!r}")
        out[name] = arr.astype(arr.dtype.newbyteorder("="))
    return out


def load_weights(path, params: dict[str, np.ndarray]) -> None:
    """Load tensors into an existing parameter dict, validating names/shapes."""
    loaded = read_weights(path)
    unknown = sorted(set(loaded) - set(params))
    if unknown:
        raise ValueError(f"unknown tensor names: {unknown}")
    missing = sorted(set(params) - set(loaded))
    if missing:
        raise ValueError(f"missing tensor names: {missing}")
    for name, arr in loaded.items():
        if arr.shape != params[name].shape:
            raise ValueError(
                f"tensor {name!r} has shape {arr.shape}, expected {params[name].shape}"
            )
        params[name] = arr.astype(np.float64)
