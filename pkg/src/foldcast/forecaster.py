"""Dual-branch forecasting model and training loop.

Each variable of a window is normalized, rendered to a masked image, and sent
through two branches sharing one backbone: the spectral branch applies the
magnitude aligner before the (frozen) autoencoder, the structural branch feeds
the raw rendering through the adapter-equipped autoencoder.  Both decoded
images are mapped back to normalized forecasts, blended by a learnable clamped
scalar, and denormalized.  Training minimizes MSE in normalized space with
Adam; metrics are reported on denormalized values.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import adapter, backbone as bb, sma
from .backbone import BackboneConfig
from .data import TimeSeriesWindow, denormalize, normalize, normalize_target
from .rendering import (
    RenderSpec,
    grayscale,
    reconstruct,
    reconstruct_backward,
    render,
    to_three_channel,
)
from .sma import EnhancerParams, SmaConfig


@dataclass(frozen=True)
class ForecastOutcome:
    prediction: np.ndarray  # [H, N] denormalized
    y_structural: np.ndarray  # [H, N] normalized-space branch output
    y_spectral: np.ndarray  # [H, N] normalized-space branch output
    mse: float
    mae: float


@dataclass
class ModelConfig:
    render: RenderSpec = field(default_factory=RenderSpec)
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    sma: SmaConfig = field(default_factory=SmaConfig)
    lora_rank: int = 4
    lora_alpha: float = 16.0
    lora_dropout: float = 0.1
    use_tga: bool = True
    use_sma: bool = True
    fixed_beta: float | None = None
    beta_init: float = 0.5

    def __post_init__(self):
        if self.render.patch_size != self.backbone.patch_size:
            raise ValueError("render and backbone patch sizes differ")
        if (
            self.render.image_height != self.backbone.image_height
            or self.render.image_width != self.backbone.image_width
        ):
            raise ValueError("render and backbone image dims differ")


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 8
    epochs: int = 10
    patience: int = 3
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.patience < 0:
            raise ValueError("patience must be >= 0")


def clamp_beta(beta: float) -> float:
    return min(max(beta, 0.0), 1.0)


def fuse(y_st: np.ndarray, y_sp: np.ndarray, beta: float) -> np.ndarray:
    """Convex combination beta * y_st + (1 - beta) * y_sp."""
    if y_st.shape != y_sp.shape:
        raise ValueError(f"branch shapes differ: {y_st.shape} vs {y_sp.shape}")
    if beta == 1.0:
        return y_st.copy()
    if beta == 0.0:
        return y_sp.copy()
    return beta * y_st + (1.0 - beta) * y_sp


def mse(pred: np.ndarray, truth: np.ndarray) -> float:
    return float(np.mean((np.asarray(pred) - np.asarray(truth)) ** 2))


def mae(pred: np.ndarray, truth: np.ndarray) -> float:
    return float(np.mean(np.abs(np.asarray(pred) - np.asarray(truth))))


def seasonal_naive(w: TimeSeriesWindow, period: int) -> np.ndarray:
    """Repeat the last observed period across the horizon (raw units)."""
    T = w.context.shape[0]
    H = w.target.shape[0]
    if T < period:
        raise ValueError("context shorter than one period")
    last = w.context[T - period :]
    reps = np.arange(H) % period
    return last[reps]


class ForecastModel:
    """Parameter container plus forward/backward for the dual-branch network."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        D = cfg.backbone.d_model
        self.bb_params = bb.init_backbone(cfg.backbone, rng)
        self.enhancer = sma.init_enhancer(rng, channels=16, dropout_rate=0.1)
        self.tga = adapter.init_tga(rng, D)
        self.lora = {
            f"enc{i}": {
                n: adapter.init_lora(rng, D, cfg.lora_rank, cfg.lora_alpha)
                for n in ("q", "k", "v")
            }
            for i in range(cfg.backbone.e_layers)
        }
        self.beta_raw = np.array([cfg.beta_init], dtype=np.float64)
        self.tga_table = adapter.sinusoid_table(cfg.backbone.n_patches, D)

    # -- parameter bookkeeping -------------------------------------------

    def named_params(self) -> dict[str, np.ndarray]:
        """Flat name -> array view of every trainable tensor (shared storage)."""
        out = {f"bb.{k}": v for k, v in self.bb_params.items()}
        for k in self.enhancer.grad_keys():
            out[f"sma.{k}"] = getattr(self.enhancer, k)
        out["tga.W_proj"] = self.tga.W_proj
        out["tga.w_fusion"] = self.tga.w_fusion
        for pfx, factors in self.lora.items():
            for n, f in factors.items():
                out[f"lora.{pfx}.{n}.A"] = f.A
                out[f"lora.{pfx}.{n}.B"] = f.B
        out["fuse.beta"] = self.beta_raw
        return out

    def state_tensors(self) -> dict[str, np.ndarray]:
        """Parameters plus non-trainable buffers, for checkpointing."""
        out = dict(self.named_params())
        out["sma.bn_running_mean"] = self.enhancer.bn_running_mean
        out["sma.bn_running_var"] = self.enhancer.bn_running_var
        return out

    def trainable_names(self) -> list[str]:
        names = []
        if not self.cfg.backbone.frozen:
            names += [f"bb.{k}" for k in self.bb_params]
        if self.cfg.use_sma:
            names += [f"sma.{k}" for k in self.enhancer.grad_keys()]
        if self.cfg.use_tga:
            names += ["tga.W_proj", "tga.w_fusion"]
        for pfx, factors in self.lora.items():
            for n in factors:
                names += [f"lora.{pfx}.{n}.A", f"lora.{pfx}.{n}.B"]
        if self.cfg.fixed_beta is None:
            names.append("fuse.beta")
        return names

    @property
    def beta(self) -> float:
        if self.cfg.fixed_beta is not None:
            return clamp_beta(self.cfg.fixed_beta)
        return clamp_beta(float(self.beta_raw[0]))

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.state_tensors().items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for k, v in self.state_tensors().items():
            v[...] = snap[k]

    def save(self, path) -> None:
        bb.save_weights(path, self.state_tensors())

    def load(self, path) -> None:
        loaded = bb.read_weights(path)
        current = self.state_tensors()
        unknown = sorted(set(loaded) - set(current))
        if unknown:
            raise ValueError(f"unknown tensor names: {unknown}")
        missing = sorted(set(current) - set(loaded))
        if missing:
            raise ValueError(f"missing tensor names: {missing}")
        for name, arr in loaded.items():
            if arr.shape != current[name].shape:
                raise ValueError(
                    f"tensor {name!r} has shape {arr.shape}, expected {current[name].shape}"
                )
            current[name][...] = arr

    # -- forward / backward ----------------------------------------------

    def _branch_structural(self, img, vis_cols, train, rng):
        img3 = to_three_channel(img)
        tga = self.tga if self.cfg.use_tga else None
        out3, cache = bb.autoencode(
            img3,
            self.bb_params,
            self.cfg.backbone,
            vis_cols,
            lora=self.lora,
            tga=tga,
            tga_table=self.tga_table,
            train=train,
            rng=rng,
            lora_drop=self.cfg.lora_dropout,
        )
        return grayscale(out3), cache

    def _branch_spectral(self, img, vis_cols, train, rng):
        if self.cfg.use_sma:
            aligned, sma_cache = sma.sma_forward(
                img, self.enhancer, self.cfg.sma, mode="train" if train else "eval", rng=rng
            )
        else:
            aligned, sma_cache = img, None
        img3 = to_three_channel(aligned)
        out3, cache = bb.autoencode(
            img3, self.bb_params, self.cfg.backbone, vis_cols, train=train, rng=rng
        )
        return grayscale(out3), {"bb": cache, "sma": sma_cache}

    def forward(self, w: TimeSeriesWindow, train: bool = False, rng=None, want_cache: bool = False):
        """Full dual-branch pass over every variable of one window."""
        x_norm = normalize(w)
        T, N = x_norm.shape
        H = w.target.shape[0]
        beta = self.beta
        y_st = np.zeros((H, N))
        y_sp = np.zeros((H, N))
        caches = [] if want_cache else None
        for v in range(N):
            ri = render(x_norm[:, v], H, self.cfg.render)
            vis_cols = ri.visible_width // self.cfg.render.patch_size
            g_st, c_st = self._branch_structural(ri.pixels, vis_cols, train, rng)
            g_sp, c_sp = self._branch_spectral(ri.pixels, vis_cols, train, rng)
            y_st[:, v] = reconstruct(g_st, ri)
            y_sp[:, v] = reconstruct(g_sp, ri)
            if want_cache:
                caches.append({"ri": ri, "st": c_st, "sp": c_sp})
        yhat_norm = fuse(y_st, y_sp, beta)
        pred = denormalize(yhat_norm, w)
        outcome = ForecastOutcome(
            prediction=pred,
            y_structural=y_st,
            y_spectral=y_sp,
            mse=mse(pred, w.target),
            mae=mae(pred, w.target),
        )
        if want_cache:
            return outcome, {"vars": caches, "yhat_norm": yhat_norm}
        return outcome

    def loss_and_grads(self, w: TimeSeriesWindow, rng=None, train: bool = True):
        """Normalized-space MSE loss and gradients for every trainable tensor."""
        outcome, cache = self.forward(w, train=train, rng=rng, want_cache=True)
        target = normalize_target(w)
        yhat = cache["yhat_norm"]
        diff = yhat - target
        loss = float(np.mean(diff**2))
        g_yhat = 2.0 * diff / diff.size
        grads = {k: np.zeros_like(v) for k, v in self.named_params().items()}
        beta = self.beta
        grads["fuse.beta"][0] = float(
            np.sum(g_yhat * (outcome.y_structural - outcome.y_spectral))
        )
        for v, c in enumerate(cache["vars"]):
            ri = c["ri"]
            g_st = beta * g_yhat[:, v]
            g_sp = (1.0 - beta) * g_yhat[:, v]
            # structural branch
            g_img3 = np.repeat(reconstruct_backward(g_st, ri)[None] / 3.0, 3, axis=0)
            bbg, lg, tg, _ = bb.autoencode_backward(
                g_img3, self.bb_params, self.cfg.backbone, c["st"],
                tga=self.tga if self.cfg.use_tga else None,
            )
            self._accumulate(grads, bbg, lg, tg)
            # spectral branch
            g_img3 = np.repeat(reconstruct_backward(g_sp, ri)[None] / 3.0, 3, axis=0)
            bbg, lg, _, g_in3 = bb.autoencode_backward(
                g_img3, self.bb_params, self.cfg.backbone, c["sp"]["bb"]
            )
            self._accumulate(grads, bbg, lg, None)
            if self.cfg.use_sma:
                sg, _ = sma.sma_backward(g_in3.sum(axis=0), c["sp"]["sma"], self.enhancer)
                for k, val in sg.items():
                    grads[f"sma.{k}"] += val
        return loss, grads, outcome

    def _accumulate(self, grads, bb_grads, lora_grads, tga_grads):
        for k, val in bb_grads.items():
            grads[f"bb.{k}"] += val
        for pfx, per_proj in lora_grads.items():
            for n, fg in per_proj.items():
                grads[f"lora.{pfx}.{n}.A"] += fg["A"]
                grads[f"lora.{pfx}.{n}.B"] += fg["B"]
        if tga_grads is not None:
            grads["tga.W_proj"] += tga_grads["W_proj"]
            grads["tga.w_fusion"] += tga_grads["w_fusion"]


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def init(cls, params: dict[str, np.ndarray], names) -> "AdamState":
        return cls(
            m={n: np.zeros_like(params[n]) for n in names},
            v={n: np.zeros_like(params[n]) for n in names},
        )


def adam_step(params, grads, state: AdamState, cfg: TrainConfig) -> None:
    """Bias-corrected Adam update, in place, over the tensors in `state`."""
    state.t += 1
    bc1 = 1.0 - cfg.beta1**state.t
    bc2 = 1.0 - cfg.beta2**state.t
    for name in state.m:
        g = grads[name]
        state.m[name] = cfg.beta1 * state.m[name] + (1.0 - cfg.beta1) * g
        state.v[name] = cfg.beta2 * state.v[name] + (1.0 - cfg.beta2) * g * g
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        params[name] -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)


# ---------------------------------------------------------------------------
# training / evaluation


def _val_loss(model: ForecastModel, windows) -> float:
    total = 0.0
    for w in windows:
        outcome, cache = model.forward(w, train=False, want_cache=True)
        diff = cache["yhat_norm"] - normalize_target(w)
        total += float(np.mean(diff**2))
    return total / len(windows)


def train(model: ForecastModel, train_windows, val_windows, cfg: TrainConfig) -> dict:
    """Adam training with early stopping; returns the report dict.

    Beta is clamped to [0, 1] right after every optimizer step (projected
    gradient).  The best-validation snapshot is restored before returning.
    """
    if not train_windows or not val_windows:
        raise ValueError("need at least one train and one val window")
    rng = np.random.default_rng(cfg.seed)
    params = model.named_params()
    state = AdamState.init(params, model.trainable_names())
    report = {"epoch0_val_mse": _val_loss(model, val_windows), "epochs": []}
    best_val = report["epoch0_val_mse"]
    best_snap = model.snapshot()
    best_epoch = 0
    bad = 0
    n = len(train_windows)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            grads_sum = None
            for idx in batch:
                loss, grads, _ = model.loss_and_grads(train_windows[idx], rng=rng)
                epoch_loss += loss
                if grads_sum is None:
                    grads_sum = grads
                else:
                    for k in grads_sum:
                        grads_sum[k] += grads[k]
            for k in grads_sum:
                grads_sum[k] /= len(batch)
            adam_step(params, grads_sum, state, cfg)
            np.clip(model.beta_raw, 0.0, 1.0, out=model.beta_raw)
        train_mse = epoch_loss / n
        val_mse = _val_loss(model, val_windows)
        report["epochs"].append(
            {"train_mse": train_mse, "val_mse": val_mse, "beta": model.beta}
        )
        if val_mse < best_val:
            best_val = val_mse
            best_snap = model.snapshot()
            best_epoch = epoch
            bad = 0
        else:
            bad += 1
            if bad > cfg.patience:
                break
    model.restore(best_snap)
    report["best_epoch"] = best_epoch
    report["best_val_mse"] = best_val
    return report


def evaluate(windows, predict_fn, workers: int = 1) -> dict:
    """Unweighted mean of per-window denormalized MSE/MAE.

    `predict_fn(window)` must return a denormalized [H, N] prediction; a
    ForecastModel's eval-mode forward slots in directly.
    """
    if not windows:
        raise ValueError("no windows to evaluate")

    def one(w):
        pred = predict_fn(w)
        return mse(pred, w.target), mae(pred, w.target)

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            metrics = list(pool.map(one, windows))
    else:
        metrics = [one(w) for w in windows]
    return {
        "mse": float(np.mean([m[0] for m in metrics])),
        "mae": float(np.mean([m[1] for m in metrics])),
        "n_windows": len(windows),
    }


def model_predict_fn(model: ForecastModel):
    return lambda w: model.forward(w, train=False).prediction


# ---------------------------------------------------------------------------
# gradient verification


GRADCHECK_BOUNDS = {
    "sma": 1e-4,
    "tga": 1e-4,
    "lora": 1e-4,
    "beta": 1e-10,
    "backbone": 1e-3,
}


def _max_rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    a = np.asarray(analytic, dtype=np.float64).ravel()
    f = np.asarray(numeric, dtype=np.float64).ravel()
    denom = np.maximum(np.maximum(np.abs(a), np.abs(f)), 1e-7)
    return float(np.max(np.abs(a - f) / denom))


def _fd_on_arrays(loss_fn, arrays, analytic, h=1e-4, rng=None, max_per_tensor=16):
    """Central finite differences on (a sample of) each tensor's entries."""
    worst = 0.0
    for arr, grad in zip(arrays, analytic):
        flat = arr.reshape(-1)
        gflat = np.asarray(grad).reshape(-1)
        idxs = np.arange(flat.size)
        if rng is not None and flat.size > max_per_tensor:
            idxs = rng.choice(flat.size, size=max_per_tensor, replace=False)
        for ix in idxs:
            orig = flat[ix]
            flat[ix] = orig + h
            lp = loss_fn()
            flat[ix] = orig - h
            lm = loss_fn()
            flat[ix] = orig
            fd = (lp - lm) / (2.0 * h)
            worst = max(worst, _max_rel_err(gflat[ix], fd))
    return worst


def gradcheck(component: str = "all", seed: int = 0, inject_fault: bool = False) -> dict:
    """Finite-difference verification per parameter group.

    Returns {"groups": {name: {"max_rel_err", "bound", "passed"}}, "passed"}.
    `inject_fault` corrupts one analytic gradient by 10% to prove the check
    can fail.
    """
    groups = ("sma", "tga", "lora", "beta", "backbone") if component == "all" else (component,)
    results = {}
    for name in groups:
        if name not in GRADCHECK_BOUNDS:
            raise ValueError(f"unknown gradcheck component {name!r}")
        err = _GRADCHECKS[name](seed, inject_fault)
        bound = GRADCHECK_BOUNDS[name]
        results[name] = {
            "max_rel_err": err,
            "bound": bound,
            "passed": bool(err < bound),
        }
    return {"groups": results, "passed": all(r["passed"] for r in results.values())}


def _gradcheck_sma(seed, inject_fault):
    rng = np.random.default_rng(seed)
    img = rng.normal(size=(8, 8))
    gout = rng.normal(size=(8, 8))
    p = sma.init_enhancer(np.random.default_rng(seed + 1), channels=4)
    cfg = SmaConfig(lam=0.3)

    def loss():
        out, _ = sma.sma_forward(img, copy.deepcopy(p), cfg)
        return float(np.sum(out * gout))

    _, cache = sma.sma_forward(img, copy.deepcopy(p), cfg)
    grads, _ = sma.sma_backward(gout, cache, p)
    if inject_fault:
        grads["conv1_w"] = grads["conv1_w"] * 1.1
    arrays = [getattr(p, k) for k in p.grad_keys()]
    analytic = [grads[k] for k in p.grad_keys()]
    return _fd_on_arrays(loss, arrays, analytic, rng=rng)


def _gradcheck_tga(seed, inject_fault):
    rng = np.random.default_rng(seed)
    D, L = 8, 6
    p = adapter.init_tga(rng, D)
    p.w_fusion[0] = 0.2
    table = adapter.sinusoid_table(L, D)
    X = rng.normal(size=(L, D))
    gout = rng.normal(size=(L, D))

    def loss():
        out, _ = adapter.tga_forward(X, p, table)
        return float(np.sum(out * gout))

    _, cache = adapter.tga_forward(X, p, table)
    grads, _ = adapter.tga_backward(gout, cache, p)
    if inject_fault:
        grads["W_proj"] = grads["W_proj"] * 1.1
    return _fd_on_arrays(
        loss, [p.W_proj, p.w_fusion], [grads["W_proj"], grads["w_fusion"]], rng=rng
    )


def _gradcheck_lora(seed, inject_fault):
    rng = np.random.default_rng(seed)
    D, L, r = 8, 6, 2
    W = rng.normal(size=(D, D))
    b = rng.normal(size=D)
    f = adapter.init_lora(rng, D, r, 16.0)
    f.B = rng.normal(0.0, 0.1, size=f.B.shape)
    x = rng.normal(size=(L, D))
    gout = rng.normal(size=(L, D))

    def loss():
        y, _ = adapter.lora_project(x, W, b, f)
        return float(np.sum(y * gout))

    _, cache = adapter.lora_project(x, W, b, f)
    _, _, _, fg = adapter.lora_project_backward(gout, W, cache)
    if inject_fault:
        fg["A"] = fg["A"] * 1.1
    return _fd_on_arrays(loss, [f.A, f.B], [fg["A"], fg["B"]], rng=rng)


def _gradcheck_beta(seed, inject_fault):
    rng = np.random.default_rng(seed)
    y_st = rng.normal(size=(12, 2))
    y_sp = rng.normal(size=(12, 2))
    target = rng.normal(size=(12, 2))
    beta = 0.37
    yhat = fuse(y_st, y_sp, beta)
    g_yhat = 2.0 * (yhat - target) / yhat.size
    analytic = float(np.sum(g_yhat * (y_st - y_sp)))
    if inject_fault:
        analytic *= 1.1
    # closed form: d/dbeta mean((beta*(y_st-y_sp) + y_sp - target)^2)
    closed = float(np.mean(2.0 * (yhat - target) * (y_st - y_sp)))
    return _max_rel_err(np.array([analytic]), np.array([closed]))


def _gradcheck_backbone(seed, inject_fault):
    rng = np.random.default_rng(seed)
    cfg = BackboneConfig(
        image_height=32, image_width=32, patch_size=8, d_model=16, n_heads=2,
        e_layers=2, d_layers=1, d_ff=32, dropout=0.0, frozen=False,
    )
    params = bb.init_backbone(cfg, rng)
    img = rng.normal(size=(3, 32, 32))
    gout = rng.normal(size=(3, 32, 32))

    def loss():
        out, _ = bb.autoencode(img, params, cfg, vis_cols=2)
        return float(np.sum(out * gout))

    _, cache = bb.autoencode(img, params, cfg, vis_cols=2)
    grads, _, _, _ = bb.autoencode_backward(gout, params, cfg, cache)
    if inject_fault:
        grads["head.w"] = grads["head.w"] * 1.1
    names = sorted(params)
    return _fd_on_arrays(
        loss, [params[n] for n in names], [grads[n] for n in names], rng=rng,
        max_per_tensor=4,
    )


_GRADCHECKS = {
    "sma": _gradcheck_sma,
    "tga": _gradcheck_tga,
    "lora": _gradcheck_lora,
    "beta": _gradcheck_beta,
    "backbone": _gradcheck_backbone,
}
