"""Desk-scale two-tower model, spherical classifier head, expert routing,
and the optimizer loops for contrastive pre-training and frozen-tower
fine-tuning.

Towers are 2-layer tanh perceptrons whose outputs are L2-projected onto
the sphere; the classifier head is an affine+L2 projection scored against
unit-norm class prototypes with the bounded T-style metric; the optional
mixture-of-experts router softmaxes the same metric against expert
prototypes and mixes the top-k experts.  Updates use Adam with decoupled
weight decay (betas 0.9/0.98, decay 0.05); prototype rows are re-projected
onto the sphere after every step.  Everything is deterministic given the
seed: same config, same bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .align import SoftTargetConfig, ema_update, soft_targets
from .exceptions import DomainError, NonFiniteError, ShapeError
from .metric import MetricConfig
from .numerics import make_rng

__all__ = [
    "TwoTowerEncoder",
    "ClassifierHead",
    "ExpertRouter",
    "TrainState",
    "PretrainConfig",
    "FinetuneConfig",
    "forward_embed",
    "classify_logits",
    "moe_forward",
    "train_step",
    "fit_pretrain",
    "fit_finetune",
    "evaluate_accuracy",
]

LOSS_KINDS = ("thp", "cosine", "vmf")


def _init_affine(rng, n_in: int, n_out: int):
    w = rng.standard_normal((n_in, n_out)) / math.sqrt(n_in)
    b = np.zeros(n_out)
    return w, b


def _unit_rows(x: np.ndarray) -> np.ndarray:
    return x / np.maximum(np.linalg.norm(x, axis=-1, keepdims=True), 1e-12)


class TwoTowerEncoder:
    """Two independent raw->sphere towers sharing an output dimension.

    Parameters live in a flat name->array dict ("a.w1", "b.b2", ...), so
    the optimizer, EMA copies, and checkpoints all speak the same
    dictionary language.
    """

    TOWERS = ("a", "b")

    def __init__(self, raw_dim: int, embed_dim: int, hidden_dim: int, params: dict):
        if embed_dim < 4:
            raise DomainError(f"embed_dim must be >= 4, got {embed_dim}")
        self.raw_dim = int(raw_dim)
        self.embed_dim = int(embed_dim)
        self.hidden_dim = int(hidden_dim)
        self.params = params

    @classmethod
    def init(cls, raw_dim: int, embed_dim: int, hidden_dim: int | None, rng):
        hidden_dim = int(hidden_dim or 2 * embed_dim)
        params = {}
        for tower in cls.TOWERS:
            w1, b1 = _init_affine(rng, raw_dim, hidden_dim)
            w2, b2 = _init_affine(rng, hidden_dim, embed_dim)
            params.update(
                {f"{tower}.w1": w1, f"{tower}.b1": b1, f"{tower}.w2": w2, f"{tower}.b2": b2}
            )
        return cls(raw_dim, embed_dim, hidden_dim, params)

    def param_names(self) -> tuple:
        return tuple(sorted(self.params))

    def copy(self) -> "TwoTowerEncoder":
        return TwoTowerEncoder(
            self.raw_dim,
            self.embed_dim,
            self.hidden_dim,
            {k: v.copy() for k, v in self.params.items()},
        )

    def _tower(self, modality: int) -> str:
        if modality not in (0, 1):
            raise DomainError(f"modality must be 0 or 1, got {modality}")
        return self.TOWERS[modality]

    def embed(self, raw: np.ndarray, modality: int) -> np.ndarray:
        """Unit-norm embeddings, plain numpy (no graph)."""
        raw = np.asarray(raw, dtype=np.float64)
        if raw.ndim == 1:
            raw = raw[None, :]
        if raw.shape[1] != self.raw_dim:
            raise ShapeError(f"raw dim {raw.shape[1]}, tower expects {self.raw_dim}")
        p, t = self.params, self._tower(modality)
        h = np.tanh(raw @ p[f"{t}.w1"] + p[f"{t}.b1"])
        out = h @ p[f"{t}.w2"] + p[f"{t}.b2"]
        if not np.all(np.isfinite(out)):
            raise NonFiniteError("encoder forward produced non-finite activations",
                                 node=f"{t}.w2")
        return _unit_rows(out)

    def embed_graph(self, tensors: dict, raw: np.ndarray, modality: int):
        """Differentiable embedding through tape tensors."""
        t = self._tower(modality)
        x = ad.constant(raw, name="raw")
        h = ad.tanh(ad.matmul(x, tensors[f"{t}.w1"]) + tensors[f"{t}.b1"])
        out = ad.matmul(h, tensors[f"{t}.w2"]) + tensors[f"{t}.b2"]
        return ad.row_normalize(out)


def forward_embed(encoder: TwoTowerEncoder, raw_a, raw_b):
    """Embed paired raw batches; both outputs have unit rows."""
    return encoder.embed(raw_a, 0), encoder.embed(raw_b, 1)


class ClassifierHead:
    """Affine+L2 projector scored against unit class prototypes.

    ``project`` maps an input feature to the sphere; the logit of class c
    is the bounded T-style metric between prototype row c and the
    projection.  With ``trainable_kappa`` the concentration itself is a
    parameter (initialized at its configured value) and is excluded from
    weight decay.
    """

    def __init__(self, in_dim: int, embed_dim: int, n_classes: int, params: dict,
                 metric: MetricConfig, label_smoothing: float = 0.1,
                 trainable_kappa: bool = False):
        self.in_dim = int(in_dim)
        self.embed_dim = int(embed_dim)
        self.n_classes = int(n_classes)
        self.params = params
        self.metric = metric
        if not 0.0 <= label_smoothing < 1.0:
            raise DomainError(f"label_smoothing must lie in [0, 1), got {label_smoothing}")
        self.label_smoothing = float(label_smoothing)
        self.trainable_kappa = bool(trainable_kappa)

    @classmethod
    def init(cls, in_dim: int, embed_dim: int, n_classes: int, rng,
             metric: MetricConfig = MetricConfig(), label_smoothing: float = 0.1,
             trainable_kappa: bool = False):
        w, b = _init_affine(rng, in_dim, embed_dim)
        protos = _unit_rows(rng.standard_normal((n_classes, embed_dim)))
        params = {"head.w": w, "head.b": b, "head.protos": protos}
        if trainable_kappa:
            params["head.kappa"] = np.array(float(metric.kappa))
        return cls(in_dim, embed_dim, n_classes, params, metric, label_smoothing,
                   trainable_kappa)

    def param_names(self) -> tuple:
        return tuple(sorted(self.params))

    def kappa_value(self) -> float:
        if self.trainable_kappa:
            return float(self.params["head.kappa"])
        return self.metric.kappa

    def project(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.in_dim:
            raise ShapeError(f"feature dim {x.shape[1]}, head expects {self.in_dim}")
        return _unit_rows(x @ self.params["head.w"] + self.params["head.b"])

    def logits(self, x: np.ndarray) -> np.ndarray:
        z = self.project(x)
        dots = z @ self.params["head.protos"].T
        kappa, eps = self.kappa_value(), self.metric.epsilon
        return 2.0 / (kappa * (1.0 - dots) + eps)

    def logits_graph(self, tensors: dict, feats):
        z = ad.row_normalize(ad.matmul(feats, tensors["head.w"]) + tensors["head.b"])
        dots = ad.matmul(z, ad.transpose(tensors["head.protos"]))
        kappa = tensors["head.kappa"] if self.trainable_kappa else self.metric.kappa
        return 2.0 * ad.reciprocal(kappa * (1.0 - dots) + self.metric.epsilon)


def classify_logits(head: ClassifierHead, x) -> np.ndarray:
    """Per-class T-style metric logits for a single feature vector."""
    return head.logits(np.asarray(x, dtype=np.float64))[0]


class ExpertRouter:
    """Top-k mixture of affine experts routed by the T-style metric.

    Routing weights are the softmax of the metric between unit expert
    prototypes and the (unit) input; only the top-k weights survive and
    are renormalized to sum to 1.
    """

    def __init__(self, dim: int, n_experts: int, top_k: int, params: dict,
                 metric: MetricConfig):
        if not 1 <= top_k <= n_experts:
            raise DomainError(f"need 1 <= top_k <= {n_experts}, got {top_k}")
        self.dim = int(dim)
        self.n_experts = int(n_experts)
        self.top_k = int(top_k)
        self.params = params
        self.metric = metric

    @classmethod
    def init(cls, dim: int, n_experts: int, rng, top_k: int = 2,
             metric: MetricConfig = MetricConfig()):
        params = {"moe.protos": _unit_rows(rng.standard_normal((n_experts, dim)))}
        for m in range(n_experts):
            w, b = _init_affine(rng, dim, dim)
            params[f"moe.e{m}.w"] = w
            params[f"moe.e{m}.b"] = b
        return cls(dim, n_experts, top_k, params, metric)

    def param_names(self) -> tuple:
        return tuple(sorted(self.params))

    def routing_weights(self, x: np.ndarray) -> np.ndarray:
        dots = self.params["moe.protos"] @ x
        sims = 2.0 / (self.metric.kappa * (1.0 - dots) + self.metric.epsilon)
        ex = np.exp(sims - sims.max())
        w = ex / ex.sum()
        keep = np.argsort(w)[-self.top_k:]
        out = np.zeros_like(w)
        out[keep] = w[keep]
        return out / out.sum()

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise ShapeError(f"expected shape ({self.dim},), got {x.shape}")
        w = self.routing_weights(x)
        out = np.zeros(self.dim)
        for m in np.nonzero(w)[0]:
            out += w[m] * (x @ self.params[f"moe.e{m}.w"] + self.params[f"moe.e{m}.b"])
        return out

    def forward_batch_graph(self, tensors: dict, feats, feats_data: np.ndarray):
        """Differentiable batched mixture with hard top-k selection.

        The top-k support per row is chosen from the current feature
        values (selection is piecewise constant, so treating it as fixed
        within a step is exact off the selection boundary).
        """
        dots_data = feats_data @ self.params["moe.protos"].T
        sims_data = 2.0 / (self.metric.kappa * (1.0 - dots_data) + self.metric.epsilon)
        order = np.argsort(sims_data, axis=1)
        mask = np.zeros_like(sims_data)
        rows = np.arange(sims_data.shape[0])[:, None]
        mask[rows, order[:, -self.top_k:]] = 1.0

        dots = ad.matmul(feats, ad.transpose(tensors["moe.protos"]))
        sims = 2.0 * ad.reciprocal(self.metric.kappa * (1.0 - dots) + self.metric.epsilon)
        scaled = sims * mask + (mask - 1.0) * 1e9  # suppress unselected experts
        logw = ad.log_softmax(scaled)
        w = ad.exp(logw)

        out = None
        for m in range(self.n_experts):
            expert = ad.matmul(feats, tensors[f"moe.e{m}.w"]) + tensors[f"moe.e{m}.b"]
            contrib = expert * _column(w, m)
            out = contrib if out is None else out + contrib
        return out


def _column(w, m: int):
    """Column m of a 2-d tensor as an (N, 1) tensor (for row-wise mixing)."""
    sel = np.zeros((w.data.shape[1], 1))
    sel[m, 0] = 1.0
    return ad.matmul(w, ad.constant(sel))


def moe_forward(router: ExpertRouter, x) -> np.ndarray:
    """Route one feature vector through the top-k expert mixture."""
    return router.forward(np.asarray(x, dtype=np.float64))


@dataclass
class TrainState:
    """Parameters, Adam moments, frozen mask, and the run's generator."""

    params: dict
    rng: np.random.Generator
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-8
    weight_decay: float = 0.05
    frozen: frozenset = frozenset()
    renorm_rows: tuple = ()
    no_decay: tuple = ()
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, p in self.params.items():
            self.m.setdefault(name, np.zeros_like(p))
            self.v.setdefault(name, np.zeros_like(p))

    def trainable(self) -> list:
        return [n for n in sorted(self.params) if n not in self.frozen]


def train_step(state: TrainState, batch, objective) -> float:
    """One AdamW step of ``objective(tensors, batch, rng) -> scalar Tensor``.

    Frozen parameters enter the graph as constants and are never touched;
    prototype-style rows listed in ``renorm_rows`` are re-projected onto
    the sphere after the update.  A non-finite loss aborts with the state
    unchanged.
    """
    tensors = {}
    for name, value in state.params.items():
        if name in state.frozen:
            tensors[name] = ad.constant(value, name=name)
        else:
            tensors[name] = ad.parameter(value, name=name)
    loss = objective(tensors, batch, state.rng)
    if not np.all(np.isfinite(loss.data)):
        raise NonFiniteError("loss is not finite; step aborted", node="loss")
    ad.backward(loss)

    state.step += 1
    t = state.step
    bias1 = 1.0 - state.beta1**t
    bias2 = 1.0 - state.beta2**t
    for name in state.trainable():
        grad = tensors[name].grad
        if grad is None:
            grad = np.zeros_like(state.params[name])
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        update = (m / bias1) / (np.sqrt(v / bias2) + state.eps)
        if state.weight_decay and name not in state.no_decay:
            update = update + state.weight_decay * state.params[name]
        state.params[name] -= state.lr * update

    for name in state.renorm_rows:
        if name in state.frozen:
            continue
        rows = np.atleast_2d(state.params[name])
        norms = np.linalg.norm(rows, axis=-1, keepdims=True)
        if np.any(np.abs(norms - 1.0) > 1e-15):
            state.params[name] /= np.maximum(
                np.linalg.norm(state.params[name], axis=-1, keepdims=True), 1e-12
            )
    return float(loss.data)


# ---------------------------------------------------------------------------
# pre-training


@dataclass(frozen=True)
class PretrainConfig:
    raw_dim: int
    embed_dim: int
    hidden_dim: int | None = None
    metric: MetricConfig = MetricConfig(kappa=16.0, epsilon=1.0)
    soft: SoftTargetConfig = SoftTargetConfig()
    loss_kind: str = "thp"
    epochs: int = 10
    batch_size: int = 64
    lr: float = 1e-3
    weight_decay: float = 0.05
    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.loss_kind not in LOSS_KINDS:
            raise DomainError(f"loss_kind must be one of {LOSS_KINDS}, got {self.loss_kind!r}")


@dataclass
class PretrainResult:
    encoder: TwoTowerEncoder
    momentum_encoder: TwoTowerEncoder
    history: list


def _pair_logits_graph(sim_dots, cfg: PretrainConfig):
    """Map dot products to contrastive logits for the configured metric."""
    kappa, eps = cfg.metric.kappa, cfg.metric.epsilon
    if cfg.loss_kind == "thp":
        logits = 2.0 * ad.reciprocal(kappa * (1.0 - sim_dots) + eps)
    elif cfg.loss_kind == "cosine":
        logits = sim_dots
    else:  # "vmf": the log-metric kappa * t; raw exp(kappa t) logits overflow
        logits = kappa * sim_dots
    if cfg.temperature != 1.0:
        logits = logits * (1.0 / cfg.temperature)
    return logits


def _pair_logits_numpy(dots: np.ndarray, cfg: PretrainConfig) -> np.ndarray:
    kappa, eps = cfg.metric.kappa, cfg.metric.epsilon
    if cfg.loss_kind == "thp":
        logits = 2.0 / (kappa * (1.0 - dots) + eps)
    elif cfg.loss_kind == "cosine":
        logits = dots.copy()
    else:
        logits = kappa * dots
    if cfg.temperature != 1.0:
        logits = logits / cfg.temperature
    return logits


def _cross_entropy_rows(logits, targets: np.ndarray):
    logp = ad.log_softmax(logits)
    return -ad.tmean(ad.tsum(logp * ad.constant(targets), axis=1))


def fit_pretrain(cfg: PretrainConfig, raw_a, raw_b) -> PretrainResult:
    """Contrastive alignment of the two towers on paired raw batches.

    The momentum tower is an EMA copy providing soft targets each step;
    history records (epoch, step, loss, lr, mean diagonal dot product).
    """
    raw_a = np.asarray(raw_a, dtype=np.float64)
    raw_b = np.asarray(raw_b, dtype=np.float64)
    if raw_a.shape != raw_b.shape:
        raise ShapeError(f"paired batches must share shape, got {raw_a.shape} vs {raw_b.shape}")
    rng = make_rng(cfg.seed)
    encoder = TwoTowerEncoder.init(cfg.raw_dim, cfg.embed_dim, cfg.hidden_dim, rng)
    momentum = encoder.copy()
    state = TrainState(params=encoder.params, rng=rng, lr=cfg.lr,
                       weight_decay=cfg.weight_decay)

    n = raw_a.shape[0]
    history = []

    def objective(tensors, batch, _rng):
        idx = batch
        feats_a = encoder.embed_graph(tensors, raw_a[idx], 0)
        feats_b = encoder.embed_graph(tensors, raw_b[idx], 1)
        dots = ad.matmul(feats_a, ad.transpose(feats_b))
        logits_i2t = _pair_logits_graph(dots, cfg)
        logits_t2i = _pair_logits_graph(ad.transpose(dots), cfg)

        mom_a = momentum.embed(raw_a[idx], 0)
        mom_b = momentum.embed(raw_b[idx], 1)
        mom_dots = mom_a @ mom_b.T
        targets_i2t = soft_targets(_pair_logits_numpy(mom_dots, cfg), cfg.soft)
        targets_t2i = soft_targets(_pair_logits_numpy(mom_dots.T, cfg), cfg.soft)

        return 0.5 * (
            _cross_entropy_rows(logits_i2t, targets_i2t)
            + _cross_entropy_rows(logits_t2i, targets_t2i)
        )

    for epoch in range(cfg.epochs):
        order = state.rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            if idx.size < 2:
                continue
            loss = train_step(state, idx, objective)
            ema_update(encoder.params, momentum.params, cfg.soft.momentum)
            feats_a, feats_b = forward_embed(encoder, raw_a[idx], raw_b[idx])
            diag = float(np.mean(np.sum(feats_a * feats_b, axis=1)))
            history.append(
                {"epoch": epoch, "step": state.step, "loss": loss,
                 "lr": state.lr, "diag_dot": diag}
            )
    return PretrainResult(encoder=encoder, momentum_encoder=momentum, history=history)


# ---------------------------------------------------------------------------
# fine-tuning


@dataclass(frozen=True)
class FinetuneConfig:
    n_classes: int
    embed_dim: int
    metric: MetricConfig = MetricConfig(kappa=16.0, epsilon=1.0)
    label_smoothing: float = 0.1
    trainable_kappa: bool = False
    fuse_modalities: bool = False
    use_router: bool = False
    n_experts: int = 4
    top_k: int = 2
    epochs: int = 20
    batch_size: int = 64
    lr: float = 1e-4
    weight_decay: float = 0.05
    seed: int = 0


@dataclass
class FinetuneResult:
    head: ClassifierHead
    router: ExpertRouter | None
    history: list
    final_kappa: float


def _finetune_features(cfg: FinetuneConfig, encoder, raw_img, raw_txt):
    """Frozen-tower features the head consumes (image-only or fused)."""
    img = encoder.embed(raw_img, 0)
    if not cfg.fuse_modalities:
        return img
    txt = encoder.embed(raw_txt, 1)
    return np.concatenate([img, txt], axis=1)


def fit_finetune(cfg: FinetuneConfig, encoder: TwoTowerEncoder,
                 raw_img, raw_txt, labels) -> FinetuneResult:
    """Train the classifier head (and optional router) on frozen towers.

    Tower parameters ride along in the train state under the frozen mask,
    so their bit-level immutability is enforced by the same machinery the
    tests check.  Cross-entropy uses T-style metric logits with label
    smoothing.
    """
    labels = np.asarray(labels)
    rng = make_rng(cfg.seed)
    in_dim = encoder.embed_dim * (2 if cfg.fuse_modalities else 1)
    head = ClassifierHead.init(
        in_dim, cfg.embed_dim, cfg.n_classes, rng, metric=cfg.metric,
        label_smoothing=cfg.label_smoothing, trainable_kappa=cfg.trainable_kappa,
    )
    router = None
    if cfg.use_router:
        router = ExpertRouter.init(in_dim, cfg.n_experts, rng, top_k=cfg.top_k,
                                   metric=cfg.metric)

    params = dict(encoder.params)
    params.update(head.params)
    renorm = ["head.protos"]
    no_decay = ["head.kappa"] if cfg.trainable_kappa else []
    if router is not None:
        params.update(router.params)
        renorm.append("moe.protos")
    state = TrainState(
        params=params, rng=rng, lr=cfg.lr, weight_decay=cfg.weight_decay,
        frozen=frozenset(encoder.param_names()),
        renorm_rows=tuple(renorm), no_decay=tuple(no_decay),
    )
    # rebind live head/router arrays to the state's dict entries
    for name in head.params:
        head.params[name] = state.params[name]
    if router is not None:
        for name in router.params:
            router.params[name] = state.params[name]

    feats_all = _finetune_features(cfg, encoder, raw_img, raw_txt)
    n = feats_all.shape[0]
    smoothing = cfg.label_smoothing
    onehot = np.eye(cfg.n_classes)[labels]
    targets_all = (1.0 - smoothing) * onehot + smoothing / cfg.n_classes

    def objective(tensors, batch, _rng):
        idx = batch
        feats = ad.constant(feats_all[idx], name="features")
        if router is not None:
            mixed = router.forward_batch_graph(tensors, feats, feats_all[idx])
        else:
            mixed = feats
        logits = head.logits_graph(tensors, mixed)
        return _cross_entropy_rows(logits, targets_all[idx])

    history = []
    for epoch in range(cfg.epochs):
        order = state.rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            if idx.size == 0:
                continue
            loss = train_step(state, idx, objective)
            history.append({"epoch": epoch, "step": state.step, "loss": loss,
                            "lr": state.lr})
    final_kappa = head.kappa_value()
    return FinetuneResult(head=head, router=router, history=history,
                          final_kappa=final_kappa)


def evaluate_accuracy(cfg: FinetuneConfig, encoder, head, router,
                      raw_img, raw_txt, labels, class_counts=None) -> dict:
    """Top-1 accuracy overall and per many/medium/few split.

    Splits follow the long-tail convention on *training* counts: many
    > 100 samples, medium 20-100, few < 20.
    """
    labels = np.asarray(labels)
    feats = _finetune_features(cfg, encoder, raw_img, raw_txt)
    if router is not None:
        feats = np.stack([router.forward(f) for f in feats])
    preds = np.argmax(head.logits(feats), axis=1)
    out = {"overall": float(np.mean(preds == labels))}
    if class_counts is not None:
        counts = np.asarray(class_counts)
        groups = {
            "many": counts > 100,
            "medium": (counts >= 20) & (counts <= 100),
            "few": counts < 20,
        }
        for name, member in groups.items():
            mask = member[labels]
            out[name] = float(np.mean(preds[mask] == labels[mask])) if mask.any() else math.nan
    return out
