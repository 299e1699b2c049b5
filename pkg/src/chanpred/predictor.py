"""Quantile-grid channel predictors with hand-written backpropagation.

Two architectures map a flattened history of p channel vectors to a
(L, G) grid of conditional quantile estimates, one column per quantile
level: a 2-hidden-layer tanh MLP, and a 2-layer GRU that consumes the
history as a length-p sequence.  Training minimizes the mean pinball
loss over batch, component and level with Adam, adds fresh Gaussian
noise to the inputs each epoch, and keeps the parameters of the best
validation epoch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import textio

ARCHS = ("mlp", "gru")
DEFAULT_HIDDEN = {"mlp": (64, 64), "gru": (128, 128)}


class TrainingDivergedError(RuntimeError):
    """Raised when the running training loss stops being finite."""


def _default_taus():
    return np.arange(1, 10) / 10.0


@dataclass(frozen=True)
class QuantileLevels:
    """Strictly increasing quantile levels in (0, 1)."""

    taus: np.ndarray = field(default_factory=_default_taus)

    def __post_init__(self):
        object.__setattr__(self, "taus", np.asarray(self.taus, dtype=np.float64))
        t = self.taus
        if t.ndim != 1 or t.size == 0:
            raise ValueError("taus must be a nonempty 1-d array")
        if t.min() <= 0.0 or t.max() >= 1.0 or np.any(np.diff(t) <= 0.0):
            raise ValueError("taus must be strictly increasing within (0, 1)")

    @property
    def g(self) -> int:
        return self.taus.size

    @property
    def padded(self) -> np.ndarray:
        """Levels with 0 and 1 attached: the CDF grid of the prior."""
        return np.concatenate(([0.0], self.taus, [1.0]))

    @property
    def masses(self) -> np.ndarray:
        """Probability mass between consecutive padded levels."""
        return np.diff(self.padded)


@dataclass
class PredictorParams:
    """Architecture description plus the named parameter arrays."""

    arch: str
    history_len: int
    dim: int
    n_levels: int
    hidden: tuple
    seed: int
    arrays: dict

    @property
    def in_features(self) -> int:
        return self.history_len * self.dim


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _array_specs(arch, history_len, dim, n_levels, hidden):
    """Ordered name -> (shape, fan_in) map; fan_in None marks a bias."""
    out_features = dim * n_levels
    specs = {}
    if arch == "mlp":
        sizes = (history_len * dim,) + tuple(hidden) + (out_features,)
        for i in range(len(sizes) - 1):
            specs[f"W{i + 1}"] = ((sizes[i], sizes[i + 1]), sizes[i])
            specs[f"b{i + 1}"] = ((sizes[i + 1],), None)
    elif arch == "gru":
        in_size = dim
        for layer, h_size in enumerate(hidden):
            for gate in ("r", "z", "n"):
                specs[f"Wx{gate}{layer}"] = ((in_size, h_size), in_size)
                specs[f"Wh{gate}{layer}"] = ((h_size, h_size), h_size)
                specs[f"b{gate}{layer}"] = ((h_size,), None)
            in_size = h_size
        specs["Wo"] = ((hidden[-1], out_features), hidden[-1])
        specs["bo"] = ((out_features,), None)
    else:
        raise ValueError(f"unknown architecture {arch!r}")
    return specs


def init_params(arch, history_len, dim, n_levels, hidden=None, seed=0) -> PredictorParams:
    """Seeded init: weights uniform +-1/sqrt(fan_in), biases zero."""
    if history_len < 1 or dim < 1 or n_levels < 1:
        raise ValueError("history_len, dim and n_levels must be positive")
    hidden = tuple(hidden) if hidden is not None else DEFAULT_HIDDEN[arch]
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, (shape, fan_in) in _array_specs(arch, history_len, dim, n_levels, hidden).items():
        if fan_in is None:
            arrays[name] = np.zeros(shape)
        else:
            bound = 1.0 / np.sqrt(fan_in)
            arrays[name] = rng.uniform(-bound, bound, size=shape)
    return PredictorParams(arch, history_len, dim, n_levels, hidden, seed, arrays)


# ---- forward passes ----

def _mlp_forward(params, x):
    a = params.arrays
    a1 = np.tanh(x @ a["W1"] + a["b1"])
    a2 = np.tanh(a1 @ a["W2"] + a["b2"])
    out = a2 @ a["W3"] + a["b3"]
    return out, (x, a1, a2)


def _gru_forward(params, x):
    a = params.arrays
    batch = x.shape[0]
    seq = x.reshape(batch, params.history_len, params.dim)
    caches = []
    layer_in = [seq[:, t, :] for t in range(params.history_len)]
    for layer, h_size in enumerate(params.hidden):
        wxr, whr, br = a[f"Wxr{layer}"], a[f"Whr{layer}"], a[f"br{layer}"]
        wxz, whz, bz = a[f"Wxz{layer}"], a[f"Whz{layer}"], a[f"bz{layer}"]
        wxn, whn, bn = a[f"Wxn{layer}"], a[f"Whn{layer}"], a[f"bn{layer}"]
        h = np.zeros((batch, h_size))
        steps = []
        outs = []
        for x_t in layer_in:
            r = _sigmoid(x_t @ wxr + h @ whr + br)
            z = _sigmoid(x_t @ wxz + h @ whz + bz)
            n = np.tanh(x_t @ wxn + (r * h) @ whn + bn)
            h_new = (1.0 - z) * n + z * h
            steps.append((x_t, h, r, z, n))
            outs.append(h_new)
            h = h_new
        caches.append(steps)
        layer_in = outs
    out = layer_in[-1] @ a["Wo"] + a["bo"]
    return out, (caches, layer_in[-1])


def forward_batch(params: PredictorParams, inputs) -> np.ndarray:
    """Quantile surfaces for a batch: (B, p*L) -> (B, L, G)."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    if inputs.shape[1] != params.in_features:
        raise ValueError(
            f"expected {params.in_features} input features, got {inputs.shape[1]}"
        )
    if params.arch == "mlp":
        out, _ = _mlp_forward(params, inputs)
    else:
        out, _ = _gru_forward(params, inputs)
    return out.reshape(inputs.shape[0], params.dim, params.n_levels)


def forward(params: PredictorParams, history) -> np.ndarray:
    """Quantile surface (L, G) for one flattened history vector."""
    history = np.asarray(history, dtype=np.float64)
    if history.ndim != 1:
        raise ValueError("history must be a flat vector; use forward_batch for batches")
    return forward_batch(params, history[None, :])[0]


# ---- loss ----

def pinball_loss(target: float, pred: float, tau: float) -> float:
    """Quantile check loss: tau*(h-q) if q <= h else (1-tau)*(q-h)."""
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    diff = target - pred
    return float(tau * diff) if diff >= 0.0 else float((tau - 1.0) * diff)


def _pinball_grid(targets, preds, taus):
    # targets (B, L) broadcast against preds (B, L, G)
    diff = targets[:, :, None] - preds
    return np.where(diff >= 0.0, taus * diff, (taus - 1.0) * diff)


def total_loss(params: PredictorParams, inputs, targets, levels: QuantileLevels) -> float:
    """Mean pinball loss over batch, component and quantile level."""
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if targets.shape[0] == 0:
        raise ValueError("batch is empty")
    preds = forward_batch(params, inputs)
    return float(_pinball_grid(targets, preds, levels.taus).mean())


def backward(params: PredictorParams, inputs, targets, levels: QuantileLevels):
    """Loss and analytic parameter gradients for one batch.

    The pinball subgradient at the kink (pred == target) is taken as 0.
    Returns (loss, dict of gradients matching params.arrays).
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if targets.shape[0] == 0:
        raise ValueError("batch is empty")
    if params.arch == "mlp":
        flat, cache = _mlp_forward(params, inputs)
    else:
        flat, cache = _gru_forward(params, inputs)
    batch = inputs.shape[0]
    preds = flat.reshape(batch, params.dim, params.n_levels)
    grid = _pinball_grid(targets, preds, levels.taus)
    loss = float(grid.mean())

    diff = targets[:, :, None] - preds
    dpred = np.where(diff > 0.0, -levels.taus, np.where(diff < 0.0, 1.0 - levels.taus, 0.0))
    dpred = dpred / grid.size
    dflat = dpred.reshape(batch, params.dim * params.n_levels)

    a = params.arrays
    grads = {}
    if params.arch == "mlp":
        x, a1, a2 = cache
        grads["W3"] = a2.T @ dflat
        grads["b3"] = dflat.sum(axis=0)
        da2 = dflat @ a["W3"].T
        dz2 = da2 * (1.0 - a2 * a2)
        grads["W2"] = a1.T @ dz2
        grads["b2"] = dz2.sum(axis=0)
        da1 = dz2 @ a["W2"].T
        dz1 = da1 * (1.0 - a1 * a1)
        grads["W1"] = x.T @ dz1
        grads["b1"] = dz1.sum(axis=0)
    else:
        caches, h_last = cache
        grads["Wo"] = h_last.T @ dflat
        grads["bo"] = dflat.sum(axis=0)
        # dh_direct[t]: gradient arriving at layer output h_t from above
        p = params.history_len
        dh_direct = [np.zeros_like(h_last) for _ in range(p)]
        dh_direct[-1] = dflat @ a["Wo"].T
        for layer in reversed(range(len(params.hidden))):
            wxr, whr = a[f"Wxr{layer}"], a[f"Whr{layer}"]
            wxz, whz = a[f"Wxz{layer}"], a[f"Whz{layer}"]
            wxn, whn = a[f"Wxn{layer}"], a[f"Whn{layer}"]
            for name in ("Wxr", "Whr", "br", "Wxz", "Whz", "bz", "Wxn", "Whn", "bn"):
                grads[f"{name}{layer}"] = np.zeros_like(a[f"{name}{layer}"])
            dx_below = []
            dh_next = np.zeros((batch, params.hidden[layer]))
            for t in reversed(range(p)):
                x_t, h_prev, r, z, n = caches[layer][t]
                dh = dh_next + dh_direct[t]
                dz = dh * (h_prev - n)
                dn = dh * (1.0 - z)
                dpre_n = dn * (1.0 - n * n)
                grads[f"Wxn{layer}"] += x_t.T @ dpre_n
                grads[f"Whn{layer}"] += (r * h_prev).T @ dpre_n
                grads[f"bn{layer}"] += dpre_n.sum(axis=0)
                drh = dpre_n @ whn.T
                dr = drh * h_prev
                dpre_r = dr * r * (1.0 - r)
                grads[f"Wxr{layer}"] += x_t.T @ dpre_r
                grads[f"Whr{layer}"] += h_prev.T @ dpre_r
                grads[f"br{layer}"] += dpre_r.sum(axis=0)
                dpre_z = dz * z * (1.0 - z)
                grads[f"Wxz{layer}"] += x_t.T @ dpre_z
                grads[f"Whz{layer}"] += h_prev.T @ dpre_z
                grads[f"bz{layer}"] += dpre_z.sum(axis=0)
                dh_next = dh * z + drh * r + dpre_r @ whr.T + dpre_z @ whz.T
                dx_below.append(dpre_r @ wxr.T + dpre_z @ wxz.T + dpre_n @ wxn.T)
            dh_direct = dx_below[::-1]
    return loss, grads


# ---- training ----

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 1e-3
    input_noise_std: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    hidden: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        if self.input_noise_std < 0.0:
            raise ValueError("input_noise_std must be nonnegative")


@dataclass
class TrainResult:
    params: PredictorParams
    train_loss: np.ndarray
    val_loss: np.ndarray
    best_epoch: int


def train(arch, train_inputs, train_targets, val_inputs, val_targets,
          levels: QuantileLevels | None = None,
          config: TrainConfig | None = None) -> TrainResult:
    """Fit a quantile predictor with Adam.

    Inputs get fresh N(0, input_noise_std^2) perturbations every epoch
    (regularization against the noisy histories seen at filter time);
    validation inputs stay clean.  The returned parameters are the ones
    from the epoch with the lowest validation loss.
    """
    levels = levels if levels is not None else QuantileLevels()
    config = config if config is not None else TrainConfig()
    x = np.asarray(train_inputs, dtype=np.float64)
    y = np.asarray(train_targets, dtype=np.float64)
    xv = np.asarray(val_inputs, dtype=np.float64)
    yv = np.asarray(val_targets, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0] or x.shape[0] == 0:
        raise ValueError("training inputs/targets must be matching nonempty 2-d arrays")
    if xv.shape[0] == 0:
        raise ValueError("validation set must be nonempty")
    dim = y.shape[1]
    if x.shape[1] % dim != 0:
        raise ValueError("input width must be a multiple of the target width")
    params = init_params(arch, x.shape[1] // dim, dim, levels.g,
                         hidden=config.hidden, seed=config.seed)
    # separate stream from the init draws
    rng = np.random.default_rng([0xC0FFEE, config.seed])

    m = {k: np.zeros_like(v) for k, v in params.arrays.items()}
    v = {k: np.zeros_like(val) for k, val in params.arrays.items()}
    step = 0
    n = x.shape[0]
    train_hist = np.empty(config.epochs)
    val_hist = np.empty(config.epochs)
    best_val = np.inf
    best_arrays = {k: arr.copy() for k, arr in params.arrays.items()}
    best_epoch = 0
    for epoch in range(config.epochs):
        if config.input_noise_std > 0.0:
            noisy = x + rng.normal(0.0, config.input_noise_std, size=x.shape)
        else:
            noisy = x
        perm = rng.permutation(n)
        running = 0.0
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            loss, grads = backward(params, noisy[idx], y[idx], levels)
            running += loss * len(idx)
            step += 1
            bc1 = 1.0 - config.beta1 ** step
            bc2 = 1.0 - config.beta2 ** step
            for key, g in grads.items():
                m[key] = config.beta1 * m[key] + (1.0 - config.beta1) * g
                v[key] = config.beta2 * v[key] + (1.0 - config.beta2) * g * g
                params.arrays[key] -= (config.learning_rate * (m[key] / bc1)
                                       / (np.sqrt(v[key] / bc2) + config.adam_eps))
        train_hist[epoch] = running / n
        if not np.isfinite(train_hist[epoch]):
            raise TrainingDivergedError(f"training loss became non-finite at epoch {epoch + 1}")
        val_hist[epoch] = total_loss(params, xv, yv, levels)
        if val_hist[epoch] < best_val:
            best_val = val_hist[epoch]
            best_arrays = {k: arr.copy() for k, arr in params.arrays.items()}
            best_epoch = epoch
    params.arrays = best_arrays
    return TrainResult(params=params, train_loss=train_hist, val_loss=val_hist,
                       best_epoch=best_epoch)


# ---- checkpoint I/O ----

def save_checkpoint(params: PredictorParams, path) -> None:
    header = {
        "arch": params.arch,
        "history_len": params.history_len,
        "dim": params.dim,
        "n_levels": params.n_levels,
        "hidden": ",".join(str(h) for h in params.hidden),
        "seed": params.seed,
    }
    textio.write_arrays(path, header, params.arrays)


def load_checkpoint(path) -> PredictorParams:
    header, arrays = textio.read_arrays(path)
    try:
        arch = header["arch"]
        history_len = int(header["history_len"])
        dim = int(header["dim"])
        n_levels = int(header["n_levels"])
        hidden = tuple(int(tok) for tok in header["hidden"].split(","))
        seed = int(header["seed"])
    except (KeyError, ValueError) as exc:
        raise ValueError(f"bad checkpoint header in {path}: {exc}") from exc
    specs = _array_specs(arch, history_len, dim, n_levels, hidden)
    if set(specs) != set(arrays):
        raise ValueError(f"checkpoint {path} arrays do not match its header")
    for name, (shape, _) in specs.items():
        if arrays[name].shape != shape:
            raise ValueError(
                f"checkpoint array {name} has shape {arrays[name].shape}, expected {shape}"
            )
    return PredictorParams(arch, history_len, dim, n_levels, hidden, seed, arrays)
