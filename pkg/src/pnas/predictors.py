"""Surrogate accuracy predictors over token-encoded cells.

A cell is encoded as a sequence of 4b tokens (I1, I2, O1, O2 per block).
Input tokens share one embedding table, operator tokens another. Two
regressor bodies are provided:

* ``mlp``: the four per-slot embeddings are averaged over blocks and
  concatenated into a 4D-dimensional vector, followed by two fully
  connected tanh layers and a sigmoid output. Averaging makes the MLP
  invariant to block order and to cell size, so one model serves every
  level. tanh (rather than a kinked activation) keeps the analytic
  gradients verifiable against central finite differences to tight
  tolerance.
* ``rnn``: an LSTM (forget/input/output gates, tanh cell) reads the
  token sequence one embedded token at a time; the final hidden state
  feeds the sigmoid output layer.

Both train with L1 loss (subgradient 0 at the kink) under full-batch
Adam, learning rate 0.01 at level 1 and 0.002 afterwards. The output
bias starts at 1.8, so a fresh model predicts sigmoid(1.8) = 0.86, the
mean one-block accuracy prior. Bagged 5-member ensembles refit each
member from scratch on 4/5 of the data.

All arithmetic is float64 and every weight is reachable by
``gradient_check``, which compares the analytic gradient of the full
L1 + sigmoid pipeline against central finite differences.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace

import numpy as np

from .cells import B_MAX, CellSpec, Operator, is_canonical, validate_cell
from .seeding import derive_seed

INPUT_VOCAB = B_MAX + 1  # input ids 0 .. B_MAX cover blocks of every level
OP_VOCAB = len(Operator)
ENSEMBLE_SIZE = 5
CHECKPOINT_VERSION = 1

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class PredictorConfig:
    kind: str = "mlp"
    embed_dim: int = 100
    hidden: int = 100
    mlp_layers: int = 2
    final_bias_init: float = 1.8
    lr_first_level: float = 0.01
    lr_later_levels: float = 0.002
    epochs_first_level: int = 200
    epochs_later_levels: int = 100
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("mlp", "rnn"):
            raise ValueError(f"predictor kind must be 'mlp' or 'rnn', got {self.kind!r}")
        for name in ("embed_dim", "hidden", "mlp_layers", "epochs_first_level", "epochs_later_levels"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")

    def lr(self, level: int) -> float:
        return self.lr_first_level if level == 1 else self.lr_later_levels

    def epochs(self, level: int) -> int:
        return self.epochs_first_level if level == 1 else self.epochs_later_levels


def encode_tokens(cell: CellSpec) -> np.ndarray:
    """Token sequence of length 4b: I1, I2, O1, O2 for each block."""
    validate_cell(cell)
    if not is_canonical(cell):
        raise ValueError("token encoding requires a canonical cell")
    return np.asarray(cell, dtype=np.int64).reshape(-1)


def _check_batch(cells: list[CellSpec] | tuple[CellSpec, ...]) -> None:
    if len(cells) == 0:
        raise ValueError("need at least one cell")
    for cell in cells:
        if len(cell) > B_MAX:
            raise ValueError(f"cell has {len(cell)} blocks, vocabulary covers at most {B_MAX}")


def _by_length(cells) -> dict[int, list[int]]:
    groups: dict[int, list[int]] = {}
    for idx, cell in enumerate(cells):
        groups.setdefault(len(cell), []).append(idx)
    return groups


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class _Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float) -> None:
        self.lr = lr
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bias1 = 1.0 - ADAM_BETA1**self.t
        bias2 = 1.0 - ADAM_BETA2**self.t
        for key, value in params.items():
            g = grads[key]
            self.m[key] = ADAM_BETA1 * self.m[key] + (1.0 - ADAM_BETA1) * g
            self.v[key] = ADAM_BETA2 * self.v[key] + (1.0 - ADAM_BETA2) * g * g
            value -= self.lr * (self.m[key] / bias1) / (np.sqrt(self.v[key] / bias2) + ADAM_EPS)


class Predictor:
    """Shared fit/predict machinery; subclasses supply forward and backward."""

    kind = ""

    def __init__(self, config: PredictorConfig) -> None:
        if config.kind != self.kind:
            raise ValueError(f"config kind {config.kind!r} does not match model kind {self.kind!r}")
        self.config = config
        rng = np.random.default_rng(derive_seed(config.seed, "init", self.kind))
        self.params = self._init_params(rng)

    def _init_params(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def predict(self, cells) -> np.ndarray:
        raise NotImplementedError

    def loss_and_grads(self, cells, targets: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
        raise NotImplementedError

    def fit(self, cells, accuracies, level: int) -> np.ndarray:
        """Full-batch Adam on L1 loss; returns the per-epoch loss history."""
        targets = np.asarray(accuracies, dtype=float)
        if len(cells) == 0 or targets.shape != (len(cells),):
            raise ValueError(f"need one accuracy per cell, got {len(cells)} cells, {targets.shape} targets")
        if np.any(targets < 0.0) or np.any(targets > 1.0):
            raise ValueError("accuracies must lie in [0, 1]")
        if level < 1:
            raise ValueError(f"level must be >= 1, got {level}")
        optimizer = _Adam(self.params, self.config.lr(level))
        history = np.empty(self.config.epochs(level))
        for epoch in range(len(history)):
            loss, grads = self.loss_and_grads(cells, targets)
            optimizer.step(self.params, grads)
            history[epoch] = loss
        return history

    def _zero_grads(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.params.items()}


class MLPPredictor(Predictor):
    kind = "mlp"

    def _init_params(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        d, h = self.config.embed_dim, self.config.hidden
        params = {
            "embed_in": rng.uniform(-0.1, 0.1, size=(INPUT_VOCAB, d)),
            "embed_op": rng.uniform(-0.1, 0.1, size=(OP_VOCAB, d)),
        }
        width = 4 * d
        for layer in range(self.config.mlp_layers):
            params[f"w{layer}"] = rng.uniform(-0.1, 0.1, size=(width, h))
            params[f"b{layer}"] = np.zeros(h)
            width = h
        params["w_out"] = rng.uniform(-0.1, 0.1, size=h)
        params["b_out"] = np.full(1, self.config.final_bias_init)
        return params

    def _slot_counts(self, cells) -> tuple[np.ndarray, ...]:
        """Per-slot token frequencies, each row normalized by block count.

        Row s of the first matrix holds, for every input id v, the fraction
        of blocks in cell s whose I1 equals v; likewise for I2, O1, O2. The
        slot average of embeddings is then just counts @ table, and the
        embedding gradient counts.T @ upstream, for any mix of cell sizes.
        """
        n = len(cells)
        ci1 = np.zeros((n, INPUT_VOCAB))
        ci2 = np.zeros((n, INPUT_VOCAB))
        co1 = np.zeros((n, OP_VOCAB))
        co2 = np.zeros((n, OP_VOCAB))
        for b, idxs in _by_length(cells).items():
            tokens = np.asarray([cells[i] for i in idxs], dtype=np.int64)
            rows = np.repeat(np.asarray(idxs), b)
            np.add.at(ci1, (rows, tokens[:, :, 0].ravel()), 1.0 / b)
            np.add.at(ci2, (rows, tokens[:, :, 1].ravel()), 1.0 / b)
            np.add.at(co1, (rows, tokens[:, :, 2].ravel()), 1.0 / b)
            np.add.at(co2, (rows, tokens[:, :, 3].ravel()), 1.0 / b)
        return ci1, ci2, co1, co2

    def _forward(self, counts) -> tuple[np.ndarray, list[np.ndarray], np.ndarray]:
        ci1, ci2, co1, co2 = counts
        p = self.params
        x = np.concatenate(
            [ci1 @ p["embed_in"], ci2 @ p["embed_in"], co1 @ p["embed_op"], co2 @ p["embed_op"]],
            axis=1,
        )
        hidden = [x]
        for layer in range(self.config.mlp_layers):
            hidden.append(np.tanh(hidden[-1] @ p[f"w{layer}"] + p[f"b{layer}"]))
        z = hidden[-1] @ p["w_out"] + p["b_out"][0]
        return _sigmoid(z), hidden, z

    def predict(self, cells) -> np.ndarray:
        _check_batch(cells)
        probs, _, _ = self._forward(self._slot_counts(cells))
        return probs

    def loss_and_grads(self, cells, targets: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
        _check_batch(cells)
        counts = self._slot_counts(cells)
        probs, hidden, _ = self._forward(counts)
        residual = probs - targets
        loss = float(np.mean(np.abs(residual)))
        dz = np.sign(residual) / len(cells) * probs * (1.0 - probs)
        grads = self._zero_grads()
        p = self.params
        grads["w_out"] = hidden[-1].T @ dz
        grads["b_out"] = np.array([dz.sum()])
        dh = np.outer(dz, p["w_out"])
        for layer in reversed(range(self.config.mlp_layers)):
            da = dh * (1.0 - hidden[layer + 1] ** 2)
            grads[f"w{layer}"] = hidden[layer].T @ da
            grads[f"b{layer}"] = da.sum(axis=0)
            dh = da @ p[f"w{layer}"].T
        d = self.config.embed_dim
        ci1, ci2, co1, co2 = counts
        grads["embed_in"] = ci1.T @ dh[:, :d] + ci2.T @ dh[:, d : 2 * d]
        grads["embed_op"] = co1.T @ dh[:, 2 * d : 3 * d] + co2.T @ dh[:, 3 * d :]
        return loss, grads


class RNNPredictor(Predictor):
    kind = "rnn"

    def _init_params(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        d, h = self.config.embed_dim, self.config.hidden
        return {
            "embed_in": rng.uniform(-0.1, 0.1, size=(INPUT_VOCAB, d)),
            "embed_op": rng.uniform(-0.1, 0.1, size=(OP_VOCAB, d)),
            # gate order along the last axis: input, forget, cell, output
            "w": rng.uniform(-0.1, 0.1, size=(d + h, 4 * h)),
            "b": np.zeros(4 * h),
            "w_out": rng.uniform(-0.1, 0.1, size=h),
            "b_out": np.full(1, self.config.final_bias_init),
        }

    def _run(self, tokens: np.ndarray, keep_trace: bool):
        """Forward over a batch of equal-length token matrices (m, 4b)."""
        p = self.params
        h_dim = self.config.hidden
        m, steps = tokens.shape
        wx, wh = p["w"][: self.config.embed_dim], p["w"][self.config.embed_dim :]
        h = np.zeros((m, h_dim))
        c = np.zeros((m, h_dim))
        trace = []
        for t in range(steps):
            table = p["embed_in"] if t % 4 < 2 else p["embed_op"]
            x = table[tokens[:, t]]
            gates = x @ wx + h @ wh + p["b"]
            i = _sigmoid(gates[:, :h_dim])
            f = _sigmoid(gates[:, h_dim : 2 * h_dim])
            g = np.tanh(gates[:, 2 * h_dim : 3 * h_dim])
            o = _sigmoid(gates[:, 3 * h_dim :])
            c_next = f * c + i * g
            tanh_c = np.tanh(c_next)
            h_next = o * tanh_c
            if keep_trace:
                trace.append((x, h, c, i, f, g, o, tanh_c))
            h, c = h_next, c_next
        z = h @ p["w_out"] + p["b_out"][0]
        return _sigmoid(z), h, trace

    def predict(self, cells) -> np.ndarray:
        _check_batch(cells)
        out = np.empty(len(cells))
        for b, idxs in _by_length(cells).items():
            tokens = np.asarray([cells[i] for i in idxs], dtype=np.int64).reshape(len(idxs), 4 * b)
            out[idxs], _, _ = self._run(tokens, keep_trace=False)
        return out

    def loss_and_grads(self, cells, targets: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
        _check_batch(cells)
        n = len(cells)
        grads = self._zero_grads()
        p = self.params
        d, h_dim = self.config.embed_dim, self.config.hidden
        wx, wh = p["w"][:d], p["w"][d:]
        loss = 0.0
        for b, idxs in _by_length(cells).items():
            tokens = np.asarray([cells[i] for i in idxs], dtype=np.int64).reshape(len(idxs), 4 * b)
            probs, h_last, trace = self._run(tokens, keep_trace=True)
            residual = probs - targets[np.asarray(idxs)]
            loss += float(np.sum(np.abs(residual)))
            dz = np.sign(residual) / n * probs * (1.0 - probs)
            grads["w_out"] += h_last.T @ dz
            grads["b_out"] += np.array([dz.sum()])
            dh = np.outer(dz, p["w_out"])
            dc = np.zeros_like(dh)
            for t in reversed(range(tokens.shape[1])):
                x, h_prev, c_prev, i, f, g, o, tanh_c = trace[t]
                do = dh * tanh_c
                dc = dc + dh * o * (1.0 - tanh_c**2)
                di = dc * g
                df = dc * c_prev
                dg = dc * i
                da = np.concatenate(
                    [di * i * (1.0 - i), df * f * (1.0 - f), dg * (1.0 - g**2), do * o * (1.0 - o)],
                    axis=1,
                )
                grads["w"][:d] += x.T @ da
                grads["w"][d:] += h_prev.T @ da
                grads["b"] += da.sum(axis=0)
                dx = da @ wx.T
                table = "embed_in" if t % 4 < 2 else "embed_op"
                np.add.at(grads[table], tokens[:, t], dx)
                dh = da @ wh.T
                dc = dc * f
        return loss / n, grads


def new_predictor(config: PredictorConfig) -> Predictor:
    return MLPPredictor(config) if config.kind == "mlp" else RNNPredictor(config)


@dataclass(frozen=True)
class Ensemble:
    """Bag of predictors; the ensemble prediction is the member mean."""

    members: tuple[Predictor, ...]

    def __post_init__(self) -> None:
        if not self.members:
            raise ValueError("ensemble needs at least one member")

    def predict(self, cells) -> np.ndarray:
        return np.mean([member.predict(cells) for member in self.members], axis=0)


def ensemble_folds(n: int, seed: int) -> list[np.ndarray]:
    """Seeded partition of range(n) into ENSEMBLE_SIZE near-equal holdouts."""
    order = np.random.default_rng(seed).permutation(n)
    return np.array_split(order, ENSEMBLE_SIZE)


def ensemble_fit(cells, accuracies, config: PredictorConfig, level: int) -> Ensemble:
    """Fit ENSEMBLE_SIZE fresh members, each holding out a disjoint fifth.

    With fewer than ENSEMBLE_SIZE points some holdouts are empty, so each
    member trains on the full set minus at most one point.
    """
    targets = np.asarray(accuracies, dtype=float)
    folds = ensemble_folds(len(cells), derive_seed(config.seed, "folds", level))
    members = []
    for index, holdout in enumerate(folds):
        drop = set(holdout.tolist())
        keep = [j for j in range(len(cells)) if j not in drop]
        if not keep:
            keep = list(range(len(cells)))
        member = new_predictor(replace(config, seed=derive_seed(config.seed, "member", level, index)))
        member.fit([cells[j] for j in keep], targets[keep], level)
        members.append(member)
    return Ensemble(tuple(members))


def gradient_check(model: Predictor, cell: CellSpec, target: float, step: float = 1e-4) -> float:
    """Max relative error of analytic vs central-difference gradients.

    The loss is the single-point L1 + sigmoid pipeline. Entries where both
    gradients are below 1e-8 are skipped (zero rows of the embedding tables,
    genuinely flat directions). The prediction must sit away from the label
    by more than the perturbation can move it, else the finite difference
    would straddle the L1 kink.
    """
    targets = np.asarray([target], dtype=float)
    prob = float(model.predict([cell])[0])
    if abs(prob - target) < 100.0 * step:
        raise ValueError(
            f"prediction {prob:.6f} is within {100.0 * step} of the label; "
            "finite differences would straddle the L1 kink"
        )
    _, grads = model.loss_and_grads([cell], targets)

    def loss_at() -> float:
        return float(np.abs(model.predict([cell])[0] - target))

    worst = 0.0
    for key, values in model.params.items():
        flat = values.reshape(-1)
        analytic = grads[key].reshape(-1)
        for idx in range(flat.size):
            origin = flat[idx]
            flat[idx] = origin + step
            upper = loss_at()
            flat[idx] = origin - step
            lower = loss_at()
            flat[idx] = origin
            numeric = (upper - lower) / (2.0 * step)
            scale = max(abs(analytic[idx]), abs(numeric))
            if scale < 1e-8:
                continue
            worst = max(worst, abs(analytic[idx] - numeric) / scale)
    return worst


def snapshot_id(model: Predictor | Ensemble) -> str:
    """Digest of all weights; equal ids imply bit-identical predictions."""
    digest = hashlib.sha256()
    if isinstance(model, Ensemble):
        for member in model.members:
            digest.update(snapshot_id(member).encode("ascii"))
    else:
        for key in sorted(model.params):
            digest.update(key.encode("ascii"))
            digest.update(np.ascontiguousarray(model.params[key]).tobytes())
    return digest.hexdigest()[:16]


def save_checkpoint(model: Predictor | Ensemble, path: str) -> None:
    """Versioned .npz dump: JSON header plus float64 weight arrays."""
    arrays: dict[str, np.ndarray] = {}
    if isinstance(model, Ensemble):
        meta = {
            "format_version": CHECKPOINT_VERSION,
            "kind": "ensemble",
            "members": [member.config.__dict__ for member in model.members],
        }
        for index, member in enumerate(model.members):
            for key, value in member.params.items():
                arrays[f"member{index}/{key}"] = value
    else:
        meta = {
            "format_version": CHECKPOINT_VERSION,
            "kind": model.kind,
            "config": dict(model.config.__dict__),
        }
        arrays.update(model.params)
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **arrays)


def load_checkpoint(path: str) -> Predictor | Ensemble:
    with np.load(path) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('format_version')!r}")
        if meta["kind"] == "ensemble":
            members = []
            for index, config_dict in enumerate(meta["members"]):
                member = new_predictor(PredictorConfig(**config_dict))
                for key in member.params:
                    member.params[key] = data[f"member{index}/{key}"].astype(float)
                members.append(member)
            return Ensemble(tuple(members))
        model = new_predictor(PredictorConfig(**meta["config"]))
        for key in model.params:
            model.params[key] = data[key].astype(float)
        return model
