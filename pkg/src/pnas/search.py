"""Progressive beam search over cells guided by a learned accuracy surrogate.

The search proceeds level by level. Level 1 evaluates every unique
one-block cell. Each later level b expands the current beam by every
canonical b-th block, scores all children with the surrogate, keeps the
top K by predicted accuracy (ties broken by cell key), evaluates them,
and refits the surrogate from scratch on everything measured so far.

Because canonicalization acts inside a block and never reorders blocks,
two distinct canonical parents can never expand to the same child, so
per-parent deduplication (restricting to canonical blocks) is exhaustive.
The expansion still reports the raw candidate count (every operator and
input combination before within-block ordering) next to the deduplicated
one.

A trace writer, when given, receives one JSON-serializable dict per
event; events carry no wall-clock fields, so equal configurations
reproduce traces byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .cells import (
    B_MAX,
    CellSpec,
    canonical_blocks,
    cell_key,
    one_block_cells,
    parse_cell_key,
    random_cell,
)
from .evaluators import EvalRecord, EvalRequest, SyntheticOracle
from .metrics import top_m_curve
from .network import StackPlan
from .predictors import PredictorConfig, ensemble_fit, new_predictor, snapshot_id
from .seeding import derive_seed

PREDICTOR_KINDS = ("mlp", "rnn", "mlp-ens", "rnn-ens", "perfect")
EVALUATOR_BACKENDS = ("synthetic", "tabular", "external")

# examples consumed per proxy-training epoch (train split of the image
# benchmark); budget arithmetic only, nothing is actually trained
EXAMPLES_PER_EPOCH = 45_000


@dataclass(frozen=True)
class SearchConfig:
    b_max: int = 5
    beam_size: int = 256
    epochs: int = 20
    filters: int = 24
    cell_repeats: int = 2
    predictor: str = "mlp-ens"
    evaluator: str = "synthetic"
    seed: int = 0
    trials: int = 5
    examples_per_epoch: int = EXAMPLES_PER_EPOCH
    chunk_size: int = 32_768

    def __post_init__(self) -> None:
        if not 1 <= self.b_max <= B_MAX:
            raise ValueError(f"b_max must be in [1, {B_MAX}], got {self.b_max}")
        for name in ("beam_size", "epochs", "filters", "cell_repeats", "trials", "examples_per_epoch", "chunk_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.predictor not in PREDICTOR_KINDS:
            raise ValueError(f"predictor must be one of {PREDICTOR_KINDS}, got {self.predictor!r}")
        if self.evaluator not in EVALUATOR_BACKENDS:
            raise ValueError(f"evaluator must be one of {EVALUATOR_BACKENDS}, got {self.evaluator!r}")

    @property
    def examples_per_model(self) -> int:
        return self.epochs * self.examples_per_epoch


@dataclass(frozen=True)
class LevelResult:
    """Evaluated candidate set of one level, ordered by cell key."""

    level: int
    keys: tuple[str, ...]
    predicted: tuple[float, ...] | None
    measured: tuple[float | None, ...]
    snapshot: str

    def best(self) -> tuple[str, float]:
        """Highest measured accuracy, ties to the smallest key."""
        scored = [(-acc, key) for key, acc in zip(self.keys, self.measured) if acc is not None]
        if not scored:
            raise ValueError(f"level {self.level} has no successful evaluations")
        neg, key = min(scored)
        return key, -neg


@dataclass(frozen=True)
class SearchTrace:
    levels: tuple[LevelResult, ...]
    records: tuple[EvalRecord, ...]
    m1: int
    e1: int
    m2: int = 0
    e2: int = 0
    raw_candidates: tuple[int, ...] = ()
    unique_candidates: tuple[int, ...] = ()

    @property
    def cost(self) -> int:
        return compute_cost(self.m1, self.e1, self.m2, self.e2)

    def best(self) -> tuple[str, float]:
        """Best measured cell of the final level."""
        return self.levels[-1].best()

    def best_per_level(self) -> list[tuple[int, str, float]]:
        return [(lv.level, *lv.best()) for lv in self.levels]

    def accuracies(self) -> list[float]:
        """Successful accuracies in evaluation order."""
        return [rec.accuracy for rec in self.records if rec.ok]


def compute_cost(m1: "int | SearchTrace", e1: int, m2: int = 0, e2: int = 0) -> int:
    """Total examples processed: M1*E1 + M2*E2, exact integer arithmetic."""
    if isinstance(m1, SearchTrace):
        m1 = m1.m1
    return int(m1) * int(e1) + int(m2) * int(e2)


def plan_budget(b_max: int, beam_size: int) -> list[int]:
    """Models evaluated per level, without running anything.

    Level 1 is the full set of unique one-block cells; each later level
    keeps at most beam_size of its deduplicated expansions.
    """
    if not 1 <= b_max <= B_MAX:
        raise ValueError(f"b_max must be in [1, {B_MAX}], got {b_max}")
    if beam_size < 1:
        raise ValueError(f"beam_size must be >= 1, got {beam_size}")
    sizes = [len(canonical_blocks(1))]
    for b in range(2, b_max + 1):
        sizes.append(min(beam_size, sizes[-1] * len(canonical_blocks(b))))
    return sizes


def top_m_table(trace: SearchTrace, m_values: Sequence[int] = (1, 5, 25)) -> list[dict]:
    """Running mean-of-best-M accuracy rows for a finished trace."""
    return top_m_curve(trace.accuracies(), m_values)


class ModelSurrogate:
    """Learned predictor (single or 5-member bag), refit from scratch on update."""

    def __init__(self, kind: str, seed: int, base: PredictorConfig | None = None) -> None:
        if kind not in PREDICTOR_KINDS or kind == "perfect":
            raise ValueError(f"learned surrogate kind must be one of {PREDICTOR_KINDS[:-1]}, got {kind!r}")
        self.bagged = kind.endswith("-ens")
        base = base or PredictorConfig(kind=kind.removesuffix("-ens"))
        if base.kind != kind.removesuffix("-ens"):
            raise ValueError(f"base config kind {base.kind!r} does not match surrogate kind {kind!r}")
        self.base = base
        self.seed = seed
        self.model = None

    def update(self, cells, accuracies, level: int) -> str:
        config = replace(self.base, seed=derive_seed(self.seed, "refit", level))
        if self.bagged:
            self.model = ensemble_fit(cells, accuracies, config, level)
        else:
            model = new_predictor(config)
            model.fit(cells, np.asarray(accuracies, dtype=float), level)
            self.model = model
        return snapshot_id(self.model)

    def predict(self, cells) -> np.ndarray:
        if self.model is None:
            raise RuntimeError("surrogate queried before its first update")
        return self.model.predict(cells)


class OracleSurrogate:
    """Noise-free oracle passthrough; update is a no-op."""

    def __init__(self, oracle: SyntheticOracle) -> None:
        self.oracle = oracle

    def update(self, cells, accuracies, level: int) -> str:
        return "perfect"

    def predict(self, cells) -> np.ndarray:
        return np.asarray([self.oracle.score(cell) for cell in cells])


def make_surrogate(kind: str, seed: int, evaluator=None, base: PredictorConfig | None = None):
    if kind == "perfect":
        if not isinstance(evaluator, SyntheticOracle):
            raise ValueError("the perfect surrogate needs the synthetic evaluator as its oracle")
        return OracleSurrogate(evaluator)
    return ModelSurrogate(kind, seed, base)


def _emit(writer, **event) -> None:
    if writer is not None:
        writer.emit(event)


def _evaluate(evaluator, cells, level, epochs, plan, eval_seed, writer) -> list[EvalRecord]:
    request = EvalRequest(cells=tuple(cells), epochs=epochs, plan=plan, seed=eval_seed)
    records = evaluator.evaluate(request)
    for rec in records:
        event = {"event": "eval", "level": level, "cell_key": rec.cell_key, "value": rec.accuracy, "seed": rec.seed}
        if rec.error is not None:
            event["error"] = rec.error
        _emit(writer, **event)
    return records


def _level_result(level: int, records: list[EvalRecord], predicted: dict[str, float] | None, snapshot: str) -> LevelResult:
    keys = tuple(rec.cell_key for rec in records)
    return LevelResult(
        level=level,
        keys=keys,
        predicted=None if predicted is None else tuple(predicted[k] for k in keys),
        measured=tuple(rec.accuracy for rec in records),
        snapshot=snapshot,
    )


def pnas_search(config: SearchConfig, evaluator, writer=None, predictor_config: PredictorConfig | None = None) -> SearchTrace:
    """Run the progressive search and return its full trace.

    An evaluator exception propagates unchanged; everything emitted to the
    writer before the failure is already flushed, so the partial trace
    survives on disk.
    """
    plan = StackPlan(n=config.cell_repeats, f=config.filters)
    eval_seed = derive_seed(config.seed, "eval")
    predictor_seed = derive_seed(config.seed, "predictor")
    surrogate = make_surrogate(config.predictor, predictor_seed, evaluator, predictor_config)

    beam = sorted(one_block_cells(), key=cell_key)
    train_cells: list[CellSpec] = []
    train_accs: list[float] = []
    all_records: list[EvalRecord] = []
    levels: list[LevelResult] = []
    raw_counts: list[int] = []
    unique_counts: list[int] = []

    def absorb(records: list[EvalRecord]) -> None:
        # failed evaluations keep their budget slot but never train the surrogate
        all_records.extend(records)
        for rec in records:
            if rec.ok:
                train_cells.append(parse_cell_key(rec.cell_key))
                train_accs.append(rec.accuracy)

    records = _evaluate(evaluator, beam, 1, config.epochs, plan, eval_seed, writer)
    absorb(records)
    snapshot = surrogate.update(train_cells, np.asarray(train_accs), 1)
    _emit(writer, event="fit", level=1, cell_key=None, value=snapshot, seed=predictor_seed)
    levels.append(_level_result(1, records, None, snapshot))

    for b in range(2, config.b_max + 1):
        blocks = canonical_blocks(b)
        raw_counts.append(len(beam) * (b + 1) * (b + 1) * 64)
        unique_counts.append(len(beam) * len(blocks))
        _emit(
            writer,
            event="expand",
            level=b,
            cell_key=None,
            value={"raw": raw_counts[-1], "unique": unique_counts[-1]},
            seed=config.seed,
        )

        # streaming top-K over all children: entries sort by (-predicted, key)
        best: list[tuple[float, str, CellSpec]] = []
        buffer: list[CellSpec] = []

        def flush() -> None:
            nonlocal best
            preds = surrogate.predict(buffer)
            best.extend((-float(p), cell_key(c), c) for p, c in zip(preds, buffer))
            best.sort()
            del best[config.beam_size :]
            buffer.clear()

        for parent in beam:
            for block in blocks:
                buffer.append(parent + (block,))
                if len(buffer) >= config.chunk_size:
                    flush()
        if buffer:
            flush()

        predicted = {key: -neg for neg, key, _ in best}
        for key in sorted(predicted):
            _emit(writer, event="predict", level=b, cell_key=key, value=predicted[key], seed=config.seed)
        for rank, (_, key, _) in enumerate(best, start=1):
            _emit(writer, event="select", level=b, cell_key=key, value=rank, seed=config.seed)

        beam = sorted((cell for _, _, cell in best), key=cell_key)
        records = _evaluate(evaluator, beam, b, config.epochs, plan, eval_seed, writer)
        absorb(records)
        snapshot = surrogate.update(train_cells, np.asarray(train_accs), b)
        _emit(writer, event="fit", level=b, cell_key=None, value=snapshot, seed=predictor_seed)
        levels.append(_level_result(b, records, predicted, snapshot))

    return SearchTrace(
        levels=tuple(levels),
        records=tuple(all_records),
        m1=sum(len(lv.keys) for lv in levels),
        e1=config.examples_per_model,
        raw_candidates=tuple(raw_counts),
        unique_candidates=tuple(unique_counts),
    )


def random_search(
    count: int,
    b_max: int,
    evaluator,
    seed: int,
    epochs: int = 20,
    filters: int = 24,
    cell_repeats: int = 2,
    examples_per_epoch: int = EXAMPLES_PER_EPOCH,
    writer=None,
) -> SearchTrace:
    """Uniformly sample `count` cells of exactly b_max blocks and evaluate all.

    Cells are drawn block by block over the raw space and canonicalized, so
    duplicates can occur, exactly like independent uniform draws. Records
    stay in sample order so running top-M statistics read off the trace.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if not 1 <= b_max <= B_MAX:
        raise ValueError(f"b_max must be in [1, {B_MAX}], got {b_max}")
    plan = StackPlan(n=cell_repeats, f=filters)
    rng = np.random.default_rng(derive_seed(seed, "random-search"))
    eval_seed = derive_seed(seed, "eval")
    records: list[EvalRecord] = []
    for _ in range(count):
        cell = random_cell(b_max, rng)
        records.extend(_evaluate(evaluator, [cell], b_max, epochs, plan, eval_seed, writer))
    level = LevelResult(
        level=b_max,
        keys=tuple(rec.cell_key for rec in records),
        predicted=None,
        measured=tuple(rec.accuracy for rec in records),
        snapshot="none",
    )
    return SearchTrace(
        levels=(level,),
        records=tuple(records),
        m1=count,
        e1=epochs * examples_per_epoch,
    )
