"""End-to-end training: per-bit code inference followed by hash fitting.

Bits are learned sequentially. For bit r the pairwise loss conditioned on
bits 1..r-1 is minimized over {-1,+1}^n (block graph cuts, ICM, or the
spectral baseline), a hash function is fitted to the inferred codes, and the
function's own outputs overwrite the codes before the next bit so that the
conditioning always reflects what the model will actually produce.
"""

from __future__ import annotations

import dataclasses
import enum
import logging
import struct
import time
from dataclasses import dataclass

import numpy as np

from .boost import BoostedHash, LinearHash, Tree, train_boosted_hash, train_linear_hash
from .core import BitMatrix, FeatureMatrix, SimilarityGraph, apply_edges, quantize
from .errors import (
    ConfigError,
    ModelFormatError,
    ModelTruncatedError,
    ModelVersionError,
    NumericError,
)
from .inference import (
    BlockCover,
    BqpInstance,
    PairStates,
    build_blocks,
    loss_objective,
    optimize_bqp,
    spectral_bit,
)
from .loss import LossKind

log = logging.getLogger(__name__)

MODEL_MAGIC = b"FHSH"
MODEL_VERSION = 1


class InferenceMethod(enum.Enum):
    BLOCKGC = "blockgc"
    ICM = "icm"
    SPECTRAL = "spectral"


class LearnerKind(enum.Enum):
    TREE = "tree"
    LINEAR = "linear"


@dataclass
class TrainConfig:
    """Every training choice, flat and serializable as key=value text."""

    bits: int = 64
    loss: LossKind = LossKind.KSH
    inference: InferenceMethod = InferenceMethod.BLOCKGC
    sweeps: int = 2
    learner: LearnerKind = LearnerKind.TREE
    tree_depth: int = 4
    rounds: int = 200
    trim_fraction: float = 0.1
    lazy_fraction: float = 0.2
    linear_reg: float = 1.0
    linear_epochs: int = 20
    seed: int = 0
    max_neighbors: int = 100
    label_mode: str = "multiclass"
    spectral_refine_iters: int = 50
    init_spectral_max_n: int = 4096
    init_flip_fraction: float = 0.1

    def __post_init__(self):
        if isinstance(self.loss, str):
            self.loss = LossKind.from_string(self.loss)
        if isinstance(self.inference, str):
            self.inference = InferenceMethod(self.inference)
        if isinstance(self.learner, str):
            self.learner = LearnerKind(self.learner)
        if self.bits < 1:
            raise ConfigError("bits must be >= 1")
        if self.sweeps < 1:
            raise ConfigError("sweeps must be >= 1")
        if self.tree_depth < 1 or self.rounds < 1:
            raise ConfigError("tree_depth and rounds must be >= 1")
        for name in ("trim_fraction", "lazy_fraction", "init_flip_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1)")
        if self.linear_reg <= 0 or self.linear_epochs < 1:
            raise ConfigError("linear_reg must be > 0 and linear_epochs >= 1")
        if self.max_neighbors < 1:
            raise ConfigError("max_neighbors must be >= 1")
        if self.label_mode not in ("multiclass", "multilabel"):
            raise ConfigError("label_mode must be multiclass or multilabel")
        if self.spectral_refine_iters < 0 or self.init_spectral_max_n < 0:
            raise ConfigError("spectral_refine_iters and init_spectral_max_n must be >= 0")

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, enum.Enum):
                v = v.value
            lines.append(f"{f.name}={v!r}" if isinstance(v, float) else f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_items(cls, items: dict) -> "TrainConfig":
        fields = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in items.items():
            if key not in fields:
                raise ConfigError(f"unknown config key {key!r}")
            target = fields[key].type
            try:
                if target == "int":
                    kwargs[key] = int(raw)
                elif target == "float":
                    kwargs[key] = float(raw)
                else:
                    kwargs[key] = str(raw)
            except ValueError:
                raise ConfigError(f"bad value for {key!r}: {raw!r}") from None
        try:
            return cls(**kwargs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_text(cls, text: str) -> "TrainConfig":
        items = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            items[key.strip()] = value.strip()
        return cls.from_items(items)


@dataclass
class BitDiagnostics:
    """Per-bit training trace, one row of the diagnostics CSV."""

    bit: int
    objective_init: float
    objective_final: float
    train_error: float
    loss_objective: float
    seconds: float


@dataclass
class HashModel:
    """Trained hashing model: fitted bin edges plus one function per bit."""

    config: TrainConfig
    edges: np.ndarray
    functions: list

    def __post_init__(self):
        if len(self.functions) != self.config.bits:
            raise ValueError("function count must equal config.bits")

    @property
    def bit_count(self) -> int:
        return len(self.functions)

    @property
    def n_dims(self) -> int:
        return self.edges.shape[0]


@dataclass
class TrainResult:
    model: HashModel
    diagnostics: list


def train(
    features: FeatureMatrix,
    sim: SimilarityGraph,
    config: TrainConfig,
    debug: bool = False,
) -> TrainResult:
    """Train a hashing model on features with pairwise supervision.

    All randomness flows from config.seed through one generator, so repeated
    runs produce byte-identical models. With debug=True the incrementally
    maintained pair distances are cross-checked against a recomputation from
    the stored codes after every bit, and block updates assert monotonicity.
    """
    n = features.n_examples
    if sim.n != n:
        raise ValueError("similarity graph and features disagree on n")
    if sim.pair_count == 0:
        raise ValueError("similarity graph has no defined pairs")
    rng = np.random.default_rng(config.seed)
    quantized = quantize(features)
    method = config.inference
    cover = None
    if method is InferenceMethod.BLOCKGC:
        cover = build_blocks(sim, rng)
    elif method is InferenceMethod.ICM:
        cover = BlockCover.singletons(n)
    states = PairStates.initial(sim)
    signs = np.empty((config.bits, n), dtype=np.int8)
    functions: list = []
    diagnostics: list[BitDiagnostics] = []
    prev_codes = None
    for bit in range(1, config.bits + 1):
        started = time.perf_counter()
        bqp = BqpInstance.from_loss(config.loss, states)
        if method is InferenceMethod.SPECTRAL:
            result = spectral_bit(
                bqp,
                refine_iters=config.spectral_refine_iters,
                seed=int(rng.integers(2**63)),
            )
            if result.used_fallback:
                log.warning("bit %d: spectral relaxation fell back to ICM", bit)
            inferred = result.codes
            obj_init = float("nan")
        else:
            if prev_codes is None:
                if n <= config.init_spectral_max_n:
                    inferred = spectral_bit(
                        bqp,
                        refine_iters=config.spectral_refine_iters,
                        seed=int(rng.integers(2**63)),
                    ).codes.copy()
                else:
                    inferred = rng.choice(np.array([-1, 1], dtype=np.int8), size=n)
            else:
                inferred = prev_codes.copy()
                flips = rng.random(n) < config.init_flip_fraction
                inferred[flips] = -inferred[flips]
            obj_init = bqp.objective(inferred)
            inferred = optimize_bqp(
                bqp, cover, inferred, config.sweeps, rng, debug=debug
            )
        obj_final = bqp.objective(inferred)
        learner_seed = int(rng.integers(2**63))
        if config.learner is LearnerKind.TREE:
            fn = train_boosted_hash(
                quantized,
                inferred,
                config.rounds,
                config.trim_fraction,
                config.lazy_fraction,
                config.tree_depth,
                learner_seed,
            )
            predicted = fn.predict(quantized.bins)
        else:
            fn = train_linear_hash(
                features,
                inferred,
                config.linear_reg,
                config.linear_epochs,
                learner_seed,
            )
            predicted = fn.predict(features.values)
        train_error = float(np.mean(predicted != inferred))
        # the learned function's outputs replace the inferred codes so that
        # later bits condition on what encode() will actually emit
        signs[bit - 1] = predicted
        bit_loss = loss_objective(config.loss, states, predicted)
        states.advance(predicted)
        if debug:
            recomputed = PairStates.from_code_matrix(
                sim, BitMatrix.from_signs(signs[:bit])
            )
            if not np.array_equal(recomputed.prev_distance, states.prev_distance):
                raise AssertionError(f"bit {bit}: pair distance accumulators drifted")
        prev_codes = predicted
        functions.append(fn)
        diagnostics.append(
            BitDiagnostics(
                bit=bit,
                objective_init=obj_init,
                objective_final=obj_final,
                train_error=train_error,
                loss_objective=bit_loss,
                seconds=time.perf_counter() - started,
            )
        )
        log.info(
            "bit %d/%d: bqp %.6g -> %.6g, train error %.4f",
            bit,
            config.bits,
            obj_init,
            obj_final,
            train_error,
        )
    model = HashModel(config=config, edges=quantized.edges, functions=functions)
    return TrainResult(model, diagnostics)


def encode(model: HashModel, features: FeatureMatrix) -> BitMatrix:
    """Apply every bit function; column j holds example j's packed code."""
    if features.n_dims != model.n_dims:
        raise ValueError(
            f"model expects {model.n_dims} feature dims, got {features.n_dims}"
        )
    n = features.n_examples
    needs_bins = any(isinstance(fn, BoostedHash) for fn in model.functions)
    bins = apply_edges(features, model.edges) if needs_bins else None
    signs = np.empty((model.bit_count, n), dtype=np.int8)
    for r, fn in enumerate(model.functions):
        signs[r] = fn.predict(bins if isinstance(fn, BoostedHash) else features.values)
    return BitMatrix.from_signs(signs)


def write_diagnostics_csv(target, diagnostics) -> None:
    own = isinstance(target, (str, bytes))
    fh = open(target, "w", encoding="utf-8") if own else target
    try:
        fh.write("bit,objective_init,objective_final,train_error,loss_objective,seconds\n")
        for d in diagnostics:
            fh.write(
                f"{d.bit},{d.objective_init!r},{d.objective_final!r},"
                f"{d.train_error!r},{d.loss_objective!r},{d.seconds!r}\n"
            )
    finally:
        if own:
            fh.close()


# ---------------------------------------------------------------------------
# model file format (all little-endian):
#   "FHSH" | u32 version | u32 config_len | config utf-8
#   u32 d | u32 m | f64 edges[d][257]
#   m records: u8 tag
#     tag 0: u32 n_trees | f64 alpha[n_trees] | per tree:
#            u32 depth | u8 is_leaf[slots] | u32 dim[slots] | u8 cut[slots]
#            | i8 polarity[slots] | i8 leaf[slots]
#     tag 1: u32 d | f64 w[d] | f64 b

_TAG_TREES = 0
_TAG_LINEAR = 1


def _write_array(fh, arr, dtype) -> None:
    fh.write(np.ascontiguousarray(arr, dtype=dtype).tobytes())


def save(model: HashModel, path) -> None:
    """Serialize a model; identical models produce identical bytes."""
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", MODEL_VERSION))
        config_bytes = model.config.to_text().encode("utf-8")
        fh.write(struct.pack("<I", len(config_bytes)))
        fh.write(config_bytes)
        fh.write(struct.pack("<II", model.n_dims, model.bit_count))
        _write_array(fh, model.edges, "<f8")
        for fn in model.functions:
            if isinstance(fn, BoostedHash):
                fh.write(struct.pack("<BI", _TAG_TREES, len(fn.trees)))
                _write_array(fh, fn.weights, "<f8")
                for tree in fn.trees:
                    fh.write(struct.pack("<I", tree.depth))
                    _write_array(fh, tree.is_leaf, "<u1")
                    _write_array(fh, tree.dim, "<u4")
                    _write_array(fh, tree.cut, "<u1")
                    _write_array(fh, tree.polarity, "<i1")
                    _write_array(fh, tree.leaf, "<i1")
            elif isinstance(fn, LinearHash):
                fh.write(struct.pack("<BI", _TAG_LINEAR, fn.w.size))
                _write_array(fh, fn.w, "<f8")
                fh.write(struct.pack("<d", fn.b))
            else:
                raise TypeError(f"cannot serialize hash function {type(fn)!r}")


def _read_exact(fh, size: int) -> bytes:
    data = fh.read(size)
    if len(data) != size:
        raise ModelTruncatedError(
            f"model file truncated: wanted {size} bytes, got {len(data)}"
        )
    return data


def _read_struct(fh, fmt: str):
    return struct.unpack(fmt, _read_exact(fh, struct.calcsize(fmt)))


def _read_array(fh, dtype, count: int) -> np.ndarray:
    dtype = np.dtype(dtype)
    raw = _read_exact(fh, dtype.itemsize * count)
    return np.frombuffer(raw, dtype=dtype).copy()


def load(path) -> HashModel:
    """Read a model file, refusing bad magic, bad version, or truncation."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MODEL_MAGIC:
            raise ModelFormatError(f"not a model file (magic {magic!r})")
        (version,) = _read_struct(fh, "<I")
        if version != MODEL_VERSION:
            raise ModelVersionError(f"unsupported model version {version}")
        (config_len,) = _read_struct(fh, "<I")
        config = TrainConfig.from_text(_read_exact(fh, config_len).decode("utf-8"))
        d, m = _read_struct(fh, "<II")
        edges = _read_array(fh, "<f8", d * 257).reshape(d, 257)
        functions: list = []
        for _ in range(m):
            (tag,) = _read_struct(fh, "<B")
            if tag == _TAG_TREES:
                (n_trees,) = _read_struct(fh, "<I")
                weights = _read_array(fh, "<f8", n_trees)
                trees = []
                for _ in range(n_trees):
                    (depth,) = _read_struct(fh, "<I")
                    slots = 2 ** (depth + 1) - 1
                    trees.append(
                        Tree(
                            depth=depth,
                            is_leaf=_read_array(fh, "<u1", slots).astype(bool),
                            dim=_read_array(fh, "<u4", slots).astype(np.int32),
                            cut=_read_array(fh, "<u1", slots),
                            polarity=_read_array(fh, "<i1", slots),
                            leaf=_read_array(fh, "<i1", slots),
                        )
                    )
                functions.append(BoostedHash(trees, weights))
            elif tag == _TAG_LINEAR:
                (dim,) = _read_struct(fh, "<I")
                w = _read_array(fh, "<f8", dim)
                (b,) = _read_struct(fh, "<d")
                functions.append(LinearHash(w, b))
            else:
                raise ModelFormatError(f"unknown hash function tag {tag}")
        trailing = fh.read(1)
        if trailing:
            raise ModelFormatError("trailing bytes after model payload")
    if not np.all(np.isfinite(edges)):
        raise NumericError("model edge table contains non-finite values")
    try:
        return HashModel(config=config, edges=edges, functions=functions)
    except ValueError as exc:
        raise ModelFormatError(str(exc)) from None
