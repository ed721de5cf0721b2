"""Extension de profondeur : insertion de couches dans un checkpoint entraîné.

Une insertion à la position p place la nouvelle couche juste après la couche
originale p ; les positions se réfèrent toujours aux indices d'origine.
"""
from enum import Enum
from pydantic import BaseModel, ConfigDict, Field, model_validator
import logging
import math
import zlib

from joblib import Parallel, delayed
import numpy as np

from babelkit.checkpoint_store import (
    GLOBAL_TENSORS,
    LAYER_NAME_RE,
    LAYER_SUFFIXES,
    Checkpoint,
    ModelConfig,
    Tensor,
    layer_tensor_name,
    validate_checkpoint,
)
from babelkit.errors import CheckpointError, PlanError

logger = logging.getLogger(__name__)

DEFAULT_NOISE_MEAN = 1e-4


class Strategy(str, Enum):
    AMONG_LAYERS = "among_layers"
    AFTER_MODEL = "after_model"


class InitKind(str, Enum):
    DUPLICATE = "duplicate"
    DUPLICATE_NOISE = "duplicate_noise"
    ZEROS = "zeros"


class ExtensionPlan(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    strategy: Strategy = Strategy.AMONG_LAYERS
    positions: tuple[int, ...] = ()
    count: int | None = None
    init: InitKind = InitKind.DUPLICATE
    noise_mean: float | None = None
    seed: int = Field(default=0, ge=0, lt=2**64)

    @model_validator(mode="after")
    def check_shape(self):
        if self.strategy is Strategy.AMONG_LAYERS:
            if not self.positions:
                raise ValueError("among_layers demande au moins une position")
            if self.count is not None:
                raise ValueError("count n'a de sens que pour after_model")
            if any(b <= a for a, b in zip(self.positions, self.positions[1:])):
                raise ValueError(f"les positions doivent être strictement croissantes, reçu: {list(self.positions)}")
            if self.positions[0] < 0:
                raise ValueError(f"position out of range: {self.positions[0]}")
        else:
            if self.positions:
                raise ValueError("after_model n'accepte pas de positions, utiliser count")
            if self.count is None or self.count < 1:
                raise ValueError(f"after_model demande count >= 1, reçu: {self.count}")

        if self.init is InitKind.DUPLICATE_NOISE:
            if self.noise_mean is None or not math.isfinite(self.noise_mean) or self.noise_mean <= 0:
                raise ValueError(f"duplicate_noise demande une moyenne > 0, reçu: {self.noise_mean}")
        elif self.noise_mean is not None:
            raise ValueError(f"noise_mean n'a de sens qu'avec duplicate_noise (init={self.init.value})")
        return self

    @property
    def num_new_layers(self) -> int:
        return len(self.positions) if self.strategy is Strategy.AMONG_LAYERS else self.count

    def describe_init(self) -> str:
        if self.init is InitKind.DUPLICATE_NOISE:
            return f"duplicate+gaussian(mean={self.noise_mean!r}, std={self.noise_mean!r})"
        return self.init.value

    def check_against(self, config: ModelConfig) -> None:
        bad = [p for p in self.positions if not 0 <= p < config.num_layers]
        if bad:
            raise PlanError(f"position out of range: {bad} (num_layers={config.num_layers})")


class SurgeryRecord(BaseModel):
    old_num_layers: int
    new_num_layers: int
    strategy: Strategy
    positions: list[int]
    inserted: list[tuple[int, int]]
    init: str
    seed: int
    params_before: int
    params_after: int

    @model_validator(mode="after")
    def check_counts(self):
        if self.new_num_layers != self.old_num_layers + len(self.inserted):
            raise ValueError("new_num_layers doit valoir old_num_layers + nombre de couches insérées")
        return self


def plan_extension(
    config: ModelConfig,
    k: int,
    init: InitKind = InitKind.DUPLICATE_NOISE,
    noise_mean: float | None = DEFAULT_NOISE_MEAN,
    seed: int = 0,
) -> ExtensionPlan:
    """Une couche toutes les deux dans la seconde moitié : {L/2 + 2j : j < k}."""
    num_layers = config.num_layers
    if num_layers % 2 != 0:
        raise PlanError(f"odd num_layers: {num_layers} couches, placement non défini")
    if k < 1:
        raise PlanError(f"k doit être >= 1, reçu: {k}")
    if 4 * k > num_layers:
        raise PlanError(
            f"k too large: {k} couches ne tiennent pas au pas de 2 dans la seconde moitié de {num_layers} couches (max {num_layers // 4})"
        )
    positions = tuple(num_layers // 2 + 2 * j for j in range(k))
    if init is not InitKind.DUPLICATE_NOISE:
        noise_mean = None
    return ExtensionPlan(strategy=Strategy.AMONG_LAYERS, positions=positions, init=init, noise_mean=noise_mean, seed=seed)


def per_layer_parameters(config: ModelConfig) -> int:
    h = config.hidden_size
    kv = h * config.num_kv_heads // config.num_attention_heads
    return h * h * 2 + 2 * h * kv + 3 * h * config.intermediate_size + 2 * h


def count_parameters(config: ModelConfig) -> int:
    v, h = config.vocab_size, config.hidden_size
    return v * h + v * h + h + config.num_layers * per_layer_parameters(config)


def noise_rng(seed: int, new_layer_index: int, tensor_name: str) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence([seed, new_layer_index, zlib.crc32(tensor_name.encode("utf-8"))])
    )


def _init_tensor(source: Tensor, plan: ExtensionPlan, new_index: int, name: str) -> Tensor:
    if plan.init is InitKind.DUPLICATE:
        return source
    if plan.init is InitKind.ZEROS:
        return Tensor.zeros_like(source)
    # bruit ajouté en f32 puis reconverti dans le dtype du tenseur
    rng = noise_rng(plan.seed, new_index, name)
    mean = np.float32(plan.noise_mean)
    noise = rng.standard_normal(source.shape, dtype=np.float32) * mean + mean
    return Tensor.from_numpy(source.to_numpy() + noise, source.dtype)


def _layer_order(plan: ExtensionPlan, num_layers: int) -> list[tuple[int, bool]]:
    """Liste (couche source, est_nouvelle) dans l'ordre du modèle étendu."""
    if plan.strategy is Strategy.AFTER_MODEL:
        return [(i, False) for i in range(num_layers)] + [(num_layers - 1, True)] * plan.count
    inserted = set(plan.positions)
    order = []
    for i in range(num_layers):
        order.append((i, False))
        if i in inserted:
            order.append((i, True))
    return order


def apply_extension(ckpt: Checkpoint, plan: ExtensionPlan, threads: int = 1) -> tuple[Checkpoint, SurgeryRecord]:
    problems = validate_checkpoint(ckpt)
    if problems:
        raise CheckpointError(problems)
    config = ckpt.config
    plan.check_against(config)

    order = _layer_order(plan, config.num_layers)
    new_config = config.model_copy(update={"num_layers": len(order)})

    jobs = []
    for new_index, (source, is_new) in enumerate(order):
        for suffix in LAYER_SUFFIXES:
            name = layer_tensor_name(new_index, suffix)
            jobs.append((name, ckpt.tensors[layer_tensor_name(source, suffix)], new_index, is_new))

    # le flux de bruit est indexé par (graine, couche, tenseur) : même résultat quel que soit threads
    new_tensors = Parallel(n_jobs=threads, prefer="threads")(
        delayed(_init_tensor)(tensor, plan, new_index, name) for name, tensor, new_index, is_new in jobs if is_new
    )
    new_iter = iter(new_tensors)
    layer_tensors = {name: (next(new_iter) if is_new else tensor) for name, tensor, _, is_new in jobs}

    tensors = {}
    others = {n: t for n, t in ckpt.tensors.items() if not LAYER_NAME_RE.match(n) and n not in GLOBAL_TENSORS}
    tensors[GLOBAL_TENSORS[0]] = ckpt.tensors[GLOBAL_TENSORS[0]]
    tensors.update(layer_tensors)
    for name in GLOBAL_TENSORS[1:]:
        tensors[name] = ckpt.tensors[name]
    tensors.update(others)

    extended = Checkpoint(config=new_config, tensors=tensors, metadata=dict(ckpt.metadata))
    record = SurgeryRecord(
        old_num_layers=config.num_layers,
        new_num_layers=new_config.num_layers,
        strategy=plan.strategy,
        positions=list(plan.positions),
        inserted=[(source, i) for i, (source, is_new) in enumerate(order) if is_new],
        init=plan.describe_init(),
        seed=plan.seed,
        params_before=count_parameters(config),
        params_after=count_parameters(new_config),
    )
    logger.info(
        "Extension %s: %d -> %d couches (%s)",
        plan.strategy.value,
        record.old_num_layers,
        record.new_num_layers,
        record.init,
    )
    return extended, record
