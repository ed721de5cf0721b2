"""Lecture / écriture bit-exacte des checkpoints.

Format du conteneur (compatible safetensors) :
  [0, 8)      u64 little-endian N
  [8, 8+N)    index JSON {nom: {"dtype", "shape", "data_offsets": [début, fin]}}
  [8+N, ...)  données des tenseurs, offsets relatifs à 8+N
La config du modèle est un JSON voisin : `model.safetensors` -> `model.config.json`.
"""
from dataclasses import dataclass, field
from pathlib import Path
from pydantic import BaseModel, ConfigDict, PositiveFloat, PositiveInt, model_validator
import json
import logging
import math
import os
import re
import struct
import tempfile

import numpy as np

from babelkit.errors import CheckpointError

logger = logging.getLogger(__name__)

DTYPE_WIDTHS = {"F32": 4, "F16": 2, "BF16": 2}
METADATA_KEY = "__metadata__"

EMBED_NAME = "model.embed_tokens.weight"
FINAL_NORM_NAME = "model.norm.weight"
LM_HEAD_NAME = "lm_head.weight"
GLOBAL_TENSORS = (EMBED_NAME, FINAL_NORM_NAME, LM_HEAD_NAME)

LAYER_SUFFIXES = (
    "input_layernorm.weight",
    "self_attn.q_proj.weight",
    "self_attn.k_proj.weight",
    "self_attn.v_proj.weight",
    "self_attn.o_proj.weight",
    "post_attention_layernorm.weight",
    "mlp.gate_proj.weight",
    "mlp.up_proj.weight",
    "mlp.down_proj.weight",
)
LAYER_NAME_RE = re.compile(r"^model\.layers\.(\d+)\.(.+)$")


def layer_tensor_name(index: int, suffix: str) -> str:
    return f"model.layers.{index}.{suffix}"


class ModelConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    num_layers: PositiveInt
    hidden_size: PositiveInt
    num_attention_heads: PositiveInt
    num_kv_heads: PositiveInt
    intermediate_size: PositiveInt
    vocab_size: PositiveInt
    rms_norm_eps: PositiveFloat = 1e-6
    rope_theta: PositiveFloat = 10000.0

    @model_validator(mode="after")
    def check_heads(self):
        if self.hidden_size % self.num_attention_heads != 0:
            raise ValueError(
                f"hidden_size ({self.hidden_size}) doit être divisible par num_attention_heads ({self.num_attention_heads})"
            )
        if self.num_attention_heads % self.num_kv_heads != 0:
            raise ValueError(
                f"num_attention_heads ({self.num_attention_heads}) doit être divisible par num_kv_heads ({self.num_kv_heads})"
            )
        if self.head_dim % 2 != 0:
            raise ValueError(
                f"head_dim (hidden_size / num_attention_heads = {self.head_dim}) doit être pair pour RoPE"
            )
        return self

    @property
    def head_dim(self) -> int:
        return self.hidden_size // self.num_attention_heads

    @property
    def kv_dim(self) -> int:
        return self.head_dim * self.num_kv_heads


def layer_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    h, kv, inter = config.hidden_size, config.kv_dim, config.intermediate_size
    return {
        "input_layernorm.weight": (h,),
        "self_attn.q_proj.weight": (h, h),
        "self_attn.k_proj.weight": (kv, h),
        "self_attn.v_proj.weight": (kv, h),
        "self_attn.o_proj.weight": (h, h),
        "post_attention_layernorm.weight": (h,),
        "mlp.gate_proj.weight": (inter, h),
        "mlp.up_proj.weight": (inter, h),
        "mlp.down_proj.weight": (h, inter),
    }


def expected_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Toutes les formes attendues, dans l'ordre canonique des tenseurs."""
    shapes = {EMBED_NAME: (config.vocab_size, config.hidden_size)}
    per_layer = layer_shapes(config)
    for i in range(config.num_layers):
        for suffix in LAYER_SUFFIXES:
            shapes[layer_tensor_name(i, suffix)] = per_layer[suffix]
    shapes[FINAL_NORM_NAME] = (config.hidden_size,)
    shapes[LM_HEAD_NAME] = (config.vocab_size, config.hidden_size)
    return shapes


@dataclass(frozen=True)
class Tensor:
    dtype: str
    shape: tuple[int, ...]
    data: bytes

    @property
    def numel(self) -> int:
        return math.prod(self.shape)

    def expected_nbytes(self) -> int:
        return self.numel * DTYPE_WIDTHS[self.dtype]

    def to_numpy(self) -> np.ndarray:
        """Copie en float32 (le calcul se fait toujours en f32)."""
        if self.dtype == "F32":
            arr = np.frombuffer(self.data, dtype="<f4").astype(np.float32)
        elif self.dtype == "F16":
            arr = np.frombuffer(self.data, dtype="<f2").astype(np.float32)
        elif self.dtype == "BF16":
            raw = np.frombuffer(self.data, dtype="<u2").astype("<u4") << 16
            arr = raw.view("<f4").astype(np.float32)
        else:
            raise CheckpointError(f"unsupported dtype: {self.dtype}")
        return arr.reshape(self.shape)

    @classmethod
    def from_numpy(cls, values: np.ndarray, dtype: str) -> "Tensor":
        values = np.ascontiguousarray(values, dtype=np.float32)
        if dtype == "F32":
            data = values.astype("<f4").tobytes()
        elif dtype == "F16":
            data = values.astype("<f2").tobytes()
        elif dtype == "BF16":
            # arrondi au plus proche, égalité vers le pair
            bits = values.astype("<f4").view("<u4").astype(np.uint64)
            bits = (bits + 0x7FFF + ((bits >> 16) & 1)) >> 16
            data = bits.astype("<u2").tobytes()
        else:
            raise CheckpointError(f"unsupported dtype: {dtype}")
        return cls(dtype=dtype, shape=tuple(int(d) for d in values.shape), data=data)

    @classmethod
    def zeros_like(cls, other: "Tensor") -> "Tensor":
        return cls(dtype=other.dtype, shape=other.shape, data=bytes(len(other.data)))


@dataclass
class Checkpoint:
    config: ModelConfig
    tensors: dict[str, Tensor]
    metadata: dict[str, str] = field(default_factory=dict)

    def layer_indices(self) -> list[int]:
        return layer_indices(self.tensors)

    def layer(self, index: int) -> dict[str, Tensor]:
        return {suffix: self.tensors[layer_tensor_name(index, suffix)] for suffix in LAYER_SUFFIXES}


def config_path_for(path: str | os.PathLike) -> Path:
    return Path(path).with_suffix(".config.json")


def layer_indices(names) -> list[int]:
    found = set()
    for name in names:
        match = LAYER_NAME_RE.match(name)
        if match:
            found.add(int(match.group(1)))
    return sorted(found)


def structure_problems(config: ModelConfig, shapes: dict[str, tuple[int, ...]]) -> list[str]:
    """Couches contiguës, tenseurs présents et formes conformes à la config."""
    problems = []
    indices = layer_indices(shapes)
    if indices != list(range(len(indices))):
        problems.append(f"non-contiguous layer indices: {indices}")
    elif len(indices) != config.num_layers:
        problems.append(f"layer count mismatch: {len(indices)} couches présentes, config num_layers={config.num_layers}")

    per_layer = layer_shapes(config)
    for name in shapes:
        match = LAYER_NAME_RE.match(name)
        if match and match.group(2) not in per_layer:
            problems.append(f"unexpected tensor: {name}")
    for i in indices:
        for suffix in LAYER_SUFFIXES:
            if layer_tensor_name(i, suffix) not in shapes:
                problems.append(f"missing layer tensor: {layer_tensor_name(i, suffix)}")
    for name in GLOBAL_TENSORS:
        if name not in shapes:
            problems.append(f"missing tensor: {name}")

    expected_global = expected_shapes(config)
    for name, shape in shapes.items():
        match = LAYER_NAME_RE.match(name)
        if match and match.group(2) in per_layer:
            expected = per_layer[match.group(2)]
        elif name in expected_global:
            expected = expected_global[name]
        else:
            continue
        if tuple(shape) != expected:
            problems.append(f"shape mismatch: {name} a la forme {list(shape)}, la config implique {list(expected)}")
    return problems


def validate_checkpoint(ckpt: Checkpoint) -> list[str]:
    """Retourne toutes les violations d'invariants (liste vide si valide)."""
    if not ckpt.tensors:
        return ["empty checkpoint: aucun tenseur"]

    problems = []
    for name, tensor in ckpt.tensors.items():
        if tensor.dtype not in DTYPE_WIDTHS:
            problems.append(f"unsupported dtype: {name} est en {tensor.dtype} (attendu F32, F16 ou BF16)")
            continue
        if len(tensor.data) != tensor.expected_nbytes():
            problems.append(
                f"byte length mismatch: {name} contient {len(tensor.data)} octets, attendu {tensor.expected_nbytes()}"
            )
    problems.extend(structure_problems(ckpt.config, {name: tensor.shape for name, tensor in ckpt.tensors.items()}))
    return problems


def _parse_header(raw: bytes) -> tuple[dict, int, list[str]]:
    if len(raw) < 8:
        return {}, 0, [f"malformed header length: fichier de {len(raw)} octets"]
    (header_len,) = struct.unpack("<Q", raw[:8])
    if 8 + header_len > len(raw):
        return {}, 0, [f"malformed header length: N={header_len} dépasse la taille du fichier ({len(raw)})"]
    try:
        header = json.loads(raw[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        return {}, 0, [f"malformed header: JSON illisible ({exc})"]
    if not isinstance(header, dict):
        return {}, 0, ["malformed header: l'index doit être un objet JSON"]
    return header, 8 + header_len, []


def _read_config(path: Path) -> ModelConfig:
    config_path = config_path_for(path)
    if not config_path.exists():
        raise FileNotFoundError(f"Config non trouvée: {config_path}")
    try:
        return ModelConfig.model_validate_json(config_path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise CheckpointError(f"invalid config: {config_path}: {exc}") from exc


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    """Lit et valide un checkpoint ; toutes les violations sont levées ensemble."""
    path = Path(path)
    raw = path.read_bytes()
    config = _read_config(path)

    header, base, problems = _parse_header(raw)
    if problems:
        raise CheckpointError(problems)

    data_len = len(raw) - base
    metadata = header.pop(METADATA_KEY, None) or {}
    if not isinstance(metadata, dict):
        problems.append("malformed header: __metadata__ doit être un objet")
        metadata = {}

    declared: dict[str, tuple[int, ...]] = {}
    extents = []
    for name, entry in header.items():
        if not isinstance(entry, dict) or not {"dtype", "shape", "data_offsets"} <= entry.keys():
            problems.append(f"malformed header: entrée incomplète pour {name}")
            continue
        dtype, shape, offsets = entry["dtype"], entry["shape"], entry["data_offsets"]
        if not isinstance(shape, list) or not all(isinstance(d, int) and d >= 0 for d in shape):
            problems.append(f"malformed header: forme invalide pour {name}: {shape}")
            continue
        # la forme déclarée suffit aux contrôles de structure, même si l'étendue est fausse
        declared[name] = tuple(shape)
        if dtype not in DTYPE_WIDTHS:
            problems.append(f"unsupported dtype: {name} est en {dtype} (attendu F32, F16 ou BF16)")
            continue
        if (
            not isinstance(offsets, list)
            or len(offsets) != 2
            or not all(isinstance(o, int) for o in offsets)
            or not 0 <= offsets[0] <= offsets[1]
        ):
            problems.append(f"malformed header: data_offsets invalides pour {name}: {offsets}")
            continue
        begin, end = offsets
        if end > data_len:
            problems.append(f"out-of-bounds extent: {name} [{begin}, {end}) dépasse la zone de données ({data_len} octets)")
            continue
        expected = math.prod(shape) * DTYPE_WIDTHS[dtype]
        if end - begin != expected:
            problems.append(f"byte length mismatch: {name} occupe {end - begin} octets, attendu {expected}")
            continue
        extents.append((begin, end, name, dtype, tuple(shape)))

    extents.sort()
    for (b1, e1, n1, *_), (b2, e2, n2, *_) in zip(extents, extents[1:]):
        if b2 < e1:
            problems.append(f"overlapping extents: {n1} [{b1}, {e1}) et {n2} [{b2}, {e2})")
    if not declared and not problems:
        problems.append("empty checkpoint: aucun tenseur")
    elif declared:
        problems.extend(structure_problems(config, declared))
    if problems:
        raise CheckpointError(problems)

    tensors = {
        name: Tensor(dtype=dtype, shape=shape, data=raw[base + begin : base + end])
        for begin, end, name, dtype, shape in extents
    }
    ckpt = Checkpoint(config=config, tensors=tensors, metadata={str(k): str(v) for k, v in metadata.items()})
    logger.info("Checkpoint chargé: %s (%d tenseurs, %d couches)", path, len(tensors), config.num_layers)
    return ckpt


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    header = {}
    if ckpt.metadata:
        header[METADATA_KEY] = dict(ckpt.metadata)
    offset = 0
    for name, tensor in ckpt.tensors.items():
        header[name] = {
            "dtype": tensor.dtype,
            "shape": list(tensor.shape),
            "data_offsets": [offset, offset + len(tensor.data)],
        }
        offset += len(tensor.data)
    header_bytes = json.dumps(header, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    # alignement sur 8 octets, comme safetensors
    header_bytes += b" " * (-len(header_bytes) % 8)
    chunks = [struct.pack("<Q", len(header_bytes)), header_bytes]
    chunks.extend(tensor.data for tensor in ckpt.tensors.values())
    return b"".join(chunks)


def _atomic_write(path: Path, payload: bytes) -> Path:
    """Écrit dans un fichier temporaire voisin ; le renommage est fait par l'appelant."""
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
            handle.flush()
            os.fsync(handle.fileno())
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise
    return Path(tmp_name)


def save_checkpoint(ckpt: Checkpoint, path: str | os.PathLike) -> None:
    path = Path(path)
    problems = validate_checkpoint(ckpt)
    if problems:
        raise CheckpointError(problems)

    payload = encode_checkpoint(ckpt)
    config_payload = (json.dumps(ckpt.config.model_dump(), indent=2) + "\n").encode("utf-8")
    config_path = config_path_for(path)

    tmp_tensors = _atomic_write(path, payload)
    try:
        tmp_config = _atomic_write(config_path, config_payload)
    except BaseException:
        tmp_tensors.unlink(missing_ok=True)
        raise
    # tenseurs d'abord : si ce renommage échoue, ni le checkpoint ni sa config ne changent
    try:
        os.replace(tmp_tensors, path)
        os.replace(tmp_config, config_path)
    except BaseException:
        tmp_tensors.unlink(missing_ok=True)
        tmp_config.unlink(missing_ok=True)
        raise
    logger.info("Checkpoint sauvegardé ici : %s", path)
