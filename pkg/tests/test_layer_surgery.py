import numpy as np
import pytest
from pydantic import ValidationError

from babelkit.checkpoint_store import ModelConfig, layer_tensor_name, validate_checkpoint
from babelkit.errors import PlanError
from babelkit.layer_surgery import (
    ExtensionPlan,
    InitKind,
    Strategy,
    apply_extension,
    count_parameters,
    per_layer_parameters,
    plan_extension,
)


def _config(num_layers: int) -> ModelConfig:
    return ModelConfig(
        num_layers=num_layers,
        hidden_size=8,
        num_attention_heads=2,
        num_kv_heads=1,
        intermediate_size=16,
        vocab_size=16,
    )


@pytest.mark.parametrize(
    "num_layers, k, expected",
    [
        (28, 6, (14, 16, 18, 20, 22, 24)),
        (80, 12, tuple(range(40, 63, 2))),
        (8, 2, (4, 6)),
    ],
)
def test_plan_positions(num_layers, k, expected):
    plan = plan_extension(_config(num_layers), k)
    assert plan.positions == expected
    assert plan.init is InitKind.DUPLICATE_NOISE
    assert plan.noise_mean == 1e-4


def test_plan_refuses_odd_depth_and_large_k():
    with pytest.raises(PlanError, match="odd num_layers"):
        plan_extension(_config(7), 1)
    with pytest.raises(PlanError, match="k too large"):
        plan_extension(_config(8), 3)


def test_plan_validation():
    with pytest.raises(ValidationError):
        ExtensionPlan(positions=(4, 4))
    with pytest.raises(ValidationError):
        ExtensionPlan(positions=(1,), init=InitKind.DUPLICATE_NOISE)
    with pytest.raises(ValidationError):
        ExtensionPlan(positions=(1,), init=InitKind.ZEROS, noise_mean=0.01)
    with pytest.raises(ValidationError):
        ExtensionPlan(strategy=Strategy.AFTER_MODEL, count=0)


def test_position_out_of_range(toy_ckpt):
    with pytest.raises(PlanError, match="position out of range"):
        apply_extension(toy_ckpt, ExtensionPlan(positions=(99,)))


def test_duplicate_copies_source_layers(toy_ckpt):
    extended, record = apply_extension(toy_ckpt, ExtensionPlan(positions=(4, 6)))
    assert extended.config.num_layers == 10
    assert record.inserted == [(4, 5), (6, 8)]
    assert validate_checkpoint(extended) == []

    # ancienne couche -> nouvel indice
    mapping = {0: 0, 1: 1, 2: 2, 3: 3, 4: 4, 5: 6, 6: 7, 7: 9}
    for old, new in mapping.items():
        assert extended.layer(new) == toy_ckpt.layer(old)
    assert extended.layer(5) == toy_ckpt.layer(4)
    assert extended.layer(8) == toy_ckpt.layer(6)
    for name in ("model.embed_tokens.weight", "model.norm.weight", "lm_head.weight"):
        assert extended.tensors[name] == toy_ckpt.tensors[name]
    assert list(extended.tensors)[0] == "model.embed_tokens.weight"
    assert list(extended.tensors)[-1] == "lm_head.weight"


def test_after_model_appends_copies_of_last_layer(toy_ckpt):
    plan = ExtensionPlan(strategy=Strategy.AFTER_MODEL, count=2)
    extended, record = apply_extension(toy_ckpt, plan)
    assert record.inserted == [(7, 8), (7, 9)]
    assert extended.layer(8) == toy_ckpt.layer(7)
    assert extended.layer(9) == toy_ckpt.layer(7)


def test_zeros_init(toy_ckpt):
    extended, _ = apply_extension(toy_ckpt, ExtensionPlan(positions=(4,), init=InitKind.ZEROS))
    for tensor in extended.layer(5).values():
        assert not np.any(tensor.to_numpy())


def test_noise_is_deterministic_and_thread_independent(toy_ckpt):
    plan = ExtensionPlan(positions=(4, 6), init=InitKind.DUPLICATE_NOISE, noise_mean=0.01, seed=7)
    first, _ = apply_extension(toy_ckpt, plan, threads=1)
    second, _ = apply_extension(toy_ckpt, plan, threads=4)
    assert first.tensors == second.tensors

    other, _ = apply_extension(toy_ckpt, plan.model_copy(update={"seed": 8}))
    name = layer_tensor_name(5, "mlp.up_proj.weight")
    assert other.tensors[name] != first.tensors[name]


def test_noise_statistics(toy_ckpt):
    plan = ExtensionPlan(positions=(4,), init=InitKind.DUPLICATE_NOISE, noise_mean=0.01, seed=3)
    extended, _ = apply_extension(toy_ckpt, plan)
    name = "mlp.gate_proj.weight"
    delta = extended.layer(5)[name].to_numpy() - toy_ckpt.layer(4)[name].to_numpy()
    # 2048 tirages de N(0.01, 0.01^2)
    assert abs(delta.mean() - 0.01) < 0.001
    assert abs(delta.std() - 0.01) < 0.001
    assert extended.layer(6) == toy_ckpt.layer(5)


def test_parameter_accounting(toy_ckpt):
    extended, record = apply_extension(toy_ckpt, ExtensionPlan(positions=(4, 6)))
    per_layer = per_layer_parameters(toy_ckpt.config)
    assert record.params_after - record.params_before == 2 * per_layer
    assert record.params_before == count_parameters(toy_ckpt.config)
    assert record.params_after == sum(t.numel for t in extended.tensors.values())
    assert record.params_before == sum(t.numel for t in toy_ckpt.tensors.values())


def test_record_describes_noise(toy_ckpt):
    plan = plan_extension(toy_ckpt.config, 2, seed=11)
    _, record = apply_extension(toy_ckpt, plan)
    assert record.old_num_layers == 8
    assert record.new_num_layers == 10
    assert record.positions == [4, 6]
    assert record.init == "duplicate+gaussian(mean=0.0001, std=0.0001)"
    assert record.seed == 11
