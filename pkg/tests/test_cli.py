import json

import pytest

from conftest import make_doc, write_corpus

from babelkit.cli import main


def _read(path):
    return json.loads(path.read_text(encoding="utf-8"))


@pytest.fixture
def deep_toy(tmp_path):
    path = tmp_path / "deep.safetensors"
    argv = ["toy", str(path), "--layers", "28", "--hidden", "8", "--heads", "2", "--kv-heads", "1"]
    assert main(argv + ["--intermediate", "8", "--vocab", "16", "--seed", "3"]) == 0
    return path


@pytest.fixture
def corpus_path(tmp_path):
    filler = "mot " * 30
    docs = [
        make_doc("a", "the quick brown fox jumps over the lazy dog " + filler),
        make_doc("b", "the quick brown fox jumps over the lazy dog " + filler),
        make_doc("c", "short"),
        make_doc("d", "un texte français assez long pour passer les filtres " + filler, lang="fr", source="wiki"),
        make_doc("e", "यह एक लंबा हिंदी पाठ है जो फ़िल्टर पार करता है " + filler, lang="hi", source="textbook"),
        make_doc("f", "langue indéterminée " + filler, lang="und"),
    ]
    path = tmp_path / "corpus.jsonl"
    write_corpus(path, docs)
    return path


def test_toy_writes_checkpoint_config_and_manifest(toy_path, tmp_path):
    out = tmp_path / "t.safetensors"
    assert main(["toy", str(out), "--seed", "0"]) == 0
    assert out.read_bytes() == toy_path.read_bytes()
    manifest = _read(tmp_path / "t.safetensors.run.json")
    assert manifest["subcommand"] == "toy"
    assert manifest["parameters"]["config"]["num_layers"] == 8
    assert manifest["seed"] == 0


def test_extend_auto_k_on_28_layers(deep_toy, tmp_path):
    out = tmp_path / "ext.safetensors"
    assert main(["extend", str(deep_toy), str(out), "--auto-k", "6"]) == 0
    record = _read(tmp_path / "ext.safetensors.surgery.json")
    assert record["positions"] == [14, 16, 18, 20, 22, 24]
    assert record["new_num_layers"] == 34
    assert (tmp_path / "ext.config.json").exists()
    assert _read(tmp_path / "ext.safetensors.run.json")["parameters"]["plan"]["noise_mean"] == 0.0001


def test_extend_dry_run_writes_nothing(deep_toy, tmp_path, capsys):
    before = sorted(p.name for p in tmp_path.iterdir())
    assert main(["extend", str(deep_toy), "--auto-k", "2", "--dry-run"]) == 0
    preview = json.loads(capsys.readouterr().out)
    assert preview["new_num_layers"] == 30
    assert preview["params_after"] - preview["params_before"] == 2 * preview["per_layer_parameters"]
    assert sorted(p.name for p in tmp_path.iterdir()) == before


def test_extend_position_out_of_range(toy_path, tmp_path, capsys):
    assert main(["extend", str(toy_path), str(tmp_path / "x.safetensors"), "--positions", "99"]) == 2
    assert "position out of range" in capsys.readouterr().err
    assert not (tmp_path / "x.safetensors").exists()


def test_zero_extension_passes_identity_check(toy_path, tmp_path):
    out = tmp_path / "zeros.safetensors"
    assert main(["extend", str(toy_path), str(out), "--positions", "4,6", "--init", "zeros"]) == 0
    assert main(["verify", "--base", str(toy_path), "--extended", str(out), "--mode", "identity"]) == 0
    assert (tmp_path / "zeros.safetensors.verify.run.json").exists()


def test_duplicate_extension_fails_identity_check(toy_path, tmp_path, capsys):
    out = tmp_path / "dup.safetensors"
    assert main(["extend", str(toy_path), str(out), "--positions", "4", "--init", "duplicate"]) == 0
    report = tmp_path / "report.json"
    argv = ["verify", "--base", str(toy_path), "--extended", str(out), "--report", str(report)]
    assert main(argv) == 3
    assert _read(report)["max_abs"] > 0
    assert "identity violated" in capsys.readouterr().err


def test_verify_deviation_prints_stats(toy_path, tmp_path, capsys):
    out = tmp_path / "dup.safetensors"
    assert main(["extend", str(toy_path), str(out), "--count", "1", "--init", "duplicate"]) == 0
    capsys.readouterr()
    assert main(["verify", "--base", str(toy_path), "--extended", str(out), "--mode", "deviation"]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["mode"] == "deviation"
    assert len(stats["per_prompt"]) == 10


def test_verify_grid_has_seven_cells(toy_path, tmp_path):
    report = tmp_path / "grid.json"
    plot = tmp_path / "grid.png"
    argv = ["verify", "--base", str(toy_path), "--mode", "grid", "--seeds", "2", "--num-prompts", "2"]
    assert main(argv + ["--prompt-len", "4", "--report", str(report), "--plot", str(plot)]) == 0
    assert len(_read(report)["cells"]) == 7
    assert plot.exists()


def test_verify_vocab_mismatch(toy_path, tmp_path):
    other = tmp_path / "other.safetensors"
    assert main(["toy", str(other), "--vocab", "32"]) == 0
    assert main(["verify", "--base", str(toy_path), "--extended", str(other), "--mode", "deviation"]) == 2


def test_missing_checkpoint_is_an_io_error(tmp_path):
    assert main(["verify", "--base", str(tmp_path / "absent.safetensors"), "--mode", "grid"]) == 1


def test_usage_errors_exit_2(capsys):
    assert main(["frobnicate"]) == 2
    assert main(["extend", "a.safetensors"]) == 2


def test_invalid_environment_exits_2(monkeypatch, toy_path, tmp_path):
    monkeypatch.setenv("BABELKIT_THREADS", "0")
    assert main(["toy", str(tmp_path / "t.safetensors")]) == 2
    assert main(["--threads", "2", "toy", str(tmp_path / "t.safetensors")]) == 0


def test_clean_skips_malformed_lines(corpus_path, tmp_path):
    with corpus_path.open("a", encoding="utf-8") as handle:
        handle.write("{pas du json\n")
    out = tmp_path / "clean.jsonl"
    assert main(["clean", str(corpus_path), str(out)]) == 0
    kept = [json.loads(line)["id"] for line in out.read_text(encoding="utf-8").splitlines()]
    assert kept == ["a", "b", "d", "e", "f"]
    rejected = [json.loads(line) for line in (tmp_path / "clean.jsonl.rejected.jsonl").read_text(encoding="utf-8").splitlines()]
    assert rejected == [{"id": "c", "reason": "TooShort", "detail": "5 caractères < 100"}]
    assert _read(tmp_path / "clean.jsonl.run.json")["parameters"]["skipped_lines"] == 1


def test_clean_strict_reports_line_number(corpus_path, tmp_path, capsys):
    lines = corpus_path.read_text(encoding="utf-8").splitlines()
    lines.insert(1, '{"id": "z", "text": "x"}')
    corpus_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    assert main(["clean", str(corpus_path), str(tmp_path / "out.jsonl"), "--strict"]) == 2
    assert "ligne 2" in capsys.readouterr().err


def test_clean_with_score_sidecar(corpus_path, tmp_path):
    scores = tmp_path / "scores.jsonl"
    write_corpus(scores, [{"id": i, "score": s} for i, s in zip("abdef", (0.9, 0.1, 0.6, 0.7, 0.2))])
    out = tmp_path / "clean.jsonl"
    assert main(["clean", str(corpus_path), str(out), "--threshold", "0.5", "--scores", str(scores)]) == 0
    assert [json.loads(line)["id"] for line in out.read_text().splitlines()] == ["a", "d", "e"]


def test_clean_rejects_duplicate_sidecar_ids(corpus_path, tmp_path):
    scores = tmp_path / "scores.jsonl"
    write_corpus(scores, [{"id": "a", "score": 0.9}, {"id": "a", "score": 0.1}])
    argv = ["clean", str(corpus_path), str(tmp_path / "o.jsonl"), "--threshold", "0.5", "--scores", str(scores)]
    assert main(argv) == 2


def test_dedup_report_and_pairs(corpus_path, tmp_path):
    out = tmp_path / "dedup.jsonl"
    pairs = tmp_path / "pairs.tsv"
    assert main(["dedup", str(corpus_path), str(out), "--seed", "5", "--pairs-tsv", str(pairs)]) == 0
    report = _read(tmp_path / "dedup.jsonl.dedup.json")
    assert report["exact_groups"] == [["a", "b"]]
    assert report["removed"] == [["b", "a"]]
    assert [json.loads(line)["id"] for line in out.read_text().splitlines()] == ["a", "c", "d", "e", "f"]
    assert pairs.read_text() == ""


def test_stats_skips_undetermined_language(corpus_path, tmp_path, capsys):
    out = tmp_path / "stats.json"
    assert main(["stats", str(corpus_path), str(out), "--pretty"]) == 0
    stats = _read(out)
    assert sorted(stats["counts"]) == ["en", "fr", "hi"]
    assert stats["unit"] == "words"
    assert "textbook" in capsys.readouterr().out


def test_mix_neutral_boosts_match_stage1(corpus_path, tmp_path):
    stats = tmp_path / "stats.json"
    assert main(["stats", str(corpus_path), str(stats)]) == 0
    one, two = tmp_path / "one.json", tmp_path / "two.json"
    assert main(["mix", "--stats", str(stats), str(one), "--stage", "1", "--budget", "60"]) == 0
    argv = ["mix", "--stats", str(stats), str(two), "--stage", "2", "--budget", "60"]
    assert main(argv + ["--low-boost", "1", "--textbook-boost", "1"]) == 0
    assert _read(one)["allocations"] == _read(two)["allocations"]
    assert _read(one)["total"] == 60


def test_mix_rejects_bad_budget(corpus_path, tmp_path):
    stats = tmp_path / "stats.json"
    assert main(["stats", str(corpus_path), str(stats)]) == 0
    assert main(["mix", "--stats", str(stats), str(tmp_path / "p.json"), "--budget", "1.5"]) == 2


def test_registry_export(tmp_path):
    out = tmp_path / "registry.json"
    assert main(["registry", str(out)]) == 0
    registry = _read(out)
    assert len(registry["languages"]) == 25
    assert [c["code"] for c in registry["listing_conflicts"]] == ["tr"]


def test_outputs_do_not_depend_on_thread_count(deep_toy, corpus_path, tmp_path):
    stats = tmp_path / "stats.json"
    assert main(["stats", str(corpus_path), str(stats)]) == 0
    outputs = {}
    for threads in ("1", "2", "8"):
        ckpt = tmp_path / f"ext{threads}.safetensors"
        deduped = tmp_path / f"dedup{threads}.jsonl"
        plan = tmp_path / f"plan{threads}.json"
        assert main(["--threads", threads, "extend", str(deep_toy), str(ckpt), "--auto-k", "6", "--seed", "9"]) == 0
        assert main(["--threads", threads, "dedup", str(corpus_path), str(deduped), "--seed", "9"]) == 0
        argv = ["--threads", threads, "mix", "--stats", str(stats), str(plan), "--stage", "2", "--budget", "50"]
        assert main(argv + ["--corpus", str(corpus_path), "--seed", "9"]) == 0
        outputs[threads] = [
            ckpt.read_bytes(),
            deduped.read_bytes(),
            (tmp_path / f"dedup{threads}.jsonl.dedup.json").read_bytes(),
            plan.read_bytes(),
            (tmp_path / f"plan{threads}.json.manifest.json").read_bytes(),
        ]
    assert outputs["1"] == outputs["2"] == outputs["8"]


@pytest.mark.parametrize("prompts", [[[1, 1.7]], [[True, 2]], [["3"]]])
def test_verify_rejects_non_integer_prompt_tokens(toy_path, tmp_path, capsys, prompts):
    path = tmp_path / "prompts.json"
    path.write_text(json.dumps(prompts), encoding="utf-8")
    argv = ["verify", "--base", str(toy_path), "--extended", str(toy_path), "--prompts", str(path)]
    assert main(argv) == 2
    assert "malformed prompts" in capsys.readouterr().err


def test_clean_warns_when_scores_come_without_threshold(corpus_path, tmp_path, capsys):
    scores = tmp_path / "scores.jsonl"
    write_corpus(scores, [{"id": "a", "score": 0.1}])
    out = tmp_path / "clean.jsonl"
    assert main(["clean", str(corpus_path), str(out), "--scores", str(scores)]) == 0
    assert "--scores ignoré" in capsys.readouterr().err
    assert [json.loads(line)["id"] for line in out.read_text(encoding="utf-8").splitlines()] == ["a", "b", "d", "e", "f"]
