"""
cli.py 통합 테스트
산출물 byte 재현성, 종료 코드, 서브커맨드 간 파일 연결
"""

import json
import struct

import pandas as pd
import pytest

from cli import main
from tensor_io import MAGIC, load_features, read_tensor


@pytest.fixture
def scene_files(tmp_path):
    prefix = tmp_path / "scene"
    assert main(["gen-scene", "--out-prefix", str(prefix), "--seed", "3"]) == 0
    return {
        "features": f"{prefix}.features.adt",
        "saliency": f"{prefix}.saliency.adt",
        "labels": f"{prefix}.labels.json",
    }


@pytest.fixture
def controller_file(tmp_path):
    path = tmp_path / "ctl.json"
    summary = tmp_path / "ctl-summary.json"
    code = main(
        ["controller-train", "--epochs", "5", "--out", str(path), "--summary", str(summary)]
    )
    assert code == 0
    return path


def _pipeline(scene_files, out, *extra):
    return main(
        [
            "pipeline",
            "--features",
            scene_files["features"],
            "--saliency",
            scene_files["saliency"],
            "--question",
            "what is in this image",
            "--out",
            str(out),
            *extra,
        ]
    )


# ============================================================
# gen-scene / pool / cluster
# ============================================================
class TestTensorCommands:
    def test_gen_scene(self, scene_files):
        features = load_features(scene_files["features"])
        assert features.side == 16
        labels = json.loads(open(scene_files["labels"], encoding="utf-8").read())
        assert labels["seed"] == 3
        assert len(labels["planted"]) == 16

    def test_pool(self, scene_files, tmp_path):
        out = tmp_path / "pooled.adt"
        code = main(
            [
                "pool",
                "--features",
                scene_files["features"],
                "--saliency",
                scene_files["saliency"],
                "--alpha",
                "4",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        assert load_features(out).side == 4
        assert read_tensor(f"{out}.saliency").data.shape == (4, 4)

    def test_pool_non_divisible_is_config_error(self, scene_files, tmp_path, capsys):
        code = main(
            ["pool", "--features", scene_files["features"], "--alpha", "3", "--out", str(tmp_path / "x")]
        )
        assert code == 3
        assert "error:" in capsys.readouterr().err

    def test_missing_input_is_input_error(self, tmp_path):
        code = main(
            ["pool", "--features", str(tmp_path / "none.adt"), "--alpha", "2", "--out", str(tmp_path / "x")]
        )
        assert code == 2

    def test_corrupt_header_is_input_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.adt"
        bad.write_bytes(MAGIC + struct.pack("<5I", 0, 3, 2**31, 2**31, 2**31))
        code = main(["pool", "--features", str(bad), "--alpha", "2", "--out", str(tmp_path / "x")])
        assert code == 2
        assert "harness.TruncatedPayload" in capsys.readouterr().err

    def test_cluster_repeatable(self, scene_files, tmp_path):
        outs = [tmp_path / "c1.json", tmp_path / "c2.json"]
        for out in outs:
            code = main(
                [
                    "cluster",
                    "--features",
                    scene_files["features"],
                    "--saliency",
                    scene_files["saliency"],
                    "--clusters",
                    "3",
                    "--out",
                    str(out),
                ]
            )
            assert code == 0
        assert outs[0].read_bytes() == outs[1].read_bytes()
        result = json.loads(outs[0].read_text(encoding="utf-8"))
        assert len(result["assignments"]) == 256

    def test_too_many_clusters(self, scene_files, tmp_path):
        code = main(
            [
                "cluster",
                "--features",
                scene_files["features"],
                "--saliency",
                scene_files["saliency"],
                "--alpha",
                "4",
                "--clusters",
                "17",
            ]
        )
        assert code == 3


# ============================================================
# pipeline
# ============================================================
class TestPipelineCommand:
    def test_fixed_profile_repeatable(self, scene_files, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert _pipeline(scene_files, a, "--fixed-profile", "1") == 0
        assert _pipeline(scene_files, b, "--fixed-profile", "1") == 0
        assert a.read_bytes() == b.read_bytes()
        report = json.loads(a.read_text(encoding="utf-8"))
        assert report["profile_source"] == "fixed"
        assert report["selected_profile"]["alpha"] == 2
        assert (tmp_path / "a.json.timings.json").exists()

    def test_tokens_out(self, scene_files, tmp_path):
        tokens = tmp_path / "fmix.adt"
        code = _pipeline(
            scene_files, tmp_path / "r.json", "--fixed-profile", "4:5:0", "--tokens-out", str(tokens)
        )
        assert code == 0
        report = json.loads((tmp_path / "r.json").read_text(encoding="utf-8"))
        assert read_tensor(tokens).data.shape == (report["token_budget"]["total"], 64)

    def test_with_controller_file(self, scene_files, controller_file, tmp_path):
        out = tmp_path / "r.json"
        assert _pipeline(scene_files, out, "--controller", str(controller_file)) == 0
        report = json.loads(out.read_text(encoding="utf-8"))
        assert report["profile_source"] == "controller"
        assert sum(report["distribution"]["probs"]) == pytest.approx(1.0)

    def test_bad_profile_index(self, scene_files, tmp_path):
        assert _pipeline(scene_files, tmp_path / "r.json", "--fixed-profile", "9") == 3

    def test_empty_question(self, scene_files, tmp_path):
        code = main(
            [
                "pipeline",
                "--features",
                scene_files["features"],
                "--saliency",
                scene_files["saliency"],
                "--fixed-profile",
                "0",
                "--tokens",
                "",
            ]
        )
        assert code == 2

    def test_bad_log_level(self, scene_files, tmp_path, monkeypatch):
        monkeypatch.setenv("ADATA_LOG_LEVEL", "chatty")
        assert _pipeline(scene_files, tmp_path / "r.json", "--fixed-profile", "0") == 3


# ============================================================
# controller / sweep / train / report
# ============================================================
class TestHarnessCommands:
    def test_controller_train_and_predict(self, controller_file, tmp_path):
        summary = json.loads((tmp_path / "ctl-summary.json").read_text(encoding="utf-8"))
        assert summary["epochs"] == 5
        assert 0.0 <= summary["train_accuracy"] <= 1.0

        out = tmp_path / "pred.json"
        code = main(
            [
                "controller-predict",
                "--controller",
                str(controller_file),
                "--question",
                "what color is the cat",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        pred = json.loads(out.read_text(encoding="utf-8"))
        assert 0 <= pred["profile_index"] < 3

    def test_controller_train_repeatable(self, tmp_path):
        outs = [tmp_path / "p1.json", tmp_path / "p2.json"]
        for out in outs:
            assert main(["controller-train", "--epochs", "3", "--out", str(out), "--summary", str(tmp_path / "s.json")]) == 0
        assert outs[0].read_bytes() == outs[1].read_bytes()

    def test_sweep_repeatable(self, tmp_path):
        outs = [tmp_path / "s1.csv", tmp_path / "s2.csv"]
        for out in outs:
            code = main(
                ["sweep", "--alphas", "2,4", "--betas", "3,N", "--scenes", "1", "--out", str(out)]
            )
            assert code == 0
        assert outs[0].read_bytes() == outs[1].read_bytes()
        table = pd.read_csv(outs[0])
        assert len(table) == 5
        assert (tmp_path / "s1.csv.timings.json").exists()

    def test_train_writes_loss_trace(self, controller_file, tmp_path):
        out = tmp_path / "loss.csv"
        code = main(
            [
                "train",
                "--controller",
                str(controller_file),
                "--profile",
                "4:5:0",
                "--scenes",
                "4",
                "--steps",
                "3",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        assert len(pd.read_csv(out)) == 4

    def test_report(self, scene_files, tmp_path):
        report = tmp_path / "r.json"
        assert _pipeline(scene_files, report, "--fixed-profile", "0") == 0
        out = tmp_path / "summary.md"
        assert main(["report", "--reports", str(report), "--out", str(out)]) == 0
        text = out.read_text(encoding="utf-8")
        assert text.startswith("## Pipeline reports")
        assert "r.json" in text


# ============================================================
# 모든 서브커맨드: 같은 입력 두 번 -> 같은 bytes
# ============================================================
def _argv(command, out, scene_files, controller_file, report_file):
    scene = [
        "--features",
        scene_files["features"],
        "--saliency",
        scene_files["saliency"],
    ]
    ctl = ["--controller", controller_file]
    return {
        "pool": ["pool", *scene, "--alpha", "2", "--out", out],
        "cluster": ["cluster", *scene, "--clusters", "3", "--out", out],
        "aggregate": ["aggregate", *ctl, "--question", "what color", "--out", out],
        "controller-train": [
            "controller-train",
            "--epochs",
            "3",
            "--out",
            out,
            "--summary",
            f"{out}.summary",
        ],
        "controller-predict": [
            "controller-predict",
            *ctl,
            "--question",
            "count the animals",
            "--out",
            out,
        ],
        "pipeline": [
            "pipeline",
            *scene,
            "--question",
            "what is in this image",
            "--fixed-profile",
            "1",
            "--out",
            out,
            "--tokens-out",
            f"{out}.adt",
        ],
        "sweep": [
            "sweep",
            "--alphas",
            "2,4",
            "--betas",
            "3,N",
            "--scenes",
            "1",
            "--out",
            out,
        ],
        "train": [
            "train",
            *ctl,
            "--profile",
            "4:5:0",
            "--scenes",
            "4",
            "--steps",
            "3",
            "--out",
            out,
        ],
        "gen-scene": ["gen-scene", "--out-prefix", out],
        "report": ["report", "--reports", report_file, "--out", out],
    }[command]


def _artifacts(directory):
    return {
        p.name: p.read_bytes()
        for p in sorted(directory.iterdir())
        if not p.name.endswith(".timings.json")
    }


@pytest.mark.parametrize(
    "command",
    [
        "pool",
        "cluster",
        "aggregate",
        "controller-train",
        "controller-predict",
        "pipeline",
        "sweep",
        "train",
        "gen-scene",
        "report",
    ],
)
def test_every_subcommand_is_byte_reproducible(
    command, scene_files, controller_file, tmp_path
):
    report_file = tmp_path / "input-report.json"
    assert _pipeline(scene_files, report_file, "--fixed-profile", "0") == 0

    runs = []
    for name in ("run1", "run2"):
        directory = tmp_path / name
        directory.mkdir()
        out = str(directory / "out")
        argv = _argv(command, out, scene_files, str(controller_file), str(report_file))
        assert main(argv) == 0
        runs.append(_artifacts(directory))
    assert runs[0]
    assert runs[0] == runs[1]
