"""Exporter tests, including the cross-component contracts.

The consumer package is exercised only through its external interfaces:
its command line (subprocess) validates the files we write, and a one-shot
interpreter invocation prints its prompt expansion for the byte-match
check. Real-encoder tests skip when no weights can load in this
environment.
"""

import json
import subprocess
import sys

import numpy as np
import pytest

from embed_export.cli import main
from embed_export.encoders import EncoderError, resolve_encoder
from embed_export.exporter import ExportJob, export
from embed_export.prompts import REGRESSION_TEMPLATE, PromptPlan


def consumer_available() -> bool:
    probe = subprocess.run(
        [sys.executable, "-c", "import kpruning"], capture_output=True
    )
    return probe.returncode == 0


needs_consumer = pytest.mark.skipif(
    not consumer_available(), reason="consumer package not installed in this environment"
)


def regression_plan(top=125.0, step=1.0):
    return PromptPlan(REGRESSION_TEMPLATE, "regression", numeric_range=(0.0, top, step))


class TestHashedEncoder:
    def test_deterministic(self):
        enc = resolve_encoder("hashed:32:7")
        a = enc.encode(["alpha", "beta"])
        b = enc.encode(["alpha", "beta"])
        np.testing.assert_array_equal(a, b)
        assert a.shape == (2, 32)

    def test_distinct_prompts_distinct_vectors(self):
        enc = resolve_encoder("hashed:64")
        a = enc.encode(["one", "two"])
        assert not np.array_equal(a[0], a[1])

    def test_bad_identifiers(self):
        for bad in ("hashed:", "nope:x", "clip:", "hashed:4"):
            with pytest.raises(EncoderError):
                resolve_encoder(bad)


class TestExport:
    def test_writes_header_and_records(self, tmp_path):
        out = tmp_path / "anchors.jsonl"
        summary = export(ExportJob(plan=regression_plan(top=5.0), encoder="hashed:16",
                                   out_path=out))
        assert summary["count"] == 6 and summary["dim"] == 16
        lines = out.read_text(encoding="utf-8").splitlines()
        header = json.loads(lines[0])
        assert header["dim"] == 16
        assert header["provenance"] == "external"
        assert header["source"].startswith("hashed:16")
        assert header["template"] == REGRESSION_TEMPLATE
        records = [json.loads(line) for line in lines[1:]]
        assert [r["value"] for r in records] == [0.0, 1.0, 2.0, 3.0, 4.0, 5.0]
        assert all(len(r["embedding"]) == 16 for r in records)

    def test_rerun_identical_bytes(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        export(ExportJob(plan=regression_plan(top=10.0), encoder="hashed:16", out_path=a))
        export(ExportJob(plan=regression_plan(top=10.0), encoder="hashed:16", out_path=b))
        assert a.read_bytes() == b.read_bytes()

    def test_full_float_precision_roundtrip(self, tmp_path):
        out = tmp_path / "anchors.jsonl"
        enc = resolve_encoder("hashed:16")
        expected = enc.encode(regression_plan(top=5.0).prompts())
        export(ExportJob(plan=regression_plan(top=5.0), encoder="hashed:16", out_path=out))
        records = [json.loads(line) for line in out.read_text().splitlines()[1:]]
        got = np.array([r["embedding"] for r in records])
        assert np.array_equal(got, expected)


class TestCli:
    def test_main_exports(self, tmp_path, capsys):
        out = tmp_path / "a.jsonl"
        rc = main(["--range", "0:10:1", "--encoder", "hashed:16", "--out", str(out)])
        assert rc == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["count"] == 11
        assert out.exists()

    def test_usage_errors_exit_1(self, tmp_path):
        assert main(["--out", str(tmp_path / "x")]) == 1
        assert main(["--range", "bad", "--out", str(tmp_path / "x")]) == 1
        assert main(["--range", "0:5:1", "--classes", "a,b", "--out", str(tmp_path / "x")]) == 1

    def test_encoder_failure_exit_nonzero(self, tmp_path):
        rc = main(["--range", "0:5:1", "--encoder", "bogus:scheme",
                   "--out", str(tmp_path / "x")])
        assert rc == 2


@needs_consumer
class TestConsumerContract:
    """Acceptance: the exported file is accepted by the consumer and the
    prompt texts byte-match its own expansion."""

    def test_regression_file_loads_in_consumer(self, tmp_path):
        out = tmp_path / "anchors.jsonl"
        summary = export(ExportJob(plan=regression_plan(), encoder="hashed:512", out_path=out))
        assert summary["count"] == 126 and summary["dim"] == 512
        probe = subprocess.run(
            [sys.executable, "-m", "kpruning.cli", "inspect", "--path", str(out)],
            capture_output=True, text=True,
        )
        assert probe.returncode == 0, probe.stderr
        info = json.loads(probe.stdout)
        assert info["kind"] == "anchors"
        assert info["count"] == 126
        assert info["dim"] == 512
        assert info["provenance"] == "external"
        print("\nACCEPTANCE PASS: exported file accepted by the consumer "
              f"(126 records, dim 512)")

    def test_prompts_byte_match_consumer_expansion(self):
        plan = regression_plan()
        probe = subprocess.run(
            [
                sys.executable,
                "-c",
                "import json\n"
                "from kpruning.anchors import AnchorSpec, PromptTemplate, expand_prompts\n"
                "spec = AnchorSpec(numeric_range=(0.0, 125.0, 1.0))\n"
                "template = PromptTemplate('The remaining useful life is {num}.', 'regression')\n"
                "print(json.dumps(expand_prompts(template, spec)))\n",
            ],
            capture_output=True, text=True,
        )
        assert probe.returncode == 0, probe.stderr
        consumer_prompts = json.loads(probe.stdout)
        ours = plan.prompts()
        assert [p.encode("utf-8") for p in ours] == [p.encode("utf-8") for p in consumer_prompts]
        print("\nACCEPTANCE PASS: prompt texts byte-match the consumer expansion")

    def test_classification_file_loads_and_trains(self, tmp_path):
        from embed_export.prompts import CLASSIFICATION_TEMPLATE

        out = tmp_path / "cls.jsonl"
        plan = PromptPlan(CLASSIFICATION_TEMPLATE, "classification",
                          class_names=("walking", "sitting"))
        export(ExportJob(plan=plan, encoder="hashed:32", out_path=out))
        probe = subprocess.run(
            [sys.executable, "-m", "kpruning.cli", "inspect", "--path", str(out)],
            capture_output=True, text=True,
        )
        assert probe.returncode == 0, probe.stderr
        assert json.loads(probe.stdout)["payload_kind"] == "class"


class TestRealClipEncoder:
    def test_clip_export_when_weights_available(self, tmp_path):
        try:
            encoder = resolve_encoder("clip:openai/clip-vit-base-patch32")
        except EncoderError as e:
            pytest.skip(f"CLIP weights unavailable here: {e}")
        out = tmp_path / "clip.jsonl"
        summary = export(ExportJob(plan=regression_plan(), encoder="clip:openai/clip-vit-base-patch32",
                                   out_path=out))
        assert summary["count"] == 126
        assert summary["dim"] == encoder.dim == 512
