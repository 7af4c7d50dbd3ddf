"""CLI and HTTP service behavior, end to end over real files."""
from __future__ import annotations

import json
import subprocess
import sys

import jsonschema
import numpy as np
import pytest
from fastapi.testclient import TestClient

from artifact.cli import main
from artifact.corpus import save_jsonl
from artifact.model import ModelConfig, load_checkpoint, train
from artifact.pipeline import load_bundle
from artifact.reporting import read_report
from artifact.service import create_app
from artifact.synth import planted_sentiment_corpus
from artifact.tfa import HEATMAP_SCHEMA

MODEL = {"embedding_dim": 10, "hidden_dim": 0, "num_classes": 2,
         "l2_reg": 0.003, "learning_rate": 0.5, "epochs": 120,
         "batch_size": 32, "seed": 5}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Planted corpus on disk, a config file, and one trained checkpoint."""
    tmp = tmp_path_factory.mktemp("iface")
    tr, va, te = planted_sentiment_corpus(n_train=80, n_val=20, n_test=30,
                                          seed=11)
    save_jsonl(tr, tmp / "train.jsonl")
    save_jsonl(va, tmp / "val.jsonl")
    save_jsonl(te, tmp / "test.jsonl")
    cfg_path = tmp / "run.json"
    cfg_path.write_text(json.dumps({
        "train_path": str(tmp / "train.jsonl"),
        "val_path": str(tmp / "val.jsonl"),
        "test_path": str(tmp / "test.jsonl"),
        "checkpoint": str(tmp / "ckpt.json"),
        "report_dir": str(tmp / "reports"),
        "model": MODEL,
        "instance_method": "EUC", "feature_method": "IG", "steps": 8,
        "n_heatmaps": 3,
    }))
    assert main(["train", "--config", str(cfg_path)]) == 0
    return {"tmp": tmp, "config": str(cfg_path), "reports": tmp / "reports"}


class TestCliCommands:
    def test_train_wrote_loadable_bundle(self, workspace):
        snapshot, class_names = load_bundle(workspace["tmp"] / "ckpt.json")
        assert class_names == ("negative", "positive")
        assert snapshot.metrics["train_accuracy"] > 0.9
        report = read_report(workspace["reports"] / "train_report.json")
        assert report["kind"] == "training"
        assert report["snapshot_hash"] == snapshot.snapshot_hash

    def test_train_epochs_zero_equals_init(self, workspace, tmp_path):
        cfg = workspace["config"]
        rc = main(["train", "--config", cfg, "--epochs", "0",
                   "--checkpoint", str(tmp_path / "init.json"),
                   "--report-dir", str(tmp_path)])
        assert rc == 0
        snapshot, _ = load_bundle(tmp_path / "init.json")
        assert snapshot.metrics["epochs_run"] == 0
        # reserved embedding rows start at zero and stay there untouched
        assert np.all(snapshot.embeddings[:4] == 0.0)

    def test_attribute_report(self, workspace, capsys):
        rc = main(["attribute", "--config", workspace["config"], "--id", "te0"])
        assert rc == 0
        report = read_report(workspace["reports"] / "attribute_te0.json")
        sal = report["body"]["saliency"]
        assert len(sal["tokens"]) == len(sal["scores"])
        assert report["params"]["feature_method"] == "IG"
        assert "dragon" in report["body"]["top_tokens"]

    def test_rank_report_orders_scores(self, workspace):
        rc = main(["rank", "--config", workspace["config"], "--id", "te1"])
        assert rc == 0
        entries = read_report(
            workspace["reports"] / "rank_te1.json")["body"]["ranking"]["entries"]
        scores = [s for _, s in entries]
        assert scores == sorted(scores, reverse=True)
        assert len(entries) == 80

    def test_tfa_heatmap_matches_schema(self, workspace):
        rc = main(["tfa", "--config", workspace["config"], "--id", "te2"])
        assert rc == 0
        payload = read_report(workspace["reports"] / "heatmap_te2.json")
        jsonschema.validate(payload, HEATMAP_SCHEMA)

    def test_aggregate_tables(self, workspace):
        rc = main(["aggregate", "--config", workspace["config"]])
        assert rc == 0
        tables = read_report(workspace["reports"] / "aggregate.json")["body"]
        assert tables["study_role"] == "validation"
        assert {"feature", "tfa", "pmi", "competency"} <= set(tables)

    def test_baselines(self, workspace):
        assert main(["baseline", "pmi", "--config", workspace["config"]]) == 0
        assert main(["baseline", "competency", "--config",
                     workspace["config"]]) == 0
        comp = read_report(workspace["reports"] / "baseline_competency.json")
        assert comp["body"]["all"][0]["token"] == "dragon"

    def test_verify_mask_token(self, workspace):
        rc = main(["verify", "mask", "--config", workspace["config"],
                   "--token", "dragon", "--on", "val"])
        assert rc == 0
        flip = read_report(
            workspace["reports"] / "verify_mask_dragon.json")["body"]["flip"]
        assert flip["n_affected"] == 10  # the positive half of validation
        assert flip["flip_fraction"] > 0.5

    def test_verify_edit_identity(self, workspace):
        rc = main(["verify", "edit", "--config", workspace["config"],
                   "--original", "a fine movie", "--edited", "a fine movie"])
        assert rc == 0
        edit = read_report(workspace["reports"] / "verify_edit.json")["body"]["edit"]
        assert edit["delta_prob"] == 0.0
        assert not edit["flipped"]

    def test_discriminate(self, workspace):
        rc = main(["discriminate", "--config", workspace["config"],
                   "--id", "te3"])
        assert rc == 0
        rep = read_report(
            workspace["reports"] / "discriminator_te3.json")["body"]["report"]
        assert rep["diagnostics"]["converged"]

    def test_discover_top_candidate_is_planted(self, workspace):
        rc = main(["discover", "--config", workspace["config"]])
        assert rc == 0
        dossier = read_report(workspace["reports"] / "dossier.json")
        body = dossier["body"]
        assert body["candidates"][0]["token"] == "dragon"
        assert (body["candidates"][0]["flip"]["flip_fraction"]
                > 10 * body["random_flip_baseline"]["flip_fraction"])
        assert len(body["heatmaps"]) == 3
        for payload in body["heatmaps"]:
            jsonschema.validate(payload, HEATMAP_SCHEMA)

    def test_missing_train_file_names_path(self, workspace, capsys):
        rc = main(["train", "--config", workspace["config"],
                   "--train", "/nowhere/else.jsonl"])
        assert rc != 0
        err = json.loads(capsys.readouterr().err.strip())
        assert "/nowhere/else.jsonl" in err["message"]

    def test_unknown_instance_id(self, workspace, capsys):
        rc = main(["rank", "--config", workspace["config"], "--id", "zz9"])
        assert rc == 2
        err = json.loads(capsys.readouterr().err.strip())
        assert err["error"] == "config"

    def test_id_and_text_both_rejected(self, workspace, capsys):
        rc = main(["rank", "--config", workspace["config"],
                   "--id", "te0", "--text", "also this"])
        assert rc == 2

    def test_unknown_config_key_rejected(self, workspace, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"train_path": "x.jsonl", "typo_key": 1}))
        rc = main(["aggregate", "--config", str(bad)])
        assert rc == 2
        assert "typo_key" in json.loads(capsys.readouterr().err.strip())["message"]

    def test_console_script_help(self):
        proc = subprocess.run([sys.executable, "-m", "artifact.cli", "--help"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert "discover" in proc.stdout


@pytest.fixture(scope="module")
def client():
    tr, va, _ = planted_sentiment_corpus(n_train=80, n_val=20, n_test=10,
                                         seed=11)
    snapshot = train(tr, ModelConfig(**MODEL))
    app = create_app(snapshot, tr, study=va)
    return TestClient(app, raise_server_exceptions=False)


class TestService:
    def test_health_reports_hash(self, client):
        r = client.get("/health")
        assert r.status_code == 200
        body = r.json()
        assert body["status"] == "ok"
        assert body["snapshot_hash"] == r.headers["X-Snapshot-Hash"]
        assert body["classes"] == ["negative", "positive"]

    def test_predict_roundtrip(self, client):
        r = client.post("/predict", json={"text": "dazzling dragon movie"})
        assert r.status_code == 200
        body = r.json()
        assert body["label"] in (0, 1)
        assert abs(sum(body["probabilities"]) - 1.0) < 1e-9
        # oov words fall back to the reserved token; known words round-trip
        assert body["tokens"][0] == "dazzling"
        assert client.post("/predict",
                           json={"text": "zzzz dragon"}).json()["tokens"][0] == "<oov>"

    def test_empty_text_400(self, client):
        assert client.post("/predict", json={"text": ""}).status_code == 400

    def test_whitespace_text_400(self, client):
        assert client.post("/predict", json={"text": "   "}).status_code == 400

    def test_malformed_body_400(self, client):
        r = client.post("/predict", json={"wrong_field": 3})
        assert r.status_code == 400
        assert r.json()["error"] == "bad_request"

    def test_unknown_route_404(self, client):
        assert client.get("/no/such/route").status_code == 404

    def test_snapshot_pin_mismatch_409(self, client):
        r = client.post("/predict", json={"text": "fine"},
                        headers={"X-Snapshot-Hash": "deadbeef"})
        assert r.status_code == 409
        assert r.json()["error"] == "snapshot_mismatch"

    def test_snapshot_pin_match_passes(self, client):
        served = client.get("/health").json()["snapshot_hash"]
        r = client.post("/predict", json={"text": "fine"},
                        headers={"X-Snapshot-Hash": served})
        assert r.status_code == 200

    def test_whatif_identity_zero_delta(self, client):
        r = client.post("/whatif", json={"original": "a grand plot",
                                         "edited": "a grand plot"})
        assert r.status_code == 200
        assert r.json()["delta_prob"] == 0.0

    def test_whatif_removing_planted_token_drops_probability(self, client):
        text = "dragon a wonderful dragon heartfelt story"
        r = client.post("/whatif", json={
            "original": text,
            "edited": text.replace("dragon ", "")})
        assert r.status_code == 200
        assert r.json()["delta_prob"] < 0.0

    def test_tfa_payload_schema(self, client):
        r = client.post("/attribute/tfa", json={"text": "an uplifting tale",
                                                "k": 2, "steps": 4})
        assert r.status_code == 200
        jsonschema.validate(r.json(), HEATMAP_SCHEMA)

    def test_instance_ranking_truncates(self, client):
        r = client.post("/attribute/instance",
                        json={"text": "a dull movie", "method": "RIF",
                              "top_k": 7})
        assert r.status_code == 200
        assert len(r.json()["entries"]) == 7
        assert r.json()["n_train"] == 80

    def test_feature_attribution_method_choice(self, client):
        r = client.post("/attribute/feature",
                        json={"text": "a dull movie", "method": "nope"})
        assert r.status_code == 400

    def test_mask_verification(self, client):
        r = client.post("/verify/mask", json={"token": "dragon"})
        assert r.status_code == 200
        assert r.json()["on"] == "validation"
        assert r.json()["n_affected"] == 10
        r2 = client.post("/verify/mask", json={"random_trials": 3})
        assert r2.status_code == 200
        assert r2.json()["token"] == "<random>"

    def test_mask_needs_exactly_one_mode(self, client):
        assert client.post("/verify/mask", json={}).status_code == 400
        assert client.post("/verify/mask",
                           json={"token": "x", "random_trials": 2}
                           ).status_code == 400

    def test_aggregate_report_404_then_served(self, workspace, tmp_path):
        tr, va, _ = planted_sentiment_corpus(n_train=40, n_val=10, n_test=5,
                                             seed=3)
        snapshot = train(tr, ModelConfig(embedding_dim=6, epochs=10,
                                         learning_rate=0.3, l2_reg=0.01))
        app = create_app(snapshot, tr, study=va, report_dir=tmp_path)
        local = TestClient(app)
        assert local.get("/report/aggregate").status_code == 404
        served_reports = workspace["reports"]
        app2 = create_app(snapshot, tr, study=va, report_dir=served_reports)
        local2 = TestClient(app2)
        r = local2.get("/report/aggregate")
        assert r.status_code == 200
        assert r.json()["kind"] == "aggregate_tables"
