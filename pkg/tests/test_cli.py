"""End-to-end command flows on small synthetic data."""

import numpy as np
import pytest

from churnvision import storage
from churnvision.cli import main
from churnvision.imaging import stack_images
from churnvision.labeling import EventRecord
from churnvision.training import predict


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """synth -> prepare -> train (dl1 + ae) artifacts shared by the flow tests."""
    root = tmp_path_factory.mktemp("flow")
    events = root / "events.csv"
    labels = root / "labels.csv"
    # enough churners that both split sides keep both classes
    assert run("synth", "--customers", 400, "--churn-rate", 0.12,
               "--excluded", 0.03, "--seed", 9, "--out", events,
               "--labels-out", labels) == 0
    train_ds = root / "train.ds"
    test_ds = root / "test.ds"
    assert run("prepare", "--events", events, "--reference-day", 120,
               "--channels", "dl1", "--seed", 9, "--split", "0.8",
               "--out-train", train_ds, "--out-test", test_ds) == 0
    ckpt = root / "dl1.ckpt"
    assert run("train", "--arch", "dl1", "--train", train_ds, "--epochs", 2,
               "--batch", 64, "--seed", 9, "--out", ckpt) == 0
    ae_ckpt = root / "ae.ckpt"
    assert run("train", "--ae", "--hidden", 4, "--train", train_ds, "--epochs", 2,
               "--batch", 64, "--seed", 9, "--out", ae_ckpt) == 0
    return {"root": root, "events": events, "labels": labels,
            "train": train_ds, "test": test_ds, "ckpt": ckpt, "ae": ae_ckpt}


def test_synth_writes_matching_sidecar(workspace):
    labels = storage.read_labels(workspace["labels"])
    assert len(labels) == 400
    events = storage.read_events(workspace["events"])
    assert {ev.customer_id for ev in events} == set(labels)


def test_synth_rejects_bad_rate(tmp_path, capsys):
    code = run("synth", "--customers", 10, "--churn-rate", 1.5,
               "--out", tmp_path / "e.csv", "--labels-out", tmp_path / "l.csv")
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_synth_is_deterministic(tmp_path):
    for d in ("a", "b"):
        (tmp_path / d).mkdir()
        assert run("synth", "--customers", 50, "--seed", 4,
                   "--out", tmp_path / d / "e.csv",
                   "--labels-out", tmp_path / d / "l.csv") == 0
    assert (tmp_path / "a" / "e.csv").read_bytes() == (tmp_path / "b" / "e.csv").read_bytes()
    assert (tmp_path / "a" / "l.csv").read_bytes() == (tmp_path / "b" / "l.csv").read_bytes()


def test_prepare_micro_events_file(tmp_path, capsys):
    # the three labeling archetypes: one active, one churned, one excluded
    rows = ["customer_id,day,channel,value",
            "active,85,voice_out_freq,1.0", "active,60,voice_out_freq,1.0",
            "quiet,60,voice_out_freq,1.0",
            "gone,50,voice_out_freq,1.0"]
    events = tmp_path / "micro.csv"
    events.write_text("\n".join(rows) + "\n")
    code = run("prepare", "--events", events, "--reference-day", 100,
               "--out-train", tmp_path / "tr.ds",
               "--out-test", tmp_path / "te.ds")
    assert code == 0
    out = capsys.readouterr().out
    assert "labeled=2" in out and "excluded=1" in out
    assert len(storage.read_dataset(tmp_path / "tr.ds").images) == 2


def test_prepare_warns_on_out_of_set_channels(workspace, tmp_path, capsys):
    # dl1 selected, but synth events carry top-up channels
    assert run("prepare", "--events", workspace["events"], "--reference-day", 120,
               "--channels", "dl1", "--out-train", tmp_path / "tr.ds",
               "--out-test", tmp_path / "te.ds") == 0
    assert "ignored" in capsys.readouterr().err


def test_prepare_reports_split_churn_rates(workspace):
    train_ds = storage.read_dataset(workspace["train"])
    test_ds = storage.read_dataset(workspace["test"])
    train_rate = np.mean([im.label for im in train_ds.images])
    test_rate = np.mean([im.label for im in test_ds.images])
    assert abs(train_rate - test_rate) < 0.01
    assert all(0.0 <= im.pixels.min() and im.pixels.max() <= 1.0 for im in train_ds.images)


def test_train_checkpoint_blob_matches_parameter_count(workspace):
    ckpt = storage.load_checkpoint(workspace["ckpt"])
    assert ckpt.manifest["blob_bytes"] // 8 == ckpt.manifest["parameter_count"] == 3572


def test_train_is_deterministic(workspace, tmp_path):
    out = tmp_path / "again.ckpt"
    assert run("train", "--arch", "dl1", "--train", workspace["train"], "--epochs", 2,
               "--batch", 64, "--seed", 9, "--out", out) == 0
    assert out.read_bytes() == workspace["ckpt"].read_bytes()


def test_train_rejects_channel_mismatch(workspace, capsys):
    code = run("train", "--arch", "dl2", "--train", workspace["train"],
               "--epochs", 1, "--out", workspace["root"] / "bad.ckpt")
    assert code == 1
    assert "expects" in capsys.readouterr().err


def test_train_requires_exactly_one_mode(workspace, capsys):
    code = run("train", "--train", workspace["train"], "--out", workspace["root"] / "x.ckpt")
    assert code == 1


def test_evaluate_train_and_test(workspace, capsys, tmp_path):
    for name in ("train", "test"):
        out = tmp_path / f"{name}.auc.txt"
        assert run("evaluate", "--model", workspace["ckpt"], "--data", workspace[name],
                   "--out", out) == 0
        text = capsys.readouterr().out
        assert "auc=" in text
        auc_value = float(out.read_text().splitlines()[3].split(": ")[1])
        assert 0.0 <= auc_value <= 1.0


def test_evaluate_rejects_autoencoder_checkpoint(workspace, capsys):
    code = run("evaluate", "--model", workspace["ae"], "--data", workspace["train"])
    assert code == 1
    assert "classifier" in capsys.readouterr().err


def test_evaluate_rejects_single_class_dataset(workspace, tmp_path, capsys):
    ds = storage.read_dataset(workspace["train"])
    ones = [im for im in ds.images if im.label == 1]
    mono = storage.Dataset(ones, ds.channels, ds.window, ds.normalizer)
    path = tmp_path / "mono.ds"
    storage.write_dataset(path, mono)
    assert run("evaluate", "--model", workspace["ckpt"], "--data", path) == 1
    assert "both classes" in capsys.readouterr().err


def test_predict_matches_evaluate_probabilities(workspace, tmp_path):
    scores_path = tmp_path / "scores.csv"
    assert run("predict", "--model", workspace["ckpt"], "--events", workspace["events"],
               "--reference-day", 120, "--out", scores_path) == 0
    scores, exclusions = storage.read_scores(scores_path)
    ckpt = storage.load_checkpoint(workspace["ckpt"])
    ds = storage.read_dataset(workspace["train"])
    images, _ = stack_images(ds.images)
    expected = predict(ckpt.network_spec, ckpt.params, images)
    for im, value in zip(ds.images, expected):
        assert scores[im.customer_id] == float(value)  # exact pipeline equivalence
    assert all(0.0 < v < 1.0 for v in scores.values())
    # excluded customers land in the exclusions section, never the scores
    intended = storage.read_labels(workspace["labels"])
    excluded_ids = {cid for cid, v in intended.items() if v == "excluded"}
    assert excluded_ids == {cid for cid, _ in exclusions}
    assert not excluded_ids & set(scores)


def test_predict_is_deterministic(workspace, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert run("predict", "--model", workspace["ckpt"], "--events", workspace["events"],
                   "--reference-day", 120, "--out", out) == 0
    assert a.read_bytes() == b.read_bytes()


def test_visualize_autoencoder(workspace, tmp_path):
    out = tmp_path / "units"
    assert run("visualize", "--model", workspace["ae"], "--out", out) == 0
    pgms = sorted(out.glob("unit_*.pgm"))
    csvs = sorted(out.glob("unit_*.csv"))
    assert len(pgms) == len(csvs) == 4
    header = pgms[0].read_text().splitlines()[:3]
    assert header == ["P2", "10 30", "255"]  # channels x days
    values = np.array([[float(v) for v in line.split(",")]
                       for line in csvs[0].read_text().splitlines()])
    assert values.shape == (30, 10)
    assert abs(np.linalg.norm(values.ravel()) - 1.0) <= 1e-9

    # byte-identical on re-run
    again = tmp_path / "units2"
    assert run("visualize", "--model", workspace["ae"], "--out", again) == 0
    for p in pgms:
        assert p.read_bytes() == (again / p.name).read_bytes()


def test_visualize_rejects_classifier(workspace, capsys):
    assert run("visualize", "--model", workspace["ckpt"], "--out", workspace["root"] / "x") == 1
    assert "autoencoder" in capsys.readouterr().err
