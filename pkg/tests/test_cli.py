import json

import numpy as np
import pytest

from gcnrex import cli

from conftest import synth_examples

FIG_RECORD = {
    "id": "fig", "tokens": ["he", "was", "not", "a", "relative",
                            "of", "Mike", "Cane"],
    "pos": ["PRP", "VBD", "RB", "DT", "NN", "IN", "NNP", "NNP"],
    "ner": ["O", "O", "O", "O", "O", "O", "PERSON", "PERSON"],
    "heads": [5, 5, 5, 5, 0, 8, 8, 5],
    "deprels": ["nsubj", "cop", "neg", "det", "root", "case", "nmod", "name"],
    "subj_start": 0, "subj_end": 0, "obj_start": 6, "obj_end": 7,
    "subj_type": "PERSON", "obj_type": "PERSON", "relation": "no_relation",
}


def write_dataset(path, examples):
    with open(path, "w", encoding="utf-8") as f:
        for ex in examples:
            f.write(json.dumps({
                "id": ex.id, "tokens": list(ex.tokens), "pos": list(ex.pos),
                "ner": list(ex.ner), "heads": list(ex.heads),
                "deprels": list(ex.deprels),
                "subj_start": ex.subj_span[0], "subj_end": ex.subj_span[1],
                "obj_start": ex.obj_span[0], "obj_end": ex.obj_span[1],
                "subj_type": ex.subj_type, "obj_type": ex.obj_type,
                "relation": ex.relation}) + "\n")


@pytest.fixture
def synth_path(tmp_path):
    p = tmp_path / "train.jsonl"
    write_dataset(p, synth_examples(24))
    return p


@pytest.fixture
def fig_path(tmp_path):
    p = tmp_path / "fig.jsonl"
    p.write_text(json.dumps(FIG_RECORD) + "\n")
    return p


TINY_MODEL = ["--word-dim", "8", "--pos-dim", "2", "--ner-dim", "2",
              "--lstm-hidden", "8", "--gcn-hidden", "8", "--ffnn-hidden", "8",
              "--dropout", "0.0"]
TINY_TRAIN = ["--epochs", "2", "--lr", "0.3", "--batch-size", "8",
              "--anneal-from", "1000"]


def train_checkpoint(synth_path, tmp_path, name="model.ckpt", extra=()):
    out = tmp_path / name
    code = cli.main(["train", "--data", str(synth_path),
                     "--dev", str(synth_path), "--out", str(out),
                     *TINY_MODEL, *TINY_TRAIN, *extra])
    assert code == cli.EXIT_OK
    return out


class TestPrune:
    def test_figure_report(self, fig_path, capsys):
        code = cli.main(["prune", "--data", str(fig_path), "--k", "0"])
        assert code == cli.EXIT_OK
        report = json.loads(capsys.readouterr().out)
        ex = report["examples"][0]
        assert ex["lca"] == 5
        assert ex["kept"] == [1, 5, 7, 8]
        assert ex["path"] == [1, 5, 7, 8]
        assert report["summary"]["mean_kept_fraction"] == 0.5

    def test_k_one_keeps_all(self, fig_path, capsys):
        cli.main(["prune", "--data", str(fig_path), "--k", "1"])
        report = json.loads(capsys.readouterr().out)
        assert report["examples"][0]["kept"] == list(range(1, 9))

    def test_out_file(self, fig_path, tmp_path):
        out = tmp_path / "report.json"
        code = cli.main(["prune", "--data", str(fig_path), "--out", str(out)])
        assert code == cli.EXIT_OK
        assert json.loads(out.read_text())["k"] == 1

    def test_conllu_input(self, tmp_path, capsys):
        p = tmp_path / "x.conllu"
        p.write_text("1\tHe\the\tPRON\tPRP\t_\t2\tnsubj\t_\t_\n"
                     "2\tretired\tretire\tVERB\tVBD\t_\t0\troot\t_\t_\n")
        code = cli.main(["prune", "--conllu", str(p), "--subj", "0:0",
                         "--obj", "1:1", "--k", "0"])
        assert code == cli.EXIT_OK
        report = json.loads(capsys.readouterr().out)
        assert report["examples"][0]["kept"] == [1, 2]

    def test_cycle_exits_2(self, tmp_path):
        rec = dict(FIG_RECORD, heads=[2, 1, 5, 5, 0, 8, 8, 5])
        p = tmp_path / "bad.jsonl"
        p.write_text(json.dumps(rec) + "\n")
        assert cli.main(["prune", "--data", str(p)]) == cli.EXIT_USAGE

    def test_missing_input_exits_2(self):
        assert cli.main(["prune", "--k", "1"]) == cli.EXIT_USAGE

    def test_missing_file_exits_1(self):
        assert cli.main(["prune", "--data", "/no/such.jsonl"]) == cli.EXIT_RUNTIME

    def test_bad_k_rejected(self, fig_path):
        with pytest.raises(SystemExit) as info:
            cli.main(["prune", "--data", str(fig_path), "--k", "-2"])
        assert info.value.code == 2


class TestStats:
    def test_report_and_figure(self, synth_path, tmp_path, capsys):
        figs = tmp_path / "figs"
        code = cli.main(["stats", "--data", str(synth_path),
                         "--figures", str(figs)])
        assert code == cli.EXIT_OK
        report = json.loads(capsys.readouterr().out)
        assert report["num_examples"] == 24
        assert set(report["labels"]) == {"rel_a", "rel_b", "no_relation"}
        assert report["mean_kept_fraction_by_k"]["full"] == 1.0
        assert (figs / "labels.png").exists()


class TestTrain:
    def test_writes_checkpoint_and_history(self, synth_path, tmp_path, capsys):
        out = train_checkpoint(synth_path, tmp_path)
        assert out.exists()
        hist = out.with_name(out.name + ".history.jsonl")
        lines = hist.read_text().splitlines()
        assert len(lines) == 2
        assert json.loads(lines[0])["epoch"] == 1
        summary = json.loads(capsys.readouterr().out.splitlines()[-1])
        assert "dev_f1" in summary

    def test_deterministic(self, synth_path, tmp_path):
        a = train_checkpoint(synth_path, tmp_path, "a.ckpt")
        b = train_checkpoint(synth_path, tmp_path, "b.ckpt")
        assert a.read_bytes() == b.read_bytes()
        ha = a.with_name(a.name + ".history.jsonl").read_bytes()
        hb = b.with_name(b.name + ".history.jsonl").read_bytes()
        assert ha == hb

    def test_median_runs(self, synth_path, tmp_path, capsys):
        train_checkpoint(synth_path, tmp_path, "m.ckpt",
                         extra=["--runs", "3", "--median", "--epochs", "1"])
        summary = json.loads(capsys.readouterr().out.splitlines()[-1])
        assert len(summary["runs"]) == 3
        assert summary["selected_seed"] in {1, 2, 3}

    def test_history_figure(self, synth_path, tmp_path):
        figs = tmp_path / "figs"
        train_checkpoint(synth_path, tmp_path,
                         extra=["--figures", str(figs), "--epochs", "1"])
        assert (figs / "history.png").exists()


class TestEvalPredictExplain:
    @pytest.fixture
    def ckpt(self, synth_path, tmp_path):
        return train_checkpoint(synth_path, tmp_path, extra=["--epochs", "15"])

    def test_eval_report(self, synth_path, tmp_path, ckpt, capsys):
        figs = tmp_path / "figs"
        code = cli.main(["eval", "--data", str(synth_path),
                         "--checkpoint", str(ckpt), "--buckets",
                         "--figures", str(figs)])
        assert code == cli.EXIT_OK
        report = json.loads(capsys.readouterr().out)
        assert set(report) == {"precision", "recall", "f1", "macro_f1",
                               "buckets"}
        assert 0.0 <= report["f1"] <= 1.0
        assert (figs / "buckets.png").exists()

    def test_predict_deterministic(self, synth_path, tmp_path, ckpt):
        outs = []
        for name in ("p1.jsonl", "p2.jsonl"):
            out = tmp_path / name
            code = cli.main(["predict", "--data", str(synth_path),
                             "--checkpoint", str(ckpt), "--out", str(out)])
            assert code == cli.EXIT_OK
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]
        header = json.loads(outs[0].decode().splitlines()[0])
        assert header["labels"][0] == "no_relation"

    def test_explain_outputs(self, synth_path, tmp_path, ckpt, capsys):
        figs = tmp_path / "figs"
        tsv = tmp_path / "contrib.tsv"
        code = cli.main(["explain", "--data", str(synth_path),
                         "--checkpoint", str(ckpt), "--tsv", str(tsv),
                         "--figures", str(figs), "--max-figures", "2"])
        assert code == cli.EXIT_OK
        report = json.loads(capsys.readouterr().out)
        assert len(report["examples"]) == 24
        for rec in report["examples"]:
            assert sum(rec["counts"]) == 8  # gcn hidden width
            assert len(rec["counts"]) == len(rec["tokens"])
        assert set(report["relations"]) <= {"rel_a", "rel_b", "no_relation"}
        lines = tsv.read_text().splitlines()
        assert lines[0] == "id\ttoken_index\ttoken\tcontribution\tkept"
        assert len(lines) == 1 + 24 * 5
        assert (figs / "contrib_000.png").exists()
        assert not (figs / "contrib_002.png").exists()


class TestInterpolate:
    def write_preds(self, path, rows, labels=("no_relation", "rel_a")):
        with open(path, "w", encoding="utf-8") as f:
            f.write(json.dumps({"labels": list(labels)}) + "\n")
            for id_, probs in rows:
                f.write(json.dumps({"id": id_, "probs": probs}) + "\n")

    def test_fixed_alpha(self, tmp_path, capsys):
        a = tmp_path / "a.jsonl"
        b = tmp_path / "b.jsonl"
        out = tmp_path / "mix.jsonl"
        self.write_preds(a, [("1", [1.0, 0.0])])
        self.write_preds(b, [("1", [0.0, 1.0])])
        code = cli.main(["interpolate", "--a", str(a), "--b", str(b),
                         "--alpha", "0.6", "--out", str(out)])
        assert code == cli.EXIT_OK
        row = json.loads(out.read_text().splitlines()[1])
        assert row["probs"] == [0.6, 0.4]

    def test_tune_requires_gold(self, tmp_path):
        a = tmp_path / "a.jsonl"
        self.write_preds(a, [("1", [1.0, 0.0])])
        code = cli.main(["interpolate", "--a", str(a), "--b", str(a),
                         "--tune", "--out", str(tmp_path / "o.jsonl")])
        assert code == cli.EXIT_USAGE

    def test_tune_reports_alpha(self, tmp_path, fig_path, capsys):
        a = tmp_path / "a.jsonl"
        b = tmp_path / "b.jsonl"
        self.write_preds(a, [("fig", [1.0, 0.0])])
        self.write_preds(b, [("fig", [0.0, 1.0])])
        code = cli.main(["interpolate", "--a", str(a), "--b", str(b),
                         "--tune", "--gold", str(fig_path),
                         "--out", str(tmp_path / "o.jsonl")])
        assert code == cli.EXIT_OK
        report = json.loads(capsys.readouterr().out)
        assert report["alpha"] == 0.0  # ties resolve to the smallest alpha

    def test_missing_alpha_and_tune(self, tmp_path):
        a = tmp_path / "a.jsonl"
        self.write_preds(a, [("1", [1.0, 0.0])])
        code = cli.main(["interpolate", "--a", str(a), "--b", str(a),
                         "--out", str(tmp_path / "o.jsonl")])
        assert code == cli.EXIT_USAGE


class TestGradcheck:
    def test_passes(self, capsys):
        code = cli.main(["gradcheck", "--seed", "3"])
        assert code == cli.EXIT_OK
        verdict = json.loads(capsys.readouterr().out)
        assert verdict["passed"] is True
        assert verdict["max_relative_error"] < 1e-4

    def test_corruption_fails(self, capsys):
        code = cli.main(["gradcheck", "--seed", "3", "--corrupt"])
        assert code == cli.EXIT_RUNTIME
        verdict = json.loads(capsys.readouterr().out)
        assert verdict["passed"] is False


class TestConfigFile:
    def test_config_sets_defaults(self, fig_path, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"k": 0}))
        cli.main(["--config", str(cfg), "prune", "--data", str(fig_path)])
        report = json.loads(capsys.readouterr().out)
        assert report["k"] == 0

    def test_explicit_flag_wins(self, fig_path, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"k": 0}))
        cli.main(["--config", str(cfg), "prune", "--data", str(fig_path),
                  "--k", "1"])
        report = json.loads(capsys.readouterr().out)
        assert report["k"] == 1

    def test_unknown_key_rejected(self, fig_path, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"bogus": 1}))
        with pytest.raises(SystemExit) as info:
            cli.main(["--config", str(cfg), "prune", "--data", str(fig_path)])
        assert info.value.code == 2
