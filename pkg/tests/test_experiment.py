import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from equitable_fl.cli import main
from equitable_fl.data import write_idx
from equitable_fl.errors import ContractViolation, DivergenceError
from equitable_fl.experiment import (CSV_HEADER, ExperimentConfig, format_partition,
                                     load_config, parse_config, parse_partition,
                                     read_records, run_experiment, sweep, write_records)
from equitable_fl.metrics import RoundRecord

ROOT = Path(__file__).resolve().parents[1]

SMALL = """
dim = 6
hidden = 8
partition = 2:0,1:8; 3:2-4:8
num_classes = 5
test_per_label = 4
rounds = 4
cohort_size = 3
local_epochs = 1
batch_size = 8
powd_candidates = 4
"""


def rec(round_, cd, nmi=0.5):
    return RoundRecord(round=round_, algo="equitable", seed=7, cohort=[0, 1, 2],
                       client_losses=[0.25, 0.5, 1.0], client_accs=[1.0, 0.5, 0.0],
                       global_acc=2 / 3, cd=cd, sigma_acc=0.1, nmi=nmi,
                       weights=[0.25, 0.25, 0.5], cluster_labels=[0, 0, 1])


class TestConfig:
    def test_sample_config_parses(self):
        cfg = load_config(ROOT / "configs" / "mnist_like.cfg")
        assert cfg.hp.algorithm == "equitable" and cfg.partition.num_clients == 10
        cfg.validate()

    def test_partition_roundtrip(self):
        spec = parse_partition("4:0-3:800; 6:4-9:800")
        assert [c.label_set for c in spec.clusters] == [(0, 1, 2, 3), (4, 5, 6, 7, 8, 9)]
        assert parse_partition(format_partition(spec)) == spec

    def test_comments_and_types(self):
        cfg = parse_config("eta = 0.5  # step\n# nothing\nnormalize_similarity = yes\nhidden = 4,5\n")
        assert cfg.hp.eta == 0.5 and cfg.hp.normalize_similarity and cfg.hidden == (4, 5)

    def test_unknown_key(self):
        with pytest.raises(ContractViolation, match="bogus"):
            parse_config("bogus = 1")

    @pytest.mark.parametrize("text,field", [
        ("cohort_size = 11", "cohort_size"),
        ("eta = -1", "eta"),
        ("mu = -0.1", "mu"),
        ("local_epochs = 0", "local_epochs"),
        ("num_clusters = 5", "num_clusters"),
        ("algorithm = fedprox_powd\npowd_candidates = 2", "powd_candidates"),
        ("algorithm = fedprox_powd\npowd_candidates = 11\ncohort_size = 4", "powd_candidates"),
        ("eval_every = 0", "eval_every"),
        ("dataset = idx", "images_path"),
        ("partition = 4:0-3:5; 6:4-10:5", "partition"),
    ])
    def test_validation_names_field(self, text, field):
        with pytest.raises(ContractViolation, match=field):
            parse_config(text).validate()


class TestRecords:
    def test_header_only(self, tmp_path):
        write_records([], tmp_path / "r.csv")
        assert (tmp_path / "r.csv").read_text() == ",".join(CSV_HEADER) + "\n"

    def test_formatting(self, tmp_path):
        write_records([rec(3, 4 / 3)], tmp_path / "r.csv")
        row = (tmp_path / "r.csv").read_text().splitlines()[1].split(",")
        assert row[0] == "3" and row[4] == "1.33333333" and row[-1] == "7"

    def test_roundtrip(self, tmp_path):
        records = [rec(1, 4 / 3), rec(2, 0.1 + 0.2, nmi=float("nan")), rec(3, 1e-7)]
        write_records(records, tmp_path / "r.csv")
        back = read_records(tmp_path / "r.csv")
        for r, b in zip(records, back):
            assert b["round"] == r.round and b["algo"] == r.algo and b["seed"] == r.seed
            for key in ("global_acc", "mean_client_loss", "cd", "sigma_acc", "nmi"):
                v = getattr(r, key)
                if math.isnan(v):
                    assert math.isnan(b[key])
                    continue
                # lossless at 9 significant digits: half a unit in the 9th digit at most
                assert b[key] == float(f"{v:.9g}")
                assert abs(b[key] - v) <= 5e-9 * abs(v)
        detail = json.loads((tmp_path / "r.json").read_text())
        assert detail[1]["nmi"] is None and detail[0]["weights"] == [0.25, 0.25, 0.5]
        for r, d in zip(records, detail):
            assert abs(d["cd"] - r.cd) <= 1e-9 and abs(d["global_acc"] - r.global_acc) <= 1e-9

    def test_io_error_has_path(self, tmp_path):
        with pytest.raises(OSError, match="missing"):
            write_records([], tmp_path / "missing" / "r.csv")


class TestRunExperiment:
    def test_end_to_end(self, tmp_path):
        cfg = parse_config(SMALL).with_overrides(output_dir=str(tmp_path))
        s = run_experiment(cfg)
        assert len(s.records) == 4 and not math.isnan(s.mean_nmi)
        assert Path(s.csv_path).name == "equitable_seed0.csv"
        assert len(read_records(s.csv_path)) == 4

    def test_zero_rounds(self):
        s = run_experiment(parse_config(SMALL).with_overrides(rounds=0))
        assert s.records == [] and 0 <= s.final_accuracy <= 1

    @pytest.mark.parametrize("K,every", [(4, 3), (5, 2), (6, 6), (7, 1)])
    def test_eval_every(self, K, every):
        s = run_experiment(parse_config(SMALL).with_overrides(rounds=K, eval_every=every))
        assert len(s.records) == math.ceil(K / every)
        assert s.records[-1].round == K

    def test_byte_identical_csv(self, tmp_path):
        cfg = parse_config(SMALL)
        a = run_experiment(cfg.with_overrides(output_dir=str(tmp_path / "a")))
        b = run_experiment(cfg.with_overrides(output_dir=str(tmp_path / "b"), workers=3))
        assert Path(a.csv_path).read_bytes() == Path(b.csv_path).read_bytes()

    def test_divergence_flushes_partial(self, tmp_path):
        cfg = parse_config(SMALL).with_overrides(eta=1e200, output_dir=str(tmp_path))
        with np.errstate(all="ignore"), pytest.raises(DivergenceError):
            run_experiment(cfg)
        assert (tmp_path / "equitable_seed0.csv").read_text().startswith("round,")

    def test_idx_dataset(self, tmp_path):
        r = np.random.default_rng(0)
        labels = np.repeat(np.arange(5), 30)
        imgs = (r.random((150, 3, 3)) * 60 + labels[:, None, None] * 40).astype(np.uint8)
        write_idx(tmp_path / "tr-i", tmp_path / "tr-l", imgs, labels)
        write_idx(tmp_path / "te-i", tmp_path / "te-l", imgs, labels)
        text = SMALL.replace("dim = 6", "dataset = idx") + "".join(
            f"{k} = {tmp_path / v}\n" for k, v in [("images_path", "tr-i"), ("labels_path", "tr-l"),
                                                    ("test_images_path", "te-i"), ("test_labels_path", "te-l")])
        s = run_experiment(parse_config(text))
        assert len(s.records) == 4


class TestSweep:
    def test_shared_data_and_summary(self, tmp_path):
        cfg = parse_config(SMALL).with_overrides(output_dir=str(tmp_path), rounds=2)
        res = sweep(cfg, [0, 1])
        assert set(res) == {"fedavg", "fedprox", "equitable", "fedprox_powd"}
        with open(tmp_path / "sweep_summary.csv") as f:
            rows = list(csv.DictReader(f))
        assert [r["algo"] for r in rows] == list(res)
        assert {"cd_mean", "cd_std", "nmi_mean", "final_acc_std"} <= set(rows[0])
        vals = [s.mean_cd_final for s in res["fedprox"]]
        assert float(rows[1]["cd_mean"]) == pytest.approx(np.mean(vals), rel=1e-8)
        assert float(rows[1]["cd_std"]) == pytest.approx(np.std(vals, ddof=1), rel=1e-8, abs=1e-12)
        assert rows[0]["nmi_mean"] == "nan"


class TestCLI:
    def write_cfg(self, tmp_path):
        p = tmp_path / "small.cfg"
        p.write_text(SMALL)
        return str(p)

    def test_run(self, tmp_path, capsys):
        cfg = self.write_cfg(tmp_path)
        assert main(["run", "--config", cfg, "--seed", "3", "--algo", "fedprox",
                     "--out", str(tmp_path / "o")]) == 0
        assert (tmp_path / "o" / "fedprox_seed3.csv").exists()
        assert "fedprox" in capsys.readouterr().out

    def test_run_all(self, tmp_path):
        cfg = self.write_cfg(tmp_path)
        assert main(["run", "--config", cfg, "--algo", "all", "--out", str(tmp_path)]) == 0
        assert len(list(tmp_path.glob("*_seed0.csv"))) == 4

    def test_sweep(self, tmp_path):
        cfg = self.write_cfg(tmp_path)
        assert main(["sweep", "--config", cfg, "--seeds", "0,1", "--algo", "fedavg,equitable",
                     "--out", str(tmp_path)]) == 0
        assert (tmp_path / "sweep_summary.csv").exists()
        assert (tmp_path / "equitable_seed1.csv").exists()

    def test_theory(self, capsys):
        assert main(["theory", "--eta", "1", "--mu", "0", "--epochs", "1", "--rounds", "10",
                     "--lsmooth", "1"]) == 0
        out = capsys.readouterr().out
        assert "[FAIL] eta*L*E <= 1/2" in out and "zeta" in out

    def test_theory_default_eta(self, capsys):
        main(["theory", "--epochs", "5", "--rounds", "100", "--lsmooth", "1"])
        assert "eta       = 0.00288675135" in capsys.readouterr().out

    def test_bad_config_exit_code(self, tmp_path, capsys):
        p = tmp_path / "bad.cfg"
        p.write_text("cohort_size = 99\n")
        assert main(["run", "--config", str(p)]) == 2
        assert "cohort_size" in capsys.readouterr().err

    def test_unknown_algorithm_exit_code(self, capsys):
        assert main(["run", "--config", str(Path(__file__).parents[1] / "configs" / "mnist_like.cfg"),
                     "--algo", "bogus"]) == 2
        assert "bogus" in capsys.readouterr().err
