import csv
import json

import numpy as np
import pytest

from cooc import data_io
from cooc.cli import main
from cooc.domain import Image
from cooc.data_io import DatasetManifest, SyntheticSpec, gen_synthetic, write_dataset

from conftest import MNIST_DIR, mnist_available


@pytest.fixture
def spec_file(tmp_path, planted_spec):
    path = tmp_path / "planted.json"
    path.write_text(json.dumps(planted_spec.to_dict()))
    return path


@pytest.fixture
def labeled_maps(tmp_path):
    """Two planted classes with different hidden partitions."""
    maps, labels = [], []
    for d in range(2):
        spec = SyntheticSpec(64, 8, 0.95, 0.05, 40, seed=10 + d)
        maps += gen_synthetic(spec)
        labels += [d] * 40
    out = tmp_path / "labeled"
    write_dataset(out, maps, DatasetManifest("synthetic", len(maps), maps[0].domain, labels))
    return out


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestFit:
    def test_writes_model_and_trace(self, tmp_path, spec_file, capsys):
        out = tmp_path / "m.json"
        assert main(["fit", "--synthetic", str(spec_file), "--size", "8", "--out", str(out)]) == 0
        model = data_io.load_model(out)
        assert model.grouping.n_groups == 8
        trace = read_csv(tmp_path / "m.trace.csv")
        assert trace[0] == ["iteration", "bits", "step1_delta", "step2_delta", "step3_delta"]
        run = json.loads((tmp_path / "run.json").read_text())
        assert run["fit_config"]["size"] == 8
        assert "groups=8" in capsys.readouterr().out

    def test_byte_identical(self, tmp_path, spec_file):
        for name in ("a.json", "b.json"):
            main(["fit", "--synthetic", str(spec_file), "--size", "8", "--seed", "3",
                  "--out", str(tmp_path / name)])
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_flags_override_config(self, tmp_path, spec_file):
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({"size": 4, "bins": 3, "max_iter": 2}))
        out = tmp_path / "m.json"
        assert main(["fit", "--synthetic", str(spec_file), "--config", str(config),
                     "--size", "8", "--out", str(out)]) == 0
        meta = data_io.load_model(out).meta
        assert meta["size"] == 8 and meta["bins"] == 3 and meta["max_iter"] == 2

    @pytest.mark.parametrize("args", [["--size", "0"], ["--size", "8", "--z-mode", "bogus"], []])
    def test_usage_errors(self, tmp_path, spec_file, args, capsys):
        code = main(["fit", "--synthetic", str(spec_file), "--out", str(tmp_path / "m.json")] + args)
        assert code == 1
        assert capsys.readouterr().err

    def test_missing_input(self, tmp_path):
        code = main(["fit", "--synthetic", str(tmp_path / "nope.json"), "--size", "8",
                     "--out", str(tmp_path / "m.json")])
        assert code == 2

    def test_pgm_input(self, tmp_path, rng):
        images = tmp_path / "imgs"
        images.mkdir()
        for i in range(4):
            data_io.write_pgm(images / f"{i}.pgm", Image.from_array(rng.random((8, 8))))
        out = tmp_path / "m.json"
        assert main(["fit", "--pgm-dir", str(images), "--density", "0.2", "--size", "4",
                     "--out", str(out)]) == 0
        assert data_io.load_model(out).domain.kind == "wavelet"

    def test_pgm_needs_one_threshold(self, tmp_path):
        code = main(["fit", "--pgm-dir", str(tmp_path), "--size", "4", "--out", str(tmp_path / "m.json")])
        assert code == 1


class TestSweep:
    def test_minimum_at_planted_size(self, tmp_path, spec_file, capsys):
        out = tmp_path / "sweep.csv"
        assert main(["sweep", "--synthetic", str(spec_file), "--sizes", "2,4,8,16,32",
                     "--out", str(out)]) == 0
        rows = read_csv(out)[1:]
        best = min(rows, key=lambda r: float(r[3]))
        assert best[0] == "8"
        assert "best size (held-out) = 8" in capsys.readouterr().out

    def test_whole_domain_size(self, tmp_path, spec_file):
        out = tmp_path / "sweep.csv"
        assert main(["sweep", "--synthetic", str(spec_file), "--sizes", "64", "--out", str(out)]) == 0
        row = read_csv(out)[1]
        assert row[2] == row[6] and row[3] == row[7]

    def test_bad_sizes(self, tmp_path, spec_file):
        assert main(["sweep", "--synthetic", str(spec_file), "--sizes", "a,b",
                     "--out", str(tmp_path / "s.csv")]) == 1
        assert main(["sweep", "--synthetic", str(spec_file), "--sizes", "100",
                     "--out", str(tmp_path / "s.csv")]) == 1

    def test_missing_input(self, tmp_path):
        assert main(["sweep", "--maps", str(tmp_path / "none"), "--test", str(tmp_path / "none"),
                     "--sizes", "4", "--out", str(tmp_path / "s.csv")]) == 2


class TestDigits:
    @pytest.fixture
    def idx_files(self, tmp_path, rng):
        pixels = np.zeros((20, 8, 8), dtype=np.uint8)
        pixels[:, 2:6, 2:6] = rng.integers(128, 256, size=(20, 4, 4))
        images, labels = tmp_path / "images.idx", tmp_path / "labels.idx"
        data_io.write_idx_images(images, pixels)
        data_io.write_idx_labels(labels, np.arange(20) % 2)
        return images, labels

    def test_texturize_deterministic(self, tmp_path, idx_files):
        images, labels = idx_files
        for name in ("a", "b"):
            assert main(["texturize", "--images", str(images), "--labels", str(labels),
                         "--seed", "4", "--out-dir", str(tmp_path / name)]) == 0
        assert (tmp_path / "a/maps.bin").read_bytes() == (tmp_path / "b/maps.bin").read_bytes()
        maps, manifest = data_io.read_dataset(tmp_path / "a")
        assert manifest.count == 20 and manifest.labels[:4] == [0, 1, 0, 1]

    def test_texturize_selection(self, tmp_path, idx_files):
        images, labels = idx_files
        assert main(["texturize", "--images", str(images), "--labels", str(labels),
                     "--per-class", "3", "--out-dir", str(tmp_path / "sel")]) == 0
        _, manifest = data_io.read_dataset(tmp_path / "sel")
        assert sorted(manifest.labels) == [0, 0, 0, 1, 1, 1]

    def test_labels_as_images(self, tmp_path, idx_files):
        _, labels = idx_files
        assert main(["texturize", "--images", str(labels), "--out-dir", str(tmp_path / "x")]) == 2

    @pytest.mark.skipif(not mnist_available(), reason="MNIST files not found")
    def test_background_density_on_mnist(self, tmp_path):
        assert main(["texturize", "--images", str(MNIST_DIR / "t10k-images-idx3-ubyte"),
                     "--count", "10", "--out-dir", str(tmp_path / "m")]) == 0
        pixels = data_io.read_idx_image_array(MNIST_DIR / "t10k-images-idx3-ubyte")[:10]
        maps, _ = data_io.read_dataset(tmp_path / "m")
        Y = np.stack([m.members for m in maps])
        background = pixels.reshape(10, -1) == 0
        assert 0.03 <= Y[background].mean() <= 0.06

    def test_train_and_classify(self, tmp_path, labeled_maps, capsys):
        models = tmp_path / "models.json"
        assert main(["train-digits", "--maps", str(labeled_maps), "--size", "8",
                     "--out", str(models)]) == 0
        assert (tmp_path / "models.trace.csv").exists()
        preds = tmp_path / "pred.csv"
        assert main(["classify", "--maps", str(labeled_maps), "--models", str(models),
                     "--out", str(preds)]) == 0
        assert "error rate: 0.0000" in capsys.readouterr().out
        rows = read_csv(preds)
        assert rows[0] == ["id", "predicted", "true"] and len(rows) == 81

        feats = tmp_path / "feat.csv"
        assert main(["classify", "--maps", str(labeled_maps), "--models", str(models),
                     "--mode", "features", "--out", str(feats)]) == 0
        rows = read_csv(feats)
        assert len(rows[0]) == 1 + 2 * 8 and rows[1][0] == "0"

    def test_train_needs_labels(self, tmp_path, spec_file):
        assert main(["train-digits", "--synthetic", str(spec_file), "--size", "8",
                     "--out", str(tmp_path / "m.json")]) == 2


class TestEncodeCost:
    def test_matches_model(self, tmp_path, spec_file, capsys):
        model_path = tmp_path / "m.json"
        main(["fit", "--synthetic", str(spec_file), "--size", "8", "--out", str(model_path)])
        out = tmp_path / "cost.csv"
        assert main(["encode-cost", "--synthetic", str(spec_file), "--model", str(model_path),
                     "--split", "1", "--out", str(out)]) == 0
        rows = read_csv(out)
        assert rows[0] == ["map", "bits", "bpp"] and len(rows) == 201
        assert float(rows[1][2]) == pytest.approx(float(rows[1][1]) / 64)

    def test_corrupt_model(self, tmp_path, spec_file):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["encode-cost", "--synthetic", str(spec_file), "--model", str(bad),
                     "--out", str(tmp_path / "c.csv")]) == 2


def test_no_command():
    assert main([]) == 1
