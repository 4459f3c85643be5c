import json
from pathlib import Path

import numpy as np
import pytest

from src.cli import EXIT_IO, EXIT_NUMERICAL, EXIT_OK, EXIT_UNEXPECTED, EXIT_USAGE, build_parser, main
from src.errors import NumericalFailureError
from src.gsmap.io import read_map, sidecar_path, write_map
from src.occproj.io import read_occupancy, read_similarity_csv, read_text_embeddings
from src.occproj.projection import project
from src.stages import STAGES

SCENE = {
    "room_min": [0.0, 0.0, 0.0],
    "room_max": [2.0, 2.0, 2.0],
    "boxes": [
        {"min_corner": [0.5, 0.5, 0.0], "max_corner": [1.5, 1.5, 1.0], "class_id": 3, "name": "crate"},
        {"min_corner": [0.1, 1.6, 0.0], "max_corner": [0.4, 1.9, 0.5], "class_id": 7, "name": "bin"},
    ],
    "camera": {"n_frames": 4, "radius": 0.9, "height": 1.2, "width": 32, "image_height": 24, "fx": 24.0, "fy": 24.0},
    "feature_dim": 4,
    "walls": True,
}


@pytest.fixture
def scene_file(tmp_path):
    path = tmp_path / "scene.json"
    path.write_text(json.dumps(SCENE), encoding="utf-8")
    return path


@pytest.fixture
def dataset(tmp_path, scene_file):
    out = tmp_path / "ds"
    assert main(["synth", "--scene", str(scene_file), "--out", str(out), "--seed", "3"]) == EXIT_OK
    return out


class TestParser:
    def test_every_stage_registered(self):
        assert set(STAGES) == {"init-map", "optimize", "associate", "project", "build-bench", "synth", "eval", "query"}

    def test_global_flags_after_subcommand(self):
        args = build_parser().parse_args(["project", "--map", "m", "--tau-occ", "0.3", "--threads", "2"])
        assert args.tau_occ == 0.3
        assert args.threads == 2

    def test_unset_flags_absent(self):
        args = build_parser().parse_args(["project"])
        assert not hasattr(args, "tau_occ")
        assert not hasattr(args, "config")

    def test_init_mode_choices(self):
        args = build_parser().parse_args(["init-map", "--init-mode", "isotropic", "--optimize-means"])
        assert args.init_mode == "isotropic"
        assert args.optimize_means is True
        with pytest.raises(SystemExit) as exc:
            main(["init-map", "--init-mode", "spherical"])
        assert exc.value.code == EXIT_USAGE

    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit) as exc:
            main(["render"])
        assert exc.value.code == EXIT_USAGE

    def test_missing_required_argument(self):
        with pytest.raises(SystemExit) as exc:
            main(["query", "--occupancy", "x.occ"])
        assert exc.value.code == EXIT_USAGE


class TestExitCodes:
    def test_missing_input_file(self, tmp_path):
        code = main(["project", "--map", str(tmp_path / "none.map"), "--out", str(tmp_path / "p.occ"),
                     "--origin", "0", "0", "0", "--dims", "2", "2", "2"])
        assert code == EXIT_IO

    def test_missing_ground_truth(self, dataset, tmp_path):
        code = main(["project", "--map", str(dataset / "seed.map"), "--out", str(tmp_path / "p.occ"),
                     "--gt", str(tmp_path / "missing.occ")])
        assert code == EXIT_IO

    def test_bad_config_key(self, tmp_path, dataset):
        config = tmp_path / "bad.yaml"
        config.write_text("gama: 2.0\n", encoding="utf-8")
        code = main(["init-map", "--config", str(config), "--manifest", str(dataset / "manifest.json"),
                     "--out", str(tmp_path / "m.map")])
        assert code == EXIT_USAGE

    def test_malformed_yaml(self, tmp_path):
        config = tmp_path / "bad.yaml"
        config.write_text("tau_occ: [0.5\n", encoding="utf-8")
        assert main(["project", "--config", str(config)]) == EXIT_USAGE

    def test_out_of_domain_flag(self, dataset, tmp_path):
        code = main(["project", "--map", str(dataset / "seed.map"), "--out", str(tmp_path / "p.occ"),
                     "--gt", str(dataset / "gt.occ"), "--tau-occ", "1.5"])
        assert code == EXIT_USAGE

    def test_grid_required(self, dataset, tmp_path):
        code = main(["project", "--map", str(dataset / "seed.map"), "--out", str(tmp_path / "p.occ")])
        assert code == EXIT_USAGE

    def test_bad_optimizer_layer(self, dataset, tmp_path):
        layer = tmp_path / "opt.json"
        layer.write_text(json.dumps({"learning_rate": 0.1}), encoding="utf-8")
        code = main(["optimize", "--map", str(dataset / "seed.map"), "--manifest", str(dataset / "manifest.json"),
                     "--out", str(tmp_path / "o.map"), "--optimizer-config", str(layer)])
        assert code == EXIT_USAGE

    def test_numerical_failure(self, dataset, tmp_path, monkeypatch):
        def explode(*args, **kwargs):
            raise NumericalFailureError(3)

        monkeypatch.setattr("src.stages.optimize.optimize_anchored", explode)
        code = main(["optimize", "--map", str(dataset / "seed.map"), "--manifest", str(dataset / "manifest.json"),
                     "--out", str(tmp_path / "o.map")])
        assert code == EXIT_NUMERICAL

    def test_unexpected_error(self, dataset, tmp_path, monkeypatch):
        def explode(*args, **kwargs):
            raise RuntimeError("boom")

        monkeypatch.setattr("src.stages.optimize.optimize_anchored", explode)
        code = main(["optimize", "--map", str(dataset / "seed.map"), "--manifest", str(dataset / "manifest.json"),
                     "--out", str(tmp_path / "o.map")])
        assert code == EXIT_UNEXPECTED

    def test_unknown_query_category(self, dataset, tmp_path):
        pred = tmp_path / "p.occ"
        assert main(["project", "--map", str(dataset / "seed.map"), "--out", str(pred),
                     "--gt", str(dataset / "gt.occ")]) == EXIT_OK
        code = main(["query", "--occupancy", str(pred), "--texts", str(dataset / "texts.json"),
                     "--category", "sofa", "--out", str(tmp_path / "q.csv")])
        assert code == EXIT_USAGE


class TestSynth:
    def test_outputs(self, dataset):
        for name in ("manifest.json", "trajectory.txt", "gt.occ", "texts.json", "seed.map", "scene.json"):
            assert (dataset / name).exists()
        texts = read_text_embeddings(dataset / "texts.json")
        assert texts.categories == ["crate", "bin"]
        assert texts.class_ids == [3, 7]
        assert json.loads((dataset / "scene.json").read_text())["seed"] == 3

    def test_deterministic(self, scene_file, tmp_path):
        for name in ("a", "b"):
            assert main(["synth", "--scene", str(scene_file), "--out", str(tmp_path / name), "--seed", "9"]) == 0
        for rel in ("gt.occ", "seed.map", "texts.bin", "depth/000002.png", "embedding/000001.bin"):
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()

    def test_scene_seed_used_without_flag(self, tmp_path):
        path = tmp_path / "scene.json"
        path.write_text(json.dumps({**SCENE, "seed": 21}), encoding="utf-8")
        assert main(["synth", "--scene", str(path), "--out", str(tmp_path / "s")]) == 0
        assert json.loads((tmp_path / "s" / "scene.json").read_text())["seed"] == 21


class TestPipeline:
    def test_end_to_end(self, dataset, tmp_path, capsys):
        manifest = str(dataset / "manifest.json")
        m0, m1, m2 = (str(tmp_path / n) for n in ("m0.map", "m1.map", "m2.map"))
        assert main(["init-map", "--manifest", manifest, "--out", m0, "--pixel-stride", "8"]) == 0
        assert main(["optimize", "--map", m0, "--manifest", manifest, "--out", m1, "--max-iters", "2"]) == 0
        trace = (tmp_path / "m1.map.loss.csv").read_text().splitlines()
        assert trace[0] == "iter,loss"
        losses = [float(line.split(",")[1]) for line in trace[1:]]
        assert all(b <= a for a, b in zip(losses, losses[1:]))
        assert main(["associate", "--map", m1, "--manifest", manifest, "--out", m2]) == 0
        assert read_map(m2).has_feature.any()

        pred = tmp_path / "pred.occ"
        assert main(["project", "--map", m2, "--out", str(pred), "--gt", str(dataset / "gt.occ"),
                     "--texts", str(dataset / "texts.json")]) == 0
        field = read_occupancy(pred)
        assert field.spec == read_occupancy(dataset / "gt.occ").spec
        assert field.features is not None

        report_path = tmp_path / "report.json"
        traj = str(dataset / "trajectory.txt")
        assert main(["eval", "--map", m2, "--traj", traj, "--gt", str(dataset / "gt.occ"), "--gt-traj", traj,
                     "--texts", str(dataset / "texts.json"), "--out", str(report_path)]) == 0
        report = json.loads(report_path.read_text())
        assert 0.0 <= report["iou"] <= 1.0
        assert set(report["per_class_iou"]) <= {"3", "7"}
        assert report["transform"]["scale"] == 1.0

        csv_path = tmp_path / "crate.csv"
        capsys.readouterr()
        assert main(["query", "--occupancy", str(pred), "--texts", str(dataset / "texts.json"),
                     "--category", "crate", "--out", str(csv_path)]) == 0
        volume = read_similarity_csv(csv_path, field.spec)
        scored = volume[~np.isnan(volume)]
        assert scored.size == field.feature_index.size
        assert np.all(np.abs(scored) <= 1.0 + 1e-6)

    def test_init_map_records_provenance(self, dataset, tmp_path):
        out = tmp_path / "iso.map"
        assert main(["init-map", "--manifest", str(dataset / "manifest.json"), "--out", str(out),
                     "--pixel-stride", "8", "--init-mode", "isotropic"]) == 0
        gmap = read_map(out)
        assert gmap.metadata["trajectory"] == str((dataset / "trajectory.txt").resolve())
        assert gmap.metadata["init_mode"] == "isotropic"
        np.testing.assert_array_equal(gmap.rotations, np.tile([1.0, 0.0, 0.0, 0.0], (len(gmap), 1)))
        np.testing.assert_array_equal(gmap.scales[:, 2], gmap.scales[:, 0])

    def test_eval_uses_recorded_trajectory(self, dataset, tmp_path):
        m0 = str(tmp_path / "m0.map")
        assert main(["init-map", "--manifest", str(dataset / "manifest.json"), "--out", m0, "--pixel-stride", "8"]) == 0
        report_path = tmp_path / "report.json"
        traj = str(dataset / "trajectory.txt")
        assert main(["eval", "--map", m0, "--gt", str(dataset / "gt.occ"), "--gt-traj", traj,
                     "--out", str(report_path)]) == 0
        assert json.loads(report_path.read_text())["transform"]["pairs"] == 4

    def test_eval_without_any_trajectory(self, dataset, tmp_path):
        traj = str(dataset / "trajectory.txt")
        bare = tmp_path / "bare.map"
        write_map(bare, read_map(dataset / "seed.map"))
        sidecar = json.loads(sidecar_path(bare).read_text())
        sidecar.pop("trajectory")
        sidecar_path(bare).write_text(json.dumps(sidecar))
        code = main(["eval", "--map", str(bare), "--gt", str(dataset / "gt.occ"), "--gt-traj", traj])
        assert code == EXIT_USAGE

    def test_optimize_means_flag(self, dataset, tmp_path):
        manifest = str(dataset / "manifest.json")
        m0, m1, m2 = (str(tmp_path / n) for n in ("m0.map", "m1.map", "m2.map"))
        assert main(["init-map", "--manifest", manifest, "--out", m0, "--pixel-stride", "8"]) == 0
        assert main(["optimize", "--map", m0, "--manifest", manifest, "--out", m1, "--max-iters", "2"]) == 0
        assert main(["optimize", "--map", m0, "--manifest", manifest, "--out", m2, "--max-iters", "2",
                     "--optimize-means", "--lr-mean", "1e-3"]) == 0
        start, anchored, free = read_map(m0), read_map(m1), read_map(m2)
        assert anchored.means.tobytes() == start.means.tobytes()
        assert not np.array_equal(free.means, start.means)
        assert free.metadata["optimizer"]["optimize_means"] is True

    def test_project_matches_in_process(self, dataset, tmp_path):
        out = tmp_path / "p.occ"
        assert main(["project", "--map", str(dataset / "seed.map"), "--out", str(out),
                     "--gt", str(dataset / "gt.occ"), "--threads", "3"]) == 0
        expected = project(read_map(dataset / "seed.map"), read_occupancy(dataset / "gt.occ").spec)
        field = read_occupancy(out)
        np.testing.assert_array_equal(field.occupancy, expected.occupancy.astype(np.float32))

    def test_project_reruns_identical(self, dataset, tmp_path):
        for name, threads in (("a.occ", "1"), ("b.occ", "4")):
            assert main(["project", "--map", str(dataset / "seed.map"), "--out", str(tmp_path / name),
                         "--origin", "0", "0", "0", "--dims", "20", "20", "20", "--threads", threads]) == 0
        assert (tmp_path / "a.occ").read_bytes() == (tmp_path / "b.occ").read_bytes()

    def test_build_bench(self, dataset, tmp_path, capsys):
        out = tmp_path / "bench.occ"
        capsys.readouterr()
        assert main(["build-bench", "--manifest", str(dataset / "manifest.json"), "--out", str(out),
                     "--pixel-stride", "1", "--frame-stride", "1"]) == 0
        field = read_occupancy(out)
        assert set(np.unique(field.label).tolist()) <= {0, 3, 7, 255}
        occupied, known, total = (int(v) for v in capsys.readouterr().out.split())
        assert occupied == int(field.occupancy.sum())
        assert known <= total == field.spec.count

    def test_table_report_to_stdout(self, dataset, capsys):
        traj = str(dataset / "trajectory.txt")
        capsys.readouterr()
        assert main(["eval", "--map", str(dataset / "seed.map"), "--traj", traj, "--gt", str(dataset / "gt.occ"),
                     "--gt-traj", traj, "--format", "table"]) == 0
        out = capsys.readouterr().out
        assert out.startswith("IoU ")
        assert "mIoU  n/a" in out


class TestThreeBoxScene:
    """Shipped acceptance scene on a shorter orbit."""

    SCENE_FILE = Path(__file__).resolve().parents[1] / "config" / "scenes" / "three_boxes.json"

    @pytest.fixture(scope="class")
    def run(self, tmp_path_factory):
        tmp = tmp_path_factory.mktemp("three_boxes")
        scene = json.loads(self.SCENE_FILE.read_text(encoding="utf-8"))
        scene["camera"]["n_frames"] = 16
        scene_path = tmp / "scene.json"
        scene_path.write_text(json.dumps(scene), encoding="utf-8")
        ds = tmp / "ds"
        assert main(["synth", "--scene", str(scene_path), "--out", str(ds)]) == 0
        manifest = str(ds / "manifest.json")
        m0, m1, m2 = (str(tmp / n) for n in ("m0.map", "m1.map", "m2.map"))
        assert main(["init-map", "--manifest", manifest, "--out", m0, "--pixel-stride", "1"]) == 0
        assert main(["optimize", "--map", m0, "--manifest", manifest, "--out", m1, "--max-iters", "1"]) == 0
        assert main(["associate", "--map", m1, "--manifest", manifest, "--out", m2, "--pixel-stride", "1"]) == 0
        report_path = tmp / "report.json"
        assert main(["eval", "--map", m2, "--gt", str(ds / "gt.occ"), "--gt-traj", str(ds / "trajectory.txt"),
                     "--texts", str(ds / "texts.json"), "--mode", "rgbd", "--out", str(report_path)]) == 0
        return ds, read_map(m2), json.loads(report_path.read_text())

    def test_features_cover_primitives(self, run):
        _, gmap, _ = run
        assert gmap.has_feature.mean() >= 0.9

    def test_occupancy_and_class_targets(self, run):
        _, _, report = run
        assert report["transform"]["rms_residual"] < 1e-9
        assert report["iou"] >= 0.90
        assert report["miou"] >= 0.85
        assert set(report["per_class_iou"]) == {"1", "2", "3"}
