"""Orchestration layer: config format, containers, optimizer, synthetic
data, training loop behavior, export, evaluation report, audit suite, CLI."""

import dataclasses
import json

import numpy as np
import pytest

from gcnface import gcn
from gcnface import pipeline as pl
from gcnface.pipeline import cli
from gcnface.diffcore import Tensor, no_grad, ops
from gcnface.errors import (
    ConfigError,
    ContractViolation,
    FormatError,
    TrainingDiverged,
)
from gcnface.meshgraph import read_obj
from gcnface.morphable import COEFF_DIM, instantiate, split_coefficients
from gcnface.render import load_png, render_image


def tiny_config(**overrides):
    base = dict(
        n_vertices=42, hierarchy_levels=3, hierarchy_fraction=0.35,
        channels=(6, 5, 4), embed_dim=16, refiner_width=6, refiner_blocks=1,
        critic_channels=(2, 2, 2, 2, 2, 2), image_size=64, focal=50.0,
        dataset_size=3, batch_size=2, train_steps=3, warmup_steps=1,
        ramp_steps=1, critic_steps=2, learning_rate=1e-3,
    )
    base.update(overrides)
    return dataclasses.replace(pl.RunConfig(), **base)


TINY = tiny_config()
DS = pl.synth_dataset(TINY, 3)


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("trained")
    cfg = tiny_config(out_dir=str(out))
    summary = pl.train(cfg, DS)
    return cfg, summary


class TestConfig:
    def test_defaults_validate(self):
        pl.RunConfig().validate()

    def test_round_trip(self):
        cfg = tiny_config(focal=37.25, learning_rate=3.0e-4,
                          out_dir="runs/x y", model_path="models/a.bin")
        again = pl.parse_config(pl.config_to_text(cfg))
        assert again == cfg

    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "cfg.txt"
        cfg = tiny_config(seed=7)
        pl.save_config(path, cfg)
        assert pl.load_config(path) == cfg

    def test_comments_and_blanks_ignored(self):
        cfg = pl.parse_config("# hello\n\nseed = 9\n\n# bye\n")
        assert cfg.seed == 9

    def test_parse_errors(self):
        with pytest.raises(ConfigError):
            pl.parse_config("not_a_key = 3\n")
        with pytest.raises(ConfigError):
            pl.parse_config("seed = abc\n")
        with pytest.raises(ConfigError):
            pl.parse_config("seed = 1\nseed = 2\n")
        with pytest.raises(ConfigError):
            pl.parse_config("just some words\n")

    def test_validation_failures(self):
        with pytest.raises(ConfigError):
            tiny_config(image_size=60).validate()
        with pytest.raises(ConfigError):
            tiny_config(channels=(6, 5)).validate()
        with pytest.raises(ConfigError):
            tiny_config(sigma2=-0.1).validate()
        with pytest.raises(ConfigError):
            tiny_config(batch_size=0).validate()

    def test_derived_objects(self):
        cfg = tiny_config()
        cam = cfg.camera()
        assert (cam.width, cam.height, cam.focal) == (64, 64, 50.0)
        w = cfg.weights()
        assert (w.sigma2, w.sigma3) == (0.2, 0.001)
        assert (w.warmup_steps, w.ramp_steps) == (1, 1)


class TestTensorContainer:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "t.bin"
        rng = np.random.default_rng(0)
        tensors = {
            "a": rng.standard_normal((2, 3, 4)),
            "b.c": rng.standard_normal(5),
            "scalarish": np.array(3.25),
        }
        pl.save_tensors(path, tensors)
        loaded = pl.load_tensors(path)
        assert set(loaded) == set(tensors)
        for k in tensors:
            np.testing.assert_array_equal(loaded[k], tensors[k])

    def test_insertion_order_does_not_matter(self, tmp_path):
        a, b = np.arange(3.0), np.arange(4.0)
        p1, p2 = tmp_path / "1.bin", tmp_path / "2.bin"
        pl.save_tensors(p1, {"x": a, "y": b})
        pl.save_tensors(p2, {"y": b, "x": a})
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_files(self, tmp_path):
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"NOTMAGIC" + b"\x00" * 16)
        with pytest.raises(FormatError):
            pl.load_tensors(bad)
        good = tmp_path / "good.bin"
        pl.save_tensors(good, {"x": np.arange(4.0)})
        blob = good.read_bytes()
        (tmp_path / "trunc.bin").write_bytes(blob[:-8])
        with pytest.raises(FormatError):
            pl.load_tensors(tmp_path / "trunc.bin")
        (tmp_path / "trail.bin").write_bytes(blob + b"\x00")
        with pytest.raises(FormatError):
            pl.load_tensors(tmp_path / "trail.bin")

    def test_checkpoint_round_trip(self, tmp_path):
        path = tmp_path / "ck.bin"
        rng = np.random.default_rng(1)
        gen = {"decoder.w": rng.standard_normal((2, 2))}
        crit = {"stage0.kernel": rng.standard_normal(4)}
        og = {"t": np.array([3.0]), "m.decoder.w": np.zeros((2, 2)),
              "v.decoder.w": np.ones((2, 2))}
        oc = {"t": np.array([6.0]), "m.stage0.kernel": np.zeros(4),
              "v.stage0.kernel": np.zeros(4)}
        pl.save_checkpoint(path, 17, gen, crit, og, oc)
        ck = pl.load_checkpoint(path)
        assert ck.step == 17
        np.testing.assert_array_equal(ck.generator["decoder.w"], gen["decoder.w"])
        np.testing.assert_array_equal(ck.critic["stage0.kernel"], crit["stage0.kernel"])
        np.testing.assert_array_equal(ck.opt_generator["v.decoder.w"], og["v.decoder.w"])
        assert ck.opt_critic["t"][0] == 6.0


class TestAdam:
    def test_first_step_matches_hand_formula(self):
        p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
        opt = pl.Adam({"p": p}, lr=0.01, beta1=0.0, beta2=0.9)
        g = np.array([0.5, -1.5])
        opt.step({"p": g})
        # beta1=0: m = g, m_hat = g; v_hat = g^2, so the update is
        # lr * g / (|g| + eps) = lr * sign(g) to first order
        expected = np.array([1.0, -2.0]) - 0.01 * g / (np.abs(g) + 1e-8)
        np.testing.assert_allclose(p.data, expected, atol=1e-12)

    def test_quadratic_descent(self):
        p = Tensor(np.array([4.0]), requires_grad=True)
        opt = pl.Adam({"p": p}, lr=0.1)
        for _ in range(200):
            opt.step({"p": 2.0 * (p.data - 3.0)})
        assert abs(p.data[0] - 3.0) < 1e-3

    def test_missing_gradient_leaves_parameter(self):
        p = Tensor(np.array([2.0]), requires_grad=True)
        q = Tensor(np.array([5.0]), requires_grad=True)
        opt = pl.Adam({"p": p, "q": q}, lr=0.1)
        opt.step({"p": np.array([1.0])})
        assert q.data[0] == 5.0
        assert p.data[0] != 2.0

    def test_unknown_gradient_rejected(self):
        opt = pl.Adam({"p": Tensor(np.zeros(1), requires_grad=True)})
        with pytest.raises(ContractViolation):
            opt.step({"nope": np.zeros(1)})

    def test_state_round_trip_continues_identically(self):
        def fresh():
            p = Tensor(np.array([1.0, 2.0]), requires_grad=True)
            return p, pl.Adam({"p": p}, lr=0.05, beta2=0.9)

        grads = [np.array([0.3, -0.2]) * (i + 1) for i in range(5)]
        p_a, opt_a = fresh()
        for g in grads:
            opt_a.step({"p": g})

        p_b, opt_b = fresh()
        for g in grads[:3]:
            opt_b.step({"p": g})
        state = {k: v.copy() for k, v in opt_b.state_arrays().items()}
        saved = p_b.data.copy()

        p_c, opt_c = fresh()
        p_c.data = saved
        opt_c.load_state(state)
        for g in grads[3:]:
            opt_c.step({"p": g})
        np.testing.assert_array_equal(p_c.data, p_a.data)

    def test_load_state_validation(self):
        opt = pl.Adam({"p": Tensor(np.zeros(2), requires_grad=True)})
        with pytest.raises(ContractViolation):
            opt.load_state({"t": np.array([1.0])})


class TestDataset:
    def test_same_seed_identical(self):
        again = pl.synth_dataset(TINY, 3)
        for s1, s2 in zip(DS.samples, again.samples):
            np.testing.assert_array_equal(s1.image, s2.image)
            np.testing.assert_array_equal(s1.coeffs, s2.coeffs)
            np.testing.assert_array_equal(s1.albedo, s2.albedo)

    def test_prefix_stability(self):
        # sample i depends on (seed, i) only, not on the total count
        longer = pl.synth_dataset(TINY, 5)
        np.testing.assert_array_equal(longer[1].image, DS[1].image)

    def test_seed_changes_data(self):
        other = pl.synth_dataset(tiny_config(seed=1), 3)
        assert np.abs(other[0].image - DS[0].image).max() > 1e-6

    def test_coefficient_vector_length(self):
        for s in DS.samples:
            assert s.coeffs.shape == (COEFF_DIM,)
            assert COEFF_DIM == 257

    def test_detail_is_outside_the_coarse_model(self):
        # rendering from the stored coefficients alone must not reproduce
        # the ground-truth image; the hidden detail accounts for the gap
        model = pl.resolve_model(TINY)
        sample = DS[0]
        parts = split_coefficients(sample.coeffs)
        with no_grad():
            shape, coarse = instantiate(model, parts)
            result = render_image(
                shape, coarse, ops.constant(parts.pose),
                ops.constant(parts.lighting), model.topology, TINY.camera(),
            )
        coarse_img = np.clip(result.image.data, 0.0, 1.0)
        assert np.abs(coarse_img - sample.image).max() > 0.01
        # and the stored albedo differs from the linear-model albedo
        assert np.abs(sample.albedo - coarse.data).max() > 0.01

    def test_masks_full_and_images_bounded(self):
        for s in DS.samples:
            assert s.face_mask.shape == s.image.shape[:2]
            np.testing.assert_array_equal(s.face_mask, np.ones_like(s.face_mask))
            assert s.image.min() >= 0.0 and s.image.max() <= 1.0

    def test_count_validation(self):
        with pytest.raises(ContractViolation):
            pl.synth_dataset(TINY, 0)

    def test_save_load_round_trip(self, tmp_path):
        path = tmp_path / "ds.bin"
        pl.save_dataset(path, DS)
        loaded = pl.load_dataset(path)
        assert len(loaded) == len(DS)
        for s1, s2 in zip(DS.samples, loaded.samples):
            np.testing.assert_array_equal(s1.image, s2.image)
            np.testing.assert_array_equal(s1.face_mask, s2.face_mask)
            np.testing.assert_array_equal(s1.coeffs, s2.coeffs)
            np.testing.assert_array_equal(s1.albedo, s2.albedo)

    def test_load_rejects_malformed(self, tmp_path):
        path = tmp_path / "bad.bin"
        pl.save_tensors(path, {"images": np.zeros((1, 8, 8, 3))})
        with pytest.raises(FormatError):
            pl.load_dataset(path)


class TestSystem:
    def test_build_and_refine(self):
        system = pl.build_system(TINY)
        fwd = pl.refine_sample(system, DS[0])
        n = system.topology.n_vertices
        assert fwd.fine_albedo.shape == (n, 3)
        assert fwd.fine_albedo.data.min() >= 0.0
        assert fwd.fine_albedo.data.max() <= 1.0
        assert fwd.coarse_albedo.shape == (n, 3)
        assert fwd.projected.shape == (n, 3)
        assert fwd.valid.dtype == bool and fwd.valid.any()

    def test_parameter_groups_disjoint(self):
        system = pl.build_system(TINY)
        gen = system.generator_parameters()
        crit = system.critic_parameters()
        gen_ids = {id(t) for t in gen.values()}
        crit_ids = {id(t) for t in crit.values()}
        assert not gen_ids & crit_ids

    def test_checkpoint_model_mismatch(self, tmp_path):
        small = pl.build_system(TINY)
        bigger = pl.build_system(tiny_config(n_vertices=162))
        path = tmp_path / "ck.bin"
        pl.save_checkpoint(
            path, 0,
            {k: t.data for k, t in bigger.generator_parameters().items()},
            {k: t.data for k, t in bigger.critic_parameters().items()},
            {}, {},
        )
        ck = pl.load_checkpoint(path)
        with pytest.raises(ConfigError):
            small.load_parameters(ck.generator, ck.critic)
        with pytest.raises(ConfigError):
            small.load_parameters({}, ck.critic)


class TestTraining:
    def test_log_schedule_and_terms(self, trained):
        cfg, summary = trained
        records = [json.loads(line) for line in open(summary["log"])]
        assert len(records) == cfg.train_steps
        first = records[0]
        assert (first["sigma1"], first["sigma2"], first["sigma3"],
                first["sigma4"]) == (0.0, 0.2, 0.001, 1.0)
        # warm-up: render-path terms inactive, vertex terms live, pixel
        # still observable for monitoring
        assert first["identity"] is None
        assert first["adversarial"] is None
        assert first["vertex_coarse"] is not None
        assert first["pixel"] is not None
        last = records[-1]
        assert (last["sigma1"], last["sigma4"]) == (1.0, 0.0)
        assert last["identity"] is not None
        assert len(first["critic"]) == cfg.critic_steps

    def test_final_checkpoint_written(self, trained):
        cfg, summary = trained
        ck = pl.load_checkpoint(summary["checkpoint"])
        assert ck.step == cfg.train_steps
        system = pl.build_system(cfg)
        system.load_parameters(ck.generator, ck.critic)  # shapes agree

    def test_determinism_bit_identical(self, tmp_path):
        outs = []
        for name in ("a", "b"):
            cfg = tiny_config(out_dir=str(tmp_path / name))
            pl.train(cfg, DS)
            outs.append((
                (tmp_path / name / "checkpoint_final.bin").read_bytes(),
                (tmp_path / name / "train_log.jsonl").read_text(),
            ))
        assert outs[0][0] == outs[1][0]
        assert outs[0][1] == outs[1][1]

    def test_resume_replays_the_uninterrupted_run(self, tmp_path):
        full_cfg = tiny_config(out_dir=str(tmp_path / "full"), train_steps=4)
        full = pl.train(full_cfg, DS)

        part_cfg = tiny_config(out_dir=str(tmp_path / "part"), train_steps=2)
        part = pl.train(part_cfg, DS)
        resumed_cfg = tiny_config(out_dir=str(tmp_path / "part"), train_steps=4)
        pl.train(resumed_cfg, DS, resume=part["checkpoint"])

        full_bytes = (tmp_path / "full" / "checkpoint_final.bin").read_bytes()
        part_bytes = (tmp_path / "part" / "checkpoint_final.bin").read_bytes()
        assert full_bytes == part_bytes
        full_log = (tmp_path / "full" / "train_log.jsonl").read_text()
        part_log = (tmp_path / "part" / "train_log.jsonl").read_text()
        assert full_log == part_log

    def test_update_isolation(self, tmp_path):
        cfg = tiny_config(out_dir=str(tmp_path))
        trainer = pl.Trainer(cfg, DS)
        crit_before = {k: t.data.copy()
                       for k, t in trainer.critic_params.items()}
        gen_before = {k: t.data.copy() for k, t in trainer.gen_params.items()}
        frozen_projection = trainer.system.embedder.projection.data.copy()

        indices = trainer._indices(50, 0)
        fakes = trainer._fake_cache(indices)
        trainer._generator_update(0, indices, fakes)
        for k, t in trainer.critic_params.items():
            np.testing.assert_array_equal(t.data, crit_before[k])
        assert any(
            np.abs(t.data - gen_before[k]).max() > 0
            for k, t in trainer.gen_params.items()
        )

        gen_mid = {k: t.data.copy() for k, t in trainer.gen_params.items()}
        trainer._critic_updates(0, fakes)
        for k, t in trainer.gen_params.items():
            np.testing.assert_array_equal(t.data, gen_mid[k])
        assert any(
            np.abs(t.data - crit_before[k]).max() > 0
            for k, t in trainer.critic_params.items()
        )
        np.testing.assert_array_equal(
            trainer.system.embedder.projection.data, frozen_projection)

    def test_critic_skipped_when_weight_zero(self, tmp_path):
        cfg = tiny_config(out_dir=str(tmp_path), sigma3=0.0, train_steps=1)
        trainer = pl.Trainer(cfg, DS)
        before = {k: t.data.copy() for k, t in trainer.critic_params.items()}
        record = trainer.train_cycle()
        assert record["critic"] == []
        for k, t in trainer.critic_params.items():
            np.testing.assert_array_equal(t.data, before[k])

    def test_divergence_aborts_with_dump(self, tmp_path):
        cfg = tiny_config(out_dir=str(tmp_path))
        trainer = pl.Trainer(cfg, DS)
        name = next(iter(trainer.gen_params))
        trainer.gen_params[name].data = np.full_like(
            trainer.gen_params[name].data, np.nan)
        with pytest.raises(TrainingDiverged) as info:
            trainer.train_cycle()
        assert info.value.dump_path is not None
        dump = np.load(info.value.dump_path)
        assert f"gen.{name}" in dump

    def test_empty_dataset_rejected(self, tmp_path):
        cfg = tiny_config(out_dir=str(tmp_path))
        with pytest.raises(ContractViolation):
            pl.Trainer(cfg, pl.SynthDataset(()))


class TestInference:
    def test_outputs(self, trained, tmp_path):
        cfg, summary = trained
        paths = pl.infer(cfg, summary["checkpoint"], DS, 0, str(tmp_path))
        for p in paths.values():
            assert (tmp_path / p.split("/")[-1]).exists()

        positions, topo, colors = read_obj(paths["refined.obj"])
        system = pl.build_system(cfg)
        assert positions.shape[0] == system.topology.n_vertices
        assert topo.triangles.shape == system.topology.triangles.shape
        assert colors is not None and colors.shape == positions.shape

        # the albedo PNG must agree with an unlit render to PNG precision
        system.load_parameters(
            pl.load_checkpoint(summary["checkpoint"]).generator,
            pl.load_checkpoint(summary["checkpoint"]).critic,
        )
        with no_grad():
            fwd = pl.refine_sample(system, DS[0])
            from gcnface.pipeline.system import render_albedo
            direct = render_albedo(system, fwd, fwd.fine_albedo, mode="albedo")
        png = load_png(paths["albedo_fine.png"])
        expect = np.clip(direct.image.data, 0.0, 1.0)
        assert np.abs(png - expect).max() <= 0.5 / 255 + 1e-12

    def test_index_validation(self, trained, tmp_path):
        cfg, summary = trained
        with pytest.raises(ContractViolation):
            pl.infer(cfg, summary["checkpoint"], DS, 99, str(tmp_path))

    def test_mismatched_checkpoint(self, trained, tmp_path):
        cfg, summary = trained
        other = tiny_config(n_vertices=162, out_dir=str(tmp_path))
        with pytest.raises(ConfigError):
            pl.infer(other, summary["checkpoint"], DS, 0, str(tmp_path))


class TestEvaluate:
    def test_zero_detail_self_agreement(self, trained, tmp_path):
        # with no hidden detail the ground truth is exactly the coarse
        # render, so the coarse side of the report must be perfect
        cfg = tiny_config(detail_amplitude=0.0, out_dir=str(tmp_path))
        ds = pl.synth_dataset(cfg, 2)
        _, summary = trained
        report = pl.evaluate(cfg, summary["checkpoint"], ds)
        for row in report["samples"]:
            assert row["coarse"]["l1"] == 0.0
            assert row["coarse"]["psnr"] == 99.0
            assert row["coarse"]["ssim"] == pytest.approx(1.0, abs=1e-9)
            assert row["coarse"]["cosine"] == pytest.approx(1.0, abs=1e-9)

    def test_report_file_structure(self, trained, tmp_path):
        cfg, summary = trained
        out = tmp_path / "report.jsonl"
        report = pl.evaluate(cfg, summary["checkpoint"], DS, out_path=out)
        lines = [json.loads(line) for line in out.read_text().splitlines()]
        assert lines[0]["kind"] == "reference"
        assert "not a target" in lines[0]["note"]
        assert (lines[0]["l1"], lines[0]["psnr"], lines[0]["ssim"]) == (
            0.034, 29.69, 0.894)
        assert [r["kind"] for r in lines[1:-1]] == ["sample"] * len(DS)
        for row in lines[1:-1]:
            assert list(row["fine"]) == ["l1", "psnr", "ssim", "cosine"]
            assert list(row["coarse"]) == ["l1", "psnr", "ssim", "cosine"]
        agg = lines[-1]
        assert agg["kind"] == "aggregate"
        assert agg["count"] == len(DS)
        assert 0 <= agg["fine_psnr_wins"] <= len(DS)
        assert report["aggregate"] == agg

    def test_deterministic_report(self, trained, tmp_path):
        cfg, summary = trained
        p1, p2 = tmp_path / "r1.jsonl", tmp_path / "r2.jsonl"
        pl.evaluate(cfg, summary["checkpoint"], DS, out_path=p1)
        pl.evaluate(cfg, summary["checkpoint"], DS, out_path=p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestGradsuite:
    def test_subset_passes(self):
        rows = pl.run_gradcheck_suite(
            seed=0, components=["cheb_layer", "vertex_loss", "schedule_total"])
        assert [r.component for r in rows] == [
            "cheb_layer", "vertex_loss", "schedule_total"]
        for row in rows:
            assert row.passed, f"{row.component} error {row.error}"

    def test_registry_covers_all_components(self):
        expected = {
            "cheb_layer", "residual_block", "decoder", "refiner", "combiner",
            "discriminator", "render_texture", "render_lighting",
            "render_pose", "render_shape", "pixel_loss", "identity_loss",
            "vertex_loss", "adversarial_penalty", "schedule_total",
        }
        assert set(pl.COMPONENTS) == expected

    def test_unknown_component_rejected(self):
        with pytest.raises(ContractViolation):
            pl.run_gradcheck_suite(components=["nonsense"])

    def test_corrupted_backward_is_reported(self, monkeypatch):
        # drop T_1's gradient path while keeping forward values: the
        # audit must flag the discrepancy rather than crash
        real = gcn.cheb_basis

        def broken(lap, x, order):
            out = real(lap, x, order)
            if len(out) > 1:
                out[1] = ops.constant(out[1].data)
            return out

        monkeypatch.setattr(gcn, "cheb_basis", broken)
        rows = pl.run_gradcheck_suite(seed=0, components=["cheb_layer"])
        assert not rows[0].passed
        assert rows[0].error > rows[0].threshold


class TestCli:
    def write_config(self, tmp_path, **overrides):
        path = tmp_path / "config.txt"
        pl.save_config(path, tiny_config(**overrides))
        return str(path)

    def test_synth_writes_dataset(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path)
        code = cli.main(["synth", "--config", cfg,
                            "--out", str(tmp_path / "o"), "--count", "2"])
        assert code == 0
        ds = pl.load_dataset(tmp_path / "o" / "dataset.bin")
        assert len(ds) == 2
        assert (tmp_path / "o" / "config.txt").exists()
        assert "wrote 2 samples" in capsys.readouterr().out

    def test_train_then_eval_and_infer(self, tmp_path, capsys):
        cfg_path = self.write_config(tmp_path, train_steps=1)
        run = tmp_path / "run"
        ds_path = tmp_path / "ds.bin"
        pl.save_dataset(ds_path, DS)
        assert cli.main(["train", "--config", cfg_path, "--out", str(run),
                            "--dataset", str(ds_path)]) == 0
        ck = run / "checkpoint_final.bin"
        assert ck.exists()
        assert cli.main(["eval", "--config", cfg_path, "--out", str(run),
                            "--checkpoint", str(ck),
                            "--dataset", str(ds_path)]) == 0
        assert (run / "eval_report.jsonl").exists()
        assert cli.main(["infer", "--config", cfg_path,
                            "--out", str(run / "infer"),
                            "--checkpoint", str(ck),
                            "--dataset", str(ds_path), "--index", "1"]) == 0
        assert (run / "infer" / "refined.obj").exists()
        capsys.readouterr()

    def test_render_command(self, tmp_path, capsys):
        cfg_path = self.write_config(tmp_path)
        out = tmp_path / "r"
        assert cli.main(["render", "--config", cfg_path,
                            "--out", str(out), "--index", "1"]) == 0
        assert (out / "sample_001.png").exists()
        capsys.readouterr()

    def test_seed_override_changes_data(self, tmp_path, capsys):
        cfg_path = self.write_config(tmp_path)
        for seed, name in ((0, "s0"), (5, "s5")):
            assert cli.main(["synth", "--config", cfg_path,
                                "--out", str(tmp_path / name),
                                "--seed", str(seed), "--count", "1"]) == 0
        b0 = (tmp_path / "s0" / "dataset.bin").read_bytes()
        b5 = (tmp_path / "s5" / "dataset.bin").read_bytes()
        assert b0 != b5
        capsys.readouterr()

    def test_error_line_is_machine_readable(self, tmp_path, capsys):
        cfg_path = self.write_config(tmp_path)
        code = cli.main(["eval", "--config", cfg_path,
                            "--out", str(tmp_path / "x"),
                            "--checkpoint", str(tmp_path / "missing.bin"),
                            "--dataset", str(tmp_path / "missing_ds.bin")])
        assert code == 2
        err = capsys.readouterr().err
        assert err.startswith("error: ")
        payload = json.loads(err[len("error: "):])
        assert "kind" in payload and "message" in payload

    def test_gradcheck_exit_codes(self, tmp_path, monkeypatch, capsys):
        rows_pass = [pl.SuiteRow("x", 1e-9, 1e-5, True)]
        rows_fail = [pl.SuiteRow("x", 1.0, 1e-5, False)]
        monkeypatch.setattr(cli, "run_gradcheck_suite",
                            lambda seed: rows_pass)
        assert cli.main(["gradcheck"]) == 0
        monkeypatch.setattr(cli, "run_gradcheck_suite",
                            lambda seed: rows_fail)
        assert cli.main(["gradcheck"]) == 1
        out = capsys.readouterr().out
        assert "status=FAIL" in out
