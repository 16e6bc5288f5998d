import csv

import numpy as np
import pytest

from ranloop import forecast as fc


def ramp(n, key="thr_mbps", start=0):
    return [{"t": start + i, key: float(i)} for i in range(n)]


class TestBuildWindows:
    def test_boundary_single_window(self):
        ws = fc.build_windows(ramp(11), "load", t_steps=10)
        assert len(ws) == 1

    def test_count_is_length_minus_t_steps(self):
        ws = fc.build_windows(ramp(50), "load", t_steps=10)
        assert len(ws) == 40

    def test_ramp_last_target_is_last_record(self):
        recs = ramp(30)
        ws = fc.build_windows(recs, "load", t_steps=8)
        assert ws[-1].target[-1] == recs[-1]["thr_mbps"]

    def test_gap_rejected_with_location(self):
        recs = ramp(20)
        del recs[7]
        with pytest.raises(fc.SeriesGapError) as err:
            fc.build_windows(recs, "load", t_steps=5)
        assert err.value.tti == 8

    def test_too_short_rejected(self):
        with pytest.raises(fc.InsufficientDataError):
            fc.build_windows(ramp(10), "load", t_steps=10)

    def test_windows_are_contiguous_slices(self):
        ws = fc.build_windows(ramp(30), "load", t_steps=6, horizon=2)
        for w in ws:
            assert np.all(np.diff(w.ttis) == 1)
            assert w.target_ttis[0] == w.ttis[-1] + 1
            assert len(w.target) == 2


class TestConfig:
    def test_published_defaults(self):
        cfg = fc.ForecastConfig()
        assert (cfg.enc_layers, cfg.dec_layers) == (4, 2)
        assert (cfg.enc_heads, cfg.dec_heads) == (16, 8)
        assert cfg.dropout == 0.1 and cfg.lr == 1e-4 and cfg.batch_size == 32
        assert cfg.t_steps == 96 and cfg.horizon == 1

    def test_default_model_instantiates_and_runs(self):
        model = fc.InformerLite(fc.ForecastConfig())
        v = np.linspace(0, 1, 96)[None, :]
        t = np.arange(96)[None, :]
        out = model.predict(v, t, np.array([[96]]))
        assert out.shape == (1, 1) and np.isfinite(out).all()

    def test_horizon_vs_t_steps_invariant(self):
        with pytest.raises(ValueError):
            fc.ForecastConfig(t_steps=6, horizon=4)


def small_cfg(**kw):
    base = dict(t_steps=16, horizon=1, label_len=6, d_model=8, d_ff=16,
                enc_layers=2, dec_layers=1, enc_heads=2, dec_heads=2,
                dropout=0.0, lr=3e-3, epochs=6, min_windows=50, seed=0)
    base.update(kw)
    return fc.ForecastConfig(**base)


def sine_records(n, amp=1.0, noise=0.0, seed=0, key="thr_mbps"):
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    vals = amp * np.sin(2 * np.pi * t / 96) + rng.normal(0, noise, n)
    return [{"t": int(i), key: float(v)} for i, v in zip(t, vals)]


class TestTrainPredict:
    def test_insufficient_windows_rejected(self):
        ws = fc.build_windows(ramp(30), "load", t_steps=16)
        with pytest.raises(fc.InsufficientDataError):
            fc.train(ws, small_cfg(min_windows=200))

    def test_constant_series_fits_the_constant(self):
        recs = [{"t": i, "thr_mbps": 42.0} for i in range(120)]
        ws = fc.build_windows(recs, "load", t_steps=16)
        model, _ = fc.train(ws, small_cfg(epochs=2))
        pred = fc.predict_series(model, ws)
        assert np.all(np.abs(pred - 42.0) <= 0.01 * 42.0)

    def test_loss_decreases_by_half(self):
        ws = fc.build_windows(sine_records(220), "load", t_steps=16)
        _, losses = fc.train(ws, small_cfg(epochs=8))
        assert losses[-1] <= 0.5 * losses[0]

    def test_noiseless_sine_beats_five_percent_amplitude(self):
        ws = fc.build_windows(sine_records(500, amp=1.0), "load", t_steps=24)
        cfg = small_cfg(t_steps=24, label_len=8, d_model=16, d_ff=32,
                        enc_heads=4, dec_heads=4, epochs=40)
        model, _ = fc.train(ws[:380], cfg)
        ev = ws[380:]
        truth = np.stack([w.target for w in ev])
        mae = fc.evaluate_mae(fc.predict_series(model, ev), truth)
        assert mae < 0.05 * 1.0

    def test_same_window_twice_identical(self):
        ws = fc.build_windows(sine_records(80), "load", t_steps=16)
        model = fc.InformerLite(small_cfg())
        a = fc.predict_series(model, ws[:4])
        b = fc.predict_series(model, ws[:4])
        assert np.array_equal(a, b)

    def test_one_pass_decoding_structure(self):
        cfg = small_cfg(horizon=4, t_steps=16)
        model = fc.InformerLite(cfg)
        v = np.linspace(0, 1, 16)[None, :]
        t = np.arange(16)[None, :]
        before = model.decoder_passes
        out = model.predict(v, t, np.arange(16, 20)[None, :])
        assert out.shape == (1, 4)
        assert model.decoder_passes == before + 1      # no autoregressive loop
        assert np.all(model.last_decoder_placeholders == 0.0)

    def test_distillation_halves_each_layer(self):
        cfg = small_cfg(enc_layers=3, t_steps=24)
        model = fc.InformerLite(cfg)
        x = model._embed(np.zeros((2, 24)), np.tile(np.arange(24), (2, 1)))
        length = 24
        for layer in model.encoder:
            x = layer(x)
            length = int(np.ceil(length / 2))
            assert x.shape[1] == length

    def test_save_load_roundtrip(self, tmp_path):
        ws = fc.build_windows(sine_records(100), "load", t_steps=16)
        model, _ = fc.train(ws, small_cfg(epochs=1))
        path = tmp_path / "model.bin"
        fc.save_model(path, model)
        loaded = fc.load_model(path)
        assert loaded.bias_correction == model.bias_correction
        assert np.array_equal(fc.predict_series(loaded, ws[:5]),
                              fc.predict_series(model, ws[:5]))


class TestBaselinesAndMae:
    def test_mae_exact(self):
        assert fc.evaluate_mae([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert fc.evaluate_mae([3.0, 4.0], [1.0, 2.0]) == 2.0

    def test_mae_length_mismatch(self):
        with pytest.raises(ValueError):
            fc.evaluate_mae([1.0], [1.0, 2.0])

    def test_last_value_baseline(self):
        ws = fc.build_windows(ramp(20), "load", t_steps=5)
        preds = fc.last_value_baseline(ws)
        assert preds[0][0] == ws[0].x_enc[-1]

    def test_ar1_recovers_linear_recursion(self):
        # y[t+1] = 2 + 0.5 y[t] exactly
        vals = [10.0]
        for _ in range(60):
            vals.append(2 + 0.5 * vals[-1])
        recs = [{"t": i, "thr_mbps": v} for i, v in enumerate(vals)]
        ws = fc.build_windows(recs, "load", t_steps=8)
        preds = fc.ar1_baseline(ws, ws)
        truth = np.stack([w.target for w in ws])
        assert fc.evaluate_mae(preds, truth) < 1e-6

    def test_model_beats_baselines_on_benchmark(self):
        out = fc.run_benchmark("loss_wave", cfg=fc.benchmark_config(epochs=30))
        assert out["mae"] < out["mae_last_value"]
        assert out["mae"] <= out["mae_ar1"]


class TestBundleAndExport:
    def test_classification_against_thresholds(self):
        b = fc.ForecastBundle(values={"load": 210.0, "loss": 0.4, "power": 180.0},
                              tti=5)
        got = b.classify({"load": 200.0, "loss": 1.0, "power": 200.0})
        assert got == {"load": "high", "loss": "low", "power": "low"}

    def test_csv_schema_and_residuals(self, tmp_path):
        path = tmp_path / "preds.csv"
        fc.export_csv(path, [1, 2], [10.0, 20.0], [11.0, 19.5])
        rows = list(csv.DictReader(open(path)))
        assert list(rows[0]) == ["tti", "actual", "predicted", "residual"]
        assert float(rows[0]["residual"]) == pytest.approx(1.0)
        assert float(rows[1]["residual"]) == pytest.approx(-0.5)

    def test_synthetic_suite_kinds(self):
        for kind in fc.SYNTHETIC_SUITE:
            recs = fc.synthetic_series(kind, 50, 1)
            assert len(recs) == 50
        with pytest.raises(ValueError):
            fc.synthetic_series("nope", 10, 0)
