import numpy as np
import pytest

from nm_sparse_kit.experiment import (
    ABLATION_LABELS,
    ExperimentConfig,
    build_dataset,
    load_config,
    parse_config,
    run_ablation,
    run_experiment,
    save_config,
    serialize_config,
)
from nm_sparse_kit.data import save_idx_images, save_idx_labels
from nm_sparse_kit.masks import BinarizationCriterion, load_mask, validate_mask
from nm_sparse_kit.tensorops import NmPattern, load_matrix
from nm_sparse_kit.training import Strategy, TrainConfig


def small_config(out_dir, strategy=Strategy.BI_MASK, **train_kw):
    train = dict(epochs=4, batch_size=16, delta_t=10, k=10, warmup_epochs=1,
                 peak_lr=0.1, momentum=0.9, weight_decay=1e-4, seed=2)
    train.update(train_kw)
    return ExperimentConfig(
        strategy=strategy,
        pattern=NmPattern(2, 4),
        dataset="synthetic",
        out_dir=str(out_dir),
        hidden_dims=(16,),
        train=TrainConfig(**train),
        classes=4,
        dim=8,
        per_class=16,
        spread=0.3,
    )


class TestConfigRoundTrip:
    def test_parse_of_serialize_is_identity(self, tmp_path):
        cfg = small_config(tmp_path / "run", strategy=Strategy.TRANSPOSABLE)
        assert parse_config(serialize_config(cfg)) == cfg

    def test_file_round_trip(self, tmp_path):
        cfg = small_config(tmp_path / "run")
        path = tmp_path / "cfg.txt"
        save_config(path, cfg)
        assert load_config(path) == cfg

    def test_comments_and_blank_lines_ignored(self):
        cfg = parse_config("# hello\n\nstrategy = vanilla  # trailing\npattern = 2:4\n")
        assert cfg.strategy is Strategy.VANILLA
        assert cfg.pattern == NmPattern(2, 4)

    def test_unknown_key_rejected_with_line(self):
        with pytest.raises(ValueError, match="line 2.*mystery"):
            parse_config("strategy = vanilla\nmystery = 42\npattern = 2:4\n")

    def test_missing_required_keys(self):
        with pytest.raises(ValueError, match="strategy"):
            parse_config("pattern = 2:4\n")

    def test_criterion_key(self):
        cfg = parse_config("strategy = bimask\npattern = 2:4\ncriterion = multinomial\n")
        assert cfg.criterion is BinarizationCriterion.MULTINOMIAL_SAMPLING


class TestBuildDataset:
    def test_synthetic(self, tmp_path):
        data = build_dataset(small_config(tmp_path))
        assert data.input_dim == 8
        assert data.num_classes == 4

    def test_idx_pair_with_test_split(self, tmp_path):
        rng = np.random.default_rng(0)
        root = tmp_path / "mnist"
        root.mkdir()
        save_idx_images(root / "train-images-idx3-ubyte", rng.integers(0, 255, (6, 2, 4), dtype=np.uint8))
        save_idx_labels(root / "train-labels-idx1-ubyte", np.array([0, 1, 1, 0, 1, 0], dtype=np.uint8))
        save_idx_images(root / "t10k-images-idx3-ubyte", rng.integers(0, 255, (2, 2, 4), dtype=np.uint8))
        save_idx_labels(root / "t10k-labels-idx1-ubyte", np.array([1, 0], dtype=np.uint8))
        cfg = small_config(tmp_path / "run")
        cfg = ExperimentConfig(**{**cfg.__dict__, "dataset": f"idx:{root}"})
        data = build_dataset(cfg)
        assert data.train_count == 6
        assert data.test_count == 2
        assert data.input_dim == 8

    def test_unknown_descriptor(self, tmp_path):
        cfg = ExperimentConfig(Strategy.VANILLA, NmPattern(2, 4), dataset="csv:wat")
        with pytest.raises(ValueError, match="descriptor"):
            build_dataset(cfg)


class TestRunExperiment:
    def test_smoke_writes_all_artifacts(self, tmp_path):
        out = tmp_path / "run"
        summary = run_experiment(small_config(out))
        assert (out / "metrics.csv").exists()
        assert (out / "summary.csv").exists()
        assert (out / "config.txt").exists()
        assert np.isfinite(summary.final_train_accuracy)
        assert np.isfinite(summary.mean_grad_gap_l2)
        assert np.isfinite(summary.mean_eligible_block_ratio)
        assert np.isfinite(summary.search_seconds_total)
        # masks on disk are valid and weight files parse
        for i in range(2):
            w = load_matrix(out / f"layer{i}_weights.txt")
            fwd = load_mask(out / f"layer{i}_forward_mask.txt")
            bwd = load_mask(out / f"layer{i}_backward_mask.txt")
            assert validate_mask(fwd) == []
            assert validate_mask(bwd) == []
            # returned weights are already masked: support within the mask
            assert ((w != 0) <= (fwd.bits == 1)).all()

    def test_metrics_rows_match_iteration_count(self, tmp_path):
        out = tmp_path / "run"
        cfg = small_config(out)
        run_experiment(cfg)
        lines = (out / "metrics.csv").read_text().splitlines()
        assert lines[0].startswith("#")
        assert lines[1] == "iteration,loss,grad_gap_l2,eligible_block_ratio,mask_flip_count"
        batches = (cfg.classes * cfg.per_class) // cfg.train.batch_size
        assert len(lines) - 2 == cfg.train.epochs * batches

    def test_same_seed_byte_identical_metrics(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        run_experiment(small_config(a))
        run_experiment(small_config(b))
        assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()

    def test_dense_strategy_smoke(self, tmp_path):
        summary = run_experiment(small_config(tmp_path / "dense", strategy=Strategy.DENSE))
        assert summary.mean_grad_gap_l2 == 0.0


class TestAblation:
    def test_three_rows_in_order(self, tmp_path):
        results = run_ablation(small_config(tmp_path / "ablate"))
        assert [label for label, _ in results] == list(ABLATION_LABELS)
        baseline, backward, permutation = (summary for _, summary in results)
        assert baseline.strategy == "vanilla"
        assert backward.strategy == "bimask"
        assert permutation.strategy == "bimask"
        # the identity-permutation variant never searches
        assert backward.search_seconds_total == 0.0
        assert permutation.search_seconds_total >= 0.0
        assert (tmp_path / "ablate" / "baseline" / "metrics.csv").exists()
        assert (tmp_path / "ablate" / "backward_mask" / "metrics.csv").exists()
        assert (tmp_path / "ablate" / "permutation" / "metrics.csv").exists()
