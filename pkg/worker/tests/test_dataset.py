from collections import Counter

import numpy as np
import pytest
import torch
from PIL import Image

from augforge_worker.dataset import (
    IMAGE_SIZE,
    NUM_CLASSES,
    DataSpec,
    TransformedDataset,
    load_split,
    synthetic_split,
)


class TestSyntheticSplit:
    def test_shape_and_type(self):
        samples = synthetic_split(20, seed=0, train=True)
        assert len(samples) == 20
        image, label = samples[0]
        assert isinstance(image, Image.Image)
        assert image.mode == "RGB"
        assert image.size == (IMAGE_SIZE, IMAGE_SIZE)
        assert 0 <= label < NUM_CLASSES

    def test_class_balance(self):
        samples = synthetic_split(100, seed=3, train=True)
        counts = Counter(label for _, label in samples)
        assert counts == {k: 10 for k in range(NUM_CLASSES)}

    def test_deterministic(self):
        a = synthetic_split(8, seed=7, train=True)
        b = synthetic_split(8, seed=7, train=True)
        for (ia, la), (ib, lb) in zip(a, b):
            assert la == lb
            assert np.array_equal(np.asarray(ia), np.asarray(ib))

    def test_splits_differ(self):
        train = synthetic_split(4, seed=7, train=True)
        test = synthetic_split(4, seed=7, train=False)
        assert not np.array_equal(np.asarray(train[0][0]), np.asarray(test[0][0]))

    def test_seed_changes_pixels(self):
        a = synthetic_split(4, seed=1, train=True)
        b = synthetic_split(4, seed=2, train=True)
        assert not np.array_equal(np.asarray(a[0][0]), np.asarray(b[0][0]))


class TestLoadSplit:
    def test_falls_back_to_synthetic(self, tmp_path):
        spec = DataSpec(train_samples=12, test_samples=6, seed=0, data_root=str(tmp_path))
        assert len(load_split(spec, train=True)) == 12
        assert len(load_split(spec, train=False)) == 6

    def test_rejects_empty_split(self):
        with pytest.raises(ValueError):
            DataSpec(train_samples=0)


class TestTransformedDataset:
    def test_applies_pipeline(self):
        samples = synthetic_split(4, seed=0, train=True)
        data = TransformedDataset(samples, lambda img: torch.zeros(3, 8, 8))
        tensor, label = data[0]
        assert tensor.shape == (3, 8, 8)
        assert isinstance(label, int)
        assert len(data) == 4

    def test_non_tensor_output_rejected(self):
        samples = synthetic_split(2, seed=0, train=True)
        data = TransformedDataset(samples, lambda img: img)
        with pytest.raises(TypeError):
            data[0]
