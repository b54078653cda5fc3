import unittest

import numpy as np

from wrenlet.config import EngineConfig
from wrenlet.engine import Engine
from wrenlet.job import JobConfig
from wrenlet.models import Divergence
from wrenlet.patterns.paramserver import (
    SgdModel,
    decode_dataset,
    encode_dataset,
    hogwild_sgd,
    least_squares_minimum,
    loss,
    make_least_squares,
    serial_gradient_descent,
)


class TestDataset(unittest.TestCase):
    def test_encoding(self):
        features, targets = make_least_squares(30, 4, seed=1)
        decoded_features, decoded_targets = decode_dataset(encode_dataset(features, targets))
        np.testing.assert_array_equal(features, decoded_features)
        np.testing.assert_array_equal(targets, decoded_targets)

    def test_malformed(self):
        with self.assertRaises(ValueError):
            decode_dataset(b"3 x\n")
        with self.assertRaises(ValueError):
            decode_dataset(b"3 2\n" + bytes(8))
        with self.assertRaises(ValueError):
            encode_dataset(np.zeros((3, 2)), np.zeros(4))

    def test_model_validation(self):
        with self.assertRaises(ValueError):
            SgdModel(np.zeros(3), step_size=0)
        with self.assertRaises(ValueError):
            SgdModel(np.array([1.0, np.nan]), step_size=0.1)
        model = SgdModel(np.arange(3.0), 0.1, version=7)
        version, weights = SgdModel.decode(model.to_bytes())
        self.assertEqual(7, version)
        np.testing.assert_array_equal(np.arange(3.0), weights)

    def test_serial_gradient_descent(self):
        features, targets = make_least_squares(200, 20, seed=2)
        model = serial_gradient_descent(features, targets, 400, 0.1)
        _, minimum = least_squares_minimum(features, targets)
        self.assertLessEqual(loss(features, targets, model.weights), 1.01 * minimum)
        self.assertEqual(list(range(1, 401)), [v for v, _ in model.trajectory])


class TestHogwild(unittest.TestCase):
    def setUp(self) -> None:
        self.engine = Engine(
            EngineConfig(clock="virtual", pool_size=16), JobConfig(poll_interval=0.05)
        )
        self.driver = self.engine.driver
        self.features, self.targets = make_least_squares(200, 20, seed=3)
        self.dataset_key = "datasets/least-squares"
        self.engine.objects.object_put(
            self.dataset_key, encode_dataset(self.features, self.targets)
        )

    def tearDown(self) -> None:
        self.engine.close()

    def test_one_worker_is_serial_descent(self):
        model = hogwild_sgd(self.driver, self.dataset_key, 1, 30, 0.1)
        serial = serial_gradient_descent(self.features, self.targets, 30, 0.1)
        np.testing.assert_allclose(serial.weights, model.weights, rtol=1e-9, atol=0)
        self.assertEqual(30, model.version)
        self.assertEqual([v for v, _ in serial.trajectory], [v for v, _ in model.trajectory])
        np.testing.assert_allclose(
            [l for _, l in serial.trajectory], [l for _, l in model.trajectory], rtol=1e-9
        )

    def test_parallel_workers_converge(self):
        model = hogwild_sgd(self.driver, self.dataset_key, 8, 50, 0.1)
        _, minimum = least_squares_minimum(self.features, self.targets)
        self.assertEqual(400, model.version)
        self.assertLessEqual(loss(self.features, self.targets, model.weights), 1.01 * minimum)
        # Every publish is a full step from the model it replaced.
        self.assertEqual(list(range(1, 401)), [v for v, _ in model.trajectory])
        losses = [l for _, l in model.trajectory]
        self.assertTrue(all(b <= a * (1 + 1e-12) for a, b in zip(losses, losses[1:])))

    def test_minibatches(self):
        initial = loss(self.features, self.targets, np.zeros(20))
        model = hogwild_sgd(self.driver, self.dataset_key, 4, 50, 0.1, minibatch=50)
        self.assertEqual(200, model.version)
        self.assertLess(loss(self.features, self.targets, model.weights), 0.1 * initial)

    def test_zero_steps(self):
        model = hogwild_sgd(self.driver, self.dataset_key, 4, 0, 0.1)
        self.assertEqual(0, model.version)
        np.testing.assert_array_equal(np.zeros(20), model.weights)
        model = hogwild_sgd(self.driver, self.dataset_key, 0, 10, 0.1, initial=np.ones(20))
        np.testing.assert_array_equal(np.ones(20), model.weights)

    def test_divergence(self):
        with self.assertRaises(Divergence):
            hogwild_sgd(self.driver, self.dataset_key, 2, 20, 5.0)

    def test_model_key_is_removed(self):
        hogwild_sgd(self.driver, self.dataset_key, 2, 5, 0.1)
        self.assertEqual([], self.engine.kv.backend.list(""))


if __name__ == "__main__":
    unittest.main()
