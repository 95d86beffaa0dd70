import math
import unittest

import numpy as np

from .. import analysis
from ..analysis import (
    DegenerateFit,
    NoComparablePairs,
    RegionPrediction,
    RegressionModel,
    compare,
    dispersion_report,
    fit_linear,
    histogram,
    mse,
    predict_linear,
    predict_many,
    region_means,
    rmse,
)
from ..dynamics import ConvergenceSettings, OpinionMatrix, global_share, init_opinions, run
from ..errors import ParameterError
from ..graph import WattsStrogatzParams, generate_watts_strogatz
from ..population import (
    AgentAllocation,
    RegionRecord,
    RegionTable,
    SyntheticDataParams,
    allocate_agents,
    assign_biases,
    shuffle_biases,
    synthesize_regions,
)


def _table(n_regions):
    return RegionTable.from_records([RegionRecord('R%d' % r, 'M0', 1, 0.5, 0.5)
                                     for r in range(n_regions)])


def _allocation(lengths):
    ends = np.cumsum(np.array(lengths, dtype=np.int64))
    return AgentAllocation(ends - np.array(lengths, dtype=np.int64), ends)


class RegionMeansTest(unittest.TestCase):

    def test_mean(self):
        state = OpinionMatrix(np.array([[1.0, 0.0], [0.0, 1.0]]))
        (prediction,) = region_means(state, _allocation([2]), _table(1))
        self.assertEqual(prediction.predicted_rate, 0.5)
        self.assertEqual(prediction.n_agents, 2)
        self.assertEqual(prediction.measured_rate, 0.5)

        (prediction,) = region_means(init_opinions(7, 2), _allocation([7]), _table(1))
        self.assertAlmostEqual(prediction.predicted_rate, 0.5, places=15)

    def test_empty_region(self):
        state = init_opinions(3, 2)
        with self.assertLogs(analysis.logger, 'WARNING'):
            predictions = region_means(state, _allocation([3, 0]), _table(2))
        self.assertTrue(predictions[1].is_empty)
        self.assertIsNone(predictions[1].predicted_rate)
        self.assertFalse(predictions[0].is_empty)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(4)
        first = rng.random(40)
        values = np.stack([first, 1.0 - first], axis=1)
        permuted = values[rng.permutation(40)]
        a = region_means(OpinionMatrix(values), _allocation([40]), _table(1))
        b = region_means(OpinionMatrix(permuted), _allocation([40]), _table(1))
        self.assertEqual(a[0].predicted_rate, b[0].predicted_rate)

    def test_threshold(self):
        state = OpinionMatrix(np.array([[0.9, 0.1], [0.6, 0.4], [0.2, 0.8], [0.8, 0.2]]))
        (prediction,) = region_means(state, _allocation([4]), _table(1), threshold=0.7)
        self.assertEqual(prediction.predicted_rate, 0.5)
        with self.assertRaises(ParameterError):
            region_means(state, _allocation([4]), _table(1), threshold=0.3)
        with self.assertRaises(ParameterError):
            region_means(state, _allocation([4]), _table(1), threshold=0.5)

    def test_mismatch(self):
        with self.assertRaises(ParameterError):
            region_means(init_opinions(3, 2), _allocation([2]), _table(1))
        with self.assertRaises(ParameterError):
            region_means(init_opinions(3, 2), _allocation([3]), _table(2))


class ErrorMetricsTest(unittest.TestCase):

    def test_identical(self):
        self.assertEqual(mse([0.1, 0.5, 0.9], [0.1, 0.5, 0.9]), 0.0)

    def test_single_pair(self):
        self.assertAlmostEqual(mse([0.6], [0.5]), 0.01, places=15)
        self.assertAlmostEqual(rmse([0.6], [0.5]), 0.1, places=15)

    def test_symmetric(self):
        rng = np.random.default_rng(2)
        a, b = rng.random(100).tolist(), rng.random(100).tolist()
        self.assertEqual(mse(a, b), mse(b, a))
        self.assertEqual(rmse(a, b), math.sqrt(mse(a, b)))

    def test_skips_missing(self):
        with self.assertLogs(analysis.logger, 'WARNING'):
            summary = compare([0.6, None, 0.2], [0.5, 0.3, None])
        self.assertEqual(summary.n_pairs, 1)
        self.assertEqual(summary.n_skipped, 2)
        self.assertAlmostEqual(summary.mse, 0.01, places=15)

    def test_no_pairs(self):
        with self.assertRaises(NoComparablePairs):
            mse([None, 0.1], [0.1, None])

    def test_length_mismatch(self):
        with self.assertRaises(ParameterError):
            mse([0.1, 0.2], [0.1])


class HistogramTest(unittest.TestCase):

    def test_bounds(self):
        self.assertEqual(histogram([0.0]).counts.tolist(), [1] + [0] * 79)
        self.assertEqual(histogram([100.0]).counts.tolist(), [0] * 79 + [1])

    def test_uniform_grid(self):
        hist = histogram([i * 0.125 for i in range(800)])
        self.assertEqual(hist.counts.tolist(), [10] * 80)
        self.assertEqual(len(hist.bin_edges), 81)
        self.assertTrue(np.all(np.diff(hist.bin_edges) > 0))

    def test_out_of_range(self):
        hist = histogram([-1.0, 50.0, 100.5, float('nan')])
        self.assertEqual(hist.total, 1)
        self.assertEqual(hist.out_of_range, 3)

    def test_empty(self):
        hist = histogram([])
        self.assertEqual(hist.total, 0)
        self.assertEqual(hist.out_of_range, 0)

    def test_invalid(self):
        with self.assertRaises(ParameterError):
            histogram([1.0], n_bins=0)
        with self.assertRaises(ParameterError):
            histogram([1.0], lo=5.0, hi=5.0)


class LinearRegressionTest(unittest.TestCase):

    def test_exact_line(self):
        xs = np.linspace(0.0, 1.0, 11)
        model = fit_linear([(x, 0.5 * x + 0.2) for x in xs])
        self.assertAlmostEqual(model.slope, 0.5, delta=1e-12)
        self.assertAlmostEqual(model.intercept, 0.2, delta=1e-12)
        self.assertEqual(model.n_train, 11)

    def test_normal_equations(self):
        rng = np.random.default_rng(9)
        x = rng.uniform(0.4, 1.0, size=300)
        y = 0.38 + 0.55 * x + rng.normal(0.0, 0.05, size=300)
        model = fit_linear(list(zip(x.tolist(), y.tolist())))
        lhs = np.array([[len(x), x.sum()], [x.sum(), np.dot(x, x)]])
        intercept, slope = np.linalg.solve(lhs, np.array([y.sum(), np.dot(x, y)]))
        self.assertAlmostEqual(model.slope, slope, delta=1e-10)
        self.assertAlmostEqual(model.intercept, intercept, delta=1e-10)

        residual = y - (model.slope * x + model.intercept)
        self.assertLess(abs(float(np.dot(residual, x))), 1e-9)
        self.assertLess(abs(float(residual.sum())), 1e-9)

    def test_degenerate(self):
        with self.assertRaises(DegenerateFit):
            fit_linear([(0.5, 0.1), (0.5, 0.2), (0.5, 0.3)])
        with self.assertRaises(ParameterError):
            fit_linear([(0.5, 0.1)])

    def test_predict(self):
        self.assertEqual(predict_linear(RegressionModel(1.0, 0.0, 2), 0.65), (0.65, False))
        self.assertEqual(predict_linear(RegressionModel(2.0, 0.0, 2), 0.7), (1.0, True))
        self.assertEqual(predict_linear(RegressionModel(1.0, -0.5, 2), 0.2), (0.0, True))

    def test_predict_many(self):
        model = RegressionModel(2.0, 0.0, 2)
        with self.assertLogs(analysis.logger, 'WARNING'):
            values, clamp_count = predict_many(model, [0.1, 0.3, 0.6, 0.9])
        self.assertEqual(values, [0.2, 0.6, 1.0, 1.0])
        self.assertEqual(clamp_count, 2)


class DispersionReportTest(unittest.TestCase):

    def test_equal_rates(self):
        report = dispersion_report([RegionPrediction('R%d' % r, 5, 0.4) for r in range(10)])
        self.assertEqual(report.n_regions, 10)
        self.assertAlmostEqual(report.mean, 0.4, places=15)
        self.assertAlmostEqual(report.stddev, 0.0, places=15)
        self.assertAlmostEqual(report.quantiles[0.5], 0.4, places=15)

    def test_ignores_empty(self):
        predictions = [RegionPrediction('R0', 1, 0.2), RegionPrediction('R1', 0, None),
                       RegionPrediction('R2', 1, 0.6)]
        report = dispersion_report(predictions)
        self.assertEqual(report.n_regions, 2)
        self.assertAlmostEqual(report.mean, 0.4, places=15)
        self.assertAlmostEqual(report.stddev, 0.2, places=15)

    def test_no_predictions(self):
        with self.assertRaises(ParameterError):
            dispersion_report([RegionPrediction('R0', 0, None)])


class ShuffleContrastTest(unittest.TestCase):
    """Shuffling the bias labels across regions flattens the regional predictions."""

    def test_desk_scale(self):
        (clustered, _), (shuffled, _) = self._contrast(5000, seed=1)
        self.assertGreater(clustered.stddev, shuffled.stddev)

    def test_across_seeds(self):
        for seed in range(5):
            (clustered, clustered_share), (shuffled, shuffled_share) = self._contrast(10000, seed)
            self.assertGreater(clustered.stddev, shuffled.stddev, "seed %d" % seed)
            # the majority option reaches more agents once spatial structure is gone
            self.assertGreaterEqual(shuffled_share, clustered_share, "seed %d" % seed)

    def _contrast(self, n_agents, seed):
        table = synthesize_regions(SyntheticDataParams(n_regions=200, n_municipalities=20,
                                                       seed=seed))
        alloc = allocate_agents(table, n_agents)
        assignment = assign_biases(alloc, table, 0.05)
        g = generate_watts_strogatz(WattsStrogatzParams(n_agents, 8, 0.2, seed=seed))
        settings = ConvergenceSettings(1e-8, 10000)
        outcomes = []
        for biases in (assignment, shuffle_biases(assignment, seed)):
            result = run(init_opinions(n_agents, 2), g, biases, settings, workers=2)
            report = dispersion_report(region_means(result.final_state, alloc, table))
            outcomes.append((report, global_share(result.final_state)))
        return outcomes


if __name__ == '__main__':
    unittest.main()
