import io
import unittest

from ..config import RunConfig, parse_config_file, resolve_config
from ..errors import ConfigError, InputError
from ..reports import write_key_values


class ResolveConfigTest(unittest.TestCase):

    def test_defaults(self):
        cfg = resolve_config()
        self.assertEqual(cfg, RunConfig())
        self.assertEqual(cfg.n_agents, 80000)
        self.assertEqual(cfg.k_ring, 8)
        self.assertEqual(cfg.p_rewire, 0.2)
        self.assertEqual(cfg.epsilon, 0.05)
        self.assertEqual(cfg.tolerance, 1e-8)
        self.assertEqual(cfg.train_size, 300)
        self.assertEqual(cfg.eval_size, 3034)
        self.assertEqual(cfg.synth_n_regions, 3363)

    def test_file(self):
        text = ("# small run\n"
                "n_agents = 1000\n"
                "epsilon=0.1   # stronger bias\n"
                "\n"
                "synthetic = yes\n"
                "init_point = 0.4, 0.6\n"
                "epsilons = 0.05,0.2\n")
        cfg = resolve_config(io.StringIO(text))
        self.assertEqual(cfg.n_agents, 1000)
        self.assertEqual(cfg.epsilon, 0.1)
        self.assertTrue(cfg.synthetic)
        self.assertEqual(cfg.init_point, (0.4, 0.6))
        self.assertEqual(cfg.epsilons, (0.05, 0.2))

    def test_override_precedence(self):
        stream = io.StringIO("seed = 3\nk_ring = 4\n")
        cfg = resolve_config(stream, {'seed': 9, 'k_ring': None, 'max_iterations': '50'})
        self.assertEqual(cfg.seed, 9)
        self.assertEqual(cfg.k_ring, 4)
        self.assertEqual(cfg.max_iterations, 50)

    def test_invalid_values(self):
        for overrides in [{'epsilon': '0.6'},
                          {'k_ring': '5'},
                          {'k_ring': '8', 'n_agents': '8'},
                          {'p_rewire': '1.5'},
                          {'tolerance': '0'},
                          {'seed': '-1'},
                          {'n_agents': 'many'},
                          {'synthetic': 'maybe'},
                          {'init_point': '0.3,0.3'},
                          {'outcome_threshold': '0.2'},
                          {'outcome_threshold': '0.5'},
                          {'synth_predictor_lo': '0.9', 'synth_predictor_hi': '0.5'},
                          {'synth_n_municipalities': '500', 'synth_n_regions': '100'},
                          {'nonsense': '1'}]:
            with self.assertRaises(ConfigError, msg=overrides):
                resolve_config(None, overrides)

    def test_collects_problems(self):
        with self.assertRaises(ConfigError) as cm:
            resolve_config(None, {'epsilon': 0.7, 'p_rewire': 2.0})
        self.assertEqual(len(cm.exception.problems), 2)
        self.assertIsInstance(cm.exception, InputError)

    def test_echo_round_trip(self):
        cfg = resolve_config(None, {'n_agents': 500, 'threads': 4, 'output_dir': 'out',
                                    'init_point': [0.25, 0.75], 'outcome_threshold': 0.6})
        echo = cfg.echo()
        self.assertNotIn('threads', echo)
        self.assertNotIn('output_dir', echo)

        stream = io.StringIO()
        write_key_values(echo, stream, sort=True)
        stream.seek(0)
        restored = resolve_config(stream, {'threads': 4, 'output_dir': 'out'})
        self.assertEqual(restored, cfg)


class ParseConfigFileTest(unittest.TestCase):

    def test_malformed(self):
        for text in ["n_agents\n", "= 5\n", "seed = 1\nseed = 2\n"]:
            with self.assertRaises(ConfigError, msg=text):
                parse_config_file(io.StringIO(text))

    def test_nullable(self):
        values = parse_config_file(io.StringIO("regions_path =\nsnapshot_every = 10\n"))
        self.assertEqual(values, {'regions_path': None, 'snapshot_every': 10})


if __name__ == '__main__':
    unittest.main()
