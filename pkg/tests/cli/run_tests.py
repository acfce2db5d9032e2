import io
import os
import json
import shutil
import tempfile
import unittest
import contextlib

import pandas as pd

import CONSTANTS as CONST
from sparseldatoolkit.cli import run as cli


def _run(argv):
    """ :return: `(exit code, parsed document or None, raw stdout)`."""
    out = io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(io.StringIO()):
        code = cli.run(argv)
    text = out.getvalue()
    try:
        document = json.loads(text)
    except json.JSONDecodeError:
        document = None
    return code, document, text


class TestRun(unittest.TestCase):

    @classmethod
    def setUpClass(cls) -> None:
        cls.tmp = tempfile.mkdtemp()
        code, _, _ = _run(['simulate', '--scenario', 'diagonal', '--p', '30', '--r', '5',
                           '--n-train', '15', '--n-test', '20', '--seed', '1', '--out-dir',
                           cls.tmp])
        assert code == cli.EXIT_OK
        cls.train = os.path.join(cls.tmp, 'train.csv')
        cls.test = os.path.join(cls.tmp, 'test.csv')
        cls.truth = os.path.join(cls.tmp, cli.TRUTH_FILE)

    @classmethod
    def tearDownClass(cls) -> None:
        shutil.rmtree(cls.tmp, ignore_errors=True)

    def _path(self, name: str) -> str:
        return os.path.join(self.tmp, name)

    def test_simulate_files(self):
        """ Tests that simulate writes both splits, the truth support and the scenario."""
        for name in ('train.csv', 'test.csv', cli.TRUTH_FILE, 'scenario.yml'):
            self.assertTrue(os.path.isfile(self._path(name)))
        self.assertEqual(pd.read_csv(self.train).shape, (30, 31))
        self.assertEqual(pd.read_csv(self.test).shape, (40, 31))
        self.assertListEqual(pd.read_csv(self.truth)['feature_index'].tolist(), list(range(5)))

    def test_simulate_from_scenario_file(self):
        """ Tests that a scenario file is used and flags override it."""
        out_dir = self._path('from_file')
        code, document, _ = _run(['simulate', '--scenario-file',
                                   os.path.join(CONST.PATH_TO_TEST_CONFIGS, 'scenario_small.yml'),
                                   '--n-test', '5', '--out-dir', out_dir])
        self.assertEqual(code, cli.EXIT_OK)
        scenario = document['result']['scenario']
        self.assertEqual(scenario['p'], 40)
        self.assertEqual(scenario['structure'], 'block_network')
        self.assertEqual(scenario['n_test'], 5)

    def test_fit_predict_evaluate(self):
        """ Tests the chain cv-fit, predict and evaluate on the simulated files."""
        model_path = self._path('model.json')
        code, document, _ = _run(['fit', '--data', self.train, '--cv', '--folds', '3',
                                  '--grid-size', '5', '--model-out', model_path,
                                  '--threads', '1'])
        self.assertEqual(code, cli.EXIT_OK)
        self.assertTrue(os.path.isfile(model_path))
        self.assertIn(document['result']['model']['lambda'][0], document['result']['cv']['grid'])
        self.assertIn('generated_at', document)
        self.assertEqual(document['reproducibility']['command'], 'fit')

        predictions = self._path('predictions.csv')
        code, document, _ = _run(['predict', '--model', model_path, '--data', self.test,
                                  '--out', predictions])
        self.assertEqual(code, cli.EXIT_OK)
        self.assertEqual(document['result']['n'], 40)
        self.assertEqual(sum(document['result']['counts'].values()), 40)
        df = pd.read_csv(predictions)
        self.assertListEqual(list(df.columns), ['predicted', 'score_1'])

        code, document, _ = _run(['evaluate', '--model', model_path, '--data', self.test,
                                  '--truth', self.truth])
        self.assertEqual(code, cli.EXIT_OK)
        metrics = document['result']
        self.assertEqual(metrics['n_test'], 40)
        self.assertTrue(0.0 <= metrics['error_rate'] <= 1.0)
        self.assertLessEqual(metrics['correct_features'], metrics['features'])

    def test_cv_table(self):
        """ Tests that cv reports its table and writes it when asked."""
        out_csv = self._path('cv.csv')
        code, document, _ = _run(['cv', '--data', self.train, '--folds', '3', '--grid-size',
                                  '4', '--out-csv', out_csv, '--threads', '1'])
        self.assertEqual(code, cli.EXIT_OK)
        self.assertEqual(len(document['result']['table']), 4)
        self.assertIn(document['result']['chosen_lambda'], document['result']['grid'])
        self.assertEqual(pd.read_csv(out_csv).shape[0], 4)

    def test_zero_model(self):
        """ Tests that a huge lambda gives a zero model, a warning and exit code 0."""
        model_path = self._path('zero_model.json')
        with self.assertLogs('sparseldatoolkit.pipeline.model_fitting', level='WARNING'):
            code, document, _ = _run(['fit', '--data', self.train, '--lambda', '1e9',
                                      '--model-out', model_path])
        self.assertEqual(code, cli.EXIT_OK)
        self.assertTrue(document['result']['model']['zero_model'])
        self.assertEqual(document['result']['model']['features'], 0)

    def test_clustered_fit_summary(self):
        """ Tests that a clustered fit reports the clusters behind every support."""
        model_path = self._path('clustered.json')
        code, document, _ = _run(['fit', '--data', self.train, '--lambda', '0.1', '--cluster',
                                  '--k', '6', '--restarts', '3', '--model-out', model_path])
        self.assertEqual(code, cli.EXIT_OK)
        summary = document['result']['model']
        self.assertEqual(len(summary['cluster_supports']), summary['n_vectors'])
        self.assertTrue(all(0 <= c < 6 for s in summary['cluster_supports'] for c in s))
        code, document, _ = _run(['fit', '--data', self.train, '--lambda', '0.1',
                                  '--model-out', self._path('unclustered.json')])
        self.assertNotIn('cluster_supports', document['result']['model'])

    def test_config_precedence(self):
        """ Tests that the configuration file overrides defaults and flags override both."""
        config = os.path.join(CONST.PATH_TO_TEST_CONFIGS, 'valid_configs.yml')
        model_path = self._path('configured.json')
        code, document, _ = _run(['fit', '--data', self.train, '--config', config,
                                  '--model-out', model_path])
        self.assertEqual(code, cli.EXIT_OK)
        self.assertEqual(document['result']['model']['lambda'], [0.25])
        self.assertEqual(document['reproducibility']['configs']['SOLVER']['seed'], 3)
        code, document, _ = _run(['fit', '--data', self.train, '--config', config,
                                  '--lambda', '0.1', '--model-out', model_path])
        self.assertEqual(document['result']['model']['lambda'], [0.1])

    def test_repeatable_output(self):
        """ Tests that identical runs differ only in the timestamp."""
        argv = ['fit', '--data', self.train, '--lambda', '0.05', '--model-out',
                self._path('repeat.json')]
        _, first, _ = _run(argv)
        _, second, _ = _run(argv)
        first.pop('generated_at')
        second.pop('generated_at')
        self.assertDictEqual(first, second)

    def test_non_convergence_exit_code(self):
        """ Tests exit code 2 on capped solves, and 0 when they are allowed."""
        argv = ['fit', '--data', self.train, '--lambda', '0.01', '--max-outer', '1',
                '--max-inner', '1', '--eps', '1e-15', '--kkt-tol', '1e-15', '--model-out',
                self._path('capped.json')]
        code, _, _ = _run(argv)
        self.assertEqual(code, cli.EXIT_NUMERICAL)
        code, document, _ = _run(argv + ['--allow-nonconverged'])
        self.assertEqual(code, cli.EXIT_OK)
        self.assertFalse(all(document['result']['model']['converged']))

    def test_theory_report(self):
        """ Tests the bounds from an explicit eigenvector and the correlation check."""
        code, document, _ = _run(['theory-report', '--l', '0.5,0.6', '--lambda', '0.5',
                                  '--delta', '1,1,0,0', '--rho', '0.5'])
        self.assertEqual(code, cli.EXIT_OK)
        report = document['result']['report']
        self.assertEqual(report['m_prime'], 1)
        self.assertEqual(report['min_support'], 2)
        correlation = document['result']['correlation']
        self.assertAlmostEqual(correlation['threshold'], 1 / 3)
        self.assertTrue(correlation['benefit'])

    def test_theory_report_from_data(self):
        """ Tests the bounds computed from a two-group data file."""
        code, document, _ = _run(['theory-report', '--data', self.train, '--lambda', '0.0'])
        self.assertEqual(code, cli.EXIT_OK)
        self.assertEqual(document['result']['report']['m_lambda'], 1)

    def test_path(self):
        """ Tests the path table, its CSV and its plot."""
        out_csv, plot = self._path('path.csv'), self._path('path.png')
        code, document, _ = _run(['path', '--data', self.train, '--grid-size', '15',
                                  '--out-csv', out_csv, '--plot', plot])
        self.assertEqual(code, cli.EXIT_OK)
        self.assertEqual(len(document['result']['rows']), 15)
        self.assertListEqual(list(pd.read_csv(out_csv).columns), ['lambda', 'support_size'])
        self.assertTrue(os.path.isfile(plot))
        self.assertIn('m_prime', document['result'])

    def test_bench(self):
        """ Tests that a small benchmark writes one summary row per method."""
        out = self._path('bench.csv')
        code, document, _ = _run(['bench', '--scenario', 'diagonal', '--p', '20', '--r', '4',
                                  '--n-train', '12', '--n-test', '10', '--replicates', '2',
                                  '--folds', '3', '--grid-size', '4', '--threads', '1',
                                  '--out', out])
        self.assertEqual(code, cli.EXIT_OK)
        summary = pd.read_csv(out)
        self.assertListEqual(sorted(summary['method']), ['FLDA', 'FLDAdiag'])
        self.assertTrue((summary['replicates'] == 2).all())

    def test_text_format(self):
        """ Tests the aligned text rendering."""
        code, document, text = _run(['theory-report', '--l', '0.5,0.6', '--lambda', '0.5',
                                     '--format', 'text'])
        self.assertEqual(code, cli.EXIT_OK)
        self.assertIsNone(document)
        self.assertIn('generated_at', text)
        self.assertIn('min_support', text)

    def test_incomplete_documents(self):
        """ Tests exit code 1 for a model lacking its vectors and a truth file lacking its
        column."""
        model_path = self._path('complete_model.json')
        code, _, _ = _run(['fit', '--data', self.train, '--lambda', '0.1', '--model-out',
                           model_path])
        self.assertEqual(code, cli.EXIT_OK)
        with open(model_path) as file:
            document = json.load(file)
        del document['vectors']
        broken_model = self._path('model_without_vectors.json')
        with open(broken_model, 'w') as file:
            json.dump(document, file)
        code, _, _ = _run(['predict', '--model', broken_model, '--data', self.test])
        self.assertEqual(code, cli.EXIT_INVALID)

        broken_truth = self._path('truth_without_column.csv')
        pd.DataFrame({'index': [0, 1]}).to_csv(broken_truth, index=False)
        code, _, _ = _run(['evaluate', '--model', model_path, '--data', self.test,
                           '--truth', broken_truth])
        self.assertEqual(code, cli.EXIT_INVALID)
        code, _, _ = _run(['evaluate', '--model', model_path, '--data', self.test,
                           '--truth', self.truth])
        self.assertEqual(code, cli.EXIT_OK)

    def test_invalid_input(self):
        """ Tests exit code 1 on bad usage, missing files and invalid values."""
        invalid = [
            ['no-such-command'],
            ['fit', '--data', self.train],
            ['fit', '--data', self._path('missing.csv'), '--model-out', self._path('m.json')],
            ['fit', '--data', self.train, '--tau', '2', '--model-out', self._path('m.json')],
            ['theory-report'],
            ['theory-report', '--delta', '1,1,0'],
            ['simulate', '--scenario', 'diagonal', '--p', '10', '--r', '2', '--n-test', '1',
             '--out-dir', self._path('one_test_sample')],
            ['evaluate', '--model', self._path('missing.json'), '--data', self.test],
            ['fit', '--data', self.train, '--config',
             os.path.join(CONST.PATH_TO_TEST_CONFIGS, 'configs_with_extra_key.yml'),
             '--model-out', self._path('m.json')],
        ]
        for argv in invalid:
            code, _, _ = _run(argv)
            self.assertEqual(code, cli.EXIT_INVALID, msg=' '.join(argv))


if __name__ == '__main__':
    unittest.main()
