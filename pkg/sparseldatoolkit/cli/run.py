import os
import sys
import json
import logging
import argparse
import datetime
from dataclasses import replace

import numpy as np
import pandas as pd
import yaml

import sparseldatoolkit
from sparseldatoolkit.configs.config_reader import ConfigReader
from sparseldatoolkit.data.dataset import Dataset, load_dataset, read_feature_matrix, \
    save_dataset
from sparseldatoolkit.data.discriminant_model import save_model, load_model
from sparseldatoolkit.data_analysis.replicate_study import run_replicate_study
from sparseldatoolkit.normalizing.normalizer import center
from sparseldatoolkit.pipeline.cross_validation import cross_validate
from sparseldatoolkit.pipeline.model_fitting import FitConfig, fit, predict, evaluate
from sparseldatoolkit.scatter.scatter import compute_scatter
from sparseldatoolkit.shrinkage.shrinkage import shrunken_within
from sparseldatoolkit.simulate.simulator import ScenarioSpec, STRUCTURES, sample_scenario, \
    read_scenario_spec
from sparseldatoolkit.solver.solver import initial_vector, lambda_max
from sparseldatoolkit.theory import theory
from sparseldatoolkit.utils.errors import NonConvergenceError, ValidationError
from sparseldatoolkit.utils.parallel_utils import resolve_threads
from sparseldatoolkit.visualizations.path_visualizer import PathVisualizer

logger = logging.getLogger(__name__)

'''
    The `sparselda` command. Every subcommand prints one JSON document on stdout (or an aligned
    text rendering of it with `--format text`) whose first field, `generated_at`, is the only
    part that changes between identical runs. Logs go to stderr.

    Exit codes: 0 on success, 1 on invalid input or usage, 2 on a solve that did not converge
    (unless `--allow-nonconverged` is given).
'''

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERICAL = 2

TRUTH_FILE = 'truth_support.csv'

# command-line destinations that overwrite a configuration entry when given
_flag_to_config = {
    'lam': ('SOLVER', 'lambda'),
    'eps': ('SOLVER', 'eps'),
    'max_outer': ('SOLVER', 'max_outer'),
    'max_inner': ('SOLVER', 'max_inner'),
    'solver_seed': ('SOLVER', 'seed'),
    'diagonal': ('SOLVER', 'diagonal_mode'),
    'kkt_tol': ('SOLVER', 'kkt_tol'),
    'compare_zero': ('SOLVER', 'compare_zero'),
    'tau': ('SHRINKAGE', 'tau_override'),
    'p_dense': ('SHRINKAGE', 'p_dense'),
    'folds': ('CV', 'folds'),
    'grid_size': ('CV', 'grid_size'),
    'cv_seed': ('CV', 'seed'),
    'cv_rule': ('CV', 'rule'),
    'cluster': ('CLUSTERING', 'enabled'),
    'k': ('CLUSTERING', 'k'),
    'restarts': ('CLUSTERING', 'restarts'),
    'cluster_seed': ('CLUSTERING', 'seed'),
    'strategy': ('FIT', 'strategy'),
    'n_vectors': ('FIT', 'n_vectors'),
    'eliminate': ('FIT', 'eliminate'),
    'standardize': ('FIT', 'standardize'),
    'allow_nonconverged': ('FIT', 'allow_nonconverged'),
    'scenario': ('SIMULATION', 'structure'),
    'p': ('SIMULATION', 'p'),
    'r': ('SIMULATION', 'r'),
    'n_train': ('SIMULATION', 'n_train'),
    'n_test': ('SIMULATION', 'n_test'),
    'scenario_seed': ('SIMULATION', 'seed'),
    'rho': ('SIMULATION', 'rho'),
    'covariance': ('SIMULATION', 'covariance_path'),
    'n_blocks': ('SIMULATION', 'n_blocks'),
    'n_cross_pairs': ('SIMULATION', 'n_cross_pairs'),
    'replicates': ('SIMULATION', 'replicates'),
}


class UsageError(Exception):
    """ The command line could not be parsed."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ------------------------------------------------------------
# Argument parsing
# ------------------------------------------------------------
def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', default=None, help='YAML configuration file')
    common.add_argument('--log-level', default='WARNING',
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    common.add_argument('--format', default='json', choices=['json', 'text'],
                        help='Rendering of the result document')
    common.add_argument('--threads', type=int, default=None,
                        help='Cap on worker processes (env SPARSE_FLDA_THREADS)')
    common.add_argument('--allow-nonconverged', action='store_const', const=True, default=None,
                        help='Do not fail on solves that hit their iteration caps')
    return common


def _add_data_args(parser, required: bool = True):
    parser.add_argument('--data', required=required, help='CSV file, one row per sample')
    parser.add_argument('--label-column', default='label')


def _add_solver_args(parser):
    parser.add_argument('--eps', type=float, default=None)
    parser.add_argument('--max-outer', type=int, default=None)
    parser.add_argument('--max-inner', type=int, default=None)
    parser.add_argument('--seed', dest='solver_seed', type=int, default=None,
                        help='Seed of the coordinate sweep order')
    parser.add_argument('--diagonal', action='store_const', const=True, default=None,
                        help='Use diag(W) instead of the shrunken within-group matrix')
    parser.add_argument('--kkt-tol', type=float, default=None)
    parser.add_argument('--no-compare-zero', dest='compare_zero', action='store_const',
                        const=False, default=None)
    parser.add_argument('--tau', default=None, help="'auto' or a value in [0, 1]")
    parser.add_argument('--p-dense', type=int, default=None)


def _add_model_args(parser):
    parser.add_argument('--n-vectors', type=int, default=None)
    parser.add_argument('--strategy', default=None,
                        choices=['all-groups-sequential', 'merge-sequential'])
    parser.add_argument('--no-eliminate', dest='eliminate', action='store_const', const=False,
                        default=None, help='Keep selected features for later vectors')
    parser.add_argument('--standardize', action='store_const', const=True, default=None)
    parser.add_argument('--cluster', action='store_const', const=True, default=None,
                        help='Fit on cluster averages of the features')
    parser.add_argument('--k', type=int, default=None, help='Number of feature clusters')
    parser.add_argument('--restarts', type=int, default=None)
    parser.add_argument('--cluster-seed', type=int, default=None)


def _add_cv_args(parser):
    parser.add_argument('--folds', type=int, default=None)
    parser.add_argument('--grid-size', type=int, default=None)
    parser.add_argument('--cv-seed', type=int, default=None)
    parser.add_argument('--cv-rule', default=None, choices=['1se', 'min'])


def _add_scenario_args(parser):
    parser.add_argument('--scenario', default=None, choices=list(STRUCTURES))
    parser.add_argument('--scenario-file', default=None, help='YAML scenario specification')
    parser.add_argument('--p', type=int, default=None)
    parser.add_argument('--r', type=int, default=None)
    parser.add_argument('--n-train', type=int, default=None)
    parser.add_argument('--n-test', type=int, default=None)
    parser.add_argument('--seed', dest='scenario_seed', type=int, default=None)
    parser.add_argument('--rho', type=float, default=None)
    parser.add_argument('--covariance', default=None, help='Headerless CSV covariance matrix')
    parser.add_argument('--n-blocks', type=int, default=None)
    parser.add_argument('--n-cross-pairs', type=int, default=None)


def _float_list(text: str) -> list:
    try:
        return [float(x) for x in text.split(',') if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError('expected comma-separated numbers, got {!r}'
                                         .format(text))


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = _Parser(prog='sparselda', description='Sparse Fisher discriminant analysis with '
                                                   'shrunken within-group covariance.')
    parser.add_argument('--version', action='version',
                        version='%(prog)s {}'.format(sparseldatoolkit.__version__))
    sub = parser.add_subparsers(dest='command', parser_class=_Parser)
    sub.required = True

    p = sub.add_parser('simulate', parents=[common], help='Write a synthetic scenario')
    _add_scenario_args(p)
    p.add_argument('--replicate', type=int, default=0)
    p.add_argument('--out-dir', required=True)

    p = sub.add_parser('fit', parents=[common], help='Fit a model')
    _add_data_args(p)
    _add_solver_args(p)
    _add_model_args(p)
    _add_cv_args(p)
    choice = p.add_mutually_exclusive_group()
    choice.add_argument('--lambda', dest='lam', type=float, default=None)
    choice.add_argument('--cv', action='store_true', help='Choose lambda by cross-validation')
    p.add_argument('--model-out', required=True)

    p = sub.add_parser('cv', parents=[common], help='Cross-validate lambda')
    _add_data_args(p)
    _add_solver_args(p)
    _add_model_args(p)
    _add_cv_args(p)
    p.add_argument('--grid', type=_float_list, default=None, help='Explicit lambda values')
    p.add_argument('--out-csv', default=None, help='Write the CV table here')

    p = sub.add_parser('predict', parents=[common], help='Classify new samples')
    p.add_argument('--model', required=True)
    _add_data_args(p)
    p.add_argument('--out', default=None, help='Write predictions and scores here (CSV)')

    p = sub.add_parser('evaluate', parents=[common], help='Test-set metrics')
    p.add_argument('--model', required=True)
    _add_data_args(p)
    p.add_argument('--truth', default=None, help='Truth-support file written by simulate')

    p = sub.add_parser('theory-report', parents=[common], help='Sparsity bounds')
    _add_data_args(p, required=False)
    p.add_argument('--l', type=_float_list, default=None, help='Eigenvector of B')
    p.add_argument('--gamma', type=float, default=1.0)
    p.add_argument('--lambda', dest='lam', type=float, default=None)
    p.add_argument('--delta', type=_float_list, default=None,
                   help='Standardized mean differences, for the correlation check')
    p.add_argument('--rho', type=float, default=None)

    p = sub.add_parser('path', parents=[common], help='Support size along a lambda path')
    _add_data_args(p)
    _add_solver_args(p)
    p.add_argument('--grid-size', type=int, default=200)
    p.add_argument('--warm-start', action='store_true')
    p.add_argument('--out-csv', default=None)
    p.add_argument('--plot', default=None, help='Write the support path as a PNG')

    p = sub.add_parser('bench', parents=[common], help='Replicate study of both methods')
    _add_scenario_args(p)
    _add_cv_args(p)
    p.add_argument('--replicates', type=int, default=None)
    p.add_argument('--out', required=True, help='Summary CSV')
    return parser


# ------------------------------------------------------------
# Settings
# ------------------------------------------------------------
def effective_configs(args: argparse.Namespace) -> dict:
    """ Defaults, updated by `--config`, updated by the flags that were given."""
    configs = ConfigReader(args.config).read()
    for dest, (section, key) in _flag_to_config.items():
        value = getattr(args, dest, None)
        if value is not None:
            configs[section][key] = value
    return configs


def scenario_from(args: argparse.Namespace, configs: dict) -> ScenarioSpec:
    if getattr(args, 'scenario_file', None):
        spec = read_scenario_spec(args.scenario_file)
        overrides = {}
        for dest, field in [('scenario', 'structure'), ('p', 'p'), ('r', 'r'),
                            ('n_train', 'n_train'), ('n_test', 'n_test'),
                            ('scenario_seed', 'seed'), ('rho', 'rho'),
                            ('covariance', 'covariance_path'), ('n_blocks', 'n_blocks'),
                            ('n_cross_pairs', 'n_cross_pairs')]:
            if getattr(args, dest, None) is not None:
                overrides[field] = getattr(args, dest)
        return replace(spec, **overrides)
    sim = configs['SIMULATION']
    return ScenarioSpec(p=int(sim['p']), n_train=int(sim['n_train']), n_test=int(sim['n_test']),
                        r=int(sim['r']), structure=sim['structure'], seed=int(sim['seed']),
                        covariance_path=sim['covariance_path'], rho=float(sim['rho']),
                        n_blocks=sim['n_blocks'], n_cross_pairs=sim['n_cross_pairs'])


def _check_converged(converged: bool, configs: dict, what: str):
    if converged:
        return
    if configs['FIT']['allow_nonconverged']:
        logger.warning('%s did not converge; continuing because non-converged results are '
                       'allowed', what)
        return
    raise NonConvergenceError(
        '''
        {} did not converge within the iteration caps. Raise --max-outer/--max-inner, loosen
        --eps, or pass --allow-nonconverged to accept the result.
        '''.format(what))


# ------------------------------------------------------------
# Subcommands
# ------------------------------------------------------------
def _simulate(args, configs) -> dict:
    spec = scenario_from(args, configs)
    train, test, truth = sample_scenario(spec, args.replicate)
    os.makedirs(args.out_dir, exist_ok=True)
    paths = {'train': os.path.join(args.out_dir, 'train.csv'),
             'test': os.path.join(args.out_dir, 'test.csv'),
             'truth': os.path.join(args.out_dir, TRUTH_FILE),
             'scenario': os.path.join(args.out_dir, 'scenario.yml')}
    save_dataset(train, paths['train'])
    save_dataset(test, paths['test'])
    pd.DataFrame({'feature_index': truth,
                  'feature_name': [train.feature_names[j] for j in truth]}) \
        .to_csv(paths['truth'], index=False)
    with open(paths['scenario'], 'w') as file:
        yaml.safe_dump(spec.to_dict(), file, sort_keys=False)
    return {'scenario': spec.to_dict(), 'replicate': args.replicate, 'files': paths,
            'n_train': train.n, 'n_test': test.n}


def _fit_inputs(args, configs):
    data = load_dataset(args.data, args.label_column)
    return data, FitConfig.from_configs(configs)


def _run_cv(data, config, args, configs, grid=None):
    cv = configs['CV']
    return cross_validate(data, config, folds=int(cv['folds']), grid_size=int(cv['grid_size']),
                          seed=int(cv['seed']), rule=cv['rule'], grid=grid,
                          n_vectors=configs['FIT']['n_vectors'],
                          use_clustering=bool(configs['CLUSTERING']['enabled']),
                          threads=resolve_threads(args.threads))


def _model_summary(model) -> dict:
    summary = {'n_vectors': model.d, 'lambda': list(model.lambdas),
               'support_sizes': [len(s) for s in model.supports],
               'features': int(model.selected_features.size),
               'supports': [[model.feature_names[j] for j in s] for s in model.supports],
               'converged': list(model.converged), 'tau': list(model.tau),
               'strategy': model.strategy, 'zero_model': model.is_zero}
    if model.cluster_supports:
        summary['cluster_supports'] = [list(c) for c in model.cluster_supports]
    return summary


def _fit(args, configs) -> dict:
    data, config = _fit_inputs(args, configs)
    result = {}
    if args.cv:
        cv_result = _run_cv(data, config, args, configs)
        config = config.with_lambda(cv_result.chosen_lambda)
        configs['SOLVER']['lambda'] = cv_result.chosen_lambda
        result['cv'] = cv_result.to_dict()
    model = fit(data, config, configs['FIT']['n_vectors'],
                bool(configs['CLUSTERING']['enabled']))
    _check_converged(model.all_converged, configs, 'the fit')
    save_model(model, args.model_out)
    result['model'] = _model_summary(model)
    result['model_path'] = args.model_out
    return result


def _cv(args, configs) -> dict:
    data, config = _fit_inputs(args, configs)
    cv_result = _run_cv(data, config, args, configs, grid=args.grid)
    if args.out_csv:
        cv_result.to_frame().to_csv(args.out_csv, index=False, float_format='%.10g')
    result = cv_result.to_dict()
    result['table'] = cv_result.to_frame()[['lambda', 'mean_error', 'se']] \
        .to_dict(orient='records')
    return result


def _predict(args, configs) -> dict:
    model = load_model(args.model)
    X, _ = read_feature_matrix(args.data, model.feature_names, args.label_column)
    labels, scores = predict(model, X)
    names = [model.label_names[i] for i in labels]
    if args.out:
        df = pd.DataFrame(scores, columns=['score_{}'.format(i + 1) for i in range(model.d)])
        df.insert(0, 'predicted', names)
        df.to_csv(args.out, index=False, float_format='%.17g')
    counts = pd.Series(names).value_counts()
    return {'n': int(X.shape[0]),
            'counts': {name: int(counts.get(name, 0)) for name in model.label_names},
            'output': args.out}


def _read_truth(path: str) -> np.ndarray:
    if not os.path.isfile(path):
        raise FileNotFoundError(
            '''
            The given truth-support file does NOT exist:
            \t{}
            '''.format(path))
    truth = pd.read_csv(path)
    if 'feature_index' not in truth.columns:
        raise ValidationError(
            '''
            The truth-support file needs a 'feature_index' column. Found:
            \t{}
            '''.format(list(truth.columns)))
    return truth['feature_index'].to_numpy(dtype=int)


def _evaluate(args, configs) -> dict:
    model = load_model(args.model)
    X, raw_labels = read_feature_matrix(args.data, model.feature_names, args.label_column)
    if raw_labels is None:
        raise ValueError(
            '''
            The test file has no label column '{}'.
            '''.format(args.label_column))
    test = Dataset.from_arrays(X, raw_labels, model.feature_names)
    truth = _read_truth(args.truth) if args.truth else None
    return evaluate(model, test, truth)


def _theory_report(args, configs) -> dict:
    result = {}
    if args.delta is not None:
        if args.rho is None:
            raise ValueError(
                '''
                --delta needs --rho.
                ''')
        result['correlation'] = {'threshold': theory.cochran_threshold(args.delta),
                                 'rho': args.rho,
                                 'benefit': theory.correlation_benefit(args.delta, args.rho)}
    if args.l is not None or args.data is not None:
        if args.lam is None:
            raise ValueError(
                '''
                The bounds need --lambda.
                ''')
        if args.l is not None:
            report = theory.build_theory_report(args.gamma, np.asarray(args.l), args.lam)
        else:
            report = theory.theory_report_for_dataset(
                load_dataset(args.data, args.label_column), args.lam)
        result['report'] = report.to_dict()
    if not result:
        raise ValueError(
            '''
            Give --l or --data (with --lambda), or --delta with --rho.
            ''')
    return result


def _path(args, configs) -> dict:
    data, config = _fit_inputs(args, configs)
    centered = data.with_features(center(data.X))
    scatter = compute_scatter(centered)
    within = shrunken_within(scatter, config.tau_override, config.p_dense)
    base = within.diagonal_part() if config.solver.diagonal_mode else within
    lam_max = lambda_max(scatter, initial_vector(scatter, base))
    grid = np.linspace(lam_max / args.grid_size, lam_max, args.grid_size)
    table = theory.solution_path(scatter, within, grid, config.solver,
                                 warm_start=args.warm_start)
    _check_converged(all(row.converged for row in table.rows), configs, 'the path')
    if args.out_csv:
        table.to_csv(args.out_csv)
    result = table.to_dict()
    result['lambda_max'] = lam_max
    if data.g == 2:
        _, l, _, _ = theory.diagonal_reduction(centered)
        result['m_prime'] = theory.m_prime(theory.sort_by_magnitude(l)[0])
    if args.plot:
        floor = result['m_prime'] + 1 if 'm_prime' in result else None
        PathVisualizer(path_table=table).plot_support_path(floor, table.drop_lambda, args.plot)
        result['plot'] = args.plot
    return result


def _bench(args, configs) -> dict:
    spec = scenario_from(args, configs)
    cv = configs['CV']
    study = run_replicate_study(spec, int(configs['SIMULATION']['replicates']),
                                FitConfig.from_configs(configs), folds=int(cv['folds']),
                                grid_size=int(cv['grid_size']), cv_seed=int(cv['seed']),
                                rule=cv['rule'], n_jobs=resolve_threads(args.threads),
                                verbose=args.log_level in ('DEBUG', 'INFO'))
    out_dir, file_name = os.path.split(os.path.abspath(args.out))
    path = study.summary_to_csv(out_dir, file_name)
    return {'scenario': spec.to_dict(), 'summary': study.summary.to_dict(orient='records'),
            'output': path}


_commands = {'simulate': _simulate, 'fit': _fit, 'cv': _cv, 'predict': _predict,
             'evaluate': _evaluate, 'theory-report': _theory_report, 'path': _path,
             'bench': _bench}


# ------------------------------------------------------------
# Output
# ------------------------------------------------------------
def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    raise TypeError('{} is not JSON serializable'.format(type(value).__name__))


def _render_text(document: dict, indent: int = 0) -> str:
    lines = []
    width = max((len(str(k)) for k in document), default=0)
    pad = ' ' * indent
    for key, value in document.items():
        if isinstance(value, dict):
            lines.append('{}{}:'.format(pad, key))
            lines.append(_render_text(value, indent + 2))
        elif isinstance(value, list) and value and all(isinstance(v, dict) for v in value):
            lines.append('{}{}:'.format(pad, key))
            table = pd.DataFrame(value).to_string(index=False)
            lines.extend(pad + '  ' + row for row in table.splitlines())
        else:
            lines.append('{}{}  {}'.format(pad, str(key).ljust(width), value))
    return '\n'.join(lines)


def _reproducibility(args, configs) -> dict:
    flags = {k: v for k, v in vars(args).items() if k not in ('format', 'log_level')}
    return {'command': args.command, 'version': sparseldatoolkit.__version__,
            'arguments': flags, 'configs': configs}


def _configure_logging(level: str):
    logging.basicConfig(level=getattr(logging, level), stream=sys.stderr, force=True,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')


def run(argv=None) -> int:
    """
    Parses `argv`, runs the subcommand and prints its result document.

    :return: The exit code.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print('sparselda: error: {}'.format(e), file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_INVALID

    _configure_logging(args.log_level)
    try:
        configs = effective_configs(args)
        result = _commands[args.command](args, configs)
    except NonConvergenceError as e:
        logger.error(str(e).strip())
        return EXIT_NUMERICAL
    except (ValueError, AssertionError, FileNotFoundError) as e:
        logger.error(str(e).strip())
        return EXIT_INVALID

    document = {'generated_at': datetime.datetime.now(datetime.timezone.utc).isoformat(),
                'reproducibility': _reproducibility(args, configs),
                'result': result}
    if args.format == 'text':
        print(_render_text(document))
    else:
        print(json.dumps(document, indent=2, default=_jsonable))
    return EXIT_OK


def main():
    sys.exit(run(sys.argv[1:]))
