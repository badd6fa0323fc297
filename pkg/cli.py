#!/usr/bin/env python3
"""
Command-line front end: explain single inputs, run the robustness benchmark,
verify the exhaustive explainer on grids, emit the antipodal counterexample,
train models and sweep hyperparameters.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from classifiers import AnalyticClassifier, Classifier, cfd_analytic
from config import Config
from data_processor import (
    SYNTHETIC_KINDS, Dataset, SplitSpec, load_dataset, prepare_splits, scaler_from_bounds,
    synthetic_classifier, synthetic_dataset, train_test_split,
)
from explainer import CandidateSource, ExplainerConfig, Step2Mode, Step3Mode, explain
from geometry import DistanceMetric, MetricKind
from metrics import hyperparameter_sweep, robustness_protocol
from mlp_model import MlpTrainer
from model_storage import ModelStorage
from verification import SCENARIOS, VerificationConfig, antipodal_demo, scenario_grid, verify_theory

logger = logging.getLogger(__name__)

DEMO_GAMMA = 0.001


class Workspace:
    """Dataset splits and the classifier a subcommand operates on."""

    def __init__(self, train: Dataset, test: Dataset, classifier: Classifier, name: str):
        self.train = train
        self.test = test
        self.classifier = classifier
        self.name = name

    def evaluation_inputs(self, count: Optional[int], seed: int) -> np.ndarray:
        """Seeded rows of the test split, in split order."""
        return self.test.features[_select_inputs(self.test, Config.N_INPUTS if count is None else count, seed)]

    def tuning_inputs(self, count: Optional[int], seed: int) -> np.ndarray:
        """Seeded rows of the train split; never overlaps the evaluation inputs."""
        count = Config.N_TUNING_INPUTS if count is None else count
        return self.train.features[_select_inputs(self.train, count, seed)]


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def _mode_list(text: str) -> List[Step3Mode]:
    try:
        return [Step3Mode(m.strip()) for m in text.split(',') if m.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated step-3 modes, got '{text}'")


def _non_negative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    data = argparse.ArgumentParser(add_help=False)
    data.add_argument('--dataset', type=str, help='CSV file: header row, numeric features, last column label in {0,1}')
    data.add_argument('--synthetic', choices=SYNTHETIC_KINDS, help='use a synthetic dataset instead of --dataset')
    data.add_argument('--n', type=int, default=500, help='synthetic dataset size')
    data.add_argument('--model', type=str, help='weights JSON written by the train subcommand')
    data.add_argument('--classifier', choices=['analytic', 'mlp'], default=None,
                      help='synthetic data only: label with the generating geometry or train an MLP')
    data.add_argument('--test-size', type=float, default=Config.TEST_SIZE)
    data.add_argument('--seed', type=int, default=0, help='single source of all randomness')

    pipeline = argparse.ArgumentParser(add_help=False)
    pipeline.add_argument('--metric', choices=[k.value for k in MetricKind], default=MetricKind.EUCLIDEAN.value)
    pipeline.add_argument('--weights', type=_float_list, help='comma-separated per-feature metric weights')
    pipeline.add_argument('--step2', choices=[m.value for m in Step2Mode], default=Step2Mode.NUMBER.value)
    pipeline.add_argument('--alpha', type=float, help='step-2 cutoff (default: 50 below 1000 rows, else 1000)')
    pipeline.add_argument('--step3', choices=[m.value for m in Step3Mode], default=Step3Mode.ANGLE.value)
    pipeline.add_argument('--beta', type=float, default=Config.BETA)
    pipeline.add_argument('--gamma', type=_positive_float, default=None)
    pipeline.add_argument('--eps', type=float, default=0.0, help='tolerance for safety margins')
    pipeline.add_argument('--max-cf', type=int, default=Config.MAX_COUNTERFACTUALS)
    pipeline.add_argument('--no-minimise', action='store_true', help='skip the bisection step')
    pipeline.add_argument('--candidate-source', choices=[s.value for s in CandidateSource],
                          default=CandidateSource.PREDICTION.value)

    protocol = argparse.ArgumentParser(add_help=False)
    protocol.add_argument('--sigma', type=_positive_float, default=Config.SIGMA)
    protocol.add_argument('--reps', type=_non_negative_int, default=Config.REPETITIONS)
    protocol.add_argument('--inputs', type=_non_negative_int,
                          help='inputs to explain (default: 20 test rows for evaluate, 50 train rows for sweep)')

    output = argparse.ArgumentParser(add_help=False)
    output.add_argument('--out', type=str, help='output path (default: standard output)')
    output.add_argument('--format', choices=['json', 'csv'], default='json')
    output.add_argument('--timings', action='store_true', help='include wall-clock times (outputs stop being reproducible)')

    parser = argparse.ArgumentParser(prog='robustcf', description='Robust counterfactual explanations.')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('explain', parents=[data, pipeline, output], help='explain one test input')
    p.add_argument('--input-index', type=_non_negative_int, default=0, help='row of the test split')

    sub.add_parser('evaluate', parents=[data, pipeline, protocol, output],
                   help='robustness protocol: our pipeline vs the singleton-nearest baseline')

    p = sub.add_parser('verify', parents=[output], help='check the robustness theorems on a grid')
    p.add_argument('--scenario', choices=SCENARIOS, default='halfspace')
    p.add_argument('--grid', type=int, default=21, help='points per axis')
    p.add_argument('--eps', type=float, default=0.2)
    p.add_argument('--k', type=_positive_float, default=1.0, help='robustness constant to compare against')
    p.add_argument('--pairs', type=int, default=2000, help='pair budget for the empirical constant')
    p.add_argument('--metric', choices=[k.value for k in MetricKind], default=MetricKind.EUCLIDEAN.value)
    p.add_argument('--seed', type=int, default=0)

    p = sub.add_parser('demo', parents=[pipeline, output], help='antipodal inputs on a ball classifier')
    p.add_argument('--r', type=_positive_float, default=1.0, help='ball radius')
    p.add_argument('--gap', type=_positive_float, default=0.01, help='distance between the two inputs')
    p.add_argument('--points', type=int, default=2000, help='size of the sampled dataset')
    p.add_argument('--seed', type=int, default=0)

    p = sub.add_parser('sweep', parents=[data, pipeline, protocol, output],
                       help='robustness protocol over step-3 modes, beta and gamma')
    p.add_argument('--betas', type=_float_list, default=[0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
    p.add_argument('--gammas', type=_float_list, default=[0.1, 0.01, 0.001])
    p.add_argument('--modes', type=_mode_list,
                   default=[Step3Mode.ANGLE, Step3Mode.DISTANCE], help='comma-separated step-3 modes')

    p = sub.add_parser('train', parents=[data, output], help='train the 20-10 MLP and write its weights')
    p.add_argument('--epochs', type=int, default=Config.EPOCHS)
    p.add_argument('--batch-size', type=int, default=Config.BATCH_SIZE)
    return parser


def explainer_config(args: argparse.Namespace, default_gamma: float = Config.GAMMA) -> ExplainerConfig:
    metric = DistanceMetric.from_name(args.metric, args.weights)
    return ExplainerConfig(
        metric=metric,
        step2=Step2Mode(args.step2),
        alpha=args.alpha,
        step3=Step3Mode(args.step3),
        beta=args.beta,
        gamma=args.gamma if args.gamma is not None else default_gamma,
        eps=args.eps,
        max_counterfactuals=args.max_cf,
        minimise=not args.no_minimise,
        candidate_source=CandidateSource(args.candidate_source),
    )


def load_workspace(args: argparse.Namespace) -> Workspace:
    """Resolve the dataset splits and the classifier from the data flags."""
    split = SplitSpec(test_fraction=args.test_size, seed=args.seed)
    if (args.dataset is None) == (args.synthetic is None):
        raise ValueError("Give exactly one of --dataset or --synthetic")

    if args.synthetic is not None:
        train, test = train_test_split(synthetic_dataset(args.synthetic, args.n, args.seed), split)
        name = args.synthetic
        if args.model is not None:
            model, _ = ModelStorage(args.model).load_model()
            return Workspace(train, test, model, name)
        if args.classifier == 'mlp':
            trainer = MlpTrainer(seed=args.seed)
            trainer.train_model(train, test)
            return Workspace(train, test, trainer.model, name)
        return Workspace(train, test, synthetic_classifier(args.synthetic), name)

    raw = load_dataset(args.dataset)
    name = Path(args.dataset).stem
    if args.model is not None:
        model, meta = ModelStorage(args.model).load_model()
        if model.n_features != raw.n_features:
            raise ValueError(f"Model expects {model.n_features} features, dataset has {raw.n_features}")
        if meta.get('scaler'):
            scaler = scaler_from_bounds(meta['scaler']['min'], meta['scaler']['max'])
            scaled = Dataset(raw.feature_names, scaler.transform(raw.features), raw.labels,
                             scaler=scaler, provenance=raw.provenance)
            train, test = train_test_split(scaled, split)
        else:
            train, test = prepare_splits(raw, split)
        return Workspace(train, test, model, name)

    train, test = prepare_splits(raw, split)
    trainer = MlpTrainer(seed=args.seed)
    trainer.train_model(train, test)
    return Workspace(train, test, trainer.model, name)


def _emit(text: str, out: Optional[str]):
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding='utf-8')


def _dumps(payload: Dict[str, Any]) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + '\n'


def _select_inputs(rows: Dataset, count: int, seed: int) -> np.ndarray:
    count = min(count, len(rows))
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(len(rows), size=count, replace=False))


def cmd_explain(args: argparse.Namespace) -> int:
    config = explainer_config(args)
    ws = load_workspace(args)
    if args.input_index >= len(ws.test):
        raise ValueError(f"--input-index {args.input_index} out of range for a test split of {len(ws.test)} rows")
    x = ws.test.features[args.input_index]

    cfd_value = None
    classifier = ws.classifier
    if isinstance(classifier, AnalyticClassifier) and classifier.metric.kind == config.metric.kind \
            and config.metric.weights is None:
        cfd_value = cfd_analytic(classifier, x)

    result = explain(classifier, ws.train, x, config, cfd_value=cfd_value)
    body = result.to_dict(include_timings=args.timings)
    if ws.train.is_scaled and len(result):
        raw = ws.train.unscale(result.points)
        for item, row in zip(body['counterfactuals'], raw):
            item['raw_point'] = [float(v) for v in row]
        body['raw_reference'] = [float(v) for v in ws.train.unscale(x)[0]]

    if args.format == 'csv':
        lines = ['rank,distance,safety_margin,' + ','.join(ws.train.feature_names)]
        for rank, item in enumerate(result.items):
            margin = '' if item.safety_margin is None else repr(item.safety_margin)
            lines.append(f"{rank},{item.distance!r},{margin}," + ','.join(repr(float(v)) for v in item.point))
        _emit('\n'.join(lines) + '\n', args.out)
    else:
        _emit(_dumps({
            'schema_version': Config.SCHEMA_VERSION,
            'dataset': ws.name,
            'feature_names': ws.train.feature_names,
            'input_index': args.input_index,
            'config': config.to_dict(),
            'cfd': cfd_value,
            'explanation': body,
        }), args.out)
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = explainer_config(args)
    ws = load_workspace(args)
    inputs = ws.evaluation_inputs(args.inputs, args.seed)
    report = robustness_protocol(ws.classifier, ws.train, inputs, config,
                                 sigma=args.sigma, repetitions=args.reps, seed=args.seed, dataset_name=ws.name)

    prefix = Path(args.out) if args.out else Path('robustness_report')
    json_path = report.write_json(prefix.with_suffix('.json'), include_timings=args.timings)
    csv_path = report.write_csv(prefix.with_suffix('.csv'), include_timings=args.timings)
    summary = {
        'json': str(json_path),
        'csv': str(csv_path),
        'trials': len(report.records),
        'failures': len(report.failures),
        'win_rate_l2_set_distance_max': report.win_rate('robust_set', 'singleton_nearest'),
    }
    sys.stdout.write(_dumps(summary))
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    config = VerificationConfig(eps=args.eps, k=args.k, grid_size=args.grid, pair_budget=args.pairs,
                                seed=args.seed, metric=DistanceMetric.from_name(args.metric))
    grid = scenario_grid(args.scenario, args.grid)
    report = verify_theory(grid, config)
    details = {'scenario': args.scenario, 'grid': args.grid, **report.to_dict()}
    if args.out:
        _emit(_dumps(details), args.out)
    sys.stdout.write(f"violations: {report.violations}\n")
    for name in ('lipschitz', 'weak_robustness', 'safety'):
        sys.stdout.write(f"  {name}: {details[name]['violations']} of {details[name]['checked']} checked\n")
    return 0 if report.passed else 1


def cmd_demo(args: argparse.Namespace) -> int:
    config = explainer_config(args, default_gamma=DEMO_GAMMA)
    points, summary = antipodal_demo(radius=args.r, gap=args.gap, gamma=config.gamma,
                                     n_points=args.points, seed=args.seed, config=config)
    out = args.out or 'antipodal_demo.csv'
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    points.to_csv(path, index=False, float_format='%.17g')
    sys.stdout.write(_dumps({'points_csv': str(path), **summary}))
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    config = explainer_config(args)
    ws = load_workspace(args)
    # tuning inputs come from the train split
    inputs = ws.tuning_inputs(args.inputs, args.seed)
    table = hyperparameter_sweep(ws.classifier, ws.train, inputs, config,
                                 betas=args.betas, gammas=args.gammas, modes=args.modes, sigma=args.sigma,
                                 repetitions=args.reps, seed=args.seed, dataset_name=ws.name)
    out = Path(args.out or 'sweep.csv')
    out.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(out, index=False, float_format='%.10g')
    sys.stdout.write(_dumps({'csv': str(out), 'rows': len(table)}))
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    split = SplitSpec(test_fraction=args.test_size, seed=args.seed)
    if (args.dataset is None) == (args.synthetic is None):
        raise ValueError("Give exactly one of --dataset or --synthetic")
    if args.synthetic is not None:
        train, test = train_test_split(synthetic_dataset(args.synthetic, args.n, args.seed), split)
    else:
        train, test = prepare_splits(load_dataset(args.dataset), split)

    trainer = MlpTrainer(seed=args.seed, epochs=args.epochs, batch_size=args.batch_size)
    metrics = trainer.train_model(train, test)
    out = args.out or 'model.json'
    ModelStorage(out).save_model(trainer.model, feature_names=train.feature_names,
                                 scaler_min=train.scaler_min, scaler_max=train.scaler_max, metrics=metrics)
    sys.stdout.write(_dumps({'model': out, **metrics}))
    return 0


COMMANDS = {
    'explain': cmd_explain,
    'evaluate': cmd_evaluate,
    'verify': cmd_verify,
    'demo': cmd_demo,
    'sweep': cmd_sweep,
    'train': cmd_train,
}


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv`` and run the subcommand; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    # flags are validated before any computation
    try:
        if hasattr(args, 'step2'):
            explainer_config(args)
    except ValueError as e:
        try:
            parser.error(str(e))
        except SystemExit as exit_:
            return int(exit_.code)

    try:
        return COMMANDS[args.command](args)
    except (ValueError, FileNotFoundError, RuntimeError) as e:
        logger.error(f"{args.command} failed: {e}")
        sys.stderr.write(f"error: {e}\n")
        return 1
