import argparse
import csv
import logging as log
import os
import sys
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .common import (AgeGraphError, CheckpointError, ConfigError, DataError,
                     NumericalError)
from .config import RunConfig, apply_overrides, load_config, write_config
from .dataset import (load_manifest, merge, samples, save_manifest, split,
                      synthetic_splits)
from .encoder import EncoderParams, encode
from .graph import ImageSample, apply_mask, dump_graph
from .params import init_params
from .training import (CS_LEVELS, AgeModel, TrainConfig, check_compatible,
                       compute_metrics, evaluate, forward_batch, load_checkpoint,
                       predict, run_training, save_checkpoint)
from .variants import VARIANTS
from .verify import TOLERANCE, gradient_suite, worst

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3

# (structural, neighbor, upper-bound) loss arms; the upper bound alone has nothing to bound
LOSS_ARMS = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0), (1, 0, 1), (0, 1, 1), (1, 1, 1)]
MASK_RATES = [round(0.1 * i, 1) for i in range(1, 10)]


def write_csv(path: str, header: Sequence[str], rows) -> str:
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        writer.writerows(rows)
    log.debug('wrote {}'.format(path))
    return path


def build_config(args) -> TrainConfig:
    cfg = load_config(args.config, TrainConfig) if args.config else TrainConfig()
    cfg = apply_overrides(cfg, args.set or [])
    if args.seed is not None:
        cfg = cfg._replace(seed=args.seed)
    if getattr(args, 'epochs', None) is not None:
        cfg = cfg._replace(epochs=args.epochs)
    cfg.validate()
    return cfg


def load_splits(args, cfg: TrainConfig, out_dir: Optional[str] = None):
    """
    (manifest, train, val, test) from `--synthetic N` or a labeled image
    directory. A directory dataset is split with cfg.split_fractions.
    """
    if args.synthetic is not None:
        manifests = synthetic_splits(args.synthetic, cfg.image_size, cfg.seed)
        manifest = merge(manifests)
    elif args.dataset and args.labels:
        manifest = split(load_manifest(args.labels[0], args.dataset[0], cfg.image_size), cfg.split_fractions, cfg.seed)
    else:
        raise ConfigError('a dataset is required: --synthetic N or --dataset DIR --labels CSV')
    if out_dir is not None:
        save_manifest(manifest, os.path.join(out_dir, 'manifest.json'))
    return (manifest, samples(manifest, 'train'), samples(manifest, 'val'), samples(manifest, 'test'))


def _train_arm(train, val, cfg) -> float:
    _, history = run_training(train, val, cfg)
    maes = [h.val_mae for h in history if not np.isnan(h.val_mae)]
    return min(maes) if maes else float('nan')


def cmd_train(args, run: RunConfig) -> int:
    cfg = build_config(args)
    write_config(cfg, run.out_dir)
    _, train, val, _ = load_splits(args, cfg, run.out_dir)

    ckpt, history = run_training(train, val, cfg)
    write_csv(os.path.join(run.out_dir, 'metrics.csv'),
              ['epoch', 'train_loss', 'val_mae', 'val_cs5'], history)
    save_checkpoint(os.path.join(run.out_dir, 'checkpoint.npz'), ckpt)
    print('best epoch {}: val MAE {:.3f}'.format(ckpt.epoch, history[ckpt.epoch - 1].val_mae))
    return EXIT_OK


def _checkpoint_model(args) -> Tuple[AgeModel, TrainConfig]:
    ckpt = load_checkpoint(args.checkpoint)
    cfg = ckpt.config
    if args.config or args.set:
        cfg = build_config(args)
        check_compatible(ckpt, cfg)
    elif args.seed is not None:
        cfg = cfg._replace(seed=args.seed)
    model = ckpt.to_model()
    return model._replace(config=cfg), cfg


def _eval_set(args, cfg) -> List[ImageSample]:
    if args.synthetic is not None:
        return samples(synthetic_splits(args.synthetic, cfg.image_size, cfg.seed)[2])
    if not (args.dataset and args.labels):
        raise ConfigError('a dataset is required: --synthetic N or --dataset DIR --labels CSV')
    return samples(load_manifest(args.labels[0], args.dataset[0], cfg.image_size))


def cmd_eval(args, run: RunConfig) -> int:
    model, cfg = _checkpoint_model(args)
    write_config(cfg, run.out_dir)
    metrics = evaluate(_eval_set(args, cfg), model)

    print(f'n    {metrics.per_sample_errors.size}')
    print(f'MAE  {metrics.mae:.3f}')
    for level in CS_LEVELS:
        print(f'CS({level:>2}) {metrics.cs[level]:.3f}')
    write_csv(os.path.join(run.out_dir, 'eval.csv'), ['n', 'mae', 'cs5'],
              [(metrics.per_sample_errors.size, metrics.mae, metrics.cs[5])])
    write_csv(os.path.join(run.out_dir, 'cs_curve.csv'), ['L', 'cs'],
              [(level, metrics.cs[level]) for level in CS_LEVELS])
    return EXIT_OK


def cmd_cross_eval(args, run: RunConfig) -> int:
    model, cfg = _checkpoint_model(args)
    if not args.dataset or len(args.dataset) != len(args.labels or []):
        raise ConfigError('cross-eval needs one --labels CSV per --dataset DIR')
    write_config(cfg, run.out_dir)
    rows = []
    for root, labels in zip(args.dataset, args.labels):
        metrics = evaluate(samples(load_manifest(labels, root, cfg.image_size)), model)
        rows.append((root, metrics.per_sample_errors.size, metrics.mae, metrics.cs[5]))
        print('{}: n={} MAE {:.3f} CS@5 {:.3f}'.format(*rows[-1]))
    write_csv(os.path.join(run.out_dir, 'cross_eval.csv'), ['dataset', 'n', 'mae', 'cs5'], rows)
    return EXIT_OK


def cmd_predict(args, run: RunConfig) -> int:
    model, cfg = _checkpoint_model(args)
    write_config(cfg, run.out_dir)
    data = _eval_set(args, cfg)
    preds = predict(data, model, cfg.batch_size_for(len(data)))
    rows = []
    for sample, pred in zip(data, preds):
        label = '' if sample.age_label is None else sample.age_label
        error = '' if sample.age_label is None else abs(float(pred) - sample.age_label)
        rows.append((sample.id, label, float(pred), error))
    write_csv(os.path.join(run.out_dir, 'predictions.csv'),
              ['id', 'label', 'prediction', 'abs_error'], rows)
    labeled = [(p, s.age_label) for p, s in zip(preds, data) if s.age_label is not None]
    if labeled:
        print('MAE {:.3f} over {} images'.format(compute_metrics(*zip(*labeled)).mae, len(labeled)))
    return EXIT_OK


def cmd_ablate_conv(args, run: RunConfig) -> int:
    cfg = build_config(args)
    write_config(cfg, run.out_dir)
    _, train, val, _ = load_splits(args, cfg)
    rows = []
    for variant in VARIANTS:
        arm = cfg._replace(model=cfg.model._replace(variant=variant.name()))
        rows.append((variant.name(), _train_arm(train, val, arm)))
        log.info('{}: val MAE {:.3f}'.format(*rows[-1]))
    write_csv(os.path.join(run.out_dir, 'ablate_conv.csv'), ['variant', 'val_mae'], rows)
    return EXIT_OK


def cmd_ablate_loss(args, run: RunConfig) -> int:
    cfg = build_config(args)
    write_config(cfg, run.out_dir)
    _, train, val, _ = load_splits(args, cfg)
    rows = []
    for on_n, on_m, on_v in LOSS_ARMS:
        loss = cfg.loss._replace(w1=cfg.loss.w1 * on_n, w2=cfg.loss.w2 * on_m, w3=cfg.loss.w3 * on_v)
        rows.append((on_n, on_m, on_v, _train_arm(train, val, cfg._replace(loss=loss))))
        log.info('l_n={} l_m={} l_v={}: val MAE {:.3f}'.format(*rows[-1]))
    write_csv(os.path.join(run.out_dir, 'ablate_loss.csv'), ['l_n', 'l_m', 'l_v', 'val_mae'], rows)
    return EXIT_OK


def cmd_mask_sweep(args, run: RunConfig) -> int:
    cfg = build_config(args)
    write_config(cfg, run.out_dir)
    _, train, val, _ = load_splits(args, cfg)
    rows = []
    for p in MASK_RATES:
        rows.append((p, _train_arm(train, val, cfg._replace(mask_rate=p))))
        log.info('p={}: val MAE {:.3f}'.format(*rows[-1]))
    write_csv(os.path.join(run.out_dir, 'mask_sweep.csv'), ['p', 'val_mae'], rows)
    return EXIT_OK


def cmd_gradcheck(args, run: RunConfig) -> int:
    results = gradient_suite(args.seed or 0)
    for r in results:
        print('{:<26} {:.2e} {}'.format(r.name, r.report.max_error, 'ok' if r.ok else 'FAIL'))
    w = worst(results)
    print('worst: {} input {} element {} analytic {!r} numeric {!r} (rel. err {:.2e})'.format(
        w.name, w.report.input_index, w.report.element, w.report.analytic, w.report.numeric,
        w.report.max_error))
    os.makedirs(run.out_dir, exist_ok=True)
    write_csv(os.path.join(run.out_dir, 'gradcheck.csv'), ['case', 'max_error', 'ok'],
              [(r.name, repr(r.report.max_error), int(r.ok)) for r in results])
    if not all(r.ok for r in results):
        raise NumericalError(f'gradient check failed: {w.name} exceeds {TOLERANCE:g}')
    return EXIT_OK


def cmd_dump_graph(args, run: RunConfig) -> int:
    if args.checkpoint:
        model, cfg = _checkpoint_model(args)
    else:
        cfg = build_config(args)
        model = AgeModel(init_params(cfg.model, cfg.seed), cfg)
    data = _eval_set(args, cfg)
    if not 0 <= args.index < len(data):
        raise ConfigError(f'--index {args.index} out of range for {len(data)} images')

    out = forward_batch([data[args.index]], model, training=False)
    graph = apply_mask(out.graph, args.mask_rate, (cfg.seed, args.index))
    if args.checkpoint and cfg.model.layer_count:
        _, fields = encode(graph, EncoderParams.from_store(model.params, cfg.model),
                           return_attention=True)
        graph = graph.with_weights(fields[-1].omega.values[:, 1:])

    os.makedirs(run.out_dir, exist_ok=True)
    path = os.path.join(run.out_dir, 'graph.txt')
    with open(path, 'w') as f:
        dump_graph(graph, args.mask_rate, f)
    print(path)
    return EXIT_OK


COMMANDS = {
    'train': cmd_train,
    'eval': cmd_eval,
    'cross-eval': cmd_cross_eval,
    'predict': cmd_predict,
    'ablate-conv': cmd_ablate_conv,
    'ablate-loss': cmd_ablate_loss,
    'mask-sweep': cmd_mask_sweep,
    'gradcheck': cmd_gradcheck,
    'dump-graph': cmd_dump_graph,
}


def _data_flags(p):
    p.add_argument('--synthetic', type=int, metavar='N', help='use N synthetic training images')
    p.add_argument('--dataset', action='append', metavar='DIR', help='image directory')
    p.add_argument('--labels', action='append', metavar='CSV', help='filename,age label file')


def _config_flags(p):
    p.add_argument('--config', metavar='PATH', help='JSON config file')
    p.add_argument('--set', action='append', metavar='KEY=VALUE', help='override a config key')
    p.add_argument('--seed', type=int)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='agegraph', description='Masked contrastive graph learning for age estimation.')
    parser.add_argument('--verbose', '-v', action='store_true')
    parser.add_argument('--quiet', '-q', action='store_true')
    sub = parser.add_subparsers(dest='command', required=True)

    for name in ('train', 'ablate-conv', 'ablate-loss', 'mask-sweep'):
        p = sub.add_parser(name)
        _config_flags(p)
        _data_flags(p)
        p.add_argument('--epochs', type=int)
        p.add_argument('--out', default='runs/' + name)

    for name in ('eval', 'cross-eval', 'predict'):
        p = sub.add_parser(name)
        p.add_argument('--checkpoint', required=True)
        _config_flags(p)
        _data_flags(p)
        p.add_argument('--out', default='runs/' + name)

    p = sub.add_parser('gradcheck')
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out', default='runs/gradcheck')

    p = sub.add_parser('dump-graph')
    p.add_argument('--checkpoint')
    _config_flags(p)
    _data_flags(p)
    p.add_argument('--index', type=int, default=0)
    p.add_argument('--mask-rate', type=float, default=0.0)
    p.add_argument('--out', default='runs/dump-graph')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    level = log.DEBUG if args.verbose else log.WARNING if args.quiet else log.INFO
    log.basicConfig(level=level, format='%(levelname)s %(message)s')
    run = RunConfig(args.command, getattr(args, 'config', None), tuple(getattr(args, 'set', None) or ()),
                    args.out)

    try:
        return COMMANDS[args.command](args, run)
    except (ConfigError, CheckpointError) as e:
        log.error(str(e))
        return EXIT_CONFIG
    except DataError as e:
        log.error(str(e))
        return EXIT_DATA
    except NumericalError as e:
        log.error(str(e))
        return EXIT_NUMERICAL
    except AgeGraphError as e:
        log.error('{}: {}'.format(type(e).__name__, e))
        return EXIT_CONFIG


if __name__ == '__main__':
    sys.exit(main())
