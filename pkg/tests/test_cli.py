import csv
import json

import numpy as np
import pytest
from PIL import Image
from pytest import mark

from agegraph.cli import LOSS_ARMS, MASK_RATES, main
from agegraph.training import load_checkpoint

from utils import TINY_CLI


def read_csv(path):
    with open(str(path), newline='') as f:
        return list(csv.DictReader(f))


def train(out, *extra):
    return main(['train', '--synthetic', '8', '--epochs', '2', '--out', str(out)] + TINY_CLI + list(extra))


@pytest.fixture(scope='module')
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp('train')
    assert train(out) == 0
    return out


@pytest.fixture
def labeled_dir(tmp_path):
    root = tmp_path / 'faces'
    root.mkdir()
    rows = []
    rng = np.random.default_rng(0)
    for i in range(4):
        pixels = (rng.uniform(size=(16, 16, 3)) * 255).astype(np.uint8)
        Image.fromarray(pixels).save(str(root / f'{i}.png'))
        rows.append(f'{i}.png,{20 + 5 * i}')
    labels = tmp_path / 'faces.csv'
    labels.write_text('\n'.join(['filename,age'] + rows) + '\n')
    return root, labels


def test_train_outputs(trained):
    rows = read_csv(trained / 'metrics.csv')
    assert [r['epoch'] for r in rows] == ['1', '2']
    assert set(rows[0]) == {'epoch', 'train_loss', 'val_mae', 'val_cs5'}
    config = json.loads((trained / 'config.json').read_text())
    assert config['K'] == 3
    assert config['model']['embed_dim'] == 16
    manifest = json.loads((trained / 'manifest.json').read_text())
    assert len(manifest['entries']) == 8 + 1 + 1
    assert load_checkpoint(str(trained / 'checkpoint.npz')).config.epochs == 2


def test_train_is_reproducible(trained, tmp_path):
    assert train(tmp_path) == 0
    for name in ('metrics.csv', 'config.json', 'manifest.json'):
        assert (tmp_path / name).read_bytes() == (trained / name).read_bytes(), name
    a = load_checkpoint(str(trained / 'checkpoint.npz'))
    b = load_checkpoint(str(tmp_path / 'checkpoint.npz'))
    for name, values in a.params.items():
        assert np.array_equal(values, b.params[name]), name


def test_train_config_errors(tmp_path):
    assert train(tmp_path, '--epochs', '0') == 1
    assert main(['train', '--out', str(tmp_path)] + TINY_CLI) == 1
    assert train(tmp_path, '--set', 'learning_rte=0.1') == 1
    assert train(tmp_path, '--config', str(tmp_path / 'absent.json')) == 1


def test_train_from_config_file(tmp_path):
    config = tmp_path / 'config.json'
    config.write_text(json.dumps({'epochs': 1, 'loss': {'alpha': 0.5}}))
    out = tmp_path / 'run'
    assert main(['train', '--synthetic', '8', '--config', str(config), '--out', str(out)] + TINY_CLI) == 0
    written = json.loads((out / 'config.json').read_text())
    assert written['epochs'] == 1
    assert written['loss']['alpha'] == 0.5
    assert len(read_csv(out / 'metrics.csv')) == 1


def test_eval(trained, tmp_path):
    args = ['eval', '--checkpoint', str(trained / 'checkpoint.npz'), '--synthetic', '8', '--out', str(tmp_path)]
    assert main(args) == 0
    row = read_csv(tmp_path / 'eval.csv')[0]
    assert row['n'] == '1'
    curve = [float(r['cs']) for r in read_csv(tmp_path / 'cs_curve.csv')]
    assert len(curve) == 11
    assert curve == sorted(curve)


def test_eval_checkpoint_mismatch(trained, tmp_path):
    args = ['eval', '--checkpoint', str(trained / 'checkpoint.npz'), '--synthetic', '8', '--out', str(tmp_path)]
    assert main(args + TINY_CLI + ['--set', 'K=2']) == 1
    assert main(['eval', '--checkpoint', str(tmp_path / 'absent.npz'), '--synthetic', '8',
                 '--out', str(tmp_path)]) == 1


def test_predict_and_cross_eval(trained, labeled_dir, tmp_path):
    root, labels = labeled_dir
    ckpt = str(trained / 'checkpoint.npz')
    assert main(['predict', '--checkpoint', ckpt, '--dataset', str(root), '--labels', str(labels),
                 '--out', str(tmp_path / 'predict')]) == 0
    rows = read_csv(tmp_path / 'predict' / 'predictions.csv')
    assert [r['id'] for r in rows] == ['0.png', '1.png', '2.png', '3.png']
    for r in rows:
        assert abs(abs(float(r['prediction']) - float(r['label'])) - float(r['abs_error'])) < 1e-9

    assert main(['cross-eval', '--checkpoint', ckpt, '--dataset', str(root), '--labels', str(labels),
                 '--dataset', str(root), '--labels', str(labels), '--out', str(tmp_path / 'cross')]) == 0
    rows = read_csv(tmp_path / 'cross' / 'cross_eval.csv')
    assert len(rows) == 2
    assert rows[0]['mae'] == rows[1]['mae']

    assert main(['cross-eval', '--checkpoint', ckpt, '--dataset', str(root),
                 '--out', str(tmp_path / 'cross')]) == 1


def test_bad_age_is_a_data_error(trained, labeled_dir, tmp_path):
    root, labels = labeled_dir
    labels.write_text('filename,age\n0.png,150\n')
    assert main(['eval', '--checkpoint', str(trained / 'checkpoint.npz'), '--dataset', str(root),
                 '--labels', str(labels), '--out', str(tmp_path)]) == 2


def test_dump_graph(trained, tmp_path):
    assert main(['dump-graph', '--synthetic', '8', '--mask-rate', '0.25', '--out', str(tmp_path)] + TINY_CLI) == 0
    lines = (tmp_path / 'graph.txt').read_text().splitlines()
    assert lines[0] == '16 3 16 0.25'
    assert len(lines) == 1 + 16 + 16 * 3
    assert sum(int(line.split()[1]) for line in lines[1:17]) == 4

    out = tmp_path / 'trained'
    assert main(['dump-graph', '--checkpoint', str(trained / 'checkpoint.npz'), '--synthetic', '8',
                 '--out', str(out)]) == 0
    edges = [line.split() for line in (out / 'graph.txt').read_text().splitlines()[17:]]
    weights = np.array([float(e[3]) for e in edges]).reshape(16, 3)
    assert np.all((weights > 0) & (weights < 1))

    assert main(['dump-graph', '--synthetic', '8', '--index', '5', '--out', str(tmp_path)] + TINY_CLI) == 1


@mark.last
def test_ablations(tmp_path):
    common = ['--synthetic', '8', '--epochs', '1'] + TINY_CLI
    assert main(['ablate-conv', '--out', str(tmp_path / 'conv')] + common) == 0
    rows = read_csv(tmp_path / 'conv' / 'ablate_conv.csv')
    assert [r['variant'] for r in rows] == ['max_relative', 'edge_conv', 'graph_sage', 'gin']

    assert main(['ablate-loss', '--out', str(tmp_path / 'loss')] + common) == 0
    rows = read_csv(tmp_path / 'loss' / 'ablate_loss.csv')
    assert [(int(r['l_n']), int(r['l_m']), int(r['l_v'])) for r in rows] == LOSS_ARMS

    assert main(['mask-sweep', '--out', str(tmp_path / 'mask')] + common) == 0
    rows = read_csv(tmp_path / 'mask' / 'mask_sweep.csv')
    assert [float(r['p']) for r in rows] == MASK_RATES
    assert all(np.isfinite(float(r['val_mae'])) for r in rows)


@mark.last
def test_gradcheck_command(tmp_path, capsys):
    assert main(['gradcheck', '--out', str(tmp_path)]) == 0
    assert 'worst:' in capsys.readouterr().out
    rows = read_csv(tmp_path / 'gradcheck.csv')
    assert {'end_to_end_loss', 'end_to_end_loss[age]', 'matmul'} <= {r['case'] for r in rows}
    assert all(r['ok'] == '1' and float(r['max_error']) <= 1e-4 for r in rows)
