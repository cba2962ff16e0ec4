import json

import pandas as pd
import pytest

from msddp.errors import BadParams
from msddp.main import build_parser, main, parse_params


def test_parse_params():
    assert parse_params(['T=2', 'eps=0.5', 'name=x', 'flag=true']) == {'T': 2, 'eps': 0.5, 'name': 'x',
                                                                      'flag': True}
    assert parse_params(['K=2,3'], multi=True) == {'K': [2, 3]}
    assert parse_params(None) == {}
    with pytest.raises(BadParams):
        parse_params(['T'])


def test_parser_defaults():
    args = build_parser().parse_args(['run', 'instance.json'])
    assert (args.algorithm, args.eps, args.samples, args.bounds_only) == ('nbd', 1e-3, 1, False)
    assert args.adversarial is None


def test_generate_and_run(tmp_path, capsys):
    instance = tmp_path / 'finite.json'
    assert main(['generate', 'finite_state', '--param', 'T=2', '--param', 'K=3', '-o', str(instance)]) == 0
    assert json.loads(instance.read_text())['meta']['name'] == 'finite_state'

    result, trace = tmp_path / 'result.json', tmp_path / 'trace.csv'
    code = main(['run', str(instance), '--algorithm', 'ddp-det', '--eps', '0', '--result', str(result),
                 '--trace', str(trace)])
    assert code == 0
    assert json.loads(result.read_text())['status'] == 'Converged'
    assert list(pd.read_csv(trace).columns) == ['iter', 'lb', 'ub', 'gap', 'cuts', 'ms']

    capsys.readouterr()
    assert main(['run', str(instance), '--bounds-only', '--eps', '0.1']) == 0
    assert json.loads(capsys.readouterr().out)['finite_state'] == 6.0


def test_generate_to_stdout(capsys):
    assert main(['generate', 'milp-discontinuous', '--param', 'h=0.25']) == 0
    assert json.loads(capsys.readouterr().out)['version'] == 1


def test_sweep_command(tmp_path):
    code = main(['sweep', 'finite_state', '--grid', 'T=1,2', '--grid', 'K=2', '--eps', '0',
                 '--out', str(tmp_path)])
    assert code == 0
    assert len(pd.read_csv(tmp_path / 'summary.csv')) == 2


def test_errors_exit_one(tmp_path, capsys):
    assert main(['run', str(tmp_path / 'missing.json')]) == 1
    assert 'cannot read instance' in capsys.readouterr().err
    assert main(['generate', 'finite_state', '--param', 'T']) == 1
    assert main(['generate', 'finite_state', '--param', 'T=0', '--param', 'K=1']) == 1
    assert main(['run', str(tmp_path / 'missing.json'), '--threads', '0']) == 1
