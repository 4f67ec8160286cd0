"""
Test Module for the DeskBBF command line
"""

import csv
import os

import pytest

from main import build_parser, config_from_args, main, parse_set_arguments
from src.trainer.config import ConfigError

DATA_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))), 'data')


def test_parse_set_arguments():
    pairs = parse_set_arguments(['lr=3e-4', 'arch.base_channels=4,8,8', 'double_q=false'])
    assert pairs == [('lr', 3e-4), ('arch.base_channels', [4, 8, 8]), ('double_q', False)]
    with pytest.raises(ConfigError):
        parse_set_arguments(['lr'])


def test_flags_apply_after_preset():
    args = build_parser().parse_args(['train', '--preset', 'no_spr', '--env', 'dodge', '--seed', '2',
                                      '--rr', '4', '--set', 'lr=3e-4'])
    config = config_from_args(args)
    assert (config.name, config.env, config.seed) == ('no_spr', 'dodge', 2)
    assert config.schedule.replay_ratio == 4.0
    assert config.learning_rate == 3e-4
    assert not config.arch.use_spr


def test_train_command(mocker, tmp_path):
    record = mocker.Mock(gradient_steps=10, resets=[], resumed=False)
    record.final_score.return_value = 1.5
    train = mocker.patch('main.train', return_value=record)

    assert main(['--runs-dir', str(tmp_path), 'train', '--env', 'dodge', '--resume']) == 0
    config = train.call_args[0][0]
    assert config.env == 'dodge'
    assert train.call_args[1]['resume'] is True


def test_invalid_config_exits_with_two(tmp_path):
    assert main(['--runs-dir', str(tmp_path), 'train', '--set', 'alpha=2']) == 2


def test_no_command(tmp_path):
    assert main([]) == 1


def test_schedule_command(tmp_path):
    out = tmp_path / 'schedule.csv'
    assert main(['--runs-dir', str(tmp_path), 'schedule', '--preset', 'bbf', '--steps', '4', '--out', str(out)]) == 0
    with open(out, newline='') as handle:
        rows = list(csv.DictReader(handle))
    assert len(rows) == 5
    assert (rows[0]['n'], float(rows[0]['gamma'])) == ('10', 0.97)


def test_reference_command(mocker, tmp_path):
    write = mocker.patch('main.write_reference_csv', return_value=str(tmp_path / 'refs.csv'))
    assert main(['--runs-dir', str(tmp_path), 'reference', '--out', str(tmp_path / 'refs.csv')]) == 0
    write.assert_called_once_with(str(tmp_path / 'refs.csv'), ['chase', 'dodge'])


def test_fixture_report_matches_published(tmp_path, capsys):
    code = main(['--runs-dir', str(tmp_path), 'report',
                 '--fixture', os.path.join(DATA_DIR, 'atari100k_scores.csv'),
                 '--compare', os.path.join(DATA_DIR, 'atari100k_reported.csv'),
                 '--out', str(tmp_path / 'report.csv'), '--resamples', '50'])
    assert code == 0
    assert os.path.exists(tmp_path / 'report.csv')
    assert 'unavailable' in capsys.readouterr().out


def write_suite_scores(directory):
    directory.mkdir(parents=True, exist_ok=True)
    (directory / 'refs.csv').write_text('game,random,human\nchase,1.0,11.0\n')
    for config_name, returns in (('bbf', [5.0, 6.0, 7.0]), ('baseline', [1.0, 2.0, 1.0])):
        run_dir = directory / 'runs' / f"chase__{config_name}"
        run_dir.mkdir(parents=True)
        lines = ['env,config_name,seed,env_steps,episode_index,return']
        lines += [f"chase,{config_name},{seed},10000,0,{value}" for seed, value in enumerate(returns)]
        (run_dir / 'scores.csv').write_text('\n'.join(lines) + '\n')


def test_report_acceptance_check(tmp_path, capsys):
    scores = tmp_path / 'suite'
    write_suite_scores(scores)
    code = main(['--runs-dir', str(tmp_path), 'report', '--scores', str(scores), '--out', str(tmp_path / 'report.csv'),
                 '--resamples', '20', '--acceptance', 'bbf', 'baseline'])
    assert code == 0
    assert 'Acceptance check passed' in capsys.readouterr().out


def test_report_acceptance_check_fails_when_baseline_wins(tmp_path, capsys):
    scores = tmp_path / 'suite'
    write_suite_scores(scores)
    code = main(['--runs-dir', str(tmp_path), 'report', '--scores', str(scores), '--out', str(tmp_path / 'report.csv'),
                 '--resamples', '20', '--acceptance', 'baseline', 'bbf'])
    assert code == 1
    assert 'Acceptance check failed' in capsys.readouterr().out


def test_acceptance_check_needs_run_level_scores(tmp_path):
    code = main(['--runs-dir', str(tmp_path), 'report', '--fixture', os.path.join(DATA_DIR, 'atari100k_scores.csv'),
                 '--out', str(tmp_path / 'report.csv'), '--resamples', '20', '--acceptance', 'BBF', 'DER'])
    assert code == 2
