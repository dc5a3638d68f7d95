"""Command line surface: dispatch, flags, error reporting."""

import os

import pytest

from accentvc import cli, runner


CFG_YAML = """\
corpus:
  n_target_utts: 30
  n_source_utts: 8
recognizer:
  epochs: 10
train:
  epochs: 6
  gate_epoch: 2
  alternate_every: 2
eval:
  probe_utts_per_cell: 4
  conversion_utts: 6
  parallel_groups: 6
  probe_fit_groups: 6
  h_probe_epochs: 30
  seeds: [1]
"""


@pytest.fixture()
def cfg_path(tmp_path):
    p = os.path.join(tmp_path, "tiny.yaml")
    with open(p, "w") as f:
        f.write(CFG_YAML)
    return p


def run(*argv):
    return cli.main(list(argv))


def test_gen_corpus_prints_output_dir(cfg_path, tmp_path, capsys):
    out = os.path.join(tmp_path, "runs")
    code = run("gen-corpus", "--config", cfg_path, "--seed", "1", "--out", out)
    assert code == 0
    printed = capsys.readouterr().out.strip()
    assert printed == runner.corpus_dir(out, 1)
    assert os.path.exists(os.path.join(printed, "manifest.json"))


def test_missing_dependency_exits_2_with_message(cfg_path, tmp_path, capsys):
    out = os.path.join(tmp_path, "runs")
    code = run("train-vc", "--config", cfg_path, "--seed", "1",
               "--system", "BL", "--out", out)
    assert code == 2
    err = capsys.readouterr().err
    assert err.startswith("error:")
    assert "gen-corpus" in err


def test_system_flag_is_validated(cfg_path, tmp_path):
    with pytest.raises(SystemExit) as exc:
        run("train-vc", "--config", cfg_path, "--seed", "1",
            "--system", "XX", "--out", os.path.join(tmp_path, "r"))
    assert exc.value.code == 2


def test_unknown_command_rejected(cfg_path):
    with pytest.raises(SystemExit):
        run("frobnicate", "--config", cfg_path)


def test_out_defaults_to_env_var(cfg_path, tmp_path, monkeypatch, capsys):
    root = os.path.join(tmp_path, "from-env")
    monkeypatch.setenv("ACCENTVC_OUT", root)
    code = run("gen-corpus", "--config", cfg_path, "--seed", "1")
    assert code == 0
    assert capsys.readouterr().out.strip() == runner.corpus_dir(root, 1)


def test_force_replaces_conflicting_run(cfg_path, tmp_path, capsys):
    out = os.path.join(tmp_path, "runs")
    assert run("gen-corpus", "--config", cfg_path, "--seed", "1",
               "--out", out) == 0
    other = os.path.join(tmp_path, "other.yaml")
    with open(other, "w") as f:
        f.write(CFG_YAML.replace("n_target_utts: 30", "n_target_utts: 32"))
    assert run("gen-corpus", "--config", other, "--seed", "1",
               "--out", out) == 2
    assert "--force" in capsys.readouterr().err
    assert run("gen-corpus", "--config", other, "--seed", "1",
               "--out", out, "--force") == 0


def test_grad_check_runs_without_config(tmp_path, capsys):
    code = run("grad-check", "--seed", "0",
               "--out", os.path.join(tmp_path, "runs"))
    assert code == 0
    d = capsys.readouterr().out.strip()
    assert os.path.exists(os.path.join(d, "gradcheck.txt"))


def test_full_pipeline_through_cli(cfg_path, tmp_path, capsys):
    out = os.path.join(tmp_path, "runs")
    steps = [
        ("gen-corpus",),
        ("train-recognizer",),
        ("finetune-recognizer",),
        ("train-vc", "--system", "BL"),
        ("convert", "--system", "BL"),
        ("eval",),
    ]
    for step in steps:
        code = run(step[0], "--config", cfg_path, "--seed", "1",
                   "--out", out, *step[1:])
        assert code == 0, step
    capsys.readouterr()
    assert run("project", "--config", cfg_path, "--seed", "1",
               "--system", "BL", "--out", out) == 0
    d = capsys.readouterr().out.strip()
    assert os.path.exists(os.path.join(d, "proj_h.tsv"))
