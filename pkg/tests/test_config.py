import pytest
from hypothesis import given
from hypothesis import strategies as st

from lisce.errors import ConfigError
from lisce.harness.config import (EXPERIMENTS, ExperimentConfig, MissingRequired, ParseError,
                                  UnknownKey, dump_config, load_config, parse_config)


def test_minimal_file_gets_defaults(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("experiment = mse-vs-snr\n", encoding="utf-8")
    cfg = load_config(path)
    assert (cfg.M, cfg.K, cfg.rho1, cfg.trials, cfg.T_c) == (10, 10, 0.6, 2000, 196)
    assert cfg.pilot_length == 11


def test_comments_lists_and_none():
    cfg = parse_config("# header\nexperiment = rate-vs-k  # inline\nK_grid = 2, 4\n"
                       "weights = none\nmethods = genie,ls\n")
    assert cfg.K_grid == (2, 4) and cfg.methods == ("genie", "ls") and cfg.weights is None


@pytest.mark.parametrize("text,exc,line", [
    ("experiment = mse-vs-snr\nrho1 = 1.5\n", ParseError, 2),
    ("experiment = mse-vs-snr\nbogus = 1\n", UnknownKey, 2),
    ("experiment = mse-vs-snr\nM\n", ParseError, 2),
    ("experiment = mse-vs-snr\nM = ten\n", ParseError, 2),
    ("experiment = mse-vs-snr\nM = 2\nM = 3\n", ParseError, 3),
    ("experiment = nope\n", ParseError, 1),
    ("experiment = train\narch = unet\n", ParseError, 2),
    ("experiment = mse-vs-snr\nsnr_db = ,\n", ParseError, 2),
])
def test_parse_errors_carry_line_numbers(text, exc, line):
    with pytest.raises(exc) as info:
        parse_config(text)
    assert info.value.line == line
    assert str(info.value).startswith(f"line {line}:")


def test_missing_experiment():
    with pytest.raises(MissingRequired):
        parse_config("M = 4\n")
    assert issubclass(MissingRequired, ConfigError)


def test_consistency_checks():
    with pytest.raises(ParseError):
        parse_config("experiment = mse-vs-snr\nT_p = 5\n")
    with pytest.raises(ParseError):
        parse_config("experiment = mse-vs-snr\nK = 200\n")
    with pytest.raises(ParseError):
        parse_config("experiment = train\nweights = a.bin\ndataset = a.bin\n")


def test_defaults_and_overrides_precedence():
    cfg = parse_config("experiment = mse-vs-rho\ntrials = 7\n",
                       overrides={"trials": "9"}, defaults={"experiment": "mm-trace", "seed": 4})
    assert (cfg.experiment, cfg.trials, cfg.seed) == ("mse-vs-rho", 9, 4)
    with pytest.raises(UnknownKey):
        parse_config("experiment = train\n", overrides={"nope": "1"})


@given(st.sampled_from(EXPERIMENTS), st.integers(1, 20), st.floats(0, 0.99),
       st.lists(st.floats(-40, 40, allow_nan=False), min_size=1, max_size=4),
       st.integers(0, 2 ** 64 - 1))
def test_dump_round_trip(exp, K, rho, snrs, seed):
    cfg = ExperimentConfig(experiment=exp, K=K, rho2=rho, snr_db=tuple(snrs), seed=seed)
    assert parse_config(dump_config(cfg)) == cfg
