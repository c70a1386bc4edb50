import argparse

import numpy as np
import pytest

from ftcbench.cli.main import (
    EXIT_ANALYZE,
    EXIT_EVALUATE,
    EXIT_SIMULATE,
    SYNTHESIS_FILE,
    TRACKING_FILE,
    _point_list,
    build_parser,
    log_path,
    main,
)
from ftcbench.config.settings import config_hash, load_config
from ftcbench.core.models import Axis
from ftcbench.modules.evaluation import VARIANT_ORDER
from ftcbench.modules.simulator import CHANNEL_COUNT, SimLog
from ftcbench.modules.synthesis import CascadedGains, SynthesisResult, export_document
from ftcbench.storage import read_csv, write_json, write_simlog


def exit_code(argv):
    with pytest.raises(SystemExit) as info:
        main(argv)
    return info.value.code


def hover_log(n=2501, dt=0.01):
    states = np.zeros((n, 13))
    states[:, 2] = -30.0
    states[:, 6] = 1.0
    references = np.zeros((n, 4))
    references[:, 0] = 30.0
    return SimLog(t=np.round(np.arange(n) * dt, 10), states=states, euler=np.zeros((n, 3)),
                  references=references, commanded=np.zeros((n, CHANNEL_COUNT)),
                  effective=np.zeros((n, CHANNEL_COUNT)), airspeed=np.full(n, 13.0),
                  mode=["fixed_wing_entry"] * n)


def test_no_command_prints_help(capsys):
    assert exit_code([]) == 1
    assert "synth" in capsys.readouterr().out


def test_point_list():
    assert _point_list("3,4") == (3, 4)
    with pytest.raises(argparse.ArgumentTypeError):
        _point_list("7")
    with pytest.raises(argparse.ArgumentTypeError):
        _point_list("three")


def test_parser_defaults():
    args = build_parser().parse_args(["simulate", "--variant", "gs_shif"])
    assert args.case is None and args.variant == "gs_shif"
    with pytest.raises(SystemExit):
        build_parser().parse_args(["simulate", "--variant", "pid"])


def test_analyze_needs_synthesis_export(tmp_path):
    assert exit_code(["analyze", "--out", str(tmp_path)]) == EXIT_ANALYZE


def test_simulate_needs_synthesis_export(tmp_path):
    assert exit_code(["simulate", "--out", str(tmp_path), "--case", "2"]) == EXIT_SIMULATE


def test_evaluate_needs_logs(tmp_path):
    assert exit_code(["evaluate", "--out", str(tmp_path)]) == EXIT_EVALUATE


def test_evaluate_from_saved_logs(tmp_path, capsys):
    config = load_config().with_overrides(output_dir=tmp_path)
    digest = config_hash(config)
    for variant in VARIANT_ORDER:
        write_simlog(log_path(config, "1", variant), hover_log(), digest, config.seed)

    main(["evaluate", "--out", str(tmp_path), "--case", "1"])

    meta, header, rows = read_csv(tmp_path / TRACKING_FILE)
    assert meta["config_hash"] == digest
    assert header[:2] == ["case", "variant"]
    assert [row[1] for row in rows] == list(VARIANT_ORDER)
    assert all(float(v) == 0.0 for row in rows for v in row[2:])
    assert (tmp_path / "bars_phi.csv").is_file()
    assert "all pass" in capsys.readouterr().out


def test_value_errors_map_to_stage_exit_code(tmp_path, capsys):
    # an unknown axis name in the LQR block surfaces as a plain ValueError
    document = export_document({(Axis.ROLL, 3): SynthesisResult(CascadedGains(1.0, 2.0, 3.0, 0.1), 0.9, 10, True)})
    document["lqr"] = {"bank": [1.0, 2.0, 3.0]}
    write_json(tmp_path / SYNTHESIS_FILE, document, "abc", 0)
    assert exit_code(["analyze", "--out", str(tmp_path)]) == EXIT_ANALYZE
    assert "bank" in capsys.readouterr().err
