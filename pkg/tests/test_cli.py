import os

import pytest

from mfchaos.cli import ConfigError, main, parse_config


def run_cli(*args):
    return main(list(args))


class TestConfigParsing:
    def test_minimal_config_fills_defaults(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("model.name = linear\nsim.N = 32\n")
        rc = parse_config(str(cfg), {})
        assert rc.raw("model.name") == "linear"
        assert rc.get_int("sim.N") == 32
        assert rc.get_float("sim.dt") == 0.01       # default filled
        assert rc.get_int("chaos.replicas") == 20   # default filled

    def test_comments_and_blanks_ignored(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# a comment\n\nsim.N = 8  # trailing\n")
        assert parse_config(str(cfg), {}).get_int("sim.N") == 8

    def test_unknown_key_named(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("sim.bogus = 3\n")
        with pytest.raises(ConfigError, match="sim.bogus"):
            parse_config(str(cfg), {})

    def test_dt_not_dividing_T_names_dt(self):
        rc = parse_config(None, {"sim.dt": "0.3"})
        with pytest.raises(ConfigError, match="sim.dt"):
            rc.sim_config()

    def test_alpha_out_of_range_cites_interval(self):
        rc = parse_config(None, {"model.alpha": "0.3"})
        with pytest.raises(ConfigError, match=r"\[1/2, 1\]"):
            rc.sim_config()

    def test_flag_overrides_file(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("sim.N = 32\n")
        rc = parse_config(str(cfg), {"sim.N": "64"})
        assert rc.get_int("sim.N") == 64

    def test_type_errors_name_key(self):
        rc = parse_config(None, {"sim.N": "many"})
        with pytest.raises(ConfigError, match="sim.N"):
            rc.sim_config()


class TestExitCodes:
    def test_config_error_is_two(self, tmp_path):
        assert run_cli("simulate", "--set", "sim.dt=0.3", "--out", str(tmp_path)) == 2

    def test_unknown_model_is_two(self, tmp_path):
        assert run_cli("simulate", "--set", "model.name=zebra", "--out", str(tmp_path)) == 2

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_blowup_is_three(self, tmp_path):
        code = run_cli("simulate", "--out", str(tmp_path),
                       "--set", "model.name=linear", "--set", "model.a=80.0",
                       "--set", "model.c=0.0", "--set", "sim.dt=0.25",
                       "--set", "sim.T=200.0", "--set", "sim.N=2",
                       "--set", "init.name=constant", "--set", "init.value=1e30")
        assert code == 3

    @pytest.mark.filterwarnings("ignore:tol=")
    def test_nonconvergence_is_four(self, tmp_path):
        code = run_cli("solve", "--out", str(tmp_path),
                       "--set", "solve.M=64", "--set", "solve.tol=1e-12",
                       "--set", "solve.max_iter=1", "--set", "sim.N=4",
                       "--set", "sim.T=0.2", "--set", "sim.dt=0.05")
        assert code == 4
        # non-convergence still publishes its diagnostics (that IS the report)
        assert (tmp_path / "diagnostics.csv").exists()


class TestArtifacts:
    def test_yamada_verify_writes_audit(self, tmp_path):
        assert run_cli("yamada-verify", "--epsilon", "0.1", "--out", str(tmp_path)) == 0
        text = (tmp_path / "yamada_audit.csv").read_text()
        assert text.startswith("epsilon,check,max_violation,passed")
        assert ",0\n" not in text   # every audit row passed
        assert (tmp_path / "run_manifest.txt").exists()

    def test_simulate_writes_record_and_manifest(self, tmp_path):
        code = run_cli("simulate", "--out", str(tmp_path), "--seed", "5",
                       "--set", "sim.N=16", "--set", "sim.T=0.2")
        assert code == 0
        assert (tmp_path / "record.csv").read_text().startswith("t,q05")
        manifest = (tmp_path / "run_manifest.txt").read_text()
        assert "seed = 5" in manifest
        assert "version.mfchaos" in manifest

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_no_partial_output_on_failure(self, tmp_path):
        out = tmp_path / "o"
        code = run_cli("simulate", "--out", str(out),
                       "--set", "model.a=80.0", "--set", "model.c=0.0",
                       "--set", "sim.dt=0.25", "--set", "sim.T=200.0",
                       "--set", "sim.N=2", "--set", "init.name=constant",
                       "--set", "init.value=1e30")
        assert code == 3
        assert not any(os.scandir(out))   # nothing published, nothing staged

    def test_chaos_rate_outputs(self, tmp_path):
        code = run_cli("chaos-rate", "--out", str(tmp_path), "--seed", "9",
                       "--set", "chaos.N_list=16,32,64", "--set", "chaos.replicas=3",
                       "--set", "chaos.M=512", "--set", "sim.T=0.5")
        assert code == 0
        summary = (tmp_path / "summary.csv").read_text().splitlines()
        assert summary[0] == "slope,stderr,theoretical_exponent"
        slope = float(summary[1].split(",")[0])
        assert slope < 0.0
        assert (tmp_path / "rate.csv").exists()
        assert (tmp_path / "runs.csv").exists()

    def test_rerun_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        args = ["chaos-rate", "--seed", "4", "--set", "chaos.N_list=16,32,64",
                "--set", "chaos.replicas=2", "--set", "chaos.M=256",
                "--set", "sim.T=0.2"]
        assert run_cli(*args, "--out", str(a)) == 0
        assert run_cli(*args, "--out", str(b)) == 0
        for name in ("rate.csv", "summary.csv", "runs.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_check_assumptions_csv(self, tmp_path):
        code = run_cli("check-assumptions", "--out", str(tmp_path),
                       "--set", "check.samples=500")
        assert code == 0
        text = (tmp_path / "assumptions.csv").read_text()
        assert text.startswith("check,estimate,declared,passed")
        assert "no violation" in text

    def test_tv_study_runs_on_linear(self, tmp_path):
        code = run_cli("tv-study", "--out", str(tmp_path),
                       "--set", "chaos.N_list=16,64", "--set", "chaos.replicas=2",
                       "--set", "chaos.M=256", "--set", "chaos.times=0.5")
        assert code == 0
        assert (tmp_path / "tv.csv").read_text().startswith("N,t,tv_estimate")

    def test_tv_study_refuses_without_floor(self, tmp_path):
        code = run_cli("tv-study", "--out", str(tmp_path),
                       "--set", "model.name=sqrt",
                       "--set", "chaos.N_list=16,64", "--set", "chaos.replicas=2")
        assert code == 2

    def test_manifest_reproduces_run(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run_cli("simulate", "--out", str(a), "--seed", "7",
                       "--set", "sim.N=16", "--set", "sim.T=0.2",
                       "--set", "record.form=long") == 0
        # the manifest is itself a valid config file reproducing the run
        assert run_cli("simulate", "--config", str(a / "run_manifest.txt"),
                       "--out", str(b)) == 0
        assert (a / "record.csv").read_bytes() == (b / "record.csv").read_bytes()

    def test_delay_model_adopts_window_from_model(self, tmp_path):
        code = run_cli("simulate", "--out", str(tmp_path),
                       "--set", "model.name=delay", "--set", "model.r=0.2",
                       "--set", "model.sigma0=0.1", "--set", "sim.N=8",
                       "--set", "sim.T=0.5")
        assert code == 0
        assert "sim.r = 0.2" in (tmp_path / "run_manifest.txt").read_text()

    def test_short_window_named_in_error(self, tmp_path):
        code = run_cli("simulate", "--out", str(tmp_path),
                       "--set", "model.name=delay", "--set", "model.r=0.4",
                       "--set", "sim.r=0.2", "--set", "sim.N=8")
        assert code == 2

    def test_solve_writes_flow_and_diagnostics(self, tmp_path):
        code = run_cli("solve", "--out", str(tmp_path),
                       "--set", "solve.M=256", "--set", "solve.tol=0.2",
                       "--set", "sim.T=0.2", "--set", "sim.dt=0.02")
        assert code == 0
        assert (tmp_path / "flow.csv").read_text().startswith("t,sample_index,value")
        assert (tmp_path / "diagnostics.csv").read_text().startswith("iter,rho")

    def test_config_file_end_to_end(self, tmp_path):
        cfg = tmp_path / "delay.cfg"
        cfg.write_text(
            "# uniform-measure delay model, small rate sweep\n"
            "model.name = delay\n"
            "model.r = 0.2\n"
            "model.beta = 0.5\n"
            "model.sigma0 = 0.2\n"
            "model.m = uniform\n"
            "model.atoms = 5\n"
            "sim.T = 0.5\n"
            "sim.dt = 0.05\n"
            "chaos.N_list = 32,64,128\n"
            "chaos.replicas = 3\n"
            "chaos.M = 1024\n"
            "seed = 3\n")
        out = tmp_path / "out"
        assert run_cli("chaos-rate", "--config", str(cfg), "--out", str(out)) == 0
        rows = (out / "rate.csv").read_text().strip().splitlines()
        assert [r.split(",")[0] for r in rows[1:]] == ["32", "64", "128"]
        errs = [float(r.split(",")[1]) for r in rows[1:]]
        assert errs[0] > errs[-1]
