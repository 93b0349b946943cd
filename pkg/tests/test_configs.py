import os
import textwrap

import pytest

from steinuq.configs import (
    ConfigError,
    ConfigParseError,
    ConfigValidationError,
    apply_env_overrides,
    config_from_dict,
    config_hash,
    parse_config,
)
from steinuq.hmc import HMCConfig


def write(tmp_path, text):
    path = tmp_path / "config.yaml"
    path.write_text(textwrap.dedent(text))
    return path


class TestDefaults:
    def test_minimal_config_fills_defaults(self, tmp_path):
        cfg = parse_config(write(tmp_path, "problem: hyperelasticity\n"))
        assert cfg.problem == "hyperelasticity"
        assert cfg.regularizer.p == 2
        assert cfg.regularizer.lam == 0.0
        assert cfg.architecture.hidden == (30, 30)
        assert cfg.data.n == 80
        assert cfg.data.eps == 0.2
        assert cfg.data.noise.kind == "none"
        assert cfg.map.lr == 0.005  # default depends on the regularizer order
        assert cfg.method.kind == "svgd"
        assert cfg.method.hmc is None
        assert cfg.output_dir == "runs/hyperelasticity"

    def test_default_lr_tracks_regularizer_order(self, tmp_path):
        cfg = parse_config(
            write(tmp_path, "problem: hyperelasticity\nregularizer: {p: 0, lambda: 1.0}\n")
        )
        assert cfg.map.lr == 0.08

    def test_default_hidden_tracks_problem(self, tmp_path):
        cfg = parse_config(write(tmp_path, "problem: mechanochemistry\n"))
        assert cfg.architecture.hidden == (4, 16, 4)
        assert cfg.architecture.with_biases is True

    def test_gate_seed_falls_back_to_seed(self, tmp_path):
        cfg = parse_config(write(tmp_path, "problem: hyperelasticity\nmap: {seed: 5}\n"))
        assert cfg.map.resolved_gate_seed == 5
        cfg = parse_config(
            write(tmp_path, "problem: hyperelasticity\nmap: {seed: 5, gate_seed: 9}\n")
        )
        assert cfg.map.resolved_gate_seed == 9


class TestValidation:
    def test_missing_problem(self, tmp_path):
        with pytest.raises(ConfigValidationError, match="problem"):
            parse_config(write(tmp_path, "regularizer: {p: 2}\n"))

    def test_unknown_problem(self, tmp_path):
        with pytest.raises(ConfigValidationError, match="problem"):
            parse_config(write(tmp_path, "problem: elasticity\n"))

    def test_negative_lambda_names_key_and_line(self, tmp_path):
        path = write(
            tmp_path,
            """\
            problem: hyperelasticity
            regularizer:
              lambda: -1
            """,
        )
        with pytest.raises(ConfigValidationError, match="regularizer.lambda") as err:
            parse_config(path)
        assert err.value.line == 3

    def test_unknown_key_suggests_closest(self, tmp_path):
        path = write(
            tmp_path,
            """\
            problem: hyperelasticity
            method:
              particlez: 5
            """,
        )
        with pytest.raises(ConfigValidationError, match="did you mean 'particles'"):
            parse_config(path)

    def test_type_mismatch(self, tmp_path):
        with pytest.raises(ConfigValidationError, match="expected int"):
            parse_config(write(tmp_path, "problem: hyperelasticity\ndata: {n: many}\n"))

    def test_bool_is_not_a_count(self, tmp_path):
        with pytest.raises(ConfigValidationError, match="data.n"):
            parse_config(write(tmp_path, "problem: hyperelasticity\ndata: {n: true}\n"))

    @pytest.mark.parametrize(
        "snippet, key",
        [
            ("regularizer: {p: 3}", "regularizer.p"),
            ("regularizer: {mc_samples: 0}", "regularizer.mc_samples"),
            ("data: {n: 0}", "data.n"),
            ("data: {eps: 1.0}", "data.eps"),
            ("map: {lr: 0.0}", "map.lr"),
            ("map: {epochs: -1}", "map.epochs"),
            ("method: {kind: nuts}", "method.kind"),
            ("method: {particles: 0}", "method.particles"),
            ("method: {iterations: -1}", "method.iterations"),
            ("method: {lr: -0.1}", "method.lr"),
            ("method: {spread: -0.1}", "method.spread"),
            ("method: {subspace_threshold: 0.0}", "method.subspace_threshold"),
            ("method: {post_prune_lambda: -1}", "method.post_prune_lambda"),
            ("architecture: {hidden: []}", "architecture.hidden"),
            ("architecture: {hidden: [4, 0]}", "architecture.hidden"),
        ],
    )
    def test_out_of_range_values(self, tmp_path, snippet, key):
        with pytest.raises(ConfigValidationError, match=key.replace(".", r"\.")):
            parse_config(write(tmp_path, f"problem: hyperelasticity\n{snippet}\n"))

    def test_bad_noise_kind(self, tmp_path):
        with pytest.raises(ConfigValidationError, match="data.noise"):
            parse_config(
                write(tmp_path, "problem: hyperelasticity\ndata: {noise: {kind: salt}}\n")
            )

    def test_invalid_hmc_section_is_wrapped(self, tmp_path):
        path = write(
            tmp_path,
            """\
            problem: gaussian-demo
            method:
              kind: hmc
              hmc:
                step_size: -0.5
            """,
        )
        with pytest.raises(ConfigValidationError, match="method.hmc"):
            parse_config(path)

    def test_hmc_section_built_for_hmc_kind(self, tmp_path):
        cfg = parse_config(
            write(
                tmp_path,
                """\
                problem: gaussian-demo
                method:
                  kind: hmc
                  hmc: {step_size: 0.5, n_leapfrog: 8, chain_length: 100, burn_in: 10}
                """,
            )
        )
        assert cfg.method.hmc == HMCConfig(0.5, 8, 100, burn_in=10)

    def test_hmc_section_ignored_content_still_checked(self, tmp_path):
        with pytest.raises(ConfigValidationError, match="method.hmc.step_sizes"):
            parse_config(
                write(
                    tmp_path,
                    "problem: gaussian-demo\nmethod: {kind: svgd, hmc: {step_sizes: 1}}\n",
                )
            )


class TestParsing:
    def test_malformed_yaml_reports_line(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("problem: hyperelasticity\nmethod: [unclosed\n")
        with pytest.raises(ConfigParseError) as err:
            parse_config(path)
        assert err.value.line is not None

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text("")
        with pytest.raises(ConfigParseError):
            parse_config(path)

    def test_top_level_not_mapping(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text("- a\n- b\n")
        with pytest.raises(ConfigValidationError):
            parse_config(path)

    def test_error_hierarchy(self):
        assert issubclass(ConfigParseError, ConfigError)
        assert issubclass(ConfigValidationError, ConfigError)


class TestHashing:
    def test_hash_stable_across_parses(self, tmp_path):
        text = "problem: hyperelasticity\nregularizer: {p: 0, lambda: 10.0}\n"
        h1 = config_hash(parse_config(write(tmp_path, text)))
        h2 = config_hash(parse_config(write(tmp_path, text)))
        assert h1 == h2
        assert len(h1) == 64

    def test_hash_ignores_output_dir(self):
        a = config_from_dict({"problem": "gaussian-demo", "output_dir": "/tmp/a"})
        b = config_from_dict({"problem": "gaussian-demo", "output_dir": "/tmp/b"})
        assert config_hash(a) == config_hash(b)

    def test_hash_sees_content_changes(self):
        a = config_from_dict({"problem": "gaussian-demo", "method": {"seed": 1}})
        b = config_from_dict({"problem": "gaussian-demo", "method": {"seed": 2}})
        assert config_hash(a) != config_hash(b)


class TestEnvOverrides:
    def test_output_dir_override(self, monkeypatch):
        cfg = config_from_dict({"problem": "gaussian-demo", "output_dir": "runs/x"})
        monkeypatch.setenv("STEINUQ_OUTPUT_DIR", "/tmp/elsewhere")
        assert apply_env_overrides(cfg).output_dir == "/tmp/elsewhere"

    def test_no_override_without_env(self, monkeypatch):
        monkeypatch.delenv("STEINUQ_OUTPUT_DIR", raising=False)
        cfg = config_from_dict({"problem": "gaussian-demo", "output_dir": "runs/x"})
        assert apply_env_overrides(cfg).output_dir == "runs/x"
