import copy
import json

import numpy as np
import pytest

from deom.cli import EXIT_BUDGET, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_OK, main
from deom.config import build_expansion, build_spectral_density, parse_config, resolve
from deom.errors import ConfigurationError
from deom.frames import FrameTrajectory, RotationSpec
from deom.model import ring_model
from deom.operators import Operator
from deom.oracles import closed_system_oracle

MINIMAL = {
    "system": {"type": "two_level"},
    "bath": {"family": "drude", "lambda": 0.05, "gamma": 1.0, "beta": 1.0},
}

DEPHASING = {
    "system": {"type": "two_level", "omega0": 1.0, "coupling": "sz",
               "initial_state": {"kind": "vector", "vector": [[1, 0], [1, 0]]}},
    "bath": {"family": "drude", "lambda": 0.05, "gamma": 1.0, "beta": 1.0, "K": 2},
    "hierarchy": {"L": 3, "dt": 0.01, "t_final": 2.0, "stride": 20},
    "output": {"observables": ["population_0", "coherence_0_1", "coupling_energy",
                               "moment_x_0"]},
}


def write(tmp_path, cfg, name="cfg.json"):
    cfg = copy.deepcopy(cfg)
    cfg.setdefault("output", {})
    cfg["output"].setdefault("path", str(tmp_path / "out.csv"))
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p, cfg["output"]["path"]


def read_csv(path):
    with open(path) as fh:
        head = fh.readline().strip().split(",")
    return head, np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


class TestConfig:
    def test_minimal_defaults(self, tmp_path):
        p, _ = write(tmp_path, MINIMAL)
        cfg = parse_config(p)
        assert cfg["hierarchy"]["L"] == 4 and cfg["bath"]["expansion"] == "pade"
        assert cfg["frame"]["rotation"]["omega"] == 0.0
        assert cfg["field_frame"]["mode"] == "static"

    def test_all_errors_reported(self):
        raw = copy.deepcopy(MINIMAL)
        raw["bath"]["beta"] = -1.0
        raw["bath"]["gama"] = 2.0
        with pytest.raises(ConfigurationError) as info:
            resolve(raw)
        errs = info.value.errors
        assert any(e.startswith("bath.beta") and "positive" in e for e in errs)
        assert any("bath.gama" in e and "'gamma'" in e for e in errs)

    def test_unknown_section_and_missing_required(self):
        with pytest.raises(ConfigurationError) as info:
            resolve({"sytem": {}, "bath": {"family": "drude"}})
        errs = info.value.errors
        assert any("'system'" in e for e in errs)
        assert any(e.startswith("bath.beta: required") for e in errs)

    def test_type_and_choice_errors(self):
        raw = copy.deepcopy(MINIMAL)
        raw["hierarchy"] = {"L": 2.5, "scaling": "yes"}
        raw["bath"]["expansion"] = "pad"
        with pytest.raises(ConfigurationError) as info:
            resolve(raw)
        errs = info.value.errors
        assert len(errs) == 3
        assert any("'pade'" in e for e in errs)

    def test_resolved_config_is_a_fixed_point(self):
        cfg = resolve(copy.deepcopy(DEPHASING))
        assert resolve(json.loads(json.dumps(cfg))) == cfg

    def test_bath_builders(self):
        cfg = resolve(copy.deepcopy(DEPHASING))
        exp = build_expansion(cfg, build_spectral_density(cfg))
        assert exp.K == 3 and exp.method == "pade"


class TestRun:
    def test_outputs_and_manifest(self, tmp_path):
        p, out = write(tmp_path, DEPHASING)
        assert main(["run", str(p)]) == EXIT_OK
        head, data = read_csv(out)
        assert head == ["t", "population_0.re", "population_0.im", "coherence_0_1.re",
                        "coherence_0_1.im", "coupling_energy.re", "coupling_energy.im",
                        "moment_x_0.re", "moment_x_0.im"]
        assert data.shape == (11, 9)
        np.testing.assert_allclose(data[:, 0], np.linspace(0, 2, 11), atol=1e-12)
        man = json.loads(open(out + ".manifest.json").read())
        assert man["catalog_size"] == 20 and man["M"] == 3 and man["L"] == 3
        assert man["fit_report"]["samples"] == 51
        assert "wall_time_s" in man and man["steps"] == 200
        assert resolve(man["config"]) == man["config"]

    def test_byte_identical(self, tmp_path):
        p, out = write(tmp_path, DEPHASING)
        main(["run", str(p), "--output", str(tmp_path / "a.csv")])
        main(["run", str(p), "--output", str(tmp_path / "b.csv")])
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_stride_override(self, tmp_path):
        p, out = write(tmp_path, DEPHASING)
        main(["run", str(p), "--stride", "100"])
        assert read_csv(out)[1].shape[0] == 3

    def test_uncoupled_matches_closed_system_oracle(self, tmp_path):
        cfg = {
            "system": {"type": "ring", "m_max": 2, "charge": 0.0, "barrier": 0.3,
                       "initial_state": {"kind": "vector",
                                         "vector": [[1, 0], [1, 0], [1, 0], [0, 1], [1, 0]]}},
            "frame": {"rotation": {"axis": [0, 0, 1], "omega": 0.3}},
            "bath": {"family": "drude", "lambda": 0.1, "beta": 1.0, "K": 1},
            "hierarchy": {"L": 1, "dt": 0.001, "t_final": 2.0, "stride": 500},
            "output": {"observables": ["coherence_0_3", "population_2"]},
        }
        p, out = write(tmp_path, cfg)
        assert main(["run", str(p)]) == EXIT_OK
        _, data = read_csv(out)
        ring = ring_model(2, barrier=0.3)
        v = np.array([1, 1, 1, 1j, 1]) / np.sqrt(5)
        rho0 = Operator(ring.basis, np.outer(v, v.conj()))
        frame = FrameTrajectory(rotation=RotationSpec.constant((0, 0, 1), 0.3))
        ref = closed_system_oracle(ring, frame, rho0, data[:, 0]).values
        assert np.max(np.abs(data[:, 1] + 1j * data[:, 2] - ref[:, 0, 3])) < 1e-8
        assert np.max(np.abs(data[:, 3] - ref[:, 2, 2].real)) < 1e-8

    def test_budget_exit_code(self, tmp_path, capsys):
        cfg = copy.deepcopy(DEPHASING)
        cfg["hierarchy"].update(L=30, memory_budget_mb=0.01)
        p, _ = write(tmp_path, cfg)
        assert main(["run", str(p)]) == EXIT_BUDGET
        assert "catalog size" in capsys.readouterr().err

    def test_divergence_exit_code(self, tmp_path, capsys):
        cfg = copy.deepcopy(DEPHASING)
        cfg["system"]["coupling"] = "sx"
        cfg["bath"].update({"lambda": 0.5, "K": 4})
        cfg["hierarchy"].update(dt=0.5, t_final=200.0)
        p, _ = write(tmp_path, cfg)
        with pytest.warns(RuntimeWarning):
            assert main(["run", str(p)]) == EXIT_DIVERGENCE
        assert "tier=" in capsys.readouterr().err

    def test_config_exit_code(self, tmp_path, capsys):
        cfg = copy.deepcopy(MINIMAL)
        cfg["bath"]["gama"] = 1.0
        p, _ = write(tmp_path, cfg)
        assert main(["run", str(p)]) == EXIT_CONFIG
        assert "did you mean 'gamma'" in capsys.readouterr().err
        assert main(["run", str(tmp_path / "missing.json")]) == EXIT_CONFIG

    def test_bad_observable_is_config_error(self, tmp_path):
        cfg = copy.deepcopy(DEPHASING)
        cfg["output"]["observables"] = ["population_5"]
        p, _ = write(tmp_path, cfg)
        assert main(["run", str(p)]) == EXIT_CONFIG


class TestResume:
    def test_resume_reproduces_uninterrupted_run(self, tmp_path):
        full, out_full = write(tmp_path, DEPHASING, "full.json")
        main(["run", str(full), "--output", str(tmp_path / "full.csv")])

        half = copy.deepcopy(DEPHASING)
        half["hierarchy"].update(t_final=1.0, checkpoint_path=str(tmp_path / "ck_{step}.json"))
        p, _ = write(tmp_path, half, "half.json")
        main(["run", str(p), "--output", str(tmp_path / "half.csv")])
        ck = tmp_path / "ck_100.json"
        assert ck.exists()
        assert main(["resume", str(ck), "--t-final", "2.0",
                     "--output", str(tmp_path / "rest.csv")]) == EXIT_OK

        full_lines = (tmp_path / "full.csv").read_text().splitlines()
        half_lines = (tmp_path / "half.csv").read_text().splitlines()
        rest_lines = (tmp_path / "rest.csv").read_text().splitlines()
        assert half_lines + rest_lines[1:] == full_lines

    def test_periodic_checkpoints(self, tmp_path):
        cfg = copy.deepcopy(DEPHASING)
        cfg["hierarchy"].update(checkpoint_every=50, checkpoint_path=str(tmp_path / "ck{step}.json"))
        p, _ = write(tmp_path, cfg)
        main(["run", str(p)])
        assert sorted(f.name for f in tmp_path.glob("ck*.json")) == [
            "ck100.json", "ck150.json", "ck200.json", "ck50.json"]

    def test_checkpoint_without_path_rejected(self):
        cfg = copy.deepcopy(DEPHASING)
        cfg["hierarchy"]["checkpoint_every"] = 10
        with pytest.raises(ConfigurationError):
            resolve(cfg)


class TestValidate:
    def run_validate(self, tmp_path, capsys, cfg):
        p, _ = write(tmp_path, cfg)
        assert main(["validate", str(p)]) == EXIT_OK
        report = json.loads(capsys.readouterr().out)
        return {e["name"]: e for e in report["checks"]}, report

    def test_dephasing_config(self, tmp_path, capsys):
        cfg = copy.deepcopy(DEPHASING)
        cfg["hierarchy"].update(L=6, dt=0.005, t_final=3.0)
        cfg["validate"] = {"convergence_tol": 1e-5}
        checks, report = self.run_validate(tmp_path, capsys, cfg)
        for name in ("spectral_symmetry", "trace_conservation", "conjugacy",
                     "pure_dephasing_oracle", "hierarchy_convergence"):
            assert checks[name]["passed"], checks[name]
        assert checks["pure_dephasing_oracle"]["value"] < 1e-4

    def test_low_L_flagged(self, tmp_path, capsys):
        cfg = copy.deepcopy(DEPHASING)
        cfg["system"]["coupling"] = "sx"
        cfg["bath"]["lambda"] = 0.3
        cfg["hierarchy"].update(L=1, t_final=3.0)
        checks, report = self.run_validate(tmp_path, capsys, cfg)
        assert not checks["hierarchy_convergence"]["passed"]
        assert not report["all_passed"]

    def test_uncoupled_uses_closed_system_oracle(self, tmp_path, capsys):
        cfg = copy.deepcopy(DEPHASING)
        cfg["system"].update(charge=0.0, coupling="sx")
        cfg["hierarchy"].update(dt=0.001, stride=200)
        checks, _ = self.run_validate(tmp_path, capsys, cfg)
        assert checks["closed_system_oracle"]["passed"]
        assert checks["hierarchy_convergence"]["value"] == 0.0


class TestCheckBath:
    def test_report(self, tmp_path, capsys):
        cfg = copy.deepcopy(MINIMAL)
        cfg["bath"].update(K=6)
        cfg["validate"] = {"fit_tolerance": 1e-6}
        p, _ = write(tmp_path, cfg)
        assert main(["check-bath", str(p)]) == EXIT_OK
        report = json.loads(capsys.readouterr().out)
        assert report["all_passed"]
        assert report["expansion"]["method"] == "pade"
        assert len(report["expansion"]["exponents"]) == 7

    def test_ohmic_rejected_with_guidance(self, tmp_path, capsys):
        cfg = copy.deepcopy(MINIMAL)
        cfg["bath"] = {"family": "ohmic_exponential", "eta": 0.1, "beta": 1.0}
        p, _ = write(tmp_path, cfg)
        assert main(["check-bath", str(p)]) == EXIT_CONFIG
        assert "drude" in capsys.readouterr().err
