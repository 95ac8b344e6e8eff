"""Run configuration loaded from JSON and echoed into every manifest."""

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from gppp.bayes_core import HmcConfig, PriorSpec
from gppp.data_model import SampleSchema
from gppp.errors import ConfigError
from gppp.joint_model import OUTCOME_FAMILIES
from gppp.simstudy import ALL_SCENARIOS, Scenario, SimIConfig, SimIIConfig

logger = logging.getLogger(__name__)

COMMANDS = ("estimate", "simulate", "diagnose")
ESTIMATE_METHODS = ("GPPP", "LWP", "PM", "AIPW", "PAPP", "UW")
TEST_MODE_ENV = "GPPP_TEST_MODE"


@dataclass(frozen=True)
class EstimationConfig:
    """Settings shared by every estimator

    ``qr`` / ``pm`` are covariate recipes (column expressions); empty means
    the schema's x columns for QR and x + d for PM.
    """

    methods: tuple = ("GPPP",)
    family: str = "normal"
    qr: tuple = ()
    pm: tuple = ()
    hmc: HmcConfig = field(default_factory=HmcConfig)
    bootstrap_B: int = 100
    basis_size: int = 10
    boundary_factor: float = 1.25
    conjugacy: str = "shifted"
    polya_alpha: float = None
    weight_tolerance: float = 0.0
    use_known_pi_R: bool = True
    level: float = 0.95
    priors: dict = None

    def __post_init__(self):
        if self.family not in OUTCOME_FAMILIES:
            raise ConfigError(f"unknown family '{self.family}'; expected one of {OUTCOME_FAMILIES}")
        if self.bootstrap_B < 2:
            raise ConfigError("bootstrap_B must be at least 2")
        if self.conjugacy not in ("shifted", "standard"):
            raise ConfigError("conjugacy must be 'shifted' or 'standard'")
        if not 0 < self.level < 1:
            raise ConfigError("level must lie in (0, 1)")

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown estimation setting(s): {sorted(unknown)}")
        if "hmc" in data:
            data["hmc"] = HmcConfig.from_dict(data["hmc"])
        if data.get("priors"):
            data["priors"] = {name: PriorSpec.from_dict(spec) for name, spec in data["priors"].items()}
        for key in ("methods", "qr", "pm"):
            if key in data:
                data[key] = tuple(data[key])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self):
        out = asdict(self)
        out["hmc"] = self.hmc.to_dict()
        out["priors"] = {k: v.to_dict() for k, v in self.priors.items()} if self.priors else None
        for key in ("methods", "qr", "pm"):
            out[key] = list(out[key])
        return out


@dataclass(frozen=True)
class SimulationConfig:
    study: object = field(default_factory=SimIConfig)
    scenarios: tuple = ALL_SCENARIOS
    methods: tuple = ("UW", "FW", "PAPP", "AIPW", "GPPP", "LWP")

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        study = dict(data.pop("study", {"study": 1}))
        kind = study.pop("study", 1)
        if kind not in (1, 2):
            raise ConfigError(f"study must be 1 or 2, got {kind}")
        try:
            population = SimIConfig(**study) if kind == 1 else SimIIConfig(**study)
        except TypeError as exc:
            raise ConfigError(f"invalid study settings: {exc}") from exc
        scenarios = tuple(Scenario.parse(s) for s in data.pop("scenarios", [s.label for s in ALL_SCENARIOS]))
        methods = tuple(data.pop("methods", cls.methods))
        if data:
            raise ConfigError(f"unknown simulation setting(s): {sorted(data)}")
        return cls(study=population, scenarios=scenarios, methods=methods)

    def to_dict(self):
        return {
            "study": self.study.to_dict(),
            "scenarios": [s.label for s in self.scenarios],
            "methods": list(self.methods),
        }


@dataclass(frozen=True)
class RunConfig:
    command: str
    seed: int
    schema: SampleSchema = None
    estimation: EstimationConfig = field(default_factory=EstimationConfig)
    simulation: SimulationConfig = None
    population_size: int = None
    data_path: str = None
    output_dir: str = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command '{self.command}'; expected one of {COMMANDS}")
        if self.seed is None:
            raise ConfigError("a seed is required")
        if self.command in ("estimate", "diagnose") and self.schema is None:
            raise ConfigError(f"'{self.command}' needs a 'schema' section naming the data columns")
        if self.command == "estimate":
            unknown = [m for m in self.estimation.methods if m not in ESTIMATE_METHODS]
            if unknown:
                raise ConfigError(f"unknown method(s) {unknown}; valid methods are {list(ESTIMATE_METHODS)}")

    def to_dict(self):
        return {
            "command": self.command,
            "seed": self.seed,
            "schema": self.schema.to_dict() if self.schema else None,
            "estimation": self.estimation.to_dict(),
            "simulation": self.simulation.to_dict() if self.simulation else None,
            "population_size": self.population_size,
            "data_path": self.data_path,
            "output_dir": self.output_dir,
        }


def _default_seed():
    if os.environ.get(TEST_MODE_ENV):
        raise ConfigError(f"a seed is required when {TEST_MODE_ENV} is set")
    seed = int.from_bytes(os.urandom(4), "little")
    logger.warning("No seed configured; drew seed %d", seed)
    return seed


def run_config_from_dict(data, command, seed=None, data_path=None, output_dir=None):
    """Build a RunConfig; explicit arguments override the JSON values"""
    data = dict(data)
    seed = seed if seed is not None else data.get("seed")
    if seed is None:
        seed = _default_seed()
    estimation = EstimationConfig.from_dict(data.get("estimation", {}))
    simulation = SimulationConfig.from_dict(data["simulation"]) if "simulation" in data else None
    if command == "simulate" and simulation is None:
        simulation = SimulationConfig()
    schema = SampleSchema.from_dict(data["schema"]) if "schema" in data else None
    return RunConfig(
        command=command,
        seed=int(seed),
        schema=schema,
        estimation=estimation,
        simulation=simulation,
        population_size=data.get("population_size"),
        data_path=data_path or data.get("data_path"),
        output_dir=output_dir or data.get("output_dir"),
    )


def load_run_config(path, command, seed=None, data_path=None, output_dir=None):
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return run_config_from_dict(data, command, seed, data_path, output_dir)
