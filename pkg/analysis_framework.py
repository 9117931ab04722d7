import json
import logging
import os
import time

import numpy as np
import pandas as pd

from cube_family import build_family
from example_measures import generate_function, generate_measure
from measure_core import AnalysisContext, Cube, load_function, load_measure
from parallel_sweeps import set_threads
from scenario_commands import COMMANDS, CommandResult, ScenarioInputs

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_VALIDATION_FAILED = 2


class Model:
    """Wrapper class for one analysis command (any callable taking the scenario inputs and parameters)."""

    def __init__(self, name: str, command):
        """Takes in the command as a function or callable class."""
        if not callable(command):
            raise ValueError("The command must be a function or callable class.")
        self.name = name
        self.command = command

    def calculate(self, inputs: ScenarioInputs, params: dict) -> CommandResult:
        """Run the command on the scenario inputs."""
        return self.command(inputs, params)


def default_models() -> dict[str, Model]:
    return {name: Model(name, command) for name, command in COMMANDS.items()}


def to_plain(value):
    """Convert numpy scalars/arrays, cubes and tuples into JSON-ready Python objects."""
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_plain(v) for v in value.tolist()]
    if isinstance(value, Cube):
        return value.to_dict()
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (complex, np.complexfloating)):
        return {"re": float(value.real), "im": float(value.imag)}
    return value


def write_json(path: str, data: dict) -> None:
    """Sorted keys and shortest round-trip floats, so equal data gives equal bytes."""
    with open(path, "w") as file:
        json.dump(to_plain(data), file, sort_keys=True, indent=2)
        file.write("\n")


def write_table(path: str, table: pd.DataFrame) -> None:
    table.to_csv(path, index=False)


class Manager:
    """The orchestrator that turns one resolved scenario into report files."""

    def __init__(self, models: dict[str, Model], settings_configuration: dict):
        self.models = models
        self.settings_configuration = settings_configuration

    def build_inputs(self) -> ScenarioInputs:
        config = self.settings_configuration
        measure_spec = config["measure"]
        if "file" in measure_spec:
            mu, n = load_measure(measure_spec["file"])
        else:
            mu, n = generate_measure(measure_spec["generator"], measure_spec.get("params"))

        context = config["context"]
        n = context.get("n") or n
        ctx = AnalysisContext.build(mu, n=n, rho=context.get("rho", 2.0), beta_d=context.get("beta_d"),
                                    p0=context.get("p0"))

        f = None
        function_spec = config.get("function")
        if function_spec:
            if "file" in function_spec:
                f = load_function(function_spec["file"], mu)
            else:
                f = generate_function(function_spec["generator"], mu, function_spec.get("params"))

        family_spec = dict(config["family"])
        extra = [Cube(c["center"], c["side"]) for c in family_spec.pop("extra_cubes", [])]
        family = build_family(mu, ctx, extra_cubes=extra, **family_spec)
        return ScenarioInputs(mu=mu, ctx=ctx, family=family, f=f, seed=int(config["seed"]))

    def run_analysis(self, out_dir: str | None = None) -> int:
        """Run the scenario command and write report.json, the CSV tables and timings.json."""
        config = self.settings_configuration
        out_dir = out_dir or config["output"]["dir"]
        os.makedirs(out_dir, exist_ok=True)
        set_threads(config["threads"])
        timings = {}

        start = time.perf_counter()
        inputs = self.build_inputs()
        timings["setup"] = time.perf_counter() - start

        model = self.models[config["command"]]
        start = time.perf_counter()
        result = model.calculate(inputs, config["params"])
        timings["command"] = time.perf_counter() - start

        report = {
            "config": {k: v for k, v in config.items() if k not in ("threads", "output")},
            "context": inputs.ctx.to_dict(),
            "measure": {"points": inputs.mu.size, "d": inputs.mu.d, "r_min": inputs.mu.r_min},
            "family_size": len(inputs.family),
            "outputs": result.outputs,
            "tables": sorted(result.tables),
            "status": "ok" if result.valid else "validation_failed",
        }
        write_json(os.path.join(out_dir, "report.json"), report)
        for name, table in result.tables.items():
            write_table(os.path.join(out_dir, f"{name}.csv"), table)
        write_json(os.path.join(out_dir, "timings.json"), timings)
        logger.info("config %s (%s) finished in %.2fs, status %s", config["config_id"], config["command"],
                    timings["setup"] + timings["command"], report["status"])
        return EXIT_OK if result.valid else EXIT_VALIDATION_FAILED
