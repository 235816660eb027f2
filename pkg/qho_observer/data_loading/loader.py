"""
Problem configuration loader for QhoObserver.

This module parses YAML problem documents into oscillator, composite or
autonomous-observer problems and resolves the fixtures shipped with the package.
Every error is reported as a ConfigError anchored to the line of the offending key.
"""

import os
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np
import yaml

from qho_observer.coupling.composite import PlantObserverSystem
from qho_observer.errors import ConfigError, NumericalError
from qho_observer.logger import get_logger
from qho_observer.oscillator import qho
from qho_observer.synthesis.autonomous import AutonomousObserverProblem, structure_check

log = get_logger("data_loading.loader")

FIXTURE_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "fixtures")
FIXTURES = {
    "EX1": "ex1.yaml",
    "EX2": "ex2.yaml",
}

KIND_OSCILLATOR = "oscillator"
KIND_COMPOSITE = "composite"
KIND_AUTONOMOUS = "autonomous"

SECTIONS = ("plant", "observer", "coupling", "weights", "horizon")
SECTION_KEYS = {
    "plant": ("theta", "K", "sigma1"),
    "observer": ("theta", "M", "sigma2"),
    "coupling": ("L",),
    "weights": ("S0", "S1", "S2", "Pi", "lambda", "mu"),
    "horizon": ("tau",),
}


class LineMapping(dict):
    """Mapping that remembers the line of each key (1-based)."""

    def __init__(self, *args, line: int = 1, **kwargs):
        super().__init__(*args, **kwargs)
        self.line = line
        self.key_lines: Dict[Any, int] = {}

    def line_of(self, key) -> int:
        return self.key_lines.get(key, self.line)


class LineLoader(yaml.SafeLoader):
    """SafeLoader that builds LineMapping objects and rejects duplicate keys."""

    def construct_mapping(self, node, deep=False):
        self.flatten_mapping(node)
        mapping = LineMapping(line=node.start_mark.line + 1)
        for key_node, value_node in node.value:
            key = self.construct_object(key_node, deep=deep)
            line = key_node.start_mark.line + 1
            if key in mapping:
                raise ConfigError(f"duplicate key {key!r}", self.name, line)
            mapping[key] = self.construct_object(value_node, deep=deep)
            mapping.key_lines[key] = line
        return mapping


def _construct_line_mapping(loader, node):
    return loader.construct_mapping(node, deep=True)


LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_line_mapping)


@dataclass(frozen=True, eq=False)
class ProblemConfig:
    """
    A parsed problem.

    ``model`` and ``init`` describe the plant alone and are present for every kind;
    ``system`` is set for composite and autonomous configs, ``autonomous`` for the
    latter only. ``document`` is the plain parsed YAML, echoed in the run manifest.
    """
    kind: str
    source: str
    model: qho.QhoModel
    init: qho.InitialMoments
    tau: Optional[float] = None
    system: Optional[PlantObserverSystem] = None
    autonomous: Optional[AutonomousObserverProblem] = None
    document: Dict[str, Any] = field(default_factory=dict)


def canonical_ccr(order: int) -> np.ndarray:
    """Theta = (1/2) I_{order/2} x J with J = [[0, 1], [-1, 0]]."""
    if order <= 0 or order % 2:
        raise ValueError(f"canonical CCR needs a positive even order, got {order}")
    return 0.5 * np.kron(np.eye(order // 2), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def resolve_source(config: str) -> str:
    """Map a fixture name (EX1, EX2) to its bundled file; pass file paths through."""
    if not isinstance(config, str):
        raise ValueError(f"config must be a string, got {type(config).__name__}")
    if not config:
        raise ValueError("config cannot be empty")
    key = config.upper()
    if key in FIXTURES and not os.path.exists(config):
        return os.path.join(FIXTURE_DIR, FIXTURES[key])
    return config


def _plain(value):
    """Strip line bookkeeping for the manifest echo."""
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_plain(v) for v in value]
    return value


def _scalar(value) -> Optional[float]:
    """Float value of a YAML scalar; strings like 1e-3 (not floats in YAML 1.1) are accepted."""
    if isinstance(value, bool):
        return None
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            return None
    return None


class _Reader:
    """Typed accessors over one parsed document, raising line-anchored ConfigErrors."""

    def __init__(self, document: LineMapping, source: str):
        self.document = document
        self.source = source

    def fail(self, message: str, mapping: Optional[LineMapping] = None, key: Optional[str] = None,
             path: Optional[str] = None) -> ConfigError:
        line = mapping.line_of(key) if mapping is not None else None
        if path is None and key is not None:
            path = key
        return ConfigError(message, self.source, line, path)

    def section(self, name: str, required: bool) -> Optional[LineMapping]:
        if name not in self.document:
            if required:
                raise self.fail(f"missing section '{name}'", self.document)
            return None
        value = self.document[name]
        if not isinstance(value, LineMapping):
            raise self.fail("section must be a mapping", self.document, name)
        unknown = [k for k in value if k not in SECTION_KEYS[name]]
        if unknown:
            raise self.fail(f"unknown key {unknown[0]!r}", value, unknown[0], f"{name}.{unknown[0]}")
        return value

    def matrix(self, mapping: LineMapping, section: str, key: str) -> np.ndarray:
        path = f"{section}.{key}"
        if key not in mapping:
            raise self.fail("missing matrix", mapping, None, path)
        rows = mapping[key]
        if not isinstance(rows, list) or not rows or not all(isinstance(r, list) for r in rows):
            raise self.fail("matrix must be a list of rows", mapping, key, path)
        width = len(rows[0])
        if width == 0 or any(len(r) != width for r in rows):
            raise self.fail("matrix rows must be nonempty and of equal length", mapping, key, path)
        values = [[_scalar(entry) for entry in row] for row in rows]
        for row, parsed in zip(rows, values):
            for entry, value in zip(row, parsed):
                if value is None:
                    raise self.fail(f"matrix entry {entry!r} is not a number", mapping, key, path)
        return np.array(values, dtype=float)

    def number(self, mapping: LineMapping, section: str, key: str) -> float:
        path = f"{section}.{key}"
        value = _scalar(mapping[key])
        if value is None:
            raise self.fail(f"expected a number, got {mapping[key]!r}", mapping, key, path)
        if not np.isfinite(value) or value <= 0.0:
            raise self.fail(f"expected a positive finite number, got {value}", mapping, key, path)
        return value

    def keyword_or_matrix(self, mapping: LineMapping, section: str, key: str, keywords):
        value = mapping.get(key)
        if isinstance(value, str):
            if value not in keywords:
                raise self.fail(f"expected a matrix or one of {', '.join(keywords)}, got {value!r}",
                                mapping, key, f"{section}.{key}")
            return value
        return self.matrix(mapping, section, key)

    def checked(self, build, mapping: LineMapping, section: str, key: Optional[str]):
        """Run ``build`` and re-raise model errors as ConfigErrors at ``key``."""
        try:
            return build()
        except (NumericalError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            path = f"{section}.{key}" if key else section
            raise self.fail(str(e), mapping, key, path) from e


def _ccr(reader: _Reader, mapping: LineMapping, section: str, order: int,
         plant_theta: Optional[np.ndarray] = None) -> np.ndarray:
    value = reader.keyword_or_matrix(mapping, section, "theta",
                                     ("canonical", "plant") if plant_theta is not None else ("canonical",))
    if isinstance(value, str):
        if value == "plant":
            return plant_theta
        return reader.checked(lambda: canonical_ccr(order), mapping, section, "theta")
    return reader.checked(lambda: qho.validate_ccr(value, f"{section}.theta"), mapping, section, "theta")


def parse_problem(document, source: str = "<string>") -> ProblemConfig:
    """
    Build a ProblemConfig from a parsed YAML document.

    Raises:
    -------
    ConfigError
        For unknown sections or keys, malformed matrices and any model data the
        numerical layer rejects.
    """
    if not isinstance(document, LineMapping):
        raise ConfigError("document must be a mapping", source, 1)
    reader = _Reader(document, source)
    unknown = [k for k in document if k not in SECTIONS]
    if unknown:
        raise reader.fail(f"unknown section {unknown[0]!r}", document, unknown[0])

    plant = reader.section("plant", required=True)
    k_energy = reader.matrix(plant, "plant", "K")
    theta1 = _ccr(reader, plant, "plant", k_energy.shape[0])
    model = reader.checked(lambda: qho.build_model(theta1, k_energy), plant, "plant", "K")
    sigma1 = reader.matrix(plant, "plant", "sigma1")
    init = reader.checked(lambda: qho.InitialMoments.from_sigma(sigma1, model.theta), plant, "plant", "sigma1")

    horizon = reader.section("horizon", required=False)
    tau = None
    if horizon is not None and "tau" in horizon:
        tau = reader.number(horizon, "horizon", "tau")

    observer = reader.section("observer", required=False)
    if observer is None:
        for name in ("coupling", "weights"):
            if name in document:
                raise reader.fail("section needs an 'observer' section", document, name)
        log.debug(f"{source}: single oscillator of order {model.n}")
        return ProblemConfig(kind=KIND_OSCILLATOR, source=source, model=model, init=init, tau=tau,
                             document=_plain(document))

    if tau is None:
        raise reader.fail("composite problems need horizon.tau", document, "horizon" if horizon is not None else None,
                          "horizon.tau")

    m_value = reader.keyword_or_matrix(observer, "observer", "M", ("mirror",))
    mirror = isinstance(m_value, str)
    m_energy = model.energy if mirror else m_value
    theta2 = _ccr(reader, observer, "observer", m_energy.shape[0], plant_theta=model.theta)
    sigma2 = reader.matrix(observer, "observer", "sigma2")
    reader.checked(lambda: qho.InitialMoments.from_sigma(sigma2, theta2), observer, "observer", "sigma2")

    coupling_section = reader.section("coupling", required=False)
    if coupling_section is None or "L" not in coupling_section:
        coupling = np.zeros((model.n, theta2.shape[0]))
    else:
        value = reader.keyword_or_matrix(coupling_section, "coupling", "L", ("zero",))
        coupling = np.zeros((model.n, theta2.shape[0])) if isinstance(value, str) else value

    weights = reader.section("weights", required=True)
    if "S0" in weights:
        if "S1" in weights or "S2" in weights:
            raise reader.fail("give either S0 or S1 and S2", weights, "S0", "weights.S0")
        s1 = s2 = reader.matrix(weights, "weights", "S0")
    else:
        s1 = reader.matrix(weights, "weights", "S1")
        s2 = reader.matrix(weights, "weights", "S2")
    pi_weight = reader.matrix(weights, "weights", "Pi")
    if "lambda" in weights and "mu" in weights:
        raise reader.fail("give either lambda or mu", weights, "mu", "weights.mu")
    lam = 1.0
    if "lambda" in weights:
        lam = reader.number(weights, "weights", "lambda")
    elif "mu" in weights:
        lam = 1.0 / reader.number(weights, "weights", "mu")

    system = reader.checked(
        lambda: PlantObserverSystem(
            theta1=model.theta, theta2=theta2, k_energy=model.energy, m_energy=m_energy,
            coupling=coupling, sigma1=init.sigma, sigma2=sigma2, s1=s1, s2=s2,
            pi_weight=pi_weight, lam=lam, tau=tau,
        ),
        document, "observer", None,
    )

    autonomous = None
    same_ccr = theta2.shape == model.theta.shape and np.allclose(theta2, model.theta, rtol=0.0, atol=1e-14)
    if mirror and same_ccr and "S0" in weights:
        if not structure_check(system.k_energy, system.m_energy, system.coupling):
            raise reader.fail("coupling of a mirrored observer must be symmetric",
                              coupling_section, "L", "coupling.L")
        autonomous = reader.checked(
            lambda: AutonomousObserverProblem(
                theta0=model.theta, k_energy=model.energy, s0=s1, sigma1=init.sigma,
                sigma2=system.sigma2, pi_weight=system.pi_weight, tau=tau,
            ),
            weights, "weights", "S0",
        )
    kind = KIND_AUTONOMOUS if autonomous is not None else KIND_COMPOSITE
    log.debug(f"{source}: {kind} problem with n = {system.n}, nu = {system.nu}")
    return ProblemConfig(kind=kind, source=source, model=model, init=init, tau=tau, system=system,
                         autonomous=autonomous, document=_plain(document))


def load_problem(config: str) -> ProblemConfig:
    """
    Load a problem from a YAML file or a bundled fixture name.

    Parameters:
    -----------
    config : str
        Path to a YAML file, or EX1 / EX2.

    Returns:
    --------
    ProblemConfig
        The parsed and validated problem.

    Raises:
    -------
    ValueError
        If config is not a nonempty string.
    ConfigError
        If the file cannot be read or parsed, or the problem is invalid.
    """
    path = resolve_source(config)
    try:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror or e}", path) from e
    return load_problem_text(text, source=path)


def load_problem_text(text: str, source: str = "<string>") -> ProblemConfig:
    """Parse a problem from YAML text."""
    try:
        loader = LineLoader(text)
        loader.name = source
        try:
            document = loader.get_single_data()
        finally:
            loader.dispose()
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        problem = getattr(e, "problem", None) or str(e)
        raise ConfigError(f"invalid YAML: {problem}", source, line) from e
    if document is None:
        raise ConfigError("empty document", source, 1)
    return parse_problem(document, source)
