"""Experiment configuration files: strict YAML schema and conversion to model objects.

A config is either a path or the name of a bundled file (``paper_table1``).
Unknown keys are rejected; every error names the offending key path.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Literal, NamedTuple, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .budget import UNIT_INTERVAL, EfficiencyBudget, Measurements, budget_report, uv
from .detection import AGGREGATED, DEFAULT_TRIGGER_CAP, EVENT, TAC_MODES, DetectorSpec, ExperimentConfig, TacSpec
from .phasematch import CrystalSpec, PpktpCalibration, SellmeierSet, TuningPoint, fit_poling_period
from .rng import check_seed

BUNDLED = ("paper_table1",)


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class Uncertain(_Strict):
    mean: float
    sigma: float = 0.0

    @field_validator("sigma")
    @classmethod
    def _sigma(cls, v):
        if v < 0:
            raise ValueError("sigma must be non-negative")
        return v


class BudgetSection(_Strict):
    r_trigger: Uncertain
    eta_d1: Uncertain
    eta_775: Uncertain
    p_coinc: Uncertain
    eta_lp: Uncertain
    eta_duty: Uncertain
    eta_tac: Uncertain
    eta_cw: Uncertain
    eta_in: Uncertain
    eta_out: Uncertain
    eta_bs: Uncertain
    eta_d2: Uncertain
    eta_d3: Uncertain

    @field_validator("*")
    @classmethod
    def _range(cls, v, info):
        if info.field_name in UNIT_INTERVAL and not 0.0 <= v.mean <= 1.0:
            raise ValueError(f"mean {v.mean} outside [0, 1]")
        if info.field_name == "r_trigger" and not v.mean > 0:
            raise ValueError("trigger rate must be positive")
        return v


class MeasurementsSection(_Strict):
    coinc_to_singles: float = 0.24
    coinc_rate_hz: Uncertain = Uncertain(mean=24.0, sigma=2.0)
    coinc_pump_power_w: float = 245e-9
    pump_wavelength_nm: float = 775.0
    triplet_rate_per_hour: Uncertain = Uncertain(mean=4.7, sigma=0.6)
    power_in_w: float = 1.1e-3
    power_out_w: Uncertain = Uncertain(mean=0.9e-9, sigma=0.1e-9)
    duration_s: float = Field(72_000.0, gt=0)


class DetectorSection(_Strict):
    efficiency: Optional[float] = None
    gate_width_ns: Optional[float] = None
    dark_prob_per_gate: float = 0.0
    jitter_sigma_ps: float = Field(0.0, ge=0)
    dead_time_ns: float = Field(0.0, ge=0)
    delay_offset_ns: float = 0.0

    @field_validator("efficiency", "dark_prob_per_gate")
    @classmethod
    def _prob(cls, v):
        if v is not None and not 0.0 <= v <= 1.0:
            raise ValueError(f"{v} outside [0, 1]")
        return v


class TacSection(_Strict):
    resolution_ps: float = Field(103.0, gt=0)
    efficiency_mode: Literal[tuple(TAC_MODES)] = "alternate-skip"


class DetectorsSection(_Strict):
    d1: DetectorSection = DetectorSection(jitter_sigma_ps=360.0)
    d2: DetectorSection
    d3: DetectorSection
    tac: TacSection = TacSection()

    @model_validator(mode="after")
    def _gated(self):
        for name in ("d2", "d3"):
            if getattr(self, name).gate_width_ns is None:
                raise ValueError(f"{name}.gate_width_ns is required (D2 and D3 are gated)")
        return self


class SellmeierInline(_Strict):
    a: tuple[float, float, float, float, float, float]
    b: tuple[float, float, float, float]
    t0: float = 24.5
    t1: float = 570.82


class FitPoint(_Strict):
    pump_nm: float
    temperature_c: float
    signal_nm: float


class CalibrationSection(_Strict):
    anchors: tuple[tuple[float, float], tuple[float, float]]
    margin_c: float = Field(5.0, ge=0)


class CrystalSection(_Strict):
    sellmeier: Union[str, SellmeierInline] = "congruent_ln_jundt"
    poling_period_um: Optional[float] = Field(None, gt=0)
    fit_points: Optional[list[FitPoint]] = None
    crystal_length_mm: float = Field(gt=0)
    temperature_c: float
    qpm_order: int = 1
    ppktp_calibration: Optional[CalibrationSection] = None

    @model_validator(mode="after")
    def _period_source(self):
        if (self.poling_period_um is None) == (not self.fit_points):
            raise ValueError("give exactly one of poling_period_um and fit_points")
        return self


class SimulationSection(_Strict):
    duration_s: float = Field(gt=0)
    seed: int = 0
    mode: Literal[EVENT, AGGREGATED] = AGGREGATED
    d2_d3_delay_ns: float = 0.0
    bin_width_ns: float = Field(gt=0)
    p_spdc: Union[Literal["from_triplets", "from_coinc", "from_power"], float] = "from_triplets"
    trigger_cap: int = Field(DEFAULT_TRIGGER_CAP, gt=0)

    @field_validator("seed")
    @classmethod
    def _seed(cls, v):
        check_seed(v)
        return v


class ExperimentFile(_Strict):
    budget: BudgetSection
    measurements: MeasurementsSection = MeasurementsSection()
    detectors: DetectorsSection
    crystal: CrystalSection
    simulation: SimulationSection


class LoadedConfig(NamedTuple):
    experiment: ExperimentConfig
    budget: EfficiencyBudget
    crystal: CrystalSpec
    measurements: Measurements
    calibration: Optional[PpktpCalibration]
    resolved: dict


def _key_path(loc) -> str:
    return ".".join(str(p) for p in loc if not str(p).startswith(("function-", "literal[", "str", "float", "Sellmeier")))


def _format_validation(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        path = _key_path(e["loc"])
        msg = "unknown key" if e["type"] == "extra_forbidden" else e["msg"]
        parts.append(f"{path}: {msg}" if path else msg)
    return "; ".join(dict.fromkeys(parts))


def read_document(source) -> tuple[str, dict]:
    """Return ``(label, parsed YAML)`` for a path or a bundled config name."""
    if isinstance(source, str) and source in BUNDLED:
        text = resources.files("tripletsim").joinpath(f"data/{source}.yaml").read_text(encoding="utf-8")
        label = source
    else:
        path = Path(source)
        if not path.is_file():
            raise ConfigError(f"config file {source} not found (bundled: {', '.join(BUNDLED)})")
        text = path.read_text(encoding="utf-8")
        label = str(path)
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f":{mark.line + 1}:{mark.column + 1}" if mark else ""
        raise ConfigError(f"{label}{where}: YAML parse error: {getattr(exc, 'problem', exc)}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{label}: top level must be a mapping")
    return label, doc


def parse_document(doc: dict) -> ExperimentFile:
    try:
        return ExperimentFile.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc)) from None


def _uv(u: Uncertain):
    return uv(u.mean, u.sigma)


def build(f: ExperimentFile, seed: int | None = None) -> LoadedConfig:
    """Convert a validated document into model objects, checking cross-section invariants."""
    sim = f.simulation
    if seed is not None:
        check_seed(seed)
        sim = sim.model_copy(update={"seed": seed})
        f = f.model_copy(update={"simulation": sim})
    det = f.detectors
    try:
        budget = EfficiencyBudget(
            **{k: _uv(v) for k, v in f.budget},
            dark_prob_d2=uv(det.d2.dark_prob_per_gate),
            dark_prob_d3=uv(det.d3.dark_prob_per_gate),
            gate_d2_ns=det.d2.gate_width_ns,
            gate_d3_ns=det.d3.gate_width_ns,
            bin_width_ns=sim.bin_width_ns,
        )
    except ValueError as exc:
        raise ConfigError(f"budget: {exc}") from None
    m = f.measurements
    measurements = Measurements(**{k: (_uv(v) if isinstance(v, Uncertain) else v) for k, v in m})

    c = f.crystal
    try:
        sellmeier = (SellmeierSet.bundled(c.sellmeier) if isinstance(c.sellmeier, str)
                     else SellmeierSet(name="inline", **c.sellmeier.model_dump()))
    except KeyError as exc:
        raise ConfigError(f"crystal.sellmeier: {exc.args[0]}") from None
    try:
        if c.poling_period_um is not None:
            period = c.poling_period_um
        else:
            points = [TuningPoint.from_signal(p.pump_nm, p.temperature_c, p.signal_nm) for p in c.fit_points]
            period, _ = fit_poling_period(points, sellmeier, c.qpm_order)
        crystal = CrystalSpec(period, c.crystal_length_mm, c.temperature_c, sellmeier, c.qpm_order)
        calibration = PpktpCalibration(c.ppktp_calibration.anchors, c.ppktp_calibration.margin_c) \
            if c.ppktp_calibration else None
    except ValueError as exc:
        raise ConfigError(f"crystal: {exc}") from None

    if isinstance(sim.p_spdc, str):
        report = budget_report(budget, measurements)
        p_spdc = getattr(report, f"p_spdc_{sim.p_spdc}").mean
    else:
        p_spdc = float(sim.p_spdc)

    def spec(name, d: DetectorSection, eff):
        return DetectorSpec(eff if d.efficiency is None else d.efficiency, d.dark_prob_per_gate, d.gate_width_ns,
                            d.jitter_sigma_ps, d.dead_time_ns, d.delay_offset_ns)

    try:
        experiment = ExperimentConfig(
            budget=budget,
            d1=spec("d1", det.d1, budget.eta_d1.mean),
            d2=spec("d2", det.d2, budget.eta_d2.mean),
            d3=spec("d3", det.d3, budget.eta_d3.mean),
            tac=TacSpec(det.tac.resolution_ps, det.tac.efficiency_mode),
            p_spdc=p_spdc,
            duration_s=sim.duration_s,
            d2_d3_delay_ns=sim.d2_d3_delay_ns,
            seed=sim.seed,
            mode=sim.mode,
            trigger_cap=sim.trigger_cap,
        )
    except ValueError as exc:
        raise ConfigError(f"detectors/simulation: {exc}") from None
    resolved = f.model_dump(mode="json")
    resolved["crystal"]["resolved_poling_period_um"] = period
    resolved["simulation"]["resolved_p_spdc"] = p_spdc
    return LoadedConfig(experiment, budget, crystal, measurements, calibration, resolved)


def load_config(source="paper_table1", seed: int | None = None) -> LoadedConfig:
    _, doc = read_document(source)
    return build(parse_document(doc), seed=seed)
