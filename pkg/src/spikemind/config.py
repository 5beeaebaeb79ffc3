"""Configuration dataclasses and YAML round-trip for every tunable constant."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, asdict
from pathlib import Path

import yaml


class ConfigurationError(ValueError):
    """Raised for invalid or inconsistent configuration values."""


@dataclass(frozen=True)
class LifParams:
    """Leaky integrate-and-fire membrane constants (dimensionless potential units)."""

    tau_m: float = 20.0          # ms
    v_rest: float = 0.0
    v_reset: float = 0.0
    v_threshold: float = 1.0
    refractory: float = 2.0      # ms
    noise_sigma: float = 0.1     # per-step potential noise std
    bias: float = 0.0            # auxiliary per-step drive, set by rate calibration
    adapt_increment: float = 0.01  # spike-frequency adaptation step per spike
    adapt_tau: float = 1500.0    # ms; adaptation current decay

    def __post_init__(self):
        if self.tau_m <= 0:
            raise ConfigurationError("tau_m must be positive")
        if self.v_reset >= self.v_threshold:
            raise ConfigurationError("v_reset must be below v_threshold")
        if self.noise_sigma < 0:
            raise ConfigurationError("noise_sigma must be nonnegative")


@dataclass(frozen=True)
class ConnectivityConfig:
    ff_fanout: int = 120         # L1 -> L2, fixed weights
    ff_weight: float = 0.05
    l2_l3_fanout: int = 20       # plastic
    l3_l4_fanout: int = 20       # plastic
    inh_in_frac: float = 0.01    # fraction of excitatory neurons feeding each interneuron
    inh_out_frac: float = 0.02   # fraction of excitatory neurons each interneuron inhibits
    w_exc_to_inh: float = 0.30
    w_inh_to_exc: float = 0.12   # applied with negative sign
    synapse_budget: int = 50_000_000

    def __post_init__(self):
        if self.ff_fanout < 1:
            raise ConfigurationError("ff_fanout must be >= 1")


@dataclass(frozen=True)
class StdpConfig:
    """Depression-dominant pair-based STDP with a single eligibility trace."""

    a_plus: float = 0.05
    a_minus_ratio: float = 1.05  # a_minus = ratio * a_plus
    tau_plus: float = 20.0       # ms
    tau_minus: float = 30.0      # ms
    eta: float = 0.05            # reward-gated learning rate
    tau_eligibility: float = 2000.0  # ms
    w_min: float = 0.0
    w_max: float = 0.2
    pairing_window: float = 100.0    # ms, nearest-neighbour coincidence window
    ff_gain: float = 25.0        # eligibility gain for plastic feedforward projections

    @property
    def a_minus(self) -> float:
        return self.a_minus_ratio * self.a_plus

    def __post_init__(self):
        for name in ("a_plus", "a_minus_ratio", "tau_plus", "tau_minus", "eta",
                     "tau_eligibility", "pairing_window"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.w_min >= self.w_max:
            raise ConfigurationError("w_min must be below w_max")


@dataclass(frozen=True)
class DecayConfig:
    """Cascade-scaled homeostatic decay: lambda(w) = lambda0 * exp(-beta * w / w_max).

    Defaults are calibrated so a 0.07 weight loses 1.6% over 8 simulated hours.
    """

    lambda0: float = 0.0040600   # 1/hour
    beta: float = 2.0
    prune_floor: float = 1e-6
    cadence_s: float = 60.0

    def __post_init__(self):
        if self.lambda0 <= 0 or self.beta <= 0:
            raise ConfigurationError("lambda0 and beta must be positive")


@dataclass(frozen=True)
class EncoderConfig:
    sparsity: float = 0.14       # fraction of sensory neurons active
    r_max: float = 100.0         # Hz

    def __post_init__(self):
        if not (0.0 < self.sparsity <= 1.0):
            raise ConfigurationError("sparsity must be in (0, 1]")
        if self.r_max <= 0:
            raise ConfigurationError("r_max must be positive")


@dataclass(frozen=True)
class ImpulseConfig:
    threshold: float = 3.0           # rate / baseline multiplier
    ema_tau_s: float = 1800.0        # baseline EMA time constant
    floor_rate: float = 0.1          # Hz, division guard
    warmup_s: float = 60.0           # detection disabled until warm-up elapsed
    cadence_s: float = 30.0          # detection tick interval
    rate_window_s: float = 1.0       # trailing window the tick rate is measured over
    guard_margin_s: float = 2.0      # exclusion window extension past stimulation
    significance_count: int = 3
    significance_window_s: float = 300.0

    def __post_init__(self):
        if self.threshold <= 1.0:
            raise ConfigurationError("impulse threshold must exceed 1.0")
        if self.floor_rate <= 0:
            raise ConfigurationError("floor_rate must be positive")
        if not 0 < self.rate_window_s <= self.cadence_s:
            raise ConfigurationError(
                "rate_window_s must be in (0, cadence_s]")


@dataclass(frozen=True)
class CaptureConfig:
    population_size: int = 50        # neurons per concept binding
    drive_rate: float = 80.0         # Hz per driven neuron during capture
    message_duration_ms: float = 1500.0
    lead_offset_ms: float = 15.0     # person burst leads the first topic by this
    topic_stagger_ms: float = 25.0
    cycle_ms: float = 100.0          # burst cycle; the lead repeats every cycle
    burst_ms: float = 5.0            # burst window per population per cycle
    default_salience: float = 0.5

    def __post_init__(self):
        if self.population_size < 10:
            raise ConfigurationError("population_size must be >= 10")
        if not (0.0 < self.lead_offset_ms <= 20.0):
            raise ConfigurationError("lead_offset_ms must be in (0, tau_plus]")


@dataclass(frozen=True)
class CognitionConfig:
    heartbeat_s: float = 60.0
    reach_out_multiplier: float = 15.0   # mock-engine policy constant
    engine_timeout_s: float = 30.0


@dataclass(frozen=True)
class MemoryConfig:
    w_notable: float = 0.01          # free parameter; "notable connection" threshold
    kg_edge_threshold: float = 0.01  # shares the notable threshold by default
    replay_compression: float = 10.0
    replay_rounds: int = 10          # times each episode is replayed per sleep
    journal_recent_k: int = 5


@dataclass
class MindConfig:
    """Top-level configuration for a full mind instance."""

    seed: int = 7
    scale: float = 0.02              # layer-size multiplier; 1.0 is the full substrate
    snn_enabled: bool = True
    embedding_dim: int = 256
    lif: LifParams = field(default_factory=LifParams)
    connectivity: ConnectivityConfig = field(default_factory=ConnectivityConfig)
    stdp: StdpConfig = field(default_factory=StdpConfig)
    decay: DecayConfig = field(default_factory=DecayConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    impulse: ImpulseConfig = field(default_factory=ImpulseConfig)
    capture: CaptureConfig = field(default_factory=CaptureConfig)
    cognition: CognitionConfig = field(default_factory=CognitionConfig)
    memory: MemoryConfig = field(default_factory=MemoryConfig)
    calibrate_rate_hz: float = 0.9   # idle spontaneous firing target
    calibrate: bool = True

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "MindConfig":
        kwargs = dict(data)
        for name, sub in (("lif", LifParams), ("connectivity", ConnectivityConfig),
                          ("stdp", StdpConfig), ("decay", DecayConfig),
                          ("encoder", EncoderConfig), ("impulse", ImpulseConfig),
                          ("capture", CaptureConfig), ("cognition", CognitionConfig),
                          ("memory", MemoryConfig)):
            if name in kwargs and isinstance(kwargs[name], dict):
                kwargs[name] = sub(**kwargs[name])
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(kwargs) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**kwargs)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))

    @classmethod
    def load(cls, path: str | Path) -> "MindConfig":
        data = yaml.safe_load(Path(path).read_text())
        if not isinstance(data, dict):
            raise ConfigurationError(f"config file {path} does not contain a mapping")
        return cls.from_dict(data)

    def replace(self, **kwargs) -> "MindConfig":
        return dataclasses.replace(self, **kwargs)
