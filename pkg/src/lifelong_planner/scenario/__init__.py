"""Scene data model, synthetic generator, ego-frame normalisation and file format."""
from .generator import GeneratorError, generate_scenario
from .io import ScenarioDecodeError, decode_scenario, encode_scenario, read_scenario, write_scenario
from .transform import normalize_to_ego
from .types import (
    COMMON_CLASSES,
    DT,
    LONG_TAIL_CLASSES,
    N_CLASSES,
    SCENARIO_CLASSES,
    AgentKind,
    AgentTrack,
    EgoState,
    Scenario,
    ScenarioClass,
    TrafficLight,
    VectorizedMap,
    get_class,
)
