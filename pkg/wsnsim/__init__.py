from .config import Scenario, build_scenario, load_config
from .engine import Simulator, run
from .topology import ScriptedLayout

__all__ = ["Scenario", "ScriptedLayout", "Simulator", "build_scenario", "load_config", "run"]
