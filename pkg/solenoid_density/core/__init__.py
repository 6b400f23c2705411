# solenoid_density/core/__init__.py
from .model import RunResult  # re-export for convenience
