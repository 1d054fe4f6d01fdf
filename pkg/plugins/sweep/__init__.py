from .main import SweepPlugin
__all__ = [
  "SweepPlugin"
]
