from .main import FitAngleModelPlugin
__all__ = [
  "FitAngleModelPlugin"
]
