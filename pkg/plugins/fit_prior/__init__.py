from .main import FitPriorPlugin
__all__ = [
  "FitPriorPlugin"
]
