from .main import EvaluatePlugin
__all__ = [
  "EvaluatePlugin"
]
