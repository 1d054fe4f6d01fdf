from .main import ComparePlugin
__all__ = [
  "ComparePlugin"
]
