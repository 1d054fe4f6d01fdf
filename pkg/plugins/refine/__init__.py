from .main import RefinePlugin
__all__ = [
  "RefinePlugin"
]
