from .main import TriangulatePlugin
__all__ = [
  "TriangulatePlugin"
]
