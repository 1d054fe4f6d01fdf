from .main import SynthPlugin
__all__ = [
  "SynthPlugin"
]
