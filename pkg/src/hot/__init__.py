"""Three-stage prompting (diffused, focused, fused) for medical dialogue responses."""

__version__ = "0.1.0"
