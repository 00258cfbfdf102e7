"""
Memory components for scenario runs.
"""

from .trace_memory import TraceMemory

__all__ = ["TraceMemory"]
