"""Figure renderers for the fiscal-default toolkit's CSV artifacts."""

from .render import KINDS, SchemaError, render

__version__ = "0.1.0"
