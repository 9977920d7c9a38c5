"""Verilog frontend: preprocessing, parsing, and hierarchy elaboration."""

from ipsim.frontend.preprocess import SourceUnit, preprocess, preprocess_text, strip_comments
from ipsim.frontend.parser import parse, parse_unit
from ipsim.frontend.flatten import FlatModule, FlatPort, const_eval, flatten_hierarchy, infer_top
from ipsim.frontend.emit import emit, emit_expr, emit_module

__all__ = [
    "SourceUnit",
    "preprocess",
    "preprocess_text",
    "strip_comments",
    "parse",
    "parse_unit",
    "FlatModule",
    "FlatPort",
    "const_eval",
    "flatten_hierarchy",
    "infer_top",
    "emit",
    "emit_expr",
    "emit_module",
]
