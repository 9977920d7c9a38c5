import pytest

from conftest import FULL_ADDER
from ipsim.errors import (
    ElaborationError,
    MultipleContinuousDrivers,
    PipelineError,
    VerilogSyntaxError,
)
from ipsim.pipeline import compile_design, compile_text, unit_from_paths


def test_compile_text_full_adder(full_adder_graph):
    assert full_adder_graph.name == "fulladd"
    assert full_adder_graph.num_nodes > 0


def test_pipeline_error_carries_stage_and_cause():
    with pytest.raises(PipelineError) as info:
        compile_text("module broken(x; endmodule", path="broken.v")
    err = info.value
    assert err.stage == "parse"
    assert err.design == "broken.v"
    assert isinstance(err.cause, VerilogSyntaxError)
    assert "broken.v" in str(err)


def test_pipeline_error_from_elaboration():
    text = """
module top(input a, output y);
  ghost u0(.p(a), .q(y));
endmodule
"""
    with pytest.raises(PipelineError) as info:
        compile_text(text, path="top.v")
    assert info.value.stage == "elaborate"
    assert isinstance(info.value.cause, ElaborationError)


def test_pipeline_error_from_graph_build():
    text = """
module dup(input a, input b, output y);
  assign y = a;
  assign y = b;
endmodule
"""
    with pytest.raises(PipelineError) as info:
        compile_text(text, path="dup.v")
    assert info.value.stage == "dfg"
    assert isinstance(info.value.cause, MultipleContinuousDrivers)


def test_compile_design_reads_files(tmp_path):
    path = tmp_path / "fa.v"
    path.write_text(FULL_ADDER)
    graph = compile_design([path])
    assert graph.name == "fulladd"


def test_compile_design_multi_file_hierarchy(tmp_path):
    (tmp_path / "leaf.v").write_text(
        "module leaf(input i, output o);\n  assign o = ~i;\nendmodule\n")
    (tmp_path / "root.v").write_text(
        "module root(input a, output z);\n  wire m;\n"
        "  leaf u0(.i(a), .o(m));\n  leaf u1(.i(m), .o(z));\nendmodule\n")
    graph = compile_design([tmp_path / "root.v", tmp_path / "leaf.v"], top="root")
    assert graph.name == "root"
    kinds = [node.kind for node in graph.nodes]
    assert kinds.count("Not") == 2  # one per elaborated leaf instance


def test_unit_from_paths_missing_file(tmp_path):
    # File system errors stay OSError; the CLI turns them into usage
    # failures rather than internal ones.
    with pytest.raises(FileNotFoundError):
        compile_design([tmp_path / "ghost.v"])


def test_unit_from_paths_collects_defines(tmp_path):
    path = tmp_path / "cond.v"
    path.write_text(
        "`ifdef WIDE\nmodule m(input [7:0] a, output [7:0] y);\n"
        "`else\nmodule m(input a, output y);\n`endif\n"
        "  assign y = a;\nendmodule\n")
    unit = unit_from_paths([path], defines={"WIDE": "1"})
    assert unit.defines == {"WIDE": "1"}
    graph = compile_design([path], defines={"WIDE": "1"})
    inputs = [node for node in graph.nodes if node.kind == "Input"]
    assert len(inputs) == 1
