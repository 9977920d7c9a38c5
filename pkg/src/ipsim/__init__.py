"""RTL similarity toolkit: Verilog to data-flow graphs to learned embeddings."""

__version__ = "0.1.0"
