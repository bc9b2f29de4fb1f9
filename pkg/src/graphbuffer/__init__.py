"""Edge-robust GNN training with degree-normalized aggregation buffers.

Submodules:
  tensor     float64 matrices, tape autodiff, CSR sparse product
  graph      undirected graphs, normalization, edge dropping, datasets
  models     MLP/GCN/SGC/SAGE/GIN forward definitions with layer traces
  buffer     the trainable aggregation-buffer block and its variants
  losses     KL objectives, the robustness-controlled loss, monitors
  training   Adam, pretraining, buffer tuning, grid sweeps
  analysis   Lipschitz/spectral constants and discrepancy-bound checks
  evaluation accuracy metrics, structural groupings, removal sweeps
  checkpoint binary model/buffer containers
  cli        command-line entry point
"""

__version__ = "0.1.0"
