"""Training, checkpointing, evaluation and the command-line interface."""
