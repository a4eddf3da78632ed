"""Unpaired cross-modal knowledge-distillation pipeline."""
