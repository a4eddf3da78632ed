"""Unpaired TVUS-to-MRI knowledge distillation for POD obliteration classification."""

__version__ = "0.1.0"
