"""Synthetic scenes with exact ground truth, and reconstruction scoring."""
