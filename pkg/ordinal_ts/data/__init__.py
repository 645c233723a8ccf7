"""Synthetic data, CSV ingestion and train/test splitting."""
