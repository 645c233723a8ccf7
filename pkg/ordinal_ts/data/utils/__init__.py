"""Pydantic data configuration models."""
