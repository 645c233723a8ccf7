"""Configuration and settings."""