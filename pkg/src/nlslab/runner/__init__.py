"""Configuration, persistence, orchestration and the command line."""
