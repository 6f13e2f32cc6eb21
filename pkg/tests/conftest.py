"""Makes tests/ importable so shared oracle helpers can live in oracles.py."""
