"""Entry point for running beamnet as a module.

Usage:
    python -m beamnet simulate --config a_network_unit
    python -m beamnet control --config a_network_rigid
    python -m beamnet plan --config path_three

Time Complexity: Delegated to CLI commands
Space Complexity: Delegated to CLI commands
"""

from beamnet.cli import app

if __name__ == "__main__":
    app()
