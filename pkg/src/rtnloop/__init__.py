"""Dephasing of qubits under broad-spectrum telegraph noise."""
