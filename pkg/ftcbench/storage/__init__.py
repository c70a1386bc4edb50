"""
Storage module for artifact persistence
"""

from ftcbench.storage.artifacts import (
    read_csv,
    read_simlog,
    write_csv,
    write_json,
    write_simlog,
    write_text,
)
