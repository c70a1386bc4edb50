"""
Configuration module
"""

from ftcbench.config.settings import WorkbenchConfig, config_hash, load_config, worker_count
