"""
CLI module for ftcbench
"""
