"""
ftcbench modules - Pipeline stages
"""
