"""
Core module - Transfer-function algebra, aircraft models and fixture parsing
"""
