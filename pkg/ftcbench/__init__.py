"""
ftcbench - Gain-scheduled passive fault-tolerant control workbench
Uncertainty modeling, fixed-structure mixed-sensitivity tuning, mu-analysis
and nonlinear transition-flight simulation for a dual-system VTOL airframe.
"""

__version__ = "0.1.0"
