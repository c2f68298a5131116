"""
Core simulation modules for fedsim

Organized by concern:
- model.py / data.py: flat-parameter models, datasets, non-IID partitioning
- aggregation.py / defenses.py / clustering.py: server-side rules
- attacks/: XFED and the baseline poisoning attacks
- simulator.py: the round loop; reporting.py: CSV artifacts and tables
"""

__all__ = []
