"""
Models package for experiment and sweep file validation
"""

from .validation import (
    AggregatorSection,
    AttackSection,
    DatasetSection,
    ExperimentConfig,
    ModelSection,
    PartitionSection,
    SweepSpec,
    TrainingSection,
    apply_axis,
    load_config,
    load_sweep,
)

__all__ = [
    'AggregatorSection',
    'AttackSection',
    'DatasetSection',
    'ExperimentConfig',
    'ModelSection',
    'PartitionSection',
    'SweepSpec',
    'TrainingSection',
    'apply_axis',
    'load_config',
    'load_sweep',
]
