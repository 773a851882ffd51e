"""deskrl: desk-scale point-cloud policy learning in plain numpy.

Small, fully deterministic building blocks: a flat-vector network core, a
point-cloud set encoder, PD-controlled planar-arm toy tasks, PPO and
behavior-cloning trainers, and a two-stage fine-tuning scheduler that
resumes the best checkpoint of a run with scaled-down batch size and
samples per step.
"""

__version__ = "0.1.0"
