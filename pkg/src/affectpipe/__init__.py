"""Emotion recognition from wearable biometrics recorded during software development.

Modules follow the pipeline: ``model`` and ``ingest`` hold sessions, ``dsp`` and
``eda`` process signals, ``features`` and ``labeling`` build the labeled
dataset, ``classifiers`` and ``evaluation`` score it, and ``lmm`` relates
self-reported progress to emotions. ``synth`` generates studies with known
ground truth.
"""

__version__ = "0.1.0"
