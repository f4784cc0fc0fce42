"""Cooking object state classification toolkit.

A small NumPy deep-learning stack implementing two tuned VGG-16
architectures together with the data pipeline, optimizer and
training/evaluation harness used to classify seven cooking object states.
"""

__version__ = "0.1.0"
__author__ = "Personal Project"
