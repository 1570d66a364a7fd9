"""Multichannel heartbeat detection with a single-layer convolutional network.

The pipeline: load records (:mod:`record_io`), bring them to a canonical
250 Hz form (:mod:`preprocess`), cut labelled snippets (:mod:`dataset`),
train the network (:mod:`model`), detect beats (:mod:`detector`) and score
them against reference annotations (:mod:`scorer`).
"""

__version__ = "0.1.0"
