"""IoT traffic activity profiling and two-stage anomaly detection.

Pipeline: cluster a device's bidirectional flows into activities with a
four-level rule tree, train one small convolutional autoencoder per
activity on benign traffic, then judge new flows in two stages (rule match,
then reconstruction error against a calibrated threshold).  A deterministic
synthetic traffic generator with labeled attack injection makes the whole
pipeline testable at desk scale.
"""

__version__ = "0.1.0"
