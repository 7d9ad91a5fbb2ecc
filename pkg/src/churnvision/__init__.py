"""Churn prediction from customer usage-behavior images.

Customers' daily usage events are labeled by a windowed timeline protocol,
rasterized into days x channels images, and classified by small
convolutional networks; an autoencoder over the same images exposes the
dominant usage patterns as unit-norm base images.
"""

__version__ = "0.1.0"

from . import architectures, autoencoder, evaluation, imaging, labeling, nn, storage, synth, training

__all__ = [
    "architectures", "autoencoder", "evaluation", "imaging", "labeling",
    "nn", "storage", "synth", "training", "__version__",
]
