"""healthcam: air-quality regression from outdoor images.

Split/mirror augmentation, a branched multi-output CNN trained from
scratch, a two-stage competitor, min-max label scaling with exact
inverse, an AQI classifier, and a symptom-aware recommendation service.
"""

__version__ = "0.1.0"
