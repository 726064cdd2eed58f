"""Polarimetric infrared NDT toolkit.

DoLP radiometry of heated rough surfaces, division-of-focal-plane mosaic
processing, pulsed-phase and principal-component defect detection, a
synthetic specimen renderer with ground truth, and region-based detection
metrics, all wired together by the ``polarndt`` command line tool.
"""

__version__ = "0.1.0"

from . import detection, dofp, evaluation, radiometry, synthscene  # noqa: F401
