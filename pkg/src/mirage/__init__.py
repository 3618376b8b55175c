"""mmWave MIMO-OFDM pilot-spoofing and single-anchor localization suite.

Modules cover the full chain: scene geometry (``geometry``), tensor
channel synthesis (``channel``), gain-aware and gain-blind spoofed pilot
design (``spoof_oracle``, ``spoof_blind``), the BS-side parameter estimator
(``estimate``), localization and rate evaluation (``locate_comm``), the
Monte Carlo harness (``harness``) and file/CLI plumbing (``configio``,
``cli``).
"""

__version__ = "0.1.0"
