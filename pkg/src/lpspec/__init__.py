"""Limit-periodic potential constructions with certified spectral checks."""

from .analysis import (
    CoverEstimate,
    GordonReport,
    gordon_check,
    hausdorff_sum,
    lyapunov_convergence,
    spectrum_distance_check,
)
from .cantor import GroupSchedule, OdometerElement, Translation, add_one, orbit_potential, periodize, translate
from .construction import (
    BuildConfig,
    Concatenation,
    ConstructionLedger,
    SamplerFamily,
    concatenate_perturb,
    enlarge_lambda_family,
    gap_opening_probe,
    iterate,
)
from .periodic import (
    BandSpectrum,
    BlockChain,
    PeriodicSampler,
    SpectralCertificate,
    band_spectrum,
    discriminant,
    family_lyapunov,
    floquet_oracle,
    lyapunov_periodic,
    measure_certificate,
)
from .sl2 import AngleBoundCertificate, TransferMatrix, angle_distortion_bounds, spectral_radius, step_matrix, transfer_product

__version__ = "0.1.0"
