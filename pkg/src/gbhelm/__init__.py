"""First-order Gaussian beams for the Helmholtz equation with a smooth, compactly perturbed index.

Modules: medium (index models, non-trapping check), raytrace (rays and the
linearised flow), beam (first-order beams and their residual), source (beam
pairs on the plane x1 = 0), superpose (beam sums), reference (constant-medium
exact solutions), analysis (norms, slope fits, probes) and cli.
"""

from .beam import BeamData, build_first_order_beam, eval_beam, eval_residual_field, residual_coefficients
from .errors import GBError
from .medium import MediumModel, certify_nontrapping, eval_medium
from .raytrace import integrate_bicharacteristic, integrate_variational
from .reference import WaveParams, example5_quadrature, exact_constant_medium_solution, green_kernel
from .source import BumpWeight, SourceSpec, build_beam_pair
from .superpose import assemble, eval_superposition

__all__ = [
    "BeamData", "BumpWeight", "GBError", "MediumModel", "SourceSpec", "WaveParams", "assemble",
    "build_beam_pair", "build_first_order_beam", "certify_nontrapping", "eval_beam", "eval_medium",
    "eval_residual_field", "eval_superposition", "exact_constant_medium_solution", "example5_quadrature",
    "green_kernel", "integrate_bicharacteristic", "integrate_variational", "residual_coefficients",
]
