"""Learning from rate-compressed observations with side information.

Finite-alphabet information measures, conditional rate-distortion solvers,
scalar codecs with side information, quantized ERM, bound evaluation and
inequality-chain verification.
"""

from .errors import CapExceeded, UsageError
from .probability import (
    DiscretizationSpec,
    ExtendedJoint,
    FiniteJoint,
    PiecewiseLinear,
    RegressionModel,
    attach_channel,
    discretize_regression,
    entropy_bits,
    kl_and_variational,
    mutual_information_bits,
)

from .losses import LossFunction, eval_eta
from .rd import RDCurve, RDPoint, distortion_at_rate, gaussian_drf, invert_curve, rd_curve, sup_drf
from .codec import Codec, EncodedBlock, decode, encode, measure_distortion, train_codec
from .learning import HypothesisGrid, covering_number, empirical_risk, erm, true_risk_regression
from .analysis import (
    appendix_chain_verify,
    bound_report,
    dobrushin_diagnostic,
    finite_sample_bound,
    proof_chain_check,
    theorem1_bound,
    theorem2_bound,
    theorem3_bound,
)

__version__ = "0.1.0"

__all__ = [
    "CapExceeded",
    "UsageError",
    "DiscretizationSpec",
    "ExtendedJoint",
    "FiniteJoint",
    "PiecewiseLinear",
    "RegressionModel",
    "attach_channel",
    "discretize_regression",
    "entropy_bits",
    "kl_and_variational",
    "mutual_information_bits",
    "LossFunction",
    "eval_eta",
    "RDCurve",
    "RDPoint",
    "distortion_at_rate",
    "gaussian_drf",
    "invert_curve",
    "rd_curve",
    "sup_drf",
    "Codec",
    "EncodedBlock",
    "decode",
    "encode",
    "measure_distortion",
    "train_codec",
    "HypothesisGrid",
    "covering_number",
    "empirical_risk",
    "erm",
    "true_risk_regression",
    "appendix_chain_verify",
    "bound_report",
    "dobrushin_diagnostic",
    "finite_sample_bound",
    "proof_chain_check",
    "theorem1_bound",
    "theorem2_bound",
    "theorem3_bound",
]
