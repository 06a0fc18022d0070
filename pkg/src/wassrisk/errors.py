"""Exception types shared across the library."""


class WassriskError(Exception):
    """Base class for all library-specific errors."""


class NonconvergentConjugate(WassriskError):
    """Doubling search for the conjugate bracket exhausted 2**60.

    Signals a growth-condition violation in a table penalty: the penalty
    never overtakes the linear term u*v, so the conjugate is infinite.
    """


class DimensionMismatch(WassriskError):
    """Array shapes are inconsistent with the declared dimension."""


class RegimePenaltyMismatch(WassriskError):
    """Penalty growth exponent is too small for the requested regime."""


class MissingGradient(WassriskError):
    """Loss has neither an analytic gradient nor finite differences enabled."""


class MissingLipField(WassriskError):
    """Loss exposes no local Lipschitz field / ascent direction (and no gradient)."""


class NoHessian(WassriskError):
    """Loss exposes no Hessian-vector product."""


class RegimeRequiresP2(WassriskError):
    """The mean-constrained expansion is only available for p = 2."""


class RegimeRequiresHessian(WassriskError):
    """The martingale expansion needs a Hessian-vector product."""


class ExponentUndefined(WassriskError):
    """The martingale exponent p/(p-2) is undefined; p > 2 is required."""


class NonFiniteObjective(WassriskError):
    """Objective evaluated to NaN or +inf where a finite value was required."""


class DivergenceDetected(WassriskError):
    """Training objective became NaN or infinite."""


class MissingScaleLayer(WassriskError):
    """Transfer retraining needs a pretrained network with a scale layer."""


class TooLarge(WassriskError):
    """Instance exceeds the validation-scale limit of the transport oracle."""


class BadStrikes(WassriskError):
    """Bull-spread strikes must satisfy 0 < K1 < K2."""


class BadInput(WassriskError):
    """Nonpositive argument passed to a pricing routine."""


class LineSearchFailure(WassriskError):
    """Backtracking line search could not find an acceptable step."""


class ConfigError(WassriskError):
    """Experiment configuration is malformed; message names the offending key."""
