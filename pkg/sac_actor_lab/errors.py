# -*- coding: utf-8 -*-


class ContractViolation(ValueError):
    """Argument shapes or values break an operation's preconditions."""


class UnsupportedReparameterization(TypeError):
    """Reparameterized path requested for a policy that has none.

    Mixture policies pick a component with a discrete draw, so their samples
    are not a differentiable transform of parameter-free noise.
    """

    def __init__(self, operation):
        super().__init__(
            '%s needs a reparameterizable policy; mixture policies only '
            'support the score-function estimator.' % operation
        )
        self.operation = operation


class ConvergenceWarning(UserWarning):
    """Quadrature estimate moved under grid refinement."""


class DivergenceError(RuntimeError):
    """Optimizer iterate left the finite, bounded region.

    The partial trace is attached so callers can still emit it.
    """

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace
