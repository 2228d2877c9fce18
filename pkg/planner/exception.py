"""Module with custom exceptions."""


class PlannerBaseException(Exception):
    """Base exception for package-related errors.

    Attributes:
        payload (dict): Additional data of error context.

    """

    def __init__(self, message, payload=None):
        if payload is None:
            payload = {}
        super().__init__(message)
        self.payload = payload


class PddlSyntaxError(PlannerBaseException):
    """Raised when the PDDL reader rejects domain or problem text."""


class UnsupportedRequirement(PlannerBaseException):
    """Raised when a domain declares a requirement outside :strips and :typing."""


class UnsupportedConstruct(PlannerBaseException):
    """Raised when a formula uses negation, quantifiers, conditional effects etc."""


class InvalidLiftedTask(PlannerBaseException):
    """Raised when a parsed task references undeclared predicates, variables or objects."""


class GroundingFailed(PlannerBaseException):
    """Raised when grounding runs out of memory."""


class PreconditionViolated(PlannerBaseException):
    """Raised when an action is applied to a state that does not satisfy its precondition."""


class ShapeMismatch(PlannerBaseException):
    """Raised when tensor shapes are incompatible for an operation."""


class NonScalarLoss(PlannerBaseException):
    """Raised when backward is requested from a non-scalar or untaped tensor."""


class InvalidSchedule(PlannerBaseException):
    """Raised when (N, M, L) do not describe a valid arity schedule."""


class SignatureMismatch(PlannerBaseException):
    """Raised when a model is used with a task of a different predicate signature."""


class CheckpointFormatError(PlannerBaseException):
    """Raised when a checkpoint file is truncated or malformed."""


class InvalidConfig(PlannerBaseException):
    """Raised when training or search configuration fails validation."""


class EmptyTaskList(PlannerBaseException):
    """Raised when no (non-trivial) task is available for training or evaluation."""


class DeadEndState(PlannerBaseException):
    """Raised when a rollout is requested from a state without applicable actions."""


class EmptyBuffer(PlannerBaseException):
    """Raised when sampling from an empty replay buffer."""


class InvalidGeneratorSize(PlannerBaseException):
    """Raised when generator size parameters are outside documented bounds."""


class ProblemFileError(PlannerBaseException):
    """Raised when a PDDL file cannot be read."""
