"""Exception hierarchy for the runtime.

Every contract error raised across module boundaries lives here so callers
(engine, gateway, CLI) can catch one family per subsystem.
"""


class DeskbotError(Exception):
    """Base class for all runtime errors."""


# --- semantic bus ---------------------------------------------------------

class BusError(DeskbotError):
    pass


class MalformedName(BusError):
    pass


class SchemaUnknown(BusError):
    pass


class SchemaConflict(BusError):
    pass


class TopicUnknown(BusError):
    pass


class SchemaViolation(BusError):
    pass


class DuplicateSubscriber(BusError):
    pass


class SubscriptionUnknown(BusError):
    pass


class Lagged(BusError):
    """Cursor fell out of retention; it has been moved to the earliest
    retained envelope. Poll again to resume."""

    def __init__(self, message, dropped):
        super().__init__(message)
        self.dropped = dropped


# --- knowledge base -------------------------------------------------------

class KbError(DeskbotError):
    pass


class IllFormedTriple(KbError):
    pass


class CannotRetractInferred(KbError):
    pass


class UnboundPrefix(KbError):
    pass


class ParseError(DeskbotError):
    """Malformed document (triple files, bundle documents, scenarios)."""


# --- ontology mapper ------------------------------------------------------

class MapperError(DeskbotError):
    pass


class CyclicSubclass(MapperError):
    pass


class DanglingReference(MapperError):
    pass


class DuplicateModule(MapperError):
    pass


class UnknownClass(MapperError):
    pass


class UndeclaredProperty(MapperError):
    pass


class RangeViolation(MapperError):
    pass


class FunctionalViolation(MapperError):
    pass


class UnknownInstance(MapperError):
    pass


# --- behavior engine ------------------------------------------------------

class EngineError(DeskbotError):
    pass


class DuplicateBehaviorId(EngineError):
    pass


class UnresolvedGoal(EngineError):
    pass


class InvalidPlan(EngineError):
    pass


class InvalidCondition(EngineError):
    """Condition references unknown topics/prefixes or exceeds clause limits."""


class UnknownGoal(EngineError):
    pass


class NoBehaviorForGoal(EngineError):
    pass


class NoActiveInstance(EngineError):
    pass


# --- capabilities / simulated world ---------------------------------------

class CapabilityError(DeskbotError):
    pass


class EmptyText(CapabilityError):
    pass


class DuplicateWidgetId(CapabilityError):
    pass


class OutOfBounds(CapabilityError):
    pass


class TargetIsObstacle(CapabilityError):
    pass


class DuplicateCapability(CapabilityError):
    pass


class MalformedDescriptor(CapabilityError):
    pass


class UnknownOp(CapabilityError):
    pass


# --- hot deploy -----------------------------------------------------------

class DeployError(DeskbotError):
    pass


class DuplicateVersion(DeployError):
    pass


class IllegalTransition(DeployError):
    pass


class UnresolvedRequires(DeployError):
    pass


class VersionNotNewer(DeployError):
    pass


class BundleUnknown(DeployError):
    pass


# --- gateway --------------------------------------------------------------

class GatewayError(DeskbotError):
    pass


class PortInUse(GatewayError):
    pass


class ConfigInvalid(GatewayError):
    pass


class CommandValidationError(GatewayError):
    pass


class UnknownTarget(GatewayError):
    pass
