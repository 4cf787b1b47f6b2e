"""Exception hierarchy shared by every layer of the system."""


class IdeaError(Exception):
    """Base class for all errors raised by this package."""


# data model

class ParseError(IdeaError):
    def __init__(self, position, reason):
        super().__init__(f"parse error at offset {position}: {reason}")
        self.position = position
        self.reason = reason


class ValidationError(IdeaError):
    def __init__(self, problems, datatype=None):
        self.problems = list(problems)
        self.datatype = datatype
        where = f" against {datatype}" if datatype else ""
        super().__init__(f"record does not validate{where}: " + "; ".join(self.problems))


class MissingKeyField(IdeaError):
    def __init__(self, field):
        super().__init__(f"primary key field {field!r} is missing")
        self.field = field


class CorruptRecord(IdeaError):
    pass


class ArgumentTypeError(IdeaError, TypeError):
    """An argument or value has the wrong kind for the operation."""


# dataflow runtime

class InvalidSpec(IdeaError):
    def __init__(self, reason, detail=""):
        msg = reason if not detail else f"{reason}: {detail}"
        super().__init__(msg)
        self.reason = reason
        self.detail = detail


class OperatorFailure(IdeaError):
    def __init__(self, op_id, cause, partition=None):
        super().__init__(f"operator {op_id!r} failed: {cause!r}")
        self.op_id = op_id
        self.cause = cause
        self.partition = partition


class JobAborted(IdeaError):
    pass


# partition holders

class DuplicateHolderId(IdeaError):
    pass


class UnknownHolderId(IdeaError):
    pass


class HolderClosed(IdeaError):
    pass


class WrongMode(IdeaError):
    pass


# predeployed jobs

class UnknownDeployedJob(IdeaError):
    pass


class UnboundSlot(IdeaError):
    def __init__(self, slot):
        super().__init__(f"parameter slot {slot!r} is not bound")
        self.slot = slot


class InvocationInFlight(IdeaError):
    pass


# storage

class DuplicateKey(IdeaError):
    pass


class UnknownDataset(IdeaError):
    pass


class UnknownIndex(IdeaError):
    pass


class CatalogError(IdeaError):
    pass


# enrichment

class EvaluationError(IdeaError):
    def __init__(self, record_index, cause):
        super().__init__(f"record {record_index}: {cause!r}")
        self.record_index = record_index
        self.cause = cause


class StatefulStreamRejected(IdeaError):
    pass


class StreamBuildOverflow(IdeaError):
    pass


class SpillIOError(IdeaError):
    pass


class ResourceLoadError(IdeaError):
    pass


class UnknownFunction(IdeaError):
    pass


class PlanError(IdeaError):
    """A function body or query cannot be compiled into a plan."""


# feeds

class IllegalFeedState(IdeaError):
    pass


class UnknownFeed(IdeaError):
    pass


class BindError(IdeaError, OSError):
    pass


# ddl

class SqlSyntaxError(IdeaError):
    def __init__(self, line, col, expected, found=None):
        got = f", found {found!r}" if found is not None else ""
        super().__init__(f"syntax error at {line}:{col}: expected {expected}{got}")
        self.line = line
        self.col = col
        self.expected = expected
        self.found = found


class UnsupportedSyntax(IdeaError):
    def __init__(self, construct, line=None, col=None):
        where = f" at {line}:{col}" if line is not None else ""
        super().__init__(f"unsupported syntax{where}: {construct}")
        self.construct = construct
        self.line = line
        self.col = col
