from .enums import (
    CheckMode,
    EventKind,
    InvariantId,
    MessageKind,
    ModelName,
    MutationId,
    NodeFault,
    Phase,
    QuorumRule,
    Role,
    StoreMode,
    SyncMode,
    TerminationReason,
)
