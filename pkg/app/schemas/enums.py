from enum import Enum


class Role(str, Enum):
    """Rol de un servidor dentro del ensamble."""
    LOOKING = 'LOOKING'
    FOLLOWING = 'FOLLOWING'
    LEADING = 'LEADING'


class Phase(str, Enum):
    """Fase del protocolo en la que se encuentra un servidor."""
    NONE = 'NONE'
    DISCOVERY = 'DISCOVERY'
    SYNC = 'SYNC'
    BROADCAST = 'BROADCAST'


class MessageKind(str, Enum):
    """Tipos de mensaje. Los tres últimos de sincronización sólo existen en el modelo de sistema."""
    CEPOCH = 'CEPOCH'
    NEWEPOCH = 'NEWEPOCH'
    ACKEPOCH = 'ACKEPOCH'
    NEWLEADER = 'NEWLEADER'
    ACKLD = 'ACKLD'
    COMMITLD = 'COMMITLD'
    PROPOSE = 'PROPOSE'
    ACK = 'ACK'
    COMMIT = 'COMMIT'
    FOLLOWERINFO = 'FOLLOWERINFO'
    DIFF = 'DIFF'
    TRUNC = 'TRUNC'
    SNAP = 'SNAP'

    def is_sync_decision(self) -> bool:
        """True para los mensajes que transportan una decisión de sincronización."""
        return self in (MessageKind.DIFF, MessageKind.TRUNC, MessageKind.SNAP)


class SyncMode(str, Enum):
    DIFF = 'DIFF'
    TRUNC = 'TRUNC'
    SNAP = 'SNAP'


class QuorumRule(str, Enum):
    """MAJORITY es la regla correcta; WEAK_HALF es el error sembrado (>= n/2)."""
    MAJORITY = 'MAJORITY'
    WEAK_HALF = 'WEAK_HALF'


class CheckMode(str, Enum):
    BFS = 'BFS'
    SIMULATION = 'SIMULATION'


class StoreMode(str, Enum):
    """Cómo guarda el explorador el conjunto de estados visitados."""
    EXACT_SET = 'exact_set'
    FINGERPRINT_SET = 'fingerprint_set'


class TerminationReason(str, Enum):
    EXHAUSTED = 'EXHAUSTED'
    VIOLATION = 'VIOLATION'
    TIME_LIMIT = 'TIME_LIMIT'
    STATE_LIMIT = 'STATE_LIMIT'
    BUDGET = 'BUDGET'

    def is_incomplete(self) -> bool:
        """True si la corrida terminó por presupuesto antes de agotar la búsqueda."""
        return self in (TerminationReason.TIME_LIMIT, TerminationReason.STATE_LIMIT)


class ModelName(str, Enum):
    """Nivel de la pila de especificaciones que se explora."""
    PROTOCOL = 'protocol'
    SYSTEM = 'system'
    TEST = 'test'
    TOY = 'toy'


class MutationId(str, Enum):
    """Catálogo de errores sembrados. Cada uno altera una única guarda o actualización."""
    WEAK_QUORUM = 'WEAK_QUORUM'
    SYNC_SKIP_TRUNC = 'SYNC_SKIP_TRUNC'
    COMMIT_BEFORE_QUORUM = 'COMMIT_BEFORE_QUORUM'
    RECOVER_RACE_RAW = 'RECOVER_RACE_RAW'
    DIFF_FROM_UNCOMMITTED = 'DIFF_FROM_UNCOMMITTED'


class InvariantId(str, Enum):
    """Identificadores de invariantes de estado y de paso."""
    INTEGRITY = 'Integrity'
    TOTAL_ORDER = 'TotalOrder'
    LOCAL_PRIMARY_ORDER = 'LocalPrimaryOrder'
    GLOBAL_PRIMARY_ORDER = 'GlobalPrimaryOrder'
    PRIMARY_INTEGRITY = 'PrimaryIntegrity'
    SINGLE_ESTABLISHED_LEADER = 'SingleEstablishedLeaderPerEpoch'
    EPOCH_MONOTONICITY = 'EpochMonotonicity'
    COMMITTED_WITHIN_HISTORY = 'CommittedWithinHistory'
    LEADER_LOG_COMPLETENESS = 'LeaderLogCompleteness'
    MONOTONIC_READ = 'MonotonicRead'
    ELECTED_LEADER_UP_TO_DATE = 'ElectedLeaderUpToDate'
    # Sólo para el modelo de juguete del kernel
    TOY_BOUND = 'ToyCounterBound'


class NodeFault(str, Enum):
    """Defectos plantados en el runtime de nodos (sólo para pruebas del harness)."""
    BROKEN_TRUNCATE = 'BROKEN_TRUNCATE'
    STALE_ACCEPTED_EPOCH = 'STALE_ACCEPTED_EPOCH'
    LAZY_COMMIT = 'LAZY_COMMIT'
    SKIP_SYNC_PHASE = 'SKIP_SYNC_PHASE'


class EventKind(str, Enum):
    """Eventos de un calendario de replay."""
    DELIVER = 'DELIVER'
    FIRE = 'FIRE'
    CRASH = 'CRASH'
    REJOIN = 'REJOIN'
    PARTITION = 'PARTITION'
    RECONNECT = 'RECONNECT'
