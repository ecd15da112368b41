# Sólo el vocabulario base: los modelos concretos importan app.schemas.explore,
# que a su vez depende de este paquete.
from .base import ActionInstance, ModelInterface
from .zab import EMPTY_HISTORY, ZERO, History, QuorumSystem, Txn, Zxid
