# Harness de conformidad: runtime de nodos, red simulada, calendarios y replay.
# node.py y simnet.py no importan código de transición de los modelos.
