"""
Módulo de Servicios

Exploración de modelos, trazas, reportes y ejecución de corridas.
"""
