import json

import pandas as pd
import pytest

from app.core.error_handlers import UsageError
from app.models.toy import ToyCounterModel
from app.schemas.manifest import RunManifest
from app.services.explorer import check_bfs
from app.services.reporte import COLUMNAS, generar_csv, generar_excel, generar_json, generar_pdf, reporte_service
from app.services.runner import run_service


@pytest.fixture
def corridas(tmp_output_dir):
    """Dos corridas del contador: una limpia y otra con violación."""
    for model in (ToyCounterModel(), ToyCounterModel(modulus=None, limit=2)):
        manifest = RunManifest.model_validate({"model": "toy", "n_servers": 1})
        cfg = manifest.to_explore_config()
        report = check_bfs(model, cfg)
        run_dir = run_service.create_run_dir(manifest, "check")
        run_service.write_check(run_dir, report, cfg)
    return tmp_output_dir


def test_describir_config():
    texto = reporte_service.describir_config(
        {"model": "system", "n_servers": 3, "max_transactions": 1, "max_crashes": 1,
         "quorum_rule": "WEAK_HALF", "mutations": ["SYNC_SKIP_TRUNC"]}
    )
    assert texto == "system n=3 txn=1 cr=1 WEAK_HALF +SYNC_SKIP_TRUNC"


def test_filas_por_corrida(corridas):
    """Prueba que cada CheckReport bajo el directorio aporta una fila con las columnas de la tabla."""
    datos = reporte_service.obtener_datos(corridas)
    assert len(datos) == 2
    assert all(list(fila) == COLUMNAS for fila in datos)
    violaciones = sorted(fila["Violaciones"] for fila in datos)
    assert violaciones == ["-", "ToyCounterBound"]
    tabla = reporte_service.tabla(datos)
    assert "Estados explorados" in tabla


def test_tabla_vacia():
    assert reporte_service.tabla([]) == "No hay corridas para reportar."


def test_directorio_inexistente(tmp_path):
    with pytest.raises(UsageError):
        reporte_service.obtener_datos(tmp_path / "no-hay")


def test_exportaciones(corridas, tmp_path):
    datos = reporte_service.obtener_datos(corridas)
    generar_json(tmp_path / "report.json", datos)
    assert json.loads((tmp_path / "report.json").read_text(encoding="utf-8")) == datos

    generar_csv(tmp_path / "report.csv", datos)
    leido = pd.read_csv(tmp_path / "report.csv", encoding="utf-8-sig")
    assert list(leido.columns) == COLUMNAS

    generar_excel(tmp_path / "report.xlsx", datos)
    assert len(pd.read_excel(tmp_path / "report.xlsx", engine="openpyxl")) == 2

    generar_pdf(tmp_path / "report.pdf", datos, "Corridas")
    assert (tmp_path / "report.pdf").read_bytes().startswith(b"%PDF")


def test_exportaciones_sin_datos(tmp_path):
    generar_csv(tmp_path / "vacio.csv", [])
    assert "No hay datos" in (tmp_path / "vacio.csv").read_text(encoding="utf-8-sig")
    generar_pdf(tmp_path / "vacio.pdf", [], "Corridas")
    assert (tmp_path / "vacio.pdf").exists()
