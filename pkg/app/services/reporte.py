import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, List

import pandas as pd
from fpdf import FPDF

from app.core.error_handlers import UsageError
from app.schemas.explore import CheckReport
from app.services.runner import MANIFEST_FILE, find_report_files

logger = logging.getLogger(__name__)

COLUMNAS = ["Config", "Modo", "Estados explorados", "Diámetro", "Tiempo (ms)", "Violaciones", "Terminación"]


class ReporteService:
    """Agrega corridas en una tabla con la forma de las tablas de resultados: config, modo, estados, diámetro, tiempo."""

    def describir_config(self, manifest: Dict[str, Any]) -> str:
        partes = [manifest.get("model", "?"), f"n={manifest.get('n_servers', '?')}",
                  f"txn={manifest.get('max_transactions', '?')}"]
        for clave, etiqueta in (("max_timeouts", "to"), ("max_restarts", "rs"),
                                ("max_crashes", "cr"), ("max_partitions", "pt")):
            if manifest.get(clave):
                partes.append(f"{etiqueta}={manifest[clave]}")
        if manifest.get("quorum_rule") and manifest["quorum_rule"] != "MAJORITY":
            partes.append(manifest["quorum_rule"])
        if manifest.get("mutations"):
            partes.append("+" + "+".join(manifest["mutations"]))
        return " ".join(str(p) for p in partes)

    def fila(self, report: CheckReport, config: str) -> Dict[str, Any]:
        return {
            "Config": config,
            "Modo": report.mode.value,
            "Estados explorados": report.states_explored,
            "Diámetro": "-" if report.diameter is None else report.diameter,
            "Tiempo (ms)": round(report.wall_time_ms, 1),
            "Violaciones": ",".join(i.value for i in report.violated_invariants()) or "-",
            "Terminación": report.terminated_reason.value,
        }

    def obtener_datos(self, base: Path) -> List[Dict[str, Any]]:
        """Una fila por CheckReport encontrado bajo base (las cacerías aportan dos)."""
        base = Path(base)
        if not base.exists():
            raise UsageError("El directorio de corridas no existe", ruta=str(base))
        datos = []
        for path in find_report_files(base):
            manifest_path = path.parent / MANIFEST_FILE
            manifest = json.loads(manifest_path.read_text(encoding="utf-8")) if manifest_path.exists() else {}
            report = CheckReport.model_validate_json(path.read_text(encoding="utf-8"))
            datos.append(self.fila(report, self.describir_config(manifest)))
        logger.info(f"Reporte: {len(datos)} corridas encontradas bajo {base}")
        return datos

    def tabla(self, datos: List[Dict[str, Any]]) -> str:
        if not datos:
            return "No hay corridas para reportar."
        return pd.DataFrame(datos, columns=COLUMNAS).to_string(index=False)


reporte_service = ReporteService()


# ==========================================
# FUNCIONES AUXILIARES DE GENERACIÓN
# ==========================================
def generar_csv(ruta_archivo: Path, datos: list):
    """Genera el archivo CSV con BOM para compatibilidad con Excel en Windows"""
    if not datos:
        with open(ruta_archivo, 'w', encoding='utf-8-sig') as f:
            f.write("No hay datos para este reporte.")
        return
    with open(ruta_archivo, 'w', newline='', encoding='utf-8-sig') as f:
        writer = csv.DictWriter(f, fieldnames=datos[0].keys())
        writer.writeheader()
        writer.writerows(datos)


def generar_json(ruta_archivo: Path, datos: list):
    """Sidecar legible por máquina con exactamente las filas de la tabla."""
    with open(ruta_archivo, 'w', encoding='utf-8') as f:
        json.dump(datos, f, indent=2, ensure_ascii=False)


def generar_pdf(ruta_archivo: Path, datos: list, titulo: str):
    """Genera un archivo PDF. Compatible con fpdf2 donde output() retorna bytes."""
    pdf = FPDF(orientation="L", unit="mm", format="A4")
    pdf.add_page()

    pdf.set_font("helvetica", "B", 16)
    pdf.cell(0, 10, titulo, align="C", new_x="LMARGIN", new_y="NEXT")
    pdf.ln(5)

    if not datos:
        pdf.set_font("helvetica", "", 12)
        pdf.cell(0, 10, "No hay corridas para reportar.")
        with open(ruta_archivo, "wb") as f:
            f.write(pdf.output())
        return

    columnas = list(datos[0].keys())
    ancho_pagina = 277
    # La columna de configuración necesita más espacio que las numéricas
    anchos = [ancho_pagina * 0.34] + [ancho_pagina * 0.66 / (len(columnas) - 1)] * (len(columnas) - 1)

    pdf.set_font("helvetica", "B", 9)
    for col, ancho in zip(columnas, anchos):
        pdf.cell(ancho, 10, str(col).encode("latin-1", "replace").decode("latin-1"), border=1, align="C")
    pdf.ln()

    pdf.set_font("helvetica", "", 8)
    for fila in datos:
        for col, ancho in zip(columnas, anchos):
            valor = str(fila.get(col, ""))[:60].encode("latin-1", "replace").decode("latin-1")
            pdf.cell(ancho, 8, valor, border=1)
        pdf.ln()

    with open(ruta_archivo, "wb") as f:
        f.write(pdf.output())


def generar_excel(ruta_archivo: Path, datos: list):
    """Genera un archivo Excel (.xlsx) nativo usando pandas."""
    if not datos:
        df = pd.DataFrame([{"Aviso": "No hay corridas para reportar."}])
    else:
        df = pd.DataFrame(datos)
    df.to_excel(ruta_archivo, index=False, engine="openpyxl")
