import json
import logging

import pytest
from pydantic import ValidationError

from app.core.error_handlers import UsageError
from app.schemas.enums import ModelName, MutationId, QuorumRule
from app.schemas.manifest import RunManifest, load_manifest, manifest_reference, merge_with_flags
from app.services.runner import MANIFEST_FILE, run_service


def _write(tmp_path, data) -> str:
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


def test_manifest_valido(tmp_path):
    path = _write(tmp_path, {"model": "system", "n_servers": 3, "max_crashes": 1, "mutations": ["WEAK_QUORUM"]})
    manifest = load_manifest(path)
    assert manifest.model is ModelName.SYSTEM
    assert manifest.mutations == (MutationId.WEAK_QUORUM,)
    assert manifest.explicit_keys() == {"model", "n_servers", "max_crashes", "mutations"}
    cfg = manifest.to_explore_config()
    assert cfg.max_crashes == 1
    assert not hasattr(cfg, "output_dir")


def test_clave_desconocida_rechazada(tmp_path):
    """Prueba que una clave que no existe en el esquema se rechaza nombrándola."""
    path = _write(tmp_path, {"model": "protocol", "n_server": 3})
    with pytest.raises(ValidationError) as exc:
        load_manifest(path)
    assert "n_server" in str(exc.value)


def test_json_invalido(tmp_path):
    path = tmp_path / "roto.json"
    path.write_text("{model: protocol", encoding="utf-8")
    with pytest.raises(UsageError):
        load_manifest(path)


def test_manifest_inexistente(tmp_path):
    with pytest.raises(UsageError):
        load_manifest(tmp_path / "nada.json")


def test_servidores_fuera_de_rango():
    with pytest.raises(ValidationError):
        RunManifest(n_servers=7)
    assert RunManifest(n_servers=7, force_servers=True).n_servers == 7


# --- Tests de combinación manifest / flags ---

def test_flags_sin_manifest():
    merged = merge_with_flags(None, {"model": "test", "n_servers": 2, "seed": None})
    assert merged.model is ModelName.TEST
    assert merged.n_servers == 2
    assert "seed" not in merged.explicit_keys()


def test_manifest_gana_sobre_flag(caplog):
    """Prueba que ante un conflicto se conserva el valor del manifest y se emite un warning."""
    manifest = RunManifest.model_validate({"model": "system", "n_servers": 3})
    with caplog.at_level(logging.WARNING, logger="app.schemas.manifest"):
        merged = merge_with_flags(manifest, {"n_servers": 5, "max_crashes": 1})
    assert merged.n_servers == 3
    assert merged.max_crashes == 1
    assert any("--n-servers" in r.getMessage() for r in caplog.records)


def test_flag_igual_al_manifest_no_avisa(caplog):
    manifest = RunManifest.model_validate({"quorum_rule": "WEAK_HALF"})
    with caplog.at_level(logging.WARNING, logger="app.schemas.manifest"):
        merged = merge_with_flags(manifest, {"quorum_rule": QuorumRule.WEAK_HALF})
    assert merged.quorum_rule is QuorumRule.WEAK_HALF
    assert [r for r in caplog.records if r.levelno >= logging.WARNING] == []


def test_referencia_del_manifest():
    reference = json.loads(manifest_reference())
    props = reference["properties"]
    assert {"model", "n_servers", "mutations", "output_dir", "snapshot_boundary"} <= set(props)
    assert props["n_servers"]["default"] == 3


# --- Tests del directorio de corrida ---

def test_directorio_de_corrida_desde_el_entorno(tmp_output_dir):
    manifest = RunManifest.model_validate({"model": "test", "n_servers": 2})
    run_dir = run_service.create_run_dir(manifest, "check")
    assert run_dir.parent == tmp_output_dir
    assert run_dir.name.startswith("check-test-")
    saved = json.loads((run_dir / MANIFEST_FILE).read_text(encoding="utf-8"))
    assert saved["n_servers"] == 2
    # dos corridas en el mismo segundo no se pisan
    assert run_service.create_run_dir(manifest, "check") != run_dir


def test_output_dir_del_manifest_gana_al_entorno(tmp_output_dir, tmp_path):
    target = tmp_path / "otro"
    manifest = RunManifest.model_validate({"output_dir": str(target)})
    run_dir = run_service.create_run_dir(manifest, "simulate")
    assert run_dir.parent == target
