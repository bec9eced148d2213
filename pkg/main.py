import functools
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import click
from pydantic import BaseModel, ValidationError

from amalgam import check_ndap, check_ndap_upto
from classdef import ClassSpec, check_amalgamation, check_hereditary, load_spec, satisfies
from config import settings
from eliminate import Pipeline, eliminate, eliminate_all, write_stage_specs
from equiv import blur_set, canonical_key, falsify_evenly, falsify_freely, falsify_orthogonal, handle_set
from errors import ExchKitError, StructureError
from hierarchy import build_ap_product, build_ap_structure, check_hierarchical_invariance, sample_ap_array
from models import (
    ApReport,
    BlurEntry,
    BlurReport,
    CheckReport,
    ClassCheckReport,
    DapVerdict,
    EliminationManifest,
    EqSymReport,
    ExchReport,
    FailedRepReport,
    RunConfig,
    SampleRecord,
    StatsVerdict,
)
from relstruct import Structure
from reports import write_ap_csv, write_ap_xlsx, write_reports_xlsx
from rules import builtin_rules
from sampler import TypeRule, check_eq_symmetry, check_exchangeability, sample_batch

# Configurar logging
logging.basicConfig(level=settings.LOG_LEVEL)
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERDICT = 1
EXIT_ERROR = 2

SCHEMAS = {
    "check_report": CheckReport,
    "class_check_report": ClassCheckReport,
    "dap_verdict": DapVerdict,
    "blur_report": BlurReport,
    "sample_record": SampleRecord,
    "stats_verdict": StatsVerdict,
    "exch_report": ExchReport,
    "eqsym_report": EqSymReport,
    "elimination_manifest": EliminationManifest,
    "ap_report": ApReport,
    "failed_rep_report": FailedRepReport,
}


def handle_errors(func):
    """Errores de entrada y de la librería → código 2 con diagnóstico en stderr."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except click.ClickException:
            raise
        except (ExchKitError, ValidationError, OSError) as e:
            logger.error(f"❌ {type(e).__name__}: {e}")
            click.echo(f"Error: {e}", err=True)
            sys.exit(EXIT_ERROR)
        except Exception as e:
            logger.exception(f"💥 Error inesperado: {e}")
            click.echo(f"Error inesperado: {e}", err=True)
            sys.exit(EXIT_ERROR)
    return wrapper


# ---------------------------------------------------------------------------
# Entrada y salida
# ---------------------------------------------------------------------------

def _load_structure(path: str, K: ClassSpec) -> Structure:
    S = Structure.from_text(Path(path).read_text(encoding="utf-8"), K.sig)
    if not satisfies(K, S):
        raise StructureError(f"{path} no pertenece a la clase {K.name}")
    return S


def _parse_elements(text: str) -> List[int]:
    try:
        return sorted({int(tok) for tok in text.replace(" ", "").split(",") if tok})
    except ValueError:
        raise click.BadParameter(f"Lista de elementos inválida: {text!r}", param_hint="--set")


def _parse_ints(text: str, hint: str) -> List[int]:
    try:
        return [int(tok) for tok in text.split(",")]
    except ValueError:
        raise click.BadParameter(f"Lista de enteros inválida: {text!r}", param_hint=hint)


def _rule_for(K: ClassSpec, name: str, lift: bool) -> TypeRule:
    """La regla por nombre; con `lift` se entiende sobre la clase terminal y se levanta a K."""
    f = builtin_rules(name)
    if lift:
        f = eliminate_all(K).lift(f)
        logger.info(f"📦 {name} levantada a {K.name} como {f.name}")
    return f


def _echo_table(model: BaseModel, indent: str = "") -> None:
    for key, value in model.model_dump(mode="json").items():
        if isinstance(value, list) and value and all(isinstance(v, str) for v in value):
            click.echo(f"{indent}{key}:")
            for item in value:
                for line in item.rstrip("\n").splitlines():
                    click.echo(f"{indent}    {line}")
                click.echo(f"{indent}    ---")
        elif isinstance(value, dict) and "parts" in value:
            click.echo(f"{indent}{key}:")
            for i, part in enumerate(value["parts"], 1):
                click.echo(f"{indent}  parte {i}: {part.strip().replace(chr(10), '; ')}")
            for i, labels in enumerate(value.get("labelings") or [], 1):
                click.echo(f"{indent}  etiquetas {i}: {json.dumps(labels, sort_keys=True)}")
        else:
            click.echo(f"{indent}{key}: {value}")


def _emit(model: BaseModel, as_json: bool) -> None:
    if as_json:
        click.echo(model.model_dump_json(indent=2))
    else:
        _echo_table(model)


def _finish(passed: bool) -> None:
    sys.exit(EXIT_OK if passed else EXIT_VERDICT)


# ---------------------------------------------------------------------------
# Comandos
# ---------------------------------------------------------------------------

@click.group()
@click.option("--verbose", is_flag=True, help="Registro a nivel DEBUG.")
def cli(verbose: bool):
    """Herramientas para clases de Fraïssé con relaciones de equivalencia y procesos intercambiables."""
    if verbose:
        logging.getLogger().setLevel(logging.DEBUG)


@cli.command("check-class")
@click.option("--class", "class_file", required=True, help="Fichero .kspec o nombre incluido.")
@click.option("--n", "n", type=int, required=True)
@click.option("--json", "as_json", is_flag=True)
@handle_errors
def check_class(class_file: str, n: int, as_json: bool):
    """Herencia, amalgamación y falsificadores de cada relación declarada hasta tamaño n."""
    config = RunConfig(class_file=class_file, enum_cap=n)
    K = load_spec(config.class_file)
    checks = [check_hereditary(K, n), check_amalgamation(K, n)]
    for i, decl in enumerate(K.eqrels):
        checks.append(falsify_evenly(K, decl.id, n))
        checks.append(falsify_freely(K, decl.id, n))
        for other in K.eqrels[:i]:
            if other.star == decl.star:
                checks.append(falsify_orthogonal(K, decl.id, other.id, n))
    report = ClassCheckReport(class_name=K.name, n=n, holds=all(c.holds for c in checks), checks=checks)
    if as_json:
        _emit(report, True)
    else:
        for c in checks:
            icon = "✅" if c.holds else "❌"
            click.echo(f"{icon} {c.check}: {c.detail or ('sin contraejemplo' if c.holds else '')}")
            for w in c.witness:
                click.echo("    " + w.strip().replace("\n", "; "))
    _finish(report.holds)


@cli.command("check-dap")
@click.option("--class", "class_file", required=True)
@click.option("--n", "n", type=int, required=True)
@click.option("--upto", is_flag=True, help="Solo planes con etiquetados coherentes (lectura fuerte).")
@click.option("--weak-upto", is_flag=True, help="Lectura literal: basta con un etiquetado coherente.")
@click.option("--json", "as_json", is_flag=True)
@click.option("--xlsx", type=click.Path(dir_okay=False), default=None)
@handle_errors
def check_dap(class_file: str, n: int, upto: bool, weak_upto: bool, as_json: bool, xlsx: Optional[str]):
    config = RunConfig(class_file=class_file, enum_cap=n)
    K = load_spec(config.class_file)
    if weak_upto or upto:
        verdict = check_ndap_upto(K, n, weak=weak_upto)
    else:
        verdict = check_ndap(K, n)
    _emit(verdict, as_json)
    if xlsx:
        write_reports_xlsx(xlsx, [verdict], title=f"{n}-DAP {K.name}")
    _finish(verdict.holds)


@cli.command("blurs")
@click.option("--class", "class_file", required=True)
@click.option("--structure", "structure_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--set", "elements", required=True, help="Elementos separados por comas, p. ej. '1,2'.")
@click.option("--no-empty-blur", is_flag=True)
@click.option("--json", "as_json", is_flag=True)
@handle_errors
def blurs(class_file: str, structure_file: str, elements: str, no_empty_blur: bool, as_json: bool):
    """B(s) con la clave canónica de cada blur."""
    K = load_spec(class_file)
    S = _load_structure(structure_file, K)
    s = _parse_elements(elements)
    include_empty = not no_empty_blur
    found = blur_set(S, s, K, include_empty)
    report = BlurReport(
        class_name=K.name,
        elements=s,
        include_empty=include_empty,
        handles=[h.label() for h in handle_set(S, s, K)],
        blurs=[BlurEntry(handles=[h.label() for h in b], key=canonical_key(b, S, K).hex()) for b in found],
    )
    if as_json:
        _emit(report, True)
    else:
        click.echo(f"E({s}) = {{{', '.join(report.handles)}}}")
        for b, entry in zip(found, report.blurs):
            click.echo(f"{b.label():<40} {entry.key}")
        click.echo(f"{len(found)} blurs ({sum(1 for b in found if len(b))} no vacíos)")


@cli.command("sample")
@click.option("--class", "class_file", required=True)
@click.option("--structure", "structure_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--rule", required=True)
@click.option("--seed", type=int, required=True)
@click.option("--count", type=int, default=1, show_default=True)
@click.option("--lift", is_flag=True, help="La regla está sobre la clase terminal de la eliminación.")
@click.option("--no-empty-blur", is_flag=True)
@click.option("--json", "as_json", is_flag=True, help="Una línea JSON por muestra.")
@handle_errors
def sample(class_file, structure_file, rule, seed, count, lift, no_empty_blur, as_json):
    config = RunConfig(class_file=class_file, structure_files=[structure_file], rule=rule, seed=seed)
    K = load_spec(config.class_file)
    S = _load_structure(structure_file, K)
    f = _rule_for(K, rule, lift)
    for i, T in enumerate(sample_batch(S, K, f, config.seed, count, include_empty=not no_empty_blur)):
        if as_json:
            click.echo(SampleRecord(rule=f.name, seed=config.seed, index=i, structure=T.to_text()).model_dump_json())
        else:
            click.echo(T.to_text(), nl=False)
            if i + 1 < count:
                click.echo()


@cli.command("test-exch")
@click.option("--class", "class_file", required=True)
@click.option("--rule", required=True)
@click.option("--n", "n", type=int, required=True)
@click.option("--seed", type=int, required=True)
@click.option("--samples", type=int, default=settings.MC_SAMPLES, show_default=True)
@click.option("--tv-threshold", type=float, default=settings.TV_THRESHOLD, show_default=True)
@click.option("--p-threshold", type=float, default=settings.P_THRESHOLD, show_default=True)
@click.option("--lift", is_flag=True)
@click.option("--no-empty-blur", is_flag=True)
@click.option("--json", "as_json", is_flag=True)
@click.option("--xlsx", type=click.Path(dir_okay=False), default=None)
@handle_errors
def test_exch(class_file, rule, n, seed, samples, tv_threshold, p_threshold, lift, no_empty_blur, as_json, xlsx):
    """Compara la muestra de S con el pullback de la de T por cada inmersión S → T hasta tamaño n."""
    config = RunConfig(
        class_file=class_file, rule=rule, seed=seed, samples=samples,
        tv_threshold=tv_threshold, p_threshold=p_threshold, enum_cap=n,
    )
    K = load_spec(config.class_file)
    f = _rule_for(K, rule, lift)
    report = check_exchangeability(
        K, f, n, samples=config.samples, seed=config.seed,
        tv_threshold=config.tv_threshold, p_threshold=config.p_threshold,
        include_empty=not no_empty_blur,
    )
    _emit(report, as_json)
    if xlsx:
        write_reports_xlsx(xlsx, [report], title=f"Intercambiabilidad {f.name}")
    _finish(report.passed)


@cli.command("test-eqsym")
@click.option("--class", "class_file", required=True)
@click.option("--structure", "structure_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--rule", required=True)
@click.option("--seed", type=int, required=True)
@click.option("--mode", type=click.Choice(["exact", "montecarlo"]), default="exact", show_default=True)
@click.option("--samples", type=int, default=settings.MC_SAMPLES, show_default=True)
@click.option("--lift", is_flag=True)
@click.option("--json", "as_json", is_flag=True)
@handle_errors
def test_eqsym(class_file, structure_file, rule, seed, mode, samples, lift, as_json):
    config = RunConfig(class_file=class_file, structure_files=[structure_file], rule=rule, seed=seed, samples=samples)
    K = load_spec(config.class_file)
    S = _load_structure(structure_file, K)
    f = _rule_for(K, rule, lift)
    report = check_eq_symmetry(S, K, f, mode=mode, samples=config.samples, seed=config.seed)
    _emit(report, as_json)
    _finish(report.passed)


@cli.command("eliminate")
@click.option("--class", "class_file", required=True)
@click.option("--stage", "rid", default=None, help="Elimina solo esta relación; por defecto todas.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None)
@click.option("--dap", "dap_n", type=int, default=None, help="Comprueba n-DAP en la clase terminal.")
@click.option("--json", "as_json", is_flag=True)
@handle_errors
def eliminate_cmd(class_file: str, rid: Optional[str], out_dir: Optional[str], dap_n: Optional[int], as_json: bool):
    """Elimina relaciones de equivalencia y escribe una especificación por etapa."""
    K = load_spec(class_file)
    pipeline = Pipeline(K, (eliminate(K, rid),)) if rid else eliminate_all(K)
    manifest = write_stage_specs(pipeline, out_dir) if out_dir else pipeline.manifest()
    if dap_n is not None:
        manifest.terminal_dap = check_ndap(pipeline.terminal, dap_n)
    if out_dir:
        path = Path(out_dir) / "manifest.json"
        path.write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
        logger.info(f"📄 Manifiesto en {path}")
    _emit(manifest, as_json)
    _finish(manifest.terminal_dap is None or manifest.terminal_dap.holds)


@cli.command("ap-demo")
@click.option("--depths", default="2", show_default=True, help="Profundidad o profundidades separadas por comas.")
@click.option("--bounds", "bound", type=int, default=2, show_default=True, help="Valores por coordenada.")
@click.option("--product", is_flag=True, help="Producto de niveles con la coordenada extra α₊.")
@click.option("--plus", type=int, default=2, show_default=True)
@click.option("--mix", default="chain_mean", show_default=True)
@click.option("--seed", type=int, required=True)
@click.option("--samples", type=int, default=settings.MC_SAMPLES, show_default=True)
@click.option("--rows", type=int, default=1, show_default=True, help="Extracciones exportadas.")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None)
@click.option("--xlsx", type=click.Path(dir_okay=False), default=None)
@click.option("--json", "as_json", is_flag=True)
@handle_errors
def ap_demo(depths, bound, product, plus, mix, seed, samples, rows, csv_path, xlsx, as_json):
    """Muestrea un array jerárquico y comprueba su invarianza por permutaciones que preservan segmentos."""
    levels = _parse_ints(depths, "--depths")
    config = RunConfig(seed=seed, samples=samples)
    if product or len(levels) > 1:
        index = build_ap_product(levels, bound, plus)
    else:
        index = build_ap_structure(levels[0], bound)
    report = check_hierarchical_invariance(index, mix, samples=config.samples, seed=config.seed)
    if csv_path or xlsx:
        values = sample_ap_array(index, mix, config.seed, samples=rows)
        if csv_path:
            write_ap_csv(csv_path, index.points, values)
        if xlsx:
            write_ap_xlsx(xlsx, index.points, values, report)
    _emit(report, as_json)
    _finish(report.passed)


@cli.command("schemas")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None)
@handle_errors
def schemas(out_dir: Optional[str]):
    """Regenera los esquemas JSON de todas las salidas --json."""
    out = Path(out_dir) if out_dir else settings.schema_path
    out.mkdir(parents=True, exist_ok=True)
    for name, model in SCHEMAS.items():
        path = out / f"{name}.schema.json"
        path.write_text(json.dumps(model.model_json_schema(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        logger.info(f"📄 {path}")
    click.echo(f"{len(SCHEMAS)} esquemas en {out}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        cli.main(args=list(argv) if argv is not None else None, prog_name="exch-kit", standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return EXIT_ERROR
    except click.exceptions.Abort:
        return EXIT_ERROR
    except SystemExit as e:
        return int(e.code or 0)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
