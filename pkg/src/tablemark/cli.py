"""Command-line interface.

Subcommands: fit, gen-db, encode, decode, attack, eval. A TOML config
file may supply any long-option value; explicit flags override it. Key
material comes from --key-file (32 raw bytes or 64 hex chars) or the
TABLEMARK_KEY environment variable (hex). Exit codes: 0 ok, 2
validation, 3 capacity, 4 infeasible encoding, 5 I/O.
"""

from __future__ import annotations

import functools
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from . import workflow
from .attacks import ATTACK_KINDS, AttackSpec, apply_attack
from .clusterspace import load_cluster_model, save_cluster_model
from .desk import make_desk_table
from .errors import (
    ArtifactIOError,
    CapacityError,
    EncodingInfeasibleError,
    TablemarkError,
    ValidationError,
)
from .evaluation import correlation_gap, generate_workload, marginal_gap, raqe
from .optimizer import OptimizerConfig
from .robustness import RobustnessParams, derive_delta_ber, load_robustness, save_robustness
from .synthesizer import load_sampler, save_sampler
from .tableio import infer_schema, load_schema, load_table, save_schema, save_table
from .template import SecretKey, load_template, save_template
from .watermarkdb import WatermarkDatabase, derive_delta_be, load_watermark_db, save_watermark_db
from .workflow import OwnerModel

EXIT_VALIDATION = 2
EXIT_CAPACITY = 3
EXIT_INFEASIBLE = 4
EXIT_IO = 5

_MODEL = "cluster_model.json"
_TEMPLATE = "template.json"
_SAMPLER = "sampler.json"
_ROBUSTNESS = "robustness.json"


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except EncodingInfeasibleError as e:
            _fail(EXIT_INFEASIBLE, str(e))
        except CapacityError as e:
            _fail(EXIT_CAPACITY, str(e))
        except ArtifactIOError as e:
            _fail(EXIT_IO, str(e))
        except ValidationError as e:
            _fail(EXIT_VALIDATION, str(e))
        except TablemarkError as e:
            _fail(EXIT_VALIDATION, str(e))
        except OSError as e:
            _fail(EXIT_IO, str(e))

    return wrapper


def _apply_config(ctx: click.Context, config_path: str | None):
    """TOML values become defaults for any option left at its default."""
    if not config_path:
        return
    try:
        cfg = tomllib.loads(Path(config_path).read_text(encoding="utf-8"))
    except OSError as e:
        _fail(EXIT_IO, f"cannot read config {config_path}: {e}")
    except tomllib.TOMLDecodeError as e:
        _fail(EXIT_VALIDATION, f"config {config_path} is not valid TOML: {e}")
    for name, value in cfg.items():
        pname = name.replace("-", "_")
        if pname not in ctx.params:
            continue
        src = ctx.get_parameter_source(pname)
        if src == click.core.ParameterSource.DEFAULT:
            ctx.params[pname] = value


def _load_key(key_file: str | None) -> SecretKey:
    if key_file:
        return SecretKey.from_file(key_file)
    env = os.environ.get("TABLEMARK_KEY")
    if env:
        return SecretKey.from_hex(env.strip())
    raise ValidationError("no key: pass --key-file or set TABLEMARK_KEY (hex)")


def _load_data(data: str, schema: str | None):
    if schema:
        sch = load_schema(schema)
    else:
        sch = infer_schema(data)
    return load_table(data, sch), sch


def _load_owner(artifacts: str, data: str, schema: str | None) -> tuple[OwnerModel, object]:
    art = Path(artifacts)
    table_o, _ = _load_data(data, schema)
    model = load_cluster_model(art / _MODEL)
    template = load_template(art / _TEMPLATE)
    sampler = load_sampler(art / _SAMPLER, table_o)
    rob = load_robustness(art / _ROBUSTNESS)
    params = RobustnessParams(**rob["params"])
    from .template import optimal_watermark

    owner = OwnerModel(
        model=model,
        template=template,
        sampler=sampler,
        P=rob["P"],
        q=rob["q"],
        params=params,
        w_star=optimal_watermark(model.h, template),
    )
    return owner, table_o


def _set_threads(threads: int | None):
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(threads)


@click.group()
@click.option("--threads", type=int, default=None, help="Cap numeric-library worker threads.")
def main(threads):
    _set_threads(threads)


_config_opt = click.option("--config", type=click.Path(), default=None, help="TOML config supplying option defaults.")


@main.command("fit")
@click.option("--data", required=True, type=click.Path(exists=True), help="Original table CSV.")
@click.option("--schema", type=click.Path(exists=True), default=None, help="Schema JSON sidecar (inferred if omitted).")
@click.option("--artifacts", required=True, type=click.Path(), help="Output artifact directory.")
@click.option("--key-file", type=click.Path(exists=True), default=None)
@click.option("-m", "--clusters", "m_clusters", type=int, default=256, show_default=True)
@click.option("-l", "--bits", "l_bits", type=int, default=32, show_default=True)
@click.option("--db-size", type=int, default=1000, show_default=True, help="Planned watermark count N (for threshold derivation).")
@click.option("--delta-fpr", type=float, default=1e-3, show_default=True)
@click.option("--delta-fnr", type=float, default=1e-3, show_default=True)
@click.option("--i-per", type=float, default=0.01, show_default=True)
@click.option("--i-alt", type=float, default=0.01, show_default=True)
@click.option("--i-del", type=float, default=0.1, show_default=True)
@click.option("--transition-samples", type=int, default=2048, show_default=True)
@click.option("--deletion-sims", type=int, default=50, show_default=True)
@click.option("--variance-target", type=float, default=0.99, show_default=True)
@click.option("--sigma-jit", type=float, default=0.02, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@_config_opt
@click.pass_context
@handle_errors
def cmd_fit(ctx, data, schema, artifacts, key_file, m_clusters, l_bits, db_size, delta_fpr,
            delta_fnr, i_per, i_alt, i_del, transition_samples, deletion_sims,
            variance_target, sigma_jit, seed, config):
    """Fit owner-side artifacts: cluster model, template, sampler, robustness."""
    _apply_config(ctx, config)
    p = ctx.params
    key = _load_key(p["key_file"])
    table_o, sch = _load_data(p["data"], p["schema"])
    params = RobustnessParams(
        delta_fpr=p["delta_fpr"], delta_fnr=p["delta_fnr"], i_per=p["i_per"], i_alt=p["i_alt"],
        i_del=p["i_del"], T=p["transition_samples"], deletion_sims=p["deletion_sims"],
    )
    owner = workflow.fit_owner(
        table_o, key, p["m_clusters"], p["l_bits"], params=params,
        variance_target=p["variance_target"], sigma_jit=p["sigma_jit"], seed=p["seed"],
    )
    art = Path(p["artifacts"])
    art.mkdir(parents=True, exist_ok=True)
    save_cluster_model(owner.model, art / _MODEL)
    save_template(owner.template, art / _TEMPLATE)
    save_sampler(owner.sampler, art / _SAMPLER)
    delta_be = derive_delta_be(p["db_size"], p["l_bits"], p["delta_fpr"])
    delta_ber = derive_delta_ber(p["delta_fnr"], delta_be, p["l_bits"])
    save_robustness(art / _ROBUSTNESS, owner.P, owner.q, delta_be, delta_ber, params, p["seed"])
    save_schema(sch, art / "schema.json")
    click.echo(f"delta_be={delta_be}")
    click.echo(f"delta_ber={delta_ber:.6g}")
    click.echo(f"artifacts written to {art}")


@main.command("gen-db")
@click.option("--db", "db_path", required=True, type=click.Path(), help="Watermark database JSON path.")
@click.option("-n", "--db-size", type=int, default=1000, show_default=True)
@click.option("-l", "--bits", "l_bits", type=int, default=32, show_default=True)
@click.option("--delta-fpr", type=float, default=1e-3, show_default=True)
@click.option("--delta-be", type=int, default=None, help="Override the derived bit-error tolerance.")
@_config_opt
@click.pass_context
@handle_errors
def cmd_gen_db(ctx, db_path, db_size, l_bits, delta_fpr, delta_be, config):
    """Generate the watermark offset database."""
    _apply_config(ctx, config)
    p = ctx.params
    db = WatermarkDatabase.generate(p["db_size"], p["l_bits"], p["delta_fpr"], delta_be=p["delta_be"])
    save_watermark_db(db, p["db_path"])
    click.echo(f"delta_be={db.delta_be}")
    click.echo(f"watermarks={db.N} bits={db.L}")
    click.echo(f"database written to {p['db_path']}")


@main.command("encode")
@click.option("--data", required=True, type=click.Path(exists=True), help="Original table CSV.")
@click.option("--schema", type=click.Path(exists=True), default=None)
@click.option("--artifacts", required=True, type=click.Path(exists=True))
@click.option("--db", "db_path", required=True, type=click.Path(exists=True))
@click.option("--buyer", required=True, help="Buyer identifier.")
@click.option("--out", required=True, type=click.Path(), help="Watermarked table CSV output.")
@click.option("--report", type=click.Path(), default=None, help="Optimizer report JSON output.")
@click.option("--stages", type=int, default=6, show_default=True)
@click.option("--tau-init", type=float, default=0.01, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@_config_opt
@click.pass_context
@handle_errors
def cmd_encode(ctx, data, schema, artifacts, db_path, buyer, out, report, stages, tau_init, seed, config):
    """Synthesize a watermarked table for a buyer."""
    _apply_config(ctx, config)
    p = ctx.params
    owner, table_o = _load_owner(p["artifacts"], p["data"], p["schema"])
    db = load_watermark_db(p["db_path"])
    cfg = OptimizerConfig(tau_init=p["tau_init"], stages=p["stages"])
    table_w, result, w_buyer = workflow.encode_table(owner, db, p["buyer"], config=cfg, seed=p["seed"])
    save_table(table_w, p["out"])
    save_schema(table_w.schema, str(p["out"]) + ".schema.json")
    save_watermark_db(db, p["db_path"])
    if p["report"]:
        obj = {
            "buyer": p["buyer"],
            "mse": result.mse,
            "max_ber": float(np.max(result.per_bit_ber)),
            "stages": result.report,
        }
        Path(p["report"]).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")
    click.echo(f"buyer={p['buyer']}")
    click.echo(f"mse={result.mse:.6g}")
    click.echo(f"watermarked table written to {p['out']}")


@main.command("decode")
@click.option("--data", required=True, type=click.Path(exists=True), help="Suspect table CSV.")
@click.option("--schema", type=click.Path(exists=True), default=None)
@click.option("--original", required=True, type=click.Path(exists=True), help="Original table CSV (rehydrates the sampler-independent artifacts).")
@click.option("--original-schema", type=click.Path(exists=True), default=None)
@click.option("--artifacts", required=True, type=click.Path(exists=True))
@click.option("--db", "db_path", required=True, type=click.Path(exists=True))
@_config_opt
@click.pass_context
@handle_errors
def cmd_decode(ctx, data, schema, original, original_schema, artifacts, db_path, config):
    """Decode a suspect table and identify the leaking buyer."""
    _apply_config(ctx, config)
    p = ctx.params
    owner, _ = _load_owner(p["artifacts"], p["original"], p["original_schema"])
    db = load_watermark_db(p["db_path"])
    sch = load_schema(p["schema"]) if p["schema"] else load_schema(Path(p["artifacts"]) / "schema.json")
    suspect = load_table(p["data"], sch)
    res = workflow.identify_table(owner, db, suspect)
    click.echo(f"bits={res.decoded.bitstring}")
    if res.buyer_id is None:
        click.echo("buyer=none")
    else:
        click.echo(f"buyer={res.buyer_id}")
        click.echo(f"distance={res.distance}")


@main.command("attack")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--schema", type=click.Path(exists=True), default=None)
@click.option("--out", required=True, type=click.Path())
@click.option("--kind", required=True, type=click.Choice(ATTACK_KINDS))
@click.option("--intensity", type=float, default=0.05, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("-m", "--clusters", "m_clusters", type=int, default=256, show_default=True, help="Attacker cluster count (adaptive_delete).")
@click.option("-l", "--bits", "l_bits", type=int, default=32, show_default=True, help="Attacker bit count (adaptive_delete).")
@_config_opt
@click.pass_context
@handle_errors
def cmd_attack(ctx, data, schema, out, kind, intensity, seed, m_clusters, l_bits, config):
    """Apply an attack transformation to a table."""
    _apply_config(ctx, config)
    p = ctx.params
    table, sch = _load_data(p["data"], p["schema"])
    spec = AttackSpec(kind=p["kind"], intensity=p["intensity"], seed=p["seed"])
    attacked = apply_attack(table, spec, M=p["m_clusters"], L=p["l_bits"])
    save_table(attacked, p["out"])
    save_schema(sch, str(p["out"]) + ".schema.json")
    click.echo(f"{p['kind']} intensity={p['intensity']} rows={len(attacked)}")
    click.echo(f"attacked table written to {p['out']}")


@main.command("eval")
@click.option("--original", required=True, type=click.Path(exists=True))
@click.option("--original-schema", type=click.Path(exists=True), default=None)
@click.option("--synthetic", required=True, type=click.Path(exists=True))
@click.option("--per-bucket", type=int, default=1000, show_default=True)
@click.option("--scale-counts", is_flag=True, default=False)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--report", type=click.Path(), default=None, help="JSON report output path.")
@_config_opt
@click.pass_context
@handle_errors
def cmd_eval(ctx, original, original_schema, synthetic, per_bucket, scale_counts, seed, report, config):
    """Distribution-gap and aggregation-query utility report."""
    _apply_config(ctx, config)
    p = ctx.params
    table_o, sch = _load_data(p["original"], p["original_schema"])
    table_s = load_table(p["synthetic"], sch)
    workload = generate_workload(table_o, seed=p["seed"], per_bucket=p["per_bucket"])
    errs = raqe(workload, table_s, table_o, scale_counts=p["scale_counts"])
    mg = marginal_gap(table_s, table_o)
    cg = correlation_gap(table_s, table_o)
    obj = {
        "marginal_gap": mg,
        "correlation_gap": cg,
        "raqe_p95": {f"{a}/{b}": v for (a, b), v in sorted(errs.items())},
    }
    if p["report"]:
        Path(p["report"]).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")
    click.echo(f"{'metric':<18}{'value':>10}")
    click.echo(f"{'Marg. Gap':<18}{mg:>10.4f}")
    click.echo(f"{'Corr. Gap':<18}{cg:>10.4f}")
    for (a, b), v in sorted(errs.items()):
        click.echo(f"{'RAQE ' + a + ' ' + b:<18}{v:>10.4f}")


@main.command("make-desk")
@click.option("--out", required=True, type=click.Path())
@click.option("--rows", type=int, default=20000, show_default=True)
@click.option("--seed", type=int, default=7, show_default=True)
@handle_errors
def cmd_make_desk(out, rows, seed):
    """Write the seeded synthetic benchmark table and its schema."""
    table = make_desk_table(n_rows=rows, seed=seed)
    save_table(table, out)
    save_schema(table.schema, str(out) + ".schema.json")
    click.echo(f"desk table ({rows} rows) written to {out}")


if __name__ == "__main__":
    main()
