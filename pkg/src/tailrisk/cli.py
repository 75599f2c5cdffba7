"""Config-driven experiment harness.

One experiment is one JSON config file naming a workflow, the model
spec, a threshold or probability ladder, and run parameters. Results
are written as a CSV table plus a JSON summary that echoes the fully
resolved config (defaults materialized), so a run can be reproduced
from its own output. With a fixed seed the CSV artifact is
byte-identical across runs and worker counts.

Exit codes: 0 success, 2 validation error, 3 estimation error,
4 file I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from . import config as cfg
from .dependence import gtai_diagnostic
from .distributions import classify
from .engine import DEFAULT_CHUNK_SIZE
from .errors import ConfigurationError, EstimationError
from .mrv import gamma_functionals
from .renewal import ruin_analysis
from .risk_measures import c_alpha, tdrm_asymptotic, tdrm_exact
from .weighted_sums import mc_joint_tail, rv_closed_form, single_jump_rhs

WORKFLOWS = ("joint_tail", "ruin", "tdrm", "gtai_check", "classify")

_RUN_DEFAULTS = {"seed": 0, "samples": 10**6, "workers": 1, "chunk_size": DEFAULT_CHUNK_SIZE}
_OUTPUT_DEFAULTS = {"path": "experiment", "format": "csv"}


@dataclass
class ExperimentConfig:
    """Validated, fully resolved experiment description."""

    workflow: str
    spec: dict
    ladder: dict
    run: dict
    output: dict
    options: dict
    id: str | None = None
    description: str | None = None

    def resolved(self) -> dict:
        out = {
            "workflow": self.workflow,
            "spec": self.spec,
            "ladder": self.ladder,
            "run": self.run,
            "output": self.output,
            "options": self.options,
        }
        if self.id is not None:
            out["id"] = self.id
        if self.description is not None:
            out["description"] = self.description
        return out


def parse_experiment(block: dict) -> ExperimentConfig:
    """Strict-parse a raw config dict, materializing all defaults."""
    if not isinstance(block, dict):
        raise ConfigurationError("config root must be an object")
    allowed = {"workflow", "spec", "ladder", "run", "output", "options", "id", "description"}
    unknown = set(block) - allowed
    if unknown:
        raise ConfigurationError(f"config: unknown key '{sorted(unknown)[0]}'")
    workflow = block.get("workflow")
    if workflow not in WORKFLOWS:
        raise ConfigurationError(f"workflow must be one of {WORKFLOWS}, got {workflow!r}")
    if "spec" not in block:
        raise ConfigurationError("config: missing key 'spec'")

    run = dict(_RUN_DEFAULTS)
    raw_run = block.get("run", {})
    unknown = set(raw_run) - set(_RUN_DEFAULTS)
    if unknown:
        raise ConfigurationError(f"run: unknown key '{sorted(unknown)[0]}'")
    run.update({k: int(v) for k, v in raw_run.items()})

    output = dict(_OUTPUT_DEFAULTS)
    raw_out = block.get("output", {})
    unknown = set(raw_out) - set(_OUTPUT_DEFAULTS)
    if unknown:
        raise ConfigurationError(f"output: unknown key '{sorted(unknown)[0]}'")
    output.update(raw_out)
    if output["format"] not in ("csv", "json"):
        raise ConfigurationError("output format must be 'csv' or 'json'")

    return ExperimentConfig(
        workflow=workflow,
        spec=block["spec"],
        ladder=block.get("ladder", {}),
        run=run,
        output=output,
        options=block.get("options", {}),
        id=block.get("id"),
        description=block.get("description"),
    )


def _ladder_levels(ladder: dict, allowed=("levels", "thresholds")) -> dict:
    unknown = set(ladder) - set(allowed)
    if unknown:
        raise ConfigurationError(f"ladder: unknown key '{sorted(unknown)[0]}'")
    return ladder


def _ratio_with_ci(num, num_ci, den, den_ci):
    """Delta-method CI for a ratio of independent estimates."""
    if den <= 0:
        return float("nan"), float("inf")
    ratio = num / den
    rel_sq = 0.0
    if num > 0:
        rel_sq += (num_ci / num) ** 2
    elif num_ci > 0:
        return ratio, num_ci / den
    if den_ci > 0:
        rel_sq += (den_ci / den) ** 2
    return ratio, ratio * rel_sq**0.5


def _run_joint_tail(exp: ExperimentConfig):
    spec = cfg.sum_spec_from_config(exp.spec)
    ladder = _ladder_levels(exp.ladder)
    pairs = []
    for level in ladder.get("levels", []):
        pairs.append(
            (float(spec.x_laws[0].quantile(1.0 - level)), float(spec.y_laws[0].quantile(1.0 - level)))
        )
    pairs.extend((float(x), float(y)) for x, y in ladder.get("thresholds", []))
    if not pairs:
        raise ConfigurationError("joint_tail needs a ladder with levels or thresholds")

    run = exp.run
    rows = []
    for x, y in pairs:
        mc = mc_joint_tail(
            spec, x, y, run["samples"], run["seed"],
            chunk_size=run["chunk_size"], workers=run["workers"],
        )
        rhs = single_jump_rhs(
            spec, x, y, run["samples"], run["seed"] + 1,
            chunk_size=run["chunk_size"], workers=run["workers"],
        )
        try:
            closed = rv_closed_form(spec, x, y)
        except ConfigurationError:
            closed = None
        if closed is not None:
            ratio, ratio_ci = _ratio_with_ci(mc.value, mc.ci_halfwidth, closed, 0.0)
        else:
            ratio, ratio_ci = _ratio_with_ci(mc.value, mc.ci_halfwidth, rhs.value, rhs.ci_halfwidth)
        rows.append(
            {
                "x": x,
                "y": y,
                "mc": mc.value,
                "mc_ci": mc.ci_halfwidth,
                "rhs": rhs.value,
                "rhs_ci": rhs.ci_halfwidth,
                "closed_form": closed,
                "ratio": ratio,
                "ratio_ci": ratio_ci,
            }
        )
    columns = ["x", "y", "mc", "mc_ci", "rhs", "rhs_ci", "closed_form", "ratio", "ratio_ci"]
    return rows, columns, {"spec": cfg.sum_spec_to_config(spec)}


def _run_ruin(exp: ExperimentConfig):
    spec = cfg.renewal_spec_from_config(exp.spec)
    ladder = _ladder_levels(exp.ladder)
    options = dict(exp.options)
    step = options.pop("step", None)
    if options:
        raise ConfigurationError(f"options: unknown key '{sorted(options)[0]}'")

    pairs = []
    for level in ladder.get("levels", []):
        pairs.append(
            (float(spec.claim_x.quantile(1.0 - level)), float(spec.claim_y.quantile(1.0 - level)))
        )
    pairs.extend((float(x), float(y)) for x, y in ladder.get("thresholds", []))
    if not pairs:
        raise ConfigurationError("ruin needs a ladder with levels or thresholds")

    run = exp.run
    rows = []
    for x, y in pairs:
        res = ruin_analysis(
            spec, x, y, run["samples"], run["seed"],
            step=None if step is None else float(step),
            chunk_size=run["chunk_size"], workers=run["workers"],
        )
        rows.append(
            {
                "x": x,
                "y": y,
                "psi_max": res.psi_max.value,
                "psi_max_ci": res.psi_max.ci_halfwidth,
                "psi_and": res.psi_and.value,
                "psi_and_ci": res.psi_and.ci_halfwidth,
                "delta": res.delta,
                "ratio_max": res.ratio_max[0],
                "ratio_max_ci": res.ratio_max[1],
                "ratio_and": res.ratio_and[0],
                "ratio_and_ci": res.ratio_and[1],
                "ordering_violations": res.ordering_violations,
            }
        )
    columns = [
        "x", "y", "psi_max", "psi_max_ci", "psi_and", "psi_and_ci",
        "delta", "ratio_max", "ratio_max_ci", "ratio_and", "ratio_and_ci",
        "ordering_violations",
    ]
    extra = {"spec": cfg.renewal_spec_to_config(spec)}
    if step is not None:
        extra["options"] = {"step": float(step)}
    return rows, columns, extra


def _run_tdrm(exp: ExperimentConfig):
    model = cfg.background_model_from_config(exp.spec)
    options = dict(exp.options)
    distortion_block = options.pop("distortion", {"family": "identity"})
    method = options.pop("method", "both")
    if options:
        raise ConfigurationError(f"options: unknown key '{sorted(options)[0]}'")
    if method not in ("exact", "asymptotic", "both"):
        raise ConfigurationError("tdrm method must be exact, asymptotic, or both")
    g = cfg.distortion_from_config(distortion_block)
    ladder = _ladder_levels(exp.ladder, allowed=("p_levels",))
    p_levels = [float(p) for p in ladder.get("p_levels", [])]
    if not p_levels:
        raise ConfigurationError("tdrm needs a ladder with p_levels")

    run = exp.run
    gammas = gamma_functionals(
        model.product, model.weight_vector(), n_samples=run["samples"], seed=run["seed"],
    )
    constants = {
        "alpha": model.alpha,
        "C_alpha": c_alpha(g, model.alpha),
        "gamma_w": gammas.gamma_w,
        "Gamma_alpha": gammas.gamma_root_sum,
    }
    rows = []
    for p in p_levels:
        exact_v = asy_v = None
        if method in ("exact", "both"):
            exact_v = tdrm_exact(model, g, p, n_samples=run["samples"], seed=run["seed"])
        if method in ("asymptotic", "both"):
            asy_v = tdrm_asymptotic(model, g, p, gammas=gammas)
        ratio = exact_v / asy_v if (exact_v is not None and asy_v) else None
        rows.append({"p": p, "tdrm_exact": exact_v, "tdrm_asy": asy_v, "ratio": ratio})
    columns = ["p", "tdrm_exact", "tdrm_asy", "ratio"]
    return rows, columns, {"spec": cfg.background_model_to_config(model), "constants": constants,
                           "options": {"distortion": cfg.distortion_to_config(g), "method": method}}


def _run_gtai_check(exp: ExperimentConfig):
    spec = cfg.sum_spec_from_config(exp.spec)
    ladder = _ladder_levels(exp.ladder)
    levels = [float(l) for l in ladder.get("levels", [])]
    options = dict(exp.options)
    tolerance = float(options.pop("tolerance", 0.02))
    weighted = bool(options.pop("weighted", False))
    min_hits = int(options.pop("min_hits", 30))
    min_expected_hits = int(options.pop("min_expected_hits", 200))
    if options:
        raise ConfigurationError(f"options: unknown key '{sorted(options)[0]}'")

    run = exp.run
    report = gtai_diagnostic(
        spec, levels, run["samples"], run["seed"],
        tolerance=tolerance, weighted=weighted, min_hits=min_hits,
        min_expected_hits=min_expected_hits,
        chunk_size=run["chunk_size"], workers=run["workers"],
    )
    rows = []
    for cell in report.cells:
        for level, thr_extra, thr1, thr2, est, ci, hits, conclusive in cell.rows:
            rows.append(
                {
                    "side": cell.side,
                    "extra": cell.extra,
                    "cond_primary": cell.cond_primary,
                    "cond_other": cell.cond_other,
                    "level": level,
                    "threshold_extra": thr_extra,
                    "threshold_primary": thr1,
                    "threshold_other": thr2,
                    "estimate": est,
                    "ci": ci,
                    "cond_hits": hits,
                    "conclusive": conclusive,
                }
            )
    columns = [
        "side", "extra", "cond_primary", "cond_other", "level",
        "threshold_extra", "threshold_primary", "threshold_other",
        "estimate", "ci", "cond_hits", "conclusive",
    ]
    summary = {
        "spec": cfg.sum_spec_to_config(spec),
        "gtai": {
            "passed": report.passed,
            "max_conditional": report.max_conditional,
            "tolerance": report.tolerance,
            "n_samples": report.n_samples,
        },
        "options": {
            "tolerance": tolerance, "weighted": weighted,
            "min_hits": min_hits, "min_expected_hits": min_expected_hits,
        },
    }
    return rows, columns, summary


def _run_classify(exp: ExperimentConfig):
    spec = dict(exp.spec)
    law_block = spec.pop("law", None)
    grid = spec.pop("grid", None)
    t_grid = spec.pop("t_grid", None)
    shift = float(spec.pop("a", 1.0))
    if spec:
        raise ConfigurationError(f"classify spec: unknown key '{sorted(spec)[0]}'")
    if law_block is None or grid is None or t_grid is None:
        raise ConfigurationError("classify needs law, grid and t_grid")
    law = cfg.law_from_config(law_block)
    report = classify(law, grid, t_grid, a=shift)
    rows = [
        {"t": t, "x": x, "dominated_ratio": r}
        for t, x, r in report.dominated_ratio_at
    ]
    columns = ["t", "x", "dominated_ratio"]
    summary = {
        "spec": {"law": cfg.law_to_config(law), "grid": list(map(float, grid)),
                 "t_grid": list(map(float, t_grid)), "a": shift},
        "classify": {
            "upper_matuszewska": report.upper_matuszewska,
            "lower_matuszewska": report.lower_matuszewska,
            "insensitivity_ok": report.insensitivity_ok,
            "long_tail_ratio_at": [list(row) for row in report.long_tail_ratio_at],
        },
    }
    return rows, columns, summary


_RUNNERS = {
    "joint_tail": _run_joint_tail,
    "ruin": _run_ruin,
    "tdrm": _run_tdrm,
    "gtai_check": _run_gtai_check,
    "classify": _run_classify,
}


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: Path, rows, columns) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter=",", lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format_cell(row[c]) for c in columns])


def run_experiment(exp: ExperimentConfig) -> dict:
    """Execute one experiment and write its artifacts.

    Returns the JSON summary dict (also written to <path>.json). The
    result table goes to <path>.csv or into the summary depending on
    the configured format.
    """
    start = time.monotonic()
    runner = _RUNNERS[exp.workflow]
    rows, columns, extra_summary = runner(exp)

    resolved = exp.resolved()
    resolved.update({k: v for k, v in extra_summary.items() if k in ("spec", "options")})
    summary = {
        "config_echo": resolved,
        "results": rows,
        "runtime_seconds": time.monotonic() - start,
        "seed": exp.run["seed"],
    }
    for key, value in extra_summary.items():
        if key not in ("spec", "options"):
            summary[key] = value

    base = Path(exp.output["path"])
    if base.parent and not base.parent.exists():
        base.parent.mkdir(parents=True, exist_ok=True)
    if exp.output["format"] == "csv":
        write_csv(base.with_suffix(".csv"), rows, columns)
    with open(base.with_suffix(".json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
    return summary


def bundled_examples():
    """(id, description, resource name) for every packaged example config."""
    catalog = []
    root = resources.files("tailrisk").joinpath("examples")
    for entry in sorted(root.iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".json"):
            block = json.loads(entry.read_text())
            catalog.append(
                (block.get("id", entry.name[:-5]), block.get("description", ""), entry.name)
            )
    return catalog


def example_config_path(name: str) -> Path:
    return Path(str(resources.files("tailrisk").joinpath("examples", name)))


def list_examples(stream=None) -> int:
    stream = stream or sys.stdout
    for example_id, description, name in bundled_examples():
        path = example_config_path(name)
        stream.write(f"{example_id}: {description}\n    config: {path}\n")
    return 0


_SUBCOMMAND_WORKFLOW = {
    "joint-tail": "joint_tail",
    "ruin": "ruin",
    "tdrm": "tdrm",
    "gtai-check": "gtai_check",
    "classify": "classify",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tailrisk",
        description="Heavy-tailed joint-tail asymptotics: experiments with Monte Carlo oracles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _SUBCOMMAND_WORKFLOW:
        p = sub.add_parser(name, help=f"run a {name} experiment from a config file")
        p.add_argument("config", help="path to the experiment JSON config")
        p.add_argument("--seed", type=int, help="override the run seed")
        p.add_argument("--samples", type=int, help="override the sample/path count")
        p.add_argument("--workers", type=int, help="override the worker count")
        p.add_argument("--chunk-size", type=int, help="override the reproducibility chunk size")
        p.add_argument("--out", help="override the output base path")
        p.add_argument("--format", choices=("csv", "json"), help="override the output format")
    sub.add_parser("examples", help="list the bundled example configs")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "examples":
        return list_examples()

    try:
        raw = json.loads(Path(args.config).read_text())
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 4
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
        return 2

    try:
        exp = parse_experiment(raw)
        expected = _SUBCOMMAND_WORKFLOW[args.command]
        if exp.workflow != expected:
            raise ConfigurationError(
                f"config workflow '{exp.workflow}' does not match subcommand '{args.command}'"
            )
        for field, attr in (
            ("seed", "seed"), ("samples", "samples"),
            ("workers", "workers"), ("chunk_size", "chunk_size"),
        ):
            value = getattr(args, attr, None)
            if value is not None:
                exp.run[field] = int(value)
        if args.out is not None:
            exp.output["path"] = args.out
        if args.format is not None:
            exp.output["format"] = args.format
        run_experiment(exp)
        return 0
    except (ConfigurationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EstimationError as exc:
        print(f"error: estimation failed: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
