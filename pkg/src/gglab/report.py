"""Experiment configs, report files and convergence tables.

Config file (YAML)::

    name: demo
    master_seed: 7
    experiments:
      - model: {model: sk, base_disorder: averaged}   # plus periodic, p, J, dims
        N_list: [6, 10]
        params: [[1.0, 0.5, 0.3]]                      # (beta, gamma, h) triples
        checks:
          - gg_residual_f1                             # bare name: default options
          - {name: gg_residual, n: 2, functional: r12, disorder_samples: 256}

A config without ``experiments`` is treated as a single experiment block.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import inspect
import io
import json
import math
import platform
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml

from gglab import __version__, _accel
from gglab.checks import CHECKS, OPTION_ALIASES, CheckResult
from gglab.gibbs import N_MAX_EXACT
from gglab.model import MODELS, ModelSpec

CSV_COLUMNS = ["check", "model", "N", "beta", "gamma", "h", "n", "functional", "estimate", "std_error", "contract",
               "pass"]
CONVERGENCE_COLUMNS = ["N", "quantity", "estimate", "std_error"]
_MODEL_KEYS = {"model", "periodic", "p", "J", "dims", "base_disorder"}


class ConfigError(ValueError):
    pass


@dataclass
class Cell:
    index: int
    spec: ModelSpec
    check: str
    options: dict


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a mapping")
    return cfg


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(_canonical(cfg).encode()).hexdigest()[:16]


def family_hash(cfg: dict) -> str:
    """Hash of the config with system sizes removed; reports sharing it may be merged."""
    stripped = copy.deepcopy(cfg)
    for block in stripped.get("experiments", [stripped]):
        block.pop("N_list", None)
        if isinstance(block.get("model"), dict):
            block["model"].pop("dims", None)
    stripped.pop("output", None)
    return config_hash(stripped)


def _params(raw) -> list[tuple[float, float, float]]:
    out = []
    for p in raw:
        if isinstance(p, dict):
            out.append((float(p.get("beta", 0.0)), float(p.get("gamma", 0.0)), float(p.get("h", 0.0))))
        elif isinstance(p, (list, tuple)) and len(p) == 3:
            out.append(tuple(float(x) for x in p))
        else:
            raise ConfigError(f"parameter entry {p!r} must be [beta, gamma, h] or a mapping")
    return out


def _check_options(name: str, options: dict) -> dict:
    fn = CHECKS[name]
    opts = {OPTION_ALIASES.get(k, k): v for k, v in options.items()}
    allowed = set(inspect.signature(fn).parameters) - {"spec", "seed"}
    unknown = set(opts) - allowed
    if unknown:
        raise ConfigError(f"check {name!r} has no option(s) {sorted(unknown)}; allowed: {sorted(allowed)}")
    return opts


def expand_cells(cfg: dict) -> list[Cell]:
    """Config -> ordered cells (block, N, params, check). Raises ConfigError on any defect."""
    if "master_seed" not in cfg:
        raise ConfigError("config must set master_seed explicitly")
    blocks = cfg.get("experiments", [cfg])
    if not isinstance(blocks, list) or not blocks:
        raise ConfigError("experiments must be a non-empty list")
    cells = []
    for block in blocks:
        model = block.get("model")
        if isinstance(model, str):
            model = {"model": model}
        if not isinstance(model, dict) or model.get("model") not in MODELS:
            raise ConfigError(f"model block must name one of {MODELS}")
        extra = set(model) - _MODEL_KEYS
        if extra:
            raise ConfigError(f"unknown model keys {sorted(extra)}")
        N_list = block.get("N_list")
        if not N_list:
            raise ConfigError("each experiment needs a non-empty N_list")
        params = _params(block.get("params", [[1.0, 0.5, 0.0]]))
        checks = block.get("checks")
        if not checks:
            raise ConfigError("each experiment needs a checks list")
        parsed = []
        for c in checks:
            if isinstance(c, str):
                name, opts = c, {}
            elif isinstance(c, dict) and "name" in c:
                opts = dict(c)
                name = opts.pop("name")
            else:
                raise ConfigError(f"malformed check entry {c!r}")
            if name not in CHECKS:
                raise ConfigError(f"unknown check {name!r}; run 'gglab list-checks'")
            parsed.append((name, _check_options(name, opts)))
        for N in N_list:
            for beta, gamma, h in params:
                try:
                    spec = ModelSpec(N=int(N), beta=beta, gamma=gamma, h=h,
                                     **{k: v for k, v in model.items() if k != "dims"})
                except (TypeError, ValueError) as exc:
                    raise ConfigError(str(exc)) from exc
                for name, opts in parsed:
                    cells.append(Cell(len(cells), spec, name, opts))
    return cells


def run_cell(cell: Cell, master_seed: int) -> dict:
    res: CheckResult = CHECKS[cell.check](cell.spec, master_seed, **cell.options)
    d = cell.spec.describe()
    return dict(
        check=cell.check, model=d["model"], N=d["N"], beta=d["beta"], gamma=d["gamma"], h=d["h"],
        n="" if res.n is None else res.n, functional=res.functional, estimate=res.estimate,
        std_error=res.std_error, contract=res.contract,
        **{"pass": "NA" if res.passed is None else ("pass" if res.passed else "fail")},
    )


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        # shortest repr that round-trips exactly
        return "nan" if math.isnan(v) else repr(float(v))
    return str(v)


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def read_report_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def metadata(cfg: dict, master_seed: int) -> dict:
    return dict(
        config_hash=config_hash(cfg), family_hash=family_hash(cfg), name=cfg.get("name", ""),
        master_seed=master_seed, gglab_version=__version__, numpy_version=np.__version__,
        python_version=platform.python_version(), backend=_accel.backend(), n_max_exact=N_MAX_EXACT,
        timestamp=datetime.now(timezone.utc).isoformat(),
    )


def write_reports(out_dir, cfg: dict, master_seed: int, rows: list[dict]) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "report.csv"
    csv_path.write_text(rows_to_csv(rows))
    json_path = out / "report.json"
    json_rows = [{k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in r.items()} for r in rows]
    json_path.write_text(json.dumps(dict(metadata=metadata(cfg, master_seed), config=cfg, rows=json_rows),
                                    indent=2, default=str) + "\n")
    return csv_path, json_path


def quantity_label(row: dict) -> str:
    name = row["check"]
    if row.get("functional"):
        name += f"[{row['functional']},n={row['n']}]"
    return f"{name}|{row['model']}|beta={row['beta']}|gamma={row['gamma']}|h={row['h']}"


def convergence_table(report_dirs) -> list[dict]:
    """Merge reports from runs of the same config family into long format (N, quantity, estimate, std_error)."""
    families = set()
    rows = []
    for d in report_dirs:
        d = Path(d)
        meta = json.loads((d / "report.json").read_text())["metadata"]
        families.add(meta["family_hash"])
        rows.extend(read_report_csv(d / "report.csv"))
    if len(families) > 1:
        raise ValueError("reports come from different experiment configs; refusing to merge")
    seen = {}
    for r in rows:
        key = (quantity_label(r), int(r["N"]))
        seen[key] = dict(N=int(r["N"]), quantity=key[0], estimate=float(r["estimate"]),
                         std_error=float(r["std_error"]))
    return [seen[k] for k in sorted(seen, key=lambda k: (k[0], k[1]))]


def convergence_to_csv(table: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CONVERGENCE_COLUMNS)
    for r in table:
        w.writerow([_fmt(r[c]) for c in CONVERGENCE_COLUMNS])
    return buf.getvalue()


def read_convergence_csv(text: str) -> list[dict]:
    return [dict(N=int(r["N"]), quantity=r["quantity"], estimate=float(r["estimate"]),
                 std_error=float(r["std_error"])) for r in csv.DictReader(io.StringIO(text))]
