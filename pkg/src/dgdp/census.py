"""Allocation files, per-level and overall report generation.

Allocation file grammar (strict; unknown or duplicate keys are rejected)::

    # comment
    schema_version = 1
    rho = 3.65
    queries_per_level = 10
    lattice_scale = 1000          # optional, default 1000
    delta_per_level = 1e-11
    delta_overall = 1e-10

    [levels]
    # name        fraction   n_queries
    us            0.020      10
    state         0.274      10

Each level consumes fraction * rho of the budget per ``queries_per_level``
queries, so its noise is sigma^2 = n_queries / (2 * fraction * rho).  Levels
sharing a fraction are merged into one i.i.d. group for the heterogeneous
accountant (their noise laws coincide); the consistency check
sum_i fraction_i * n_queries_i = queries_per_level is enforced.

Report CSVs emit every number in scientific notation with 30 significant
digits so regenerated files are byte-identical at fixed precision.
"""

from __future__ import annotations

import csv
import importlib.resources
from dataclasses import dataclass

from mpmath import mp, mpf

from . import iid, zcdp
from .inid import DEFAULT_LATTICE_SCALE, AllocationConfig

SCHEMA_VERSION = 1
CSV_DIGITS = 30

_SCALAR_KEYS = {
    "schema_version": True,  # required
    "rho": True,
    "queries_per_level": True,
    "delta_per_level": True,
    "delta_overall": True,
    "lattice_scale": False,
}


class AllocationError(ValueError):
    """Malformed allocation file; carries the offending line number."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


def sci(x, digits: int = CSV_DIGITS) -> str:
    """Scientific notation with a fixed number of significant digits."""
    x = mpf(x)
    if x == 0:
        return "0." + "0" * (digits - 1) + "e+0"
    sign = "-" if x < 0 else ""
    ax = abs(x)
    expo = int(mp.floor(mp.log10(ax)))
    mant = ax / mpf(10) ** expo
    mant_str = mp.nstr(mant, digits, strip_zeros=False)
    if "." not in mant_str:
        mant_str += "."
    head, tail = mant_str.split(".")
    if len(head) > 1:  # nstr rounded the mantissa up to 10.0...
        expo += len(head) - 1
        head, tail = head[0], head[1:] + tail
    tail = (tail + "0" * digits)[: digits - 1]
    return f"{sign}{head}.{tail}e{'+' if expo >= 0 else '-'}{abs(expo)}"


@dataclass(frozen=True)
class Level:
    name: str
    fraction: mpf
    n_queries: int
    sigma2: mpf


@dataclass(frozen=True)
class LoadedAllocation:
    path: str
    config: AllocationConfig
    levels: tuple
    delta_per_level: mpf
    delta_overall: mpf
    rho: mpf


def _parse_number(token, path, line_no, label):
    try:
        return mpf(token)
    except Exception:
        raise AllocationError(path, line_no, f"cannot parse {label} {token!r}") from None


def load(path) -> LoadedAllocation:
    """Parse and validate an allocation file."""
    path = str(path)
    with open(path, "r", encoding="utf-8") as fh:
        raw_lines = fh.readlines()

    scalars: dict = {}
    level_rows = []
    in_levels = False
    for line_no, raw in enumerate(raw_lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line == "[levels]":
            if in_levels:
                raise AllocationError(path, line_no, "duplicate [levels] section")
            in_levels = True
            continue
        if line.startswith("[") and line.endswith("]"):
            raise AllocationError(path, line_no, f"unknown section {line}")
        if not in_levels:
            if "=" not in line:
                raise AllocationError(path, line_no, "expected 'key = value'")
            key, _, value = (part.strip() for part in line.partition("="))
            if key not in _SCALAR_KEYS:
                raise AllocationError(path, line_no, f"unknown key {key!r}")
            if key in scalars:
                raise AllocationError(path, line_no, f"duplicate key {key!r}")
            scalars[key] = (value, line_no)
        else:
            fields = line.split()
            if len(fields) != 3:
                raise AllocationError(
                    path, line_no, "level rows need 'name fraction n_queries'"
                )
            level_rows.append((fields, line_no))

    for key, required in _SCALAR_KEYS.items():
        if required and key not in scalars:
            raise AllocationError(path, 0, f"missing required key {key!r}")
    if not level_rows:
        raise AllocationError(path, 0, "no [levels] rows")

    version_tok, version_line = scalars["schema_version"]
    if version_tok != str(SCHEMA_VERSION):
        raise AllocationError(
            path, version_line, f"unsupported schema_version {version_tok!r}"
        )

    def number(key):
        token, line_no = scalars[key]
        return _parse_number(token, path, line_no, key)

    rho = number("rho")
    queries_per_level = number("queries_per_level")
    delta_per_level = number("delta_per_level")
    delta_overall = number("delta_overall")
    if "lattice_scale" in scalars:
        tok, line_no = scalars["lattice_scale"]
        try:
            lattice_scale = int(tok)
        except ValueError:
            raise AllocationError(path, line_no, f"bad lattice_scale {tok!r}") from None
    else:
        lattice_scale = DEFAULT_LATTICE_SCALE

    levels = []
    seen = set()
    for (fields, line_no) in level_rows:
        name, frac_tok, n_tok = fields
        if name in seen:
            raise AllocationError(path, line_no, f"duplicate level {name!r}")
        seen.add(name)
        fraction = _parse_number(frac_tok, path, line_no, "fraction")
        if not 0 < fraction < 1:
            raise AllocationError(path, line_no, f"fraction must lie in (0, 1), got {frac_tok}")
        try:
            n_queries = int(n_tok)
        except ValueError:
            raise AllocationError(path, line_no, f"bad query count {n_tok!r}") from None
        if n_queries < 1:
            raise AllocationError(path, line_no, "n_queries must be >= 1")
        sigma2 = queries_per_level / (2 * fraction * rho)
        levels.append(Level(name, fraction, n_queries, sigma2))

    # merge levels with identical fractions: identical noise laws form one
    # i.i.d. group, which tightens the grouped residual bookkeeping
    grouped: dict = {}
    order = []
    for lvl in levels:
        key = mp.nstr(lvl.fraction, mp.dps)
        if key not in grouped:
            grouped[key] = [lvl.fraction, 0, []]
            order.append(key)
        grouped[key][1] += lvl.n_queries
        grouped[key][2].append(lvl.name)

    try:
        config = AllocationConfig.from_fractions(
            rho,
            [(grouped[k][0], grouped[k][1]) for k in order],
            lattice_scale=lattice_scale,
            queries_per_level=queries_per_level,
            names=[grouped[k][2] for k in order],
        )
    except ValueError as exc:
        raise AllocationError(path, 0, str(exc)) from None

    return LoadedAllocation(
        path, config, tuple(levels), delta_per_level, delta_overall, rho
    )


def preset_path(name: str):
    """Filesystem path of a bundled allocation preset."""
    resource = importlib.resources.files("dgdp") / "presets" / f"{name}.alloc"
    if not resource.is_file():
        raise ValueError(f"unknown preset {name!r}")
    return resource


def load_preset(name: str) -> LoadedAllocation:
    return load(preset_path(name))


LEVEL_REPORT_COLUMNS = (
    "level",
    "sigma2_bureau",
    "eps_zcdp",
    "eps_fdp",
    "reduction_pct",
    "sigma2_ours",
    "var_reduction_pct",
)


@dataclass(frozen=True)
class LevelRow:
    level: str
    sigma2_bureau: mpf
    eps_zcdp: mpf
    eps_fdp: mpf
    reduction_pct: mpf
    sigma2_ours: mpf
    var_reduction_pct: mpf

    def astuple(self):
        return (
            self.level,
            self.sigma2_bureau,
            self.eps_zcdp,
            self.eps_fdp,
            self.reduction_pct,
            self.sigma2_ours,
            self.var_reduction_pct,
        )


def level_report(loaded: LoadedAllocation, delta=None) -> list:
    """Per-level comparison rows: zCDP accounting vs the tight accountant.

    eps_fdp solves the n-fold profile at the level's noise; sigma2_ours is
    the smallest noise meeting the zCDP (eps, delta) point.
    """
    delta = loaded.delta_per_level if delta is None else mpf(delta)
    rows = []
    for lvl in loaded.levels:
        rho_level = zcdp.compose(
            [zcdp.rho_of_dgm(lvl.sigma2)] * lvl.n_queries
        )
        eps_z = zcdp.eps_from_rho(rho_level, delta)
        spec = iid.IidCompositionSpec(lvl.n_queries, lvl.sigma2)
        eps_f = iid.eps_from_delta(spec, delta).eps
        sigma2_ours = iid.sigma_from_budget(lvl.n_queries, eps_z, delta)
        rows.append(
            LevelRow(
                lvl.name,
                lvl.sigma2,
                eps_z,
                eps_f,
                100 * (1 - eps_f / eps_z),
                sigma2_ours,
                100 * (1 - sigma2_ours / lvl.sigma2),
            )
        )
    return rows


def write_level_report_csv(rows, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LEVEL_REPORT_COLUMNS)
        for row in rows:
            name, *numbers = row.astuple()
            writer.writerow([name] + [sci(x) for x in numbers])


CURVE_COLUMNS = ("eps", "delta_fdp", "delta_zcdp")


def curve_rows(spec: iid.IidCompositionSpec, eps_grid) -> list:
    """(eps, delta_fdp, delta_zcdp) rows for one composition spec.

    The zCDP column converts the same total budget n/(2 sigma^2) through the
    closed-form (eps, delta) conversion.
    """
    eps_grid = [mpf(e) for e in eps_grid]
    if not eps_grid:
        raise ValueError("empty eps grid")
    rho = zcdp.compose([zcdp.rho_of_dgm(spec.sigma2, spec.mu)] * spec.n)
    rows = []
    for eps in eps_grid:
        delta_f, _ = iid.delta_eps(spec, eps)
        rows.append((eps, delta_f, zcdp.delta_from_rho(rho, eps)))
    return rows


def write_curve_csv(rows, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_COLUMNS)
        for row in rows:
            writer.writerow([sci(x) for x in row])


def write_ledger_csv(ledger, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("term", "value"))
        for name, value in ledger.rows():
            writer.writerow((name, sci(value)))
        writer.writerow(("total", sci(ledger.total)))
