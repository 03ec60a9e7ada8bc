"""File formats: numeric CSV blocks, JSON manifests and decomposition archives."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .linked import BlockGrid, Centering, PenaltyScheme, ScaleInfo
from .solver import Decomposition

SCHEMA_VERSION = "1.0"
NA_TOKEN = "NA"


class ParseError(ValueError):
    """Malformed input file."""


class DimensionError(ValueError):
    """Blocks whose shapes disagree with the declared layout."""


class SchemaVersionError(ValueError):
    pass


def _check_version(doc: dict, what: str) -> None:
    version = str(doc.get("schema_version", ""))
    major = version.split(".")[0]
    if major != SCHEMA_VERSION.split(".")[0]:
        raise SchemaVersionError(
            f"{what} has schema version {version or 'missing'}; this reader supports {SCHEMA_VERSION.split('.')[0]}.x"
        )


# --- CSV --------------------------------------------------------------------

def _is_number(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True


def read_matrix(path, header: bool | None = None) -> tuple[np.ndarray, np.ndarray | None]:
    """Read a numeric CSV; returns the values and an observation mask (None if complete).

    ``NA`` (or an empty field) marks a missing entry.  With ``header=None``
    a first row containing any non-numeric, non-NA token is treated as a
    header.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(t.strip() for t in r)]
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise ParseError(f"{path} is empty")
    first = [t.strip() for t in rows[0]]
    if header is None:
        header = any(t not in (NA_TOKEN, "") and not _is_number(t) for t in first)
    if header:
        rows = rows[1:]
    if not rows:
        raise ParseError(f"{path} has no data rows")
    width = len(rows[0])
    values = np.empty((len(rows), width))
    observed = np.ones((len(rows), width), dtype=bool)
    for r, row in enumerate(rows):
        if len(row) != width:
            raise ParseError(f"{path}: row {r + 1 + int(header)} has {len(row)} fields, expected {width}")
        for c, tok in enumerate(row):
            tok = tok.strip()
            if tok in (NA_TOKEN, ""):
                observed[r, c] = False
                values[r, c] = np.nan
                continue
            try:
                values[r, c] = float(tok)
            except ValueError:
                raise ParseError(f"{path}: non-numeric token {tok!r} at row {r + 1}, column {c + 1}") from None
            if not np.isfinite(values[r, c]):
                raise ParseError(f"{path}: non-finite value at row {r + 1}, column {c + 1}")
    return values, (None if observed.all() else observed)


def write_matrix(path, a: np.ndarray, mask: np.ndarray | None = None) -> None:
    """Write with 17 significant digits so values round-trip exactly."""
    a = np.asarray(a, dtype=float)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for r in range(a.shape[0]):
            w.writerow(
                NA_TOKEN if (mask is not None and not mask[r, c]) else format(a[r, c], ".17g")
                for c in range(a.shape[1])
            )


# --- manifest ---------------------------------------------------------------

@dataclass
class Manifest:
    """Grid layout and fit settings.

    JSON keys: ``schema_version``, ``p``, ``q``, ``blocks`` (row-major list
    of CSV paths relative to the manifest), ``row_dims``, ``col_dims``,
    optional ``header``, ``centering`` (``overall``,
    ``row-wise-across-grid`` or ``none``), ``penalties`` ((p+1) x (q+1)
    nested list), ``solver`` (``name``, ``rel_tol``, ``max_iter``,
    ``accelerate``) and ``seed``.
    """

    p: int
    q: int
    blocks: list[str]
    row_dims: list[int]
    col_dims: list[int]
    base_dir: Path = Path(".")
    header: bool | None = None
    centering: str = Centering.OVERALL.value
    penalties: list[list[float]] | None = None
    solver: dict = field(default_factory=dict)
    seed: int = 0

    @classmethod
    def load(cls, path) -> "Manifest":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f"cannot parse manifest {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ParseError("manifest must be a JSON object")
        _check_version(doc, "manifest")
        try:
            m = cls(
                p=int(doc["p"]),
                q=int(doc["q"]),
                blocks=list(doc["blocks"]),
                row_dims=[int(v) for v in doc["row_dims"]],
                col_dims=[int(v) for v in doc["col_dims"]],
                base_dir=path.parent,
                header=doc.get("header"),
                centering=doc.get("centering", Centering.OVERALL.value),
                penalties=doc.get("penalties"),
                solver=dict(doc.get("solver", {})),
                seed=int(doc.get("seed", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"manifest field error: {exc}") from exc
        try:
            Centering(m.centering)
        except ValueError:
            raise ParseError(f"unknown centering mode {m.centering!r}") from None
        if len(m.blocks) != m.p * m.q:
            raise DimensionError(f"manifest lists {len(m.blocks)} blocks for a {m.p}x{m.q} grid")
        if len(m.row_dims) != m.p or len(m.col_dims) != m.q:
            raise DimensionError("row_dims/col_dims lengths do not match p and q")
        return m

    def to_dict(self) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "p": self.p,
            "q": self.q,
            "blocks": self.blocks,
            "row_dims": self.row_dims,
            "col_dims": self.col_dims,
            "centering": self.centering,
            "solver": self.solver,
            "seed": self.seed,
        }
        if self.header is not None:
            out["header"] = self.header
        if self.penalties is not None:
            out["penalties"] = self.penalties
        return out

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def penalty_scheme(self) -> PenaltyScheme | None:
        if self.penalties is None:
            return None
        lam = np.asarray(self.penalties, dtype=float)
        if lam.shape != (self.p + 1, self.q + 1):
            raise DimensionError(f"penalties have shape {lam.shape}, expected {(self.p + 1, self.q + 1)}")
        return PenaltyScheme(lam)

    def load_grid(self) -> BlockGrid:
        blocks, masks = [], []
        any_missing = False
        for i in range(self.p):
            brow, mrow = [], []
            for j in range(self.q):
                rel = self.blocks[i * self.q + j]
                vals, mask = read_matrix(self.base_dir / rel, self.header)
                expected = (self.row_dims[i], self.col_dims[j])
                if vals.shape != expected:
                    raise DimensionError(f"block ({i + 1},{j + 1}) in {rel} is {vals.shape}, declared {expected}")
                any_missing |= mask is not None
                brow.append(vals)
                mrow.append(np.ones(vals.shape, dtype=bool) if mask is None else mask)
            blocks.append(brow)
            masks.append(mrow)
        grid = BlockGrid.from_blocks(
            [[np.nan_to_num(b) for b in row] for row in blocks],
            masks if any_missing else None,
        )
        return grid


def select_top_variable(grid: BlockGrid, n: int) -> tuple[BlockGrid, list[np.ndarray]]:
    """Keep the ``n`` rows of each row block with the largest variance across the grid row.

    Variances ignore missing entries.  Returns the reduced grid and the kept
    row indices (sorted, within each row block).
    """
    if n < 1:
        raise ValueError("n must be positive")
    keep, data_rows, mask_rows = [], [], []
    obs = grid.observed_mask()
    for i in range(grid.p):
        rows = grid.data[grid.rows(i)]
        ob = obs[grid.rows(i)]
        with np.errstate(invalid="ignore"):
            var = np.array([np.var(r[o], ddof=1) if o.sum() > 1 else 0.0 for r, o in zip(rows, ob)])
        var = np.nan_to_num(var)
        k = min(n, rows.shape[0])
        # stable: ties keep the earlier row
        idx = np.sort(np.argsort(-var, kind="stable")[:k])
        keep.append(idx)
        data_rows.append(rows[idx])
        mask_rows.append(ob[idx])
    data = np.vstack(data_rows)
    mask = np.vstack(mask_rows)
    return BlockGrid(np.where(mask, data, 0.0), tuple(len(k) for k in keep), grid.col_dims, mask), keep


# --- archive ----------------------------------------------------------------

def _component_files(p: int, q: int) -> dict[str, str]:
    names = {"G_00": "G00.csv"}
    names.update({f"R_{i + 1}0": f"R{i + 1}0.csv" for i in range(p)})
    names.update({f"C_0{j + 1}": f"C0{j + 1}.csv" for j in range(q)})
    names.update({f"I_{i + 1}{j + 1}": f"I{i + 1}{j + 1}.csv" for i in range(p) for j in range(q)})
    return names


def save_archive(
    out_dir,
    theta: Decomposition,
    scale_info: ScaleInfo | None = None,
    scheme: PenaltyScheme | None = None,
    reports: dict | None = None,
    extra: dict | None = None,
) -> Path:
    """Write the components (already on the original scale) plus ``metadata.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = _component_files(theta.p, theta.q)
    for name, mat in theta.named_components().items():
        write_matrix(out / files[name], mat)
    meta = {
        "schema_version": SCHEMA_VERSION,
        "row_dims": list(theta.row_dims),
        "col_dims": list(theta.col_dims),
        "components": files,
        "scale": scale_info.to_dict() if scale_info is not None else None,
        "penalties": scheme.lam.tolist() if scheme is not None else None,
    }
    if reports:
        meta.update(reports)
    if extra:
        meta.update(extra)
    (out / "metadata.json").write_text(json.dumps(_jsonable(meta), indent=2, sort_keys=True) + "\n")
    return out


def load_archive(path) -> tuple[Decomposition, dict]:
    path = Path(path)
    try:
        meta = json.loads((path / "metadata.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read archive metadata in {path}: {exc}") from exc
    _check_version(meta, "archive")
    row_dims, col_dims = tuple(meta["row_dims"]), tuple(meta["col_dims"])
    p, q = len(row_dims), len(col_dims)
    files = meta.get("components") or _component_files(p, q)
    mats = {name: read_matrix(path / fname, header=False)[0] for name, fname in files.items()}
    theta = Decomposition(
        mats["G_00"],
        [mats[f"R_{i + 1}0"] for i in range(p)],
        [mats[f"C_0{j + 1}"] for j in range(q)],
        [[mats[f"I_{i + 1}{j + 1}"] for j in range(q)] for i in range(p)],
        row_dims,
        col_dims,
    )
    return theta, meta


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj
