"""Game files, cloud files and result export.

Game file format (``#`` starts a comment)::

    [game]
    name = battle-of-sexes
    N = 2
    d = 1
    T = 1
    [actions]
    1 = 0, 1             # player 1 grid; vector actions as (0, 1), (1, 0)
    2 = 0, 1
    [dynamics]
    b1 = 0               # d drift expressions, b1..bd
    [running]
    f1 = a1 * a2         # N expressions f1..fN ...
    [table]
    0 0 = 2, 1           # ... or a payoff table: actions -> f vector
    [terminal]
    g1 = 0               # N expressions g1..gN
"""

from __future__ import annotations

import csv
import io as _io
import json
import re
from importlib import resources
from pathlib import Path

import numpy as np

from . import dsl
from .errors import ExportError, SpecError
from .game import GameSpec
from .static import SetCloud

REQUIRED_SECTIONS = ("game", "actions", "dynamics", "terminal")
BUILTIN_GAMES = {
    "e1": "e1_zero_sum.game",
    "e2": "e2_battle_of_sexes.game",
    "e3": "e3_matching_pennies.game",
    "e4": "e4_control.game",
}


def _split_sections(text, source):
    sections = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = re.fullmatch(r"\[(\w+)\]", line)
        if m:
            current = m.group(1).lower()
            if current in sections:
                raise SpecError(f"{source}:{lineno}: duplicate section [{current}]")
            sections[current] = []
            continue
        if current is None:
            raise SpecError(f"{source}:{lineno}: entry outside of any section")
        if "=" not in line:
            raise SpecError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        sections[current].append((key, value, lineno))
    return sections


def _parse_numbers(text, source, lineno):
    """'0, 1' -> [0.0, 1.0]; '(0, 1), (1, 0)' -> [(0.0, 1.0), (1.0, 0.0)]."""
    text = text.strip()
    try:
        if "(" in text:
            groups = re.findall(r"\(([^)]*)\)", text)
            return [tuple(float(v) for v in g.split(",")) for g in groups]
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise SpecError(f"{source}:{lineno}: cannot read numbers from {text!r}") from None


def _parse_table_key(text, source, lineno):
    """'0 1' -> [0.0, 1.0]; '(0, 1) 0' -> [(0.0, 1.0), 0.0]."""
    acts = []
    for group, bare in re.findall(r"\(([^)]*)\)|([^\s,()]+)", text):
        try:
            if bare:
                acts.append(float(bare))
            else:
                acts.append(tuple(float(v) for v in group.split(",")))
        except ValueError:
            raise SpecError(f"{source}:{lineno}: cannot read table key {text!r}") from None
    return acts


def _indexed_exprs(entries, prefix, count, section, source):
    found = {}
    for key, value, lineno in entries:
        m = re.fullmatch(rf"{prefix}(\d+)", key)
        if not m:
            raise SpecError(f"{source}:{lineno}: unexpected key {key!r} in [{section}]")
        try:
            found[int(m.group(1))] = dsl.parse_expr(value)
        except dsl.DSLError as err:
            raise SpecError(f"{source}:{lineno}: {err}") from None
    if len(found) != count or sorted(found) != list(range(1, count + 1)):
        raise SpecError(
            f"{source}: dimension mismatch in [{section}]: "
            f"expected {prefix}1..{prefix}{count}, got {len(found)} expression(s)"
        )
    return tuple(found[k] for k in range(1, count + 1))


def parse_spec(text: str, source: str = "<string>") -> GameSpec:
    sections = _split_sections(text, source)
    for name in REQUIRED_SECTIONS:
        if name not in sections:
            raise SpecError(f"{source}: missing section [{name}]")
    if ("running" in sections) == ("table" in sections):
        raise SpecError(f"{source}: give exactly one of [running] or [table]")

    game = {k.lower(): (v, ln) for k, v, ln in sections["game"]}
    try:
        n = int(game["n"][0])
        d = int(game.get("d", ("1", 0))[0])
        horizon = float(game.get("t", ("1", 0))[0])
    except KeyError as err:
        raise SpecError(f"{source}: [game] is missing {err.args[0]}") from None
    except ValueError as err:
        raise SpecError(f"{source}: bad number in [game]: {err}") from None
    name = game.get("name", (Path(source).stem, 0))[0]

    grids = {}
    for key, value, lineno in sections["actions"]:
        if not key.isdigit():
            raise SpecError(f"{source}:{lineno}: action keys are player numbers, got {key!r}")
        grids[int(key)] = _parse_numbers(value, source, lineno)
    if sorted(grids) != list(range(1, n + 1)):
        raise SpecError(f"{source}: [actions] must list players 1..{n}")

    drift = _indexed_exprs(sections["dynamics"], "b", d, "dynamics", source)
    terminal = _indexed_exprs(sections["terminal"], "g", n, "terminal", source)
    running = table = None
    if "running" in sections:
        running = _indexed_exprs(sections["running"], "f", n, "running", source)
    else:
        table = {}
        for key, value, lineno in sections["table"]:
            acts = _parse_table_key(key, source, lineno)
            if len(acts) != n:
                raise SpecError(f"{source}:{lineno}: table key needs {n} actions")
            table[tuple(acts)] = _parse_numbers(value, source, lineno)
    return GameSpec(
        num_players=n,
        brownian_dim=d,
        horizon=horizon,
        action_grids=tuple(grids[i] for i in range(1, n + 1)),
        drift=drift,
        terminal=terminal,
        running=running,
        table=table,
        name=name,
    )


def load_spec(path) -> GameSpec:
    """Read a game file; builtin names e1..e4 resolve to the shipped games."""
    key = str(path).lower()
    if key in BUILTIN_GAMES and not Path(path).exists():
        text = resources.files("setgame.games").joinpath(BUILTIN_GAMES[key]).read_text()
        return parse_spec(text, BUILTIN_GAMES[key])
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ExportError(f"cannot read game file {path}: {err}") from None
    return parse_spec(text, str(path))


# ---------------------------------------------------------------- export

def _jsonable(obj):
    if isinstance(obj, SetCloud):
        return obj.to_dict()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_json(results) -> str:
    return json.dumps(results, default=_jsonable, indent=2, sort_keys=True) + "\n"


def rows_to_csv(rows, header) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def cloud_rows(cloud: SetCloud, provenance=None):
    """One CSV row per cloud point: y1..yN, provenance."""
    header = [f"y{i + 1}" for i in range(cloud.dim)] + ["provenance"]
    prov = provenance or [""] * len(cloud)
    rows = [list(map(float, p)) + [label] for p, label in zip(cloud.points, prov)]
    return header, rows


def export(results, fmt, path=None) -> str:
    """Serialize results as JSON (any dict) or CSV (dict with 'header', 'rows').

    Writes to ``path`` when given and returns the text either way.
    """
    if fmt == "json":
        text = dumps_json(results)
    elif fmt == "csv":
        text = rows_to_csv(results["rows"], results["header"])
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path is not None:
        try:
            Path(path).write_text(text)
        except OSError as err:
            raise ExportError(f"cannot write {path}: {err}") from None
    return text


def read_cloud(path) -> SetCloud:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, ValueError) as err:
        raise ExportError(f"cannot read cloud file {path}: {err}") from None
    if "cloud" in data:
        data = data["cloud"]
    points = data.get("points", [])
    dim = len(points[0]) if points else int(data.get("dim", 0))
    return SetCloud(np.array(points, dtype=float).reshape(-1, dim) if dim else [],
                    radius=float(data.get("radius", 0.0)), dim=dim)


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, ValueError) as err:
        raise ExportError(f"cannot read {path}: {err}") from None
