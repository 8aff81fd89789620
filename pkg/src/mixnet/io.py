"""JSON persistence for models, structures and estimation results."""
from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .netmodel import BreveModel, MixedModel, ModelError
from .polyalg import PolyMatrix
from .structure import ModelStructure


def schema() -> dict:
    return json.loads(resources.files("mixnet").joinpath("schema/model.schema.json").read_text())


def polymatrix_to_json(P: PolyMatrix) -> list:
    r, c = P.shape
    return [[P.entry(i, j).coeffs.tolist() if not P.entry(i, j).is_zero() else [0.0]
             for j in range(c)] for i in range(r)]


def polymatrix_from_json(obj, rows: int, cols: int) -> PolyMatrix:
    if len(obj) != rows or any(len(row) != cols for row in obj):
        raise ModelError(f"polynomial matrix must be {rows}x{cols}")
    if cols == 0:
        return PolyMatrix(np.zeros((1, rows, 0)))
    return PolyMatrix.from_entries([[list(e) if len(e) else [0.0] for e in row] for row in obj])


def mask_to_json(mask: np.ndarray) -> list:
    nl, r, c = mask.shape
    return [[[int(mask[l, i, j]) for l in range(nl)] for j in range(c)] for i in range(r)]


def mask_from_json(obj, rows: int, cols: int) -> np.ndarray:
    if len(obj) != rows or any(len(row) != cols for row in obj):
        raise ModelError(f"mask must be {rows}x{cols}")
    nl = max([len(e) for row in obj for e in row] + [1])
    m = np.zeros((nl, rows, cols), dtype=bool)
    for i, row in enumerate(obj):
        for j, e in enumerate(row):
            m[: len(e), i, j] = np.asarray(e, dtype=bool)
    return m


def model_to_dict(m: MixedModel, s: ModelStructure | None = None, name: str | None = None,
                  Ts: float | None = None) -> dict:
    d = {"L": m.L, "K": m.K}
    if name:
        d["name"] = name
    if Ts is not None:
        d["Ts"] = Ts
    d["degrees"] = {"A": m.A.degree, "B": m.B.degree, "Ng": m.Ng.degree, "F": m.F.degree,
                    "Dg": [m.Dg.entry(j, j).degree for j in range(m.L)]}
    for key in ("A", "B", "Ng", "Dg", "F"):
        d[key] = polymatrix_to_json(getattr(m, key))
    d["Lambda"] = np.asarray(m.Lambda).tolist()
    if s is not None:
        d["structure"] = structure_to_dict(s)
        d["constraint"] = {"Gamma": s.Gamma.tolist(), "gamma": s.gamma.tolist()}
    return d


def structure_to_dict(s: ModelStructure) -> dict:
    d = {"A": mask_to_json(s.A_mask), "B": mask_to_json(s.B_mask), "Ng": mask_to_json(s.Ng_mask),
         "F": mask_to_json(s.F_mask), "Dg_degree": s.Dg_deg.tolist(), "G_known": s.G_known,
         "relaxed_cond6": s.relaxed_cond6}
    if s.ground is not None:
        d["ground"] = s.ground.tolist()
    return d


def breve_to_dict(b: BreveModel) -> dict:
    return {"L": b.L, "K": b.K, "Ab": polymatrix_to_json(b.Ab), "Bb": polymatrix_to_json(b.Bb),
            "Gb": polymatrix_to_json(b.Gb), "Fb": polymatrix_to_json(b.Fb),
            "Lambda_b": np.asarray(b.Lb).tolist(), "dG": b.dG.coeffs.tolist()}


def model_from_dict(d: dict) -> tuple[MixedModel | None, ModelStructure]:
    """Validate against the schema and build ``(model or None, structure)``."""
    try:
        jsonschema.validate(d, schema())
    except jsonschema.ValidationError as exc:
        raise ModelError(f"model file does not match the schema: {exc.message}") from None
    L, K = d["L"], d["K"]
    model = None
    if "A" in d and "B" in d:
        A = polymatrix_from_json(d["A"], L, L)
        B = polymatrix_from_json(d["B"], L, K)
        Ng = polymatrix_from_json(d["Ng"], L, L) if "Ng" in d else PolyMatrix.zeros(L, L)
        Dg = polymatrix_from_json(d["Dg"], L, L) if "Dg" in d else PolyMatrix.identity(L)
        F = polymatrix_from_json(d["F"], L, L) if "F" in d else PolyMatrix.identity(L)
        lam = np.asarray(d.get("Lambda", np.eye(L).tolist()), dtype=float)
        model = MixedModel(A, B, Dg, Ng, F, lam)
    con = d.get("constraint")
    Gamma = np.asarray(con["Gamma"], float) if con else None
    gamma = np.asarray(con["gamma"], float) if con else None
    st = d.get("structure")
    if st is not None:
        Am = mask_from_json(st["A"], L, L)
        Bm = mask_from_json(st["B"], L, K) if K else np.zeros((1, L, 0), dtype=bool)
        Ngm = mask_from_json(st["Ng"], L, L) if "Ng" in st else np.zeros((1, L, L), dtype=bool)
        Fm = mask_from_json(st["F"], L, L) if "F" in st else np.zeros((1, L, L), dtype=bool)
        dgd = np.asarray(st.get("Dg_degree", [0] * L), dtype=int)
        ground = np.asarray(st["ground"], dtype=bool) if "ground" in st else None
        if Gamma is None:
            raise ModelError("a structure file needs a constraint {Gamma, gamma}")
        s = ModelStructure(Am, Bm, Ngm, dgd, Fm, Gamma, gamma, ground=ground,
                           G_known=st.get("G_known", True), relaxed_cond6=st.get("relaxed_cond6", False))
    elif model is not None:
        s = ModelStructure.from_model(model, Gamma, gamma)
    else:
        raise ModelError("file holds neither a model nor a structure")
    return model, s


def save_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def load_model(path) -> tuple[MixedModel | None, ModelStructure]:
    return model_from_dict(json.loads(Path(path).read_text()))


def save_model(path, m: MixedModel, s: ModelStructure | None = None, **kw) -> None:
    save_json(path, model_to_dict(m, s, **kw))

