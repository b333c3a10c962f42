"""Problem manifests, stored designs and trajectory logs.

A problem manifest is JSON.  Matrices are given inline (nested lists) or
as paths, relative to the manifest, of Matrix Market files.  Designs are a
single JSON document whose floats are written with round-trip precision.
"""
import csv
import json
import math
import os
from dataclasses import dataclass, field, fields

import numpy as np
import scipy.io
import scipy.sparse as sp

from .geometry import Polytope, support_max
from .reduction import ProjectionBasis
from .system import DimensionError, StateSpaceModel, dense

MANIFEST_KEYS = ("fom", "constraints", "disturbances", "cost", "reduction", "bounds", "ocp")
DESIGN_FORMAT = "rompc-design/1"


class ManifestError(ValueError):
    pass


class DesignFormatError(ValueError):
    pass


# --------------------------------------------------------------------------
# problem definition
# --------------------------------------------------------------------------

@dataclass
class ProblemSpec:
    """Everything the offline synthesis and the simulations need."""

    fom: StateSpaceModel
    Z: Polytope
    U: Polytope
    W: Polytope = None
    V: Polytope = None
    Qf: object = "projected"
    R: np.ndarray = None
    W_z: np.ndarray = None
    W_u: np.ndarray = None
    rom_dim: int = 1
    N: int = 10
    tau: int = 100
    eta_init: float = 1e10
    i_bar: int = None
    gamma_reg: float = 1e-3
    reduction: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)
    ocp: dict = field(default_factory=dict)
    simulation: dict = field(default_factory=dict)
    name: str = ""
    base_dir: str = "."

    def __post_init__(self):
        f = self.fom
        self.R = np.eye(f.m) if self.R is None else np.atleast_2d(np.asarray(self.R, dtype=float))
        self.W_z = np.eye(f.o) if self.W_z is None else np.atleast_2d(np.asarray(self.W_z, dtype=float))
        self.W_u = np.eye(f.m) if self.W_u is None else np.atleast_2d(np.asarray(self.W_u, dtype=float))
        self.W = _normalize_disturbance(self.W)
        self.V = _normalize_disturbance(self.V)

    def validate(self, check_compact=True):
        f = self.fom
        for name, S, d in (("Z", self.Z, f.o), ("U", self.U, f.m)):
            if S.dim != d:
                raise DimensionError(f"dimension mismatch: {name} has dimension {S.dim}, expected {d}")
            if np.any(S.b <= 0):
                raise ManifestError(f"constraint set {name} must contain the origin in its interior")
        for name, S, d in (("W", self.W, f.m_w), ("V", self.V, f.p)):
            if S is None:
                continue
            if S.dim != d:
                raise DimensionError(f"dimension mismatch: {name} has dimension {S.dim}, expected {d}")
            if np.any(S.b < 0):
                raise ManifestError(f"disturbance set {name} must contain the origin")
        if check_compact:
            for name, S in (("Z", self.Z), ("U", self.U), ("W", self.W), ("V", self.V)):
                if S is not None and not is_compact(S):
                    raise ManifestError(f"unbounded constraint set {name}")
        if self.R.shape != (f.m, f.m):
            raise DimensionError(f"dimension mismatch: R is {self.R.shape}, expected ({f.m}, {f.m})")
        if not np.allclose(self.R, self.R.T) or np.linalg.eigvalsh(0.5 * (self.R + self.R.T))[0] <= 0:
            raise ManifestError("R must be symmetric positive definite")
        if self.W_z.shape[1] != f.o or self.W_u.shape[1] != f.m:
            raise DimensionError("dimension mismatch in the weights W_z / W_u")
        if not isinstance(self.Qf, str):
            Qf = self.Qf
            if Qf.shape != (f.n, f.n):
                raise DimensionError(f"dimension mismatch: Qf is {Qf.shape}, expected ({f.n}, {f.n})")
        elif self.Qf != "projected":
            raise ManifestError(f"unknown Qf marker {self.Qf!r}")
        if not 1 <= self.rom_dim <= f.n:
            raise ManifestError(f"reduced dimension {self.rom_dim} outside [1, {f.n}]")
        if self.N < 1 or self.tau < 1:
            raise ManifestError("horizon N and tau must be at least 1")
        if self.i_bar is not None and self.i_bar < self.rom_dim - 1:
            raise ManifestError("i_bar must be at least n - 1")
        if not self.gamma_reg > 0:
            raise ManifestError("gamma_reg must be positive")
        return self


def _normalize_disturbance(S):
    """{0}, zero-width boxes and empty dimensions all mean 'no disturbance'."""
    if S is None or S.dim == 0 or S.is_zero():
        return None
    return S


def is_compact(S):
    """Per-coordinate LP check."""
    try:
        return S.is_compact()
    except Exception:
        return False


# --------------------------------------------------------------------------
# matrix and set encoding
# --------------------------------------------------------------------------

def _read_matrix(value, base_dir, what):
    if value is None:
        return None
    if isinstance(value, str):
        path = value if os.path.isabs(value) else os.path.join(base_dir, value)
        if not os.path.exists(path):
            raise FileNotFoundError(f"matrix file for {what} not found: {path}")
        M = scipy.io.mmread(path)
        return M.tocsr() if sp.issparse(M) else np.asarray(M, dtype=float)
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None] if arr.size else arr.reshape(0, 0)
    return arr


def _write_matrix(M, directory, stem):
    path = os.path.join(directory, stem + ".mtx")
    if sp.issparse(M):
        scipy.io.mmwrite(path, sp.coo_matrix(M), precision=17)
    else:
        scipy.io.mmwrite(path, np.atleast_2d(np.asarray(M, dtype=float)), precision=17)
    return os.path.basename(path)


def polytope_to_json(S):
    if S is None:
        return None
    if S.is_box:
        lo, hi = S.bounds
        if np.array_equal(S.H, np.vstack([np.eye(S.dim), -np.eye(S.dim)])):
            return {"lo": lo.tolist(), "hi": hi.tolist()}
    return {"H": S.H.tolist(), "b": S.b.tolist()}


def polytope_from_json(obj, base_dir=".", label=None):
    if obj is None:
        return None
    if "lo" in obj or "hi" in obj:
        if "lo" not in obj or "hi" not in obj:
            raise ManifestError(f"unbounded constraint set {label}: box needs both 'lo' and 'hi'")
        lo = np.asarray(obj["lo"], dtype=float)
        hi = np.asarray(obj["hi"], dtype=float)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ManifestError(f"unbounded constraint set {label}")
        if np.any(lo > hi):
            raise ManifestError(f"empty box for {label}")
        return Polytope.box(lo, hi, label)
    H = _read_matrix(obj["H"], base_dir, f"{label}.H")
    b = np.asarray(_read_matrix(obj["b"], base_dir, f"{label}.b"), dtype=float).ravel()
    H = dense(H)
    if H.size == 0:
        H = H.reshape(b.size, -1)
    return Polytope(H, b, label)


# --------------------------------------------------------------------------
# manifest load / save
# --------------------------------------------------------------------------

def load_problem(path, check_compact=True):
    """Read and validate a problem manifest."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"manifest not found: {path}")
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"manifest is not valid JSON: {exc}") from exc
    missing = [k for k in ("fom", "constraints") if k not in doc]
    if missing:
        raise ManifestError(f"manifest lacks required keys {missing}")
    base = os.path.dirname(os.path.abspath(path))
    return problem_from_dict(doc, base, check_compact)


def problem_from_dict(doc, base_dir=".", check_compact=True):
    f = doc["fom"]
    domain = f.get("time_domain", "discrete")
    if domain not in ("discrete", "continuous"):
        raise ManifestError(f"unknown time domain {domain!r}")
    dt = float(f.get("dt", 1.0)) if domain == "discrete" else None
    mats = {k: _read_matrix(f.get(k), base_dir, f"fom.{k}") for k in ("A", "B", "C", "H", "B_w")}
    for k in ("A", "B", "C", "H"):
        if mats[k] is None:
            raise ManifestError(f"fom.{k} missing")
    fom = StateSpaceModel(mats["A"], mats["B"], mats["C"], mats["H"], mats["B_w"], dt=dt)
    cons = doc["constraints"]
    dist = doc.get("disturbances") or {}
    cost = doc.get("cost") or {}
    red = dict(doc.get("reduction") or {})
    bnd = dict(doc.get("bounds") or {})
    ocp = dict(doc.get("ocp") or {})
    sim = dict(doc.get("simulation") or {})
    Qf = cost.get("Qf", "projected")
    if not (isinstance(Qf, str) and Qf == "projected"):
        Qf = dense(_read_matrix(Qf, base_dir, "cost.Qf"))
    if "Z" not in cons or "U" not in cons:
        raise ManifestError("constraints need both Z and U")
    spec = ProblemSpec(
        fom=fom,
        Z=polytope_from_json(cons["Z"], base_dir, "Z"),
        U=polytope_from_json(cons["U"], base_dir, "U"),
        W=polytope_from_json(dist.get("W"), base_dir, "W"),
        V=polytope_from_json(dist.get("V"), base_dir, "V"),
        Qf=Qf,
        R=_opt_matrix(cost.get("R"), base_dir, "cost.R"),
        W_z=_opt_matrix(cost.get("W_z"), base_dir, "cost.W_z"),
        W_u=_opt_matrix(cost.get("W_u"), base_dir, "cost.W_u"),
        rom_dim=int(red.pop("n", 1)),
        N=int(ocp.pop("N", 10)),
        tau=int(bnd.pop("tau", 100)),
        eta_init=float(bnd.pop("eta_init", 1e10)),
        i_bar=None if bnd.get("i_bar") is None else int(bnd.pop("i_bar")),
        gamma_reg=float(bnd.pop("gamma_reg", 1e-3)),
        reduction=red,
        bounds={k: v for k, v in bnd.items() if k != "i_bar"},
        ocp=ocp,
        simulation=sim,
        name=str(doc.get("name", "")),
        base_dir=base_dir,
    )
    if red.get("method") == "basis":
        for k in ("V", "W"):
            if k not in red:
                raise ManifestError(f"reduction.{k} missing for a user-supplied basis")
            red[k] = dense(_read_matrix(red[k], base_dir, f"reduction.{k}"))
    return spec.validate(check_compact)


def _opt_matrix(value, base_dir, what):
    M = _read_matrix(value, base_dir, what)
    return None if M is None else dense(M)


def problem_to_dict(spec, directory=None):
    """Manifest dictionary; with ``directory`` the model matrices go to .mtx files there."""
    f = spec.fom

    def mat(M, stem):
        if M is None:
            return None
        if directory is not None:
            return _write_matrix(M, directory, stem)
        return dense(M).tolist()

    fom = {"time_domain": "discrete" if f.discrete else "continuous",
           "A": mat(f.A, "A"), "B": mat(f.B, "B"), "C": mat(f.C, "C"), "H": mat(f.H, "H"),
           "B_w": mat(f.B_w, "B_w") if f.m_w else None}
    if f.discrete:
        fom["dt"] = f.dt
    red = {"n": spec.rom_dim, **{k: v for k, v in spec.reduction.items() if k not in ("V", "W")}}
    if spec.reduction.get("method") == "basis":
        red["V"] = mat(spec.reduction["V"], "basis_V")
        red["W"] = mat(spec.reduction["W"], "basis_W")
    bnd = {"tau": spec.tau, "eta_init": spec.eta_init, "i_bar": spec.i_bar, "gamma_reg": spec.gamma_reg,
           **spec.bounds}
    return {
        "name": spec.name,
        "fom": fom,
        "constraints": {"Z": polytope_to_json(spec.Z), "U": polytope_to_json(spec.U)},
        "disturbances": {"W": polytope_to_json(spec.W), "V": polytope_to_json(spec.V)},
        "cost": {"Qf": spec.Qf if isinstance(spec.Qf, str) else mat(spec.Qf, "Qf"),
                 "R": spec.R.tolist(), "W_z": spec.W_z.tolist(), "W_u": spec.W_u.tolist()},
        "reduction": red,
        "bounds": bnd,
        "ocp": {"N": spec.N, **spec.ocp},
        "simulation": dict(spec.simulation),
    }


def save_problem(spec, path, external_matrices=True):
    """Write a manifest (and, by default, Matrix Market files next to it)."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    doc = problem_to_dict(spec, directory if external_matrices else None)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)


# --------------------------------------------------------------------------
# designs
# --------------------------------------------------------------------------

@dataclass
class RompcDesign:
    """Offline synthesis result."""

    rom: StateSpaceModel
    basis: ProjectionBasis
    K: np.ndarray
    L: np.ndarray
    P: np.ndarray
    terminal_set: Polytope
    delta_z: np.ndarray
    delta_u: np.ndarray
    Z_bar: Polytope
    U_bar: Polytope
    Q: np.ndarray
    R: np.ndarray
    N: int
    dt: float = None
    K_f: np.ndarray = None
    terminal: str = "set"
    allow_equality_fallback: bool = True
    rom_ct: StateSpaceModel = None
    Z: Polytope = None
    U: Polytope = None
    report: dict = field(default_factory=dict)

    def __post_init__(self):
        self.delta_z = np.asarray(self.delta_z, dtype=float).ravel()
        self.delta_u = np.asarray(self.delta_u, dtype=float).ravel()
        self.validate()

    def validate(self):
        if np.any(self.delta_z < 0) or np.any(self.delta_u < 0) or not (
                np.all(np.isfinite(self.delta_z)) and np.all(np.isfinite(self.delta_u))):
            raise DesignFormatError("tightening amounts must be finite and nonnegative")
        if self.Z_bar.n_rows != self.delta_z.size or self.U_bar.n_rows != self.delta_u.size:
            raise DesignFormatError("tightening vectors do not match the constraint rows")
        if self.Z is not None and not np.allclose(self.Z_bar.b, self.Z.b - self.delta_z, rtol=0, atol=0):
            raise DesignFormatError("Z_bar is not Z tightened by delta_z")
        if self.U is not None and not np.allclose(self.U_bar.b, self.U.b - self.delta_u, rtol=0, atol=0):
            raise DesignFormatError("U_bar is not U tightened by delta_u")
        P = np.asarray(self.P)
        if not np.array_equal(P, P.T) and not np.allclose(P, P.T, rtol=1e-12, atol=0):
            raise DesignFormatError("terminal cost P must be symmetric")
        if np.linalg.eigvalsh(0.5 * (P + P.T))[0] <= 0:
            raise DesignFormatError("terminal cost P must be positive definite")
        if self.terminal not in ("set", "equality"):
            raise DesignFormatError(f"unknown terminal kind {self.terminal!r}")
        if self.K.shape != (self.rom.m, self.rom.n) or self.L.shape != (self.rom.n, self.rom.p):
            raise DesignFormatError("dimension mismatch in the gains")

    @property
    def continuous(self):
        return self.rom_ct is not None


def _enc(M):
    if M is None:
        return None
    if sp.issparse(M):
        M = M.toarray()
    a = np.asarray(M, dtype=float)
    return {"shape": list(a.shape), "data": [_enc_float(v) for v in a.ravel()]}


def _enc_float(v):
    v = float(v)
    if math.isfinite(v):
        return v
    return repr(v)


def _dec(obj):
    if obj is None:
        return None
    data = [float(v) for v in obj["data"]]
    return np.array(data, dtype=float).reshape(obj["shape"])


def _enc_model(M):
    if M is None:
        return None
    return {"A": _enc(M.A), "B": _enc(M.B), "C": _enc(M.C), "H": _enc(M.H),
            "B_w": _enc(M.B_w) if M.m_w else None, "dt": M.dt}


def _dec_model(obj):
    if obj is None:
        return None
    return StateSpaceModel(_dec(obj["A"]), _dec(obj["B"]), _dec(obj["C"]), _dec(obj["H"]),
                           _dec(obj["B_w"]), dt=obj["dt"])


def _enc_poly(S):
    return None if S is None else {"H": _enc(S.H), "b": _enc(S.b), "label": S.label}


def _dec_poly(obj):
    return None if obj is None else Polytope(_dec(obj["H"]), _dec(obj["b"]), obj.get("label"))


def design_to_dict(d):
    return {
        "format": DESIGN_FORMAT,
        "rom": _enc_model(d.rom),
        "rom_ct": _enc_model(d.rom_ct),
        "basis": {"V": _enc(d.basis.V), "W": _enc(d.basis.W)},
        "K": _enc(d.K), "L": _enc(d.L), "P": _enc(d.P), "K_f": _enc(d.K_f),
        "Q": _enc(d.Q), "R": _enc(d.R),
        "terminal_set": _enc_poly(d.terminal_set),
        "terminal": d.terminal,
        "allow_equality_fallback": bool(d.allow_equality_fallback),
        "delta_z": _enc(d.delta_z), "delta_u": _enc(d.delta_u),
        "Z_bar": _enc_poly(d.Z_bar), "U_bar": _enc_poly(d.U_bar),
        "Z": _enc_poly(d.Z), "U": _enc_poly(d.U),
        "N": int(d.N), "dt": d.dt,
        "report": d.report,
    }


def design_from_dict(doc):
    if doc.get("format") != DESIGN_FORMAT:
        raise DesignFormatError(f"unsupported design format {doc.get('format')!r}")
    try:
        return RompcDesign(
            rom=_dec_model(doc["rom"]),
            basis=ProjectionBasis(_dec(doc["basis"]["V"]), _dec(doc["basis"]["W"])),
            K=_dec(doc["K"]), L=_dec(doc["L"]), P=_dec(doc["P"]),
            terminal_set=_dec_poly(doc["terminal_set"]),
            delta_z=_dec(doc["delta_z"]), delta_u=_dec(doc["delta_u"]),
            Z_bar=_dec_poly(doc["Z_bar"]), U_bar=_dec_poly(doc["U_bar"]),
            Q=_dec(doc["Q"]), R=_dec(doc["R"]), N=int(doc["N"]), dt=doc.get("dt"),
            K_f=_dec(doc.get("K_f")), terminal=doc.get("terminal", "set"),
            allow_equality_fallback=bool(doc.get("allow_equality_fallback", True)),
            rom_ct=_dec_model(doc.get("rom_ct")),
            Z=_dec_poly(doc.get("Z")), U=_dec_poly(doc.get("U")),
            report=doc.get("report") or {},
        )
    except (KeyError, TypeError) as exc:
        raise DesignFormatError(f"design file is incomplete: {exc}") from exc


def save_design(design, path):
    design.validate()
    doc = design_to_dict(design)
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(doc, fh, allow_nan=False)
    os.replace(tmp, path)


def load_design(path):
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DesignFormatError(f"could not parse design file {path}: {exc}") from exc
    return design_from_dict(doc)


# --------------------------------------------------------------------------
# trajectories
# --------------------------------------------------------------------------

@dataclass
class TrajectoryLog:
    """Per-step closed-loop records; every array has one row per step."""

    k: np.ndarray
    t: np.ndarray
    x_bar: np.ndarray
    x_hat: np.ndarray
    u: np.ndarray
    u_bar: np.ndarray
    y: np.ndarray
    z: np.ndarray
    z_bar: np.ndarray
    w: np.ndarray
    v: np.ndarray
    status: list
    solve_time: np.ndarray
    k0: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        lengths = {f.name: len(getattr(self, f.name)) for f in fields(self) if f.name not in ("k0", "meta")}
        if len(set(lengths.values())) > 1:
            raise ValueError(f"trajectory records have different lengths: {lengths}")

    def __len__(self):
        return len(self.k)

    @classmethod
    def empty(cls, n, m, p, o, m_w):
        z = lambda d: np.zeros((0, d))  # noqa: E731
        return cls(np.zeros(0, int), np.zeros(0), z(n), z(n), z(m), z(m), z(p), z(o), z(o), z(m_w), z(p), [],
                   np.zeros(0))


def _header(log):
    o, m = log.z.shape[1], log.u.shape[1]
    return (["k", "t"] + [f"z_{i + 1}" for i in range(o)] + [f"u_{i + 1}" for i in range(m)]
            + [f"zbar_{i + 1}" for i in range(o)] + [f"ubar_{i + 1}" for i in range(m)] + ["status"])


def write_trajectory(log, path, format="csv"):
    """CSV with columns k,t,z_*,u_*,zbar_*,ubar_*,status, or a JSON array of records."""
    if format == "csv":
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(_header(log))
            for i in range(len(log)):
                wr.writerow([int(log.k[i]), repr(float(log.t[i]))]
                            + [repr(float(v)) for v in log.z[i]] + [repr(float(v)) for v in log.u[i]]
                            + [repr(float(v)) for v in log.z_bar[i]] + [repr(float(v)) for v in log.u_bar[i]]
                            + [log.status[i]])
    elif format == "json":
        recs = []
        for i in range(len(log)):
            recs.append({
                "k": int(log.k[i]), "t": float(log.t[i]),
                "x_bar": log.x_bar[i].tolist(), "x_hat": log.x_hat[i].tolist(),
                "u": log.u[i].tolist(), "u_bar": log.u_bar[i].tolist(), "y": log.y[i].tolist(),
                "z": log.z[i].tolist(), "z_bar": log.z_bar[i].tolist(),
                "w": log.w[i].tolist(), "v": log.v[i].tolist(),
                "status": log.status[i], "solve_time": float(log.solve_time[i]),
            })
        with open(path, "w") as fh:
            json.dump(recs, fh)
    else:
        raise ValueError(f"unknown trajectory format {format!r}")


def support_margins(S, point):
    """b - H point, row by row."""
    return S.b - S.H @ np.asarray(point, dtype=float)


__all__ = ["ProblemSpec", "RompcDesign", "TrajectoryLog", "ManifestError", "DesignFormatError", "load_problem",
           "save_problem", "problem_from_dict", "problem_to_dict", "save_design", "load_design",
           "design_to_dict", "design_from_dict", "write_trajectory", "polytope_to_json", "polytope_from_json",
           "is_compact", "support_margins", "support_max"]
