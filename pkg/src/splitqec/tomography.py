"""Logical state and process reconstruction, fidelities, phase correction and decay fits."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit, minimize_scalar

from .protocols import CARDINAL_AXIS

SINGLE = "IXYZ"
PAULI2 = tuple(a + b for a in SINGLE for b in SINGLE)
BASES2 = tuple(a + b for a in "XYZ" for b in "XYZ")
_MAT = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
BOOTSTRAP_RESAMPLES = 200
FIT_TOL = 1e-8
FIT_MAX_ITER = 10_000

# Reported experimental values, kept for comparison only.
REFERENCE_BELL_FIDELITY = {"raw": 0.382, "decoded": 0.546, "postselected": 0.780}
REFERENCE_PROCESS_FIDELITY = {"raw": 0.310, "decoded": 0.442, "postselected": 0.78}
REFERENCE_MEMORY_EPSILON = {"Z": 0.078, "X": 0.111, "Y": 0.179}


def pauli_matrix(label: str) -> np.ndarray:
    out = np.array([[1.0 + 0j]])
    for ch in label:
        out = np.kron(out, _MAT[ch])
    return out


def input_bloch(label) -> np.ndarray:
    """Bloch vector of a cardinal label, or pass through an explicit vector."""
    if isinstance(label, str):
        axis, sign = CARDINAL_AXIS[label]
        v = np.zeros(3)
        v["XYZ".index(axis)] = sign
        return v
    return np.asarray(label, dtype=float)


# -- datasets ---------------------------------------------------------------

@dataclass(frozen=True)
class Setting:
    """Outcome statistics of one basis pair: probabilities of (b1, b2) in 00, 01, 10, 11."""

    probs: tuple
    shots: int

    def __post_init__(self):
        if self.shots <= 0:
            raise ValueError("shot count must be positive")
        if len(self.probs) != 4:
            raise ValueError("need four outcome probabilities")

    @classmethod
    def from_bits(cls, b1: np.ndarray, b2: np.ndarray) -> "Setting":
        b1, b2 = np.asarray(b1, np.uint8), np.asarray(b2, np.uint8)
        if b1.size == 0:
            raise ValueError("no shots")
        counts = np.bincount(2 * b1.astype(np.int64) + b2, minlength=4)
        return cls(tuple(float(c) / b1.size for c in counts), int(b1.size))

    @property
    def values(self) -> dict:
        """Expectations of P1P2, P1 I and I P2 (index keys "both", "first", "second")."""
        p00, p01, p10, p11 = self.probs
        return {"both": p00 - p01 - p10 + p11, "first": p00 + p01 - p10 - p11, "second": p00 - p01 + p10 - p11}


@dataclass
class TomographyDataset:
    """Per-input, per-basis-pair outcome statistics of one evaluation mode.

    ``settings`` maps ``(input label, basis pair)`` to a :class:`Setting`.
    ``fixed`` holds inputs given directly as 16 expectation values (used
    after analytic transformations such as a virtual Z rotation).
    ``inputs`` maps an input label to its Bloch vector.
    """

    mode: str
    settings: dict = field(default_factory=dict)
    fixed: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)

    def add(self, label, bases: str, setting: Setting, bloch=None) -> None:
        if bases not in BASES2:
            raise ValueError(f"unknown basis pair {bases!r}")
        self.settings[(label, bases)] = setting
        self.inputs.setdefault(label, input_bloch(label) if bloch is None else np.asarray(bloch, float))

    def labels(self) -> list:
        return list(self.inputs)

    def expectations(self, label) -> dict:
        """All 16 two-qubit Pauli expectations; identity marginals averaged over bases."""
        if label in self.fixed:
            return dict(self.fixed[label])
        acc: dict = {"II": [(1.0, 1)]}
        for bases in BASES2:
            s = self.settings.get((label, bases))
            if s is None:
                raise KeyError(f"missing basis {bases} for input {label!r}")
            v = s.values
            acc.setdefault(bases, []).append((v["both"], s.shots))
            acc.setdefault(bases[0] + "I", []).append((v["first"], s.shots))
            acc.setdefault("I" + bases[1], []).append((v["second"], s.shots))
        return {p: sum(x * n for x, n in acc[p]) / sum(n for _, n in acc[p]) for p in PAULI2}

    def resample(self, rng: np.random.Generator) -> "TomographyDataset":
        """Multinomial bootstrap over shots of every setting."""
        out = TomographyDataset(self.mode, {}, dict(self.fixed), dict(self.inputs))
        for key, s in self.settings.items():
            p = np.clip(np.asarray(s.probs, float), 0, None)
            p = p / p.sum()
            counts = rng.multinomial(s.shots, p)
            out.settings[key] = Setting(tuple(counts / s.shots), s.shots)
        return out

    def to_json(self) -> str:
        return json.dumps({
            "mode": self.mode,
            "settings": [{"input": _label_json(k[0]), "bases": k[1], "probs": list(s.probs), "shots": s.shots}
                         for k, s in self.settings.items()],
            "fixed": [{"input": _label_json(k), "values": v} for k, v in self.fixed.items()],
            "inputs": [{"input": _label_json(k), "bloch": list(map(float, v))} for k, v in self.inputs.items()],
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TomographyDataset":
        d = json.loads(text)
        ds = cls(d["mode"])
        for item in d["inputs"]:
            ds.inputs[_label_key(item["input"])] = np.asarray(item["bloch"], float)
        for item in d["settings"]:
            ds.settings[(_label_key(item["input"]), item["bases"])] = Setting(tuple(item["probs"]), item["shots"])
        for item in d["fixed"]:
            ds.fixed[_label_key(item["input"])] = item["values"]
        return ds


def _label_json(label):
    return list(label) if isinstance(label, tuple) else label


def _label_key(label):
    return tuple(label) if isinstance(label, list) else label


def mixture_setting(parts) -> Setting:
    """Affine combination ``[(weight, Setting)]`` of settings (weights sum to 1)."""
    probs = sum(w * np.asarray(s.probs, float) for w, s in parts)
    return Setting(tuple(float(p) for p in probs), min(s.shots for _, s in parts))


# -- states -----------------------------------------------------------------

def linear_inversion(exp: dict) -> np.ndarray:
    """rho = 1/4 sum_P <P> P over the 16 two-qubit Paulis."""
    return sum(exp[p] * pauli_matrix(p) for p in PAULI2) / 4


def _project_simplex(v: np.ndarray) -> np.ndarray:
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1
    k = np.nonzero(u - css / np.arange(1, len(u) + 1) > 0)[0][-1]
    tau = css[k] / (k + 1)
    return np.maximum(v - tau, 0)


def project_physical(rho: np.ndarray) -> np.ndarray:
    """Nearest unit-trace PSD matrix in Frobenius norm (eigenvalue simplex projection)."""
    h = (rho + rho.conj().T) / 2
    w, v = np.linalg.eigh(h)
    w = _project_simplex(w)
    return (v * w) @ v.conj().T


def reconstruct_state(data: TomographyDataset, label) -> np.ndarray:
    return project_physical(linear_inversion(data.expectations(label)))


def state_fidelity(rho: np.ndarray, psi: np.ndarray) -> float:
    psi = np.asarray(psi, complex)
    psi = psi / np.linalg.norm(psi)
    return float(np.real(psi.conj() @ rho @ psi))


def bell_fidelity(exp: dict) -> float:
    """Overlap with the ideal Bell state: (1 + <XX> - <YY> + <ZZ>) / 4."""
    return (1 + exp["XX"] - exp["YY"] + exp["ZZ"]) / 4


def single_logical_fidelity(x: float, y: float, z: float, angles) -> float:
    """(1 + r . <sigma>) / 2 against the pure state at ``(theta, phi)``, clipped at 1."""
    theta, phi = angles
    r = (math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta))
    return min(1.0, 0.5 * (1 + r[0] * x + r[1] * y + r[2] * z))


def overlap_fidelity(a: np.ndarray, b: np.ndarray) -> float:
    """Tr[a b] / max(Tr a^2, Tr b^2)."""
    num = np.real(np.trace(a @ b))
    den = max(np.real(np.trace(a @ a)), np.real(np.trace(b @ b)))
    return float(num / den)


BELL_STATE = np.array([1, 0, 0, 1], dtype=complex) / math.sqrt(2)


# -- processes --------------------------------------------------------------

def ideal_isometry() -> np.ndarray:
    """4x2 map |+> -> |++>, |-> -> |-->."""
    plus = np.array([1, 1], dtype=complex) / math.sqrt(2)
    minus = np.array([1, -1], dtype=complex) / math.sqrt(2)
    return np.outer(np.kron(plus, plus), plus.conj()) + np.outer(np.kron(minus, minus), minus.conj())


def choi_from_isometry(v: np.ndarray) -> np.ndarray:
    """Unit-trace Choi matrix (input factor first) of rho -> V rho V^dag."""
    d_in = v.shape[1]
    vec = sum(np.kron(np.eye(d_in)[k], v[:, k]) for k in range(d_in)) / math.sqrt(d_in)
    return np.outer(vec, vec.conj())


def choi_from_ptm(ptm: np.ndarray) -> np.ndarray:
    """C = 1/4 sum_ij R_ij P_j^T (x) P_i, with R_ij = Tr[P_i E(P_j)] / 4."""
    c = np.zeros((8, 8), dtype=complex)
    for i, po in enumerate(PAULI2):
        for j, pi in enumerate(SINGLE):
            if ptm[i, j]:
                c += ptm[i, j] * np.kron(_MAT[pi].T, pauli_matrix(po))
    return c / 4


def ptm_from_choi(c: np.ndarray) -> np.ndarray:
    out = np.zeros((16, 4))
    for i, po in enumerate(PAULI2):
        for j, pi in enumerate(SINGLE):
            out[i, j] = np.real(np.trace(c @ np.kron(_MAT[pi].T, pauli_matrix(po)))) / 2
    return out


def ideal_ptm() -> np.ndarray:
    return ptm_from_choi(choi_from_isometry(ideal_isometry()))


def _partial_trace_out(c: np.ndarray) -> np.ndarray:
    return np.einsum("iaja->ij", c.reshape(2, 4, 2, 4))


def _project_tp(c: np.ndarray) -> np.ndarray:
    """Nearest Hermitian C with Tr_out C = I/2."""
    delta = _partial_trace_out(c) - np.eye(2) / 2
    return c - np.kron(delta, np.eye(4)) / 4


def _project_psd(c: np.ndarray) -> np.ndarray:
    h = (c + c.conj().T) / 2
    w, v = np.linalg.eigh(h)
    return (v * np.maximum(w, 0)) @ v.conj().T


def project_cptp(c: np.ndarray, tol: float = 1e-12, max_iter: int = 2000) -> np.ndarray:
    """Nearest point of PSD ∩ trace-preserving set (Dykstra's alternating projections)."""
    x = (c + c.conj().T) / 2
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    for _ in range(max_iter):
        y = _project_psd(x + p)
        p = x + p - y
        x_new = _project_tp(y + q)
        q = y + q - x_new
        if np.linalg.norm(x_new - x) <= tol * max(1.0, np.linalg.norm(x)):
            x = x_new
            break
        x = x_new
    return x


@dataclass
class ProcessMap:
    ptm: np.ndarray  # 16 x 4, rows PAULI2 outputs, columns I, X, Y, Z inputs
    choi: np.ndarray  # 8 x 8, unit trace
    ptm_linear: np.ndarray
    iterations: int
    residuals: list

    def to_dict(self) -> dict:
        return {"ptm": self.ptm.tolist(), "ptm_linear": self.ptm_linear.tolist(), "choi": complex_to_json(self.choi),
                "rows": list(PAULI2), "columns": list(SINGLE), "iterations": self.iterations}


def _design(data: TomographyDataset, labels) -> tuple[np.ndarray, np.ndarray]:
    a = np.array([[1.0, *data.inputs[lab]] for lab in labels])
    y = np.array([[data.expectations(lab)[p] for p in PAULI2] for lab in labels])
    return a, y


def _ls_ptm(a: np.ndarray, y: np.ndarray) -> np.ndarray:
    # <P_i>_k = 2 R_iI + 2 sum_a r_ka R_ia
    sol, *_ = np.linalg.lstsq(a, y, rcond=None)
    return sol.T / 2


def reconstruct_process(data: TomographyDataset, labels=None, tol: float = FIT_TOL,
                        max_iter: int = FIT_MAX_ITER) -> ProcessMap:
    """Least-squares PTM refit under complete positivity and trace preservation.

    Projected gradient descent on the data residual: each step moves toward
    the data-consistent set and is projected back onto PSD ∩ TP, so the
    residual never increases.  Stops at relative change below ``tol``.
    """
    labels = list(labels) if labels is not None else data.labels()
    a, y = _design(data, labels)
    if np.linalg.matrix_rank(a) < 4:
        raise ValueError("input states do not span the Bloch space (rank-deficient design)")
    ptm_ls = _ls_ptm(a, y)
    rhos = [0.5 * (np.eye(2) + sum(r * _MAT[p] for r, p in zip(row[1:], "XYZ"))) for row in a]
    ops = np.array([(2 * np.kron(rho.T, pauli_matrix(p))).T.reshape(-1) for rho in rhos for p in PAULI2])
    target = y.reshape(-1)

    def residual(c):
        return float(np.sum((np.real(ops @ c.reshape(-1)) - target) ** 2))

    lip = 2 * np.linalg.norm(ops, 2) ** 2
    c = project_cptp(choi_from_ptm(ptm_ls))
    history = [residual(c)]
    it = 0
    for it in range(1, max_iter + 1):
        r = np.real(ops @ c.reshape(-1)) - target
        grad = 2 * (r @ ops).reshape(8, 8).T
        grad = (grad + grad.conj().T) / 2
        c_new = project_cptp(c - grad / lip)
        history.append(residual(c_new))
        change = np.linalg.norm(c_new - c) / max(np.linalg.norm(c), 1e-300)
        c = c_new
        if change < tol:
            break
    c = (c + c.conj().T) / 2
    return ProcessMap(ptm_from_choi(c), c, ptm_ls, it, history)


def process_fidelity(c: np.ndarray, c_ideal: np.ndarray | None = None) -> float:
    """Tr[C C_ideal] of unit-trace-normalized Choi matrices."""
    if c_ideal is None:
        c_ideal = choi_from_isometry(ideal_isometry())
    a = c / np.real(np.trace(c))
    b = c_ideal / np.real(np.trace(c_ideal))
    return float(np.real(np.trace(a @ b)))


def bootstrap(data: TomographyDataset, statistic, n: int = BOOTSTRAP_RESAMPLES, seed: int = 0) -> np.ndarray:
    """Standard deviation of ``statistic(dataset)`` over multinomial shot resamples."""
    rng = np.random.default_rng([seed, 0xB007])
    vals = np.array([np.asarray(statistic(data.resample(rng)), float) for _ in range(n)])
    return vals.std(axis=0, ddof=1)


# -- virtual phase correction -------------------------------------------------

def rotate_expectations(exp: dict, angle: float, which: int) -> dict:
    """Virtual Z on logical ``which``: X -> X cos a - Y sin a, Y -> X sin a + Y cos a."""
    k = which - 1
    c, s = math.cos(angle), math.sin(angle)
    out = dict(exp)
    for p in PAULI2:
        ch = p[k]
        if ch not in "XY":
            continue
        px = p[:k] + "X" + p[k + 1:]
        py = p[:k] + "Y" + p[k + 1:]
        out[p] = exp[px] * c - exp[py] * s if ch == "X" else exp[px] * s + exp[py] * c
    return out


def apply_virtual_z(data: TomographyDataset, angle: float, which: int = 1) -> TomographyDataset:
    if which not in (1, 2):
        raise ValueError("logical index must be 1 or 2")
    fixed = {lab: rotate_expectations(data.expectations(lab), angle, which) for lab in data.labels()}
    return TomographyDataset(data.mode, {}, fixed, dict(data.inputs))


@dataclass(frozen=True)
class PhaseEstimate:
    angle: float  # correction that maximizes the fidelity
    fidelity_before: float
    fidelity_after: float
    flat: bool = False

    @property
    def rotation(self) -> float:
        """The Z rotation present in the data (undone by ``angle``)."""
        return -self.angle


def _bell_objective(data: TomographyDataset, label):
    exp = data.expectations(label)
    return lambda a, which: bell_fidelity(rotate_expectations(exp, a, which))


def _process_objective(data: TomographyDataset, labels):
    a, y = _design(data, labels)
    exps = [data.expectations(lab) for lab in labels]
    c_ideal = choi_from_isometry(ideal_isometry())

    def f(angle, which):
        yy = np.array([[rotate_expectations(e, angle, which)[p] for p in PAULI2] for e in exps])
        return process_fidelity(choi_from_ptm(_ls_ptm(a, yy)), c_ideal)

    return f


def estimate_phase_rotation(data: TomographyDataset, which: int = 1, objective: str = "bell",
                            label="0", grid: int = 72, xtol: float = 1e-3) -> PhaseEstimate:
    """Angle of the virtual Z on logical ``which`` that maximizes the fidelity.

    A coarse grid over [-pi, pi] brackets the maximum, which golden-section
    search then refines.  ``angle`` is the correction to apply.
    """
    if objective == "bell":
        f = _bell_objective(data, label)
    elif objective == "process":
        f = _process_objective(data, data.labels())
    else:
        raise ValueError(f"unknown objective {objective!r}")
    xs = np.linspace(-math.pi, math.pi, grid, endpoint=False)
    vals = np.array([f(x, which) for x in xs])
    before = f(0.0, which)
    if vals.max() - vals.min() < 1e-12:
        return PhaseEstimate(0.0, before, before, True)
    k = int(np.argmax(vals))
    step = xs[1] - xs[0]
    lo, hi = xs[k] - step, xs[k] + step
    res = minimize_scalar(lambda x: -f(x, which), bracket=(lo, xs[k], hi), method="golden",
                          options={"xtol": xtol / (abs(xs[k]) + step)})
    angle = float((res.x + math.pi) % (2 * math.pi) - math.pi)
    return PhaseEstimate(angle, before, f(angle, which))


# -- decay fits ---------------------------------------------------------------

@dataclass(frozen=True)
class DecayFit:
    epsilon: float
    e0: float
    covariance: np.ndarray
    epsilon_se: float
    identifiable: bool


def decay_model(m, e0, eps):
    return 0.5 + (e0 - 0.5) * (1 - 2 * eps) ** np.asarray(m, float)


def fit_exponential_decay(m, errors, sigma=None) -> DecayFit:
    """Least-squares fit of E(m) = 1/2 + (E0 - 1/2)(1 - 2 eps)^m."""
    m = np.asarray(m, float)
    e = np.asarray(errors, float)
    if m.size < 3:
        raise ValueError("need at least three points")
    if np.all(np.abs(e - 0.5) < 1e-12):
        return DecayFit(float("nan"), 0.5, np.full((2, 2), np.inf), math.inf, False)
    e0_guess = float(np.clip(e[np.argmin(m)], 0, 0.49))
    ratio = np.clip((0.5 - e) / max(0.5 - e0_guess, 1e-6), 1e-6, 1)
    slope = np.polyfit(m - m.min(), np.log(ratio), 1)[0]
    eps_guess = float(np.clip((1 - math.exp(slope)) / 2, 1e-4, 0.45))
    try:
        popt, pcov = curve_fit(decay_model, m, e, p0=(e0_guess, eps_guess), sigma=sigma,
                               absolute_sigma=sigma is not None, bounds=([-0.5, 0.0], [1.5, 0.5]), maxfev=20000)
    except RuntimeError as exc:
        raise RuntimeError(f"decay fit did not converge: {exc}") from exc
    se = float(np.sqrt(pcov[1, 1])) if np.all(np.isfinite(pcov)) else math.inf
    return DecayFit(float(popt[1]), float(popt[0]), pcov, se, math.isfinite(se) and abs(popt[0] - 0.5) > 1e-9)


def bootstrap_decay(m, errors, shots, n: int = BOOTSTRAP_RESAMPLES, seed: int = 0) -> float:
    """Bootstrap standard error of eps from binomial resampling of each point."""
    rng = np.random.default_rng([seed, 0xDECA])
    errors = np.clip(np.asarray(errors, float), 0, 1)
    shots = np.broadcast_to(np.asarray(shots), errors.shape)
    eps = []
    for _ in range(n):
        e = rng.binomial(shots, errors) / shots
        try:
            fit = fit_exponential_decay(m, e)
        except RuntimeError:
            continue
        if fit.identifiable:
            eps.append(fit.epsilon)
    return float(np.std(eps, ddof=1)) if len(eps) > 1 else math.inf


# -- report -------------------------------------------------------------------

def complex_to_json(a: np.ndarray) -> dict:
    return {"re": np.real(a).tolist(), "im": np.imag(a).tolist()}


def complex_from_json(d: dict) -> np.ndarray:
    return np.asarray(d["re"], float) + 1j * np.asarray(d["im"], float)


def state_report(data: TomographyDataset, label="0", retention: float | None = None) -> dict:
    exp = data.expectations(label)
    rho = reconstruct_state(data, label)
    return {
        "mode": data.mode,
        "input": _label_json(label),
        "expectations": exp,
        "density_matrix": complex_to_json(rho),
        "bell_fidelity": bell_fidelity(exp),
        "state_fidelity": state_fidelity(rho, BELL_STATE),
        "retention": retention,
    }


def process_report(pm: ProcessMap, mode: str, retention: float | None = None) -> dict:
    return {"mode": mode, **pm.to_dict(), "process_fidelity": process_fidelity(pm.choi), "retention": retention}
