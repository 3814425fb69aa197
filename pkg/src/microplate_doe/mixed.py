"""Chip-level linear mixed model: REML variance components, F-tests, means and LSDs.

The covariance is ``V = sum_k theta_k Z_k Z_k' + theta_e I`` with one
indicator matrix ``Z_k`` per random grouping.  Everything is computed with
dense linear algebra, which is fine for a few thousand observations.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from itertools import combinations
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy import linalg, stats

from .construction import RunTable
from .effects import LETTERS
from .errors import DegenerateData, DesignError, NonConvergence, UnknownTerm

RANDOM_TERMS = ("week", "plate", "tube", "column", "row")
SYMBOLS = {
    "week": "delta",
    "plate": "gamma",
    "tube": "lambda",
    "column": "phi",
    "row": "rho",
    "residual": "epsilon",
}
CHIP_HEADER = ["week", "plate", "row", "column", "tube"]


# ------------------------------------------------------------------ data


@dataclass
class ChipDataset:
    """One record per chip; ``response`` is NaN for a missing chip."""

    factors: str
    week: np.ndarray
    plate: np.ndarray
    row: np.ndarray
    column: np.ndarray
    tube: np.ndarray
    levels: np.ndarray
    response: np.ndarray

    def __len__(self) -> int:
        return len(self.week)

    @property
    def n_missing(self) -> int:
        return int(np.isnan(self.response).sum())

    def observed(self) -> "ChipDataset":
        keep = ~np.isnan(self.response)
        return self.subset(keep)

    def subset(self, keep: np.ndarray) -> "ChipDataset":
        return ChipDataset(
            self.factors,
            *(getattr(self, n)[keep] for n in ("week", "plate", "row", "column", "tube", "levels", "response")),
        )

    def word_values(self, label: str) -> np.ndarray:
        out = np.ones(len(self), dtype=float)
        for ch in label:
            if ch not in self.factors:
                raise UnknownTerm(f"factor {ch!r} is not in the dataset")
            out = out * self.levels[:, self.factors.index(ch)]
        return out

    def groups(self, term: str) -> np.ndarray:
        """Integer group key of every chip for a random term."""
        if term == "week":
            keys = self.week
        elif term == "plate":
            keys = self.plate
        elif term == "tube":
            keys = self.tube
        elif term == "column":
            keys = self.plate * 1000 + self.column
        elif term == "row":
            keys = self.plate * 1000 + self.row
        else:
            raise UnknownTerm(f"unknown random term {term!r}")
        return np.unique(keys, return_inverse=True)[1]

    def records(self) -> list[dict]:
        out = []
        for i in range(len(self)):
            y = self.response[i]
            out.append(
                dict(
                    week=int(self.week[i]),
                    plate=int(self.plate[i]),
                    row=int(self.row[i]),
                    column=int(self.column[i]),
                    tube=int(self.tube[i]),
                    response=None if np.isnan(y) else float(y),
                )
            )
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CHIP_HEADER + list(self.factors) + ["response"])
        for i in range(len(self)):
            y = self.response[i]
            w.writerow(
                [self.week[i], self.plate[i], self.row[i], self.column[i], self.tube[i]]
                + [int(v) for v in self.levels[i]]
                + ["" if np.isnan(y) else f"{y:.6f}"]
            )
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ChipDataset":
        reader = csv.reader(io.StringIO(text))
        header = [h.strip() for h in next(reader)]
        lower = [h.lower() for h in header]
        missing = [h for h in CHIP_HEADER + ["response"] if h not in lower]
        if missing:
            raise DesignError(f"chip data lacks column(s): {', '.join(missing)}")
        factors = "".join(h for h in lower if len(h) == 1 and h in LETTERS)
        idx = {h: lower.index(h) for h in lower}
        rows = [r for r in reader if r]
        ints = {h: np.array([int(r[idx[h]]) for r in rows], dtype=np.int64) for h in CHIP_HEADER}
        levels = np.array([[int(float(r[idx[f]])) for f in factors] for r in rows], dtype=np.int64)
        resp = np.array(
            [float(r[idx["response"]]) if r[idx["response"]].strip() not in ("", "NA", "nan") else np.nan for r in rows]
        )
        return cls(factors, ints["week"], ints["plate"], ints["row"], ints["column"], ints["tube"], levels.reshape(len(rows), len(factors)), resp)


def row_pseudo_words(n_rows: int) -> list[tuple[int, ...]]:
    """Bit subsets defining q1..q(n_rows-1): singletons, then pairs, ..."""
    b = n_rows.bit_length() - 1
    if n_rows < 2 or 1 << b != n_rows:
        raise DesignError(f"row pseudo-factors need a power-of-two row count, got {n_rows}")
    return [c for r in range(1, b + 1) for c in combinations(range(b), r)]


def row_pseudo_values(rows: np.ndarray, n_rows: int) -> np.ndarray:
    b = n_rows.bit_length() - 1
    # bit i of (row - 1), most significant first, as ±1
    bits = np.column_stack([np.where((rows - 1) >> (b - 1 - i) & 1, 1.0, -1.0) for i in range(b)])
    return np.column_stack([np.prod(bits[:, list(c)], axis=1) for c in row_pseudo_words(n_rows)])


# ------------------------------------------------------------------ model


@dataclass(frozen=True)
class MixedModelSpec:
    """Fixed terms are words over factor letters; ``column_words`` are the
    column-position pseudo-factors written as letter words."""

    treatment_terms: tuple[str, ...] = ("a", "c", "d", "g", "h", "ah", "cd", "gh")
    column_words: tuple[str, ...] = ()
    n_rows: int = 8
    row_effects: bool = True
    random_terms: tuple[str, ...] = RANDOM_TERMS

    @property
    def term_names(self) -> list[str]:
        names = list(self.treatment_terms)
        if self.column_words:
            names.append("column")
        if self.row_effects:
            names.append("row")
        return names


@dataclass
class ModelMatrix:
    X: np.ndarray
    names: list[str]  # column names
    terms: dict[str, list[int]]  # term -> column indices
    dropped: list[str]


def build_model_matrix(spec: MixedModelSpec, data: ChipDataset) -> ModelMatrix:
    cols = [np.ones(len(data))]
    names = ["intercept"]
    terms: dict[str, list[int]] = {"intercept": [0]}
    for t in spec.treatment_terms:
        terms[t] = [len(cols)]
        cols.append(data.word_values(t))
        names.append(t)
    if spec.column_words:
        terms["column"] = []
        for i, w in enumerate(spec.column_words, 1):
            terms["column"].append(len(cols))
            cols.append(data.word_values(w))
            names.append(f"p{i}")
    if spec.row_effects:
        terms["row"] = []
        q = row_pseudo_values(data.row, spec.n_rows)
        for i in range(q.shape[1]):
            terms["row"].append(len(cols))
            cols.append(q[:, i])
            names.append(f"q{i + 1}")
    X = np.column_stack(cols)
    # keep the leading columns that raise the rank
    keep, dropped = [], []
    for j in range(X.shape[1]):
        trial = keep + [j]
        if np.linalg.matrix_rank(X[:, trial]) == len(trial):
            keep.append(j)
        else:
            dropped.append(names[j])
    remap = {old: new for new, old in enumerate(keep)}
    terms = {t: [remap[j] for j in js if j in remap] for t, js in terms.items()}
    return ModelMatrix(X[:, keep], [names[j] for j in keep], terms, dropped)


def indicator(groups: np.ndarray) -> np.ndarray:
    Z = np.zeros((len(groups), groups.max() + 1))
    Z[np.arange(len(groups)), groups] = 1.0
    return Z


def _residual_projector(X: np.ndarray) -> np.ndarray:
    Q, _ = np.linalg.qr(X)
    return np.eye(len(X)) - Q @ Q.T


def detect_estimability(
    spec: MixedModelSpec, data: ChipDataset, tol: float = 1e-9
) -> dict[str, bool]:
    """Which variance components can be estimated after removing fixed effects.

    A component is lost when its grouping lies in the fixed-effect column
    space, or when its projected covariance is a linear combination of the
    components already kept (residual first, then the listed order).
    """
    data = data.observed()
    mm = build_model_matrix(spec, data)
    M = _residual_projector(mm.X)
    flags: dict[str, bool] = {}
    kept: list[np.ndarray] = [M.ravel()]
    basis = np.array(kept)
    for t in spec.random_terms:
        Z = indicator(data.groups(t))
        MZ = M @ Z
        if Z.shape[1] < 2 or np.linalg.norm(MZ) < tol * math.sqrt(len(data)):
            flags[t] = False
            continue
        v = (MZ @ MZ.T).ravel()
        trial = np.vstack([basis, v])
        s = np.linalg.svd(trial, compute_uv=False)
        if s[-1] <= tol * s[0]:
            flags[t] = False
            continue
        basis = trial
        flags[t] = True
    flags["residual"] = True
    return flags


# ------------------------------------------------------------------ REML


@dataclass
class VarianceComponent:
    name: str
    symbol: str
    estimable: bool
    estimate: Optional[float] = None
    se: Optional[float] = None


@dataclass
class FTest:
    term: str
    num_df: int
    den_df: Optional[float]
    F: Optional[float]
    p_value: Optional[float]
    testable: bool = True


@dataclass
class MixedModelFit:
    spec: MixedModelSpec
    data: ChipDataset
    mm: ModelMatrix
    components: list[VarianceComponent]
    theta: np.ndarray  # estimable components, residual last
    beta: np.ndarray
    cov_beta: np.ndarray
    dC: list[np.ndarray]  # derivative of cov_beta with respect to each theta
    theta_cov: np.ndarray  # inverse expected information
    loglik: float
    history: list[float]
    iterations: int
    non_testable: set[str]

    def component(self, name: str) -> VarianceComponent:
        for c in self.components:
            if c.name == name:
                return c
        raise KeyError(name)

    def fixed(self, name: str) -> float:
        return float(self.beta[self.mm.names.index(name)])

    def satterthwaite(self, L: np.ndarray) -> tuple[float, float]:
        """(variance, df) of a single contrast ``L @ beta``."""
        var = float(L @ self.cov_beta @ L)
        g = np.array([L @ d @ L for d in self.dC])
        denom = float(g @ self.theta_cov @ g)
        if denom <= 0:
            return var, math.inf
        return var, 2 * var * var / denom

    def contrast_testable(self, L: np.ndarray, tol: float = 1e-10) -> bool:
        bad = [self.mm.names.index(n) for n in self.non_testable if n in self.mm.names]
        return all(abs(L[j]) <= tol for j in bad)


def _reml_parts(theta, Zs, X, y, need_info=True):
    N = len(y)
    V = theta[-1] * np.eye(N)
    for t, Z in zip(theta[:-1], Zs):
        V += t * (Z @ Z.T)
    cf = linalg.cho_factor(V, lower=True)
    Vi = linalg.cho_solve(cf, np.eye(N))
    ViX = Vi @ X
    XViX = X.T @ ViX
    cfx = linalg.cho_factor(XViX, lower=True)
    C = linalg.cho_solve(cfx, np.eye(X.shape[1]))
    P = Vi - ViX @ C @ ViX.T
    Py = P @ y
    logdet = 2 * np.log(np.diag(cf[0])).sum() + 2 * np.log(np.diag(cfx[0])).sum()
    ll = -0.5 * (logdet + y @ Py)
    out = dict(ll=float(ll), P=P, Py=Py, C=C, ViX=ViX, V=V)
    if not need_info:
        return out
    K = len(theta)
    PZ = [P @ Z for Z in Zs] + [P]
    ZtPy = [Z.T @ Py for Z in Zs] + [Py]
    grad = np.empty(K)
    ZPZ = {}
    for k in range(K):
        Zk = Zs[k] if k < K - 1 else None
        tr = np.sum(Zk * PZ[k]) if Zk is not None else np.trace(P)
        grad[k] = -0.5 * tr + 0.5 * ZtPy[k] @ ZtPy[k]
        for l in range(k, K):
            M = Zk.T @ PZ[l] if Zk is not None else PZ[l]
            ZPZ[k, l] = M
    info = np.empty((K, K))
    obs = np.empty((K, K))
    for (k, l), M in ZPZ.items():
        e = 0.5 * np.sum(M * M)
        o = -e + ZtPy[k] @ M @ ZtPy[l]
        info[k, l] = info[l, k] = e
        obs[k, l] = obs[l, k] = o
    out.update(grad=grad, info=info, obs=obs)
    return out


def reml_fit(
    spec: MixedModelSpec,
    data: ChipDataset,
    tol: float = 1e-8,
    max_iter: int = 500,
) -> MixedModelFit:
    """Fit by REML with projected Fisher scoring and step halving.

    Variance components live on the nonnegative orthant; a component sitting
    on zero with a nonpositive gradient is held there.  Converged when the
    relative change of the REML criterion is below ``tol`` and the largest
    relative parameter change is below ``sqrt(tol)``.
    """
    flags = detect_estimability(spec, data)
    obs = data.observed()
    mm = build_model_matrix(spec, obs)
    X, y = mm.X, obs.response.astype(float)
    N, p = X.shape
    if N - p < 1:
        raise DegenerateData(f"{N} observations leave no residual df for {p} fixed columns")
    est_terms = [t for t in spec.random_terms if flags[t]]
    Zs = [indicator(obs.groups(t)) for t in est_terms]
    K = len(Zs) + 1

    M = _residual_projector(X)
    r = M @ y
    s2 = float(r @ r) / (N - p)
    scale = float(y @ y) / N if N else 1.0
    history: list[float] = []
    if s2 <= 1e-24 * max(scale, 1e-300):
        theta = np.zeros(K)
        beta = np.linalg.lstsq(X, y, rcond=None)[0]
        comps = _components(spec, flags, est_terms, theta, np.zeros(K))
        zero = np.zeros((p, p))
        return MixedModelFit(
            spec, obs, mm, comps, theta, beta, zero, [zero] * K, np.zeros((K, K)),
            math.inf, history, 0, _non_testable(spec, flags, obs, mm),
        )

    floor = 1e-10 * s2
    theta = np.full(K, 0.1 * s2)
    theta[-1] = s2
    parts = _reml_parts(theta, Zs, X, y)
    history.append(parts["ll"])
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g, F = parts["grad"], parts["info"]
        free = np.array([theta[k] > floor or g[k] > 0 for k in range(K)])
        free[-1] = True
        step = np.zeros(K)
        idx = np.flatnonzero(free)
        step[idx] = np.linalg.lstsq(F[np.ix_(idx, idx)], g[idx], rcond=None)[0]
        lam = 1.0
        accepted = False
        for _ in range(40):
            cand = np.maximum(theta + lam * step, 0.0)
            cand[-1] = max(cand[-1], floor)
            try:
                new = _reml_parts(cand, Zs, X, y)
            except linalg.LinAlgError:
                lam /= 2
                continue
            if new["ll"] >= parts["ll"] - 1e-12 * abs(parts["ll"]):
                accepted = True
                break
            lam /= 2
        if not accepted:
            converged = True
            break
        dll = abs(new["ll"] - parts["ll"])
        dth = np.max(np.abs(cand - theta) / np.maximum(np.abs(cand), 1e-8 * s2))
        theta, parts = cand, new
        history.append(parts["ll"])
        if dll <= tol * (1 + abs(parts["ll"])) and dth <= math.sqrt(tol):
            converged = True
            break
    if not converged:
        raise NonConvergence(
            f"REML did not converge in {max_iter} iterations",
            dict(theta=theta.tolist(), loglik=parts["ll"], history=history[-10:]),
        )

    C = parts["C"]
    beta = C @ (parts["ViX"].T @ y)
    # derivative of (X'V^-1X)^-1 with respect to theta_k
    W = parts["ViX"]
    dC = []
    for k in range(K):
        WZ = W.T @ Zs[k] if k < K - 1 else W.T
        dC.append(C @ (WZ @ WZ.T) @ C)
    theta_cov = np.linalg.pinv(parts["info"])
    obs_cov = np.linalg.pinv(parts["obs"])
    se = np.sqrt(np.clip(np.diag(obs_cov), 0, None))
    comps = _components(spec, flags, est_terms, theta, se)
    return MixedModelFit(
        spec, obs, mm, comps, theta, beta, C, dC, theta_cov, parts["ll"], history, it,
        _non_testable(spec, flags, obs, mm),
    )


def _components(spec, flags, est_terms, theta, se):
    comps = []
    for t in list(spec.random_terms) + ["residual"]:
        if flags[t]:
            k = est_terms.index(t) if t != "residual" else len(est_terms)
            comps.append(VarianceComponent(t, SYMBOLS[t], True, float(theta[k]), float(se[k])))
        else:
            comps.append(VarianceComponent(t, SYMBOLS[t], False))
    return comps


def _non_testable(spec, flags, data, mm) -> set[str]:
    """Fixed columns confounded with a grouping whose variance is not estimable."""
    out = set()
    for t in spec.random_terms:
        if flags[t]:
            continue
        Z = indicator(data.groups(t))
        Q, _ = np.linalg.qr(Z)
        for j, name in enumerate(mm.names):
            if name == "intercept":
                continue
            x = mm.X[:, j]
            if np.linalg.norm(x - Q @ (Q.T @ x)) <= 1e-9 * np.linalg.norm(x):
                out.add(name)
    return out


# ------------------------------------------------------------------ tests


def f_tests(fit: MixedModelFit, terms: Optional[Sequence[str]] = None) -> list[FTest]:
    """Wald F-tests with Satterthwaite (multi-df: Fai-Cornelius) denominators."""
    terms = list(terms) if terms is not None else fit.spec.term_names
    out = []
    for t in terms:
        if t not in fit.mm.terms:
            raise UnknownTerm(f"term {t!r} is not in the model")
        cols = fit.mm.terms[t]
        q = len(cols)
        if q == 0 or any(fit.mm.names[j] in fit.non_testable for j in cols):
            out.append(FTest(t, q, None, None, None, testable=False))
            continue
        L = np.zeros((q, len(fit.beta)))
        L[np.arange(q), cols] = 1.0
        b = L @ fit.beta
        LCL = L @ fit.cov_beta @ L.T
        if not np.any(LCL):
            # noise-free fit: any nonzero estimate is exact
            hit = bool(np.any(np.abs(b) > 1e-12 * (1 + np.abs(fit.beta).max())))
            out.append(FTest(t, q, math.inf, math.inf if hit else 0.0, 0.0 if hit else 1.0))
            continue
        F = float(b @ np.linalg.solve(LCL, b)) / q
        evals, evecs = np.linalg.eigh(LCL)
        nus = []
        for m in range(q):
            lm = evecs[:, m] @ L
            nus.append(fit.satterthwaite(lm)[1])
        if q == 1:
            den = nus[0]
        else:
            E = sum(n / (n - 2) for n in nus if n > 2)
            den = 2 * E / (E - q) if E > q else math.inf
        pval = float(stats.f.sf(F, q, den)) if math.isfinite(den) else float(stats.chi2.sf(F * q, q))
        out.append(FTest(t, q, den, F, min(max(pval, 0.0), 1.0)))
    return out


@dataclass
class MeansTable:
    term: str
    levels: list[str]
    means: np.ndarray
    pair_lsd: dict[tuple[int, int], Optional[float]]
    lsd: Optional[float]
    alpha: float

    @property
    def lsd_available(self) -> bool:
        return self.lsd is not None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["term", "level", "mean", "lsd"])
        lsd = "unavailable" if self.lsd is None else f"{self.lsd:.6g}"
        for lv, m in zip(self.levels, self.means):
            w.writerow([self.term, lv, f"{m:.6g}", lsd])
        return buf.getvalue()


def _sign(v: int) -> str:
    return "+" if v > 0 else "-"


def fitted_means_and_lsd(fit: MixedModelFit, term: str, alpha: float = 0.10) -> MeansTable:
    """Model-based means per level and the least significant difference.

    Terms not involved in the grouping are held at their centre (zero).  The
    reported LSD is the mean over level pairs whose difference is testable;
    it is unavailable when no pair is.
    """
    names = fit.mm.names
    p = len(names)
    if term in ("column", "row"):
        if term not in fit.mm.terms:
            raise UnknownTerm(f"term {term!r} is not in the model")
        cols = fit.mm.terms[term]
        key = fit.data.column if term == "column" else fit.data.row
        levels = sorted(set(int(v) for v in key))
        rows = []
        for lv in levels:
            i = int(np.flatnonzero(key == lv)[0])
            L = np.zeros(p)
            L[0] = 1.0
            L[cols] = fit.mm.X[i, cols]
            rows.append(L)
        labels = [str(lv) for lv in levels]
    else:
        letters = term
        if term not in fit.mm.terms and not all(ch in fit.mm.terms for ch in letters):
            raise UnknownTerm(f"term {term!r} is not in the model")
        rows, labels = [], []
        for n in range(1 << len(letters)):
            signs = {ch: (1 if n >> (len(letters) - 1 - i) & 1 else -1) for i, ch in enumerate(letters)}
            L = np.zeros(p)
            L[0] = 1.0
            for j, name in enumerate(names):
                if name in fit.spec.treatment_terms and set(name) <= set(letters):
                    L[j] = np.prod([signs[ch] for ch in name])
            rows.append(L)
            labels.append("".join(f"{ch}{_sign(signs[ch])}" for ch in letters))
    Ls = np.array(rows)
    means = Ls @ fit.beta
    pair_lsd: dict[tuple[int, int], Optional[float]] = {}
    for i, j in combinations(range(len(Ls)), 2):
        d = Ls[i] - Ls[j]
        if not fit.contrast_testable(d):
            pair_lsd[i, j] = None
            continue
        var, nu = fit.satterthwaite(d)
        t = stats.t.ppf(1 - alpha / 2, nu) if math.isfinite(nu) else stats.norm.ppf(1 - alpha / 2)
        pair_lsd[i, j] = float(t * math.sqrt(max(var, 0.0)))
    avail = [v for v in pair_lsd.values() if v is not None]
    lsd = float(np.mean(avail)) if avail else None
    return MeansTable(term, labels, means, pair_lsd, lsd, alpha)


# ------------------------------------------------------------ simulation


def chips_from_run_table(rt: RunTable, n_rows: int = 8) -> ChipDataset:
    idx = np.repeat(np.arange(rt.n_runs), n_rows)
    rows = np.tile(np.arange(1, n_rows + 1), rt.n_runs)
    return ChipDataset(
        rt.factors,
        rt.week[idx],
        rt.plate[idx],
        rows,
        rt.column[idx],
        rt.tube[idx],
        rt.levels[idx],
        np.zeros(len(idx)),
    )


def simulate_response(
    rt: RunTable,
    beta: Mapping[str, float],
    components: Mapping[str, float],
    seed: int = 0,
    intercept: float = 0.0,
    column_words: Sequence[str] = (),
    n_rows: int = 8,
    missing: int = 0,
) -> ChipDataset:
    """Draw chip responses from the mixed model.

    ``beta`` maps treatment words, ``p1``.. (column pseudo-factors, via
    ``column_words``) and ``q1``.. (row pseudo-factors) to coefficients per
    unit of the ±1 coding.  ``components`` maps random term names and
    ``residual`` to variances.  ``missing`` chips are blanked at random.
    """
    for k, v in components.items():
        if v < 0:
            raise DesignError(f"variance of {k} must be nonnegative")
        if k not in RANDOM_TERMS and k != "residual":
            raise UnknownTerm(f"unknown random term {k!r}")
    data = chips_from_run_table(rt, n_rows)
    rng = np.random.default_rng(seed)
    q = row_pseudo_values(data.row, n_rows)
    y = np.full(len(data), float(intercept))
    for name, b in beta.items():
        if name.startswith("p") and name[1:].isdigit():
            x = data.word_values(column_words[int(name[1:]) - 1])
        elif name.startswith("q") and name[1:].isdigit():
            x = q[:, int(name[1:]) - 1]
        else:
            x = data.word_values(name)
        y += b * x
    for t in RANDOM_TERMS:
        g = data.groups(t)
        draws = rng.standard_normal(g.max() + 1) * math.sqrt(components.get(t, 0.0))
        y += draws[g]
    y += rng.standard_normal(len(data)) * math.sqrt(components.get("residual", 0.0))
    if missing:
        if missing > len(data):
            raise DesignError(f"cannot blank {missing} of {len(data)} chips")
        y[rng.choice(len(data), size=missing, replace=False)] = np.nan
    data.response = y
    return data


# ------------------------------------------------------------ reports


def variance_csv(fit: MixedModelFit) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["component", "symbol", "estimable", "estimate", "se"])
    for c in fit.components:
        if c.estimable:
            w.writerow([c.name, c.symbol, 1, f"{c.estimate:.6g}", f"{c.se:.6g}"])
        else:
            w.writerow([c.name, c.symbol, 0, "", ""])
    return buf.getvalue()


def ftest_csv(tests: Sequence[FTest]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["term", "num_df", "den_df", "F", "p_value", "testable"])
    for t in tests:
        if t.testable:
            w.writerow([t.term, t.num_df, f"{t.den_df:.4g}", f"{t.F:.6g}", f"{t.p_value:.4g}", 1])
        else:
            w.writerow([t.term, t.num_df, "", "", "", 0])
    return buf.getvalue()


def fixed_csv(fit: MixedModelFit) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["column", "estimate", "se"])
    for j, n in enumerate(fit.mm.names):
        w.writerow([n, f"{fit.beta[j]:.6g}", f"{math.sqrt(max(fit.cov_beta[j, j], 0)):.6g}"])
    return buf.getvalue()
