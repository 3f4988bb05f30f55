"""Theory-versus-simulation tables, passage summaries and the staged runner.

A run writes into one directory:

* ``ruin.jsonl``        Monte Carlo estimates, one per (gamma, u)
* ``theory.jsonl``      asymptotic evaluations, one per (gamma, u)
* ``comparison.csv``    the joined table with ratio intervals
* ``ratio_gamma<g>.dat`` and ``phat_gamma<g>.dat``  two-column plot data
* ``constants.jsonl``   constants with provenance (estimated constants only)
* ``passages.jsonl``, ``passage_summary.json``, ``passage_hist.dat``  when ``[passages]`` is set
* ``manifest.json``     file hashes, body hash and run metadata

Stage markers in ``.done/`` let an interrupted run resume; a marker only
counts when it records the same configuration hash.  The body hash covers
every result file with the ``timestamp`` fields removed, so identical
configurations reproduce it exactly.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .asymptotics import AsymptoticReport, TheoryConstants, psi_finite, psi_infinite
from .config import ConfigError, ExperimentConfig, build_model, dump_config
from .constants_lab import (
    ConstantValue,
    closed_form_constant,
    pickands_ladder,
    piterbarg_ladder,
    resolve_constant_specs,
    resolve_finite_constant_specs,
)
from .mc_estimators import (
    PassageSampleSet,
    RuinEstimate,
    estimate_ruin_grid,
    estimate_ruin_infinite,
    ks_statistic,
    sample_conditional_passages,
)
from .variance_models import BKind, VarianceModel

__all__ = [
    "ComparisonRow",
    "PassageSummary",
    "BudgetExhausted",
    "compare",
    "report_passage",
    "resolve_constants",
    "run",
    "body_hash",
    "STAGES",
]

STAGES = ("constants", "ruin", "theory", "compare", "passages")
_QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


class BudgetExhausted(RuntimeError):
    """Conditional sampling ran out of paths before reaching its target."""


# ---------------------------------------------------------------------------
# comparison


@dataclass
class ComparisonRow:
    u: float
    gamma: float
    T: float
    p_hat: float
    ci_lo: float
    ci_hi: float
    ci_method: str
    n_paths: int
    n_hits: int
    seed: int
    psi_approx: float
    log_psi_approx: float
    ratio: float
    ratio_lo: float
    ratio_hi: float
    regime: str
    constants: str
    trend: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d["T"] = "inf" if math.isinf(self.T) else self.T
        return d


def _key(u, gamma, T):
    return (round(float(u), 12), round(float(gamma), 12), "inf" if math.isinf(T) else round(float(T), 12))


def _scaled(x: float, log_psi: float) -> float:
    if x <= 0:
        return 0.0
    z = math.log(x) - log_psi
    return math.inf if z > 709.0 else math.exp(z)


def _constants_text(rep: AsymptoticReport) -> str:
    parts = []
    for name, info in sorted((rep.constants or {}).items()):
        if info:
            parts.append(f"{name}={info['value']:.6g}({info.get('source', 'literal')})")
    return "; ".join(parts) if parts else "none"


def compare(mc: Sequence[RuinEstimate], theory: Sequence[AsymptoticReport]) -> list[ComparisonRow]:
    """Join estimates and asymptotics on ``(u, gamma, T)``; flag non-monotone ratio trends."""
    by_key = {}
    for rep in theory:
        T = math.inf if rep.T is None else rep.T
        by_key[_key(rep.u, rep.gamma, T)] = rep
    rows = []
    for est in mc:
        k = _key(est.u, est.gamma, est.T)
        if k not in by_key:
            raise KeyError(f"no asymptotic evaluation for u={est.u}, gamma={est.gamma}, T={est.T}")
        rep = by_key[k]
        lo, hi = est.ci95
        lp = rep.log_psi_approx
        rows.append(ComparisonRow(est.u, est.gamma, est.T, est.p_hat, lo, hi, est.ci_method, est.n_paths, est.n_hits,
                                  est.seed, rep.psi_approx, lp, _scaled(est.p_hat, lp), _scaled(lo, lp),
                                  _scaled(hi, lp), rep.regime, _constants_text(rep)))
    if len(rows) != len(mc) or len({_key(r.u, r.gamma, r.T) for r in rows}) != len(rows):
        raise KeyError("duplicate (u, gamma, T) keys")
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.gamma, r.T), []).append(r)
    for grp in groups.values():
        grp.sort(key=lambda r: r.u)
        d = np.diff([r.ratio for r in grp])
        if len(d) and np.any(d > 0) and np.any(d < 0):
            for r in grp:
                r.trend = "non-monotone"
    return rows


# ---------------------------------------------------------------------------
# passages


@dataclass
class PassageSummary:
    reference: str
    n: int
    ks: float
    quantiles: list  # (level, empirical, reference)
    hist_edges: list
    hist_counts: list
    hist_density: list
    reference_density: list
    flags: list = field(default_factory=list)

    def table(self) -> str:
        """Quantile table with the reference quantiles in the header."""
        head = "level    " + "  ".join(f"{q:>8.0%}" for q, _, _ in self.quantiles)
        ref = f"{self.reference:<9}" + "  ".join(f"{r:>8.4f}" for _, _, r in self.quantiles)
        emp = "sample   " + "  ".join(f"{e:>8.4f}" for _, e, _ in self.quantiles)
        return "\n".join([head, ref, emp])

    def to_dict(self) -> dict:
        return asdict(self)


def _reference(name: str):
    key = name.lower()
    if key in ("stdnormal", "normal"):
        return "StdNormal", stats.norm
    if key in ("exp1", "exp"):
        return "Exp1", stats.expon
    raise ValueError(f"unknown reference {name!r}")


def report_passage(samples, reference: str, bins: int = 30) -> PassageSummary:
    """KS distance, quantile table and histogram of scaled passage samples."""
    x = np.asarray(samples.scaled_tau1 if isinstance(samples, PassageSampleSet) else samples, dtype=float)
    if x.size == 0:
        raise ValueError("no passage samples")
    name, dist = _reference(reference)
    flags = []
    ks = ks_statistic(x, name) if x.size >= 20 else float(stats.kstest(x, dist.cdf).statistic)
    if x.size < 20:
        flags.append(f"only {x.size} samples")
    if np.all(x == x[0]):
        flags.append("degenerate: all samples equal")
    if ks >= 0.5:
        flags.append(f"KS {ks:.3f} >= 0.5")
    qs = [(q, float(np.quantile(x, q)), float(dist.ppf(q))) for q in _QUANTILES]
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(x, bins=bins, range=(lo, hi))
    density = counts / (x.size * np.diff(edges))
    centres = 0.5 * (edges[:-1] + edges[1:])
    return PassageSummary(name, int(x.size), ks, qs, edges.tolist(), counts.tolist(), density.tolist(),
                          dist.pdf(centres).tolist(), flags)


# ---------------------------------------------------------------------------
# constants


def _needs(cfg: ExperimentConfig, model: VarianceModel, gamma: float):
    """Processes whose constants the theory needs for one gamma (``None`` when none)."""
    if cfg.infinite:
        return resolve_constant_specs(gamma, model, cfg.c)
    if model.b_at_zero.kind is BKind.SUPERLINEAR:
        return resolve_finite_constant_specs(gamma, model)
    return None


def resolve_constants(cfg: ExperimentConfig, model: VarianceModel, workers: int = 1,
                      estimate: bool = True) -> tuple[dict, list]:
    """``{gamma: TheoryConstants}`` plus the constant estimates that were run.

    With ``estimate=False`` estimated constants are only checked for
    feasibility (used by validation).
    """
    src = cfg.constants["source"]
    out, runs = {}, []
    for i, g in enumerate(cfg.gammas):
        need = _needs(cfg, model, g)
        if need is None:
            out[g] = TheoryConstants()
            continue
        z_h, z_p, a = need
        if src == "closed_form":
            h = closed_form_constant(z_h, "pickands")
            try:
                p = closed_form_constant(z_p, "piterbarg", a)
            except ValueError as exc:
                raise ConfigError(str(exc), "constants.source") from exc
            if h is None or p is None:
                raise ConfigError(f"closed-form Pickands and Piterbarg constants are known only for fBm with "
                                  f"alpha in {{1/2, 1}}; {z_p.label} needs source 'estimate' or 'literal'",
                                  "constants.source")
            out[g] = TheoryConstants(ConstantValue(h, "closed_form", "pickands", z_h),
                                     ConstantValue(p, "closed_form", "piterbarg", z_p, a))
        elif src == "literal":
            if "pickands" not in cfg.constants or "piterbarg" not in cfg.constants:
                raise ConfigError("literal source needs both 'pickands' and 'piterbarg'", "constants")
            plist = cfg.constants["piterbarg"]
            p = plist[i] if len(plist) > 1 else plist[0]
            note = cfg.constants["note"]
            out[g] = TheoryConstants(ConstantValue(cfg.constants["pickands"], "literal", "pickands", z_h, note=note),
                                     ConstantValue(p, "literal", "piterbarg", z_p, a, note=note))
        elif estimate:
            n, seed, S1 = cfg.constants["n"], cfg.constants["seed"], cfg.constants["S1"]
            eh = pickands_ladder(z_h, n, seed, workers=workers)
            ep = piterbarg_ladder(z_p, a, S1 * z_p.natural_scale(), n, seed, workers=workers)
            runs += [eh, ep]
            out[g] = TheoryConstants(
                ConstantValue(eh.value, "estimate", "pickands", z_h, note=f"n={n}, seed={seed}, stderr={eh.stderr:.3g}"),
                ConstantValue(ep.value, "estimate", "piterbarg", z_p, a, note=f"n={n}, seed={seed}, stderr={ep.stderr:.3g}"))
        else:
            out[g] = None
    return out, runs


# ---------------------------------------------------------------------------
# staged runner


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, allow_nan=True)


def _write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _jsonl(records: Sequence[dict], timestamp: str, code_version: str) -> str:
    return "".join(_dumps({**r, "timestamp": timestamp, "code_version": code_version}) + "\n" for r in records)


def _canonical(path: Path) -> bytes:
    """File bytes with ``timestamp`` fields removed from JSON content."""
    data = path.read_bytes()
    if path.suffix == ".jsonl":
        lines = []
        for line in data.decode("utf-8").splitlines():
            if line.strip():
                rec = json.loads(line)
                rec.pop("timestamp", None)
                lines.append(_dumps(rec))
        return "\n".join(lines).encode("utf-8")
    if path.suffix == ".json":
        rec = json.loads(data)
        if isinstance(rec, dict):
            rec.pop("timestamp", None)
        return _dumps(rec).encode("utf-8")
    return data


def body_hash(directory: str | Path) -> tuple[str, dict]:
    """Hash over all result files (manifest, markers and plots excluded)."""
    d = Path(directory)
    files = {}
    for p in sorted(d.iterdir()):
        if p.is_file() and p.name != "manifest.json" and p.suffix != ".svg" and not p.name.endswith(".tmp"):
            files[p.name] = hashlib.sha256(_canonical(p)).hexdigest()
    h = hashlib.sha256("".join(f"{k}:{v}\n" for k, v in files.items()).encode()).hexdigest()
    return h, files


def _fmt(x: float) -> str:
    return repr(float(x))


def _dat(rows: Sequence[tuple], header: str) -> str:
    return f"# {header}\n" + "".join(" ".join(_fmt(v) for v in r) + "\n" for r in rows)


class _Runner:
    def __init__(self, cfg: ExperimentConfig, out: Path, workers: int):
        self.cfg, self.out, self.workers = cfg, out, workers
        self.model = build_model(cfg.model)
        self.timestamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        from . import __version__

        self.version = __version__
        self.config_hash = hashlib.sha256(dump_config(cfg).encode()).hexdigest()
        self.done = out / ".done"
        self.notes: list[str] = []
        self._constants = None

    # markers
    def _is_done(self, stage: str) -> bool:
        m = self.done / stage
        return m.exists() and m.read_text().strip() == self.config_hash

    def _mark(self, stage: str) -> None:
        self.done.mkdir(exist_ok=True)
        _write(self.done / stage, self.config_hash + "\n")

    def _records(self, name: str) -> list[dict]:
        p = self.out / name
        return [json.loads(l) for l in p.read_text().splitlines() if l.strip()] if p.exists() else []

    def constants(self) -> dict:
        if self._constants is None:
            done = self._is_done("constants")
            if done and self.cfg.constants["source"] == "estimate":
                self._constants = self._constants_from_file()
            else:
                self._constants, runs = resolve_constants(self.cfg, self.model, self.workers)
                if runs:
                    recs = [{"kind": "constant_estimate", "model_label": self.model.label,
                             "params": self.model.spec(), "seed": e.seed, **e.to_dict()} for e in runs]
                    _write(self.out / "constants.jsonl", _jsonl(recs, self.timestamp, self.version))
                self._mark("constants")
        return self._constants

    def _constants_from_file(self) -> dict:
        recs = self._records("constants.jsonl")
        out = {}
        for i, g in enumerate(self.cfg.gammas):
            z_h, z_p, a = _needs(self.cfg, self.model, g)
            eh, ep = recs[2 * i], recs[2 * i + 1]
            note = lambda e: f"n={e['n_paths']}, seed={e['seed']}, stderr={e['stderr']:.3g}"
            out[g] = TheoryConstants(ConstantValue(eh["value"], "estimate", "pickands", z_h, note=note(eh)),
                                     ConstantValue(ep["value"], "estimate", "piterbarg", z_p, a, note=note(ep)))
        return out

    def ruin(self) -> list[RuinEstimate]:
        if self._is_done("ruin"):
            return [RuinEstimate.from_dict(r) for r in self._records("ruin.jsonl")]
        cfg = self.cfg
        if cfg.infinite:
            ests = [estimate_ruin_infinite(self.model, cfg.c, g, u, cfg.delta_rel, cfg.n, cfg.seed, cfg.window_k,
                                           workers=self.workers) for g in cfg.gammas for u in cfg.us]
        else:
            ests = estimate_ruin_grid(self.model, cfg.c, cfg.gammas, cfg.us, cfg.horizon, cfg.delta, cfg.n,
                                      cfg.seed, workers=self.workers)
        recs = [{"kind": "ruin", "params": self.model.spec(), **e.to_dict()} for e in ests]
        _write(self.out / "ruin.jsonl", _jsonl(recs, self.timestamp, self.version))
        self._mark("ruin")
        return ests

    def theory(self) -> list[AsymptoticReport]:
        consts = self.constants()
        cfg = self.cfg
        reps = []
        for g in cfg.gammas:
            for u in cfg.us:
                if cfg.infinite:
                    reps.append(psi_infinite(self.model, cfg.c, g, u, consts[g], cfg.scaling))
                else:
                    reps.append(psi_finite(self.model, cfg.c, g, u, cfg.horizon, consts[g], cfg.scaling))
        if not self._is_done("theory"):
            recs = [{"kind": "asymptotic", "params": self.model.spec(), "seed": cfg.seed,
                     **{k: ("inf" if k == "T" and v is None and cfg.infinite else v) for k, v in r.to_dict().items()}}
                    for r in reps]
            _write(self.out / "theory.jsonl", _jsonl(recs, self.timestamp, self.version))
            self._mark("theory")
        return reps

    def compare(self) -> list[ComparisonRow]:
        rows = compare(self.ruin(), self.theory())
        if self._is_done("compare"):
            return rows
        buf = io.StringIO()
        names = list(ComparisonRow.__dataclass_fields__)
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(names)
        for r in rows:
            d = r.to_dict()
            w.writerow([_fmt(d[k]) if isinstance(d[k], float) else d[k] for k in names])
        _write(self.out / "comparison.csv", buf.getvalue())
        for g in self.cfg.gammas:
            sel = sorted((r for r in rows if r.gamma == g), key=lambda r: r.u)
            tag = f"gamma{g:g}"
            _write(self.out / f"ratio_{tag}.dat",
                   _dat([(r.u, r.ratio, r.ratio_lo, r.ratio_hi) for r in sel], "u ratio ratio_lo ratio_hi"))
            _write(self.out / f"phat_{tag}.dat",
                   _dat([(r.u, r.p_hat, r.ci_lo, r.ci_hi, r.psi_approx) for r in sel], "u p_hat ci_lo ci_hi psi_approx"))
        self._mark("compare")
        return rows

    def passages(self) -> PassageSummary | None:
        spec = self.cfg.passages
        if spec is None:
            return None
        cfg = self.cfg
        reference = "StdNormal" if cfg.infinite else "Exp1"
        if self._is_done("passages"):
            return PassageSummary(**json.loads((self.out / "passage_summary.json").read_text())["summary"])
        if "delta" in spec:
            delta = spec["delta"]
        elif cfg.infinite:
            from .mc_estimators import infinite_horizon_window

            delta = infinite_horizon_window(self.model, cfg.c, spec["u"], cfg.delta_rel, cfg.window_k).delta
        else:
            delta = cfg.delta
        ps = sample_conditional_passages(self.model, cfg.c, spec["gamma"], spec["u"], cfg.horizon, delta,
                                         spec["n_target"], cfg.seed, budget=spec["budget"], window_k=cfg.window_k,
                                         workers=self.workers)
        rec = {"params": self.model.spec(), **ps.to_dict()}
        _write(self.out / "passages.jsonl", _jsonl([rec], self.timestamp, self.version))
        if ps.n_conditional == 0:
            raise BudgetExhausted(f"no ruined path within the budget of {spec['budget']} paths")
        summary = report_passage(ps, reference, spec["bins"])
        corr = ps.correlation() if ps.n_conditional > 2 else float("nan")
        _write(self.out / "passage_summary.json",
               _dumps({"summary": summary.to_dict(), "n_paths": ps.n_paths, "seed": ps.seed,
                       "exhausted": ps.exhausted, "tau_correlation": corr, "scaling": ps.scaling}))
        centres = 0.5 * (np.asarray(summary.hist_edges[:-1]) + np.asarray(summary.hist_edges[1:]))
        _write(self.out / "passage_hist.dat",
               _dat(list(zip(centres, summary.hist_density, summary.reference_density)),
                    f"scaled_tau1 density {summary.reference}_density"))
        if ps.exhausted:
            raise BudgetExhausted(f"collected {ps.n_conditional} of {spec['n_target']} ruined paths "
                                  f"within the budget of {spec['budget']} paths")
        self._mark("passages")
        return summary

    def manifest(self) -> dict:
        h, files = body_hash(self.out)
        man = {"body_hash": h, "files": files, "config_hash": self.config_hash, "config": self.cfg.to_dict(),
               "seed": self.cfg.seed, "n": self.cfg.n, "constants_source": self.cfg.constants["source"],
               "model_label": self.model.label, "code_version": self.version, "timestamp": self.timestamp,
               "notes": self.notes}
        _write(self.out / "manifest.json", json.dumps(man, indent=2, sort_keys=True) + "\n")
        return man

    def plots(self) -> None:
        try:
            import matplotlib

            matplotlib.use("Agg")
            import matplotlib.pyplot as plt
        except ImportError:
            self.notes.append("plots skipped: matplotlib is not installed")
            return
        for g in self.cfg.gammas:
            p = self.out / f"ratio_gamma{g:g}.dat"
            if not p.exists():
                continue
            data = np.loadtxt(p, ndmin=2)
            fig, ax = plt.subplots(figsize=(5, 3.5))
            ax.errorbar(data[:, 0], data[:, 1], yerr=[data[:, 1] - data[:, 2], data[:, 3] - data[:, 1]], fmt="o-")
            ax.axhline(1.0, color="grey", lw=0.8)
            ax.set_xlabel("u")
            ax.set_ylabel("p_hat / psi_approx")
            ax.set_title(f"{self.model.label}, gamma={g:g}")
            fig.tight_layout()
            fig.savefig(self.out / f"ratio_gamma{g:g}.svg", metadata={"Date": None})
            plt.close(fig)
        p = self.out / "passage_hist.dat"
        if p.exists():
            data = np.loadtxt(p, ndmin=2)
            fig, ax = plt.subplots(figsize=(5, 3.5))
            ax.bar(data[:, 0], data[:, 1], width=np.diff(data[:, 0]).mean() if len(data) > 1 else 1.0, alpha=0.6)
            ax.plot(data[:, 0], data[:, 2], "k-")
            ax.set_xlabel("scaled passage time")
            fig.tight_layout()
            fig.savefig(self.out / "passage_hist.svg", metadata={"Date": None})
            plt.close(fig)


def run(cfg: ExperimentConfig, out: str | Path | None = None, stages: Sequence[str] = STAGES,
        workers: int = 1) -> dict:
    """Run the requested stages (dependencies included) and write the manifest."""
    directory = Path(out if out is not None else cfg.output_dir)
    directory.mkdir(parents=True, exist_ok=True)
    r = _Runner(cfg, directory, workers)
    for s in stages:
        if s not in STAGES:
            raise ValueError(f"unknown stage {s!r}")
    try:
        if "constants" in stages:
            r.constants()
        if "ruin" in stages:
            r.ruin()
        if "theory" in stages:
            r.theory()
        if "compare" in stages:
            r.compare()
        if "passages" in stages:
            r.passages()
    finally:
        if cfg.plots:
            r.plots()
        man = r.manifest()
    return man
