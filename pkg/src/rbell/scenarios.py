"""End-to-end experiment runs: schedules, trials, tables and reports.

A scenario fixes the geometry, one model, per-station setting schedules
and a measurement quartet (a, a2, b, b2).  Trials happen at evenly
spaced simultaneous times; for each trial the actual settings are read
off the schedules, the retarded settings are computed under the
configured definition, outcomes are sampled, and the resulting table is
scored against every inequality whose cells are present.

Runs are bit-reproducible from (config, seed): schedule randomness and
trial randomness use fixed substreams, and trial blocks are reduced in
index order whatever the worker count.
"""

from __future__ import annotations

import configparser
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy import stats

from .errors import CellError, ConfigError, MissingCellError
from .estimation import (
    CorrelationTable,
    TrialLog,
    build_table,
    map_blocks,
    marginal_p1,
    marginal_p2,
    substream,
    write_table,
    write_trial_log,
)
from .inequalities import (
    Correlation,
    InequalityReport,
    averaged_chsh,
    chsh_quadruples,
    retarded_ch,
    retarded_chsh,
    same_retarded_chsh,
)
from .models import DeterministicLHV, Model, StochasticLHV, get_model
from .spacetime import (
    EqualityClass,
    Geometry,
    InterventionStream,
    SettingLabel,
    SettingSchedule,
    load_interventions,
    parse_angle,
)

SCHEDULE_KINDS = ("periodic", "random_switch", "stream")
RETARDED_DEFINITIONS = ("simple", "predictive")


@dataclass(frozen=True)
class StationConfig:
    """Setting palette and switching rule for one station.

    ``period`` is the hold time of each label in the cycle, so a cycle
    of m labels repeats every m * period.
    """

    station: int
    labels: dict[str, float]
    kind: str
    period: Optional[float] = None
    phase: float = 0.0
    cycle: tuple[str, ...] = ()
    rate: Optional[float] = None
    switch_labels: tuple[str, ...] = ()
    stream_path: Optional[str] = None
    base: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in SCHEDULE_KINDS:
            raise ConfigError(f"unknown schedule kind {self.kind!r}")
        if not self.labels:
            raise ConfigError(f"station {self.station} has no labels")
        if self.kind == "periodic":
            if self.period is None or self.period <= 0:
                raise ConfigError("periodic schedule needs period > 0")
            if not self.cycle:
                raise ConfigError("periodic schedule needs a label cycle")
            for lid in self.cycle:
                if lid not in self.labels:
                    raise ConfigError(f"cycle label {lid!r} not in station labels")
        elif self.kind == "random_switch":
            if self.rate is None or self.rate <= 0:
                raise ConfigError("random_switch schedule needs rate > 0")
            for lid in self.switch_labels or ():
                if lid not in self.labels:
                    raise ConfigError(f"switch label {lid!r} not in station labels")
        elif self.kind == "stream":
            if not self.stream_path:
                raise ConfigError("stream schedule needs a file path")
        if self.base is not None and self.base not in self.labels:
            raise ConfigError(f"base label {self.base!r} not in station labels")

    def palette(self) -> dict[str, SettingLabel]:
        return {lid: SettingLabel(lid, ang) for lid, ang in self.labels.items()}

    def base_label(self) -> str:
        if self.base is not None:
            return self.base
        if self.kind == "periodic":
            return self.cycle[0]
        return next(iter(self.labels))


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete description of one reproducible run."""

    geometry: Geometry
    model: str
    station1: StationConfig
    station2: StationConfig
    quartet: tuple[str, str, str, str]
    n_trials: int
    spacing: float
    start: float = 0.0
    seed: int = 0
    retarded_definition: str = "simple"
    intervention_delay: float = 0.0
    min_count: int = 100

    def __post_init__(self) -> None:
        if self.n_trials < 1:
            raise ConfigError("n_trials must be at least 1")
        if self.spacing <= 0:
            raise ConfigError("trial spacing must be positive")
        if self.retarded_definition not in RETARDED_DEFINITIONS:
            raise ConfigError(
                f"retarded_definition must be one of {RETARDED_DEFINITIONS}"
            )
        if self.intervention_delay < 0:
            raise ConfigError("intervention_delay must be non-negative")
        qa, qa2, qb, qb2 = self.quartet
        for lid in (qa, qa2):
            if lid not in self.station1.labels:
                raise ConfigError(f"quartet label {lid!r} not on station 1")
        for lid in (qb, qb2):
            if lid not in self.station2.labels:
                raise ConfigError(f"quartet label {lid!r} not on station 2")
        shared = set(self.station1.labels) & set(self.station2.labels)
        for lid in shared:
            if abs(self.station1.labels[lid] - self.station2.labels[lid]) > 1e-12:
                raise ConfigError(
                    f"label {lid!r} has inconsistent angles between stations"
                )


# ----------------------------------------------------------------------
# Config file parsing
# ----------------------------------------------------------------------

_GEOMETRY_KEYS = {"separation", "signal_speed", "t0"}
_MODEL_KEYS = {"name"}
_STATION_KEYS = {
    "labels", "schedule", "period", "phase", "cycle", "rate",
    "switch_labels", "file", "base",
}
_RUN_KEYS = {
    "n_trials", "spacing", "start", "seed", "retarded_definition",
    "intervention_delay", "quartet", "min_count",
}


def _parse_labels(text: str) -> dict[str, float]:
    out: dict[str, float] = {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise ConfigError(f"label entry {item!r} must look like id=angle")
        lid, ang = item.split("=", 1)
        out[lid.strip()] = parse_angle(ang.strip())
    if not out:
        raise ConfigError("empty label list")
    return out


def _parse_id_list(text: str) -> tuple[str, ...]:
    return tuple(s.strip() for s in text.split(",") if s.strip())


def _station_from_section(
    station: int, sec: configparser.SectionProxy, config_dir: Path
) -> StationConfig:
    unknown = set(sec) - _STATION_KEYS
    if unknown:
        raise ConfigError(f"unknown keys in [station{station}]: {sorted(unknown)}")
    if "labels" not in sec or "schedule" not in sec:
        raise ConfigError(f"[station{station}] needs 'labels' and 'schedule'")
    kind = sec["schedule"].strip()
    stream_path = None
    if "file" in sec:
        p = Path(sec["file"].strip())
        stream_path = str(p if p.is_absolute() else config_dir / p)
    return StationConfig(
        station=station,
        labels=_parse_labels(sec["labels"]),
        kind=kind,
        period=float(sec["period"]) if "period" in sec else None,
        phase=float(sec["phase"]) if "phase" in sec else 0.0,
        cycle=_parse_id_list(sec["cycle"]) if "cycle" in sec else (),
        rate=float(sec["rate"]) if "rate" in sec else None,
        switch_labels=_parse_id_list(sec["switch_labels"]) if "switch_labels" in sec else (),
        stream_path=stream_path,
        base=sec["base"].strip() if "base" in sec else None,
    )


def load_config(path: Union[str, Path]) -> ScenarioConfig:
    """Parse a scenario config file (ini-style sections, strict keys)."""
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with path.open() as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc

    required = {"geometry", "model", "station1", "station2", "run"}
    present = set(parser.sections())
    if present != required:
        missing = required - present
        extra = present - required
        parts = []
        if missing:
            parts.append(f"missing sections {sorted(missing)}")
        if extra:
            parts.append(f"unknown sections {sorted(extra)}")
        raise ConfigError(f"{path}: " + "; ".join(parts))

    geo = parser["geometry"]
    unknown = set(geo) - _GEOMETRY_KEYS
    if unknown:
        raise ConfigError(f"unknown keys in [geometry]: {sorted(unknown)}")
    model_sec = parser["model"]
    unknown = set(model_sec) - _MODEL_KEYS
    if unknown:
        raise ConfigError(f"unknown keys in [model]: {sorted(unknown)}")
    run = parser["run"]
    unknown = set(run) - _RUN_KEYS
    if unknown:
        raise ConfigError(f"unknown keys in [run]: {sorted(unknown)}")

    try:
        separation = float(geo["separation"])
        signal_speed = float(geo["signal_speed"])
        t0 = float(geo["t0"])
        n_trials = int(run["n_trials"])
        spacing = float(run["spacing"])
        start = float(run["start"]) if "start" in run else 0.0
        seed = int(run["seed"]) if "seed" in run else 0
    except KeyError as exc:
        raise ConfigError(f"{path}: missing required key {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None

    quartet = _parse_id_list(run.get("quartet", ""))
    if len(quartet) != 4:
        raise ConfigError("run.quartet must list four labels: a, a2, b, b2")

    geometry = Geometry(
        separation=separation,
        signal_speed=signal_speed,
        t1=start,
        t2=start,
        t0=t0,
    )
    return ScenarioConfig(
        geometry=geometry,
        model=model_sec.get("name", "").strip() or "hardy-singlet",
        station1=_station_from_section(1, parser["station1"], path.parent),
        station2=_station_from_section(2, parser["station2"], path.parent),
        quartet=(quartet[0], quartet[1], quartet[2], quartet[3]),
        n_trials=n_trials,
        spacing=spacing,
        start=start,
        seed=seed,
        retarded_definition=run.get("retarded_definition", "simple").strip(),
        intervention_delay=float(run.get("intervention_delay", "0")),
        min_count=int(run.get("min_count", "100")),
    )


# ----------------------------------------------------------------------
# Schedule construction
# ----------------------------------------------------------------------


def make_schedule(
    station: StationConfig,
    window: tuple[float, float],
    seed: int,
    intervention_delay: float = 0.0,
) -> SettingSchedule:
    """Build the station's schedule over the given time window.

    periodic: a deterministic base cycling through the labels, each held
    for ``period``.  random_switch: a constant base plus interventions at
    exponentially spaced decision times with uniformly chosen labels and
    the configured delay.  stream: a constant base plus interventions
    loaded from file.
    """
    start, end = window
    palette = station.palette()
    if station.kind == "periodic":
        period = float(station.period)
        cycle = [palette[lid] for lid in station.cycle]
        m = len(cycle)
        k0 = math.floor((start - station.phase) / period)
        initial = cycle[k0 % m]
        switches = []
        k = k0 + 1
        while station.phase + k * period <= end:
            switches.append((station.phase + k * period, cycle[k % m]))
            k += 1
        return SettingSchedule(
            station=station.station,
            start=start,
            initial=initial,
            switches=tuple(switches),
        )

    base = palette[station.base_label()]
    if station.kind == "random_switch":
        rng = substream(seed, 100 + station.station)
        rate = float(station.rate)
        labels = [palette[lid] for lid in (station.switch_labels or tuple(station.labels))]
        span = end - start
        # draw enough exponential gaps to cover the window, extending if short
        times = []
        t = start
        chunk = max(16, int(rate * span * 1.2) + 16)
        while t <= end:
            gaps = rng.exponential(scale=1.0 / rate, size=chunk)
            cum = t + np.cumsum(gaps)
            inside = cum[cum <= end]
            times.append(inside)
            t = float(cum[-1])
        decisions = np.concatenate(times) if times else np.empty(0)
        picks = rng.integers(0, len(labels), size=decisions.size)
        stream = InterventionStream(
            station=station.station,
            decision_times=decisions,
            delays=float(intervention_delay),
            label_indices=picks,
            labels=labels,
            source_tags="random-switch",
        )
        return SettingSchedule(
            station=station.station, start=start, initial=base, interventions=stream
        )

    interventions = load_interventions(
        station.stream_path, palette, station=station.station
    )
    return SettingSchedule(
        station=station.station,
        start=start,
        initial=base,
        interventions=InterventionStream.from_interventions(
            station.station, interventions
        ),
    )


def build_schedules(config: ScenarioConfig) -> tuple[SettingSchedule, SettingSchedule]:
    """Both station schedules for a run, derived only from the config."""
    last = config.start + (config.n_trials - 1) * config.spacing
    window = (config.geometry.t0, last)
    s1 = make_schedule(config.station1, window, config.seed, config.intervention_delay)
    s2 = make_schedule(config.station2, window, config.seed, config.intervention_delay)
    return s1, s2


# ----------------------------------------------------------------------
# Scenario result
# ----------------------------------------------------------------------


@dataclass
class IndependenceCheck:
    """Chi-squared independence of the retarded pair from the actual pair."""

    statistic: float
    dof: int
    critical_999: float

    @property
    def independent(self) -> bool:
        return self.statistic <= self.critical_999


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    log: TrialLog
    table: CorrelationTable
    reports: list[InequalityReport]
    classification: dict[str, float]
    retarded_weights: dict[tuple[str, str], float]
    skipped: list[dict]
    independence: Optional[IndependenceCheck] = None

    def violated(self) -> bool:
        return any(r.verdict == "violated" for r in self.reports)

    def write_outputs(self, outdir: Union[str, Path]) -> dict[str, Path]:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        paths = {
            "trials": outdir / "trials.csv",
            "correlations": outdir / "correlations.csv",
            "reports": outdir / "reports.json",
            "classification": outdir / "classification.json",
        }
        write_trial_log(self.log, paths["trials"])
        write_table(self.table, paths["correlations"])
        paths["reports"].write_text(
            json.dumps([r.to_dict() for r in self.reports], indent=2)
        )
        summary = {
            "fractions": dict(self.classification),
            "retarded_weights": {
                f"{u},{v}": w for (u, v), w in sorted(self.retarded_weights.items())
            },
            "skipped": self.skipped,
        }
        if self.independence is not None:
            summary["independence"] = {
                "statistic": self.independence.statistic,
                "dof": self.independence.dof,
                "critical_999": self.independence.critical_999,
                "independent": self.independence.independent,
            }
        paths["classification"].write_text(json.dumps(summary, indent=2))
        return paths


# ----------------------------------------------------------------------
# Trial generation
# ----------------------------------------------------------------------


def _merge_palettes(config: ScenarioConfig) -> tuple[tuple[SettingLabel, ...], dict[str, int]]:
    labels: list[SettingLabel] = []
    index: dict[str, int] = {}
    for st in (config.station1, config.station2):
        for lid, ang in st.labels.items():
            if lid not in index:
                index[lid] = len(labels)
                labels.append(SettingLabel(lid, ang))
    return tuple(labels), index


def _schedule_indices(
    schedule: SettingSchedule, global_index: dict[str, int]
) -> np.ndarray:
    return np.array(
        [global_index[lbl.id] for lbl in schedule.distinct_labels], dtype=np.int64
    )


def _sample_outcomes(
    model: Model,
    angles_a: np.ndarray,
    angles_b: np.ndarray,
    angles_ar: np.ndarray,
    angles_br: np.ndarray,
    seed: int,
    workers: Optional[int],
) -> tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    """Sample per-trial outcome pairs; lambda is recorded for local models."""
    n = angles_a.size
    outcome_1 = np.empty(n, dtype=np.int8)
    outcome_2 = np.empty(n, dtype=np.int8)
    lam_out: Optional[np.ndarray] = None
    if isinstance(model, (DeterministicLHV, StochasticLHV)):
        lam_out = np.empty(n, dtype=np.float64)

    def block(i: int, offset: int, m: int) -> None:
        rng = substream(seed, 200, i)
        sl = slice(offset, offset + m)
        if isinstance(model, DeterministicLHV):
            lam = model.hidden.sample(rng, m)
            lam_out[sl] = lam
            outcome_1[sl] = model.outcome_A(angles_a[sl], angles_br[sl], lam)
            outcome_2[sl] = model.outcome_B(angles_b[sl], angles_ar[sl], lam)
        elif isinstance(model, StochasticLHV):
            lam = model.hidden.sample(rng, m)
            lam_out[sl] = lam
            p1v = model.p1(angles_a[sl], angles_br[sl], lam)
            p2v = model.p2(angles_b[sl], angles_ar[sl], lam)
            outcome_1[sl] = np.where(rng.random(m) < p1v, 1, -1)
            outcome_2[sl] = np.where(rng.random(m) < p2v, 1, -1)
        else:
            # quantum reference: retarded settings are ignored; sample the
            # joint distribution per trial via its cosine
            c = np.cos(angles_a[sl] - angles_b[sl])
            p_same = (1.0 - c) / 4.0  # p(+,+) = p(-,-)
            p_diff = (1.0 + c) / 4.0  # p(+,-) = p(-,+)
            u = rng.random(m)
            k = (u >= p_same).astype(np.int8)
            k += (u >= p_same + p_diff).astype(np.int8)
            k += (u >= p_same + 2.0 * p_diff).astype(np.int8)
            outcome_1[sl] = np.where(k <= 1, 1, -1)
            outcome_2[sl] = np.where((k == 0) | (k == 2), 1, -1)

    map_blocks(n, block, workers)
    return outcome_1, outcome_2, lam_out


def classify_fractions(log: TrialLog) -> dict[str, float]:
    n = len(log)
    eq1 = log.a == log.a_r
    eq2 = log.b == log.b_r
    both = int((eq1 & eq2).sum())
    only1 = int((eq1 & ~eq2).sum())
    only2 = int((~eq1 & eq2).sum())
    neither = n - both - only1 - only2
    return {
        EqualityClass.BOTH_EQUAL.value: both / n,
        EqualityClass.ONLY_1_EQUAL.value: only1 / n,
        EqualityClass.ONLY_2_EQUAL.value: only2 / n,
        EqualityClass.NEITHER_EQUAL.value: neither / n,
    }


def empirical_weights(log: TrialLog) -> dict[tuple[str, str], float]:
    """Observed frequency of each retarded pair across all trials."""
    ids = log.ids()
    p = len(ids)
    code = log.a_r * p + log.b_r
    counts = np.bincount(code, minlength=p * p)
    n = len(log)
    return {
        (ids[int(flat) // p], ids[int(flat) % p]): int(counts[flat]) / n
        for flat in np.flatnonzero(counts)
    }


def independence_check(log: TrialLog) -> Optional[IndependenceCheck]:
    """Chi-squared test of (actual pair) x (retarded pair) independence."""
    ids = log.ids()
    p = len(ids)
    actual = log.a * p + log.b
    ret = log.a_r * p + log.b_r
    table = np.zeros((p * p, p * p), dtype=np.int64)
    np.add.at(table, (actual, ret), 1)
    rows = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
    if rows.shape[0] < 2 or rows.shape[1] < 2:
        return None
    stat, _, dof, _ = stats.chi2_contingency(rows)
    return IndependenceCheck(
        statistic=float(stat),
        dof=int(dof),
        critical_999=float(stats.chi2.ppf(0.999, dof)),
    )


# ----------------------------------------------------------------------
# Inequality evaluation over a finished table
# ----------------------------------------------------------------------


def _evaluate_reports(
    config: ScenarioConfig,
    log: TrialLog,
    table: CorrelationTable,
    weights: dict[tuple[str, str], float],
) -> tuple[list[InequalityReport], list[dict]]:
    qa, qa2, qb, qb2 = config.quartet
    corr = table.to_correlation_input()
    reports: list[InequalityReport] = []
    skipped: list[dict] = []

    def try_report(kind: str, fn, detail: dict) -> None:
        try:
            reports.append(fn())
        except CellError as exc:
            skipped.append({"name": kind, **detail, "reason": str(exc)})

    # observed retarded pairs per actual pair of the quartet
    d_22 = table.observed_retarded_pairs(qa2, qb2)
    d_21 = table.observed_retarded_pairs(qa2, qb)
    d_12 = table.observed_retarded_pairs(qa, qb2)
    d_11 = table.observed_retarded_pairs(qa, qb)

    octuples = []
    for (a2r, b2r) in sorted(d_22):
        for (ar, br) in sorted(d_11):
            if (ar, b2r) in d_21 and (a2r, br) in d_12:
                octuples.append((ar, a2r, br, b2r))

    if not octuples:
        skipped.append(
            {
                "name": "retarded_chsh",
                "reason": "no complete retarded octuple was observed",
            }
        )

    for (ar, a2r, br, b2r) in octuples:
        try_report(
            "retarded_chsh",
            lambda ar=ar, a2r=a2r, br=br, b2r=b2r: retarded_chsh(
                corr, qa, qa2, qb, qb2, ar, a2r, br, b2r
            ),
            {"ar": ar, "a2r": a2r, "br": br, "b2r": b2r},
        )

    if (qa, qb) in (d_22 & d_21 & d_12 & d_11):
        try_report(
            "same_retarded_chsh",
            lambda: same_retarded_chsh(corr, qa, qa2, qb, qb2),
            {"ar": qa, "br": qb},
        )
    else:
        skipped.append(
            {
                "name": "same_retarded_chsh",
                "reason": f"retarded pair ({qa}, {qb}) not observed for every "
                "actual pair of the quartet",
            }
        )

    # probability form over the same octuples; both-plus counts are
    # grouped in one pass instead of rescanning the log per octuple
    if octuples:
        ids = log.ids()
        p = len(ids)
        code = ((log.a * p + log.b) * p + log.a_r) * p + log.b_r
        cell_counts = np.bincount(code, minlength=p**4)
        plus_mask = (log.outcome_1 == 1) & (log.outcome_2 == 1)
        plus_counts = np.bincount(code[plus_mask], minlength=p**4)
        index = {lid: i for i, lid in enumerate(ids)}

        def p12_cell(q: tuple[str, str, str, str]) -> Correlation:
            flat = ((index[q[0]] * p + index[q[1]]) * p + index[q[2]]) * p + index[q[3]]
            n = int(cell_counts[flat])
            if n == 0:
                raise MissingCellError(q)
            frac = int(plus_counts[flat]) / n
            se = math.sqrt(max(0.0, frac * (1.0 - frac)) / n)
            return Correlation(frac, se, n, n >= config.min_count)

        p1, p1_se, n1 = marginal_p1(log, qa2)
        p2, p2_se, n2 = marginal_p2(log, qb2)
        single_1 = Correlation(p1, p1_se, n1)
        single_2 = Correlation(p2, p2_se, n2)

    for (ar, a2r, br, b2r) in octuples:
        def ch_eval(ar=ar, a2r=a2r, br=br, b2r=b2r):
            quads = chsh_quadruples(qa, qa2, qb, qb2, ar, a2r, br, b2r)
            cells = {q: p12_cell(q) for q in quads}
            return retarded_ch(
                cells, single_1, single_2,
                qa, qa2, qb, qb2, ar, a2r, br, b2r,
            )

        try_report(
            "retarded_ch",
            ch_eval,
            {"ar": ar, "a2r": a2r, "br": br, "b2r": b2r},
        )

    both_random = (
        config.station1.kind == "random_switch"
        and config.station2.kind == "random_switch"
    )
    try_report(
        "averaged_chsh",
        lambda: averaged_chsh(
            corr, weights, qa, qa2, qb, qb2, weights_independent=both_random
        ),
        {"weights": "empirical"},
    )
    return reports, skipped


# ----------------------------------------------------------------------
# The runner
# ----------------------------------------------------------------------


def run_scenario(
    config: ScenarioConfig, workers: Optional[int] = None
) -> ScenarioResult:
    """Generate trials, estimate correlations, and evaluate inequalities."""
    tau = config.geometry.retardation
    if config.geometry.t0 >= config.start - tau:
        raise ConfigError("geometry.t0 must precede start - L/c")
    model = get_model(config.model)
    sched1, sched2 = build_schedules(config)
    palette, index = _merge_palettes(config)
    times = config.start + config.spacing * np.arange(config.n_trials)

    map1 = _schedule_indices(sched1, index)
    map2 = _schedule_indices(sched2, index)
    a_idx = map1[sched1.value_index_at(times)]
    b_idx = map2[sched2.value_index_at(times)]
    if config.retarded_definition == "simple":
        ar_idx = map1[sched1.value_index_at(times - tau)]
        br_idx = map2[sched2.value_index_at(times - tau)]
    else:
        ar_idx = map1[sched1.predictive_index_at(times, times - tau)]
        br_idx = map2[sched2.predictive_index_at(times, times - tau)]

    angles = np.array([lbl.angle for lbl in palette])
    outcome_1, outcome_2, lam = _sample_outcomes(
        model,
        angles[a_idx],
        angles[b_idx],
        angles[ar_idx],
        angles[br_idx],
        config.seed,
        workers,
    )
    log = TrialLog(
        palette=palette,
        t1=times,
        t2=times,
        a=a_idx,
        b=b_idx,
        a_r=ar_idx,
        b_r=br_idx,
        outcome_1=outcome_1,
        outcome_2=outcome_2,
        lam=lam,
    )
    table = build_table(log, min_count=config.min_count)
    weights = empirical_weights(log)
    reports, skipped = _evaluate_reports(config, log, table, weights)
    return ScenarioResult(
        config=config,
        log=log,
        table=table,
        reports=reports,
        classification=classify_fractions(log),
        retarded_weights=weights,
        skipped=skipped,
        independence=independence_check(log),
    )


def replay_retarded(
    config: ScenarioConfig, log: TrialLog
) -> tuple[np.ndarray, np.ndarray]:
    """Recompute the retarded label indices of a log from schedules alone.

    Returns arrays aligned with the log's palette; used to audit that
    recorded retarded settings are a pure function of (config, times).
    """
    tau = config.geometry.retardation
    sched1, sched2 = build_schedules(config)
    _, index = _merge_palettes(config)
    map1 = _schedule_indices(sched1, index)
    map2 = _schedule_indices(sched2, index)
    if config.retarded_definition == "simple":
        ar = map1[sched1.value_index_at(log.t1 - tau)]
        br = map2[sched2.value_index_at(log.t2 - tau)]
    else:
        ar = map1[sched1.predictive_index_at(log.t1, log.t2 - tau)]
        br = map2[sched2.predictive_index_at(log.t2, log.t1 - tau)]
    return ar, br
