"""End-to-end orchestration: load, calibrate, build the private model,
synthesize, evaluate, and aggregate over repeats.

Output layout of :func:`run`::

    <output_dir>/
        repeat_00/synthetic.csv   canonical-format synthetic trajectories
        repeat_00/report.json     metrics for this repeat
        repeat_00/top_n.tsv       top-n visit proportions, real vs synthetic
        aggregate.json            mean and median of each metric
        run_log.json              budgets, seeds, load stats, wall times

``report.json`` and ``aggregate.json`` hold no timing data, so two runs
with the same config and seed produce byte-identical files.
"""

from __future__ import annotations

import configparser
import dataclasses
import json
import logging
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io
from .geo import BoundingBox, GridSpec, OutsideDomainError, RawTrajectory, calibrate
from .markov import build_fm, dump_matrix, normalize, perturb
from .metrics import EvalConfig, MetricsReport, evaluate
from .prefix_tree import build, dump_tree, enforce_consistency
from .privacy import NoiseSource, PrivacyBudget, level_budgets, split_budget
from .synthesis import SynthesisConfig, SyntheticDataset, generate

log = logging.getLogger(__name__)

# Central Porto: (41.104N, 8.665W) to (41.250N, 8.528W).
PORTO_BBOX = (-8.665, 41.104, -8.528, 41.250)


@dataclass
class RunConfig:
    input: str | None = None
    format: str = "canonical"
    bbox: tuple[float, float, float, float] = PORTO_BBOX
    u_h: int = 20
    u_w: int = 20
    m: int = 3
    epsilon: float = 1.0
    g: float = 0.6
    delta_alloc: float = 0.8
    l_max: int | None = None
    seed: int | None = None
    repeats: int = 5
    zero_noise: bool = False
    jitter: bool = False
    on_outside: str = "skip"
    eval_u_h: int | None = None
    eval_u_w: int | None = None
    sanity_fraction: float = 0.001
    top_n: int = 20
    top_k: int = 200
    pattern_len_min: int = 2
    pattern_len_max: int = 8
    length_buckets: int = 20
    output_dir: str = "dptraj-out"
    dump_model: bool = False
    parallel_repeats: bool = False

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        # Fail early on anything the embedded configs reject.
        self.grid()
        self.budget()
        self.eval_config()
        if self.synthesis_config().l_max < self.m + 2:
            raise ValueError(f"l_max must be >= m + 2 = {self.m + 2}")

    def bounding_box(self) -> BoundingBox:
        return BoundingBox.from_bounds(*self.bbox)

    def grid(self) -> GridSpec:
        return GridSpec(self.u_h, self.u_w, self.bounding_box())

    def eval_grid(self) -> GridSpec:
        return GridSpec(self.eval_u_h or self.u_h, self.eval_u_w or self.u_w,
                        self.bounding_box())

    def budget(self) -> PrivacyBudget:
        return PrivacyBudget(self.epsilon, self.g, self.delta_alloc)

    def synthesis_config(self) -> SynthesisConfig:
        return SynthesisConfig(self.l_max or self.u_h * self.u_w, self.jitter)

    def eval_config(self) -> EvalConfig:
        return EvalConfig(self.eval_grid(), self.sanity_fraction, self.top_n, self.top_k,
                          self.pattern_len_min, self.pattern_len_max, self.length_buckets)

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "RunConfig":
        """Read a flat ``key = value`` file; ``overrides`` win over the file."""
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
        parser.read_string("[run]\n" + Path(path).read_text())
        values = parse_values(dict(parser["run"]))
        values.update(overrides)
        return cls(**values)


FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_value(key: str, text: str):
    """Convert a config string to the type of RunConfig field ``key``."""
    if key not in FIELD_TYPES:
        raise ValueError(f"unknown config key {key!r}")
    kind = FIELD_TYPES[key]
    text = text.strip()
    if "None" in kind and text.lower() in ("", "none"):
        return None
    if kind.startswith("tuple"):
        parts = [float(x) for x in text.replace(",", " ").split()]
        if len(parts) != 4:
            raise ValueError("bbox needs four numbers: min_lon min_lat max_lon max_lat")
        return tuple(parts)
    if kind.startswith("bool"):
        return _parse_bool(text)
    if kind.startswith("int"):
        return int(text)
    if kind.startswith("float"):
        return float(text)
    return text


def parse_values(raw: dict[str, str]) -> dict:
    return {k: parse_value(k, v) for k, v in raw.items()}


def derive_seed(seed: int, index: int) -> int:
    """Stable per-repeat seed from the root seed and the repeat index."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])


def calibrate_dataset(trajectories: Sequence[RawTrajectory], grid: GridSpec,
                      on_outside: str = "skip"):
    """Calibrate every trajectory; returns ``(ids, sequences, n_rejected)``."""
    ids, seqs, rejected = [], [], 0
    for t in trajectories:
        try:
            seqs.append(calibrate(t, grid))
        except OutsideDomainError:
            if on_outside == "abort":
                raise
            rejected += 1
            continue
        ids.append(t.id)
    return ids, seqs, rejected


@dataclass
class Model:
    tree: object
    fm_noisy: object
    q: object
    level_budgets: tuple[float, ...]
    eps_m: float


def build_model(calibrated: Sequence[tuple[int, ...]], config: RunConfig,
                src: NoiseSource) -> Model:
    """Spend the whole budget: noisy prefix tree plus noisy Markov matrix."""
    grid = config.grid()
    eps_p, eps_m = split_budget(config.budget())
    tree = build(calibrated, grid, config.m, eps_p, config.delta_alloc, src.child(0))
    enforce_consistency(tree, len(calibrated))
    fm_noisy = perturb(build_fm(calibrated, grid, config.m), eps_m, src.child(1))
    return Model(tree, fm_noisy, normalize(fm_noisy), tree.budgets, eps_m)


def synthesize(calibrated: Sequence[tuple[int, ...]], config: RunConfig,
               src: NoiseSource) -> tuple[SyntheticDataset, Model]:
    model = build_model(calibrated, config, src)
    syn = generate(model.tree, model.q, config.synthesis_config(), src.child(2))
    return syn, model


def budget_ledger(config: RunConfig) -> dict:
    eps_p, eps_m = split_budget(config.budget())
    per_level = level_budgets(eps_p, config.m + 2, config.delta_alloc)
    return {
        "epsilon": config.epsilon,
        "eps_p": eps_p,
        "eps_p_per_level": list(per_level),
        "eps_m": eps_m,
        "total_spent": math.fsum(per_level) + eps_m,
    }


@dataclass
class RepeatResult:
    index: int
    seed: int | None
    report: MetricsReport
    wall_time: float
    n_synthetic: int


@dataclass
class RunRecord:
    repeats: list[RepeatResult] = field(default_factory=list)
    aggregate: dict[str, dict[str, float]] = field(default_factory=dict)
    budget: dict = field(default_factory=dict)
    rejected: int = 0
    skipped_malformed: int = 0


def aggregate(reports: Sequence[MetricsReport]) -> dict[str, dict[str, float]]:
    out = {}
    for name in MetricsReport.SCALARS:
        vals = [getattr(r, name) for r in reports if not math.isnan(getattr(r, name))]
        out[name] = {
            "mean": statistics.fmean(vals) if vals else math.nan,
            "median": statistics.median(vals) if vals else math.nan,
        }
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_top_n(rows, path: Path) -> None:
    with open(path, "w") as fh:
        fh.write("cell\treal\tsynthetic\n")
        for cell, real, syn in rows:
            fh.write(f"{cell}\t{real!r}\t{syn!r}\n")


def _one_repeat(args) -> RepeatResult:
    index, seed, raw, calibrated, config, out_dir = args
    started = time.perf_counter()
    src = NoiseSource(seed, zero_noise=config.zero_noise)
    syn, model = synthesize(calibrated, config, src)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "synthetic.csv", "w") as fh:
        io.write_canonical(syn.trajectories, fh)
    if config.dump_model:
        with open(out_dir / "tree.txt", "w") as fh:
            dump_tree(model.tree, fh)
        with open(out_dir / "fm_noisy.tsv", "w") as fh:
            dump_matrix(model.fm_noisy, fh)
        with open(out_dir / "q.tsv", "w") as fh:
            dump_matrix(model.q, fh)

    report = evaluate(raw, syn.trajectories, config.eval_config())
    _write_json(out_dir / "report.json",
                {"repeat": index, "seed": seed, "n_synthetic": len(syn),
                 "metrics": report.to_dict()})
    write_top_n(report.top_n_proportions, out_dir / "top_n.tsv")
    return RepeatResult(index, seed, report, time.perf_counter() - started, len(syn))


def run(config: RunConfig) -> RunRecord:
    """Run the full pipeline ``config.repeats`` times and write all outputs.

    Completed repeats stay on disk if a later one fails; the error is
    re-raised after ``run_log.json`` is written.
    """
    if config.input is None:
        raise ValueError("config has no input dataset")
    if config.zero_noise:
        log.warning("zero_noise is set: output is NOT differentially private")
    if config.seed is not None:
        log.warning("fixed seed %d: reproducible but not private noise", config.seed)

    loaded = io.load_dataset(config.input, config.format, config.bounding_box(),
                             config.on_outside)
    raw = loaded.trajectories
    _, calibrated, rejected = calibrate_dataset(raw, config.grid(), config.on_outside)
    record = RunRecord(budget=budget_ledger(config),
                       rejected=loaded.rejected_outside + rejected,
                       skipped_malformed=loaded.skipped_malformed)
    log.info("budget: eps_p per level %s, eps_m %s, total %s",
             record.budget["eps_p_per_level"], record.budget["eps_m"],
             record.budget["total_spent"])

    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = [None if config.seed is None else derive_seed(config.seed, r)
             for r in range(config.repeats)]
    tasks = [(r, seeds[r], raw, calibrated, config, out / f"repeat_{r:02d}")
             for r in range(config.repeats)]
    try:
        if config.parallel_repeats and config.repeats > 1:
            with ProcessPoolExecutor() as pool:
                for res in pool.map(_one_repeat, tasks):
                    record.repeats.append(res)
        else:
            for task in tasks:
                record.repeats.append(_one_repeat(task))
                log.info("repeat %d done in %.2fs", task[0], record.repeats[-1].wall_time)
        record.aggregate = aggregate([r.report for r in record.repeats])
        _write_json(out / "aggregate.json",
                    {"repeats": config.repeats, "metrics": record.aggregate})
    finally:
        _write_json(out / "run_log.json", {
            "budget": record.budget,
            "rejected_trajectories": record.rejected,
            "skipped_malformed": record.skipped_malformed,
            "n_real": len(raw),
            "repeats": [{"index": r.index, "seed": r.seed, "wall_time_s": r.wall_time,
                         "n_synthetic": r.n_synthetic} for r in record.repeats],
        })
    return record
