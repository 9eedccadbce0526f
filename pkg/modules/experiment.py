"""
Monte-Carlo harness for the cooperative sensing network.

This module handles:
- Deterministic per-trial random streams
- The receiver front end (target, channel, samples, local estimates)
- Advanced and baseline fusion per sweep condition
- MMSE, performance gain and overhead bit-rate aggregation
- Summary output
"""

import logging
import math
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from config.config_manager import Capacity, ExperimentConfig, ProcessingConfig
from modules.exceptions import SensingError
from modules.fusion import Design, FusionResult, SharedContext, fuse_receivers
from modules.geometry import (Scene, SearchRegion, TargetTruth, build_scene, calibrate_energy,
                              sample_target, snr_db, support_region)
from modules.local_estimation import LocalEstimate, crb_tau, estimate_delay_coeff
from modules.process_manager import ProcessManager
from modules.signal_generator import (ObservationWindow, coarse_windows, draw_channel,
                                      synthesize_received)
from modules.system_monitor import SystemMonitor
from modules.waveform import PulseSpec

logger = logging.getLogger(__name__)

SEARCH_MARGIN = 0.1     # search region = target support inflated by 10%

SUMMARY_COLUMNS = ["topology", "rsnr_db", "capacity_bits", "quantizer", "design", "mmse_m2",
                   "stderr_m2", "pg", "overhead_bps", "trials", "excluded"]


@dataclass(frozen=True)
class SweepCondition:
    rsnr_db: float
    capacity: Capacity
    quantizer: str = "klt"


@dataclass
class TrialRecord:
    """Outcome of one trial under one condition."""
    trial_index: int
    condition: SweepCondition
    theta: Tuple[float, float]
    snr_db: Tuple[float, ...] = ()
    estimates: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    squared_errors: Dict[str, float] = field(default_factory=dict)
    excluded: Dict[str, bool] = field(default_factory=dict)
    failure: Optional[str] = None

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class SummaryRow:
    topology: str
    rsnr_db: float
    capacity_bits: Capacity
    quantizer: str
    design: str
    mmse_m2: float
    stderr_m2: float
    pg: float
    overhead_bps: float
    trials: int
    excluded: int


@dataclass
class FrontEnd:
    """Everything the receivers produce for one (RSNR, trial) draw."""
    target: TargetTruth
    scene: Scene
    spec: PulseSpec
    region: SearchRegion
    sigma2: float
    windows: List[ObservationWindow]
    samples: List[np.ndarray]
    estimates: List[LocalEstimate]
    snr_db: Tuple[float, ...]


@dataclass(frozen=True)
class SweepTask:
    """One (RSNR, trial) work item evaluated under every capacity and quantizer."""
    config: ExperimentConfig
    rsnr_db: float
    trial_index: int
    conditions: Tuple[SweepCondition, ...]


def trial_seed(config: ExperimentConfig, rsnr_db: float, trial_index: int) -> np.random.SeedSequence:
    """
    Seed for one trial, keyed by (master seed, topology, RSNR, trial index).

    Capacity, quantizer and design are not part of the key, so every one of
    them sees the same target, channel and noise draws.
    """
    topology_key = zlib.crc32(f"{config.topology}:{config.n_receivers}".encode())
    rsnr_key = zlib.crc32(f"{rsnr_db:.6g}".encode())
    return np.random.SeedSequence(config.master_seed, spawn_key=(topology_key, rsnr_key, trial_index))


def simulate_front_end(config: ExperimentConfig, rsnr_db: float, trial_index: int) -> FrontEnd:
    """Draw target and channel, calibrate E to the RSNR, sample and run local estimation."""
    rng = np.random.default_rng(trial_seed(config, rsnr_db, trial_index))
    topology = config.topology_spec()
    scene = build_scene(topology, fc=config.carrier_ghz)
    region = support_region(topology).inflate(SEARCH_MARGIN)
    sigma2 = config.noise_variance

    target = sample_target(topology, rng)
    channel = draw_channel(scene, target, rng, sigma2)
    energy = calibrate_energy(rsnr_db, channel.alpha, sigma2)
    spec = config.pulse_spec().with_energy(energy)

    windows = coarse_windows(scene, region, spec)
    samples, estimates = [], []
    for n, window in enumerate(windows):
        receiver = channel.receiver(n)
        r = synthesize_received(spec, receiver, window, rng)
        estimate = estimate_delay_coeff(r, window, spec, sigma2)
        samples.append(r)
        estimates.append(estimate.with_true_crb(crb_tau(receiver.alpha, sigma2, spec, receiver.tau, window)))

    snrs = tuple(float(v) for v in snr_db(energy, channel.alpha, sigma2))
    logger.debug(f"Trial {trial_index} at {rsnr_db} dB: target=({target.x:.2f}, {target.y:.2f}) E={energy:.3e}")
    return FrontEnd(target=target, scene=scene, spec=spec, region=region, sigma2=sigma2, windows=windows,
                    samples=samples, estimates=estimates, snr_db=snrs)


def _fuse(front: FrontEnd, design: str, condition: SweepCondition) -> Optional[FusionResult]:
    contexts = [SharedContext(front.spec, front.sigma2, condition.capacity, condition.quantizer, w)
                for w in front.windows]
    try:
        return fuse_receivers(design, front.estimates, front.samples, contexts, front.scene, front.spec,
                              front.region)
    except SensingError as e:
        logger.warning(f"{design} fusion failed for {condition}: {e}")
        return None


def evaluate_front_end(front: FrontEnd, trial_index: int, conditions: Sequence[SweepCondition],
                       designs: Sequence[str]) -> List[TrialRecord]:
    """
    Run every design under every condition on one front-end draw.

    The baseline ignores capacity and quantizer, so it is fused once and shared.
    """
    truth = front.target.as_array()
    baseline: Optional[Tuple[Optional[FusionResult]]] = None
    records = []
    for condition in conditions:
        record = TrialRecord(trial_index=trial_index, condition=condition,
                             theta=(front.target.x, front.target.y), snr_db=front.snr_db)
        for design in designs:
            if design == Design.BASELINE.value:
                if baseline is None:
                    baseline = (_fuse(front, design, condition),)
                result = baseline[0]
            else:
                result = _fuse(front, design, condition)

            if result is None:
                record.squared_errors[design] = math.nan
                record.excluded[design] = True
                continue
            record.estimates[design] = result.theta
            record.squared_errors[design] = float(np.sum((np.asarray(result.theta) - truth) ** 2))
            record.excluded[design] = result.clamped
        records.append(record)
    return records


def _failed_records(trial_index: int, conditions: Sequence[SweepCondition], designs: Sequence[str],
                    error: Exception) -> List[TrialRecord]:
    return [TrialRecord(trial_index=trial_index, condition=c, theta=(math.nan, math.nan),
                        squared_errors={d: math.nan for d in designs},
                        excluded={d: True for d in designs}, failure=str(error))
            for c in conditions]


def run_trial(config: ExperimentConfig, condition: SweepCondition, trial_index: int) -> TrialRecord:
    """
    One Monte-Carlo trial, deterministic in (master_seed, condition, trial_index).

    Module errors are recorded on the returned record rather than raised.
    """
    try:
        front = simulate_front_end(config, condition.rsnr_db, trial_index)
    except SensingError as e:
        logger.warning(f"Trial {trial_index} front end failed: {e}")
        return _failed_records(trial_index, [condition], config.designs, e)[0]
    return evaluate_front_end(front, trial_index, [condition], config.designs)[0]


def _run_sweep_task(task: SweepTask) -> List[TrialRecord]:
    designs = task.config.designs
    try:
        front = simulate_front_end(task.config, task.rsnr_db, task.trial_index)
    except SensingError as e:
        logger.warning(f"Trial {task.trial_index} front end failed: {e}")
        return _failed_records(task.trial_index, task.conditions, designs, e)
    return evaluate_front_end(front, task.trial_index, task.conditions, designs)


def mmse_statistics(squared_errors: Sequence[float]) -> Tuple[float, float]:
    """Mean squared error and its standard error; NaN where undefined."""
    errors = np.asarray(squared_errors, dtype=float)
    if errors.size == 0:
        return math.nan, math.nan
    mmse = float(np.mean(errors))
    stderr = float(np.std(errors, ddof=1) / np.sqrt(errors.size)) if errors.size > 1 else math.nan
    return mmse, stderr


def performance_gain(mmse_baseline: float, mmse_advanced: float) -> float:
    """PG = MMSE(baseline) / MMSE(advanced)."""
    if math.isnan(mmse_baseline) or math.isnan(mmse_advanced):
        return math.nan
    if mmse_advanced == 0:
        return math.inf if mmse_baseline > 0 else math.nan
    return mmse_baseline / mmse_advanced


def overhead_bit_rate(capacity: Capacity, pulse_period: float) -> float:
    """Backhaul bits per second for a C_n-bit payload every pulse period."""
    return float(capacity) / pulse_period


def summarize(config: ExperimentConfig, records: Sequence[TrialRecord]) -> List[SummaryRow]:
    """Aggregate trial records into one row per condition and design."""
    grouped: Dict[SweepCondition, List[TrialRecord]] = {}
    for record in records:
        grouped.setdefault(record.condition, []).append(record)

    rows: List[SummaryRow] = []
    for condition, group in grouped.items():
        group = sorted(group, key=lambda r: r.trial_index)
        stats = {}
        for design in config.designs:
            kept = [r.squared_errors[design] for r in group if not r.excluded.get(design, True)]
            stats[design] = (mmse_statistics(kept), len(group) - len(kept))
        pg = math.nan
        if len(stats) == 2:
            pg = performance_gain(stats["baseline"][0][0], stats["advanced"][0][0])

        for design in config.designs:
            (mmse, stderr), excluded = stats[design]
            if excluded:
                logger.warning(f"{excluded} of {len(group)} {design} trials excluded at {condition}")
            overhead = overhead_bit_rate(condition.capacity, config.pulse_period) if design == "advanced" else 0.0
            rows.append(SummaryRow(topology=config.topology, rsnr_db=condition.rsnr_db,
                                   capacity_bits=condition.capacity, quantizer=condition.quantizer,
                                   design=design, mmse_m2=mmse, stderr_m2=stderr, pg=pg,
                                   overhead_bps=overhead, trials=len(group), excluded=excluded))
    return rows


def sweep_conditions(config: ExperimentConfig) -> List[SweepCondition]:
    """Cartesian product RSNR x capacity x quantizer, in configuration order."""
    return [SweepCondition(float(r), c, q) for r in config.rsnr for c in config.capacity for q in config.quantizer]


def run_sweep(config: ExperimentConfig, processing: Optional[ProcessingConfig] = None) -> List[SummaryRow]:
    """
    Run every trial of every condition and aggregate the results.

    Args:
        config: Experiment configuration
        processing: Worker pool and telemetry settings (in-process when omitted)

    Returns:
        Summary rows ordered by RSNR, capacity, quantizer, design
    """
    processing = processing or ProcessingConfig(num_workers=1)
    conditions = sweep_conditions(config)
    tasks = []
    for rsnr in dict.fromkeys(float(r) for r in config.rsnr):
        per_rsnr = tuple(c for c in conditions if c.rsnr_db == rsnr)
        tasks.extend(SweepTask(config, rsnr, t, per_rsnr) for t in range(config.trials))
    logger.info(f"Sweep started: {len(conditions)} condition(s) x {config.trials} trial(s), "
                f"designs={config.designs}")

    monitor = SystemMonitor(update_interval=processing.monitor_interval_sec,
                            history_size=processing.monitor_history_size,
                            cpu_warning=processing.cpu_warning_percent,
                            memory_warning=processing.memory_warning_percent)
    monitor.start()
    try:
        with ProcessManager(processing) as manager:
            results = manager.map(_run_sweep_task, tasks)
    finally:
        monitor.stop()
    logger.info(f"Sweep finished; resource usage {monitor.summary()}")

    rows = summarize(config, [record for batch in results for record in batch])
    order = {c: i for i, c in enumerate(conditions)}
    rows.sort(key=lambda r: order[SweepCondition(r.rsnr_db, r.capacity_bits, r.quantizer)])
    return rows


def summary_frame(rows: Sequence[SummaryRow]) -> pd.DataFrame:
    return pd.DataFrame([asdict(r) for r in rows], columns=SUMMARY_COLUMNS)


def write_summary_csv(rows: Sequence[SummaryRow], path: Union[str, Path]) -> Path:
    """Write summary rows as CSV with 6 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    summary_frame(rows).to_csv(path, index=False, float_format="%.6g", na_rep="nan", lineterminator="\n")
    logger.info(f"Wrote {len(rows)} summary row(s) to {path}")
    return path
