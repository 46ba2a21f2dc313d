"""Per-subject preprocessing chain from raw recordings to aligned 1 Hz series."""
from dataclasses import dataclass
from typing import Dict, List, Optional

from rich.progress import Progress

from .config import PreprocessConfig, WindowConfig
from .data import Dataset, LabelSeries, SensorLocation, SubjectMeta, SubjectRecord, UniformSeries, UniformTriaxial, align_overlap
from .dsp import interp_to_1hz, lowpass_acceleration, remove_gravity, resample_bin_mean, savgol_smooth
from .energetics import RmrEstimate, derive_paee, estimate_rmr
from .features import Composition, WindowSet, build_supervised_windows
from .logging import get_logger
from .parallel import ParallelProcessor

logger = get_logger(__name__)


@dataclass(frozen=True, eq=False)
class PreparedSubject:
    """One subject's aligned 1 Hz acceleration, PAEE and activity labels."""
    meta: SubjectMeta
    acc: Dict[SensorLocation, UniformTriaxial]
    paee: UniformSeries
    labels: LabelSeries
    rmr: RmrEstimate

    @property
    def id(self) -> str:
        return self.meta.id

    def windows(self, composition: Composition, window: Optional[WindowConfig] = None) -> WindowSet:
        window = window or WindowConfig()
        return build_supervised_windows(
            self.acc, self.paee, composition,
            window=window.window, step=window.step, horizon=window.horizon,
            subject_id=self.meta.id,
        )


def preprocess_acceleration(record: SubjectRecord, preprocess: PreprocessConfig) -> Dict[SensorLocation, UniformTriaxial]:
    """Gravity removal, 6 Hz low-pass and 1 s bin means for every sensor."""
    out = {}
    for location in SensorLocation:
        raw = record.acc[location]
        dynamic = remove_gravity(raw, preprocess.gravity_order, preprocess.gravity_cutoff_hz)
        smooth = lowpass_acceleration(dynamic, preprocess.butter_order, preprocess.butter_cutoff_hz)
        out[location] = resample_bin_mean(smooth)
    return out


def preprocess_gas(record: SubjectRecord, preprocess: PreprocessConfig):
    """Returns (PAEE series, per-second labels, RMR) for the ADL session."""
    vo2, vco2, labels = interp_to_1hz(record.adl)
    vo2 = savgol_smooth(vo2, preprocess.savgol_window, preprocess.savgol_polyorder)
    vco2 = savgol_smooth(vco2, preprocess.savgol_window, preprocess.savgol_polyorder)
    rmr = estimate_rmr(record.rest, preprocess.rmr_discard_s)
    return derive_paee(vo2, vco2, rmr, record.meta.mass_kg), labels, rmr


def prepare_subject(record: SubjectRecord, preprocess: Optional[PreprocessConfig] = None) -> PreparedSubject:
    preprocess = preprocess or PreprocessConfig()
    acc = preprocess_acceleration(record, preprocess)
    paee, labels, rmr = preprocess_gas(record, preprocess)

    locations = list(SensorLocation)
    aligned = align_overlap([acc[loc] for loc in locations] + [paee, labels])
    logger.debug(
        f"Subject {record.meta.id}: {len(aligned[-1])} aligned seconds from {aligned[-1].start:.0f} s, "
        f"RMR VO2 {rmr.vo2:.1f} mL/min"
    )
    return PreparedSubject(
        meta=record.meta,
        acc=dict(zip(locations, aligned[: len(locations)])),
        paee=aligned[-2],
        labels=aligned[-1],
        rmr=rmr,
    )


def prepare_dataset(
    dataset: Dataset,
    preprocess: Optional[PreprocessConfig] = None,
    max_workers: int = 1,
    progress: Optional[Progress] = None,
) -> List[PreparedSubject]:
    """Prepare every subject; the first failure is re-raised."""
    processor = ParallelProcessor(max_workers=max_workers)
    work_items = processor.process_batch(
        dataset.subjects,
        lambda record: prepare_subject(record, preprocess),
        progress=progress,
        description="[cyan]Preprocessing subjects...",
    )
    for item in work_items:
        if item.error is not None:
            raise item.error
    return [item.result for item in work_items]
