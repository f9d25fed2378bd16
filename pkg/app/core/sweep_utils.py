import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Sequence, TypeVar

import numpy as np

from config import settings
from core.exceptions import DivergenceError
from schemas import SweepRecord

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def map_charts(fn: Callable[[T], R], items: Sequence[T], threads: Optional[int] = None) -> List[R]:
    """
    Runs one solve per chart on a thread pool; results come back in chart
    order so the glue step is deterministic.
    """
    workers = max(1, min(threads or settings.default_threads, len(items)))
    if workers == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def relative_increment(new: np.ndarray, old: np.ndarray) -> float:
    scale = float(np.sqrt(np.sum(new ** 2)))
    diff = float(np.sqrt(np.sum((new - old) ** 2)))
    if scale == 0.0:
        return diff
    return diff / scale


class SweepMonitor:
    """
    Tracks sweep increments and contraction factors.

    The factor of sweep k is increment_k / increment_{k-1}. A run of
    `non_contraction_limit` factors >= 1 raises DivergenceError. With a
    residual_tol, an iterate whose increments have settled but whose largest
    residual is still above it stops the sweeps as stalled, not converged.
    """

    def __init__(self, tol: float, max_iter: int, label: str, delta: Optional[float] = None, residual_tol: Optional[float] = None):
        self.tol = tol
        self.max_iter = max_iter
        self.label = label
        self.delta = delta
        self.residual_tol = residual_tol
        self.stalled = False
        self.history: List[SweepRecord] = []
        self.factors: List[float] = []
        self._previous: Optional[float] = None
        self._strikes = 0

    def record(self, sweep: int, increment: float, residuals: Dict[str, float], charts: int) -> bool:
        """Stores one sweep; returns True once the sweeps should stop."""
        factor = None
        if self._previous is not None and self._previous > settings.stagnation_floor:
            factor = increment / self._previous
            self.factors.append(factor)
        self.history.append(
            SweepRecord(
                sweep=sweep,
                increment=increment,
                contraction=factor,
                momentum_residual=residuals.get("momentum", 0.0),
                divergence_residual=residuals.get("divergence", 0.0),
                normal_residual=residuals.get("normal", 0.0),
                slip_residual=residuals.get("slip", 0.0),
                charts=charts,
            )
        )
        logger.info(f"{self.label} sweep {sweep}: increment={increment:.3e}, factor={factor if factor is None else f'{factor:.3f}'}")
        self._previous = increment

        if sweep > 1 and (increment <= self.tol or increment < settings.stagnation_floor):
            worst = max(residuals.values(), default=0.0)
            if self.residual_tol is not None and worst > self.residual_tol:
                self.stalled = True
                logger.warning(f"{self.label} sweep {sweep}: increments settled with residual {worst:.3e} above {self.residual_tol:g}.")
            return True
        if factor is not None and factor >= 1.0:
            self._strikes += 1
            if self._strikes >= settings.non_contraction_limit:
                logger.error(f"{self.label} stopped contracting after sweep {sweep} (factor {factor:.3f}).")
                raise DivergenceError(
                    f"{self.label}: contraction factor {factor:.3f} >= 1 for {self._strikes} consecutive sweeps"
                    + (f"; certified atlas bound delta={self.delta:.4g}" if self.delta is not None else ""),
                    factor=factor,
                    delta=self.delta,
                )
        else:
            self._strikes = 0
        return False

    @property
    def accepted_sweeps(self) -> int:
        """Sweeps needed to produce the accepted iterate."""
        return max(1, len(self.history) - 1)

    @property
    def contraction(self) -> Optional[float]:
        return max(self.factors) if self.factors else None
