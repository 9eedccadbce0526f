"""
Resource monitoring during Monte-Carlo sweeps.

This module handles:
- CPU and memory usage sampling on a background thread
- Threshold warnings for resource pressure
- Bounded status history and an end-of-sweep summary
"""

import logging
import threading
import time
from dataclasses import dataclass
from typing import Dict, List, Optional

import psutil

logger = logging.getLogger(__name__)


@dataclass
class SystemStatus:
    """Container for host resource metrics."""
    cpu_usage: float
    memory_usage: float
    timestamp: float


class SystemMonitor:
    """
    Samples host resources while a sweep runs.

    Warnings are issued once per crossing of a threshold, not on every sample.
    """

    def __init__(self, update_interval: float = 5.0, history_size: int = 100,
                 cpu_warning: float = 95.0, memory_warning: float = 90.0) -> None:
        """
        Initialize the system monitor.

        Args:
            update_interval: Seconds between samples
            history_size: Number of samples kept
            cpu_warning: CPU usage warning threshold, percent
            memory_warning: Memory usage warning threshold, percent
        """
        self.update_interval = update_interval
        self.cpu_warning = cpu_warning
        self.memory_warning = memory_warning
        self.is_running: bool = False
        self.monitor_thread: Optional[threading.Thread] = None
        self._stop_event = threading.Event()
        self._lock = threading.Lock()

        self.status_history: List[SystemStatus] = []
        self.status_history_max_size = history_size

        # Warning flags to prevent spam
        self._cpu_warning_sent = False
        self._memory_warning_sent = False

        logger.debug("System monitor initialized")

    def start(self) -> None:
        """Start the monitoring thread."""
        if self.is_running:
            return

        self.is_running = True
        self._stop_event.clear()
        self.monitor_thread = threading.Thread(
            target=self._monitoring_loop,
            daemon=True,
            name="SystemMonitorThread"
        )
        self.monitor_thread.start()
        logger.debug("System monitoring started")

    def stop(self) -> None:
        """Stop the monitoring thread."""
        self.is_running = False
        self._stop_event.set()
        if self.monitor_thread:
            self.monitor_thread.join(timeout=2.0)
        logger.debug("System monitoring stopped")

    def get_current_status(self) -> SystemStatus:
        """Sample the current system status."""
        return SystemStatus(
            cpu_usage=psutil.cpu_percent(),
            memory_usage=psutil.virtual_memory().percent,
            timestamp=time.time()
        )

    def get_status_history(self) -> List[SystemStatus]:
        """Get the history of system status readings."""
        with self._lock:
            return self.status_history.copy()

    def record(self, status: SystemStatus) -> None:
        """Check thresholds and append a reading to the history."""
        self._check_thresholds(status)
        with self._lock:
            self.status_history.append(status)
            if len(self.status_history) > self.status_history_max_size:
                self.status_history = self.status_history[-self.status_history_max_size:]

    def summary(self) -> Dict[str, float]:
        """Peak and mean usage over the recorded history."""
        history = self.get_status_history()
        if not history:
            return {"samples": 0}
        cpu = [s.cpu_usage for s in history]
        memory = [s.memory_usage for s in history]
        return {
            "samples": len(history),
            "cpu_mean": sum(cpu) / len(cpu),
            "cpu_peak": max(cpu),
            "memory_peak": max(memory),
        }

    def _monitoring_loop(self) -> None:
        """Main monitoring loop that runs in a separate thread."""
        while not self._stop_event.is_set():
            try:
                self.record(self.get_current_status())
            except Exception as e:
                logger.error(f"Error in monitoring loop: {str(e)}", exc_info=True)
            self._stop_event.wait(self.update_interval)

    def _check_thresholds(self, status: SystemStatus) -> None:
        """Warn when usage crosses a threshold."""
        if status.cpu_usage >= self.cpu_warning and not self._cpu_warning_sent:
            logger.warning(f"High CPU usage: {status.cpu_usage:.1f}%")
            self._cpu_warning_sent = True
        elif status.cpu_usage < self.cpu_warning:
            self._cpu_warning_sent = False

        if status.memory_usage >= self.memory_warning and not self._memory_warning_sent:
            logger.warning(f"High memory usage: {status.memory_usage:.1f}%")
            self._memory_warning_sent = True
        elif status.memory_usage < self.memory_warning:
            self._memory_warning_sent = False
