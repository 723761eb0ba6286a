import os
import gc
import logging
import threading
import psutil

logger = logging.getLogger(__name__)


class ResourceMonitor:
    """Log memory and CPU use while a sweep runs and collect garbage under pressure."""

    def __init__(self, check_interval=30, gc_threshold=85.0, shutdown_event=None):
        """Initialize the resource monitor.

        Args:
            check_interval: Seconds between checks
            gc_threshold: System memory percentage above which gc.collect() is forced
            shutdown_event: Optional threading.Event that also stops the monitor
        """
        self.check_interval = check_interval
        self.gc_threshold = gc_threshold
        self.shutdown_event = shutdown_event
        self._stop = threading.Event()
        self.thread = threading.Thread(target=self._monitor, daemon=True)
        self.process = psutil.Process(os.getpid())
        self.samples = 0
        self.collections = 0

    def start(self):
        self.thread.start()
        logger.info("[OK] Resource monitor started")
        return self

    def _stopping(self):
        return self._stop.is_set() or (self.shutdown_event is not None and self.shutdown_event.is_set())

    def check(self):
        """Take one sample; returns (system memory %, process RSS in MB, process CPU %)."""
        memory_percent = psutil.virtual_memory().percent
        process_memory = self.process.memory_info().rss / 1024 / 1024
        cpu_percent = self.process.cpu_percent(interval=None)
        self.samples += 1
        logger.info(f"[MEMORY] System {memory_percent:.1f}%, process {process_memory:.1f}MB, CPU {cpu_percent:.0f}%")
        if memory_percent > self.gc_threshold:
            self.force_garbage_collection()
        return memory_percent, process_memory, cpu_percent

    def _monitor(self):
        while not self._stopping():
            try:
                self.check()
            except Exception as e:
                logger.error(f"[ERROR] Resource monitor error: {e}")
            self._stop.wait(self.check_interval)

    def force_garbage_collection(self):
        collected = gc.collect()
        self.collections += 1
        logger.info(f"[MEMORY] Memory above {self.gc_threshold:.0f}%, garbage collection freed {collected} objects")

    def stop(self):
        self._stop.set()
        if self.thread.is_alive():
            self.thread.join(timeout=self.check_interval + 1)

    def __enter__(self):
        return self.start()

    def __exit__(self, exc_type, exc, tb):
        self.stop()
        return False
