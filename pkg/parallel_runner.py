"""
Rokhlin Model Checker - Parallel Runner Module
==============================================
Valutazione parallela di misure indipendenti (difetti per funzione test,
scansioni di verifica) su un pool di thread, con risultati nell'ordine
degli input: l'output non dipende dal numero di worker.
"""

import logging
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Any, Callable, Optional, Sequence, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class EvaluationStopped(RuntimeError):
    """Valutazione interrotta da stop() prima del completamento"""


class ParallelEvaluator:
    """Gestisce l'esecuzione multi-thread delle valutazioni"""

    def __init__(self, max_workers: int = 1):
        if max_workers < 1:
            raise ValueError(f"Servono almeno un worker: {max_workers}")
        self.max_workers = max_workers
        self._stop_flag = threading.Event()
        self._lock = threading.Lock()

    def stop(self):
        """Ferma l'esecuzione delle valutazioni"""
        self._stop_flag.set()

    def reset(self):
        """Reset per un nuovo lotto"""
        self._stop_flag.clear()

    def map(self, func: Callable[[T], R], items: Sequence[T],
            progress_callback: Optional[Callable[[str, int, int], None]] = None) -> list[R]:
        """
        Applica func a ogni elemento. Con un solo worker la valutazione è
        sequenziale; le eccezioni dei worker vengono rilanciate.
        """
        self.reset()
        items = list(items)
        total = len(items)
        results: list[Any] = [None] * total
        completed = [0]

        def worker(index: int):
            if self._stop_flag.is_set():
                return
            results[index] = func(items[index])
            with self._lock:
                completed[0] += 1
                done = completed[0]
            if progress_callback:
                progress_callback(f"Elemento {index + 1}/{total} completato", done, total)

        if self.max_workers == 1 or total <= 1:
            for i in range(total):
                worker(i)
        else:
            with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
                futures = {executor.submit(worker, i): i for i in range(total)}
                for future in as_completed(futures):
                    if self._stop_flag.is_set():
                        executor.shutdown(wait=False, cancel_futures=True)
                        break
                    future.result()

        if self._stop_flag.is_set() and completed[0] < total:
            raise EvaluationStopped(f"Valutazione interrotta dopo {completed[0]}/{total} elementi")
        logger.debug("Valutati %d elementi con %d worker", total, self.max_workers)
        return results
