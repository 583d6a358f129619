"""Shared terminal logger for the engines, the runner and the CLI

Console output modes (TERMINAL_OUTPUT environment variable):
- "full" (default): every entry, colored by type
- "selective": experiment starts and verdicts, warnings and errors
- "none": nothing on the console; entries are still buffered

Console output goes to stderr so that stdout carries only the `cb` summary.

Usage:
    python cb.py theorem32 --config configs/theorem32.cfg
    TERMINAL_OUTPUT=selective python cb.py regvar --config configs/regvar.cfg
"""
from collections import deque
from datetime import datetime
from threading import Lock
import os
import sys
import time

OUTPUT_MODES = ("full", "selective", "none")
BUFFER_SIZE = 1000


class TerminalLogger:
    """Process-wide singleton; the buffer is safe to share across threads"""

    _instance = None
    _lock = Lock()

    # one color per engine, verdict colors last
    COLORS = {
        'MECHANISM': '\033[95m',
        'FLOW': '\033[94m',
        'LIMITS': '\033[96m',
        'INVERT': '\033[33m',
        'REGVAR': '\033[35m',
        'MONTECARLO': '\033[90m',
        'EXPERIMENT': '\033[93m',
        'SUCCESS': '\033[92m',
        'WARNING': '\033[91m',
        'ERROR': '\033[1;91m',
        'INFO': '\033[37m',
    }
    RESET = '\033[0m'
    VERDICT_TYPES = frozenset({'EXPERIMENT', 'SUCCESS', 'WARNING', 'ERROR'})

    def __new__(cls):
        if cls._instance is None:
            with cls._lock:
                if cls._instance is None:
                    instance = super().__new__(cls)
                    instance._entries = deque(maxlen=BUFFER_SIZE)
                    instance._entries_lock = Lock()
                    instance._started = time.monotonic()
                    mode = os.getenv("TERMINAL_OUTPUT", "full").strip().lower()
                    instance.output_mode = mode if mode in OUTPUT_MODES else "full"
                    cls._instance = instance
        return cls._instance

    def add_log(self, message: str, log_type: str = "INFO", module: str = None):
        """
        Buffer an entry and echo it according to the output mode.

        Args:
            message: Text of the entry
            log_type: One of the COLORS keys (FLOW, INVERT, EXPERIMENT, ...)
            module: Emitting module, e.g. "flow" or "experiment_runner"
        """
        entry = {
            "timestamp": datetime.now().strftime("%H:%M:%S"),
            "elapsed": round(time.monotonic() - self._started, 3),
            "type": log_type,
            "module": module,
            "message": message,
        }
        with self._entries_lock:
            self._entries.append(entry)
        if self._echoes(log_type):
            self._print_to_console(entry)

    def _echoes(self, log_type: str) -> bool:
        if self.output_mode == "selective":
            return log_type in self.VERDICT_TYPES
        return self.output_mode == "full"

    def _print_to_console(self, entry: dict):
        color = self.COLORS.get(entry["type"], self.COLORS['INFO'])
        source = f" {entry['module']}:" if entry["module"] else ""
        print(f"{color}[{entry['timestamp']}] [{entry['type']:10}]{self.RESET}{source} {entry['message']}",
              file=sys.stderr)

    def get_logs(self, limit: int = None, log_type: str = None, module: str = None):
        """Buffered entries, oldest first, filtered by type ("ALL" for any) and module"""
        with self._entries_lock:
            logs = list(self._entries)
        if log_type and log_type != "ALL":
            logs = [log for log in logs if log["type"] == log_type]
        if module:
            logs = [log for log in logs if log["module"] == module]
        return logs[-limit:] if limit else logs

    def clear_logs(self):
        with self._entries_lock:
            self._entries.clear()

    def set_output_mode(self, mode: str):
        if mode not in OUTPUT_MODES:
            raise ValueError(f"unknown output mode '{mode}' (known: {', '.join(OUTPUT_MODES)})")
        self.output_mode = mode


terminal_logger = TerminalLogger()
