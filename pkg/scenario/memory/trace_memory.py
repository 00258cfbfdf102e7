"""
Trace memory for scenario runs.
Stores rendered traces on disk with a JSON index; replays look traces up here.
"""

import hashlib
import json
import logging
import os
from datetime import datetime
from typing import Any, Dict, Optional


class TraceMemory:
    """
    Trace memory for storing and retrieving rendered traces.
    """

    def __init__(self, memory_dir: str):
        """
        Initialize the trace memory.

        Args:
            memory_dir: Directory to store traces and the index
        """
        self.logger = logging.getLogger("chordsim.scenario.trace_memory")
        self.memory_dir = memory_dir
        self.index_file = os.path.join(memory_dir, "trace_index.json")
        self.index: Dict[str, Dict[str, Any]] = {}

        os.makedirs(self.memory_dir, exist_ok=True)
        self._load_index()

    def _load_index(self):
        """Load the trace index from disk."""
        if os.path.exists(self.index_file):
            try:
                with open(self.index_file, "r", encoding="utf-8") as f:
                    self.index = json.load(f)
                self.logger.info(f"Loaded trace index with {len(self.index)} entries")
            except (OSError, json.JSONDecodeError) as e:
                self.logger.error(f"Error loading trace index: {e}")
                self.index = {}

    def _save_index(self):
        """Save the trace index to disk."""
        try:
            with open(self.index_file, "w", encoding="utf-8") as f:
                json.dump(self.index, f, indent=2, sort_keys=True)
        except OSError as e:
            self.logger.error(f"Error saving trace index: {e}")

    @staticmethod
    def digest(text: str) -> str:
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    @staticmethod
    def trace_id(scenario: str, mode: str, seed: int) -> str:
        name = os.path.splitext(os.path.basename(scenario))[0]
        return f"{name}_{mode}_{seed}"

    def add_trace(self, scenario: str, mode: str, seed: int, max_steps: int, text: str,
                  exit_status: int, path: Optional[str] = None) -> str:
        """
        Store a rendered trace and index it.

        Args:
            scenario: Scenario name or path
            mode: Run mode
            seed: Run seed
            max_steps: Step limit of the run
            text: Rendered trace
            exit_status: Exit status of the run
            path: Where to write the trace, defaults to a file in the memory directory

        Returns:
            The trace id
        """
        trace_id = self.trace_id(scenario, mode, seed)
        path = path or os.path.join(self.memory_dir, f"{trace_id}.trace")
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)

        self.index[trace_id] = {
            "scenario": scenario,
            "mode": mode,
            "seed": seed,
            "max_steps": max_steps,
            "exit_status": exit_status,
            "digest": self.digest(text),
            "path": os.path.abspath(path),
            "stored_at": datetime.now().isoformat(),
        }
        self._save_index()
        self.logger.info(f"Stored trace {trace_id} at {path}")
        return trace_id

    def get_trace(self, trace_id: str) -> Optional[str]:
        """
        Read a stored trace.

        Args:
            trace_id: Id returned by add_trace

        Returns:
            The trace text, or None when the id or its file is missing
        """
        entry = self.index.get(trace_id)
        if entry is None or not os.path.exists(entry["path"]):
            return None
        with open(entry["path"], "r", encoding="utf-8") as f:
            text = f.read()
        if self.digest(text) != entry["digest"]:
            self.logger.warning(f"Trace {trace_id} changed on disk since it was stored")
        return text

    def find_by_path(self, path: str) -> Optional[Dict[str, Any]]:
        """Index entry of the trace stored at path, if any."""
        target = os.path.abspath(path)
        for trace_id, entry in self.index.items():
            if entry["path"] == target:
                return {"trace_id": trace_id, **entry}
        return None

    def resolve(self, ref: str) -> Optional[Dict[str, Any]]:
        """Index entry for a trace id or for the path a trace was stored at."""
        if ref in self.index:
            return {"trace_id": ref, **self.index[ref]}
        return self.find_by_path(ref)
