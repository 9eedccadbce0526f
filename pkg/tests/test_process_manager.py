"""
Test cases for the process manager
"""

import unittest
from unittest.mock import patch

from config.config_manager import ProcessingConfig
from modules.process_manager import ProcessManager, default_worker_count


def square(x):
    return x * x


class TestProcessManager(unittest.TestCase):
    def test_default_worker_count(self):
        """Test that zero workers means one per physical core."""
        with patch("modules.process_manager.psutil.cpu_count", return_value=3):
            self.assertEqual(default_worker_count(), 3)
            self.assertEqual(ProcessManager(ProcessingConfig(num_workers=0)).num_workers, 3)
        with patch("modules.process_manager.psutil.cpu_count", return_value=None), \
                patch("modules.process_manager.os.cpu_count", return_value=None):
            self.assertEqual(default_worker_count(), 1)

    def test_serial_map(self):
        """Test that one worker maps in-process without a pool."""
        manager = ProcessManager(ProcessingConfig(num_workers=1))
        self.assertFalse(manager.parallel)
        with manager:
            self.assertIsNone(manager._pool)
            self.assertEqual(manager.map(square, range(5)), [0, 1, 4, 9, 16])

    def test_parallel_map_preserves_order(self):
        """Test that pooled results come back in submission order."""
        with ProcessManager(ProcessingConfig(num_workers=2, chunk_size=3)) as manager:
            self.assertTrue(manager.parallel)
            self.assertEqual(manager.map(square, range(20)), [x * x for x in range(20)])
        self.assertIsNone(manager._pool)

    def test_single_task_runs_in_process(self):
        """Test that a single task skips the pool, so unpicklable callables work."""
        with ProcessManager(ProcessingConfig(num_workers=4)) as manager:
            self.assertEqual(manager.map(lambda x: x + 1, [41]), [42])


if __name__ == '__main__':
    unittest.main()
