# -*- coding: utf-8 -*-
"""
Desktop front end: experiment runner and snapshot inspector.
"""

import logging
import sys
import traceback
from typing import List, Optional

from PySide6.QtCore import QThread, Signal
from PySide6.QtWidgets import (
    QApplication, QCheckBox, QFileDialog, QGridLayout, QGroupBox, QHBoxLayout, QLabel, QLineEdit,
    QMainWindow, QMessageBox, QProgressBar, QPushButton, QSpinBox, QTableWidget, QTableWidgetItem,
    QTabWidget, QTextEdit, QVBoxLayout, QWidget,
)

from .errors import VortraceError
from .harness import COMMANDS, load_config, run_command
from . import snapshot as snapshots


class _SignalHandler(logging.Handler):
    """Forwards package log records to a Qt signal."""

    def __init__(self, signal):
        super().__init__(logging.INFO)
        self.signal = signal
        self.setFormatter(logging.Formatter("%(name)s: %(message)s"))

    def emit(self, record):
        self.signal.emit(self.format(record))


class RunnerWorker(QThread):
    progress_signal = Signal(int, int, str)  # current, total, message
    log_signal = Signal(str)
    finished_signal = Signal(dict)  # summary report

    def __init__(self, config_path: str, commands: List[str], output_dir: str, seed: Optional[int], threads: int):
        super().__init__()
        self.config_path = config_path
        self.commands = commands
        self.output_dir = output_dir
        self.seed = seed
        self.threads = threads
        self._is_running = True

    def run(self):
        total = len(self.commands)
        ok, failed, skipped = 0, 0, 0
        handler = _SignalHandler(self.log_signal)
        package_logger = logging.getLogger("vortrace")
        package_logger.addHandler(handler)
        package_logger.setLevel(logging.INFO)
        try:
            cfg = load_config(self.config_path or None, {"seed": self.seed, "threads": self.threads})
        except VortraceError as e:
            self.log_signal.emit(f"[FAIL] config: {e}")
            package_logger.removeHandler(handler)
            self.finished_signal.emit({"total": total, "ok": 0, "fail": total, "skipped": 0})
            return

        for idx, command in enumerate(self.commands):
            if not self._is_running:
                skipped += total - idx
                break
            out = f"{self.output_dir}/{command}"
            self.progress_signal.emit(idx, total, f"Running {command}")
            try:
                result = run_command(command, cfg, out)
                self.log_signal.emit(f"[OK] {command} -> {out}")
                for key, value in result.summary.items():
                    self.log_signal.emit(f"    {key}: {value}")
                ok += 1
            except VortraceError as e:
                self.log_signal.emit(f"[FAIL] {command}: {e}")
                failed += 1
            except Exception:
                self.log_signal.emit(f"[FAIL] {command}: {traceback.format_exc()}")
                failed += 1
            self.progress_signal.emit(idx + 1, total, f"Finished {command}")

        package_logger.removeHandler(handler)
        self.finished_signal.emit({"total": total, "ok": ok, "fail": failed, "skipped": skipped})

    def stop(self):
        self._is_running = False


class RunnerWidget(QWidget):
    def __init__(self):
        super().__init__()
        self.worker = None
        self.init_ui()

    def init_ui(self):
        layout = QVBoxLayout(self)

        settings_group = QGroupBox("Experiment")
        grid = QGridLayout()

        grid.addWidget(QLabel("Config file:"), 0, 0)
        self.edit_config = QLineEdit()
        btn_config = QPushButton("Browse...")
        btn_config.clicked.connect(self.browse_config)
        grid.addWidget(self.edit_config, 0, 1)
        grid.addWidget(btn_config, 0, 2)

        grid.addWidget(QLabel("Output directory:"), 1, 0)
        self.edit_out_dir = QLineEdit("vortrace_out")
        btn_out = QPushButton("Browse...")
        btn_out.clicked.connect(self.browse_output)
        grid.addWidget(self.edit_out_dir, 1, 1)
        grid.addWidget(btn_out, 1, 2)

        grid.addWidget(QLabel("Seed (blank = config):"), 2, 0)
        self.edit_seed = QLineEdit()
        grid.addWidget(self.edit_seed, 2, 1)

        grid.addWidget(QLabel("Threads (0 = all):"), 3, 0)
        self.spin_threads = QSpinBox()
        self.spin_threads.setRange(0, 256)
        grid.addWidget(self.spin_threads, 3, 1)

        settings_group.setLayout(grid)
        layout.addWidget(settings_group)

        commands_group = QGroupBox("Subcommands")
        row = QHBoxLayout()
        self.checks = {}
        for name in COMMANDS:
            box = QCheckBox(name)
            box.setChecked(name == "simulate")
            self.checks[name] = box
            row.addWidget(box)
        commands_group.setLayout(row)
        layout.addWidget(commands_group)

        self.progress_bar = QProgressBar()
        layout.addWidget(self.progress_bar)

        self.log_text = QTextEdit()
        self.log_text.setReadOnly(True)
        layout.addWidget(self.log_text)

        btn_layout = QHBoxLayout()
        self.btn_start = QPushButton("Run")
        self.btn_start.clicked.connect(self.start_run)
        self.btn_start.setFixedHeight(40)
        self.btn_start.setStyleSheet("font-weight: bold; font-size: 14px;")
        self.btn_stop = QPushButton("Stop after current")
        self.btn_stop.clicked.connect(self.stop_run)
        self.btn_stop.setEnabled(False)
        btn_layout.addWidget(self.btn_start)
        btn_layout.addWidget(self.btn_stop)
        layout.addLayout(btn_layout)

    def browse_config(self):
        path, _ = QFileDialog.getOpenFileName(self, "Select config", "", "INI files (*.ini);;All files (*)")
        if path:
            self.edit_config.setText(path)

    def browse_output(self):
        d = QFileDialog.getExistingDirectory(self, "Select Output Directory")
        if d:
            self.edit_out_dir.setText(d)

    def start_run(self):
        commands = [name for name, box in self.checks.items() if box.isChecked()]
        if not commands:
            QMessageBox.warning(self, "Error", "Select at least one subcommand.")
            return
        seed_text = self.edit_seed.text().strip()
        try:
            seed = int(seed_text, 0) if seed_text else None
        except ValueError:
            QMessageBox.warning(self, "Error", f"Seed '{seed_text}' is not an integer.")
            return

        self.btn_start.setEnabled(False)
        self.btn_stop.setEnabled(True)
        self.log_text.clear()
        self.progress_bar.setValue(0)

        self.worker = RunnerWorker(self.edit_config.text().strip(), commands,
                                   self.edit_out_dir.text().strip() or "vortrace_out", seed,
                                   self.spin_threads.value())
        self.worker.progress_signal.connect(self.update_progress)
        self.worker.log_signal.connect(self.append_log)
        self.worker.finished_signal.connect(self.run_finished)
        self.worker.start()

    def stop_run(self):
        if self.worker:
            self.worker.stop()
            self.append_log("Stopping after the current subcommand...")

    def update_progress(self, current, total, msg):
        self.progress_bar.setMaximum(total)
        self.progress_bar.setValue(current)

    def append_log(self, text):
        self.log_text.append(text)

    def run_finished(self, summary):
        self.btn_start.setEnabled(True)
        self.btn_stop.setEnabled(False)
        QMessageBox.information(
            self, "Finished",
            f"Runs complete.\n\nTotal: {summary['total']}\nOK: {summary['ok']}\n"
            f"Failed: {summary['fail']}\nSkipped: {summary['skipped']}",
        )


class SnapshotInspector(QWidget):
    def __init__(self):
        super().__init__()
        layout = QVBoxLayout(self)

        top = QHBoxLayout()
        btn_open = QPushButton("Open snapshot...")
        btn_open.clicked.connect(self.open_snapshot)
        top.addWidget(btn_open)
        top.addStretch()
        layout.addLayout(top)

        self.header_label = QLabel("No snapshot loaded")
        layout.addWidget(self.header_label)

        self.table = QTableWidget(0, 5)
        self.table.setHorizontalHeaderLabels(["k1", "k2", "Re", "Im", "|w_k|"])
        layout.addWidget(self.table)

    def open_snapshot(self):
        path, _ = QFileDialog.getOpenFileName(self, "Open snapshot", "", "Snapshots (*.vtrc);;All files (*)")
        if path:
            self.show_snapshot(path)

    def show_snapshot(self, path: str):
        try:
            snap = snapshots.load(path)
        except (OSError, VortraceError) as e:
            QMessageBox.warning(self, "Error", f"Cannot read {path}:\n{e}")
            return
        rng = snap.rng
        self.header_label.setText(
            f"N = {snap.cutoff}   t = {snap.t:.6g}   modes = {snap.field.modes.size}   "
            f"|w| = {snap.field.norm():.6g}   rng: seed {rng.seed}, stream {rng.stream}, "
            f"counter {rng.counter}{', antithetic' if rng.antithetic else ''}"
        )
        ms = snap.field.modes
        c = snap.field.coeffs
        self.table.setRowCount(ms.size)
        for i in range(ms.size):
            values = [str(int(ms.k1[i])), str(int(ms.k2[i])), f"{c[i].real:.17g}", f"{c[i].imag:.17g}",
                      f"{abs(c[i]):.6g}"]
            for j, text in enumerate(values):
                self.table.setItem(i, j, QTableWidgetItem(text))


class MainWindow(QMainWindow):
    def __init__(self):
        super().__init__()
        self.setWindowTitle("vortrace - vorticity & tracer lab")
        self.resize(1024, 660)

        tabs = QTabWidget()
        tabs.addTab(RunnerWidget(), "Experiment Runner")
        tabs.addTab(SnapshotInspector(), "Snapshot Inspector")
        self.setCentralWidget(tabs)


def main() -> int:
    app = QApplication.instance() or QApplication(sys.argv)
    win = MainWindow()
    win.show()
    return app.exec()


if __name__ == "__main__":
    sys.exit(main())
