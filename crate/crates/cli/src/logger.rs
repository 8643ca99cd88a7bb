//! Stderr logger that also keeps warnings for the run manifest.

use std::sync::{Mutex, OnceLock};

use log::{Level, LevelFilter, Log, Metadata, Record};

static WARNINGS: Mutex<Vec<String>> = Mutex::new(Vec::new());
static LOGGER: OnceLock<CaptureLogger> = OnceLock::new();

struct CaptureLogger {
    echo: LevelFilter,
}

impl Log for CaptureLogger {
    fn enabled(&self, metadata: &Metadata) -> bool {
        metadata.level() <= Level::Warn || metadata.level() <= self.echo
    }

    fn log(&self, record: &Record) {
        if record.level() <= Level::Warn {
            let line = format!("{}: {}", record.target(), record.args());
            if let Ok(mut w) = WARNINGS.lock() {
                w.push(line);
            }
        }
        if record.level() <= self.echo {
            eprintln!("[{}] {}", record.level(), record.args());
        }
    }

    fn flush(&self) {}
}

/// Installs the logger once per process; later calls are no-ops.
pub fn install(echo: LevelFilter) {
    let logger = LOGGER.get_or_init(|| CaptureLogger { echo });
    if log::set_logger(logger).is_ok() {
        log::set_max_level(LevelFilter::Warn.max(echo));
    }
}

/// Drains the warnings captured since the last call.
pub fn take_warnings() -> Vec<String> {
    WARNINGS
        .lock()
        .map(|mut w| std::mem::take(&mut *w))
        .unwrap_or_default()
}
