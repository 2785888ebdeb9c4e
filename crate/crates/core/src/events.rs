//! Optional per-agent event log.
//!
//! One record per line, whitespace separated:
//!
//! ```text
//! pull   <t> <agent> <arm> <reward> <phase>
//! rec    <phase> <agent> <contact> <arm>
//! active <phase> <agent> <arm> <arm> ...
//! ```

use std::io::{self, Write};

pub trait EventSink {
    fn pull(&mut self, t: u64, agent: usize, arm: usize, reward: f64, phase: u64);
    fn rec(&mut self, phase: u64, agent: usize, contact: usize, arm: usize);
    fn active(&mut self, phase: u64, agent: usize, arms: &[usize]);
}

/// Writes events as text lines. The first I/O error is kept and reported by
/// [`LineLog::finish`]; later events are dropped.
pub struct LineLog<W: Write> {
    out: W,
    error: Option<io::Error>,
}

impl<W: Write> LineLog<W> {
    pub fn new(out: W) -> Self {
        Self { out, error: None }
    }

    fn emit(&mut self, args: std::fmt::Arguments<'_>) {
        if self.error.is_none() {
            if let Err(e) = self.out.write_fmt(args) {
                self.error = Some(e);
            }
        }
    }

    pub fn finish(mut self) -> io::Result<W> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

impl<W: Write> EventSink for LineLog<W> {
    fn pull(&mut self, t: u64, agent: usize, arm: usize, reward: f64, phase: u64) {
        self.emit(format_args!("pull {t} {agent} {arm} {reward:?} {phase}\n"));
    }

    fn rec(&mut self, phase: u64, agent: usize, contact: usize, arm: usize) {
        self.emit(format_args!("rec {phase} {agent} {contact} {arm}\n"));
    }

    fn active(&mut self, phase: u64, agent: usize, arms: &[usize]) {
        self.emit(format_args!("active {phase} {agent}"));
        for a in arms {
            self.emit(format_args!(" {a}"));
        }
        self.emit(format_args!("\n"));
    }
}
