//! Result files: tidy CSV tables and pretty JSON documents.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use nagame::StackedSignal;
use serde::Serialize;

pub fn json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// One CSV row per record, with a header from the field names.
pub fn table<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Residual {
    iteration: usize,
    residual: f64,
}

pub fn residuals(path: &Path, history: &[f64]) -> Result<()> {
    let rows: Vec<Residual> = history
        .iter()
        .enumerate()
        .map(|(k, &residual)| Residual {
            iteration: k + 1,
            residual,
        })
        .collect();
    table(path, &rows)
}

#[derive(Serialize)]
struct Entry {
    iteration: usize,
    agent: usize,
    component: usize,
    value: f64,
}

fn entries(iteration: usize, z: &StackedSignal) -> impl Iterator<Item = Entry> + '_ {
    let m = z.matrix();
    (0..m.ncols()).flat_map(move |agent| {
        (0..m.nrows()).map(move |component| Entry {
            iteration,
            agent,
            component,
            value: m[(component, agent)],
        })
    })
}

/// Every iterate, long format; iteration 0 is the initial signal.
pub fn trajectory(path: &Path, iterates: &[StackedSignal]) -> Result<()> {
    let rows: Vec<Entry> = iterates
        .iter()
        .enumerate()
        .flat_map(|(k, z)| entries(k, z))
        .collect();
    table(path, &rows)
}

#[derive(Serialize)]
struct Strategy {
    agent: usize,
    component: usize,
    value: f64,
}

pub fn strategies(path: &Path, x: &StackedSignal) -> Result<()> {
    let rows: Vec<Strategy> = entries(0, x)
        .map(|e| Strategy {
            agent: e.agent,
            component: e.component,
            value: e.value,
        })
        .collect();
    table(path, &rows)
}
