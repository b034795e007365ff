//! CSV output for plotting with external tools.

use std::path::Path;

use serde::Serialize;

use super::{PhaseProfile, SuccessMatrix, TransitionEpisodeResult};

/// One CSV row per item, header from the field names.
pub fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), csv::Error> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_episodes(path: &Path, episodes: &[TransitionEpisodeResult]) -> Result<(), csv::Error> {
    write_rows(path, episodes)
}

pub fn write_matrices(path: &Path, matrices: &[SuccessMatrix]) -> Result<(), csv::Error> {
    write_rows(path, matrices.iter().flat_map(|m| m.cells.iter()))
}

#[derive(Serialize)]
struct ProfileRow<'a> {
    source: &'a str,
    target: &'a str,
    bin: usize,
    phase_start: f64,
    phase_end: f64,
    episodes: usize,
    successes: usize,
    rate: f64,
    mean_duration: f64,
}

pub fn write_profiles(path: &Path, profiles: &[PhaseProfile]) -> Result<(), csv::Error> {
    let rows = profiles.iter().flat_map(|p| {
        let rates = p.rates();
        (0..p.bins).map(move |b| {
            let r = p.bin_range(b);
            ProfileRow {
                source: &p.source,
                target: &p.target,
                bin: b,
                phase_start: r.start,
                phase_end: r.end,
                episodes: p.counts[b],
                successes: p.successes[b],
                rate: rates[b],
                mean_duration: p.mean_durations[b],
            }
        })
    });
    write_rows(path, rows)
}

/// One projected state.
#[derive(Debug, Clone, Serialize)]
pub struct PcaRow {
    pub group: String,
    pub pc1: f64,
    pub pc2: f64,
}

pub fn write_pca(path: &Path, rows: &[PcaRow]) -> Result<(), csv::Error> {
    write_rows(path, rows)
}

#[derive(Serialize)]
struct GridRow {
    pc1: f64,
    pc2: f64,
    density: f64,
    inside_95: bool,
}

/// Density grid of the composer states with a flag for the 95% contour.
pub fn write_density_grid(path: &Path, grid: &[[f64; 3]], level: f64) -> Result<(), csv::Error> {
    write_rows(
        path,
        grid.iter().map(|g| GridRow {
            pc1: g[0],
            pc2: g[1],
            density: g[2],
            inside_95: g[2] >= level,
        }),
    )
}
