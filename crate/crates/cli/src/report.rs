use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use pvctl::env::EpisodeStats;
use pvctl::grid::NetworkModel;

pub const HISTOGRAM_BINS: usize = 10;

/// Counts of `P^c / p_env` in equal bins over `[0, 1]`; the last bin is closed.
pub fn ratio_histogram(ratios: impl IntoIterator<Item = f64>) -> [usize; HISTOGRAM_BINS] {
    let mut counts = [0; HISTOGRAM_BINS];
    for r in ratios {
        let bin = ((r.clamp(0.0, 1.0) * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        counts[bin] += 1;
    }
    counts
}

pub fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush().with_context(|| format!("cannot write {}", path.display()))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// Final voltage at every controllable bus under both controllers.
pub fn write_voltage_profile(path: &Path, model: &NetworkModel, rl: &[EpisodeStats], mppt: &[EpisodeStats]) -> anyhow::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "scenario,bus,v_rl,v_mppt")?;
    for (i, (a, b)) in rl.iter().zip(mppt).enumerate() {
        for (j, &k) in model.controllable().iter().enumerate() {
            writeln!(w, "{i},{},{},{}", model.buses()[k].id, a.final_voltages[j], b.final_voltages[j])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_power_ratios(path: &Path, model: &NetworkModel, rl: &[EpisodeStats], mppt: &[EpisodeStats]) -> anyhow::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "scenario,bus,p_env,ratio_rl,ratio_mppt")?;
    for (i, (a, b)) in rl.iter().zip(mppt).enumerate() {
        let (ra, rb) = (a.power_ratios(), b.power_ratios());
        for (j, &k) in model.controllable().iter().enumerate() {
            writeln!(w, "{i},{},{},{},{}", model.buses()[k].id, a.p_env[j], ra[j], rb[j])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_histogram(path: &Path, rl: &[EpisodeStats], mppt: &[EpisodeStats]) -> anyhow::Result<()> {
    let h_rl = ratio_histogram(rl.iter().flat_map(EpisodeStats::power_ratios));
    let h_mppt = ratio_histogram(mppt.iter().flat_map(EpisodeStats::power_ratios));
    let mut w = create(path)?;
    writeln!(w, "bin_low,bin_high,count_rl,count_mppt")?;
    for b in 0..HISTOGRAM_BINS {
        let lo = b as f64 / HISTOGRAM_BINS as f64;
        let hi = (b + 1) as f64 / HISTOGRAM_BINS as f64;
        writeln!(w, "{lo},{hi},{},{}", h_rl[b], h_mppt[b])?;
    }
    w.flush()?;
    Ok(())
}
