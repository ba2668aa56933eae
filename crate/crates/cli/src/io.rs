use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use gradsim::estimation::ParamSelector;
use gradsim::render::{Frame, Image};
use gradsim::state::SystemState;
use gradsim::SimError;

pub fn frame_name(i: usize) -> String {
    format!("frame_{i:04}.ppm")
}

pub fn silhouette_name(i: usize) -> String {
    format!("silhouette_{i:04}.pgm")
}

pub fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn write_frames(dir: &Path, frames: &[Frame], png: bool) -> Result<()> {
    for (i, f) in frames.iter().enumerate() {
        f.rgb.write_pnm(&dir.join(frame_name(i)))?;
        f.silhouette.write_pnm(&dir.join(silhouette_name(i)))?;
        if png {
            f.rgb.write_png(&dir.join(format!("frame_{i:04}.png")))?;
        }
    }
    Ok(())
}

/// `step,<state columns>` with one row per given state.
pub fn write_states<'a>(path: &Path, rows: impl IntoIterator<Item = (usize, &'a SystemState)>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    let mut header = false;
    for (step, s) in rows {
        if !header {
            writeln!(w, "step,{}", s.column_names().join(","))?;
            header = true;
        }
        write!(w, "{step}")?;
        for v in s.to_row() {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_states(path: &Path, template: &SystemState) -> Result<Vec<(usize, SystemState)>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    let expected = format!("step,{}", template.column_names().join(","));
    if header != expected {
        return Err(SimError::config(format!("{}: columns do not match the scene", path.display())).into());
    }
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        let bad = || SimError::config(format!("{}: bad value on line {}", path.display(), n + 2));
        let mut cells = line.split(',');
        let step: usize = cells.next().and_then(|c| c.parse().ok()).ok_or_else(bad)?;
        let row: Vec<f64> = cells.map(|c| c.parse().map_err(|_| bad())).collect::<std::result::Result<_, _>>()?;
        out.push((step, template.from_row(&row)?));
    }
    Ok(out)
}

/// Reads `count` target frames. Silhouettes are optional unless `need_silhouette`.
pub fn read_target_dir(dir: &Path, count: usize, need_silhouette: bool) -> Result<Vec<Frame>> {
    if !dir.is_dir() {
        return Err(SimError::config(format!("target directory {} does not exist", dir.display())).into());
    }
    let mut frames = Vec::with_capacity(count);
    for i in 0..count {
        let path = dir.join(frame_name(i));
        if !path.exists() {
            return Err(SimError::config(format!("{} is missing ({count} target frames expected)", path.display())).into());
        }
        let rgb = Image::read(&path)?;
        let sil_path = dir.join(silhouette_name(i));
        let silhouette = if sil_path.exists() {
            Image::read(&sil_path)?
        } else if need_silhouette {
            return Err(SimError::config(format!("{} is missing", sil_path.display())).into());
        } else {
            Image::new(rgb.width(), rgb.height(), 1)
        };
        frames.push(Frame { rgb, silhouette });
    }
    Ok(frames)
}

/// Hidden parameter values as `{"selector": value}`, in key order.
pub fn read_hidden(path: &Path) -> Result<Vec<(ParamSelector, f64)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let map: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(&text).map_err(|e| SimError::config(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (k, v) in map {
        let value = v.as_f64().ok_or_else(|| SimError::config(format!("{}: {k} must be a number", path.display())))?;
        out.push((ParamSelector::parse(&k)?, value));
    }
    if out.is_empty() {
        bail!(SimError::config(format!("{}: no parameters given", path.display())));
    }
    Ok(out)
}

pub fn write_trace(path: &Path, trace: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "iter,loss")?;
    for (i, l) in trace.iter().enumerate() {
        writeln!(w, "{i},{l:e}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
