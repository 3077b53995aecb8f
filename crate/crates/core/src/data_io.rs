//! Curvature data: FBG strain ingestion, synthetic generators, batching and
//! the CSV formats.
//!
//! Strain CSV: `t_s,sensor_x_mm,row,value,kind`, `row` in {top, bottom} and
//! `kind` in {strain_microstrain, wavelength_nm}. Curvature CSV:
//! `t_s,x_mm,curvature_per_mm`, one line per (time, sensor). Lines starting
//! with `#` are metadata comments.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand_distr::{Distribution, Normal};

use crate::beam::{curvature_physics, BeamConfig, CurvatureMethod, PhysicsParams};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// FBG sampling rate (Hz).
pub const SAMPLE_RATE_HZ: f64 = 50.0;
/// Photo-elastic scaling between relative Bragg shift and strain.
pub const STRAIN_OPTIC_FACTOR: f64 = 0.78;
pub const CURVATURE_SCHEMA: &str = "physgp-curvature-v1";
pub const STRAIN_SCHEMA: &str = "physgp-strain-v1";

/// Strain in microstrain from a Bragg wavelength and its reference.
pub fn wavelength_to_strain(lambda_t: f64, lambda_0: f64) -> f64 {
    1e6 * (lambda_t - lambda_0) / (STRAIN_OPTIC_FACTOR * lambda_0)
}

/// Curvature (mm⁻¹) from top and bottom microstrain over the strand
/// separation (mm).
pub fn strain_to_curvature(top: f64, bottom: f64, strand_sep: f64) -> f64 {
    (top - bottom) * 1e-6 / strand_sep
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    Simulated,
    Ingested,
}

/// `M × N_f` curvature observations, one row per time index.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureBatch {
    times: Vec<f64>,
    rows: Vec<Vec<f64>>,
    source: DataSource,
}

impl CurvatureBatch {
    pub fn new(times: Vec<f64>, rows: Vec<Vec<f64>>, source: DataSource) -> Result<Self> {
        if times.len() != rows.len() {
            return Err(Error::Config(format!(
                "{} time indices for {} rows",
                times.len(),
                rows.len()
            )));
        }
        if let Some(first) = rows.first() {
            let n = first.len();
            if let Some(i) = rows.iter().position(|r| r.len() != n) {
                return Err(Error::Config(format!("row {i} has {} cells, expected {n}", rows[i].len())));
            }
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("curvature values must be finite".into()));
        }
        Ok(CurvatureBatch { times, rows, source })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_sensors(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn source(&self) -> DataSource {
        self.source
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// Rows `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> CurvatureBatch {
        CurvatureBatch {
            times: self.times[start..end].to_vec(),
            rows: self.rows[start..end].to_vec(),
            source: self.source,
        }
    }

    /// Consecutive batches of `len` rows; an incomplete tail is dropped.
    pub fn batches(&self, len: usize) -> Vec<CurvatureBatch> {
        if len == 0 {
            return Vec::new();
        }
        (0..self.n_rows() / len)
            .map(|i| self.slice(i * len, (i + 1) * len))
            .collect()
    }

    /// Same rows restricted to the given sensor columns.
    pub fn select_sensors(&self, cols: &[usize]) -> CurvatureBatch {
        CurvatureBatch {
            times: self.times.clone(),
            rows: self.rows.iter().map(|r| cols.iter().map(|&j| r[j]).collect()).collect(),
            source: self.source,
        }
    }

    pub fn check_sensors(&self, cfg: &BeamConfig) -> Result<()> {
        if self.n_rows() > 0 && self.n_sensors() != cfg.n_sensors() {
            return Err(Error::Config(format!(
                "batch has {} sensor columns but the beam configuration lists {}",
                self.n_sensors(),
                cfg.n_sensors()
            )));
        }
        Ok(())
    }
}

fn sample_times(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / SAMPLE_RATE_HZ).collect()
}

fn gaussian(var: f64) -> Result<Normal<f64>> {
    if !(var >= 0.0 && var.is_finite()) {
        return Err(Error::ParameterRange(format!("noise variance must be >= 0, got {var}")));
    }
    Normal::new(0.0, var.sqrt()).map_err(|e| Error::ParameterRange(e.to_string()))
}

/// Curvature of the beam model at every sensor via the unit-step stencil.
pub fn clean_curvature(params: &PhysicsParams, cfg: &BeamConfig) -> Result<Vec<f64>> {
    cfg.sensor_coords
        .iter()
        .map(|&x| curvature_physics(x, params, cfg, CurvatureMethod::CentralDifference { h: 1.0 }))
        .collect()
}

/// `n_points` rows of stencil curvature plus `N(0, noise_var)` noise;
/// rows `change_at..` use `after`. Noise is drawn row-major from one stream,
/// so equal seeds share noise across parameter changes.
pub fn simulate_dataset(
    before: &PhysicsParams,
    after: &PhysicsParams,
    change_at: usize,
    n_points: usize,
    noise_var: f64,
    cfg: &BeamConfig,
    seed: u64,
) -> Result<CurvatureBatch> {
    if change_at > n_points {
        return Err(Error::Config(format!(
            "change point {change_at} beyond {n_points} points"
        )));
    }
    let clean = [clean_curvature(before, cfg)?, clean_curvature(after, cfg)?];
    let noise = gaussian(noise_var)?;
    let mut rng = rng_from_seed(seed);
    let rows = (0..n_points)
        .map(|j| {
            let mean = &clean[usize::from(j >= change_at)];
            mean.iter().map(|m| m + noise.sample(&mut rng)).collect()
        })
        .collect();
    CurvatureBatch::new(sample_times(n_points), rows, DataSource::Simulated)
}

/// `m` i.i.d. draws from `N(mean, cov_scalar · I)`.
pub fn simulate_simple(mean: &[f64], cov_scalar: f64, m: usize, seed: u64) -> Result<CurvatureBatch> {
    if m == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let noise = gaussian(cov_scalar)?;
    let mut rng = rng_from_seed(seed);
    let rows = (0..m)
        .map(|_| mean.iter().map(|mu| mu + noise.sample(&mut rng)).collect())
        .collect();
    CurvatureBatch::new(sample_times(m), rows, DataSource::Simulated)
}

pub fn write_curvature_csv<W: Write>(
    out: &mut W,
    header: &str,
    batch: &CurvatureBatch,
    cfg: &BeamConfig,
) -> Result<()> {
    batch.check_sensors(cfg)?;
    let io = |e| Error::io("<curvature csv>", e);
    writeln!(out, "# {CURVATURE_SCHEMA} {header}").map_err(io)?;
    writeln!(out, "t_s,x_mm,curvature_per_mm").map_err(io)?;
    for (t, row) in batch.times.iter().zip(&batch.rows) {
        for (x, v) in cfg.sensor_coords.iter().zip(row) {
            writeln!(out, "{t},{x},{v:e}").map_err(io)?;
        }
    }
    Ok(())
}

fn data_lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String)>> {
    reader
        .lines()
        .enumerate()
        .map(|(i, l)| l.map(|l| (i + 1, l)).map_err(|e| Error::io("<input>", e)))
        .filter(|r| match r {
            Ok((_, l)) => !l.trim().is_empty() && !l.trim_start().starts_with('#'),
            Err(_) => true,
        })
}

fn parse_f64(field: &str, line: usize, what: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Schema {
        line,
        msg: format!("cannot parse {what} from {field:?}"),
    })
}

fn sensor_index(x: f64, cfg: &BeamConfig, line: usize) -> Result<usize> {
    cfg.sensor_coords
        .iter()
        .position(|&c| (c - x).abs() < 1e-9)
        .ok_or_else(|| Error::Schema {
            line,
            msg: format!("coordinate {x} mm is not a configured sensor"),
        })
}

/// Reads a long-format curvature CSV; rows are grouped by time in order of
/// appearance and columns follow `cfg.sensor_coords`.
pub fn read_curvature_csv<R: BufRead>(reader: R, cfg: &BeamConfig) -> Result<CurvatureBatch> {
    let mut lines = data_lines(reader);
    match lines.next() {
        Some(Ok((_, h))) if h.trim() == "t_s,x_mm,curvature_per_mm" => {}
        Some(Ok((line, h))) => {
            return Err(Error::Schema {
                line,
                msg: format!("expected header t_s,x_mm,curvature_per_mm, found {h:?}"),
            })
        }
        Some(Err(e)) => return Err(e),
        None => return Err(Error::Schema { line: 0, msg: "empty file".into() }),
    }
    let n = cfg.n_sensors();
    let mut times: Vec<f64> = Vec::new();
    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    for item in lines {
        let (line, text) = item?;
        let fields: Vec<&str> = text.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Schema { line, msg: format!("expected 3 fields, got {}", fields.len()) });
        }
        let t = parse_f64(fields[0], line, "t_s")?;
        let x = parse_f64(fields[1], line, "x_mm")?;
        let v = parse_f64(fields[2], line, "curvature_per_mm")?;
        let j = sensor_index(x, cfg, line)?;
        match times.last() {
            Some(&last) if last == t => {}
            Some(&last) if t < last => {
                return Err(Error::Monotonicity { line, msg: format!("t={t} after t={last}") })
            }
            _ => {
                times.push(t);
                rows.push(vec![None; n]);
            }
        }
        let cell = &mut rows.last_mut().expect("row pushed above")[j];
        if cell.is_some() {
            return Err(Error::Schema { line, msg: format!("duplicate cell at t={t}, x={x}") });
        }
        *cell = Some(v);
    }
    let rows = rows
        .into_iter()
        .zip(&times)
        .map(|(r, t)| {
            r.into_iter()
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| Error::Pairing(format!("missing sensor value at t={t}")))
        })
        .collect::<Result<Vec<_>>>()?;
    CurvatureBatch::new(times, rows, DataSource::Ingested)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StrandRow {
    Top,
    Bottom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadingKind {
    Microstrain,
    WavelengthNm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrainRecord {
    pub t: f64,
    pub sensor_x: f64,
    pub row: StrandRow,
    pub value: f64,
    pub kind: ReadingKind,
}

pub fn read_strain_csv<R: BufRead>(reader: R) -> Result<Vec<StrainRecord>> {
    let mut lines = data_lines(reader);
    match lines.next() {
        Some(Ok((_, h))) if h.trim() == "t_s,sensor_x_mm,row,value,kind" => {}
        Some(Ok((line, h))) => {
            return Err(Error::Schema {
                line,
                msg: format!("expected header t_s,sensor_x_mm,row,value,kind, found {h:?}"),
            })
        }
        Some(Err(e)) => return Err(e),
        None => return Err(Error::Schema { line: 0, msg: "empty file".into() }),
    }
    lines
        .map(|item| {
            let (line, text) = item?;
            let f: Vec<&str> = text.split(',').map(str::trim).collect();
            if f.len() != 5 {
                return Err(Error::Schema { line, msg: format!("expected 5 fields, got {}", f.len()) });
            }
            let row = match f[2] {
                "top" => StrandRow::Top,
                "bottom" => StrandRow::Bottom,
                other => return Err(Error::Schema { line, msg: format!("unknown row {other:?}") }),
            };
            let kind = match f[4] {
                "strain_microstrain" => ReadingKind::Microstrain,
                "wavelength_nm" => ReadingKind::WavelengthNm,
                other => return Err(Error::Schema { line, msg: format!("unknown kind {other:?}") }),
            };
            Ok(StrainRecord {
                t: parse_f64(f[0], line, "t_s")?,
                sensor_x: parse_f64(f[1], line, "sensor_x_mm")?,
                row,
                value: parse_f64(f[3], line, "value")?,
                kind,
            })
        })
        .collect()
}

pub fn write_strain_csv<W: Write>(out: &mut W, header: &str, records: &[StrainRecord]) -> std::io::Result<()> {
    writeln!(out, "# {STRAIN_SCHEMA} {header}")?;
    writeln!(out, "t_s,sensor_x_mm,row,value,kind")?;
    for r in records {
        let row = match r.row {
            StrandRow::Top => "top",
            StrandRow::Bottom => "bottom",
        };
        let kind = match r.kind {
            ReadingKind::Microstrain => "strain_microstrain",
            ReadingKind::WavelengthNm => "wavelength_nm",
        };
        writeln!(out, "{},{},{},{:e},{}", r.t, r.sensor_x, row, r.value, kind)?;
    }
    Ok(())
}

/// Pairs top and bottom readings by (time, sensor) and converts them to
/// curvature. Wavelength readings are referenced to the first reading of
/// the same grating.
pub fn ingest_strain(records: &[StrainRecord], cfg: &BeamConfig) -> Result<CurvatureBatch> {
    cfg.validate()?;
    let n = cfg.n_sensors();
    // last time and reference wavelength per (sensor, row)
    let mut last_t: BTreeMap<(usize, StrandRow), f64> = BTreeMap::new();
    let mut reference: BTreeMap<(usize, StrandRow), f64> = BTreeMap::new();
    // time bits -> per-sensor (top, bottom) strain
    let mut cells: BTreeMap<u64, Vec<[Option<f64>; 2]>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let line = i + 1;
        let j = sensor_index(r.sensor_x, cfg, line)?;
        if !(r.t.is_finite() && r.t >= 0.0) {
            return Err(Error::Schema { line, msg: format!("invalid time {}", r.t) });
        }
        if let Some(&prev) = last_t.get(&(j, r.row)) {
            if r.t <= prev {
                return Err(Error::Monotonicity {
                    line,
                    msg: format!("sensor {} {:?}: t={} after t={prev}", r.sensor_x, r.row, r.t),
                });
            }
        }
        last_t.insert((j, r.row), r.t);
        let strain = match r.kind {
            ReadingKind::Microstrain => r.value,
            ReadingKind::WavelengthNm => {
                let l0 = *reference.entry((j, r.row)).or_insert(r.value);
                if !(l0 > 0.0) {
                    return Err(Error::Schema { line, msg: format!("reference wavelength {l0} must be > 0") });
                }
                wavelength_to_strain(r.value, l0)
            }
        };
        let slot = &mut cells.entry(r.t.to_bits()).or_insert_with(|| vec![[None, None]; n])[j]
            [usize::from(r.row == StrandRow::Bottom)];
        *slot = Some(strain);
    }
    let mut times = Vec::with_capacity(cells.len());
    let mut rows = Vec::with_capacity(cells.len());
    // non-negative f64 bit patterns sort like the values
    for (bits, sensors) in cells {
        let t = f64::from_bits(bits);
        let row = sensors
            .iter()
            .zip(&cfg.sensor_coords)
            .map(|(pair, x)| match pair {
                [Some(top), Some(bottom)] => Ok(strain_to_curvature(*top, *bottom, cfg.strand_sep)),
                [None, _] => Err(Error::Pairing(format!("no top reading at t={t}, x={x}"))),
                [_, None] => Err(Error::Pairing(format!("no bottom reading at t={t}, x={x}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        times.push(t);
        rows.push(row);
    }
    CurvatureBatch::new(times, rows, DataSource::Ingested)
}

/// Top/bottom microstrain records that reproduce `batch` on ingestion; the
/// axial (common-mode) strain is added to both rows.
pub fn strain_records_for(batch: &CurvatureBatch, cfg: &BeamConfig, axial: f64) -> Vec<StrainRecord> {
    let mut out = Vec::with_capacity(2 * batch.n_rows() * cfg.n_sensors());
    for (t, row) in batch.times.iter().zip(&batch.rows) {
        for (x, kappa) in cfg.sensor_coords.iter().zip(row) {
            let half = 0.5 * kappa * cfg.strand_sep * 1e6;
            for (r, v) in [(StrandRow::Top, axial + half), (StrandRow::Bottom, axial - half)] {
                out.push(StrainRecord {
                    t: *t,
                    sensor_x: *x,
                    row: r,
                    value: v,
                    kind: ReadingKind::Microstrain,
                });
            }
        }
    }
    out
}

/// Reads a curvature CSV or a strain CSV, chosen by the header row.
pub fn load_batch(path: &std::path::Path, cfg: &BeamConfig) -> Result<CurvatureBatch> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .unwrap_or("");
    if header == "t_s,sensor_x_mm,row,value,kind" {
        ingest_strain(&read_strain_csv(text.as_bytes())?, cfg)
    } else {
        read_curvature_csv(text.as_bytes(), cfg)
    }
}
