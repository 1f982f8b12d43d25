//! Sampled paths on a uniform grid, with CSV and binary serialization.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{LanError, Result};

const MAGIC: &[u8; 8] = b"LANTRAJ1";

/// Role of a trajectory column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    X,
    Y,
    Z,
    /// Reconstructed Brownian motion.
    B,
}

impl Role {
    fn prefix(self) -> char {
        match self {
            Role::X => 'x',
            Role::Y => 'y',
            Role::Z => 'z',
            Role::B => 'b',
        }
    }

    fn byte(self) -> u8 {
        match self {
            Role::X => 0,
            Role::Y => 1,
            Role::Z => 2,
            Role::B => 3,
        }
    }

    fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0 => Role::X,
            1 => Role::Y,
            2 => Role::Z,
            3 => Role::B,
            _ => return None,
        })
    }
}

/// One labelled column, `index` counting from 0 within its block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Component {
    pub role: Role,
    pub index: usize,
}

impl Component {
    pub fn x(index: usize) -> Self {
        Self {
            role: Role::X,
            index,
        }
    }

    pub fn y(index: usize) -> Self {
        Self {
            role: Role::Y,
            index,
        }
    }

    pub fn z(index: usize) -> Self {
        Self {
            role: Role::Z,
            index,
        }
    }

    pub fn b(index: usize) -> Self {
        Self {
            role: Role::B,
            index,
        }
    }

    /// `x1`, `y3`, `z2`, ...
    pub fn label(&self) -> String {
        format!("{}{}", self.role.prefix(), self.index + 1)
    }

    pub fn parse(label: &str) -> Option<Self> {
        let mut chars = label.chars();
        let role = match chars.next()? {
            'x' => Role::X,
            'y' => Role::Y,
            'z' => Role::Z,
            'b' => Role::B,
            _ => return None,
        };
        let k: usize = chars.as_str().parse().ok()?;
        (k >= 1).then(|| Self { role, index: k - 1 })
    }

    /// Columns of a full `(x, y, z)` path.
    pub fn full_layout(n: usize, l: usize) -> Vec<Component> {
        (0..n)
            .map(Component::x)
            .chain((0..l).map(Component::y))
            .chain((0..n).map(Component::z))
            .collect()
    }

    pub fn block(role: Role, len: usize) -> Vec<Component> {
        (0..len).map(|index| Component { role, index }).collect()
    }
}

/// A path sampled at times `k * step`, `k = 0..rows`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    step: f64,
    columns: Vec<Component>,
    /// Row-major values.
    values: Vec<f64>,
    seed: Option<u64>,
}

impl Trajectory {
    pub fn new(
        step: f64,
        columns: Vec<Component>,
        values: Vec<f64>,
        seed: Option<u64>,
    ) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(LanError::InvalidParameter(format!(
                "step must be positive, got {step}"
            )));
        }
        if columns.is_empty() {
            return Err(LanError::Dimension(
                "trajectory needs at least one column".into(),
            ));
        }
        if values.is_empty() || !values.len().is_multiple_of(columns.len()) {
            return Err(LanError::Dimension(format!(
                "{} values do not fill rows of {} columns",
                values.len(),
                columns.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let row = pos / columns.len();
            return Err(LanError::NonFinite {
                context: "trajectory".into(),
                time: row as f64 * step,
            });
        }
        Ok(Self {
            step,
            columns,
            values,
            seed,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn columns(&self) -> &[Component] {
        &self.columns
    }

    pub fn labels(&self) -> Vec<String> {
        self.columns.iter().map(Component::label).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    /// Number of grid points `K + 1`.
    pub fn rows(&self) -> usize {
        self.values.len() / self.columns.len()
    }

    /// Number of increments `K`.
    pub fn steps(&self) -> usize {
        self.rows() - 1
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.steps())
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let d = self.dim();
        &self.values[k * d..(k + 1) * d]
    }

    pub fn column_index(&self, c: Component) -> Option<usize> {
        self.columns.iter().position(|&x| x == c)
    }

    pub fn column(&self, c: Component) -> Option<Vec<f64>> {
        let j = self.column_index(c)?;
        Some(
            self.values
                .iter()
                .skip(j)
                .step_by(self.dim())
                .copied()
                .collect(),
        )
    }

    /// Columns with the given role, in their stored order.
    pub fn block(&self, role: Role) -> Result<Trajectory> {
        let idx: Vec<usize> = (0..self.dim())
            .filter(|&j| self.columns[j].role == role)
            .collect();
        if idx.is_empty() {
            return Err(LanError::Dimension(format!(
                "trajectory has no {role:?} columns"
            )));
        }
        let mut values = Vec::with_capacity(idx.len() * self.rows());
        for k in 0..self.rows() {
            let row = self.row(k);
            values.extend(idx.iter().map(|&j| row[j]));
        }
        Ok(Trajectory {
            step: self.step,
            columns: idx.iter().map(|&j| self.columns[j]).collect(),
            values,
            seed: self.seed,
        })
    }

    pub fn z_block(&self) -> Result<Trajectory> {
        self.block(Role::Z)
    }

    /// Rows `first..=last`, re-based to time 0.
    pub fn slice_rows(&self, first: usize, last: usize) -> Result<Trajectory> {
        if first > last || last >= self.rows() {
            return Err(LanError::InvalidParameter(format!(
                "row range {first}..={last} outside 0..{}",
                self.rows()
            )));
        }
        let d = self.dim();
        Ok(Trajectory {
            step: self.step,
            columns: self.columns.clone(),
            values: self.values[first * d..(last + 1) * d].to_vec(),
            seed: self.seed,
        })
    }

    /// Index of the grid node nearest to time `t`.
    pub fn node_at(&self, t: f64) -> usize {
        (t / self.step).round().max(0.0) as usize
    }

    /// The initial segment `[0, horizon]`.
    pub fn truncate(&self, horizon: f64) -> Result<Trajectory> {
        let k = self.node_at(horizon);
        if k >= self.rows() {
            return Err(LanError::InvalidParameter(format!(
                "horizon {horizon} exceeds the trajectory horizon {}",
                self.horizon()
            )));
        }
        self.slice_rows(0, k)
    }

    /// CSV with header `time,<labels>` and one row per grid node.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["time".to_string()];
        header.extend(self.labels());
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(self.dim() + 1);
        for k in 0..self.rows() {
            record.clear();
            record.push(self.time(k).to_string());
            record.extend(self.row(k).iter().map(|v| v.to_string()));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Inverse of [`Trajectory::write_csv`]. The step is taken from the
    /// time column, which must be uniform; a single-row file needs `step`.
    pub fn read_csv<R: Read>(reader: R, step: Option<f64>) -> Result<Trajectory> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        if header.get(0) != Some("time") {
            return Err(LanError::Format("first CSV column must be `time`".into()));
        }
        let columns = header
            .iter()
            .skip(1)
            .map(|h| {
                Component::parse(h)
                    .ok_or_else(|| LanError::Format(format!("unknown column label `{h}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let mut fields = rec.iter().map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| LanError::Format(format!("bad number `{f}`: {e}")))
            });
            times.push(
                fields
                    .next()
                    .ok_or_else(|| LanError::Format("empty record".into()))??,
            );
            for v in fields {
                values.push(v?);
            }
        }
        if times.is_empty() {
            return Err(LanError::Format("CSV has no rows".into()));
        }
        let h = match (times.len(), step) {
            (1, Some(h)) => h,
            (1, None) => {
                return Err(LanError::Format(
                    "cannot infer the step from a single row".into(),
                ))
            }
            (k, _) => (times[k - 1] - times[0]) / (k - 1) as f64,
        };
        for (k, &t) in times.iter().enumerate() {
            let expected = times[0] + k as f64 * h;
            if (t - expected).abs() > 1e-9 * h.max(expected.abs()) {
                return Err(LanError::Format(format!(
                    "time column is not uniform at row {k}"
                )));
            }
        }
        Trajectory::new(h, columns, values, None)
    }

    /// Little-endian binary layout: magic `LANTRAJ1`, rows `u64`, cols `u64`,
    /// step `f64`, seed flag `u8` and seed `u64`, per column a role byte and
    /// a `u32` index, then the `f64` values row by row.
    pub fn write_bin<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.rows() as u64).to_le_bytes())?;
        w.write_all(&(self.dim() as u64).to_le_bytes())?;
        w.write_all(&self.step.to_le_bytes())?;
        w.write_all(&[u8::from(self.seed.is_some())])?;
        w.write_all(&self.seed.unwrap_or(0).to_le_bytes())?;
        for c in &self.columns {
            w.write_all(&[c.role.byte()])?;
            w.write_all(&(c.index as u32).to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_bin<R: Read>(mut r: R) -> Result<Trajectory> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(LanError::Format("bad magic bytes".into()));
        }
        let rows = read_u64(&mut r)? as usize;
        let cols = read_u64(&mut r)? as usize;
        let step = f64::from_bits(read_u64(&mut r)?);
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let seed = read_u64(&mut r)?;
        let seed = (flag[0] != 0).then_some(seed);
        let mut columns = Vec::with_capacity(cols);
        for _ in 0..cols {
            let mut role = [0u8; 1];
            let mut index = [0u8; 4];
            r.read_exact(&mut role)?;
            r.read_exact(&mut index)?;
            let role =
                Role::from_byte(role[0]).ok_or_else(|| LanError::Format("bad role byte".into()))?;
            columns.push(Component {
                role,
                index: u32::from_le_bytes(index) as usize,
            });
        }
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| LanError::Format("dimensions overflow".into()))?;
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            values.push(f64::from_bits(read_u64(&mut r)?));
        }
        Trajectory::new(step, columns, values, seed)
    }
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}
