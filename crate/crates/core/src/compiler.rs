//! Lowering of integer convolution kernels onto a single crossbar column.
//!
//! A weight `w` is realised as the conductance `w * g_unit`, where `g_unit` is
//! the ON conductance at the table's fastest frequency. The binary device is
//! always programmed ON; the analog value comes from the drive frequency.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::analysis::pulse_energy_uj;
use crate::device::{ConductanceTable, DeviceError, DeviceState};
use crate::waveform::{phase_shift, PulseSchedule, ScheduleLimits, WaveformError};

/// First line of a program file.
pub const PROGRAM_MAGIC: &str = "# freqbar-program v1";
const PROGRAM_COLUMNS: &str = "index,weight,state,freq_hz,g_ms,phase_rad";

/// Allowed relative gap between a cell's conductance and `weight * g_unit`.
pub const PROPORTIONALITY_TOL: f64 = 5e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompileError {
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Waveform(#[from] WaveformError),
    #[error("cell {index}: weight {weight} unsupported (only positive weights)")]
    UnsupportedWeight { index: usize, weight: i64 },
    #[error("cell {index}: weight {weight} not representable; representable integer weights are 1..={max_weight}")]
    WeightOutOfRange {
        index: usize,
        weight: i64,
        max_weight: i64,
    },
    #[error("kernel line {line}: {msg}")]
    KernelFormat { line: usize, msg: String },
    #[error("program line {line}: {msg}")]
    ProgramFormat { line: usize, msg: String },
    #[error("invalid amplitude law: {0}")]
    BadLaw(String),
    #[error("patch has {found} pixels, program has {expected} cells")]
    PatchLength { expected: usize, found: usize },
    #[error("patch pixel {index} = {value} outside [0, {max}]")]
    PixelOutOfRange { index: usize, value: u32, max: u32 },
    #[error("io: {0}")]
    Io(String),
}

/// Integer convolution kernel with a digital scale denominator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Kernel {
    rows: usize,
    cols: usize,
    weights: Vec<i64>,
    scale_den: u32,
}

impl Kernel {
    pub fn new(
        rows: usize,
        cols: usize,
        weights: Vec<i64>,
        scale_den: u32,
    ) -> Result<Self, CompileError> {
        let shape_err = |msg: String| CompileError::KernelFormat { line: 0, msg };
        if rows == 0 || cols == 0 {
            return Err(shape_err("kernel dimensions must be positive".into()));
        }
        if weights.len() != rows * cols {
            return Err(shape_err(format!(
                "expected {} weights, found {}",
                rows * cols,
                weights.len()
            )));
        }
        if scale_den == 0 {
            return Err(shape_err("scale denominator must be positive".into()));
        }
        Ok(Self {
            rows,
            cols,
            weights,
            scale_den,
        })
    }

    /// `[1 2 1; 2 4 2; 1 2 1] / 16`.
    pub fn gaussian3() -> Self {
        Self::new(3, 3, vec![1, 2, 1, 2, 4, 2, 1, 2, 1], 16).expect("valid kernel")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row-major weights.
    pub fn weights(&self) -> &[i64] {
        &self.weights
    }

    pub fn scale_den(&self) -> u32 {
        self.scale_den
    }

    /// Parses `rows cols scale_den` followed by `rows` lines of `cols` integers.
    pub fn parse(text: &str) -> Result<Self, CompileError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (line, header) = lines.next().ok_or(CompileError::KernelFormat {
            line: 1,
            msg: "empty kernel file".into(),
        })?;
        let dims: Vec<i64> = parse_ints(header, line)?;
        if dims.len() != 3 || dims.iter().any(|&d| d <= 0) {
            return Err(CompileError::KernelFormat {
                line,
                msg: "header must be `rows cols scale_den` with positive integers".into(),
            });
        }
        let (rows, cols) = (dims[0] as usize, dims[1] as usize);
        let scale_den = u32::try_from(dims[2]).map_err(|_| CompileError::KernelFormat {
            line,
            msg: "scale denominator too large".into(),
        })?;

        let mut weights = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let (line, body) = lines.next().ok_or(CompileError::KernelFormat {
                line: line + r + 1,
                msg: format!("missing kernel row {}", r + 1),
            })?;
            let row = parse_ints(body, line)?;
            if row.len() != cols {
                return Err(CompileError::KernelFormat {
                    line,
                    msg: format!("expected {cols} weights, found {}", row.len()),
                });
            }
            weights.extend(row);
        }
        if let Some((line, _)) = lines.next() {
            return Err(CompileError::KernelFormat {
                line,
                msg: "trailing content after kernel rows".into(),
            });
        }
        Self::new(rows, cols, weights, scale_den)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CompileError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| CompileError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {}\n", self.rows, self.cols, self.scale_den);
        for row in self.weights.chunks(self.cols) {
            let cells: Vec<String> = row.iter().map(i64::to_string).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out
    }
}

fn parse_ints(s: &str, line: usize) -> Result<Vec<i64>, CompileError> {
    s.split_whitespace()
        .map(|tok| {
            tok.parse::<i64>().map_err(|_| CompileError::KernelFormat {
                line,
                msg: format!("not an integer: `{tok}`"),
            })
        })
        .collect()
}

/// Affine pixel-to-amplitude map `V0(p) = v_lo + (v_hi - v_lo) p / pixel_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeLaw {
    pub v_lo: f64,
    pub v_hi: f64,
    pub pixel_max: u32,
}

impl Default for AmplitudeLaw {
    fn default() -> Self {
        Self {
            v_lo: 0.15,
            v_hi: 0.66,
            pixel_max: 255,
        }
    }
}

impl AmplitudeLaw {
    pub fn new(v_lo: f64, v_hi: f64, pixel_max: u32, ceiling: f64) -> Result<Self, CompileError> {
        if !(v_lo > 0.0 && v_lo < v_hi && v_hi <= ceiling) {
            return Err(CompileError::BadLaw(format!(
                "need 0 < v_lo < v_hi <= {ceiling}, got v_lo={v_lo} v_hi={v_hi}"
            )));
        }
        if pixel_max == 0 {
            return Err(CompileError::BadLaw("pixel_max must be positive".into()));
        }
        Ok(Self {
            v_lo,
            v_hi,
            pixel_max,
        })
    }

    pub fn amplitude(&self, pixel: u32) -> f64 {
        let v = self.v_lo + (self.v_hi - self.v_lo) * f64::from(pixel) / f64::from(self.pixel_max);
        v.min(self.v_hi)
    }

    /// Volts per pixel step.
    pub fn step(&self) -> f64 {
        (self.v_hi - self.v_lo) / f64::from(self.pixel_max)
    }
}

/// Tie-break between frequencies that realise the same conductance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Policy {
    /// Highest admissible frequency.
    #[default]
    Speed,
    /// Lowest per-pulse energy at the law's top amplitude.
    Energy,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Speed => f.write_str("speed"),
            Policy::Energy => f.write_str("energy"),
        }
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "speed" => Ok(Policy::Speed),
            "energy" => Ok(Policy::Energy),
            other => Err(format!("unknown policy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CompileOptions {
    pub policy: Policy,
    /// Also consider OFF-branch grid points whose conductance lies within
    /// [`PROPORTIONALITY_TOL`] of the target. No interpolation on that branch.
    pub allow_off_branch: bool,
}

/// One programmed crosspoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub weight: i64,
    pub state: DeviceState,
    pub freq_hz: f64,
    pub g_ms: f64,
    pub phase: f64,
}

/// A kernel lowered onto one crossbar column.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossbarProgram {
    cells: Vec<Cell>,
    g_unit_ms: f64,
    f_min_hz: f64,
    law: AmplitudeLaw,
    policy: Policy,
    kernel_rows: usize,
    kernel_cols: usize,
    scale_den: u32,
}

struct Candidate {
    state: DeviceState,
    freq_hz: f64,
    g_ms: f64,
}

fn choose(candidates: Vec<Candidate>, policy: Policy, law: &AmplitudeLaw) -> Candidate {
    let faster = |a: &Candidate, b: &Candidate| a.freq_hz.total_cmp(&b.freq_hz);
    match policy {
        Policy::Speed => candidates.into_iter().max_by(faster),
        Policy::Energy => candidates.into_iter().min_by(|a, b| {
            let ea = pulse_energy_uj(a.g_ms, law.v_hi, a.freq_hz);
            let eb = pulse_energy_uj(b.g_ms, law.v_hi, b.freq_hz);
            ea.total_cmp(&eb).then_with(|| faster(b, a))
        }),
    }
    .expect("at least the ON candidate exists")
}

/// Lowers `kernel` onto `table`.
pub fn compile(
    kernel: &Kernel,
    table: &ConductanceTable,
    law: AmplitudeLaw,
    options: CompileOptions,
) -> Result<CrossbarProgram, CompileError> {
    let g_unit = table.unit_conductance();
    let (_, g_max) = table.on_range();
    let max_weight = (g_max / g_unit * (1.0 + 1e-12)).floor() as i64;

    let mut chosen = Vec::with_capacity(kernel.weights().len());
    for (index, &weight) in kernel.weights().iter().enumerate() {
        if weight <= 0 {
            return Err(CompileError::UnsupportedWeight { index, weight });
        }
        if weight > max_weight {
            return Err(CompileError::WeightOutOfRange {
                index,
                weight,
                max_weight,
            });
        }
        let target = weight as f64 * g_unit;
        let on_freq = table.frequency_for(DeviceState::On, target)?;
        let mut candidates = vec![Candidate {
            state: DeviceState::On,
            freq_hz: on_freq,
            g_ms: table.conductance_at(DeviceState::On, on_freq)?,
        }];
        if options.allow_off_branch {
            candidates.extend(
                table
                    .entries()
                    .iter()
                    .filter(|e| (e.g_off_ms - target).abs() <= PROPORTIONALITY_TOL * target)
                    .map(|e| Candidate {
                        state: DeviceState::Off,
                        freq_hz: e.freq_hz,
                        g_ms: e.g_off_ms,
                    }),
            );
        }
        chosen.push((index, weight, choose(candidates, options.policy, &law)));
    }

    let f_min_hz = chosen
        .iter()
        .map(|(_, _, c)| c.freq_hz)
        .fold(f64::INFINITY, f64::min);
    let cells = chosen
        .into_iter()
        .map(|(index, weight, c)| {
            Ok(Cell {
                index,
                weight,
                state: c.state,
                freq_hz: c.freq_hz,
                g_ms: c.g_ms,
                phase: phase_shift(c.freq_hz, f_min_hz)?,
            })
        })
        .collect::<Result<Vec<_>, CompileError>>()?;

    Ok(CrossbarProgram {
        cells,
        g_unit_ms: g_unit,
        f_min_hz,
        law,
        policy: options.policy,
        kernel_rows: kernel.rows(),
        kernel_cols: kernel.cols(),
        scale_den: kernel.scale_den(),
    })
}

impl CrossbarProgram {
    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn g_unit_ms(&self) -> f64 {
        self.g_unit_ms
    }

    pub fn f_min_hz(&self) -> f64 {
        self.f_min_hz
    }

    pub fn amplitude_law(&self) -> &AmplitudeLaw {
        &self.law
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    /// `(rows, cols)` of the kernel this program realises.
    pub fn kernel_shape(&self) -> (usize, usize) {
        (self.kernel_rows, self.kernel_cols)
    }

    pub fn scale_den(&self) -> u32 {
        self.scale_den
    }

    pub fn weights(&self) -> Vec<i64> {
        self.cells.iter().map(|c| c.weight).collect()
    }

    pub fn weight_sum(&self) -> i64 {
        self.cells.iter().map(|c| c.weight).sum()
    }

    pub fn conductances(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.g_ms).collect()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.freq_hz).collect()
    }

    /// Rebuilds the kernel the program was compiled from.
    pub fn kernel(&self) -> Kernel {
        Kernel::new(
            self.kernel_rows,
            self.kernel_cols,
            self.weights(),
            self.scale_den,
        )
        .expect("program shape is consistent")
    }

    /// Row-major patch of pixels to pulse schedule.
    pub fn encode_inputs(&self, patch: &[u32]) -> Result<PulseSchedule, CompileError> {
        if patch.len() != self.cells.len() {
            return Err(CompileError::PatchLength {
                expected: self.cells.len(),
                found: patch.len(),
            });
        }
        let mut rows = Vec::with_capacity(patch.len());
        for (index, (&p, cell)) in patch.iter().zip(&self.cells).enumerate() {
            if p > self.law.pixel_max {
                return Err(CompileError::PixelOutOfRange {
                    index,
                    value: p,
                    max: self.law.pixel_max,
                });
            }
            rows.push((self.law.amplitude(p), cell.freq_hz));
        }
        let limits = ScheduleLimits {
            amplitude_ceiling: self.law.v_hi,
            freq_range: None,
        };
        Ok(PulseSchedule::build(&rows, &limits)?)
    }

    /// Serializes to the `# freqbar-program v1` text format.
    pub fn to_text(&self) -> String {
        let mut out = format!("{PROGRAM_MAGIC}\n{PROGRAM_COLUMNS}\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                c.index, c.weight, c.state, c.freq_hz, c.g_ms, c.phase
            ));
        }
        out.push_str(&format!("g_unit_ms={}\n", self.g_unit_ms));
        out.push_str(&format!("f_min_hz={}\n", self.f_min_hz));
        out.push_str(&format!("policy={}\n", self.policy));
        out.push_str(&format!("v_lo={}\n", self.law.v_lo));
        out.push_str(&format!("v_hi={}\n", self.law.v_hi));
        out.push_str(&format!("pixel_max={}\n", self.law.pixel_max));
        out.push_str(&format!(
            "kernel={} {} {}\n",
            self.kernel_rows, self.kernel_cols, self.scale_den
        ));
        out
    }

    pub fn parse(text: &str) -> Result<Self, CompileError> {
        let err = |line: usize, msg: String| CompileError::ProgramFormat { line, msg };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        match lines.next() {
            Some((_, l)) if l == PROGRAM_MAGIC => {}
            _ => return Err(err(1, format!("missing `{PROGRAM_MAGIC}` header"))),
        }

        let mut cells = Vec::new();
        let mut trailer = std::collections::HashMap::new();
        for (line, l) in lines {
            if l.is_empty() || l == PROGRAM_COLUMNS || l.starts_with('#') {
                continue;
            }
            if let Some((key, value)) = l.split_once('=') {
                trailer.insert(key.trim().to_string(), (line, value.trim().to_string()));
                continue;
            }
            let f: Vec<&str> = l.split(',').map(str::trim).collect();
            if f.len() != 6 {
                return Err(err(line, format!("expected 6 fields, found {}", f.len())));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| err(line, format!("not a number: `{s}`")))
            };
            let cell = Cell {
                index: f[0]
                    .parse()
                    .map_err(|_| err(line, format!("bad index `{}`", f[0])))?,
                weight: f[1]
                    .parse()
                    .map_err(|_| err(line, format!("bad weight `{}`", f[1])))?,
                state: f[2].parse().map_err(|m| err(line, m))?,
                freq_hz: num(f[3])?,
                g_ms: num(f[4])?,
                phase: num(f[5])?,
            };
            if cell.index != cells.len() {
                return Err(err(line, format!("expected cell index {}", cells.len())));
            }
            cells.push(cell);
        }

        let field = |key: &str| {
            trailer
                .get(key)
                .ok_or_else(|| err(0, format!("missing trailer `{key}=`")))
        };
        let float = |key: &str| -> Result<f64, CompileError> {
            let (line, v) = field(key)?;
            v.parse()
                .map_err(|_| err(*line, format!("bad `{key}` value")))
        };
        let g_unit_ms = float("g_unit_ms")?;
        let f_min_hz = float("f_min_hz")?;
        let (pline, pval) = field("policy")?;
        let policy = pval.parse().map_err(|m| err(*pline, m))?;
        let (v_lo, v_hi) = (float("v_lo")?, float("v_hi")?);
        let pixel_max = match trailer.get("pixel_max") {
            Some((line, v)) => v.parse().map_err(|_| err(*line, "bad pixel_max".into()))?,
            None => 255,
        };
        let law = AmplitudeLaw::new(v_lo, v_hi, pixel_max, f64::INFINITY)?;

        let (kernel_rows, kernel_cols, scale_den) = match trailer.get("kernel") {
            Some((line, v)) => {
                let d = parse_ints(v, *line)?;
                if d.len() != 3 || d.iter().any(|&x| x <= 0) {
                    return Err(err(
                        *line,
                        "kernel trailer must be `rows cols scale_den`".into(),
                    ));
                }
                (d[0] as usize, d[1] as usize, d[2] as u32)
            }
            None => (cells.len(), 1, 1),
        };
        if kernel_rows * kernel_cols != cells.len() {
            return Err(err(
                0,
                format!(
                    "kernel shape {kernel_rows}x{kernel_cols} does not match {} cells",
                    cells.len()
                ),
            ));
        }

        Ok(Self {
            cells,
            g_unit_ms,
            f_min_hz,
            law,
            policy,
            kernel_rows,
            kernel_cols,
            scale_den,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CompileError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| CompileError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

/// Relative conductance error of one cell against `weight * g_unit`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellError {
    pub index: usize,
    pub weight: i64,
    pub ideal_ms: f64,
    pub actual_ms: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuantizationReport {
    pub cells: Vec<CellError>,
    pub max_rel_error: f64,
    pub rms_rel_error: f64,
}

impl QuantizationReport {
    pub fn from_program(program: &CrossbarProgram) -> Self {
        Self::from_cells(program.cells(), program.g_unit_ms())
    }

    pub fn from_cells(cells: &[Cell], g_unit_ms: f64) -> Self {
        let cells: Vec<CellError> = cells
            .iter()
            .map(|c| {
                let ideal = c.weight as f64 * g_unit_ms;
                CellError {
                    index: c.index,
                    weight: c.weight,
                    ideal_ms: ideal,
                    actual_ms: c.g_ms,
                    rel_error: (c.g_ms - ideal).abs() / ideal,
                }
            })
            .collect();
        if cells.is_empty() {
            return Self::default();
        }
        let max_rel_error = cells.iter().map(|c| c.rel_error).fold(0.0, f64::max);
        let rms_rel_error = (cells.iter().map(|c| c.rel_error * c.rel_error).sum::<f64>()
            / cells.len() as f64)
            .sqrt();
        Self {
            cells,
            max_rel_error,
            rms_rel_error,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,weight,ideal_ms,g_ms,rel_error\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                c.index, c.weight, c.ideal_ms, c.actual_ms, c.rel_error
            ));
        }
        out.push_str(&format!("max_rel_error={}\n", self.max_rel_error));
        out.push_str(&format!("rms_rel_error={}\n", self.rms_rel_error));
        out
    }
}
