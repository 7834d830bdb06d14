//! One multiply-and-accumulate on a crossbar column.
//!
//! The column current is `sum_j G_j V_j(t)`. Because every row pulse peaks at
//! the same instant, the peak current equals `sum_j G_j V_j0`, which is what
//! [`mac_analytic`] returns. [`mac_simulate`] samples `I(t)` on a uniform grid
//! and finds the peak numerically.

use thiserror::Error;

use crate::compiler::CrossbarProgram;
use crate::device::{DrawContext, NoiseModel};
use crate::waveform::PulseSchedule;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CrossbarError {
    #[error("schedule has {rows} rows, program has {cells} cells")]
    DimensionMismatch { cells: usize, rows: usize },
    #[error("program needs {cells} rows, crossbar has {rows}")]
    TooManyCells { cells: usize, rows: usize },
    #[error("simulation needs {samples} samples, cap is {cap}; use analytic mode")]
    TimestepUnderflow { samples: usize, cap: usize },
    #[error("decoded dot product {0} is negative beyond rounding")]
    NegativeDecode(f64),
    #[error("invalid crossbar config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossbarConfig {
    pub rows: usize,
    /// Samples per period of the fastest row pulse.
    pub timestep_divisor: u32,
    /// Resistance per wire segment in ohms.
    pub line_resistance_ohm: f64,
    pub noise: NoiseModel,
    pub sample_cap: usize,
    pub record_waveform: bool,
}

impl Default for CrossbarConfig {
    fn default() -> Self {
        Self {
            rows: 9,
            timestep_divisor: 64,
            line_resistance_ohm: 0.0,
            noise: NoiseModel::ideal(),
            sample_cap: 10_000_000,
            record_waveform: false,
        }
    }
}

impl CrossbarConfig {
    pub fn validate(&self) -> Result<(), CrossbarError> {
        if self.rows == 0 {
            return Err(CrossbarError::BadConfig("rows must be positive".into()));
        }
        if self.timestep_divisor < 16 {
            return Err(CrossbarError::BadConfig(format!(
                "timestep_divisor {} < 16",
                self.timestep_divisor
            )));
        }
        if !(self.line_resistance_ohm.is_finite() && self.line_resistance_ohm >= 0.0) {
            return Err(CrossbarError::BadConfig(format!(
                "line resistance {} must be finite and >= 0",
                self.line_resistance_ohm
            )));
        }
        Ok(())
    }

    pub fn is_ideal(&self) -> bool {
        self.noise.is_ideal() && self.line_resistance_ohm == 0.0
    }
}

/// Sampled column waveform.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub t_s: Vec<f64>,
    /// One voltage series per row.
    pub row_voltages: Vec<Vec<f64>>,
    pub current_ma: Vec<f64>,
}

impl Trace {
    /// `t_s,v_row0,...,v_rowN,i_out_ma`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_s");
        for j in 0..self.row_voltages.len() {
            out.push_str(&format!(",v_row{j}"));
        }
        out.push_str(",i_out_ma\n");
        for (k, t) in self.t_s.iter().enumerate() {
            out.push_str(&t.to_string());
            for row in &self.row_voltages {
                out.push(',');
                out.push_str(&row[k].to_string());
            }
            out.push(',');
            out.push_str(&self.current_ma[k].to_string());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub i_peak_analytic_ma: f64,
    pub i_peak_simulated_ma: f64,
    pub t_peak_s: f64,
    pub dt_s: f64,
    pub waveform: Option<Trace>,
}

impl SimResult {
    pub const CSV_HEADER: &'static str = "i_peak_analytic_ma,i_peak_sim_ma,t_peak_s";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{}",
            self.i_peak_analytic_ma, self.i_peak_simulated_ma, self.t_peak_s
        )
    }
}

fn check_dims(
    program: &CrossbarProgram,
    schedule: &PulseSchedule,
    config: &CrossbarConfig,
) -> Result<(), CrossbarError> {
    config.validate()?;
    if program.len() > config.rows {
        return Err(CrossbarError::TooManyCells {
            cells: program.len(),
            rows: config.rows,
        });
    }
    if schedule.len() != program.len() {
        return Err(CrossbarError::DimensionMismatch {
            cells: program.len(),
            rows: schedule.len(),
        });
    }
    Ok(())
}

/// Per-row conductances seen by the column after read noise and the lumped
/// wire resistance `G_eff = 1/(1/G + n_seg r)`. The cell on row `j` sits
/// behind `j + 1` segments: one row-wire segment to reach the column plus `j`
/// column segments to the sense node.
pub fn effective_conductances(
    program: &CrossbarProgram,
    config: &CrossbarConfig,
    ctx: &mut DrawContext,
) -> Vec<f64> {
    // mS -> 1/mS is kOhm
    let r_kohm = config.line_resistance_ohm * 1e-3;
    program
        .cells()
        .iter()
        .enumerate()
        .map(|(j, cell)| {
            let g = config.noise.perturb(cell.g_ms, ctx);
            if r_kohm == 0.0 {
                g
            } else {
                let n_seg = (j + 1) as f64;
                1.0 / (1.0 / g + n_seg * r_kohm)
            }
        })
        .collect()
}

fn peak_sum(g_eff: &[f64], schedule: &PulseSchedule) -> f64 {
    g_eff
        .iter()
        .zip(schedule.pulses())
        .map(|(g, p)| g * p.amplitude)
        .sum()
}

/// Peak column current in mA by Kirchhoff summation.
pub fn mac_analytic(
    program: &CrossbarProgram,
    schedule: &PulseSchedule,
    config: &CrossbarConfig,
    ctx: &mut DrawContext,
) -> Result<f64, CrossbarError> {
    check_dims(program, schedule, config)?;
    let g_eff = effective_conductances(program, config, ctx);
    Ok(peak_sum(&g_eff, schedule))
}

/// Samples `I(t)` over `[0, T_MAX/2]` with `dt = 1/(f_max * divisor)`.
///
/// Noise is drawn once per device, so the analytic and simulated peaks in
/// the result see the same conductances.
pub fn mac_simulate(
    program: &CrossbarProgram,
    schedule: &PulseSchedule,
    config: &CrossbarConfig,
    ctx: &mut DrawContext,
) -> Result<SimResult, CrossbarError> {
    check_dims(program, schedule, config)?;
    let g_eff = effective_conductances(program, config, ctx);

    let dt = 1.0 / (schedule.f_max_hz() * f64::from(config.timestep_divisor));
    let t_end = schedule.t_max() / 2.0;
    let steps = (t_end / dt).floor();
    if steps >= config.sample_cap as f64 {
        return Err(CrossbarError::TimestepUnderflow {
            samples: if steps < usize::MAX as f64 {
                steps as usize + 1
            } else {
                usize::MAX
            },
            cap: config.sample_cap,
        });
    }
    let n = steps as usize + 1;

    let mut current = vec![0.0; n];
    let mut rows = Vec::new();
    for (g, pulse) in g_eff.iter().zip(schedule.pulses()) {
        let (start, end) = pulse.support();
        let k0 = (start / dt).ceil().max(0.0) as usize;
        let k1 = ((end / dt).floor() as usize).min(n - 1);
        let mut row = if config.record_waveform {
            vec![0.0; n]
        } else {
            Vec::new()
        };
        for k in k0..=k1 {
            let v = pulse.value(k as f64 * dt);
            current[k] += g * v;
            if config.record_waveform {
                row[k] = v;
            }
        }
        if config.record_waveform {
            rows.push(row);
        }
    }

    let (k_peak, &i_peak) =
        current
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |best, (k, i)| {
                if *i > *best.1 {
                    (k, i)
                } else {
                    best
                }
            });

    let waveform = config.record_waveform.then(|| Trace {
        t_s: (0..n).map(|k| k as f64 * dt).collect(),
        row_voltages: rows,
        current_ma: current.clone(),
    });

    Ok(SimResult {
        i_peak_analytic_ma: peak_sum(&g_eff, schedule),
        i_peak_simulated_ma: i_peak,
        t_peak_s: k_peak as f64 * dt,
        dt_s: dt,
        waveform,
    })
}

/// Inverts the affine pixel law: returns the integer dot product
/// `sum_j w_j p_j` behind a peak current.
pub fn decode_dot(i_peak_ma: f64, program: &CrossbarProgram) -> Result<i64, CrossbarError> {
    let law = program.amplitude_law();
    let offset = program.weight_sum() as f64 * law.v_lo;
    let d = (i_peak_ma / program.g_unit_ms() - offset) / law.step();
    if !d.is_finite() || d < -0.5 {
        return Err(CrossbarError::NegativeDecode(d));
    }
    Ok((d.round() as i64).max(0))
}
