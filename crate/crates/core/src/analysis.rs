//! Power, energy, latency and area of one MAC, and the comparison against a
//! DC-driven bit-sliced column design.
//!
//! Units: conductance in mS and amplitude in V give power in mW.

use thiserror::Error;

use crate::compiler::CrossbarProgram;

/// CSV header of a [`CostReport`].
pub const COST_REPORT_HEADER: &str =
    "avg_power_mw,energy_uj,latency_s,columns,baseline_power_mw,baseline_columns,power_ratio,area_fraction,n_bits";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("{found} amplitudes for a program with {expected} cells")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("n_bits must be at least 1")]
    ZeroBits,
    #[error("program has no cells")]
    EmptyProgram,
    #[error("cost report line {line}: {msg}")]
    Format { line: usize, msg: String },
}

/// Energy in uJ of one half-sine pulse: `G (V0/sqrt2)^2 (T/2)`.
pub fn pulse_energy_uj(g_ms: f64, amplitude: f64, freq_hz: f64) -> f64 {
    // mS * V^2 * s = mJ
    g_ms * (amplitude * amplitude / 2.0) * (0.5 / freq_hz) * 1e3
}

fn check_len(program: &CrossbarProgram, amplitudes: &[f64]) -> Result<(), AnalysisError> {
    if amplitudes.len() != program.len() {
        return Err(AnalysisError::DimensionMismatch {
            expected: program.len(),
            found: amplitudes.len(),
        });
    }
    Ok(())
}

/// Average power of one MAC in mW: `sum G_j (V_j0/sqrt2)^2`.
pub fn mac_power(program: &CrossbarProgram, amplitudes: &[f64]) -> Result<f64, AnalysisError> {
    check_len(program, amplitudes)?;
    // (V/sqrt2)^2 written as V^2/2 so the ratio against the DC sum is exact
    Ok(program
        .cells()
        .iter()
        .zip(amplitudes)
        .map(|(c, v)| c.g_ms * (v * v / 2.0))
        .sum())
}

/// Energy of one MAC in uJ, each row dissipating over its own half period.
pub fn mac_energy(program: &CrossbarProgram, amplitudes: &[f64]) -> Result<f64, AnalysisError> {
    check_len(program, amplitudes)?;
    Ok(program
        .cells()
        .iter()
        .zip(amplitudes)
        .map(|(c, &v)| pulse_energy_uj(c.g_ms, v, c.freq_hz))
        .sum())
}

/// One MAC window `T_MAX/2` plus the readout time.
pub fn latency(program: &CrossbarProgram, readout_s: f64) -> Result<f64, AnalysisError> {
    if program.is_empty() {
        return Err(AnalysisError::EmptyProgram);
    }
    Ok(0.5 / program.f_min_hz() + readout_s)
}

/// Power of the DC bit-sliced baseline with the same conductances replicated
/// over `n_bits` columns, in mW.
pub fn baseline_power(
    program: &CrossbarProgram,
    amplitudes: &[f64],
    n_bits: u32,
) -> Result<f64, AnalysisError> {
    check_len(program, amplitudes)?;
    let dc: f64 = program
        .cells()
        .iter()
        .zip(amplitudes)
        .map(|(c, v)| c.g_ms * (v * v))
        .sum();
    Ok(f64::from(n_bits) * dc)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostReport {
    pub avg_power_mw: f64,
    pub energy_per_mac_uj: f64,
    pub latency_s: f64,
    pub columns_used: u32,
    pub baseline_power_mw: f64,
    pub baseline_columns: u32,
    pub power_ratio: f64,
    pub area_fraction: f64,
    pub n_bits: u32,
}

impl CostReport {
    /// MACs per second without overlap between consecutive MACs.
    pub fn throughput_macs_per_s(&self) -> f64 {
        1.0 / self.latency_s
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{COST_REPORT_HEADER}\n{},{},{},{},{},{},{},{},{}\n",
            self.avg_power_mw,
            self.energy_per_mac_uj,
            self.latency_s,
            self.columns_used,
            self.baseline_power_mw,
            self.baseline_columns,
            self.power_ratio,
            self.area_fraction,
            self.n_bits
        )
    }

    pub fn parse_csv(text: &str) -> Result<Self, AnalysisError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some(COST_REPORT_HEADER) {
            return Err(AnalysisError::Format {
                line: 1,
                msg: "unexpected header".into(),
            });
        }
        let row = lines.next().ok_or(AnalysisError::Format {
            line: 2,
            msg: "missing data row".into(),
        })?;
        let f: Vec<&str> = row.split(',').map(str::trim).collect();
        if f.len() != 9 {
            return Err(AnalysisError::Format {
                line: 2,
                msg: format!("expected 9 fields, found {}", f.len()),
            });
        }
        let bad = |i: usize| AnalysisError::Format {
            line: 2,
            msg: format!("bad field {}: `{}`", i + 1, f[i]),
        };
        let float = |i: usize| f[i].parse::<f64>().map_err(|_| bad(i));
        let int = |i: usize| f[i].parse::<u32>().map_err(|_| bad(i));
        Ok(Self {
            avg_power_mw: float(0)?,
            energy_per_mac_uj: float(1)?,
            latency_s: float(2)?,
            columns_used: int(3)?,
            baseline_power_mw: float(4)?,
            baseline_columns: int(5)?,
            power_ratio: float(6)?,
            area_fraction: float(7)?,
            n_bits: int(8)?,
        })
    }
}

/// Costs of `program` against an `n_bits` bit-sliced DC baseline.
pub fn compare_baseline(
    program: &CrossbarProgram,
    n_bits: u32,
    amplitudes: &[f64],
    readout_s: f64,
) -> Result<CostReport, AnalysisError> {
    if n_bits == 0 {
        return Err(AnalysisError::ZeroBits);
    }
    let avg_power_mw = mac_power(program, amplitudes)?;
    let baseline_power_mw = baseline_power(program, amplitudes, n_bits)?;
    // zero drive: take the limit of the ratio
    let power_ratio = if avg_power_mw > 0.0 {
        baseline_power_mw / avg_power_mw
    } else {
        2.0 * f64::from(n_bits)
    };
    let columns_used = 1;
    Ok(CostReport {
        avg_power_mw,
        energy_per_mac_uj: mac_energy(program, amplitudes)?,
        latency_s: latency(program, readout_s)?,
        columns_used,
        baseline_power_mw,
        baseline_columns: n_bits,
        power_ratio,
        area_fraction: f64::from(columns_used) / f64::from(n_bits),
        n_bits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{compile, AmplitudeLaw, CompileOptions, Kernel};
    use crate::device::ConductanceTable;

    fn program(kernel: &Kernel) -> CrossbarProgram {
        compile(
            kernel,
            &ConductanceTable::builtin(),
            AmplitudeLaw::default(),
            CompileOptions::default(),
        )
        .unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn power_examples() {
        let g = program(&Kernel::gaussian3());
        assert!(rel(mac_power(&g, &[0.1; 9]).unwrap(), 0.168) < 1e-9);
        assert_eq!(mac_power(&g, &[0.0; 9]).unwrap(), 0.0);
        let one = program(&Kernel::new(1, 1, vec![1], 1).unwrap());
        let expected = 2.1 * (0.66 / 2f64.sqrt()).powi(2);
        assert!(rel(mac_power(&one, &[0.66]).unwrap(), expected) < 1e-12);
        assert!((expected - 0.4574).abs() < 5e-5);
        assert!(matches!(
            mac_power(&g, &[0.1; 3]),
            Err(AnalysisError::DimensionMismatch {
                expected: 9,
                found: 3
            })
        ));
    }

    #[test]
    fn energy_examples() {
        let four = program(&Kernel::new(1, 1, vec![4], 1).unwrap());
        assert_eq!(four.cells()[0].freq_hz, 10.0);
        let e = mac_energy(&four, &[0.66]).unwrap();
        assert!(rel(e, 8.4e-3 * 0.2178 * 0.05 * 1e6) < 1e-12);
        assert!((e - 91.5).abs() < 0.05);
        assert_eq!(mac_energy(&four, &[0.0]).unwrap(), 0.0);
        let half = pulse_energy_uj(8.4, 0.66, 5.0);
        assert!(rel(half, 2.0 * e) < 1e-12);
    }

    #[test]
    fn latency_examples() {
        let g = program(&Kernel::gaussian3());
        assert!(rel(latency(&g, 500e-9).unwrap(), 0.0500005) < 1e-12);
        assert_eq!(latency(&g, 0.0).unwrap(), 0.05);
        let one = program(&Kernel::new(1, 1, vec![1], 1).unwrap());
        assert!(rel(latency(&one, 500e-9).unwrap(), 50.5e-6) < 1e-12);
    }

    #[test]
    fn baseline_examples() {
        let g = program(&Kernel::gaussian3());
        let r = compare_baseline(&g, 8, &[0.1; 9], 500e-9).unwrap();
        assert_eq!(r.power_ratio, 16.0);
        assert_eq!(r.area_fraction, 0.125);
        assert!(rel(r.baseline_power_mw, 2.688) < 1e-9);
        assert!(rel(r.avg_power_mw, 0.168) < 1e-9);
        let r1 = compare_baseline(&g, 1, &[0.3; 9], 0.0).unwrap();
        assert_eq!(r1.power_ratio, 2.0);
        assert_eq!(r1.area_fraction, 1.0);
        assert_eq!(
            compare_baseline(&g, 0, &[0.1; 9], 0.0),
            Err(AnalysisError::ZeroBits)
        );
        let zero = compare_baseline(&g, 4, &[0.0; 9], 0.0).unwrap();
        assert_eq!(zero.power_ratio, 8.0);
    }

    #[test]
    fn report_csv_round_trip() {
        let g = program(&Kernel::gaussian3());
        let r = compare_baseline(&g, 8, &[0.66; 9], 500e-9).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with(COST_REPORT_HEADER));
        assert_eq!(CostReport::parse_csv(&csv).unwrap(), r);
        assert!(rel(r.throughput_macs_per_s(), 1.0 / 0.0500005) < 1e-12);
    }
}
