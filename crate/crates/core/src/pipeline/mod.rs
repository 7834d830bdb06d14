//! Full-image convolution through the crossbar engine.
//!
//! Every output pixel of every channel is one MAC: the `k x k` patch is
//! encoded into row pulses, the column peak current is read, and the integer
//! dot product is decoded from it. The kernel denominator is applied
//! digitally after decoding.

mod image;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::compiler::{CompileError, CrossbarProgram, Kernel};
use crate::crossbar::{self, CrossbarConfig, CrossbarError};
use crate::device::{mix_key, DrawContext};

pub use image::Image;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("invalid image: {0}")]
    BadImage(String),
    #[error("pnm: {0}")]
    Pnm(String),
    #[error("io: {0}")]
    Io(String),
    #[error("{kernel_rows}x{kernel_cols} kernel does not fit a {width}x{height} image")]
    KernelTooLarge {
        kernel_rows: usize,
        kernel_cols: usize,
        width: usize,
        height: usize,
    },
    #[error("stride must be positive")]
    BadStride,
    #[error("noise blend alpha {0} outside [0, 1]")]
    BadAlpha(f64),
    #[error("row {row} outside output height {height}")]
    BadRow { row: usize, height: usize },
    #[error("pixel (x={x}, y={y}, c={channel}): {source}")]
    Pixel {
        x: usize,
        y: usize,
        channel: usize,
        source: Box<PipelineError>,
    },
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Crossbar(#[from] CrossbarError),
}

/// How the peak current of each MAC is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MacMode {
    #[default]
    Analytic,
    Simulated,
}

/// Digital post-scaling of the decoded dot product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputScale {
    /// Divide by the kernel denominator, round half up.
    #[default]
    KernelDen,
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    None,
    Sigmoid,
}

/// Elementwise activation of MAC outputs.
pub fn apply_activation(values: &[f64], kind: Activation) -> Vec<f64> {
    match kind {
        Activation::None => values.to_vec(),
        Activation::Sigmoid => values.iter().map(|x| 1.0 / (1.0 + (-x).exp())).collect(),
    }
}

/// Blends each byte with uniform noise: `round((1 - alpha) p + alpha u)`,
/// `u` uniform on `0..=255`.
pub fn add_noise(image: &Image, alpha: f64, seed: u64) -> Result<Image, PipelineError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(PipelineError::BadAlpha(alpha));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_key(seed, "input-noise", &[]));
    let mut out = image.clone();
    for p in out.pixels_mut() {
        let u: u8 = rng.random();
        let v = (1.0 - alpha) * f64::from(*p) + alpha * f64::from(u);
        *p = (v + 0.5).floor().clamp(0.0, 255.0) as u8;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionJob {
    pub program: CrossbarProgram,
    pub stride: usize,
    pub mode: MacMode,
    pub output_scale: OutputScale,
}

impl ConvolutionJob {
    pub fn new(program: CrossbarProgram) -> Self {
        Self {
            program,
            stride: 1,
            mode: MacMode::Analytic,
            output_scale: OutputScale::KernelDen,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionOutput {
    pub image: Image,
    pub macs: usize,
}

/// One MAC along a sampled output row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowPeak {
    pub x: usize,
    pub channel: usize,
    pub i_analytic_ma: f64,
    pub i_simulated_ma: f64,
    pub byte: u8,
}

pub const ROW_PEAK_HEADER: &str = "x,channel,i_analytic_ma,i_sim_ma,byte";

pub fn row_peaks_csv(peaks: &[RowPeak]) -> String {
    let mut out = format!("{ROW_PEAK_HEADER}\n");
    for p in peaks {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            p.x, p.channel, p.i_analytic_ma, p.i_simulated_ma, p.byte
        ));
    }
    out
}

/// `(width, height)` of the valid, unpadded output.
pub fn output_dims(
    width: usize,
    height: usize,
    kernel_rows: usize,
    kernel_cols: usize,
    stride: usize,
) -> Result<(usize, usize), PipelineError> {
    if stride == 0 {
        return Err(PipelineError::BadStride);
    }
    if kernel_rows > height || kernel_cols > width {
        return Err(PipelineError::KernelTooLarge {
            kernel_rows,
            kernel_cols,
            width,
            height,
        });
    }
    Ok((
        (width - kernel_cols) / stride + 1,
        (height - kernel_rows) / stride + 1,
    ))
}

fn scale_output(dot: i64, scale: OutputScale, den: u32) -> u8 {
    let v = match scale {
        OutputScale::KernelDen => {
            let den = i64::from(den);
            (2 * dot + den).div_euclid(2 * den)
        }
        OutputScale::Raw => dot,
    };
    v.clamp(0, 255) as u8
}

fn patch(image: &Image, x0: usize, y0: usize, c: usize, rows: usize, cols: usize) -> Vec<u32> {
    let mut out = Vec::with_capacity(rows * cols);
    for dy in 0..rows {
        for dx in 0..cols {
            out.push(u32::from(image.get(x0 + dx, y0 + dy, c)));
        }
    }
    out
}

/// Draw context for the MAC at output `(x, y)` of channel `c`.
pub fn mac_context(seed: u64, x: usize, y: usize, c: usize) -> DrawContext {
    DrawContext::keyed(seed, "mac-read", &[c as u64, y as u64, x as u64])
}

struct MacReading {
    i_analytic: f64,
    i_simulated: Option<f64>,
    dot: i64,
}

fn run_mac(
    job: &ConvolutionJob,
    image: &Image,
    config: &CrossbarConfig,
    (x, y, c): (usize, usize, usize),
    simulate: bool,
) -> Result<MacReading, PipelineError> {
    let (kr, kc) = job.program.kernel_shape();
    let inner = || -> Result<MacReading, PipelineError> {
        let schedule =
            job.program
                .encode_inputs(&patch(image, x * job.stride, y * job.stride, c, kr, kc))?;
        let mut ctx = mac_context(config.noise.seed, x, y, c);
        let (i_analytic, i_simulated) = if simulate {
            let r = crossbar::mac_simulate(&job.program, &schedule, config, &mut ctx)?;
            (r.i_peak_analytic_ma, Some(r.i_peak_simulated_ma))
        } else {
            (
                crossbar::mac_analytic(&job.program, &schedule, config, &mut ctx)?,
                None,
            )
        };
        let readout = match job.mode {
            MacMode::Analytic => i_analytic,
            MacMode::Simulated => i_simulated.unwrap_or(i_analytic),
        };
        Ok(MacReading {
            i_analytic,
            i_simulated,
            dot: crossbar::decode_dot(readout, &job.program)?,
        })
    };
    inner().map_err(|e| PipelineError::Pixel {
        x,
        y,
        channel: c,
        source: Box::new(e),
    })
}

/// Convolves every channel of `image` through the crossbar.
///
/// Output pixels are evaluated in parallel; each MAC draws read noise from a
/// substream keyed by its coordinates, so the result is independent of
/// scheduling.
pub fn convolve(
    image: &Image,
    job: &ConvolutionJob,
    config: &CrossbarConfig,
) -> Result<ConvolutionOutput, PipelineError> {
    config.validate()?;
    let (kr, kc) = job.program.kernel_shape();
    let (out_w, out_h) = output_dims(image.width(), image.height(), kr, kc, job.stride)?;
    let channels = image.channels();
    let simulate = job.mode == MacMode::Simulated;

    let rows: Vec<Vec<u8>> = (0..out_h)
        .into_par_iter()
        .map(|y| {
            let mut row = Vec::with_capacity(out_w * channels);
            for x in 0..out_w {
                for c in 0..channels {
                    let r = run_mac(job, image, config, (x, y, c), simulate)?;
                    row.push(scale_output(
                        r.dot,
                        job.output_scale,
                        job.program.scale_den(),
                    ));
                }
            }
            Ok(row)
        })
        .collect::<Result<_, PipelineError>>()?;

    Ok(ConvolutionOutput {
        image: Image::new(out_w, out_h, channels, rows.concat())?,
        macs: out_w * out_h * channels,
    })
}

/// Analytic and simulated peak currents for every MAC on output row `row`.
pub fn row_peaks(
    image: &Image,
    job: &ConvolutionJob,
    config: &CrossbarConfig,
    row: usize,
) -> Result<Vec<RowPeak>, PipelineError> {
    config.validate()?;
    let (kr, kc) = job.program.kernel_shape();
    let (out_w, out_h) = output_dims(image.width(), image.height(), kr, kc, job.stride)?;
    if row >= out_h {
        return Err(PipelineError::BadRow { row, height: out_h });
    }
    let cells: Vec<(usize, usize)> = (0..out_w)
        .flat_map(|x| (0..image.channels()).map(move |c| (x, c)))
        .collect();
    cells
        .into_par_iter()
        .map(|(x, c)| {
            let r = run_mac(job, image, config, (x, row, c), true)?;
            Ok(RowPeak {
                x,
                channel: c,
                i_analytic_ma: r.i_analytic,
                i_simulated_ma: r.i_simulated.expect("simulated"),
                byte: scale_output(r.dot, job.output_scale, job.program.scale_den()),
            })
        })
        .collect()
}

/// Integer software convolution with the same stride and rounding rules.
pub fn reference_convolve(
    image: &Image,
    kernel: &Kernel,
    stride: usize,
    output_scale: OutputScale,
) -> Result<Image, PipelineError> {
    let (kr, kc) = (kernel.rows(), kernel.cols());
    let (out_w, out_h) = output_dims(image.width(), image.height(), kr, kc, stride)?;
    let channels = image.channels();
    let mut out = Image::filled(out_w, out_h, channels, 0)?;
    for y in 0..out_h {
        for x in 0..out_w {
            for c in 0..channels {
                let dot: i64 = patch(image, x * stride, y * stride, c, kr, kc)
                    .iter()
                    .zip(kernel.weights())
                    .map(|(&p, &w)| i64::from(p) * w)
                    .sum();
                out.set(x, y, c, scale_output(dot, output_scale, kernel.scale_den()));
            }
        }
    }
    Ok(out)
}
