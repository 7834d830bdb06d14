//! `freqbar` command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use freqbar::analysis::compare_baseline;
use freqbar::compiler::{
    compile, AmplitudeLaw, CompileOptions, CrossbarProgram, Kernel, QuantizationReport,
};
use freqbar::crossbar::{mac_simulate, CrossbarConfig, SimResult};
use freqbar::device::{ConductanceTable, NoiseModel};
use freqbar::pipeline::{self, add_noise, convolve, row_peaks, ConvolutionJob, Image};
use freqbar::waveform::DEFAULT_AMPLITUDE_CEILING;
use freqbar::{Error, MacMode, Policy};

#[derive(Parser, Debug)]
#[command(
    name = "freqbar",
    version,
    about = "Frequency-modulated binary memristor crossbar simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Lower a kernel file to a crossbar program.
    Compile {
        #[command(flatten)]
        lowering: Lowering,
        /// Program file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Blend uniform noise into an image.
    Noise {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Convolve a PGM/PPM image through the crossbar.
    Convolve {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        source: ProgramSource,
        #[command(flatten)]
        sim: SimFlags,
        #[arg(long, value_enum, default_value_t = ModeArg::Analytic)]
        mode: ModeArg,
        /// Output row whose MAC peak currents are written to CSV.
        #[arg(long)]
        row: Option<usize>,
        /// Destination of the row-peak CSV (default: `<out>.row<N>.csv`).
        #[arg(long)]
        peaks: Option<PathBuf>,
    },
    /// Simulate one MAC and report its peak current.
    Simulate {
        #[command(flatten)]
        source: ProgramSource,
        #[command(flatten)]
        sim: SimFlags,
        /// Comma-separated pixel values, one per cell (default: all at pixel max).
        #[arg(long)]
        patch: Option<String>,
        /// Write the sampled waveform CSV here.
        #[arg(long)]
        dump_waveform: Option<PathBuf>,
        /// Write the result line here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Power, energy, latency and area against a bit-sliced baseline.
    Report {
        #[command(flatten)]
        source: ProgramSource,
        #[arg(long, default_value_t = 8)]
        nbits: u32,
        #[arg(long, default_value_t = 500.0)]
        readout_ns: f64,
        /// Row amplitude in volts (default: the program's top amplitude).
        #[arg(long)]
        v0: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct Lowering {
    /// Kernel file: `rows cols scale_den` then the weight rows.
    #[arg(long)]
    kernel: PathBuf,
    /// Conductance table CSV (default: built-in GeSeSn-W table).
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PolicyArg::Speed)]
    policy: PolicyArg,
    /// Also consider OFF-branch grid points.
    #[arg(long)]
    allow_off: bool,
    #[arg(long, default_value_t = 0.15)]
    v_lo: f64,
    #[arg(long, default_value_t = 0.66)]
    v_hi: f64,
}

#[derive(Args, Debug)]
struct ProgramSource {
    /// Compiled program file.
    #[arg(long, conflicts_with_all = ["kernel", "table"])]
    program: Option<PathBuf>,
    /// Kernel file, compiled on the fly.
    #[arg(long)]
    kernel: Option<PathBuf>,
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PolicyArg::Speed)]
    policy: PolicyArg,
}

#[derive(Args, Debug)]
struct SimFlags {
    /// Relative sigma of the per-read conductance noise.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Wire resistance per segment in ohms.
    #[arg(long, default_value_t = 0.0)]
    line_res: f64,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum PolicyArg {
    Speed,
    Energy,
}

impl From<PolicyArg> for Policy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Speed => Policy::Speed,
            PolicyArg::Energy => Policy::Energy,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum ModeArg {
    Analytic,
    Sim,
}

fn load_table(path: Option<&Path>) -> Result<ConductanceTable> {
    Ok(match path {
        Some(p) => ConductanceTable::load(p).map_err(Error::from)?,
        None => ConductanceTable::builtin(),
    })
}

fn lower(
    kernel: &Path,
    table: Option<&Path>,
    options: CompileOptions,
    law: AmplitudeLaw,
) -> Result<CrossbarProgram> {
    let table = load_table(table)?;
    let kernel = Kernel::load(kernel).map_err(Error::from)?;
    Ok(compile(&kernel, &table, law, options).map_err(Error::from)?)
}

impl ProgramSource {
    fn resolve(&self) -> Result<CrossbarProgram> {
        match (&self.program, &self.kernel) {
            (Some(p), _) => Ok(CrossbarProgram::load(p).map_err(Error::from)?),
            (None, Some(k)) => lower(
                k,
                self.table.as_deref(),
                CompileOptions {
                    policy: self.policy.into(),
                    allow_off_branch: false,
                },
                AmplitudeLaw::default(),
            ),
            (None, None) => bail!("one of --program or --kernel is required"),
        }
    }
}

impl SimFlags {
    fn config(&self) -> Result<CrossbarConfig> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            bail!("--sigma must be finite and >= 0");
        }
        let config = CrossbarConfig {
            line_resistance_ohm: self.line_res,
            noise: NoiseModel::new(self.sigma, self.seed),
            ..CrossbarConfig::default()
        };
        config.validate().map_err(Error::from)?;
        Ok(config)
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn parse_patch(text: &str) -> Result<Vec<u32>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<u32>()
                .with_context(|| format!("bad patch value `{s}`"))
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Compile { lowering, out } => {
            let law =
                AmplitudeLaw::new(lowering.v_lo, lowering.v_hi, 255, DEFAULT_AMPLITUDE_CEILING)
                    .map_err(Error::from)?;
            let options = CompileOptions {
                policy: lowering.policy.into(),
                allow_off_branch: lowering.allow_off,
            };
            let program = lower(&lowering.kernel, lowering.table.as_deref(), options, law)?;
            write(&out, program.to_text())?;
            print!("{}", QuantizationReport::from_program(&program).to_csv());
        }
        Command::Noise {
            image,
            out,
            alpha,
            seed,
        } => {
            let img = Image::load(&image).map_err(Error::from)?;
            add_noise(&img, alpha, seed)
                .map_err(Error::from)?
                .save(&out)
                .map_err(Error::from)?;
        }
        Command::Convolve {
            image,
            out,
            source,
            sim,
            mode,
            row,
            peaks,
        } => {
            let img = Image::load(&image).map_err(Error::from)?;
            let program = source.resolve()?;
            let config = sim.config()?;
            let job = ConvolutionJob {
                mode: if mode == ModeArg::Sim {
                    MacMode::Simulated
                } else {
                    MacMode::Analytic
                },
                ..ConvolutionJob::new(program)
            };
            let result = convolve(&img, &job, &config).map_err(Error::from)?;
            result.image.save(&out).map_err(Error::from)?;
            if let Some(row) = row {
                let peaks_path = peaks.unwrap_or_else(|| {
                    let mut p = out.clone().into_os_string();
                    p.push(format!(".row{row}.csv"));
                    p.into()
                });
                let data = row_peaks(&img, &job, &config, row).map_err(Error::from)?;
                write(&peaks_path, pipeline::row_peaks_csv(&data))?;
            }
            println!(
                "macs={} width={} height={} channels={}",
                result.macs,
                result.image.width(),
                result.image.height(),
                result.image.channels()
            );
        }
        Command::Simulate {
            source,
            sim,
            patch,
            dump_waveform,
            out,
        } => {
            let program = source.resolve()?;
            let patch = match patch {
                Some(text) => parse_patch(&text)?,
                None => vec![program.amplitude_law().pixel_max; program.len()],
            };
            let schedule = program.encode_inputs(&patch).map_err(Error::from)?;
            let config = CrossbarConfig {
                rows: program.len().max(CrossbarConfig::default().rows),
                record_waveform: dump_waveform.is_some(),
                ..sim.config()?
            };
            let mut ctx = pipeline::mac_context(config.noise.seed, 0, 0, 0);
            let result =
                mac_simulate(&program, &schedule, &config, &mut ctx).map_err(Error::from)?;
            if let (Some(path), Some(trace)) = (&dump_waveform, &result.waveform) {
                write(path, trace.to_csv())?;
            }
            let line = format!("{}\n{}\n", SimResult::CSV_HEADER, result.csv_line());
            if let Some(path) = &out {
                write(path, &line)?;
            }
            print!("{line}");
        }
        Command::Report {
            source,
            nbits,
            readout_ns,
            v0,
            out,
        } => {
            let program = source.resolve()?;
            let v = v0.unwrap_or(program.amplitude_law().v_hi);
            let amplitudes = vec![v; program.len()];
            let report = compare_baseline(&program, nbits, &amplitudes, readout_ns * 1e-9)
                .map_err(Error::from)?;
            let csv = report.to_csv();
            match &out {
                Some(path) => write(path, &csv)?,
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!(
                "error: cli: {}",
                one_line(first.trim_start_matches("error: "))
            );
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let line = match err.downcast_ref::<Error>() {
                Some(e) => e.to_string(),
                None => format!("cli: {err:#}"),
            };
            eprintln!("error: {}", one_line(&line));
            ExitCode::FAILURE
        }
    }
}
