//! `starlight`: batch commands over star catalogs and light curves, plus the
//! live performance server.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use starlight_core::analysis::{even_times, extract_modes, simulate_light_curve, ExtractionConfig, LightCurve};
use starlight_core::audify::{format_parameter_table, parameter_table, AudifyConfig, Rounding, C4_HZ};
use starlight_core::catalog::{builtin_catalog, find_star, load_catalog, write_catalog, StarRecord};
use starlight_core::reservoir::{export_midi, export_text, reservoir_from_star, PitchGrid, TuningConfig};
use starlight_core::synth::{render_partials, write_wav, RenderConfig};
use starlight_perform::{serve, ServerConfig, SinkSpec, DEFAULT_OUTPUT_BUFFER_BLOCKS};

#[derive(Parser)]
#[command(name = "starlight", version, about = "Audify pulsating stars")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a star's modes to a WAV file and print its parameter table.
    Audify(AudifyArgs),
    /// Extract pulsation modes from a light-curve CSV; prints catalog CSV.
    Analyze(AnalyzeArgs),
    /// Quantize a star's audible frequencies to a pitch reservoir.
    Reservoir(ReservoirArgs),
    /// Run the live performance server.
    Serve(ServeArgs),
    /// Write a noiseless light curve for a star.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct StarArgs {
    /// Catalog CSV; the built-in catalog is used when omitted.
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(long, default_value = "v465_per")]
    star: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum RoundingArg {
    #[value(name = "full_precision")]
    FullPrecision,
    #[value(name = "table_compat")]
    TableCompat,
}

#[derive(Args)]
struct MappingArgs {
    #[arg(long, default_value_t = C4_HZ)]
    base_hz: f64,
    #[arg(long, value_enum, default_value = "full_precision")]
    rounding: RoundingArg,
}

impl MappingArgs {
    fn config(&self) -> AudifyConfig {
        let rounding = match self.rounding {
            RoundingArg::FullPrecision => Rounding::FullPrecision,
            RoundingArg::TableCompat => Rounding::TableCompat,
        };
        AudifyConfig { base_hz: self.base_hz, rounding, ..AudifyConfig::default() }
    }
}

#[derive(Args)]
struct AudifyArgs {
    #[command(flatten)]
    star: StarArgs,
    #[command(flatten)]
    mapping: MappingArgs,
    /// Output WAV; only the table is printed when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seconds each partial sounds from its own start.
    #[arg(long, default_value_t = 10.0)]
    duration: f64,
    #[arg(long, default_value_t = 44_100)]
    sample_rate: u32,
}

#[derive(Args)]
struct AnalyzeArgs {
    lightcurve: PathBuf,
    #[arg(long, default_value_t = 10)]
    n_modes: usize,
    #[arg(long, default_value_t = 10.0)]
    oversample: f64,
    #[arg(long, default_value_t = 4.0)]
    snr_stop: f64,
    /// Highest frequency searched, c/d (default: 1.5 × Nyquist of the median step).
    #[arg(long)]
    f_max: Option<f64>,
    /// Star id for the printed rows (default: the file stem).
    #[arg(long)]
    id: Option<String>,
    #[arg(long)]
    name: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum GridArg {
    #[value(name = "semitone_12")]
    Semitone12,
    #[value(name = "quartertone_24")]
    Quartertone24,
}

#[derive(Args)]
struct ReservoirArgs {
    #[command(flatten)]
    star: StarArgs,
    #[command(flatten)]
    mapping: MappingArgs,
    #[arg(long, value_enum, default_value = "semitone_12")]
    grid: GridArg,
    #[arg(long, default_value_t = 440.0)]
    a4: f64,
    #[arg(long)]
    midi_out: Option<PathBuf>,
    /// Text notation file; printed to stdout when omitted.
    #[arg(long)]
    text_out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:9000")]
    bind: String,
    /// Record to a rolling WAV file instead of the sound device.
    #[arg(long)]
    wav_sink: Option<PathBuf>,
    #[arg(long, default_value_t = 512)]
    block_frames: usize,
    /// Output buffer depth in blocks.
    #[arg(long, default_value_t = DEFAULT_OUTPUT_BUFFER_BLOCKS)]
    buffer_blocks: u64,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    star: StarArgs,
    #[arg(long, default_value_t = 10.0)]
    days: f64,
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    #[arg(long, default_value_t = 0.0)]
    start: f64,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn catalog(path: Option<&Path>) -> Result<Vec<StarRecord>> {
    match path {
        Some(p) => load_catalog(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(builtin_catalog()),
    }
}

fn star(args: &StarArgs) -> Result<StarRecord> {
    let stars = catalog(args.catalog.as_deref())?;
    find_star(&stars, &args.star).cloned().ok_or_else(|| anyhow!("unknown star id `{}`", args.star))
}

fn audify(args: AudifyArgs) -> Result<()> {
    let star = star(&args.star)?;
    let cfg = args.mapping.config();
    let rows = parameter_table(&star, &cfg)?;
    if let Some(out) = &args.out {
        let partials = starlight_core::audify::audify_star(&star, &cfg)?;
        let rcfg = RenderConfig { sample_rate: args.sample_rate, duration_s: args.duration, ..RenderConfig::default() };
        let buffer = render_partials(&partials, &rcfg)?;
        write_wav(&buffer, out)?;
        info!("wrote {} ({:.3} s)", out.display(), buffer.duration_s());
    }
    print!("{}", format_parameter_table(&rows));
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let lc = LightCurve::load(&args.lightcurve)?;
    let cfg = ExtractionConfig {
        n_modes: args.n_modes,
        oversample: args.oversample,
        f_max_cpd: args.f_max,
        snr_stop: args.snr_stop,
    };
    let modes = extract_modes(&lc, &cfg)?;
    if modes.is_empty() {
        return Err(anyhow!("no mode above the stopping threshold"));
    }
    let id = args.id.unwrap_or_else(|| {
        args.lightcurve.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "star".into())
    });
    let name = args.name.unwrap_or_else(|| id.clone());
    let star = StarRecord { id, name, modes, source: String::new() };
    write_catalog(&[star], io::stdout().lock())?;
    Ok(())
}

fn reservoir(args: ReservoirArgs) -> Result<()> {
    let star = star(&args.star)?;
    let grid = match args.grid {
        GridArg::Semitone12 => PitchGrid::Semitone12,
        GridArg::Quartertone24 => PitchGrid::Quartertone24,
    };
    let events = reservoir_from_star(&star, &args.mapping.config(), &TuningConfig { a4_hz: args.a4, grid })?;
    let text = export_text(&events);
    if let Some(path) = &args.midi_out {
        export_midi(&events, path)?;
    }
    match &args.text_out {
        Some(path) => fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let star = star(&args.star)?;
    if args.samples == 0 || args.days.is_nan() || args.days <= 0.0 {
        return Err(anyhow!("--samples and --days must be positive"));
    }
    let lc = simulate_light_curve(&star, &even_times(args.start, args.days, args.samples))?;
    match &args.out {
        Some(path) => {
            let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            lc.write_csv(io::BufWriter::new(file))?;
        }
        None => lc.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

fn run_server(args: ServeArgs) -> Result<()> {
    let stars = catalog(args.catalog.as_deref())?;
    let sink = match args.wav_sink {
        Some(path) => SinkSpec::Wav(path),
        None => SinkSpec::Device,
    };
    let cfg = ServerConfig {
        bind: args.bind,
        sink,
        block_frames: args.block_frames,
        output_buffer_blocks: args.buffer_blocks,
        ..ServerConfig::default()
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let server = serve(stars, cfg).await?;
        println!("listening on ws://{}", server.local_addr());
        io::stdout().flush()?;
        tokio::signal::ctrl_c().await?;
        let stats = server.shutdown().await;
        info!("stopped after {} blocks, {} deadline misses", stats.blocks_rendered, stats.deadline_misses);
        Ok(())
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Audify(a) => audify(a),
        Command::Analyze(a) => analyze(a),
        Command::Reservoir(a) => reservoir(a),
        Command::Serve(a) => run_server(a),
        Command::Simulate(a) => simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
