mod output;

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use tradeflow::backbone::{backbone_stats, connected_components, extract_backbone};
use tradeflow::diffusion::{
    detailed_balance_check, exact_absorption, imbalance_reconstruction, rank_local_partners,
    rank_partners, walk_matrix_mc, AbsorptionMatrix, DiffusionError, WalkConfig, WalkDirection,
};
use tradeflow::disparity::{disparity_points, disparity_profile, fit_scaling_exponent, FluxDirection};
use tradeflow::export;
use tradeflow::ingest::{
    parse_dyadic_records, read_trade_matrix, reconcile_flows, validate_trade_matrix,
    write_trade_matrix, FormatMap, ReconcilePolicy,
};
use tradeflow::network::{build_imbalance_network, flux_histogram};
use tradeflow::Network;

use output::OutDir;

#[derive(Parser)]
#[command(name = "tradeflow", version, about = "Trade-imbalance network pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reconcile bilateral records for one year and build the imbalance network.
    Build(BuildArgs),
    /// Disparity profiles and scaling fits for incoming and outgoing flux.
    Disparity(DisparityArgs),
    /// Significance-filtered backbones for one or more thresholds.
    Backbone(BackboneArgs),
    /// Absorbing random walks from sources to sinks or back.
    Dollar(DollarArgs),
    /// GraphML and flux histogram of a network.
    Export(ExportArgs),
}

#[derive(Args)]
struct BuildArgs {
    /// Delimited bilateral records, or a matrix file starting with `#year`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    year: i32,
    /// average, prefer-importer, prefer-exporter or max.
    #[arg(long, default_value = "average")]
    policy: ReconcilePolicy,
    /// Column mapping, e.g. `year=yr,reporter=a,partner=b,exports=x,imports=m,missing=-9|NA`.
    #[arg(long, default_value = "")]
    format_map: FormatMap,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct DisparityArgs {
    /// Edge-list TSV written by `build`.
    #[arg(long)]
    network: PathBuf,
    /// Smallest degree used in the scaling fit.
    #[arg(long, default_value_t = 2)]
    k_min: usize,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BackboneArgs {
    #[arg(long)]
    network: PathBuf,
    /// Thresholds in (0, 1), strictly decreasing.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    alpha: Vec<f64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct DollarArgs {
    #[arg(long)]
    network: PathBuf,
    /// Focal country: a source for forward walks, a sink for backward walks.
    /// Without it every start node is simulated and no ranking is written.
    #[arg(long)]
    from: Option<String>,
    #[arg(long, default_value = "forward")]
    direction: WalkDirection,
    #[arg(long, default_value_t = 1_000_000)]
    walkers: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1_000_000)]
    max_steps: u64,
    /// Solve the absorbing chain directly instead of sampling, and write
    /// consistency diagnostics.
    #[arg(long)]
    exact: bool,
    #[arg(long, default_value_t = 10)]
    top: usize,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    network: PathBuf,
    /// Also write a flux histogram with this many bins.
    #[arg(long)]
    histogram_bins: Option<usize>,
    /// Logarithmic histogram bins.
    #[arg(long)]
    log_bins: bool,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

enum Failure {
    Usage(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.into())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Build(a) => build(a),
        Command::Disparity(a) => disparity(a),
        Command::Backbone(a) => backbone(a),
        Command::Dollar(a) => dollar(a),
        Command::Export(a) => export_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn load_network(path: &Path) -> anyhow::Result<Network> {
    export::read_edge_list(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn build(a: BuildArgs) -> CmdResult {
    let mut text = String::new();
    open(&a.input)?.read_to_string(&mut text)?;
    let matrix = if text.trim_start().starts_with("#year") {
        let tm = read_trade_matrix(text.as_bytes()).with_context(|| format!("reading {}", a.input.display()))?;
        if tm.year != a.year {
            return Err(anyhow!("matrix file is for year {}, not {}", tm.year, a.year).into());
        }
        let report = validate_trade_matrix(&tm);
        eprint!("{report}");
        if !report.violations.is_empty() {
            return Err(anyhow!("invalid trade matrix").into());
        }
        tm
    } else {
        let parsed = parse_dyadic_records(text.as_bytes(), &a.format_map)
            .with_context(|| format!("reading {}", a.input.display()))?;
        if parsed.records.is_empty() {
            eprint!("{}", parsed.report);
            return Err(anyhow!("no records in {}", a.input.display()).into());
        }
        let (tm, mut report) = reconcile_flows(&parsed.records, a.year, a.policy);
        if report.n_records == 0 {
            return Err(anyhow!("no records for year {} in {}", a.year, a.input.display()).into());
        }
        let mut dropped = parsed.report.dropped;
        dropped.append(&mut report.dropped);
        report.dropped = dropped;
        let check = validate_trade_matrix(&tm);
        report.isolated = check.isolated;
        report.violations = check.violations;
        eprint!("{report}");
        if !report.violations.is_empty() {
            return Err(anyhow!("invalid trade matrix").into());
        }
        tm
    };

    let net = build_imbalance_network(&matrix).context("building network")?;
    let out = OutDir::create(&a.out_dir)?;
    out.write("matrix.txt", |w| write_trade_matrix(&matrix, w).map_err(std::io::Error::other))?;
    out.write("network.tsv", |w| export::write_edge_list(&net, w))?;
    out.write("accounts.csv", |w| export::write_accounts_csv(&net.node_accounts(), w))?;
    eprintln!(
        "{} countries, {} edges, total flux {}",
        net.len(),
        net.edges().len(),
        net.total_flux()
    );
    Ok(())
}

fn disparity(a: DisparityArgs) -> CmdResult {
    let net = load_network(&a.network)?;
    let out = OutDir::create(&a.out_dir)?;
    let mut fits = serde_json::Map::new();
    for dir in [FluxDirection::In, FluxDirection::Out] {
        let profile = disparity_profile(&net, dir).context("disparity profile")?;
        out.write(&format!("profile_{dir}.csv"), |w| export::write_profile_csv(&profile, w))?;
        let points = disparity_points(&net, dir);
        out.write(&format!("disparity_{dir}.csv"), |w| {
            writeln!(w, "country,direction,k,kY,null_mean,null_sigma,significant")?;
            for p in &points {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    p.country,
                    p.direction,
                    p.k,
                    p.k_y,
                    p.null_mean,
                    p.null_sigma(),
                    p.significant
                )?;
            }
            Ok(())
        })?;
        let fit = match fit_scaling_exponent(&profile, a.k_min) {
            Ok(fit) => {
                eprintln!("beta_{dir} = {:.4} (r^2 {:.4})", fit.beta, fit.r_squared);
                serde_json::to_value(&fit).map_err(anyhow::Error::from)?
            }
            Err(e) => {
                eprintln!("warning: no {dir} fit: {e}");
                json!({ "direction": dir, "error": e.to_string() })
            }
        };
        fits.insert(dir.to_string(), fit);
    }
    out.write_json("fit.json", &fits)?;
    Ok(())
}

fn backbone(a: BackboneArgs) -> CmdResult {
    for &alpha in &a.alpha {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Failure::Usage(format!("alpha {alpha} is outside (0, 1)")));
        }
    }
    if a.alpha.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Failure::Usage("alpha values must be strictly decreasing".into()));
    }
    let net = load_network(&a.network)?;
    if net.edges().is_empty() {
        return Err(anyhow!("network has no edges").into());
    }
    let out = OutDir::create(&a.out_dir)?;
    let mut stats = Vec::with_capacity(a.alpha.len());
    for &alpha in &a.alpha {
        let bb = extract_backbone(&net, alpha).map_err(|e| Failure::Usage(e.to_string()))?;
        out.write(&format!("backbone_{alpha}.tsv"), |w| export::write_backbone_edge_list(&bb, w))?;
        out.write(&format!("backbone_{alpha}.graphml"), |w| export::write_backbone_graphml(&bb, w))?;
        let row = backbone_stats(&bb).context("backbone stats")?;
        let components = connected_components(&bb);
        eprintln!(
            "alpha {alpha}: flux {:.2}%, nodes {:.2}%, edges {:.2}%, {} components",
            row.pct_flux,
            row.pct_nodes,
            row.pct_edges,
            components.len()
        );
        stats.push(row);
    }
    out.write("stats.csv", |w| export::write_stats_csv(&stats, w))?;
    Ok(())
}

fn focal_error(e: DiffusionError) -> Failure {
    match e {
        DiffusionError::UnknownCountry(_) | DiffusionError::WrongClass { .. } => Failure::Usage(e.to_string()),
        e => Failure::Other(e.into()),
    }
}

fn dollar(a: DollarArgs) -> CmdResult {
    let net = load_network(&a.network)?;
    let cfg = WalkConfig::new(a.walkers, a.max_steps, a.seed).map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(focal) = &a.from {
        check_focal(&net, focal, a.direction)?;
    }

    let out = OutDir::create(&a.out_dir)?;
    let matrix: AbsorptionMatrix<f64> = if a.exact {
        let e = exact_absorption(&net, WalkDirection::Forward).map_err(anyhow::Error::from)?;
        let g = exact_absorption(&net, WalkDirection::Backward).map_err(anyhow::Error::from)?;
        let accounts = net.node_accounts();
        let balance = detailed_balance_check(&e, &g, &accounts).map_err(anyhow::Error::from)?;
        let rec = imbalance_reconstruction(&e, &accounts, Some(&g)).map_err(anyhow::Error::from)?;
        let flux = net.total_flux();
        out.write_json(
            "diagnostics.json",
            &json!({
                "total_flux": flux,
                "detailed_balance_max_residual": balance,
                "detailed_balance_relative": balance / flux,
                "reconstruction_forward_max_relative_error": rec.max_relative_error,
                "reconstruction_backward_max_relative_error": rec.backward_max_relative_error,
            }),
        )?;
        eprintln!(
            "detailed balance residual {:.3e} of flux, reconstruction error {:.3e} / {:.3e}",
            balance / flux,
            rec.max_relative_error,
            rec.backward_max_relative_error.unwrap_or(0.0)
        );
        match a.direction {
            WalkDirection::Forward => e,
            WalkDirection::Backward => g,
        }
    } else {
        let m = walk_matrix_mc_for(&net, a.direction, a.from.as_deref(), &cfg)?;
        for (r, &start) in m.starts.iter().enumerate() {
            if m.non_absorbed[r] > tradeflow::diffusion::NON_ABSORBED_WARNING {
                eprintln!(
                    "warning: {:.2}% of walkers from {} hit the step cap",
                    100.0 * m.non_absorbed[r],
                    m.countries[start]
                );
            }
        }
        m
    };

    out.write("absorption.csv", |w| export::write_absorption_csv(&matrix, w))?;
    out.write_json("absorption.json", &matrix)?;
    if let Some(focal) = &a.from {
        let global = rank_partners(&matrix, &net, focal, a.top).map_err(focal_error)?;
        let local = rank_local_partners(&matrix, &net, focal, a.top).map_err(focal_error)?;
        out.write("ranking.csv", |w| export::write_ranking_csv(&global, w))?;
        out.write("ranking_local.csv", |w| export::write_ranking_csv(&local, w))?;
        for (i, r) in global.rows.iter().enumerate() {
            eprintln!("{:>3} {:<8} {:>8.3}%", i + 1, r.partner, 100.0 * r.global_share);
        }
    }
    Ok(())
}

fn check_focal(net: &Network, focal: &str, direction: WalkDirection) -> CmdResult {
    let node = net
        .index_of(focal)
        .ok_or_else(|| Failure::Usage(format!("unknown country {focal:?}")))?;
    let class = net.node_accounts()[node].class();
    if class != direction.start_class() {
        return Err(Failure::Usage(format!(
            "{focal} is a {class} (net imbalance {}); {direction} walks start at a {}",
            net.node_accounts()[node].delta_s,
            direction.start_class()
        )));
    }
    Ok(())
}

/// Monte Carlo matrix; restricted to the focal row when one is given.
fn walk_matrix_mc_for(
    net: &Network,
    direction: WalkDirection,
    focal: Option<&str>,
    cfg: &WalkConfig,
) -> Result<AbsorptionMatrix<f64>, Failure> {
    let Some(focal) = focal else {
        return walk_matrix_mc(net, direction, cfg).map_err(|e| Failure::Other(e.into()));
    };
    let outcome = match direction {
        WalkDirection::Forward => tradeflow::diffusion::forward_walk_mc(net, focal, cfg),
        WalkDirection::Backward => tradeflow::diffusion::backward_walk_mc(net, focal, cfg),
    }
    .map_err(focal_error)?;
    Ok(AbsorptionMatrix {
        direction,
        countries: net.countries().to_vec(),
        starts: vec![outcome.start],
        ends: outcome.ends,
        rows: vec![outcome.shares],
        non_absorbed: vec![outcome.non_absorbed],
    })
}

fn export_cmd(a: ExportArgs) -> CmdResult {
    let net = load_network(&a.network)?;
    let out = OutDir::create(&a.out_dir)?;
    out.write("network.graphml", |w| export::write_graphml(&net, w))?;
    if let Some(bins) = a.histogram_bins {
        if bins == 0 {
            return Err(Failure::Usage("--histogram-bins must be positive".into()));
        }
        let hist = flux_histogram(&net, bins, a.log_bins).context("flux histogram")?;
        out.write("histogram.csv", |w| export::write_histogram_csv(&hist, w))?;
    }
    Ok(())
}
