use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use sleeptrack::config::{ConfigFile, RunSection};
use sleeptrack::io::{load_table, save_table, write_points, write_trace, TableFile};
use sleeptrack::lowerbound::{lb_envelope, LambdaSearch};
use sleeptrack::model::NetworkModel;
use sleeptrack::policy::{Controller, PolicyKind};
use sleeptrack::sim::{
    default_u_max, episode_rng, expected_lifetime_mc, run_episode, run_learning_campaign, sweep as run_sweep,
    CurveSpec, EpisodeOptions, Schedule, SweepConfig, TableSource, TradeoffPoint, LIFETIME_RUNS,
};
use sleeptrack::tdelta::{build_table, Baseline, TDeltaTable, DEFAULT_SAMPLES};

use crate::{CliError, NetworkArgs, ReplayArgs, SweepArgs, TablesArgs};

type Result<T> = std::result::Result<T, CliError>;

const DEFAULT_GRID: [f64; 3] = [0.01, 0.1, 1.0];
const DEFAULT_RUNS: usize = 50;

/// A network, resolved from a builtin name or a config file, plus the
/// config's run section.
struct Setup {
    network: Network,
    run: RunSection,
    seed: u64,
    particles: usize,
    samples: usize,
    u_max: Option<usize>,
}

enum Network {
    Builtin(String),
    Spec(Box<sleeptrack::config::NetworkSpec>),
}

impl Setup {
    fn from_args(args: &NetworkArgs) -> Result<Self> {
        let file = match &args.config {
            Some(path) => Some(ConfigFile::load(path).map_err(at(path))?),
            None => None,
        };
        let (spec, run) = match file {
            Some(f) => (f.network, f.run),
            None => (None, RunSection::default()),
        };
        let network = match (&args.network, spec) {
            (Some(name), _) => Network::Builtin(name.clone()),
            (None, Some(spec)) => Network::Spec(Box::new(spec)),
            (None, None) => return Err(CliError::Usage("give --network or a --config with a [network] section".into())),
        };
        let particles = args.particles.or(run.particles).unwrap_or(sleeptrack::filter::DEFAULT_PARTICLES);
        if particles < 2 {
            return Err(sleeptrack::Error::Config("need at least two particles".into()).into());
        }
        Ok(Self {
            network,
            seed: args.seed.or(run.seed).unwrap_or(0),
            particles,
            samples: args.samples.or(run.samples).unwrap_or(DEFAULT_SAMPLES),
            u_max: args.u_max.or(run.u_max),
            run,
        })
    }

    fn model(&self, c: f64) -> Result<NetworkModel> {
        Ok(match &self.network {
            Network::Builtin(name) => NetworkModel::builtin(name, c)?,
            Network::Spec(spec) => spec.build(c)?,
        })
    }

    fn options(&self) -> EpisodeOptions {
        EpisodeOptions { particles: self.particles, ..EpisodeOptions::default() }
    }

    fn u_max(&self, model: &NetworkModel) -> Result<usize> {
        match self.u_max {
            Some(u) => Ok(u),
            None => Ok(default_u_max(&expected_lifetime_mc(model, LIFETIME_RUNS, self.seed)?)),
        }
    }
}

fn at(path: &Path) -> impl FnOnce(sleeptrack::Error) -> CliError + '_ {
    move |source| CliError::File { path: path.to_path_buf(), source }
}

fn source(name: &str) -> Result<TableSource> {
    Ok(match name {
        "asleep" => TableSource::Asleep,
        "greedy" => TableSource::Greedy,
        "learned" | "learning" => TableSource::Learned,
        "none" => TableSource::None,
        path => TableSource::File(load_table(Path::new(path)).map_err(at(Path::new(path)))?.table),
    })
}

/// `qmdp`, `fcr-asleep`, `all-awake`, ...
fn curve(name: &str, default_source: &TableSource) -> Result<CurveSpec> {
    if let Some((head, tail)) = name.split_once('-') {
        if let Ok(policy) = PolicyKind::parse(head) {
            if policy.uses_table() {
                return Ok(CurveSpec { policy, source: source(tail)? });
            }
        }
    }
    let policy = PolicyKind::parse(name)?;
    let source = if policy.uses_table() { default_source.clone() } else { TableSource::None };
    Ok(CurveSpec { policy, source })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| at(path)(e.into()))?))
}

pub fn tables(args: TablesArgs) -> Result<()> {
    let setup = Setup::from_args(&args.net)?;
    let model = setup.model(args.c)?;
    let table = match args.source.as_str() {
        "asleep" => build_table(&model, Baseline::Asleep, setup.samples, setup.seed)?,
        "greedy" => build_table(&model, Baseline::Greedy, setup.samples, setup.seed)?,
        "learned" | "learning" => {
            let init = build_table(&model, Baseline::Greedy, setup.samples, setup.seed)?;
            let kind = PolicyKind::parse(&args.policy)?;
            let u_max = setup.u_max(&model)?;
            let campaign =
                run_learning_campaign(&model, kind, init, u_max, &Schedule::default(), setup.seed, 0, &setup.options())?;
            campaign.table
        }
        other => return Err(CliError::Usage(format!("unknown table source {other:?}; expected asleep, greedy or learned"))),
    };
    log::info!("{} table: {} rows x {} sensors", table.provenance().as_str(), table.rows(), table.sensors());
    save_table(&args.out, &TableFile { table, sleep: None }).map_err(at(&args.out))?;
    Ok(())
}

pub fn sweep(args: SweepArgs) -> Result<()> {
    let setup = Setup::from_args(&args.net)?;
    let names = args.policy.clone().or(setup.run.policies.clone()).unwrap_or_else(|| vec!["qmdp".into()]);
    if names.is_empty() || names.iter().any(|n| n.trim().is_empty()) {
        return Err(CliError::Usage("the policy list is empty".into()));
    }
    let default_source = source(args.tdelta.as_deref().or(setup.run.tdelta.as_deref()).unwrap_or("greedy"))?;
    let curves = names.iter().map(|n| curve(n.trim(), &default_source)).collect::<Result<Vec<_>>>()?;
    let prices = args.c_grid.clone().or(setup.run.c_grid.clone()).unwrap_or_else(|| DEFAULT_GRID.to_vec());
    let runs = args.runs.or(setup.run.runs).unwrap_or(DEFAULT_RUNS);
    let model = setup.model(prices.first().copied().unwrap_or(1.0))?;

    let mut config = SweepConfig::new(curves, prices.clone(), runs, setup.seed);
    config.samples = setup.samples;
    config.u_max = setup.u_max;
    config.options = setup.options();
    config.schedule = Schedule { recorded: runs, ..Schedule::default() };
    let mut points = run_sweep(&model, &config)?;

    if args.lower_bound || setup.run.lower_bound.unwrap_or(false) {
        points.extend(bound_rows(&model, &prices, &setup)?);
    }
    match &args.out {
        Some(path) => {
            write_points(create(path)?, &points)?;
            let script = path.with_extension("gp");
            let mut out = create(&script)?;
            write!(out, "{}", gnuplot(path)).map_err(sleeptrack::Error::from)?;
            out.flush().map_err(sleeptrack::Error::from)?;
            log::info!("wrote {} rows to {} and a plot script to {}", points.len(), path.display(), script.display());
        }
        None => write_points(std::io::stdout().lock(), &points)?,
    }
    Ok(())
}

fn bound_rows(model: &NetworkModel, prices: &[f64], setup: &Setup) -> Result<Vec<TradeoffPoint>> {
    let lifetime = expected_lifetime_mc(model, LIFETIME_RUNS, setup.seed)?;
    let u_max = setup.u_max.unwrap_or_else(|| default_u_max(&lifetime));
    let search = LambdaSearch { seed: setup.seed, ..LambdaSearch::default() };
    let bound = lb_envelope(model, prices, u_max, &search)?;
    Ok(bound
        .iter()
        .map(|b| TradeoffPoint {
            network: model.name().to_string(),
            policy: "lower_bound".into(),
            tdelta_source: "none".into(),
            c: b.price,
            tracking_per_time: b.tracking / lifetime.mean,
            tracking_se: 0.0,
            energy_per_time: b.energy / lifetime.mean,
            energy_se: 0.0,
            runs: 0,
            seed: setup.seed,
            duration: (lifetime.mean, 0.0),
            degenerate_runs: 0,
        })
        .collect())
}

fn gnuplot(csv: &Path) -> String {
    let name = csv.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    format!(
        r#"# Tradeoff curves: tracking cost against energy cost per unit time.
set datafile separator ","
set xlabel "energy cost per unit time"
set ylabel "tracking cost per unit time"
set logscale x
data = "{name}"
curves = system("tail -n +2 " . data . " | cut -d, -f2,3 | sort -u")
plot for [k in curves] data skip 1 using (strcol(2).",".strcol(3) eq k ? $7 : NaN):5 with linespoints title k
"#
    )
}

pub fn replay(args: ReplayArgs) -> Result<()> {
    let setup = Setup::from_args(&args.net)?;
    let model = setup.model(args.c)?;
    let kind = PolicyKind::parse(&args.policy)?;
    let table: Option<TDeltaTable> = if kind.uses_table() {
        Some(match source(&args.tdelta)? {
            TableSource::Asleep => build_table(&model, Baseline::Asleep, setup.samples, setup.seed)?,
            TableSource::Greedy => build_table(&model, Baseline::Greedy, setup.samples, setup.seed)?,
            TableSource::File(t) => t,
            TableSource::Learned | TableSource::None => {
                return Err(CliError::Usage("replay needs asleep, greedy or a table file; save a learned table first".into()))
            }
        })
    } else {
        None
    };
    let u_max = setup.u_max(&model)?;
    let mut controller = Controller::build(kind, &model, table, u_max)?;
    let options = EpisodeOptions { trace: true, ..setup.options() };
    let result = run_episode(&model, &mut controller, &options, &mut episode_rng(setup.seed, 0, args.run))?;
    log::info!(
        "duration {} tracking {:.6} energy {:.6} awake steps {}",
        result.duration,
        result.tracking,
        result.energy,
        result.awake_steps
    );
    let trace = result.trace.unwrap_or_default();
    match &args.out {
        Some(path) => write_trace(create(path)?, &trace)?,
        None => write_trace(std::io::stdout().lock(), &trace)?,
    }
    Ok(())
}
