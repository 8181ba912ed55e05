mod boxplot;
mod manifest;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::{IpAddr, Ipv4Addr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use scip_core::capture::{read_capture, write_capture};
use scip_core::descriptor::{extract_descriptor_with, DeviationRange};
use scip_core::error::ErrorClass;
use scip_core::features::cov_sequence_from_iats;
use scip_core::metrics::{metrics_vs_packets, write_metrics_csv, EvalSample};
use scip_core::netsim::{
    latency_report, read_trace_csv, run_closed_loop, run_sim, write_trace_csv, Integration,
    LatencyReport, Scenario, SimOutput,
};
use scip_core::proxy::{Cnc, CncPolicy, CncStubServer, StaticCnc, TcpCncClient};
use scip_core::qosmap::{ApplicationDetector, PortTableDetector};
use scip_core::rnn::{train, TrainingSet};
use scip_core::streamgen::{build_dataset, read_dataset_file, write_dataset_file, DatasetRecord, DatasetSpec, Split, StreamClass};
use scip_core::{
    Error, PacketRecord, Protocol, Proxy, ProxyConfig, QosDatabase, Result, RnnConfig,
    StreamState, TrainedModel,
};

use boxplot::box_stats;
use manifest::{fresh_seed, ManifestBuilder};

#[derive(Parser)]
#[command(name = "scip", version, about = "Periodic stream detection and TSN integration proxy")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled IAT dataset as JSONL.
    Gen {
        #[arg(long)]
        out: PathBuf,
        /// Master seed; a fresh one is drawn and printed when omitted.
        #[arg(long)]
        seed: Option<u64>,
        /// Samples per class: pure, pattern m=2, m=3, m=4, near-periodic, aperiodic.
        #[arg(long, value_delimiter = ',')]
        counts: Option<Vec<usize>>,
        /// Full dataset spec as JSON; `--counts` overrides its counts.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Train the periodicity classifier on the train split of a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Classifier config as JSON; missing fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Metrics against the number of observed packets.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.3,0.5,0.8,0.9,0.99")]
        thresholds: Vec<f64>,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        /// Full table: x,threshold,accuracy,precision,recall,f1.
        #[arg(long)]
        out: PathBuf,
        /// Per-threshold summary at `--at` packets.
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        at: usize,
    },
    /// Traffic descriptor of one trace, or extraction accuracy over a dataset.
    Describe {
        /// CSV with a header and columns t_s[,size].
        #[arg(long, conflicts_with = "dataset", required_unless_present = "dataset")]
        arrivals: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Descriptor JSON for `--arrivals`; m_g,m_star,count CSV for `--dataset`.
        #[arg(long)]
        out: PathBuf,
        /// Deviation profile CSV (m,w,delta, plus stream and m_g for datasets).
        #[arg(long)]
        profile: Option<PathBuf>,
        /// Frame size in bytes for traces that carry none.
        #[arg(long, default_value_t = 100)]
        frame_size: u32,
        /// Window start times the deficit is averaged over.
        #[arg(long, value_enum, default_value_t = RangeArg::Trimmed)]
        range: RangeArg,
    },
    /// Replay a capture through the proxy.
    Run {
        /// Packet JSONL, or PCAP when the extension is .pcap.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        qos_db: Option<PathBuf>,
        /// Port table for application detection.
        #[arg(long)]
        detector: Option<PathBuf>,
        /// CNC address; an in-process CNC that admits everything is used when omitted.
        #[arg(long)]
        cnc: Option<String>,
        /// Proxy config JSON (retry policy, exclusion list, ...); flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        decide_after: Option<usize>,
        /// Announcement log (JSONL).
        #[arg(long)]
        log: PathBuf,
        /// Final stream table (JSONL).
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Simulate the dumbbell scenario.
    Sim {
        /// Scenario JSON; the built-in VoIP scenario when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// never, scip, or at:<seconds>.
        #[arg(long, default_value = "never")]
        mode: String,
        /// Required for `--mode scip`.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        qos_db: Option<PathBuf>,
        #[arg(long)]
        detector: Option<PathBuf>,
        #[arg(long)]
        cnc: Option<String>,
        #[arg(long, default_value_t = 0.9)]
        threshold: f64,
        /// Trace CSV: packet_id,stream,tx_ns,rx_ns,delay_ns,dropped.
        #[arg(long)]
        out: PathBuf,
        /// Per-packet delay and jitter of the monitored stream.
        #[arg(long)]
        latency: Option<PathBuf>,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Plot data from earlier outputs.
    Report {
        /// Long-format profile from `describe --dataset --profile`.
        #[arg(long, conflicts_with = "trace", required_unless_present = "trace")]
        profile: Option<PathBuf>,
        /// Trace CSV from `sim`.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value = "voip")]
        stream: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn dataset streams into a packet capture, one 5-tuple per stream.
    Capture {
        #[arg(long)]
        dataset: PathBuf,
        /// Keep only these labels (pure_periodic, pattern, near_periodic, aperiodic).
        #[arg(long, value_delimiter = ',')]
        labels: Vec<String>,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        /// At most this many streams per label.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long, default_value_t = 100)]
        frame_size: u16,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the CNC wire protocol until interrupted.
    CncStub {
        #[arg(long, default_value = "127.0.0.1:7400")]
        bind: String,
        #[arg(long, value_enum, default_value_t = PolicyArg::Admit)]
        policy: PolicyArg,
        #[arg(long, default_value_t = 10)]
        vlan: u16,
        #[arg(long, default_value_t = 5)]
        pcp: u8,
        #[arg(long, default_value = "denied by policy")]
        reason: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
    All,
}

impl SplitArg {
    fn keeps(self, r: &DatasetRecord) -> bool {
        match self {
            SplitArg::Train => r.split == Split::Train,
            SplitArg::Test => r.split == Split::Test,
            SplitArg::All => true,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RangeArg {
    Trimmed,
    Observed,
}

impl From<RangeArg> for DeviationRange {
    fn from(r: RangeArg) -> Self {
        match r {
            RangeArg::Trimmed => DeviationRange::Trimmed,
            RangeArg::Observed => DeviationRange::Observed,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Admit,
    Deny,
    Garble,
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numeric => 4,
        ErrorClass::Io => 5,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.class()))
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Gen {
            out,
            seed,
            counts,
            spec,
        } => gen(&out, seed, counts, spec.as_deref()),
        Command::Train {
            dataset,
            config,
            out,
            seed,
            epochs,
        } => train_cmd(&dataset, config.as_deref(), &out, seed, epochs),
        Command::Eval {
            model,
            dataset,
            thresholds,
            split,
            out,
            table,
            at,
        } => eval(&model, &dataset, &thresholds, split, &out, table.as_deref(), at),
        Command::Describe {
            arrivals,
            dataset,
            out,
            profile,
            frame_size,
            range,
        } => match (arrivals, dataset) {
            (Some(a), None) => describe_trace(&a, &out, profile.as_deref(), frame_size, range.into()),
            (None, Some(d)) => describe_dataset(&d, &out, profile.as_deref(), frame_size, range.into()),
            _ => Err(Error::Config("give exactly one of --arrivals and --dataset".into())),
        },
        Command::Run {
            input,
            model,
            qos_db,
            detector,
            cnc,
            config,
            threshold,
            decide_after,
            log,
            table,
        } => {
            let mut pc = match &config {
                Some(p) => read_json::<ProxyConfig>(p)?,
                None => ProxyConfig::default(),
            };
            if let Some(t) = threshold {
                pc.threshold = t;
            }
            if let Some(d) = decide_after {
                pc.decide_after = d;
            }
            pc.validate()?;
            run(&input, &model, qos_db.as_deref(), detector.as_deref(), cnc.as_deref(), pc, config.as_deref(), &log, table.as_deref())
        }
        Command::Sim {
            scenario,
            mode,
            model,
            qos_db,
            detector,
            cnc,
            threshold,
            out,
            latency,
            log,
        } => sim(SimArgs {
            scenario,
            mode,
            model,
            qos_db,
            detector,
            cnc,
            threshold,
            out,
            latency,
            log,
        }),
        Command::Report {
            profile,
            trace,
            stream,
            out,
        } => match (profile, trace) {
            (Some(p), None) => report_profile(&p, &out),
            (None, Some(t)) => report_trace(&t, &stream, &out),
            _ => Err(Error::Config("give exactly one of --profile and --trace".into())),
        },
        Command::Capture {
            dataset,
            labels,
            split,
            limit,
            frame_size,
            out,
        } => capture(&dataset, &labels, split, limit, frame_size, &out),
        Command::CncStub {
            bind,
            policy,
            vlan,
            pcp,
            reason,
        } => {
            let policy = match policy {
                PolicyArg::Admit => CncPolicy::admit(vlan, pcp),
                PolicyArg::Deny => CncPolicy::Deny { reason },
                PolicyArg::Garble => CncPolicy::Garble,
            };
            let server = CncStubServer::spawn(bind.as_str(), policy)?;
            println!("listening on {}", server.addr());
            std::io::stdout().flush()?;
            server.wait();
            Ok(())
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(BufReader::new(File::open(path)?))
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn resolve_seed(name: &str, given: Option<u64>) -> u64 {
    given.unwrap_or_else(|| {
        let s = fresh_seed();
        println!("{name} seed: {s}");
        s
    })
}

fn gen(out: &Path, seed: Option<u64>, counts: Option<Vec<usize>>, spec_path: Option<&Path>) -> Result<()> {
    let mut m = ManifestBuilder::new("gen");
    let mut spec = match spec_path {
        Some(p) => {
            m.input(p)?;
            read_json::<DatasetSpec>(p)?
        }
        None => DatasetSpec::default(),
    };
    if let Some(c) = counts {
        spec.counts = c
            .try_into()
            .map_err(|_| Error::Config("--counts needs six values".into()))?;
    }
    let seed = resolve_seed("dataset", seed);
    let records = build_dataset(&spec, seed)?;
    write_dataset_file(&records, out)?;
    println!("wrote {} streams to {}", records.len(), out.display());
    m.config(&spec)?.seed("dataset", seed).output(out).write()?;
    Ok(())
}

fn train_cmd(dataset: &Path, config: Option<&Path>, out: &Path, seed: Option<u64>, epochs: Option<usize>) -> Result<()> {
    let mut m = ManifestBuilder::new("train");
    m.input(dataset)?;
    // a config file that names a seed counts as giving one
    let mut cfg = match config {
        Some(p) => {
            m.input(p)?;
            let value: serde_json::Value = read_json(p)?;
            let has_seed = value.get("seed").is_some();
            let cfg: RnnConfig = serde_json::from_value(value)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            if has_seed && seed.is_none() {
                Some(cfg)
            } else {
                let mut cfg = cfg;
                cfg.seed = resolve_seed("training", seed);
                Some(cfg)
            }
        }
        None => None,
    }
    .unwrap_or_else(|| RnnConfig {
        seed: resolve_seed("training", seed),
        ..RnnConfig::default()
    });
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    cfg.validate()?;
    let records = read_dataset_file(dataset)?;
    let set = TrainingSet::from_records(records.iter().filter(|r| r.split == Split::Train))?;
    if set.is_empty() {
        return Err(Error::InsufficientData("dataset has no train split".into()));
    }
    let model = train(&cfg, &set)?;
    model.save(out)?;
    if let Some(meta) = &model.training {
        for e in &meta.history {
            println!(
                "epoch {:3}  train {:.5}  validation {}",
                e.epoch,
                e.train_loss,
                e.validation_loss.map_or("-".into(), |v| format!("{v:.5}"))
            );
        }
        println!("kept epoch {}", meta.selected_epoch);
    }
    m.config(&cfg)?.seed("training", cfg.seed).output(out).write()?;
    Ok(())
}

fn eval_samples(records: &[DatasetRecord], split: SplitArg) -> Result<Vec<EvalSample>> {
    records
        .iter()
        .filter(|r| split.keeps(r))
        .map(|r| {
            Ok(EvalSample {
                cov: cov_sequence_from_iats(&r.iats)?.0,
                periodic: r.is_periodic(),
            })
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn eval(model: &Path, dataset: &Path, thresholds: &[f64], split: SplitArg, out: &Path, table: Option<&Path>, at: usize) -> Result<()> {
    let mut m = ManifestBuilder::new("eval");
    m.input(model)?.input(dataset)?;
    if thresholds.iter().any(|t| !(0.0..1.0).contains(t)) {
        return Err(Error::Config("thresholds must lie in [0, 1)".into()));
    }
    let net = TrainedModel::load(model)?;
    let samples = eval_samples(&read_dataset_file(dataset)?, split)?;
    let rows = metrics_vs_packets(&net, &samples, thresholds)?;
    write_metrics_csv(&rows, BufWriter::new(File::create(out)?))?;
    m.output(out);

    let at_rows: Vec<_> = rows.iter().filter(|r| r.x == at).cloned().collect();
    if at_rows.is_empty() {
        return Err(Error::InsufficientData(format!("streams are shorter than {at} packets")));
    }
    let pct = |v: Option<f64>| v.map_or("undefined".into(), |v| format!("{:.2}%", 100.0 * v));
    println!("after {at} packets:");
    println!("threshold  accuracy  recall  precision  f1");
    for r in &at_rows {
        println!(
            "{:<9}  {}  {}  {}  {}",
            r.threshold,
            pct(r.accuracy),
            pct(r.recall),
            pct(r.precision),
            pct(r.f1)
        );
    }
    if let Some(t) = table {
        write_metrics_csv(&at_rows, BufWriter::new(File::create(t)?))?;
        m.output(t);
    }
    m.config(&serde_json::json!({ "thresholds": thresholds, "at": at }))?.write()?;
    Ok(())
}

fn read_arrivals_csv(path: &Path) -> Result<(Vec<f64>, Vec<u32>)> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let (mut times, mut sizes) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = || Error::Data(format!("{} row {}", path.display(), i + 1));
        times.push(rec.get(0).ok_or_else(bad)?.trim().parse::<f64>().map_err(|_| bad())?);
        if let Some(s) = rec.get(1).filter(|s| !s.trim().is_empty()) {
            sizes.push(s.trim().parse::<u32>().map_err(|_| bad())?);
        }
    }
    Ok((times, sizes))
}

fn describe_trace(arrivals: &Path, out: &Path, profile: Option<&Path>, frame_size: u32, range: DeviationRange) -> Result<()> {
    let mut m = ManifestBuilder::new("describe");
    m.input(arrivals)?;
    let (times, mut sizes) = read_arrivals_csv(arrivals)?;
    if sizes.is_empty() {
        sizes = vec![frame_size; times.len()];
    }
    let (desc, prof) = extract_descriptor_with(&times, &sizes, range)?;
    write_json(out, &serde_json::json!({ "descriptor": desc, "profile": prof }))?;
    m.output(out);
    println!(
        "w = {:.6e} s, m = {}, f_max = {} B",
        desc.interval, desc.max_frames, desc.max_frame_size
    );
    if let Some(p) = profile {
        prof.write_csv(BufWriter::new(File::create(p)?))?;
        m.output(p);
    }
    m.write()?;
    Ok(())
}

fn describe_dataset(dataset: &Path, out: &Path, profile: Option<&Path>, frame_size: u32, range: DeviationRange) -> Result<()> {
    let mut m = ManifestBuilder::new("describe");
    m.input(dataset)?;
    let records = read_dataset_file(dataset)?;
    let mut confusion: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut prof_out = match profile {
        Some(p) => {
            let mut w = csv::Writer::from_path(p)?;
            w.write_record(["stream", "m_g", "m", "w", "delta"])?;
            Some(w)
        }
        None => None,
    };
    let periodic = records
        .iter()
        .filter(|r| matches!(r.label, StreamClass::PurePeriodic | StreamClass::PeriodicPattern));
    for (i, r) in periodic.enumerate() {
        let (desc, prof) = extract_descriptor_with(&r.arrivals(), &vec![frame_size; r.iats.len() + 1], range)?;
        *confusion.entry((r.m, desc.max_frames)).or_default() += 1;
        if let Some(w) = prof_out.as_mut() {
            for e in &prof.entries {
                w.write_record([
                    i.to_string(),
                    r.m.to_string(),
                    e.m.to_string(),
                    format!("{:e}", e.window),
                    e.deviation.map(|d| d.to_string()).unwrap_or_default(),
                ])?;
            }
        }
    }
    if let Some(mut w) = prof_out {
        w.flush()?;
        m.output(profile.expect("set with the writer"));
    }
    let mut w = csv::Writer::from_path(out)?;
    w.write_record(["m_g", "m_star", "count"])?;
    for ((mg, ms), n) in &confusion {
        w.write_record([mg.to_string(), ms.to_string(), n.to_string()])?;
    }
    w.flush()?;
    m.output(out);
    let mut totals: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for ((mg, ms), n) in &confusion {
        let t = totals.entry(*mg).or_default();
        t.0 += n;
        if mg == ms {
            t.1 += n;
        }
    }
    for (mg, (n, ok)) in totals {
        println!("m_g = {mg}: {ok}/{n} correct ({:.2}%)", 100.0 * ok as f64 / n as f64);
    }
    m.write()?;
    Ok(())
}

fn load_detector(path: Option<&Path>) -> Result<PortTableDetector> {
    match path {
        Some(p) => PortTableDetector::load(p),
        None => PortTableDetector::new(Vec::new()),
    }
}

fn load_db(path: Option<&Path>) -> Result<QosDatabase> {
    match path {
        Some(p) => QosDatabase::load(p),
        None => Ok(QosDatabase::default()),
    }
}

fn make_cnc(addr: Option<&str>) -> Result<Box<dyn Cnc>> {
    Ok(match addr {
        Some(a) => Box::new(TcpCncClient::new(a, Duration::from_secs(2))?),
        None => Box::new(StaticCnc::new(CncPolicy::admit(10, 5))),
    })
}

#[allow(clippy::too_many_arguments)]
fn run(
    input: &Path,
    model: &Path,
    qos_db: Option<&Path>,
    detector: Option<&Path>,
    cnc: Option<&str>,
    config: ProxyConfig,
    config_path: Option<&Path>,
    log: &Path,
    table: Option<&Path>,
) -> Result<()> {
    let mut m = ManifestBuilder::new("run");
    m.input(input)?.input(model)?;
    for p in [qos_db, detector, config_path].into_iter().flatten() {
        m.input(p)?;
    }
    let net = TrainedModel::load(model)?;
    let db = load_db(qos_db)?;
    let det = load_detector(detector)?;
    let packets = read_capture(input)?;
    let mut proxy = Proxy::new(
        config.clone(),
        &net,
        &det as &dyn ApplicationDetector,
        &db,
        make_cnc(cnc)?,
        Box::new(scip_core::proxy::RecordingSwitch::new()),
    )?;
    for p in &packets {
        proxy.ingest(p);
    }

    let mut w = BufWriter::new(File::create(log)?);
    for e in proxy.announcement_log() {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    m.output(log);
    if let Some(t) = table {
        let mut w = BufWriter::new(File::create(t)?);
        for rec in proxy.table().values() {
            serde_json::to_writer(&mut w, rec)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        m.output(t);
    }

    let mut states: BTreeMap<&str, usize> = BTreeMap::new();
    for rec in proxy.table().values() {
        let name = match rec.state {
            StreamState::Collecting => "collecting",
            StreamState::ClassifiedAperiodic { .. } => "classified_aperiodic",
            StreamState::Announced { .. } => "announced",
            StreamState::Rejected { .. } => "rejected",
        };
        *states.entry(name).or_default() += 1;
    }
    let summary = serde_json::json!({
        "packets": packets.len(),
        "streams": proxy.table().len(),
        "states": states,
        "announcements": proxy.announcement_log().len(),
        "counters": proxy.counters(),
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    m.config(&config)?.write()?;
    Ok(())
}

struct SimArgs {
    scenario: Option<PathBuf>,
    mode: String,
    model: Option<PathBuf>,
    qos_db: Option<PathBuf>,
    detector: Option<PathBuf>,
    cnc: Option<String>,
    threshold: f64,
    out: PathBuf,
    latency: Option<PathBuf>,
    log: Option<PathBuf>,
}

fn parse_mode(mode: &str) -> Result<Integration> {
    match mode {
        "never" => Ok(Integration::Never),
        "scip" => Ok(Integration::ViaScip),
        _ => mode
            .strip_prefix("at:")
            .and_then(|t| t.parse::<f64>().ok())
            .map(|t_s| Integration::AtTime { t_s })
            .ok_or_else(|| Error::Config(format!("mode {mode:?}: expected never, scip or at:<seconds>"))),
    }
}

fn print_latency(out: &SimOutput, r: &LatencyReport) {
    let ms = |ns: u64| ns as f64 / 1e6;
    println!(
        "{}: sent {}, received {}, lost {}",
        r.stream, r.sent, r.received, r.lost
    );
    match out.integrated_at_ns {
        Some(t) => {
            let pre = r.rows.iter().filter(|x| x.tx_ns < t);
            let pre_max = pre.clone().map(|x| x.delay_ns).max().unwrap_or(0);
            let pre_jit = pre.map(|x| x.jitter_ns).max().unwrap_or(0);
            println!("integrated at {:.3} ms", ms(t));
            println!("before: max delay {:.3} ms, max jitter {:.3} ms", ms(pre_max), ms(pre_jit));
            let post = r.rows.iter().filter(|x| x.tx_ns > t).map(|x| x.delay_ns).max();
            println!("after: max delay {:.3} ms", ms(post.unwrap_or(0)));
        }
        None => println!(
            "max delay {:.3} ms, max jitter {:.3} ms",
            ms(r.max_delay_ns),
            ms(r.max_jitter_ns)
        ),
    }
}

fn sim(a: SimArgs) -> Result<()> {
    let mut m = ManifestBuilder::new("sim");
    let mut sc = match &a.scenario {
        Some(p) => {
            m.input(p)?;
            Scenario::load(p)?
        }
        None => Scenario::default(),
    };
    sc.integration = parse_mode(&a.mode)?;
    sc.validate()?;
    let out = match sc.integration {
        Integration::ViaScip => {
            let model = a
                .model
                .as_deref()
                .ok_or_else(|| Error::Config("--mode scip needs --model".into()))?;
            m.input(model)?;
            let net = TrainedModel::load(model)?;
            let db = load_db(a.qos_db.as_deref())?;
            let det = load_detector(a.detector.as_deref())?;
            let pc = ProxyConfig {
                threshold: a.threshold,
                ..ProxyConfig::default()
            };
            pc.validate()?;
            run_closed_loop(&sc, pc, &net, &det, &db, make_cnc(a.cnc.as_deref())?)?
        }
        _ => run_sim(&sc)?,
    };
    write_trace_csv(&out.trace, BufWriter::new(File::create(&a.out)?))?;
    m.output(&a.out);
    let report = latency_report(&out.trace, &sc.monitored)?;
    print_latency(&out, &report);
    if let Some(p) = &a.latency {
        report.write_csv(BufWriter::new(File::create(p)?))?;
        m.output(p);
    }
    if let Some(p) = &a.log {
        let mut w = BufWriter::new(File::create(p)?);
        for e in &out.announcements {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        m.output(p);
    }
    m.config(&sc)?.write()?;
    Ok(())
}

fn report_profile(profile: &Path, out: &Path) -> Result<()> {
    let mut m = ManifestBuilder::new("report");
    m.input(profile)?;
    let mut rdr = csv::Reader::from_path(profile)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("{}: no column {name}", profile.display())))
    };
    let (cg, cm, cd) = (col("m_g")?, col("m")?, col("delta")?);
    let mut groups: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = || Error::Data(format!("{} row {}", profile.display(), i + 1));
        let delta = rec.get(cd).ok_or_else(bad)?;
        if delta.is_empty() {
            continue;
        }
        let key = (
            rec.get(cg).ok_or_else(bad)?.parse().map_err(|_| bad())?,
            rec.get(cm).ok_or_else(bad)?.parse().map_err(|_| bad())?,
        );
        groups
            .entry(key)
            .or_default()
            .push(delta.parse().map_err(|_| bad())?);
    }
    let mut w = csv::Writer::from_path(out)?;
    w.write_record(["m_g", "m", "n", "q1", "median", "q3", "whisker_lo", "whisker_hi", "outliers"])?;
    for ((mg, mm), values) in &groups {
        let b = box_stats(values).expect("groups are non-empty");
        w.write_record([
            mg.to_string(),
            mm.to_string(),
            b.n.to_string(),
            b.q1.to_string(),
            b.median.to_string(),
            b.q3.to_string(),
            b.whisker_lo.to_string(),
            b.whisker_hi.to_string(),
            b.outliers.to_string(),
        ])?;
    }
    w.flush()?;
    m.output(out).write()?;
    Ok(())
}

fn report_trace(trace: &Path, stream: &str, out: &Path) -> Result<()> {
    let mut m = ManifestBuilder::new("report");
    m.input(trace)?;
    let events = read_trace_csv(BufReader::new(File::open(trace)?))?;
    let r = latency_report(&events, stream)?;
    r.write_csv(BufWriter::new(File::create(out)?))?;
    println!(
        "{stream}: sent {}, lost {}, max delay {:.3} ms, max jitter {:.3} ms",
        r.sent,
        r.lost,
        r.max_delay_ns as f64 / 1e6,
        r.max_jitter_ns as f64 / 1e6
    );
    m.output(out).write()?;
    Ok(())
}

fn parse_label(s: &str) -> Result<StreamClass> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| Error::Config(format!("unknown label {s:?}")))
}

/// Source address of the i-th replayed stream.
fn stream_addr(i: usize) -> IpAddr {
    let i = i as u32 + 1;
    IpAddr::V4(Ipv4Addr::new(10, (i >> 16) as u8, (i >> 8) as u8, i as u8))
}

fn capture(dataset: &Path, labels: &[String], split: SplitArg, limit: Option<usize>, frame_size: u16, out: &Path) -> Result<()> {
    let mut m = ManifestBuilder::new("capture");
    m.input(dataset)?;
    if frame_size == 0 {
        return Err(Error::Config("frame size must be positive".into()));
    }
    let wanted: Vec<StreamClass> = labels.iter().map(|l| parse_label(l)).collect::<Result<_>>()?;
    let records = read_dataset_file(dataset)?;
    let mut taken: BTreeMap<StreamClass, usize> = BTreeMap::new();
    let mut packets = Vec::new();
    let mut n_streams = 0;
    for r in records.iter().filter(|r| split.keeps(r)) {
        if !wanted.is_empty() && !wanted.contains(&r.label) {
            continue;
        }
        let count = taken.entry(r.label).or_default();
        if limit.is_some_and(|l| *count >= l) {
            continue;
        }
        *count += 1;
        let src = stream_addr(n_streams);
        n_streams += 1;
        for t in r.arrivals() {
            packets.push(PacketRecord {
                t_ns: (t * 1e9).round() as u64,
                src,
                dst: IpAddr::V4(Ipv4Addr::new(10, 255, 0, 1)),
                proto: Protocol::Udp,
                sport: 40000,
                dport: 5000,
                len: frame_size,
            });
        }
    }
    packets.sort_by_key(|p| (p.t_ns, p.src));
    write_capture(&packets, out)?;
    println!("wrote {} packets of {n_streams} streams", packets.len());
    m.config(&serde_json::json!({ "labels": labels, "limit": limit, "frame_size": frame_size }))?
        .output(out)
        .write()?;
    Ok(())
}
