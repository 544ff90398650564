use std::fmt::Write as _;
use std::fs;
use std::net::{SocketAddr, TcpListener, ToSocketAddrs};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use splitwire::cost::{self, parse_bandwidth, Environment, ProfileTable};
use splitwire::exec::{calibrate_activations, ActivationParams, SubnetEngine};
use splitwire::graph::{bundled, load_network, NetworkGraph};
use splitwire::harness::sim::{simulate, SimOutcome, Timing};
use splitwire::harness::socket;
use splitwire::partition::{self, candidates, find_candidate, CandidateRuleSet, PartitionPoint};
use splitwire::quant::{quantize_weights, CalibrationPolicy};
use splitwire::report::{self, Format};
use splitwire::synth::{self, Stream};
use splitwire::tuner;
use splitwire::weights::{save_quantized, Weights};

use crate::{Calibration, Cli, Command, Global, Link, Mode};

pub fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Candidates { allow_brother_branches, allow_shortcut_spans } => {
            let net = load_net(g)?;
            let rules = CandidateRuleSet {
                exclude_brother_branch: !allow_brother_branches,
                exclude_shortcut_span: !allow_shortcut_spans,
                ..CandidateRuleSet::default()
            };
            let points = candidates(&net, &rules);
            emit(g, &report::render_candidates(&net, &points, g.format.into()))
        }
        Command::Quantize { calibration } => quantize(g, *calibration),
        Command::Profile { trials, device } => {
            let net = load_net(g)?;
            let seed = seed(g);
            let mut table = match &g.weights {
                None => cost::profile(&net, *trials as usize, seed)?,
                Some(_) => {
                    let w = load_weights(g, &net)?;
                    let batch = calibration_batch(&net, seed, cost::PROFILE_CALIBRATION_BATCH);
                    let acts = calibrate_activations(&net, &w, &batch, CalibrationPolicy::MinMax)?;
                    let edge = SubnetEngine::int8(net.clone(), &w, &acts, CalibrationPolicy::MinMax)?;
                    let cloud = SubnetEngine::fp32(net.clone(), &w)?;
                    let x = synth::inputs(net.input_shape(), seed, Stream::Profile, 1).remove(0);
                    cost::profile_engines(&edge, &cloud, &x, *trials as usize)?
                }
            };
            table.device = device.clone();
            emit(g, &table.to_json())
        }
        Command::Tune { profile, link, objective, accuracy, calibration } => {
            let net = load_net(g)?;
            let table = ProfileTable::load(profile)?;
            let env = environment(link)?;
            let mut result =
                tuner::auto_tune(&net, &CandidateRuleSet::default(), &table, &env, *objective)?;
            if let Some(n) = *accuracy {
                if n == 0 {
                    bail!("--accuracy needs at least one input");
                }
                let (w, acts) = prepare(g, &net, calibration)?;
                let inputs = synth::inputs(net.input_shape(), seed(g), Stream::Inputs, n);
                tuner::attach_accuracy(&mut result, &net, &w, &acts, &inputs)?;
            }
            if result.infeasible {
                eprintln!(
                    "warning: no point meets the {} budget; best falls back to the fastest point",
                    result.objective
                );
            }
            emit(g, &report::render_result(&result, g.format.into()))
        }
        Command::Infer { split, mode, link, profile, listen, connect, count, calibration } => {
            let net = load_net(g)?;
            let point = find_candidate(&net, &CandidateRuleSet::default(), split)?;
            let profile = profile.as_deref().map(ProfileTable::load).transpose()?;
            let opts = InferOpts { point, mode: *mode, link, profile, listen, connect, count: *count };
            infer(g, &net, calibration, opts)
        }
        Command::Report { result } => {
            let text = fs::read_to_string(result).with_context(|| format!("reading {}", result.display()))?;
            let r = report::parse_result(&text)
                .map_err(|e| anyhow!("{} is not a tuning result: {e}", result.display()))?;
            emit(g, &report::render_result(&r, g.format.into()))
        }
    }
}

fn seed(g: &Global) -> u64 {
    g.seed.unwrap_or_else(synth::seed_from_env)
}

/// A file path if it exists, otherwise a bundled name (`alexnet` or
/// `alexnet.json`).
fn load_net(g: &Global) -> Result<NetworkGraph> {
    let arg = g.net.as_deref().ok_or_else(|| anyhow!("--net is required"))?;
    let path = Path::new(arg);
    if path.exists() {
        return Ok(load_network(path)?);
    }
    let name = arg.strip_suffix(".json").unwrap_or(arg);
    if let Some(net) = bundled::load(name) {
        return Ok(net);
    }
    Ok(load_network(path)?)
}

fn load_weights(g: &Global, net: &NetworkGraph) -> Result<Weights> {
    Ok(match &g.weights {
        Some(p) => Weights::load(p, net)?,
        None => Weights::synthetic(net, seed(g)),
    })
}

fn calibration_batch(net: &NetworkGraph, seed: u64, n: usize) -> Vec<splitwire::Tensor> {
    synth::inputs(net.input_shape(), seed, Stream::Calibration, n)
}

fn prepare(g: &Global, net: &NetworkGraph, c: &Calibration) -> Result<(Weights, ActivationParams)> {
    let w = load_weights(g, net)?;
    let batch = calibration_batch(net, seed(g), c.batch as usize);
    let acts = calibrate_activations(net, &w, &batch, c.calibration)?;
    Ok((w, acts))
}

fn environment(link: &Link) -> Result<Environment> {
    Ok(Environment::new(parse_bandwidth(&link.bandwidth)?, link.rtt)?)
}

fn emit(g: &Global, text: &str) -> Result<()> {
    let mut text = text.to_string();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    match &g.out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn quantize(g: &Global, policy: CalibrationPolicy) -> Result<()> {
    let out = g.out.as_ref().ok_or_else(|| anyhow!("quantize writes a binary file; pass --out"))?;
    let net = load_net(g)?;
    let w = load_weights(g, &net)?;
    let layers = quantize_weights(&net, &w, policy)?;
    save_quantized(&layers, out)?;
    let mut summary = String::new();
    let mut total = 0usize;
    for (name, q) in &layers {
        let n = q.weight.codes.len() + q.bias.as_ref().map_or(0, |b| b.codes.len());
        total += n;
        writeln!(summary, "{name}: {n} params, t_min {} t_max {}", q.params.t_min, q.params.t_max)?;
    }
    writeln!(summary, "{} layers, {total} INT8 params, written to {}", layers.len(), out.display())?;
    eprint!("{summary}");
    Ok(())
}

struct InferOpts<'a> {
    point: PartitionPoint,
    mode: Mode,
    link: &'a Link,
    profile: Option<ProfileTable>,
    listen: &'a Option<String>,
    connect: &'a Option<String>,
    count: usize,
}

fn resolve_addr(s: &str) -> Result<SocketAddr> {
    s.to_socket_addrs()
        .with_context(|| format!("resolving {s}"))?
        .next()
        .ok_or_else(|| anyhow!("{s} resolves to no address"))
}

fn infer(g: &Global, net: &NetworkGraph, c: &Calibration, o: InferOpts<'_>) -> Result<()> {
    if o.count == 0 {
        bail!("--count must be at least 1");
    }
    if o.mode == Mode::Sim && (o.listen.is_some() || o.connect.is_some()) {
        bail!("--listen and --connect need --mode socket");
    }
    let (w, acts) = prepare(g, net, c)?;
    let sp = partition::split(net, &o.point)?;
    let edge = SubnetEngine::int8(sp.edge, &w, &acts, c.calibration)?;
    let cloud = SubnetEngine::fp32(sp.cloud, &w)?;
    let inputs = synth::inputs(net.input_shape(), seed(g), Stream::Inputs, o.count);
    let env = environment(o.link)?;
    let timing = match &o.profile {
        Some(p) => Timing::Profile(p),
        None => Timing::Measured,
    };

    let mut rows = Vec::new();
    match o.mode {
        Mode::Sim => {
            for x in &inputs {
                rows.push(Row::from_sim(simulate(&edge, &cloud, x, &env, timing)?));
            }
        }
        Mode::Socket => {
            if let Some(addr) = o.listen {
                let listener = TcpListener::bind(resolve_addr(addr)?)?;
                eprintln!("serving {} on {}", o.point.layer, listener.local_addr()?);
                let served = socket::serve(&listener, &cloud, Some(o.count), |e| eprintln!("request failed: {e}"))?;
                eprintln!("served {served} requests");
                return Ok(());
            }
            let run_edge = |addr: SocketAddr| -> Result<Vec<Row>> {
                let mut rows = Vec::new();
                for x in &inputs {
                    let (out, receipt) = socket::infer(&edge, x, addr)?;
                    rows.push(Row::from_socket(out, receipt.bytes, receipt.send_ms));
                }
                Ok(rows)
            };
            rows = match o.connect {
                Some(addr) => run_edge(resolve_addr(addr)?)?,
                None => {
                    // both halves in this process over loopback
                    let listener = TcpListener::bind("127.0.0.1:0")?;
                    let addr = listener.local_addr()?;
                    std::thread::scope(|s| {
                        let server = s.spawn(|| socket::serve(&listener, &cloud, Some(o.count), |_| {}));
                        let rows = run_edge(addr);
                        if rows.is_err() {
                            // unblock the server so the scope can end
                            drop(std::net::TcpStream::connect(addr));
                        }
                        let served = server.join().map_err(|_| anyhow!("server thread panicked"));
                        let rows = rows?;
                        served??;
                        Ok::<_, anyhow::Error>(rows)
                    })?
                }
            };
        }
    }
    emit(g, &render_rows(&o.point, &rows, g.format.into())?)
}

struct Row {
    class: usize,
    message_bytes: usize,
    edge_ms: Option<f64>,
    upload_ms: f64,
    cloud_ms: Option<f64>,
    total_ms: Option<f64>,
}

impl Row {
    fn from_sim(s: SimOutcome) -> Row {
        Row {
            class: s.output.map_or(0, |t| t.argmax()),
            message_bytes: s.message_bytes,
            edge_ms: Some(s.edge_ms),
            upload_ms: s.upload_ms,
            cloud_ms: Some(s.cloud_ms),
            total_ms: Some(s.total_ms),
        }
    }

    fn from_socket(out: splitwire::Tensor, bytes: usize, send_ms: f64) -> Row {
        Row {
            class: out.argmax(),
            message_bytes: bytes,
            edge_ms: None,
            upload_ms: send_ms,
            cloud_ms: None,
            total_ms: None,
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.3}"))
}

fn render_rows(point: &PartitionPoint, rows: &[Row], format: Format) -> Result<String> {
    Ok(match format {
        Format::Json => serde_json::to_string_pretty(&serde_json::json!({
            "point": point.layer,
            "transmit": point.transmit_summary(),
            "runs": rows.iter().map(|r| serde_json::json!({
                "class": r.class,
                "message_bytes": r.message_bytes,
                "edge_ms": r.edge_ms,
                "upload_ms": r.upload_ms,
                "cloud_ms": r.cloud_ms,
                "total_ms": r.total_ms,
            })).collect::<Vec<_>>(),
        }))?,
        Format::Csv => {
            let mut s = String::from("input,class,message_bytes,edge_ms,upload_ms,cloud_ms,total_ms\n");
            for (i, r) in rows.iter().enumerate() {
                writeln!(
                    s,
                    "{i},{},{},{},{:.3},{},{}",
                    r.class,
                    r.message_bytes,
                    opt(r.edge_ms),
                    r.upload_ms,
                    opt(r.cloud_ms),
                    opt(r.total_ms)
                )?;
            }
            s
        }
        Format::Text => {
            let mut s = format!("point {} ({})\n", point.layer, point.transmit_summary());
            for (i, r) in rows.iter().enumerate() {
                write!(s, "input {i}: class {} | {} bytes | upload {:.3} ms", r.class, r.message_bytes, r.upload_ms)?;
                if let (Some(e), Some(c), Some(t)) = (r.edge_ms, r.cloud_ms, r.total_ms) {
                    write!(s, " | edge {e:.3} ms | cloud {c:.3} ms | total {t:.3} ms")?;
                }
                s.push('\n');
            }
            s
        }
    })
}
