//! The individual commands. Each one parses its keys into a plain struct first, so that
//! configuration errors surface before any output is written.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;

use serde_json::{json, Value};

use super::{CliError, Command, Context, RunConfig};
use crate::analysis::{
    bridge_covariance_test, brownian_bridge_profiles, conditioned_cluster_sampler,
    exact_exit_probability, exit_decay, fit_inverse_correlation_length_replicates,
    fit_support_function, ising_worm_correlation, oz_exponent_fit_replicates, torus_connectivity,
    write_row, ConditionedSource, EstimateWithCI, Level, SplittingConfig, TorusStudy, WormStudy,
    CSV_HEADER,
};
use crate::clustergeo::{
    build_skeleton, decompose, decomposition_json, split_trunk_branches, Cluster, Decomposition,
    EffectiveWalk, SkeletonParams,
};
use crate::duality2d::{check_measure_duality, dual_parameter, self_dual_point};
use crate::fkmodel::{
    cluster_labeling, exact_distribution, write_dump, BondConfiguration, Boundary, DumpHeader,
    FkChain, ModelParams, Sampler,
};
use crate::geometry::{
    boundary_curvature, dual_vector, equi_decay_set, export_csv, polarity_defect, wulff_shape,
    ConvexBody, DirectionalNorm,
};
use crate::lattice::{Bond, BondGraph, LatticeBox, Site};
use crate::potts::{
    column_profile, es_sample, extract_interface, interface_profile, write_profiles_csv,
    InterfaceProfile, PottsBoundary, PottsLattice,
};
use crate::rng::{derive_seed, stream_rng};

type Res<T> = Result<T, CliError>;

fn run_err(e: impl std::fmt::Display) -> CliError {
    CliError::run(e)
}

pub fn validate(command: Command, c: &RunConfig) -> Res<()> {
    match command {
        Command::Sample => SampleArgs::parse(c).map(drop),
        Command::Enumerate => EnumerateArgs::parse(c).map(drop),
        Command::Xi | Command::Oz => SeriesArgs::parse(c).map(drop),
        Command::Wulff => WulffArgs::parse(c).map(drop),
        Command::Skeleton | Command::Decompose => ClusterArgs::parse(c).map(drop),
        Command::Interface | Command::Bridge => InterfaceArgs::parse(c).map(drop),
        Command::Exit => ExitArgs::parse(c).map(drop),
        Command::Duality => DualityArgs::parse(c).map(drop),
    }
}

pub fn dispatch(command: Command, ctx: &mut Context) -> Res<()> {
    match command {
        Command::Sample => cmd_sample(ctx),
        Command::Enumerate => cmd_enumerate(ctx),
        Command::Xi => cmd_xi(ctx),
        Command::Oz => cmd_oz(ctx),
        Command::Wulff => cmd_wulff(ctx),
        Command::Skeleton => cmd_skeleton(ctx),
        Command::Decompose => cmd_decompose(ctx),
        Command::Interface => cmd_interface(ctx),
        Command::Bridge => cmd_bridge(ctx),
        Command::Exit => cmd_exit(ctx),
        Command::Duality => cmd_duality(ctx),
    }
}

/// Model keys shared by the FK commands: `q` and either `p` or `beta`.
#[derive(Debug, Clone, Copy)]
struct Model {
    q: f64,
    p: f64,
    params: ModelParams,
}

impl Model {
    fn parse(c: &RunConfig) -> Res<Self> {
        let q: f64 = c.get_or("q", 1.0)?;
        if !(q >= 1.0 && q.is_finite()) {
            return Err(CliError::config("q", format!("{q} must be at least 1")));
        }
        let params = if c.contains("p") {
            let p = c.ranged("p", None, 0.0, 1.0)?;
            ModelParams::from_p(p, q).map_err(|e| CliError::config("p", e.to_string()))?
        } else if c.contains("beta") {
            let beta = c.ranged("beta", None, 0.0, f64::MAX)?;
            ModelParams::new(beta, q).map_err(|e| CliError::config("beta", e.to_string()))?
        } else {
            return Err(CliError::config("p", "missing required key (or give beta)"));
        };
        Ok(Model {
            q,
            p: params.bond_probability(1.0),
            params,
        })
    }

    fn integer_q(&self) -> Option<u8> {
        (self.q.fract() == 0.0 && (1.0..=255.0).contains(&self.q)).then_some(self.q as u8)
    }
}

fn parse_boundary(c: &RunConfig) -> Res<Boundary> {
    c.raw("bc")
        .unwrap_or("free")
        .parse()
        .map_err(|e: String| CliError::config("bc", e))
}

fn parse_sampler(c: &RunConfig) -> Res<Sampler> {
    c.raw("sampler")
        .unwrap_or("heat-bath")
        .parse()
        .map_err(|e: String| CliError::config("sampler", e))
}

fn parse_vector(c: &RunConfig, key: &str, default: &str) -> Res<(i64, i64)> {
    let v = c.int_list(key, default)?;
    match v[..] {
        [x, y] if (x, y) != (0, 0) => Ok((x, y)),
        _ => Err(CliError::config(
            key,
            "expected two integers, not both zero",
        )),
    }
}

fn csv_rows(rows: &[(&str, f64, &EstimateWithCI)]) -> String {
    let mut buf = Vec::new();
    buf.extend_from_slice(CSV_HEADER.as_bytes());
    buf.push(b'\n');
    for (q, s, e) in rows {
        write_row(&mut buf, q, *s, e).expect("write to memory");
    }
    String::from_utf8(buf).expect("utf8")
}

fn estimate_json(e: &EstimateWithCI) -> Value {
    json!({"estimate": e.estimate, "lo": e.lo, "hi": e.hi, "n": e.n, "method": e.method})
}

// ---------------------------------------------------------------- sample

struct SampleArgs {
    dim: usize,
    n: i64,
    model: Model,
    bc: Boundary,
    sampler: Sampler,
    burn_in: usize,
    samples: usize,
    thinning: usize,
}

impl SampleArgs {
    fn parse(c: &RunConfig) -> Res<Self> {
        let dim: usize = c.get_or("dim", 2)?;
        if !(1..=3).contains(&dim) {
            return Err(CliError::config("dim", "must be 1, 2 or 3"));
        }
        let n: i64 = c.get_or("n", 4)?;
        if n < 0 {
            return Err(CliError::config("n", "must be non-negative"));
        }
        let model = Model::parse(c)?;
        let sampler = parse_sampler(c)?;
        if sampler == Sampler::SwendsenWang && model.integer_q().is_none() {
            return Err(CliError::config("sampler", "swendsen-wang needs integer q"));
        }
        Ok(SampleArgs {
            dim,
            n,
            model,
            bc: parse_boundary(c)?,
            sampler,
            burn_in: c.get_or("burn_in", 100)?,
            samples: c.positive("samples", 10)?,
            thinning: c.positive("thinning", 1)?,
        })
    }
}

fn cmd_sample(ctx: &mut Context) -> Res<()> {
    let a = SampleArgs::parse(&ctx.config)?;
    let bx = LatticeBox::centered(a.dim, a.n).map_err(run_err)?;
    let graph = BondGraph::nearest_neighbour(&bx);
    let header = DumpHeader {
        dim: a.dim,
        half_width: a.n,
        q: a.model.q,
        beta: a.model.params.beta,
        boundary: a.bc,
        seed: ctx.seed,
    };
    let seed = ctx.seed;
    let results: Vec<Res<(String, String)>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..ctx.chains)
            .map(|chain| {
                let (graph, header, a) = (&graph, &header, &a);
                s.spawn(move || -> Res<(String, String)> {
                    let mut fk = FkChain::new(
                        graph,
                        a.model.params,
                        a.bc,
                        a.sampler,
                        stream_rng(seed, chain as u64),
                    )
                    .map_err(run_err)?;
                    for _ in 0..a.burn_in {
                        fk.sweep();
                    }
                    let mut dump = Vec::new();
                    let mut summary = String::new();
                    for i in 0..a.samples {
                        for _ in 0..a.thinning {
                            fk.sweep();
                        }
                        write_dump(&mut dump, header, fk.state()).map_err(run_err)?;
                        let clusters = cluster_labeling(graph, fk.state()).count;
                        writeln!(summary, "{chain},{i},{},{clusters}", fk.state().num_open())
                            .expect("string");
                    }
                    Ok((String::from_utf8(dump).expect("ascii"), summary))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread"))
            .collect()
    });
    let mut summary = String::from("chain,sample,open_bonds,clusters\n");
    for (chain, r) in results.into_iter().enumerate() {
        let (dump, s) = r?;
        ctx.out.write(&format!("chain_{chain}.dump"), dump)?;
        summary.push_str(&s);
    }
    ctx.out.write("summary.csv", summary)
}

// ---------------------------------------------------------------- enumerate

struct EnumerateArgs {
    bx: LatticeBox,
    model: Model,
    bc: Boundary,
}

fn parse_box(c: &RunConfig) -> Res<LatticeBox> {
    if c.contains("sides") {
        let sides = c.int_list("sides", "")?;
        if sides.is_empty() || sides.len() > 3 || sides.iter().any(|&s| s < 1) {
            return Err(CliError::config(
                "sides",
                "expected one to three positive side lengths",
            ));
        }
        LatticeBox::rect(&sides).map_err(|e| CliError::config("sides", e.to_string()))
    } else {
        let dim: usize = c.get_or("dim", 2)?;
        let n: i64 = c.get_or("n", 1)?;
        LatticeBox::centered(dim, n).map_err(|e| CliError::config("n", e.to_string()))
    }
}

impl EnumerateArgs {
    fn parse(c: &RunConfig) -> Res<Self> {
        let bx = parse_box(c)?;
        let bonds = BondGraph::nearest_neighbour(&bx).num_bonds();
        if bonds > crate::fkmodel::MAX_EXACT_BONDS {
            return Err(CliError::config(
                "sides",
                format!(
                    "{bonds} bonds exceed the enumeration limit {}",
                    crate::fkmodel::MAX_EXACT_BONDS
                ),
            ));
        }
        Ok(EnumerateArgs {
            bx,
            model: Model::parse(c)?,
            bc: parse_boundary(c)?,
        })
    }
}

fn cmd_enumerate(ctx: &mut Context) -> Res<()> {
    let a = EnumerateArgs::parse(&ctx.config)?;
    let graph = BondGraph::nearest_neighbour(&a.bx);
    let exact = exact_distribution(&graph, &a.model.params, a.bc).map_err(run_err)?;
    let mut table = String::from("mask,open_bonds,probability\n");
    for (mask, p) in exact.probs.iter().enumerate() {
        writeln!(table, "{mask},{},{:.17e}", mask.count_ones(), p).expect("string");
    }
    ctx.out.write("distribution.csv", table)?;
    let d = a.bx.dim();
    let mut marg = String::from("bond,a,b,p_open\n");
    for (e, p) in exact.bond_marginals(graph.num_bonds()).iter().enumerate() {
        let b = graph.bonds()[e];
        writeln!(marg, "{e},{},{},{:.17e}", coords(b.a, d), coords(b.b, d), p).expect("string");
    }
    ctx.out.write("marginals.csv", marg)?;
    ctx.out.write_json("report.json", &json!({"bonds": graph.num_bonds(), "q": a.model.q, "p": a.model.p, "bc": a.bc.to_string()}))
}

fn coords(s: Site, d: usize) -> String {
    s.coords(d)
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

// ---------------------------------------------------------------- connectivity series

#[derive(Debug, Clone)]
enum Method {
    Splitting {
        per_stage: usize,
        replicates: usize,
        max_sites: usize,
    },
    Worm {
        side: i64,
        steps: u64,
        bias_rate: Option<f64>,
        batches: usize,
    },
    Torus {
        side: i64,
        sweeps: usize,
        burn_in: usize,
        batches: usize,
        sampler: Sampler,
    },
}

impl Method {
    fn parse(c: &RunConfig, model: &Model, reach: i64) -> Res<Self> {
        let default = if model.q == 1.0 {
            "splitting"
        } else if model.q == 2.0 {
            "worm"
        } else {
            "torus"
        };
        match c.raw("method").unwrap_or(default) {
            "splitting" => {
                if model.q != 1.0 || model.p >= 1.0 {
                    return Err(CliError::config(
                        "method",
                        "splitting needs q = 1 and p < 1",
                    ));
                }
                Ok(Method::Splitting {
                    per_stage: c.positive("per_stage", 1000)?,
                    replicates: c.positive("replicates", 20)?.max(2),
                    max_sites: c.positive("max_sites", 1_000_000)?,
                })
            }
            "worm" => {
                if model.q != 2.0 || model.p <= 0.0 || model.p >= 1.0 {
                    return Err(CliError::config("method", "worm needs q = 2 and 0 < p < 1"));
                }
                let side: i64 = c.get_or("side", (3 * reach).max(16))?;
                if side <= 2 * reach {
                    return Err(CliError::config(
                        "side",
                        format!("must exceed twice the largest displacement {reach}"),
                    ));
                }
                let bias_rate = if c.contains("bias_rate") {
                    Some(c.ranged("bias_rate", None, 0.0, 50.0)?)
                } else {
                    None
                };
                Ok(Method::Worm {
                    side,
                    steps: c.get_or("steps", 100_000_000u64)?,
                    bias_rate,
                    batches: c.positive("batches", 50)?.max(2),
                })
            }
            "torus" => {
                let side: i64 = c.get_or("side", (3 * reach).max(16))?;
                if side <= 2 * reach {
                    return Err(CliError::config(
                        "side",
                        format!("must exceed twice the largest displacement {reach}"),
                    ));
                }
                let sampler = if model.integer_q().is_some() {
                    Sampler::SwendsenWang
                } else {
                    Sampler::HeatBath
                };
                let sweeps = c.positive("sweeps", 100_000)?;
                let batches = c.positive("batches", 50)?.max(2);
                if sweeps < batches {
                    return Err(CliError::config(
                        "sweeps",
                        "must be at least the number of batches",
                    ));
                }
                Ok(Method::Torus {
                    side,
                    sweeps,
                    burn_in: c.get_or("burn_in", 1000)?,
                    batches,
                    sampler,
                })
            }
            other => Err(CliError::config(
                "method",
                format!("unknown method '{other}' (splitting, worm, torus)"),
            )),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Method::Splitting { .. } => "splitting",
            Method::Worm { .. } => "worm",
            Method::Torus { .. } => "torus",
        }
    }
}

/// Replicate estimates of `P(0 <-> k v)` for each multiple `k`.
fn directional_replicates(
    model: &Model,
    method: &Method,
    v: (i64, i64),
    multiples: &[i64],
    seed: u64,
) -> Res<Vec<Vec<f64>>> {
    let reach = multiples
        .iter()
        .map(|k| k * v.0.abs().max(v.1.abs()))
        .max()
        .unwrap_or(1);
    match method {
        Method::Splitting {
            per_stage,
            replicates,
            max_sites,
        } => {
            let len = ((v.0 * v.0 + v.1 * v.1) as f64).sqrt();
            let top = (*multiples.last().expect("non-empty") as f64 * len).ceil() as i64;
            let cfg = SplittingConfig {
                dim: 2,
                p: model.p,
                level: Level::Direction(vec![v.0 as f64, v.1 as f64]),
                thresholds: (1..=top).map(|t| t as f64).collect(),
                per_stage: *per_stage,
                max_sites: *max_sites,
            };
            let targets: Vec<Site> = multiples
                .iter()
                .map(|&k| Site::xy(k * v.0, k * v.1))
                .collect();
            Ok(cfg.run(&targets, *replicates, seed).map_err(run_err)?.hits)
        }
        Method::Worm {
            side,
            steps,
            bias_rate,
            batches,
        } => {
            let beta = -(-model.p).ln_1p();
            let rate = match bias_rate {
                Some(r) => *r,
                None => pilot_worm_rate(beta, derive_seed(seed, 1))?,
            };
            let study = WormStudy {
                side: *side,
                beta,
                bias_rate: rate,
                bias_radius: reach as f64 + 1.0,
                max_displacement: reach,
                burn_in: steps / 100,
                steps: *steps,
                batches: *batches,
            };
            Ok(ising_worm_correlation(&study, seed)
                .map_err(run_err)?
                .batch_series(v, multiples))
        }
        Method::Torus {
            side,
            sweeps,
            burn_in,
            batches,
            sampler,
        } => {
            let study = TorusStudy {
                side: *side,
                params: model.params,
                sampler: *sampler,
                burn_in: *burn_in,
                sweeps: *sweeps,
                batches: *batches,
                max_displacement: reach,
            };
            Ok(torus_connectivity(&study, seed)
                .map_err(run_err)?
                .batch_series(v, multiples))
        }
    }
}

/// Bias rate for the worm from a short unbiased run: 90% of the axis decay rate fitted
/// over displacements 3 to 7.
fn pilot_worm_rate(beta: f64, seed: u64) -> Res<f64> {
    let study = WormStudy {
        side: 24,
        beta,
        bias_rate: 0.0,
        bias_radius: 0.0,
        max_displacement: 8,
        burn_in: 100_000,
        steps: 10_000_000,
        batches: 10,
    };
    let w = ising_worm_correlation(&study, seed).map_err(run_err)?;
    let ks: Vec<i64> = (3..=7).collect();
    let scales: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
    let rate = fit_inverse_correlation_length_replicates(
        "pilot",
        &scales,
        &w.batch_series((1, 0), &ks),
        2,
    )
    .map(|f| 0.9 * f.xi.estimate)
    .unwrap_or(0.0);
    Ok(rate.max(0.0))
}

struct SeriesArgs {
    model: Model,
    direction: (i64, i64),
    multiples: Vec<i64>,
    method: Method,
}

impl SeriesArgs {
    fn parse(c: &RunConfig) -> Res<Self> {
        let model = Model::parse(c)?;
        let direction = parse_vector(c, "direction", "1,0")?;
        let multiples = c.int_list("scales", "8..40:2")?;
        if multiples.windows(2).any(|w| w[1] <= w[0]) || multiples[0] < 1 {
            return Err(CliError::config(
                "scales",
                "must be positive and strictly increasing",
            ));
        }
        let reach = multiples.last().expect("non-empty") * direction.0.abs().max(direction.1.abs());
        let method = Method::parse(c, &model, reach)?;
        Ok(SeriesArgs {
            model,
            direction,
            multiples,
            method,
        })
    }

    fn scales(&self) -> Vec<f64> {
        let len = ((self.direction.0.pow(2) + self.direction.1.pow(2)) as f64).sqrt();
        self.multiples.iter().map(|&k| k as f64 * len).collect()
    }
}

fn series_csv(scales: &[f64], reps: &[Vec<f64>]) -> Res<String> {
    let pts: Vec<EstimateWithCI> = (0..scales.len())
        .map(|i| {
            crate::analysis::mean_ci(
                &reps.iter().map(|r| r[i]).collect::<Vec<_>>(),
                "replicate-mean",
            )
        })
        .collect::<Result<_, _>>()
        .map_err(run_err)?;
    let rows: Vec<(&str, f64, &EstimateWithCI)> = scales
        .iter()
        .zip(&pts)
        .map(|(&s, e)| ("connectivity", s, e))
        .collect();
    Ok(csv_rows(&rows))
}

fn cmd_xi(ctx: &mut Context) -> Res<()> {
    let a = SeriesArgs::parse(&ctx.config)?;
    let scales = a.scales();
    let reps = directional_replicates(&a.model, &a.method, a.direction, &a.multiples, ctx.seed)?;
    ctx.out.write("series.csv", series_csv(&scales, &reps)?)?;
    let fit = fit_inverse_correlation_length_replicates("connectivity", &scales, &reps, 2)
        .map_err(run_err)?;
    let mut text = csv_rows(&[("xi", scales[0], &fit.xi)]);
    for (k, v) in &fit.naive {
        writeln!(text, "naive_xi,{k},{v:.12e},{v:.12e},{v:.12e},{}", fit.xi.n).expect("string");
    }
    ctx.out.write("xi.csv", text)?;
    ctx.out.write_json(
        "report.json",
        &json!({"method": a.method.name(), "direction": [a.direction.0, a.direction.1], "xi": estimate_json(&fit.xi), "intercept": fit.intercept, "reduced_chi2": fit.fit.reduced_chi2}),
    )
}

fn cmd_oz(ctx: &mut Context) -> Res<()> {
    let a = SeriesArgs::parse(&ctx.config)?;
    let scales = a.scales();
    let reps = directional_replicates(&a.model, &a.method, a.direction, &a.multiples, ctx.seed)?;
    ctx.out.write("series.csv", series_csv(&scales, &reps)?)?;
    let oz = oz_exponent_fit_replicates("connectivity", &scales, &reps, 2).map_err(run_err)?;
    ctx.out.write(
        "oz.csv",
        csv_rows(&[
            ("xi", 0.0, &oz.xi),
            ("alpha", 0.0, &oz.alpha),
            ("log_psi", 0.0, &oz.log_psi),
        ]),
    )?;
    ctx.out.write_json(
        "report.json",
        &json!({
            "method": a.method.name(),
            "direction": [a.direction.0, a.direction.1],
            "xi": estimate_json(&oz.xi),
            "alpha": estimate_json(&oz.alpha),
            "log_psi": estimate_json(&oz.log_psi),
            "expected_alpha": oz.expected_alpha,
            "covers_expected": oz.covers_expected,
            "reduced_chi2": oz.fit.reduced_chi2,
        }),
    )
}

// ---------------------------------------------------------------- wulff

struct WulffArgs {
    model: Model,
    directions: Vec<(i64, i64)>,
    min_distance: f64,
    max_distance: f64,
    harmonics: usize,
    resolution: usize,
    method: Method,
}

/// Primitive directions in the first quadrant used by default.
pub const DEFAULT_DIRECTIONS: &str =
    "1,0;5,1;4,1;3,1;5,2;2,1;5,3;3,2;4,3;5,4;1,1;4,5;3,4;2,3;3,5;1,2;2,5;1,3;1,4;1,5;0,1";

impl WulffArgs {
    fn parse(c: &RunConfig) -> Res<Self> {
        let model = Model::parse(c)?;
        let mut directions = Vec::new();
        for part in c.raw("directions").unwrap_or(DEFAULT_DIRECTIONS).split(';') {
            let sub = RunConfig::parse(&format!("v = {part}"))
                .map_err(|_| CliError::config("directions", "bad direction"))?;
            directions.push(
                parse_vector(&sub, "v", "")
                    .map_err(|e| CliError::config("directions", e.message))?,
            );
        }
        let harmonics: usize = c.get_or("harmonics", 2)?;
        if directions.len() < harmonics + 2 {
            return Err(CliError::config(
                "directions",
                format!(
                    "need at least {} directions for {harmonics} harmonics",
                    harmonics + 2
                ),
            ));
        }
        let min_distance = c.ranged("min_distance", Some(8.0), 1.0, 1e4)?;
        let max_distance = c.ranged("max_distance", Some(40.0), min_distance, 1e4)?;
        let reach = max_distance.ceil() as i64;
        let method = Method::parse(c, &model, reach)?;
        Ok(WulffArgs {
            model,
            directions,
            min_distance,
            max_distance,
            harmonics,
            resolution: c.positive("resolution", 720)?,
            method,
        })
    }
}

fn cmd_wulff(ctx: &mut Context) -> Res<()> {
    let a = WulffArgs::parse(&ctx.config)?;
    let mut directional = Vec::new();
    let mut rows = String::from(CSV_HEADER);
    rows.push('\n');
    for (i, &v) in a.directions.iter().enumerate() {
        let len = ((v.0 * v.0 + v.1 * v.1) as f64).sqrt();
        let multiples: Vec<i64> = (1..)
            .take_while(|&k| k as f64 * len <= a.max_distance)
            .filter(|&k| k as f64 * len >= a.min_distance)
            .collect();
        if multiples.len() < 4 {
            return Err(CliError::config(
                "directions",
                format!(
                    "direction ({},{}) has fewer than 4 multiples in range",
                    v.0, v.1
                ),
            ));
        }
        let scales: Vec<f64> = multiples.iter().map(|&k| k as f64 * len).collect();
        let reps = directional_replicates(
            &a.model,
            &a.method,
            v,
            &multiples,
            derive_seed(ctx.seed, i as u64),
        )?;
        let fit =
            fit_inverse_correlation_length_replicates("xi", &scales, &reps, 2).map_err(run_err)?;
        let theta = (v.1 as f64).atan2(v.0 as f64);
        let mut buf = Vec::new();
        write_row(&mut buf, "xi", theta, &fit.xi).expect("memory");
        rows.push_str(std::str::from_utf8(&buf).expect("utf8"));
        directional.push((theta, fit.xi));
    }
    ctx.out.write("directions.csv", rows)?;
    let fit = fit_support_function(&directional, a.harmonics).map_err(run_err)?;
    let unit = equi_decay_set(&fit.norm, a.resolution).map_err(run_err)?;
    let wulff = wulff_shape(&fit.norm, a.resolution).map_err(run_err)?;
    let mut buf = Vec::new();
    export_csv(&unit, &mut buf).map_err(CliError::io)?;
    ctx.out.write("unit_ball.csv", &buf)?;
    buf.clear();
    export_csv(&wulff, &mut buf).map_err(CliError::io)?;
    ctx.out.write("wulff.csv", &buf)?;
    let body = ConvexBody::Support(fit.norm.clone());
    let mut curv = String::from("theta,t_x,t_y,curvature\n");
    let mut min_curvature = f64::INFINITY;
    for k in 0..a.resolution {
        let th = 2.0 * PI * k as f64 / a.resolution as f64;
        let t = dual_vector(&[th.cos(), th.sin()], &fit.norm, None).map_err(run_err)?;
        let c = boundary_curvature(&body, &t).map_err(run_err)?;
        min_curvature = min_curvature.min(c);
        writeln!(curv, "{th:.12e},{:.12e},{:.12e},{c:.12e}", t[0], t[1]).expect("string");
    }
    ctx.out.write("curvature.csv", curv)?;
    let raw = raw_unit_ball(&directional);
    let defect = polarity_defect(&raw, &wulff).map_err(run_err)?;
    ctx.out.write_json(
        "report.json",
        &json!({
            "method": a.method.name(),
            "directions": a.directions.len(),
            "coefficients": fit.coefficients(),
            "reduced_chi2": fit.fit.reduced_chi2,
            "convex": min_curvature > 0.0,
            "min_curvature": min_curvature,
            "polarity_defect": defect,
            "max_relative_half_width": fit.max_relative_half_width,
        }),
    )
}

/// Polygon through `n_theta / xi(theta)` for the estimated directions and their images
/// under the symmetries of the square lattice.
pub fn raw_unit_ball(directional: &[(f64, EstimateWithCI)]) -> ConvexBody {
    let mut pts: Vec<(f64, [f64; 2])> = Vec::new();
    for (th, e) in directional {
        let (x, y) = (th.cos() / e.estimate, th.sin() / e.estimate);
        for (sx, sy) in [(x, y), (y, x)] {
            for (a, b) in [(sx, sy), (-sx, sy), (sx, -sy), (-sx, -sy)] {
                pts.push((b.atan2(a), [a, b]));
            }
        }
    }
    pts.sort_by(|p, q| p.0.total_cmp(&q.0));
    pts.dedup_by(|p, q| (p.0 - q.0).abs() < 1e-12);
    ConvexBody::Polygon(pts.into_iter().map(|p| p.1).collect())
}

// ---------------------------------------------------------------- clusters

enum ClusterSource {
    File(String),
    Sampled {
        p: f64,
        target: Site,
        max_rejects: usize,
        max_sites: usize,
    },
}

struct ClusterArgs {
    source: ClusterSource,
    norm: DirectionalNorm,
    skeleton: SkeletonParams,
    delta: f64,
}

impl ClusterArgs {
    fn parse(c: &RunConfig) -> Res<Self> {
        let source = match c.raw("cluster") {
            Some(path) => ClusterSource::File(path.to_string()),
            None => {
                let q: f64 = c.get_or("q", 1.0)?;
                if q != 1.0 {
                    return Err(CliError::config(
                        "q",
                        "sampled clusters need q = 1 (give a cluster file otherwise)",
                    ));
                }
                let (x, y) = parse_vector(c, "target", "12,0")?;
                ClusterSource::Sampled {
                    p: c.ranged("p", None, 0.0, 0.999_999)?,
                    target: Site::xy(x, y),
                    max_rejects: c.positive("max_rejects", 100_000)?,
                    max_sites: c.positive("max_sites", 1_000_000)?,
                }
            }
        };
        let norm = match c.raw("norm").unwrap_or("euclidean") {
            "euclidean" => DirectionalNorm::euclidean(2),
            "l1" => DirectionalNorm::L1 { dim: 2, scale: 1.0 },
            other => {
                return Err(CliError::config(
                    "norm",
                    format!("unknown norm '{other}' (euclidean, l1)"),
                ))
            }
        };
        let skeleton = SkeletonParams {
            k: c.ranged("k", Some(8.0), 1.0, 1e6)?,
            r: c.ranged("r", Some(2.0), 0.0, 1e6)?,
            range: 1.0,
        };
        Ok(ClusterArgs {
            source,
            norm,
            skeleton,
            delta: c.ranged("delta", Some(0.3), 1e-9, 1.0 / 3.0)?,
        })
    }

    fn load(&self, seed: u64) -> Res<Cluster> {
        match &self.source {
            ClusterSource::File(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::config("cluster", format!("{path}: {e}")))?;
                let v: Value = serde_json::from_str(&text)
                    .map_err(|e| CliError::config("cluster", e.to_string()))?;
                cluster_from_json(&v).map_err(|m| CliError::config("cluster", m))
            }
            ClusterSource::Sampled {
                p,
                target,
                max_rejects,
                max_sites,
            } => {
                let source = ConditionedSource::Bernoulli {
                    dim: 2,
                    p: *p,
                    max_sites: *max_sites,
                };
                let mut it = conditioned_cluster_sampler(source, *target, *max_rejects, seed)
                    .map_err(run_err)?;
                it.next().expect("sampler yields").map_err(run_err)
            }
        }
    }
}

/// JSON form of a cluster: origin, target, vertices and edges as coordinate arrays.
pub fn cluster_to_json(c: &Cluster) -> Value {
    let d = c.dim;
    json!({
        "dim": d,
        "origin": c.origin.coords(d),
        "target": c.target.coords(d),
        "vertices": c.vertices.iter().map(|s| s.coords(d)).collect::<Vec<_>>(),
        "edges": c.edges.iter().map(|e| json!([e.a.coords(d), e.b.coords(d)])).collect::<Vec<_>>(),
    })
}

/// Inverse of [`cluster_to_json`].
pub fn cluster_from_json(v: &Value) -> Result<Cluster, String> {
    let dim = v["dim"].as_u64().ok_or("missing dim")? as usize;
    let site = |x: &Value| -> Result<Site, String> {
        let c: Vec<i64> = x
            .as_array()
            .ok_or("site must be an array")?
            .iter()
            .map(|c| c.as_i64().ok_or("coordinate must be an integer"))
            .collect::<Result<_, _>>()?;
        if c.len() != dim {
            return Err("site has wrong dimension".into());
        }
        Ok(Site::new(&c))
    };
    let vertices = v["vertices"]
        .as_array()
        .ok_or("missing vertices")?
        .iter()
        .map(site)
        .collect::<Result<Vec<_>, _>>()?;
    let edges = v["edges"]
        .as_array()
        .ok_or("missing edges")?
        .iter()
        .map(|e| {
            let pair = e
                .as_array()
                .filter(|p| p.len() == 2)
                .ok_or("edge must be a pair")?;
            Ok(Bond::new(site(&pair[0])?, site(&pair[1])?))
        })
        .collect::<Result<Vec<_>, String>>()?;
    Cluster::new(
        dim,
        vertices,
        edges,
        site(&v["origin"])?,
        site(&v["target"])?,
    )
    .map_err(|e| e.to_string())
}

fn cmd_skeleton(ctx: &mut Context) -> Res<()> {
    let a = ClusterArgs::parse(&ctx.config)?;
    let cluster = a.load(ctx.seed)?;
    ctx.out
        .write_json("cluster.json", &cluster_to_json(&cluster))?;
    let skel = build_skeleton(&cluster, &a.norm, a.skeleton).map_err(run_err)?;
    let mut text = String::from("index,x,y,parent\n");
    for (i, (p, parent)) in skel.points.iter().zip(&skel.parent).enumerate() {
        let parent = parent.map_or(String::new(), |q| q.to_string());
        writeln!(text, "{i},{},{},{parent}", p.0[0], p.0[1]).expect("string");
    }
    ctx.out.write("skeleton.csv", text)?;
    let split = split_trunk_branches(&skel, cluster.target, &a.norm).map_err(run_err)?;
    let mut trunk = String::from("position,index\n");
    for (pos, i) in split.trunk.iter().enumerate() {
        writeln!(trunk, "{pos},{i}").expect("string");
    }
    ctx.out.write("trunk.csv", trunk)?;
    ctx.out.write_json(
        "report.json",
        &json!({"cluster_size": cluster.len(), "skeleton_points": skel.points.len(), "trunk_length": split.trunk.len(), "branches": split.branches.len(), "k": a.skeleton.k, "r": a.skeleton.r}),
    )
}

fn cmd_decompose(ctx: &mut Context) -> Res<()> {
    let a = ClusterArgs::parse(&ctx.config)?;
    let cluster = a.load(ctx.seed)?;
    ctx.out
        .write_json("cluster.json", &cluster_to_json(&cluster))?;
    let x = cluster.target.sub(cluster.origin).to_f64(2);
    let direction = if x.iter().all(|&c| c == 0.0) {
        vec![1.0, 0.0]
    } else {
        x
    };
    let t = dual_vector(&direction, &a.norm, None).map_err(run_err)?;
    let dec = decompose(&cluster, &t, a.delta, &a.norm).map_err(run_err)?;
    ctx.out.write_json(
        "decomposition.json",
        &decomposition_json(&cluster, &dec, &t, a.delta),
    )?;
    let mut walk = String::from("step,dx,dy\n");
    if let Decomposition::Pieces(p) = &dec {
        for (i, s) in EffectiveWalk::from_decomposition(p)
            .steps
            .iter()
            .enumerate()
        {
            writeln!(walk, "{i},{},{}", s.0[0], s.0[1]).expect("string");
        }
    }
    ctx.out.write("walk.csv", walk)
}

// ---------------------------------------------------------------- interfaces

struct InterfaceArgs {
    n: i64,
    q: u8,
    beta: f64,
    profiles: usize,
    burn_in: usize,
    thinning: usize,
    grid: usize,
    delta: f64,
    batches: usize,
    reference_curvature: Option<f64>,
}

impl InterfaceArgs {
    fn parse(c: &RunConfig) -> Res<Self> {
        let q: u8 = c.get_or("q", 2)?;
        if q < 2 {
            return Err(CliError::config("q", "Potts interfaces need q >= 2"));
        }
        let beta_default = 2.0 * (1.0 + (q as f64).sqrt()).ln();
        let grid = c.positive("grid", 16)?;
        if grid % 2 != 0 {
            return Err(CliError::config("grid", "must be even"));
        }
        let n: i64 = c.get_or("n", 16)?;
        if n < 1 {
            return Err(CliError::config("n", "must be at least 1"));
        }
        Ok(InterfaceArgs {
            n,
            q,
            beta: c.ranged("beta", Some(beta_default), 0.0, 1e3)?,
            profiles: c.positive("profiles", 1000)?,
            burn_in: c.get_or("burn_in", 200)?,
            thinning: c.positive("thinning", 2)?,
            grid,
            delta: c.ranged("delta", Some(0.3), 1e-9, 1.0 / 3.0)?,
            batches: c.positive("batches", 50)?,
            reference_curvature: if c.contains("reference_curvature") {
                Some(c.ranged("reference_curvature", None, 1e-12, 1e12)?)
            } else {
                None
            },
        })
    }
}

/// Interface profiles from `chains` independent chains; chain `c` uses a seed derived from
/// stream `c` and contributes an equal share of the profiles (earlier chains take the
/// remainder). Returns the profiles in chain order and the number of column fallbacks.
fn sample_profiles(
    a: &InterfaceArgs,
    seed: u64,
    chains: usize,
) -> Res<(Vec<InterfaceProfile>, usize)> {
    let lat = PottsLattice::new(a.n).map_err(run_err)?;
    let norm = DirectionalNorm::euclidean(2);
    let results: Vec<Res<(Vec<InterfaceProfile>, usize)>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..chains)
            .map(|chain| {
                let (lat, norm) = (&lat, &norm);
                let share = a.profiles / chains + usize::from(chain < a.profiles % chains);
                s.spawn(move || -> Res<(Vec<InterfaceProfile>, usize)> {
                    let mut out = Vec::with_capacity(share);
                    let mut fallback = 0;
                    let samples = es_sample(
                        lat,
                        a.beta,
                        a.q,
                        PottsBoundary::dobrushin_vertical(),
                        a.burn_in,
                        share,
                        a.thinning,
                        derive_seed(seed, chain as u64),
                    )
                    .map_err(run_err)?;
                    for sigma in samples {
                        let sigma = sigma.map_err(run_err)?;
                        let iface = extract_interface(lat, &sigma).map_err(run_err)?;
                        match interface_profile(&iface, a.grid, a.delta, norm) {
                            Ok(p) => out.push(p),
                            Err(_) => {
                                fallback += 1;
                                out.push(column_profile(&iface, a.grid));
                            }
                        }
                    }
                    Ok((out, fallback))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread"))
            .collect()
    });
    let mut all = Vec::with_capacity(a.profiles);
    let mut fallback = 0;
    for r in results {
        let (p, f) = r?;
        all.extend(p);
        fallback += f;
    }
    Ok((all, fallback))
}

fn cmd_interface(ctx: &mut Context) -> Res<()> {
    let a = InterfaceArgs::parse(&ctx.config)?;
    let (profiles, fallback) = sample_profiles(&a, ctx.seed, ctx.chains)?;
    let mut buf = Vec::new();
    write_profiles_csv(&mut buf, &profiles).map_err(CliError::io)?;
    ctx.out.write("profiles.csv", buf)?;
    ctx.out.write_json("report.json", &json!({"profiles": profiles.len(), "column_fallbacks": fallback, "n": a.n, "q": a.q, "beta": a.beta}))
}

fn cmd_bridge(ctx: &mut Context) -> Res<()> {
    let a = InterfaceArgs::parse(&ctx.config)?;
    let mut rng = stream_rng(derive_seed(ctx.seed, 1 << 20), 0);
    let exact = brownian_bridge_profiles(a.grid, a.profiles.max(1000), 1.0, &mut rng);
    let check = bridge_covariance_test(&exact, a.batches).map_err(run_err)?;
    let sigma = check.chi.half_width() / crate::analysis::t_quantile((a.batches.max(2) - 1) as f64);
    let self_check = (check.chi.estimate - 1.0).abs() <= 3.0 * sigma;
    if !self_check {
        return Err(CliError::run(format!(
            "Brownian-bridge self-check failed: chi = {:.4} +- {:.4}",
            check.chi.estimate, sigma
        )));
    }
    let (profiles, fallback) = sample_profiles(&a, ctx.seed, ctx.chains)?;
    let rep = bridge_covariance_test(&profiles, a.batches).map_err(run_err)?;
    ctx.out.write(
        "bridge.csv",
        csv_rows(&[
            ("chi", a.n as f64, &rep.chi),
            ("self_check_chi", 0.0, &check.chi),
        ]),
    )?;
    let mut vars = String::from("r,variance\n");
    for (r, v) in &rep.variances {
        writeln!(vars, "{r},{v:.12e}").expect("string");
    }
    ctx.out.write("variances.csv", vars)?;
    ctx.out.write_json(
        "report.json",
        &json!({
            "n": a.n,
            "profiles": profiles.len(),
            "column_fallbacks": fallback,
            "chi": estimate_json(&rep.chi),
            "r_squared": rep.r_squared,
            "midpoint_kurtosis": rep.midpoint_kurtosis,
            "max_covariance_defect": rep.max_covariance_defect,
            "self_check_chi": estimate_json(&check.chi),
            "reference_curvature": a.reference_curvature,
            "relative_deviation": a.reference_curvature.map(|c| rep.relative_deviation(c)),
        }),
    )
}

// ---------------------------------------------------------------- exit

struct ExitArgs {
    dim: usize,
    model: Model,
    sizes: Vec<i64>,
    per_stage: usize,
    replicates: usize,
}

impl ExitArgs {
    fn parse(c: &RunConfig) -> Res<Self> {
        let dim: usize = c.get_or("dim", 2)?;
        if !(1..=3).contains(&dim) {
            return Err(CliError::config("dim", "must be 1, 2 or 3"));
        }
        let model = Model::parse(c)?;
        let sizes = c.int_list("sizes", if dim == 1 { "1..11" } else { "4..16" })?;
        if sizes.len() < 3 || sizes.windows(2).any(|w| w[1] <= w[0]) || sizes[0] < 1 {
            return Err(CliError::config(
                "sizes",
                "need at least three increasing positive sizes",
            ));
        }
        if dim == 1 {
            if 2 * (sizes.last().expect("non-empty") + 1) > crate::fkmodel::MAX_EXACT_BONDS as i64 {
                return Err(CliError::config(
                    "sizes",
                    "one-dimensional sizes are enumerated exactly and must be at most 11",
                ));
            }
        } else if model.q != 1.0 || model.p >= 1.0 {
            return Err(CliError::config(
                "q",
                "escape probabilities in d >= 2 are estimated by splitting and need q = 1, p < 1",
            ));
        }
        Ok(ExitArgs {
            dim,
            model,
            sizes,
            per_stage: c.positive("per_stage", 2000)?,
            replicates: c.positive("replicates", 20)?.max(2),
        })
    }
}

/// Exact wired escape probability `P^w_{Lambda_n}(0 <-> boundary)` in one dimension.
fn exact_wired_escape(n: i64, params: &ModelParams) -> Res<f64> {
    let bx = LatticeBox::centered(1, n).map_err(run_err)?;
    let graph = BondGraph::nearest_neighbour(&bx);
    let exact = exact_distribution(&graph, params, Boundary::Wired).map_err(run_err)?;
    let origin = graph.vertex(Site::ORIGIN).expect("origin");
    Ok(exact.probability(|mask| {
        cluster_labeling(
            &graph,
            &BondConfiguration::from_mask(&graph, Boundary::Wired, mask),
        )
        .touches_exterior(origin)
    }))
}

fn cmd_exit(ctx: &mut Context) -> Res<()> {
    let a = ExitArgs::parse(&ctx.config)?;
    let (free, wired): (Vec<Vec<f64>>, Vec<Vec<f64>>) = if a.dim == 1 {
        let f = a
            .sizes
            .iter()
            .map(|&n| exact_exit_probability(1, n, &a.model.params).map_err(run_err))
            .collect::<Res<Vec<_>>>()?;
        let w = a
            .sizes
            .iter()
            .map(|&n| exact_wired_escape(n, &a.model.params))
            .collect::<Res<Vec<_>>>()?;
        (vec![f], vec![w])
    } else {
        let top = a.sizes.last().expect("non-empty") + 1;
        let cfg = SplittingConfig {
            dim: a.dim,
            p: a.model.p,
            level: Level::SupNorm,
            thresholds: (1..=top).map(|t| t as f64).collect(),
            per_stage: a.per_stage,
            max_sites: 1_000_000,
        };
        let est = cfg.run(&[], a.replicates, ctx.seed).map_err(run_err)?;
        // reach[i] estimates P(max sup-norm >= i + 1)
        let free = est
            .reach
            .iter()
            .map(|r| a.sizes.iter().map(|&n| r[n as usize]).collect())
            .collect();
        let wired = est
            .reach
            .iter()
            .map(|r| a.sizes.iter().map(|&n| r[n as usize - 1]).collect())
            .collect();
        (free, wired)
    };
    let free_rep = exit_decay("free_escape", &a.sizes, &free).map_err(run_err)?;
    let wired_rep = exit_decay("wired_escape", &a.sizes, &wired).map_err(run_err)?;
    let mut rows: Vec<(&str, f64, &EstimateWithCI)> = Vec::new();
    for p in &free_rep.series.points {
        rows.push(("free_escape", p.scale, &p.probability));
    }
    for p in &wired_rep.series.points {
        rows.push(("wired_escape", p.scale, &p.probability));
    }
    ctx.out.write("exit.csv", csv_rows(&rows))?;
    let rate_rows: Vec<(&str, f64, &EstimateWithCI)> = free_rep
        .successive_rates
        .iter()
        .map(|(n, e)| ("rate", *n as f64, e))
        .collect();
    ctx.out.write("rates.csv", csv_rows(&rate_rows))?;
    ctx.out.write_json(
        "report.json",
        &json!({
            "dim": a.dim,
            "p": a.model.p,
            "q": a.model.q,
            "final_rate": estimate_json(free_rep.final_rate()),
            "log_linear_rate": free_rep.log_linear.coefficients[1],
            "wired_r_squared": wired_rep.log_linear.r_squared,
            "wired_rate": wired_rep.log_linear.coefficients[1],
        }),
    )
}

// ---------------------------------------------------------------- duality

struct DualityArgs {
    p: f64,
    q: f64,
    bx: LatticeBox,
}

impl DualityArgs {
    fn parse(c: &RunConfig) -> Res<Self> {
        let p = c.ranged("p", None, 0.0, 1.0)?;
        let q: f64 = c.get_or("q", 1.0)?;
        if !(q >= 1.0 && q.is_finite()) {
            return Err(CliError::config("q", "must be at least 1"));
        }
        let sides = c.int_list("sides", "2,2")?;
        if sides.len() != 2 || sides.iter().any(|&s| s < 1) {
            return Err(CliError::config(
                "sides",
                "expected two positive side lengths",
            ));
        }
        let bx = LatticeBox::rect(&sides).map_err(|e| CliError::config("sides", e.to_string()))?;
        let dual_bonds =
            BondGraph::nearest_neighbour(&crate::duality2d::dual_box(&bx).map_err(run_err)?)
                .num_bonds();
        if dual_bonds > crate::fkmodel::MAX_EXACT_BONDS {
            return Err(CliError::config(
                "sides",
                format!("dual box has {dual_bonds} bonds, above the enumeration limit"),
            ));
        }
        Ok(DualityArgs { p, q, bx })
    }
}

fn cmd_duality(ctx: &mut Context) -> Res<()> {
    let a = DualityArgs::parse(&ctx.config)?;
    let p_star = dual_parameter(a.p, a.q).map_err(run_err)?;
    let p_back = dual_parameter(p_star, a.q).map_err(run_err)?;
    let report = check_measure_duality(&a.bx, a.p, a.q).map_err(run_err)?;
    ctx.out.write_json(
        "duality.json",
        &json!({
            "p": a.p,
            "q": a.q,
            "p_star": p_star,
            "involution_error": (p_back - a.p).abs(),
            "self_dual_point": self_dual_point(a.q).map_err(run_err)?,
            "total_variation": report.total_variation,
            "configuration_involution_defect": report.involution_max_error,
        }),
    )
}
