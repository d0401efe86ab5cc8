//! `indexbundle` command-line front-end.
//!
//! Every command prints a run report on stdout and writes its artifact to
//! `--out`. Exit codes: 0 pass, 1 failed mathematical check, 2 input error.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use indexbundle::axioms::run_axiom_suite;
use indexbundle::bundle::{complement, pullback_bundle};
use indexbundle::bvp::{bvp_check, BvpReport, BvpSpec};
use indexbundle::families::{
    bott, chart, constant_line, moebius, random_bundle, random_family, random_morphism, BundleRecipe, FamilySpec,
};
use indexbundle::index::{classical_index_class, index_class_detailed, well_definedness_check};
use indexbundle::invariants::{field_record, virtual_record};
use indexbundle::io::{self, ClassDoc};
use indexbundle::linalg;
use indexbundle::mesh::{
    circle_mesh, circle_power_map, interval_mesh, product_with_interval, sphere_mesh, sphere_mesh_with_coords,
};
use indexbundle::morphism::{
    compose, identity_morphism, make_morphism, pullback_morphism, random_compact_perturbation,
};
use indexbundle::parametrix::{build_parametrix, ParametrixStatus};
use indexbundle::report::{Outcome, RunReport};
use indexbundle::{BaseMesh, Error, MorphismField, ProjectionField, Result, Scalar, ToleranceConfig};

#[derive(Parser)]
#[command(
    name = "indexbundle",
    version,
    about = "Index bundles of Fredholm families over finite meshes"
)]
struct Cli {
    /// Worker threads for per-vertex work. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Tolerance configuration file; defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Random seed; overrides INDEXBUNDLE_SEED and the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write the run report here as well as to stdout.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    /// Do not print the run report.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Base meshes and maps between them.
    #[command(subcommand)]
    Mesh(MeshCmd),
    /// Projection-field bundles.
    #[command(subcommand)]
    Bundle(BundleCmd),
    /// Morphism fields between bundles.
    #[command(subcommand)]
    Morphism(MorphismCmd),
    /// Index classes.
    #[command(subcommand)]
    Index(IndexCmd),
    /// Finite-rank perturbations to an invertible family.
    #[command(subcommand)]
    Parametrix(ParametrixCmd),
    /// Boundary value problems for `u' = 0` with boundary conditions in a bundle.
    #[command(subcommand)]
    Bvp(BvpCmd),
    /// Randomized checks of the index axioms.
    #[command(subcommand)]
    Axioms(AxiomsCmd),
    /// Characteristic invariants.
    #[command(subcommand)]
    Invariants(InvariantsCmd),
}

#[derive(Clone, Copy, ValueEnum)]
enum MeshKindArg {
    Circle,
    Interval,
    Sphere,
    /// Circle times an interval.
    Product,
}

#[derive(Subcommand)]
enum MeshCmd {
    /// Build a standard mesh.
    Make {
        #[arg(long, value_enum)]
        kind: MeshKindArg,
        /// Vertices of the circle or interval.
        #[arg(long, default_value_t = 64)]
        m: usize,
        /// Subdivision level of the sphere.
        #[arg(long, default_value_t = 1)]
        level: usize,
        /// Interval samples of a product mesh.
        #[arg(long, default_value_t = 8)]
        t_steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// The degree-`d` map of `circle_mesh(m)` to itself.
    PowerMap {
        #[arg(long, default_value_t = 64)]
        m: usize,
        #[arg(long, allow_hyphen_values = true)]
        degree: i64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Inclusion of slice `t` into a product mesh.
    Slice {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        t: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ScalarArg {
    Real,
    Complex,
}

impl From<ScalarArg> for Scalar {
    fn from(s: ScalarArg) -> Self {
        match s {
            ScalarArg::Real => Scalar::Real,
            ScalarArg::Complex => Scalar::Complex,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BundleKind {
    /// The whole ambient space.
    Trivial,
    /// The Möbius line in `R^2` over a circle.
    Moebius,
    /// The Bott line in `C^2` over a sphere.
    Bott,
    /// A randomly gauged bundle.
    Random,
}

/// Base mesh: a file, or a circle with `--m` vertices.
#[derive(Args)]
struct BaseArgs {
    #[arg(long)]
    mesh: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    m: usize,
}

impl BaseArgs {
    fn load(&self) -> Result<Arc<BaseMesh>> {
        Ok(Arc::new(match &self.mesh {
            Some(p) => io::load_mesh(p)?,
            None => circle_mesh(self.m)?,
        }))
    }
}

#[derive(Subcommand)]
enum BundleCmd {
    /// Build a standard or random bundle.
    Make {
        #[arg(long, value_enum)]
        kind: BundleKind,
        #[command(flatten)]
        base: BaseArgs,
        /// Sphere level for the Bott bundle.
        #[arg(long, default_value_t = 1)]
        level: usize,
        #[arg(long, default_value_t = 2)]
        ambient: usize,
        #[arg(long, default_value_t = 1)]
        rank: usize,
        /// Random bundles: include a Möbius summand.
        #[arg(long)]
        twisted: bool,
        #[arg(long, value_enum, default_value = "real")]
        scalar: ScalarArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check idempotency, Hermiticity, rank constancy and edge gaps.
    Validate {
        #[arg(long)]
        bundle: PathBuf,
    },
    /// Orthogonal complement in the ambient or in `--within`.
    Complement {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        within: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pull a bundle back along a mesh map.
    Pullback {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MorphismKind {
    /// Random family; random bundles unless `--domain`/`--target` are given.
    Random,
    Zero,
    Identity,
}

#[derive(Subcommand)]
enum MorphismCmd {
    /// Build a morphism field.
    Make {
        #[arg(long, value_enum)]
        kind: MorphismKind,
        #[arg(long)]
        domain: Option<PathBuf>,
        #[arg(long)]
        target: Option<PathBuf>,
        #[command(flatten)]
        base: BaseArgs,
        #[arg(long, default_value_t = 3)]
        domain_ambient: usize,
        #[arg(long, default_value_t = 2)]
        domain_rank: usize,
        #[arg(long)]
        domain_twisted: bool,
        #[arg(long, default_value_t = 3)]
        target_ambient: usize,
        #[arg(long, default_value_t = 2)]
        target_rank: usize,
        #[arg(long)]
        target_twisted: bool,
        /// Factor the matrix field through a space of this dimension.
        #[arg(long)]
        inner_rank: Option<usize>,
        #[arg(long, value_enum, default_value = "real")]
        scalar: ScalarArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// `second ∘ first`.
    Compose {
        #[arg(long)]
        first: PathBuf,
        #[arg(long)]
        second: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pull a morphism back along a mesh map.
    Pullback {
        #[arg(long)]
        morphism: PathBuf,
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Add a random finite-rank perturbation.
    Perturb {
        #[arg(long)]
        morphism: PathBuf,
        #[arg(long, default_value_t = 1)]
        rank: usize,
        #[arg(long, default_value_t = 0.05)]
        magnitude: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum IndexCmd {
    /// Compute the index class and its invariants.
    Compute {
        #[arg(long)]
        morphism: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two constructions with different sweeps and seeds.
    Welldef {
        #[arg(long)]
        morphism: PathBuf,
        #[arg(long, num_args = 2)]
        seeds: Option<Vec<u64>>,
    },
    /// Compare the classical and the general constructions.
    Classical {
        #[arg(long)]
        morphism: PathBuf,
    },
}

#[derive(Subcommand)]
enum ParametrixCmd {
    /// Build `K` with `L + K` invertible, or report the obstruction.
    Build {
        #[arg(long)]
        morphism: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the perturbation `K`.
        #[arg(long)]
        perturbation: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundaryKind {
    /// Dirichlet condition at the left end.
    Trivial,
    Moebius,
    Bott,
}

#[derive(Subcommand)]
enum BvpCmd {
    /// Run one of the standard boundary problems.
    Demo {
        #[arg(long, value_enum)]
        bundle: BoundaryKind,
        /// Circle vertices for trivial and Möbius boundary data.
        #[arg(long, default_value_t = 64)]
        m: usize,
        /// Sphere level for Bott boundary data.
        #[arg(long, default_value_t = 1)]
        level: usize,
        /// Samples of the unit interval.
        #[arg(long, default_value_t = 32)]
        grid: usize,
        /// Repeat on the doubled grid and compare.
        #[arg(long)]
        refine: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a problem described by a spec file.
    Check {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        refine: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum AxiomsCmd {
    /// Run the randomized axiom suite.
    Verify {
        #[arg(long, default_value_t = 25)]
        trials: usize,
        /// Corrupt every expectation to exercise the failure path.
        #[arg(long)]
        inject_break: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum InvariantsCmd {
    /// Rank, `w1` per loop and `c1` per surface of a bundle or a difference.
    Reduce {
        #[arg(long)]
        bundle: PathBuf,
        /// Subtract this bundle.
        #[arg(long)]
        minus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn config(cli: &Cli) -> Result<ToleranceConfig> {
    let mut cfg = match &cli.config {
        Some(p) => io::load_config(p)?,
        None => ToleranceConfig::default(),
    };
    let env = ToleranceConfig::from_env()?;
    if std::env::var_os("INDEXBUNDLE_SEED").is_some() {
        cfg.seed = env.seed;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.check()?;
    Ok(cfg)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Mesh(MeshCmd::Make { .. }) => "mesh make",
        Command::Mesh(MeshCmd::PowerMap { .. }) => "mesh power-map",
        Command::Mesh(MeshCmd::Slice { .. }) => "mesh slice",
        Command::Bundle(BundleCmd::Make { .. }) => "bundle make",
        Command::Bundle(BundleCmd::Validate { .. }) => "bundle validate",
        Command::Bundle(BundleCmd::Complement { .. }) => "bundle complement",
        Command::Bundle(BundleCmd::Pullback { .. }) => "bundle pullback",
        Command::Morphism(MorphismCmd::Make { .. }) => "morphism make",
        Command::Morphism(MorphismCmd::Compose { .. }) => "morphism compose",
        Command::Morphism(MorphismCmd::Pullback { .. }) => "morphism pullback",
        Command::Morphism(MorphismCmd::Perturb { .. }) => "morphism perturb",
        Command::Index(IndexCmd::Compute { .. }) => "index compute",
        Command::Index(IndexCmd::Welldef { .. }) => "index welldef",
        Command::Index(IndexCmd::Classical { .. }) => "index classical",
        Command::Parametrix(ParametrixCmd::Build { .. }) => "parametrix build",
        Command::Bvp(BvpCmd::Demo { .. }) => "bvp demo",
        Command::Bvp(BvpCmd::Check { .. }) => "bvp check",
        Command::Axioms(AxiomsCmd::Verify { .. }) => "axioms verify",
        Command::Invariants(InvariantsCmd::Reduce { .. }) => "invariants reduce",
    }
}

fn save(out: &Option<PathBuf>, v: &Value) -> Result<()> {
    match out {
        Some(p) => io::write_json(p, v),
        None => Ok(()),
    }
}

/// Records the invariants when the base decides them.
fn record_if_decidable(report: &mut RunReport, name: &str, e: &ProjectionField, cfg: &ToleranceConfig) {
    if let Ok(r) = field_record(e, cfg) {
        report.record(name, r);
    }
}

fn describe_bundle(report: &mut RunReport, e: &ProjectionField) {
    report.set("ambient_dim", json!(e.ambient_dim));
    report.set("scalar", json!(e.scalar.as_str()));
    report.set("rank", json!(e.rank()));
}

fn describe_morphism(report: &mut RunReport, l: &MorphismField) {
    report.set("index", json!(l.index()));
    report.set("intertwining_residual", json!(l.intertwining_residual()));
}

fn run(cli: &Cli, cfg: &ToleranceConfig, report: &mut RunReport) -> Result<()> {
    match &cli.command {
        Command::Mesh(cmd) => mesh_cmd(cmd, report),
        Command::Bundle(cmd) => bundle_cmd(cmd, cfg, report),
        Command::Morphism(cmd) => morphism_cmd(cmd, cfg, report),
        Command::Index(cmd) => index_cmd(cmd, cfg, report),
        Command::Parametrix(ParametrixCmd::Build {
            morphism,
            out,
            perturbation,
        }) => {
            let l = io::load_morphism(morphism)?;
            let r = build_parametrix(&l, cfg)?;
            if let Some(obstruction) = &r.obstruction {
                report.record("obstruction", obstruction.clone());
            }
            if let Some(min_sv) = r.min_sv {
                report.check("invertible", min_sv >= cfg.sigma_floor, Some(min_sv));
            }
            let doc = json!({
                "status": r.status.as_str(),
                "min_sv": r.min_sv,
                "dimV": r.dim_v,
                "enlargements": r.enlargements,
                "obstruction": r.obstruction.as_ref().map(io::record_to_json),
                "certificate": r.certificate,
            });
            report.set("result", doc.clone());
            save(out, &doc)?;
            if let (Some(p), Some(k)) = (perturbation, &r.k) {
                io::write_json(p, &io::morphism_to_json(k))?;
            }
            Ok(())
        }
        Command::Bvp(cmd) => bvp_cmd(cmd, cfg, report),
        Command::Axioms(AxiomsCmd::Verify {
            trials,
            inject_break,
            out,
        }) => {
            *report = run_axiom_suite(cfg.seed, *trials, *inject_break, cfg)?;
            save(out, &report.to_json())
        }
        Command::Invariants(InvariantsCmd::Reduce { bundle, minus, out }) => {
            let e = io::load_bundle(bundle)?;
            let r = match minus {
                Some(p) => virtual_record(&e, &io::load_bundle(p)?, cfg)?,
                None => field_record(&e, cfg)?,
            };
            report.record("reduced", r.clone());
            save(out, &io::record_to_json(&r))
        }
    }
}

fn mesh_cmd(cmd: &MeshCmd, report: &mut RunReport) -> Result<()> {
    match cmd {
        MeshCmd::Make {
            kind,
            m,
            level,
            t_steps,
            out,
        } => {
            let mesh = match kind {
                MeshKindArg::Circle => circle_mesh(*m)?,
                MeshKindArg::Interval => interval_mesh(*m)?,
                MeshKindArg::Sphere => sphere_mesh(*level)?,
                MeshKindArg::Product => product_with_interval(&circle_mesh(*m)?, *t_steps)?,
            };
            report.set("vertices", json!(mesh.vertices));
            report.set("edges", json!(mesh.edges.len()));
            report.set("faces", json!(mesh.faces.len()));
            report.set("loops", json!(mesh.loops.len()));
            report.set("euler_characteristic", json!(mesh.euler_characteristic()));
            save(out, &io::mesh_to_json(&mesh))
        }
        MeshCmd::PowerMap { m, degree, out } => {
            let f = circle_power_map(*m, *degree)?;
            save(out, &io::map_to_json(&f))
        }
        MeshCmd::Slice { mesh, t, out } => {
            let f = io::load_mesh(mesh)?.slice(*t)?;
            save(out, &io::map_to_json(&f))
        }
    }
}

fn bundle_cmd(cmd: &BundleCmd, cfg: &ToleranceConfig, report: &mut RunReport) -> Result<()> {
    match cmd {
        BundleCmd::Make {
            kind,
            base,
            level,
            ambient,
            rank,
            twisted,
            scalar,
            out,
        } => {
            let e = match kind {
                BundleKind::Trivial => ProjectionField::trivial(base.load()?, *ambient, (*scalar).into()),
                BundleKind::Moebius => moebius(base.load()?),
                BundleKind::Bott => {
                    let (mesh, coords) = sphere_mesh_with_coords(*level)?;
                    bott(Arc::new(mesh), &coords)?
                }
                BundleKind::Random => {
                    let mesh = base.load()?;
                    let points = chart(&mesh)?;
                    let recipe = BundleRecipe {
                        ambient: *ambient,
                        rank: *rank,
                        twisted: *twisted,
                    };
                    let scalar = (*scalar).into();
                    let amp = FamilySpec::new(recipe, recipe, scalar).gauge_amp;
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    random_bundle(mesh, &points, recipe, scalar, amp, &mut rng)?
                }
            }
            .validated(cfg)?;
            describe_bundle(report, &e);
            record_if_decidable(report, "bundle", &e, cfg);
            save(out, &io::bundle_to_json(&e))
        }
        BundleCmd::Validate { bundle } => {
            let e = io::load_bundle(bundle)?;
            let v = e.validate(cfg);
            let worst = |xs: &[f64]| xs.iter().copied().fold(0.0, f64::max);
            report.check(
                "idempotency",
                worst(&v.idempotency) <= cfg.idem_tol,
                Some(worst(&v.idempotency)),
            );
            report.check(
                "hermiticity",
                worst(&v.hermiticity) <= cfg.idem_tol,
                Some(worst(&v.hermiticity)),
            );
            report.check("rank-constant", v.component_ranks.iter().all(Option::is_some), None);
            let gap = v.max_edge_gap();
            report.check("edge-gap", gap <= cfg.max_edge_gap(), Some(gap));
            report.set("failures", json!(v.failures));
            report.set("component_ranks", json!(v.component_ranks));
            describe_bundle(report, &e);
            if v.passed() {
                record_if_decidable(report, "bundle", &e, cfg);
            }
            Ok(())
        }
        BundleCmd::Complement { bundle, within, out } => {
            let e = io::load_bundle(bundle)?;
            let w = within.as_deref().map(io::load_bundle).transpose()?;
            let c = complement(&e, w.as_ref(), cfg)?;
            describe_bundle(report, &c);
            record_if_decidable(report, "complement", &c, cfg);
            save(out, &io::bundle_to_json(&c))
        }
        BundleCmd::Pullback { bundle, map, out } => {
            let e = io::load_bundle(bundle)?;
            let f = io::load_map(map)?;
            let p = pullback_bundle(&f, &e)?.validated(cfg)?;
            describe_bundle(report, &p);
            record_if_decidable(report, "pullback", &p, cfg);
            save(out, &io::bundle_to_json(&p))
        }
    }
}

fn morphism_cmd(cmd: &MorphismCmd, cfg: &ToleranceConfig, report: &mut RunReport) -> Result<()> {
    let (l, out) = match cmd {
        MorphismCmd::Make {
            kind,
            domain,
            target,
            base,
            domain_ambient,
            domain_rank,
            domain_twisted,
            target_ambient,
            target_rank,
            target_twisted,
            inner_rank,
            scalar,
            out,
        } => {
            let need = |p: &Option<PathBuf>, what: &str| -> Result<ProjectionField> {
                match p {
                    Some(p) => io::load_bundle(p),
                    None => Err(Error::InvalidSpec(format!("--{what} is required for this kind"))),
                }
            };
            let l = match kind {
                MorphismKind::Identity => identity_morphism(&need(domain, "domain")?),
                MorphismKind::Zero => {
                    let e = need(domain, "domain")?;
                    let f = need(target, "target")?;
                    let mats = vec![linalg::zeros(f.ambient_dim, e.ambient_dim); e.len()];
                    make_morphism(&e, &f, mats, cfg)?
                }
                MorphismKind::Random => match (domain, target) {
                    (Some(_), _) | (_, Some(_)) => {
                        let e = need(domain, "domain")?;
                        let f = need(target, "target")?;
                        let points = chart(&e.base)?;
                        let amp = FamilySpec::new(BundleRecipe::trivial(1, 1), BundleRecipe::trivial(1, 1), e.scalar)
                            .matrix_amp;
                        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                        random_morphism(&e, &f, &points, amp, *inner_rank, &mut rng, cfg)?
                    }
                    (None, None) => {
                        let mut spec = FamilySpec::new(
                            BundleRecipe {
                                ambient: *domain_ambient,
                                rank: *domain_rank,
                                twisted: *domain_twisted,
                            },
                            BundleRecipe {
                                ambient: *target_ambient,
                                rank: *target_rank,
                                twisted: *target_twisted,
                            },
                            (*scalar).into(),
                        );
                        spec.inner_rank = *inner_rank;
                        random_family(base.load()?, &spec, cfg.seed, cfg)?
                    }
                },
            };
            (l, out)
        }
        MorphismCmd::Compose { first, second, out } => {
            let l = io::load_morphism(first)?;
            let m = io::load_morphism(second)?;
            (compose(&m, &l)?, out)
        }
        MorphismCmd::Pullback { morphism, map, out } => {
            let l = io::load_morphism(morphism)?;
            let f = io::load_map(map)?;
            (pullback_morphism(&f, &l)?, out)
        }
        MorphismCmd::Perturb {
            morphism,
            rank,
            magnitude,
            out,
        } => {
            let l = io::load_morphism(morphism)?;
            let k = random_compact_perturbation(&l, *rank, *magnitude, cfg.seed)?;
            let rank_k = k.mats.iter().map(|m| linalg::numerical_rank(m, cfg)).max().unwrap_or(0);
            report.check("perturbation-rank", rank_k <= *rank, Some(rank_k as f64));
            (l.add(&k)?, out)
        }
    };
    describe_morphism(report, &l);
    save(out, &io::morphism_to_json(&l))
}

fn index_cmd(cmd: &IndexCmd, cfg: &ToleranceConfig, report: &mut RunReport) -> Result<()> {
    match cmd {
        IndexCmd::Compute { morphism, out } => {
            let l = io::load_morphism(morphism)?;
            let comp = index_class_detailed(&l, cfg)?;
            let doc = ClassDoc::of(&comp);
            report.record("class", doc.record.clone());
            report.set("dimV", json!(doc.dim_v));
            report.set("margin", json!(doc.margin));
            report.set("stabilized", json!(comp.stabilized));
            save(out, &io::class_to_json(&doc))
        }
        IndexCmd::Welldef { morphism, seeds } => {
            let l = io::load_morphism(morphism)?;
            let seeds = match seeds.as_deref() {
                Some([a, b]) => (*a, *b),
                _ => (cfg.seed, cfg.seed.wrapping_add(1)),
            };
            report.set("seeds", json!([seeds.0, seeds.1]));
            match well_definedness_check(&l, seeds, cfg) {
                Ok(r) => {
                    report.record("first", r.first.class.reduced);
                    report.record("second", r.second.class.reduced);
                    report.set("dimV", json!([r.first.transversal.dim, r.second.transversal.dim]));
                    report.check("well-defined", true, None);
                    Ok(())
                }
                Err(Error::WellDefinedness(msg)) => {
                    report.fail_with(
                        "well-defined",
                        json!({"message": msg, "morphism": io::morphism_to_json(&l)}),
                    );
                    Ok(())
                }
                Err(e) => Err(e),
            }
        }
        IndexCmd::Classical { morphism } => {
            let l = io::load_morphism(morphism)?;
            let general = index_class_detailed(&l, cfg)?.class.reduced;
            let classical = classical_index_class(&l, cfg)?.reduced;
            report.check("classical-equals-general", general == classical, None);
            report.record("general", general);
            report.record("classical", classical);
            Ok(())
        }
    }
}

fn boundary(kind: BoundaryKind, m: usize, level: usize) -> Result<BvpSpec> {
    let e = match kind {
        BoundaryKind::Trivial => constant_line(Arc::new(circle_mesh(m)?), &[1.0, 0.0], Scalar::Real),
        BoundaryKind::Moebius => moebius(Arc::new(circle_mesh(m)?)),
        BoundaryKind::Bott => {
            let (mesh, coords) = sphere_mesh_with_coords(level)?;
            bott(Arc::new(mesh), &coords)?
        }
    };
    // Grid is set by the caller.
    BvpSpec::new(e, 1, 4)
}

fn spec_from_file(path: &Path) -> Result<BvpSpec> {
    let v = io::read_json(path)?;
    let origin = path.display();
    let field = |key: &str| {
        v.get(key).ok_or_else(|| Error::Parse {
            path: format!("{origin}#/{key}"),
            message: "missing field".into(),
        })
    };
    let count = |key: &str| -> Result<usize> {
        field(key)?.as_u64().map(|n| n as usize).ok_or_else(|| Error::Parse {
            path: format!("{origin}#/{key}"),
            message: "expected a non-negative integer".into(),
        })
    };
    let e = io::bundle_from_json(field("boundary_bundle")?).map_err(|e| match e {
        Error::Parse { path, message } => Error::Parse {
            path: format!("{origin}#/boundary_bundle{path}"),
            message,
        },
        other => other,
    })?;
    BvpSpec::new(e, count("n")?, count("grid")?)
}

fn bvp_record(report: &mut RunReport, tag: &str, r: &BvpReport) {
    report.record(format!("{tag}computed"), r.computed.clone());
    report.record(format!("{tag}expected"), r.expected.clone());
}

fn bvp_run(
    spec: BvpSpec,
    refine: bool,
    cfg: &ToleranceConfig,
    report: &mut RunReport,
    out: &Option<PathBuf>,
) -> Result<()> {
    let r = bvp_check(&spec, cfg)?;
    bvp_record(report, "", &r);
    report.check("class-matches-expected", r.computed == r.expected, None);
    report.set("grid", json!(spec.grid));
    report.set("n", json!(spec.n));
    report.set("status", json!(r.status.as_str()));
    report.set("dimV", json!(r.dim_v));
    report.set("stably_trivial", json!(r.stably_trivial));
    report.set("certificate", json!(r.certificate));
    if let Some(min_sv) = r.min_sv {
        report.set("min_sv", json!(min_sv));
        report.check("invertible", min_sv >= cfg.sigma_floor, Some(min_sv));
    }
    report.check(
        "status-matches-triviality",
        (r.status == ParametrixStatus::Built) == r.stably_trivial,
        None,
    );
    if refine {
        let fine = bvp_check(&spec.with_grid(2 * spec.grid)?, cfg)?;
        bvp_record(report, "refined-", &fine);
        report.check("grid-independent", fine.computed == r.computed, None);
    }
    save(out, &report.to_json())
}

fn bvp_cmd(cmd: &BvpCmd, cfg: &ToleranceConfig, report: &mut RunReport) -> Result<()> {
    match cmd {
        BvpCmd::Demo {
            bundle,
            m,
            level,
            grid,
            refine,
            out,
        } => {
            let spec = boundary(*bundle, *m, *level)?.with_grid(*grid)?;
            bvp_run(spec, *refine, cfg, report, out)
        }
        BvpCmd::Check { spec, refine, out } => bvp_run(spec_from_file(spec)?, *refine, cfg, report, out),
    }
}

fn main() {
    let cli = Cli::parse();
    let name = command_name(&cli.command);
    let (mut report, result) = match config(&cli) {
        Ok(cfg) => {
            let mut report = RunReport::new(name, &cfg);
            let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.threads.max(1)).build();
            let result = match pool {
                Ok(pool) => pool.install(|| run(&cli, &cfg, &mut report)),
                Err(e) => Err(Error::Internal(format!("thread pool: {e}"))),
            };
            (report, result)
        }
        Err(e) => (RunReport::new(name, &ToleranceConfig::default()), Err(e)),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        report.set_error(e);
    }
    report.finish();
    let doc = report.to_json();
    let text = io::to_canonical(&doc).unwrap_or_else(|_| doc.to_string());
    if !cli.quiet {
        println!("{text}");
    }
    if let Some(p) = &cli.report {
        if let Err(e) = std::fs::write(p, &text) {
            eprintln!("error: {}: {e}", p.display());
            std::process::exit(Outcome::InputError.exit_code());
        }
    }
    std::process::exit(report.outcome().exit_code());
}
