//! One function per subcommand. Every command writes into a single output
//! directory and nothing else; reruns overwrite with identical bytes.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use radspec_core::flowlines::{certify, seed_starts};
use radspec_core::pipeline::{direct_oracle, extract_padded, from_invariants, invert_extracted, oracle_invariants, ExtractionMeta};
use radspec_core::potentials::{pushforward_density, QuadBox};
use radspec_core::reconstruct::{
    build_report, gradient_modulus_profile, isoperimetric_defect, relative_defect, PipelineOutputs, ProvenanceChain,
    Source, StageTolerances,
};
use radspec_core::spectra::{exact_harmonic_spectrum, radial_fd_spectrum, read_spectra, write_spectra};
use radspec_core::traces::InvariantTable;
use radspec_core::{Curve, Error, UniformGrid};

use crate::config::{RunConfig, SpectrumSource};
use crate::svg::{Chart, Series};

/// A command failure with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_IO: u8 = 4;

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }

    fn context(mut self, ctx: impl fmt::Display) -> Self {
        self.message = format!("{ctx}: {}", self.message);
        self
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) => EXIT_IO,
            e if e.is_configuration() => EXIT_CONFIG,
            _ => EXIT_NUMERICAL,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

type Outcome = std::result::Result<(), Failure>;

pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
    pub spectra: Option<PathBuf>,
    pub input: Option<PathBuf>,
}

impl Context {
    /// Directory holding the curves a command consumes: `--input`, else the
    /// output directory.
    fn input_dir(&self) -> &Path {
        self.input.as_deref().unwrap_or(&self.out)
    }

    fn create_out(&self) -> Outcome {
        fs::create_dir_all(&self.out).map_err(|e| Failure::from(e).context(self.out.display()))
    }

    fn write(&self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> radspec_core::Result<()>) -> Outcome {
        let path = self.out.join(name);
        let file = File::create(&path).map_err(|e| Failure::from(e).context(path.display()))?;
        let mut w = BufWriter::new(file);
        body(&mut w).map_err(|e| Failure::from(e).context(path.display()))?;
        w.flush().map_err(|e| Failure::from(e).context(path.display()))?;
        Ok(())
    }

    fn write_curve(&self, name: &str, c: &Curve) -> Outcome {
        self.write(name, |w| c.write_csv(w))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Outcome {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            w.write_all(b"\n")?;
            Ok(())
        })
    }

    fn write_chart(&self, name: &str, chart: Chart) -> Outcome {
        self.write(name, |w| Ok(w.write_all(chart.render().as_bytes())?))
    }
}

fn require(path: PathBuf) -> std::result::Result<PathBuf, Failure> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Failure::config(format!("missing input {}", path.display())))
    }
}

fn open(path: &Path) -> std::result::Result<BufReader<File>, Failure> {
    Ok(BufReader::new(File::open(path).map_err(|e| Failure::from(e).context(path.display()))?))
}

fn read_curve(dir: &Path, name: &str, label: &str) -> std::result::Result<Curve, Failure> {
    let path = require(dir.join(name))?;
    let c = Curve::read_csv(open(&path)?, label).map_err(|e| Failure::from(e).context(path.display()))?;
    // all-zero estimates are how a curve without one is written
    Ok(match c.err_est() {
        Some(e) if e.iter().all(|x| *x == 0.0) => Curve::new(label, *c.grid(), c.values().to_vec())?,
        _ => c,
    })
}

fn pairs(c: &Curve) -> Vec<[f64; 2]> {
    c.points().map(|(x, y)| [x, y]).collect()
}

pub fn forward(ctx: &Context) -> Outcome {
    let cfg = &ctx.config;
    let s = cfg.spectra()?;
    let n = cfg.dimension();
    let spectra = match cfg.spectrum_source()? {
        SpectrumSource::Exact => s
            .h
            .iter()
            .map(|&h| exact_harmonic_spectrum(n, h, s.lambda_max).map_err(|e| Failure::from(e).context(format!("h = {h}"))))
            .collect::<std::result::Result<Vec<_>, _>>()?,
        SpectrumSource::FiniteDifference => {
            let profile = cfg
                .radial_profile()?
                .ok_or_else(|| Failure::config("finite-difference spectra need a radial potential family"))?;
            let params = cfg.solver_params()?;
            s.h.iter()
                .map(|&h| {
                    radial_fd_spectrum(&profile, h, s.lambda_max, params)
                        .map_err(|e| Failure::from(e).context(format!("h = {h}")))
                })
                .collect::<std::result::Result<Vec<_>, _>>()?
        }
    };
    ctx.create_out()?;
    write_spectra(&ctx.out, &spectra)?;
    Ok(())
}

pub fn oracle(ctx: &Context) -> Outcome {
    let cfg = &ctx.config;
    let p = cfg.analytic()?;
    let grid = cfg.lambda_grid()?;
    let quad = cfg.quadrature()?;
    let (a, b) = oracle_invariants(&p, &grid, quad)?;
    // the level-set oracles are undefined at the minimum itself
    let levels = UniformGrid::new(grid.x(1), grid.max(), grid.len() - 1)?;
    let direct = direct_oracle(&p, &levels, quad, cfg.level_set())?;
    ctx.create_out()?;
    ctx.write_curve("A.csv", &a)?;
    ctx.write_curve("B.csv", &b)?;
    for (name, c) in [("oracle_v.csv", &direct.volume), ("oracle_I1.csv", &direct.i1), ("oracle_I2.csv", &direct.i2)] {
        ctx.write_curve(name, c.as_ref().expect("direct oracle fills every curve"))?;
    }
    Ok(())
}

pub const INVARIANTS_CSV: &str = "invariants.csv";
pub const EXTRACTION_JSON: &str = "extraction.json";

pub fn extract(ctx: &Context) -> Outcome {
    let dir = ctx.spectra.as_ref().ok_or_else(|| Failure::config("extract needs --spectra <dir>"))?;
    let spectra = read_spectra(dir)?;
    let inv = ctx.config.invariants()?;
    let (table, meta) = extract_padded(&spectra, &ctx.config.lambda_grid()?, inv.eps)?;
    ctx.create_out()?;
    ctx.write(INVARIANTS_CSV, |w| table.write_csv(w))?;
    ctx.write_json(EXTRACTION_JSON, &meta)
}

pub fn invert(ctx: &Context) -> Outcome {
    let cfg = &ctx.config;
    let dir = ctx.input_dir();
    let outputs = if dir.join(INVARIANTS_CSV).is_file() {
        let meta: ExtractionMeta = serde_json::from_reader(open(&require(dir.join(EXTRACTION_JSON))?)?)
            .map_err(|e| Failure::config(format!("{EXTRACTION_JSON}: {e}")))?;
        let table = InvariantTable::read_csv(open(&dir.join(INVARIANTS_CSV))?, meta.dimension)?;
        invert_extracted(&table, &meta, &cfg.inversion)?
    } else if dir.join("A.csv").is_file() {
        let a = read_curve(dir, "A.csv", "A")?;
        let b = read_curve(dir, "B.csv", "B")?;
        from_invariants(&a, &b, cfg.dimension(), &cfg.inversion, Source::Oracle)?
    } else {
        return Err(Failure::config(format!(
            "no invariant curves in {} (expected {INVARIANTS_CSV} or A.csv and B.csv)",
            dir.display()
        )));
    };
    ctx.create_out()?;
    ctx.write_curve("v.csv", outputs.volume.as_ref().expect("inversion fills v"))?;
    ctx.write_curve("I1.csv", outputs.i1.as_ref().expect("inversion fills I1"))?;
    ctx.write_curve("I2.csv", outputs.i2.as_ref().expect("inversion fills I2"))?;
    ctx.write_json("provenance.json", outputs.provenance.as_ref().expect("inversion records provenance"))
}

pub fn reconstruct(ctx: &Context) -> Outcome {
    let cfg = &ctx.config;
    let dir = ctx.input_dir();
    let volume = read_curve(dir, "v.csv", "v")?;
    let i1 = read_curve(dir, "I1.csv", "I1")?;
    let i2 = read_curve(dir, "I2.csv", "I2")?;
    let provenance: ProvenanceChain = serde_json::from_reader(open(&require(dir.join("provenance.json"))?)?)
        .map_err(|e| Failure::config(format!("provenance.json: {e}")))?;
    let outputs = PipelineOutputs {
        dimension: cfg.dimension(),
        volume: Some(volume),
        i1: Some(i1),
        i2: Some(i2),
        provenance: Some(provenance),
    };
    let reference = cfg.radial_profile()?;
    let report = build_report(&outputs, reference.as_ref(), StageTolerances::default())
        .map_err(|e| Failure::from(e).context("report"))?;
    ctx.create_out()?;
    ctx.write("report.json", |w| report.write_json(w))?;
    ctx.write("profile.csv", |w| report.write_profile_csv(w))?;

    let exact: Vec<[f64; 2]> = match &reference {
        Some(r) => report.profile.iter().map(|[x, _]| [*x, r.eval(*x)]).collect(),
        None => Vec::new(),
    };
    let mut series = vec![Series { name: "recovered", points: &report.profile, dashed: false }];
    if reference.is_some() {
        series.push(Series { name: "reference", points: &exact, dashed: true });
    }
    ctx.write_chart("R.svg", Chart { title: "Radial profile", x_label: "r", y_label: "R(r)", series })?;
    ctx.write_chart(
        "D.svg",
        Chart {
            title: "Isoperimetric defect",
            x_label: "s",
            y_label: "D(s)",
            series: vec![Series { name: "D", points: &report.defect, dashed: false }],
        },
    )?;
    ctx.write_chart(
        "F.svg",
        Chart {
            title: "Squared gradient on level sets",
            x_label: "s",
            y_label: "F(s)",
            series: vec![Series { name: "F", points: &report.f, dashed: false }],
        },
    )
}

#[derive(Serialize)]
struct Diagnosis {
    max_relative_defect: f64,
    /// `max |D| / err_est` over the levels; at most 1 for a radial potential.
    max_defect_to_tolerance: f64,
    radial: bool,
    pushforward_bin_width: f64,
    pushforward_total_mass: f64,
    /// `[level, mass]` of bins flagged as atoms.
    flagged_levels: Vec<[f64; 2]>,
    provenance: ProvenanceChain,
}

pub fn diagnose(ctx: &Context) -> Outcome {
    let cfg = &ctx.config;
    let p = cfg.analytic()?;
    let quad = cfg.quadrature()?;
    let grid = cfg.diagnose.levels.scaled(p.lambda0())?;
    let out = direct_oracle(&p, &grid, quad, cfg.level_set())?;
    let (v, i1, i2) = (out.volume.as_ref().unwrap(), out.i1.as_ref().unwrap(), out.i2.as_ref().unwrap());
    let d = isoperimetric_defect(i1, i2, v, p.dimension())?;
    let rel = relative_defect(&d, i1, i2)?;
    let f = gradient_modulus_profile(i1, i2)?;
    let push = pushforward_density(&p, &QuadBox::of(&p), cfg.diagnose.bins, quad)?;

    let err = d.err_est().expect("oracle inputs carry error estimates");
    let ratio = d.values().iter().zip(err).map(|(x, e)| x.abs() / e).fold(0.0, f64::max);
    let within = d.values().iter().zip(err).all(|(x, e)| x.abs() <= *e);
    let diagnosis = Diagnosis {
        max_relative_defect: rel.values().iter().map(|x| x.abs()).fold(0.0, f64::max),
        max_defect_to_tolerance: ratio,
        radial: within,
        pushforward_bin_width: push.bin_width(),
        pushforward_total_mass: push.total_mass(),
        flagged_levels: push.flagged_levels().into_iter().map(|(s, m)| [s, m]).collect(),
        provenance: out.provenance.clone().expect("direct oracle records provenance"),
    };
    if !push.flagged.is_empty() {
        eprintln!("warning: {} pushforward bins flagged as atoms", push.flagged.len());
    }

    ctx.create_out()?;
    ctx.write_curve("defect.csv", &d)?;
    ctx.write_curve("relative_defect.csv", &rel)?;
    ctx.write_curve("F.csv", &f)?;
    ctx.write_curve("pushforward.csv", &push.density)?;
    ctx.write_json("diagnose.json", &diagnosis)?;
    let (dp, fp, pp) = (pairs(&d), pairs(&f), pairs(&push.density));
    ctx.write_chart(
        "D.svg",
        Chart {
            title: "Isoperimetric defect",
            x_label: "s",
            y_label: "D(s)",
            series: vec![Series { name: "D", points: &dp, dashed: false }],
        },
    )?;
    ctx.write_chart(
        "F.svg",
        Chart {
            title: "Squared gradient on level sets",
            x_label: "s",
            y_label: "F(s)",
            series: vec![Series { name: "F = I2 / I1", points: &fp, dashed: false }],
        },
    )?;
    ctx.write_chart(
        "pushforward.svg",
        Chart {
            title: "Pushforward of Lebesgue measure",
            x_label: "s",
            y_label: "density",
            series: vec![Series { name: "density", points: &pp, dashed: false }],
        },
    )
}

pub fn flowlines(ctx: &Context) -> Outcome {
    let cfg = &ctx.config;
    let fl = &cfg.flowlines;
    let p = cfg.analytic()?;
    let mut starts = fl.starts.clone();
    if let Some(bad) = starts.iter().find(|x| x.len() != p.dimension()) {
        return Err(Failure::config(format!("start {bad:?} does not have dimension {}", p.dimension())));
    }
    if starts.is_empty() && fl.count == 0 {
        eprintln!("warning: no trajectories requested; nothing to do");
        return Ok(());
    }
    if fl.count > 0 {
        starts.extend(seed_starts(&p, fl.s0 * p.lambda0(), fl.count)?);
    }
    let grid = fl.levels.scaled(p.lambda0())?;
    let out = direct_oracle(&p, &grid, cfg.quadrature()?, cfg.level_set())?;
    let f = gradient_modulus_profile(out.i1.as_ref().unwrap(), out.i2.as_ref().unwrap())?;
    let (trajs, cert) = certify(&p, &starts, &f, fl.t_end, fl.dt, fl.thresholds)?;
    if !cert.accepted {
        eprintln!("certificate rejects: the flowlines are not those of a radial potential");
    }
    ctx.create_out()?;
    for (k, t) in trajs.iter().enumerate() {
        ctx.write(&format!("trajectory_{k:03}.csv"), |w| t.write_csv(w))?;
    }
    ctx.write_curve("F.csv", &f)?;
    ctx.write("certificate.json", |w| cert.write_json(w))
}
