use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use spinphoton::analysis::{analyze_dataset, error_budget, fit_ellipse, parity_curve, rate_chain, BasisResult};
use spinphoton::config::{parse_config, ConfigFile};
use spinphoton::io::{clicks_to_string, parse_apd, parse_clicks};
use spinphoton::photonics::SpinBasis;
use spinphoton::runner::{run_experiment, StopCriterion};

use crate::manifest::{unix_now, RunManifest, MANIFEST_NAME};
use crate::report::{fmt, Report};
use crate::Format;

pub const CLICKS_NAME: &str = "clicks.csv";
pub const PARITY_NAME: &str = "parity.csv";
const DEFAULT_HERALDS: u64 = 5000;
const PARITY_BINS: usize = 11;

fn load_config(path: Option<&Path>) -> Result<ConfigFile> {
    let Some(path) = path else { return Ok(ConfigFile::default()) };
    let text = fs::read_to_string(path).with_context(|| format!("cannot read config `{}`", path.display()))?;
    parse_config(&text).with_context(|| format!("invalid config `{}`", path.display()))
}

pub fn simulate(
    config: Option<&Path>,
    seed: Option<u64>,
    heralds: Option<u64>,
    attempts: Option<u64>,
    out: &Path,
    format: Format,
) -> Result<String> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.run.seed = s;
    }
    let stop = match (heralds, attempts) {
        (Some(h), _) => StopCriterion::Heralds(h),
        (None, Some(a)) => StopCriterion::Attempts(a),
        _ => cfg.stop().unwrap_or(StopCriterion::Heralds(DEFAULT_HERALDS)),
    };
    if matches!(stop, StopCriterion::Heralds(0) | StopCriterion::Attempts(0)) {
        bail!("the stop criterion must be positive");
    }
    let started = unix_now();
    let ds = run_experiment(&cfg.experiment(), stop).context("simulation failed")?;

    fs::create_dir_all(out).with_context(|| format!("cannot create output directory `{}`", out.display()))?;
    let clicks_path = out.join(CLICKS_NAME);
    let body = clicks_to_string(&[format!("manifest = {MANIFEST_NAME}")], &ds.records);
    fs::write(&clicks_path, body).with_context(|| format!("cannot write `{}`", clicks_path.display()))?;

    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.run.seed,
        stop,
        started_unix_s: started,
        finished_unix_s: unix_now(),
        outputs: vec![CLICKS_NAME.into()],
        summary: ds.summary.clone(),
        config: cfg,
    };
    let manifest_path = out.join(MANIFEST_NAME);
    fs::write(&manifest_path, manifest.to_toml())
        .with_context(|| format!("cannot write `{}`", manifest_path.display()))?;

    let s = &ds.summary;
    let mut r = Report::default();
    r.push("attempts", s.attempts)
        .push("heralds", s.heralds)
        .num("herald_probability", s.herald_probability)
        .num("rate_hz", s.rate_hz)
        .num("rate_without_readout_hz", s.rate_without_readout_hz)
        .push("clicks", clicks_path.display())
        .push("manifest", manifest_path.display());
    Ok(r.render(format))
}

pub fn budget(config: Option<&Path>, format: Format) -> Result<String> {
    let cfg = load_config(config)?;
    let b = error_budget(&cfg.budget).context("error budget")?;
    let c = rate_chain(&cfg.rate).context("rate chain")?;
    let mut r = Report::default();
    r.num("p1", b.p1)
        .num("p2", b.p2)
        .num("f_l", b.f_l)
        .num("e_xy_pred", b.e_xy_pred)
        .num("e_z_pred", b.e_z_pred)
        .num("f_pred", b.f_pred)
        .num("p_detect", c.p_detect)
        .num("p_ent_pred", c.p_ent_pred)
        .num("rate_pred_hz", c.rate_pred_hz);
    if let Some(m) = c.rate_measured_hz {
        r.num("rate_measured_hz", m);
    }
    r.num("rate_improved_hz", c.rate_improved_hz);
    Ok(r.render(format))
}

fn basis_rows(r: &mut Report, name: &str, b: &BasisResult) {
    r.num(format!("{name}_raw"), b.raw)
        .num(format!("{name}_raw_sigma"), b.raw_sigma)
        .num(name, b.corrected)
        .num(format!("{name}_sigma"), b.corrected_sigma)
        .push(format!("{name}_clamped"), b.clamped)
        .push(format!("{name}_n"), b.n);
}

pub fn analyze(clicks: &Path, config: Option<&Path>, out: Option<&Path>, format: Format) -> Result<String> {
    let cfg = load_config(config)?;
    let text = fs::read_to_string(clicks).with_context(|| format!("cannot read clicks `{}`", clicks.display()))?;
    let records = parse_clicks(&text).with_context(|| format!("invalid clicks `{}`", clicks.display()))?;
    let a = analyze_dataset(&records, cfg.readout.f_up, cfg.readout.f_down, 0.0)
        .with_context(|| format!("cannot analyze `{}`", clicks.display()))?;

    let mut r = Report::default();
    r.push("records", records.len());
    basis_rows(&mut r, "e_x", &a.x);
    basis_rows(&mut r, "e_y", &a.y);
    basis_rows(&mut r, "e_z", &a.z);
    r.num("fidelity", a.fidelity).num("fidelity_sigma", a.fidelity_sigma);

    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("cannot create `{}`", dir.display()))?;
        let mut table = String::from("basis,phi_center,parity,sigma,n\n");
        for basis in [SpinBasis::X, SpinBasis::Y] {
            for bin in parity_curve(&records, basis, PARITY_BINS, 0.0) {
                table.push_str(&format!(
                    "{},{:.6},{},{},{}\n",
                    basis.label(),
                    bin.phi_center,
                    fmt(bin.parity),
                    fmt(bin.sigma),
                    bin.n
                ));
            }
        }
        let path = dir.join(PARITY_NAME);
        fs::write(&path, table).with_context(|| format!("cannot write `{}`", path.display()))?;
        r.push("parity", path.display());
    }
    Ok(r.render(format))
}

pub fn phases(apd: &Path, format: Format) -> Result<String> {
    let text = fs::read_to_string(apd).with_context(|| format!("cannot read APD file `{}`", apd.display()))?;
    let points = parse_apd(&text).with_context(|| format!("invalid APD file `{}`", apd.display()))?;
    let fit = fit_ellipse(&points).with_context(|| format!("ellipse fit failed for `{}`", apd.display()))?;
    let mut s = String::new();
    match format {
        Format::Kv => {
            s.push_str(&format!("delta_phi = {:.6}\npoints = {}\n", fit.delta_phi, points.len()));
            for (i, phi) in fit.phases.iter().enumerate() {
                s.push_str(&format!("phi.{i} = {phi:.6}\n"));
            }
        }
        Format::Csv => {
            s.push_str(&format!("# delta_phi = {:.6}\nindex,apd1,apd2,phi\n", fit.delta_phi));
            for (i, ((a, b), phi)) in points.iter().zip(&fit.phases).enumerate() {
                s.push_str(&format!("{i},{a:.6},{b:.6},{phi:.6}\n"));
            }
        }
    }
    Ok(s)
}
