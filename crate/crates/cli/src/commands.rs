use std::path::Path;

use serde::Serialize;
use tcqsim_core::analysis::{self, AnalysisError, ChiFitFixed, DephasingInput, FitResult, NoiseCalibrationFixed};
use tcqsim_core::device::{self, ChiMode, DeviceError};
use tcqsim_core::experiments::{self, ExperimentError, SweepOptions};
use tcqsim_core::{DimensionLayout, TcqParams};

use crate::config::{require, FixturesConfig, Loaded, RunConfig};
use crate::{CliError, Experiment, FitMode, Outputs};

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    command: &'a str,
    config: RunConfig,
    results: T,
}

fn summary<T: Serialize>(command: &str, loaded: &Loaded, results: T) -> Result<Vec<u8>, CliError> {
    json_bytes(&Summary {
        command,
        config: loaded.resolved(),
        results,
    })
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(CliError::numeric)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write(&mut buf).map_err(CliError::numeric)?;
    Ok(buf)
}

fn device_err(e: DeviceError) -> CliError {
    match e {
        DeviceError::InvalidParams(m) => CliError::config(m),
        other => CliError::numeric(other),
    }
}

fn experiment_err(e: ExperimentError) -> CliError {
    match e {
        ExperimentError::InvalidGrid(_) | ExperimentError::InvalidInput(_) => CliError::config(e.to_string()),
        ExperimentError::Device(d) => device_err(d),
        other => CliError::numeric(other),
    }
}

fn analysis_err(e: AnalysisError) -> CliError {
    CliError::config(e.to_string())
}

fn positive(value: f64, field: &str) -> Result<f64, CliError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(CliError::config(format!("{field} must be positive, got {value}")))
    }
}

fn non_negative(value: f64, field: &str) -> Result<f64, CliError> {
    if value >= 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(CliError::config(format!("{field} must be non-negative, got {value}")))
    }
}

// ---------------------------------------------------------------------------
// chi-sweep

#[derive(Serialize)]
struct ChiRow {
    g_minus_mhz: f64,
    chi1_mhz: f64,
    chi2_mhz: f64,
    chi_pert_mhz: f64,
    chi_num_mhz: Option<f64>,
    dispersive_valid: bool,
}

#[derive(Serialize)]
struct ChiSweepResults {
    rows: Vec<ChiRow>,
    zero_crossing_g_minus_mhz: Option<f64>,
    zero_crossing_chi_num_mhz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

pub fn chi_sweep(loaded: &Loaded) -> Result<Outputs, CliError> {
    let block = require(&loaded.config.chi_sweep, "chi_sweep")?;
    let grid = block.g_minus.increasing("chi_sweep.g_minus")?;
    if grid[0] < 0.0 {
        return Err(CliError::config("chi_sweep.g_minus must be non-negative"));
    }
    if block.numeric_dims.len() != 3 || block.numeric_dims.iter().any(|&d| d < 3) {
        return Err(CliError::config(
            "chi_sweep.numeric_dims must list three dimensions >= 3",
        ));
    }
    let layout = DimensionLayout::new(&block.numeric_dims).map_err(|e| CliError::config(e.to_string()))?;
    let device = &loaded.device;

    let mut rows = Vec::with_capacity(grid.len());
    let mut numeric_failures = Vec::new();
    for &g in &grid {
        let p = device.with_g_minus(g);
        let pert = device::chi_minus_perturbative(&p).map_err(device_err)?;
        let num = match device::chi_numeric(&p, &layout) {
            Ok(n) => Some(n.chi),
            Err(e) => {
                numeric_failures.push(format!("g_minus = {g}: {e}"));
                None
            }
        };
        rows.push(ChiRow {
            g_minus_mhz: g,
            chi1_mhz: pert.chi1,
            chi2_mhz: pert.chi2,
            chi_pert_mhz: pert.chi_minus,
            chi_num_mhz: num,
            dispersive_valid: p.dispersive_valid(),
        });
    }

    let lo = grid[0];
    let hi = grid[grid.len() - 1];
    let (crossing, chi_at_crossing, mut note) = if grid.len() < 2 {
        (None, None, Some("no crossing in range".to_string()))
    } else {
        match device::find_zero_chi(device, lo, hi, &ChiMode::Perturbative) {
            Ok(g0) => {
                let num = device::chi_numeric(&device.with_g_minus(g0), &layout)
                    .ok()
                    .map(|n| n.chi);
                (Some(g0), num, None)
            }
            Err(DeviceError::Bracket { .. }) => (None, None, Some("no crossing in range".to_string())),
            Err(e) => return Err(device_err(e)),
        }
    };
    if !numeric_failures.is_empty() {
        let msg = format!("numeric chi unavailable at {}", numeric_failures.join("; "));
        note = Some(match note {
            Some(n) => format!("{n}; {msg}"),
            None => msg,
        });
    }

    let csv = csv_bytes(|out| {
        use std::io::Write;
        writeln!(out, "g_minus_MHz,chi1_MHz,chi2_MHz,chi_pert_MHz,chi_num_MHz")?;
        for r in &rows {
            let num = r.chi_num_mhz.map_or_else(|| "NaN".to_string(), |v| v.to_string());
            writeln!(
                out,
                "{},{},{},{},{}",
                r.g_minus_mhz, r.chi1_mhz, r.chi2_mhz, r.chi_pert_mhz, num
            )?;
        }
        Ok(())
    })?;
    let headline = match crossing {
        Some(g0) => format!("chi_minus crosses zero at g_minus = {g0:.4} MHz"),
        None => "no crossing in range".to_string(),
    };
    let results = ChiSweepResults {
        rows,
        zero_crossing_g_minus_mhz: crossing,
        zero_crossing_chi_num_mhz: chi_at_crossing,
        note,
    };
    let mut outputs = Outputs {
        headline,
        ..Outputs::default()
    };
    outputs.add("chi_sweep.csv", csv);
    outputs.add("chi_sweep.json", summary("chi-sweep", loaded, results)?);
    Ok(outputs)
}

// ---------------------------------------------------------------------------
// gamma-phi

#[derive(Serialize)]
struct GammaPhiCurve {
    chi_mhz: f64,
    file: String,
    gamma_phi_per_us: Vec<f64>,
    t2_model_us: Vec<f64>,
}

#[derive(Serialize)]
struct GammaPhiResults {
    kappa_mhz: f64,
    t1_us: f64,
    gamma_extra_per_us: f64,
    n_th: Vec<f64>,
    curves: Vec<GammaPhiCurve>,
}

pub fn gamma_phi(loaded: &Loaded) -> Result<Outputs, CliError> {
    let block = require(&loaded.config.gamma_phi, "gamma_phi")?;
    if block.chi.is_empty() || block.chi.iter().any(|c| !c.is_finite()) {
        return Err(CliError::config(
            "gamma_phi.chi must be a non-empty list of finite values",
        ));
    }
    let n_th = block.n_th.values("gamma_phi.n_th")?;
    for &n in &n_th {
        non_negative(n, "gamma_phi.n_th")?;
    }
    let t1 = positive(block.t1_us, "gamma_phi.t1_us")?;
    let gamma_extra = match (block.gamma_extra_per_us, block.t2_zero_us) {
        (Some(_), Some(_)) => {
            return Err(CliError::config(
                "set only one of gamma_phi.gamma_extra_per_us and gamma_phi.t2_zero_us",
            ))
        }
        (Some(g), None) => non_negative(g, "gamma_phi.gamma_extra_per_us")?,
        (None, Some(t2)) => analysis::gamma_extra_from_t2(t1, t2).map_err(analysis_err)?,
        (None, None) => 0.0,
    };
    let kappa = loaded.device.kappa;

    let mut outputs = Outputs::default();
    let mut curves = Vec::with_capacity(block.chi.len());
    for &chi in &block.chi {
        let mut rates = Vec::with_capacity(n_th.len());
        let mut t2s = Vec::with_capacity(n_th.len());
        for &n in &n_th {
            let rate = analysis::gamma_phi(&DephasingInput::new(chi, kappa, n).map_err(analysis_err)?);
            rates.push(rate);
            t2s.push(analysis::t2_from_rates(t1, rate, gamma_extra).map_err(analysis_err)?);
        }
        let file = format!("gamma_phi_chi_{chi}MHz.csv");
        let csv = csv_bytes(|out| {
            use std::io::Write;
            writeln!(out, "n_th,gamma_phi_per_us,T2_model_us")?;
            for i in 0..n_th.len() {
                writeln!(out, "{},{},{}", n_th[i], rates[i], t2s[i])?;
            }
            Ok(())
        })?;
        outputs.add(file.clone(), csv);
        curves.push(GammaPhiCurve {
            chi_mhz: chi,
            file,
            gamma_phi_per_us: rates,
            t2_model_us: t2s,
        });
    }
    outputs.headline = format!("{} dephasing curve(s) over {} n_th points", curves.len(), n_th.len());
    let results = GammaPhiResults {
        kappa_mhz: kappa,
        t1_us: t1,
        gamma_extra_per_us: gamma_extra,
        n_th,
        curves,
    };
    outputs.add("gamma_phi.json", summary("gamma-phi", loaded, results)?);
    Ok(outputs)
}

// ---------------------------------------------------------------------------
// experiment

pub fn experiment(loaded: &Loaded, which: Experiment) -> Result<Outputs, CliError> {
    match which {
        Experiment::Spectroscopy => spectroscopy(loaded),
        Experiment::Rabi => rabi(loaded),
        Experiment::T1 => decay(loaded, false),
        Experiment::Echo => decay(loaded, true),
        Experiment::NoiseSweep => noise_sweep(loaded),
    }
}

fn check_cavity_dim(dim: usize, field: &str) -> Result<usize, CliError> {
    if dim >= 2 {
        Ok(dim)
    } else {
        Err(CliError::config(format!("{field} must be >= 2, got {dim}")))
    }
}

#[derive(Serialize)]
struct SpectroscopySummary {
    chi_minus_mhz: f64,
    nbar: f64,
    cavity_drive_rad_per_us: f64,
    dressed_peak_mhz: Option<f64>,
    expected_peak_mhz: f64,
    peak_phase_shift_rad: f64,
    result: experiments::SpectroscopyResult,
}

fn spectroscopy(loaded: &Loaded) -> Result<Outputs, CliError> {
    let block = require(&loaded.config.spectroscopy, "spectroscopy")?;
    let device = &loaded.device;
    let freqs = match &block.spec_freqs {
        Some(grid) => grid.increasing("spectroscopy.spec_freqs")?,
        None => analysis::linspace(device.f_minus - 4.0, device.f_minus + 4.0, 33),
    };
    let nbar = non_negative(block.nbar, "spectroscopy.nbar")?;
    let spec_drive = non_negative(block.spec_drive, "spectroscopy.spec_drive")?;
    let dim = check_cavity_dim(block.cavity_dim, "spectroscopy.cavity_dim")?;
    if !(device.gamma1 > 0.0) {
        return Err(CliError::config("spectroscopy needs device gamma1 > 0"));
    }
    let chi = device.chi_minus().map_err(device_err)?;
    let drive = experiments::cavity_drive_for_nbar(nbar, device.kappa);
    let result = experiments::two_tone_spectroscopy(device, &freqs, drive, spec_drive, dim).map_err(experiment_err)?;

    let csv = csv_bytes(|out| result.write_csv(out))?;
    let headline = match result.dressed_peak {
        Some(f) => format!("dressed b- line at {f:.4} MHz (shift {:+.4} MHz)", f - device.f_minus),
        None => "no spectroscopic line resolved".to_string(),
    };
    let results = SpectroscopySummary {
        chi_minus_mhz: chi,
        nbar,
        cavity_drive_rad_per_us: drive,
        dressed_peak_mhz: result.dressed_peak,
        expected_peak_mhz: device.f_minus + device::ac_stark_shift(nbar, chi),
        peak_phase_shift_rad: result.peak_phase_shift,
        result,
    };
    let mut outputs = Outputs {
        headline,
        ..Outputs::default()
    };
    outputs.add("spectroscopy.csv", csv);
    outputs.add(
        "spectroscopy.json",
        summary("experiment spectroscopy", loaded, results)?,
    );
    Ok(outputs)
}

#[derive(Serialize)]
struct RabiSummary {
    max_signal: f64,
    theta1_at_max_rad: f64,
    theta2_at_max_rad: f64,
    transferred_at_max: f64,
    chi_per_state_mhz: [f64; 3],
    lo_phase_rad: f64,
    sigma_us: f64,
}

fn rabi(loaded: &Loaded) -> Result<Outputs, CliError> {
    let block = require(&loaded.config.rabi, "rabi")?;
    let theta1 = match &block.theta1 {
        Some(g) => g.values("rabi.theta1")?,
        None => experiments::default_angles(),
    };
    let theta2 = match &block.theta2 {
        Some(g) => g.values("rabi.theta2")?,
        None => experiments::default_angles(),
    };
    let sigma = positive(block.sigma_us, "rabi.sigma_us")?;
    let map = experiments::rabi_map(&loaded.device, &theta1, &theta2, sigma).map_err(experiment_err)?;
    let (i, j, max) = map.max_signal();
    let csv = csv_bytes(|out| map.write_csv(out))?;
    let results = RabiSummary {
        max_signal: max,
        theta1_at_max_rad: theta1[i],
        theta2_at_max_rad: theta2[j],
        transferred_at_max: map.transferred[i][j],
        chi_per_state_mhz: map.chi_per_state,
        lo_phase_rad: map.lo_phase,
        sigma_us: sigma,
    };
    let mut outputs = Outputs {
        headline: format!(
            "max signal {max:.4} at theta1 = {:.4}, theta2 = {:.4} rad",
            theta1[i], theta2[j]
        ),
        ..Outputs::default()
    };
    outputs.add("rabi_map.csv", csv);
    outputs.add("rabi_map.json", summary("experiment rabi", loaded, results)?);
    Ok(outputs)
}

#[derive(Serialize)]
struct DecaySummary {
    extracted_t_us: f64,
    expected_t_us: f64,
    relative_deviation: f64,
    curve: experiments::DecayCurve,
}

fn decay(loaded: &Loaded, echo: bool) -> Result<Outputs, CliError> {
    let (name, block) = if echo {
        ("echo", require(&loaded.config.echo, "echo")?)
    } else {
        ("t1", require(&loaded.config.t1, "t1")?)
    };
    let n_th = non_negative(block.n_th, &format!("{name}.n_th"))?;
    let dim = check_cavity_dim(block.cavity_dim, &format!("{name}.cavity_dim"))?;
    if !(loaded.device.gamma1 > 0.0) {
        return Err(CliError::config(format!("{name} needs device gamma1 > 0")));
    }
    let setup = experiments::DecaySetup::from_params(&loaded.device, n_th, dim).map_err(experiment_err)?;
    let expected = if echo {
        setup.analytic_t2().map_err(experiment_err)?
    } else {
        1.0 / setup.gamma1
    };
    let delays = match &block.delays_us {
        Some(g) => g.increasing(&format!("{name}.delays_us"))?,
        None => experiments::default_delays(expected),
    };
    let curve = if echo {
        experiments::echo_experiment_with(&setup, &delays)
    } else {
        experiments::t1_experiment_with(&setup, &delays)
    }
    .map_err(experiment_err)?;
    let csv = csv_bytes(|out| curve.write_csv(out))?;
    let label = if echo { "T2 echo" } else { "T1" };
    let mut outputs = Outputs {
        headline: format!("{label} = {:.4} us (expected {:.4} us)", curve.extracted_t, expected),
        ..Outputs::default()
    };
    let results = DecaySummary {
        extracted_t_us: curve.extracted_t,
        expected_t_us: expected,
        relative_deviation: (curve.extracted_t - expected) / expected,
        curve,
    };
    outputs.add(format!("{name}.csv"), csv);
    outputs.add(
        format!("{name}.json"),
        summary(&format!("experiment {name}"), loaded, results)?,
    );
    Ok(outputs)
}

fn relative_spread(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    (max - min) / max
}

#[derive(Serialize)]
struct NoiseSweepSummary {
    t1_relative_spread: f64,
    t2_relative_spread: f64,
    result: experiments::NoiseSweepResult,
}

fn noise_sweep(loaded: &Loaded) -> Result<Outputs, CliError> {
    let block = require(&loaded.config.noise_sweep, "noise_sweep")?;
    let grid = block.n_th.increasing("noise_sweep.n_th")?;
    if grid[0] < 0.0 || grid[grid.len() - 1] > 0.2 {
        return Err(CliError::config("noise_sweep.n_th must lie within [0, 0.2]"));
    }
    if block.delay_points < 4 {
        return Err(CliError::config("noise_sweep.delay_points must be >= 4"));
    }
    let dim = check_cavity_dim(block.cavity_dim, "noise_sweep.cavity_dim")?;
    if !(loaded.device.gamma1 > 0.0) {
        return Err(CliError::config("noise_sweep needs device gamma1 > 0"));
    }
    let options = SweepOptions {
        delay_points: block.delay_points,
        cavity_dim: dim,
    };
    let result = experiments::noise_sweep(&loaded.device, &grid, options).map_err(experiment_err)?;
    let csv = csv_bytes(|out| result.write_csv(out))?;
    let results = NoiseSweepSummary {
        t1_relative_spread: relative_spread(&result.t1_us),
        t2_relative_spread: relative_spread(&result.t2_us),
        result,
    };
    let mut outputs = Outputs {
        headline: format!(
            "T1 spread {:.2}%, T2 spread {:.2}% over {} points",
            100.0 * results.t1_relative_spread,
            100.0 * results.t2_relative_spread,
            grid.len()
        ),
        ..Outputs::default()
    };
    outputs.add("noise_sweep.csv", csv);
    outputs.add("noise_sweep.json", summary("experiment noise-sweep", loaded, results)?);
    Ok(outputs)
}

// ---------------------------------------------------------------------------
// fit

/// Reads two named numeric columns from a CSV file.
fn read_columns(path: &Path, x_name: &str, y_name: &str) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let shown = path.display();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::config(format!("cannot read {shown}: {e}")))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::config(format!("{shown}: {e}")))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::config(format!("{shown}: missing column `{name}`")))
    };
    let (ix, iy) = (column(x_name)?, column(y_name)?);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::config(format!("{shown}: {e}")))?;
        let parse = |i: usize, name: &str| -> Result<f64, CliError> {
            let raw = record.get(i).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::config(format!("{shown}: row {}: bad `{name}` value {raw:?}", line + 2)))
        };
        xs.push(parse(ix, x_name)?);
        ys.push(parse(iy, y_name)?);
    }
    if xs.is_empty() {
        return Err(CliError::config(format!("{shown}: no data rows")));
    }
    Ok((xs, ys))
}

#[derive(Serialize)]
struct FitReport<T: Serialize> {
    data: String,
    points: usize,
    fixed: T,
    fit: FitResult,
}

fn finish_fit<T: Serialize>(
    loaded: &Loaded,
    command: &str,
    file: &str,
    report: FitReport<T>,
    param: &str,
) -> Result<Outputs, CliError> {
    let fit = &report.fit;
    let p = fit.param(param).cloned();
    let headline = match &p {
        Some(p) => match (p.upper_bound, p.error) {
            (Some(ub), _) => format!("{param} consistent with zero; upper bound {ub:.4e}"),
            (None, Some(err)) => format!("{param} = {:.6e} +/- {:.2e}", p.value, err),
            (None, None) => format!("{param} = {:.6e}", p.value),
        },
        None => String::new(),
    };
    let failure = (!fit.converged).then(|| {
        format!(
            "{command} did not converge: {}",
            fit.message.as_deref().unwrap_or("no further detail")
        )
    });
    let mut outputs = Outputs {
        headline,
        failure,
        ..Outputs::default()
    };
    outputs.add(file, summary(command, loaded, report)?);
    Ok(outputs)
}

pub fn fit(loaded: &Loaded, mode: FitMode) -> Result<Outputs, CliError> {
    let block = require(&loaded.config.fit, "fit")?;
    let kappa = loaded.device.kappa;
    match mode {
        FitMode::NoiseCalibration => {
            let cfg = require(&block.noise_calibration, "fit.noise_calibration")?;
            let chi = match cfg.chi {
                Some(c) => c,
                None => loaded.device.chi_minus().map_err(device_err)?,
            };
            let fixed = NoiseCalibrationFixed {
                chi,
                kappa,
                t1: positive(cfg.t1_us, "fit.noise_calibration.t1_us")?,
                gamma_extra: non_negative(cfg.gamma_extra_per_us, "fit.noise_calibration.gamma_extra_per_us")?,
            };
            let path = loaded.resolve_path(&cfg.data);
            let (powers, t2s) = read_columns(&path, "power", "t2_us")?;
            let fit = analysis::fit_noise_calibration(&powers, &t2s, &fixed).map_err(analysis_err)?;
            let report = FitReport {
                data: cfg.data.display().to_string(),
                points: powers.len(),
                fixed,
                fit,
            };
            finish_fit(
                loaded,
                "fit noise-calibration",
                "fit_noise_calibration.json",
                report,
                "beta",
            )
        }
        FitMode::Chi => {
            let cfg = require(&block.chi, "fit.chi")?;
            let fixed = ChiFitFixed {
                kappa,
                t1: positive(cfg.t1_us, "fit.chi.t1_us")?,
                gamma_extra: non_negative(cfg.gamma_extra_per_us, "fit.chi.gamma_extra_per_us")?,
            };
            let path = loaded.resolve_path(&cfg.data);
            let (n_th, t2s) = read_columns(&path, "n_th", "t2_us")?;
            let fit = analysis::fit_chi_from_t2(&n_th, &t2s, &fixed).map_err(analysis_err)?;
            let report = FitReport {
                data: cfg.data.display().to_string(),
                points: n_th.len(),
                fixed,
                fit,
            };
            finish_fit(loaded, "fit chi", "fit_chi.json", report, "chi")
        }
    }
}

// ---------------------------------------------------------------------------
// generate-fixtures

#[derive(Serialize)]
struct FixtureTruth {
    seed_chi: u64,
    seed_noise_calibration: u64,
    chi_mhz: f64,
    beta: f64,
    noise_calibration_chi_mhz: f64,
    noise_calibration_gamma_extra_per_us: f64,
}

fn fit_config(device: &TcqParams, fit: crate::config::FitConfig) -> RunConfig {
    RunConfig {
        fit: Some(fit),
        ..RunConfig::for_device(device.clone())
    }
}

pub fn generate_fixtures(loaded: &Loaded) -> Result<Outputs, CliError> {
    use crate::config::{ChiFitConfig, FitConfig, NoiseCalibrationFitConfig};

    let defaults = FixturesConfig::default();
    let fixtures = loaded.config.fixtures.as_ref().unwrap_or(&defaults);
    let device = &loaded.device;
    let seed = loaded.config.seed;
    let seed_beta = seed.wrapping_add(1);

    let cf = &fixtures.chi;
    let n_th = cf.n_th.increasing("fixtures.chi.n_th")?;
    for &n in &n_th {
        non_negative(n, "fixtures.chi.n_th")?;
    }
    let chi_fixed = ChiFitFixed {
        kappa: device.kappa,
        t1: positive(cf.t1_us, "fixtures.chi.t1_us")?,
        gamma_extra: non_negative(cf.gamma_extra_per_us, "fixtures.chi.gamma_extra_per_us")?,
    };
    non_negative(cf.relative_noise, "fixtures.chi.relative_noise")?;
    let t2_nth =
        analysis::synthetic_t2_vs_nth(cf.chi, &chi_fixed, &n_th, cf.relative_noise, seed).map_err(analysis_err)?;

    let bf = &fixtures.noise_calibration;
    let powers = bf.powers.increasing("fixtures.noise_calibration.powers")?;
    for &p in &powers {
        non_negative(p, "fixtures.noise_calibration.powers")?;
    }
    let t1_beta = positive(bf.t1_us, "fixtures.noise_calibration.t1_us")?;
    let beta_fixed = NoiseCalibrationFixed {
        chi: bf.chi,
        kappa: device.kappa,
        t1: t1_beta,
        gamma_extra: analysis::gamma_extra_from_t2(t1_beta, bf.t2_zero_us).map_err(analysis_err)?,
    };
    non_negative(bf.relative_noise, "fixtures.noise_calibration.relative_noise")?;
    let t2_power = analysis::synthetic_t2_vs_power(bf.beta, &beta_fixed, &powers, bf.relative_noise, seed_beta)
        .map_err(analysis_err)?;

    let nth_csv = csv_bytes(|out| {
        use std::io::Write;
        writeln!(out, "n_th,t2_us")?;
        for (n, t) in n_th.iter().zip(&t2_nth) {
            writeln!(out, "{n},{t}")?;
        }
        Ok(())
    })?;
    let power_csv = csv_bytes(|out| {
        use std::io::Write;
        writeln!(out, "power,t2_us")?;
        for (p, t) in powers.iter().zip(&t2_power) {
            writeln!(out, "{p},{t}")?;
        }
        Ok(())
    })?;

    let chi_config = fit_config(
        device,
        FitConfig {
            noise_calibration: None,
            chi: Some(ChiFitConfig {
                data: "t2_vs_nth.csv".into(),
                t1_us: chi_fixed.t1,
                gamma_extra_per_us: chi_fixed.gamma_extra,
            }),
        },
    );
    let beta_config = fit_config(
        device,
        FitConfig {
            noise_calibration: Some(NoiseCalibrationFitConfig {
                data: "t2_vs_power.csv".into(),
                chi: Some(beta_fixed.chi),
                t1_us: beta_fixed.t1,
                gamma_extra_per_us: beta_fixed.gamma_extra,
            }),
            chi: None,
        },
    );
    let truth = FixtureTruth {
        seed_chi: seed,
        seed_noise_calibration: seed_beta,
        chi_mhz: cf.chi,
        beta: bf.beta,
        noise_calibration_chi_mhz: beta_fixed.chi,
        noise_calibration_gamma_extra_per_us: beta_fixed.gamma_extra,
    };

    let mut outputs = Outputs {
        headline: format!(
            "{} T2(n_th) and {} T2(P) points (seed {seed})",
            n_th.len(),
            powers.len()
        ),
        ..Outputs::default()
    };
    outputs.add("t2_vs_nth.csv", nth_csv);
    outputs.add("t2_vs_power.csv", power_csv);
    outputs.add("fit_chi.config.json", json_bytes(&chi_config)?);
    outputs.add("fit_noise_calibration.config.json", json_bytes(&beta_config)?);
    outputs.add("fixtures.json", summary("generate-fixtures", loaded, truth)?);
    Ok(outputs)
}
