//! Closed-form hardware accounting: MZI counts, latency and energy per
//! inference, and the cost of a training epoch or run.
//!
//! Times are summed on an integer picosecond grid so that reported
//! latencies such as 599.3 ns come out exactly.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArchKind {
    #[serde(rename = "ONN")]
    Onn,
    #[serde(rename = "TONN-1")]
    Tonn1,
    #[serde(rename = "TONN-2")]
    Tonn2,
}

impl ArchKind {
    pub const ALL: [ArchKind; 3] = [ArchKind::Onn, ArchKind::Tonn1, ArchKind::Tonn2];

    pub fn label(self) -> &'static str {
        match self {
            ArchKind::Onn => "ONN",
            ArchKind::Tonn1 => "TONN-1",
            ArchKind::Tonn2 => "TONN-2",
        }
    }
}

/// Per-architecture device figures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConstants {
    pub t_opt_ns: f64,
    /// `None` where no figure exists (the dense ONN's optical loss is prohibitive).
    pub energy_per_inference_j: Option<f64>,
    pub footprint_mm2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceConstants {
    pub t_dac_ns: f64,
    pub t_adc_ns: f64,
    pub t_tuning_ns: f64,
    pub t_dig_ns: f64,
    pub onn: ArchConstants,
    pub tonn1: ArchConstants,
    pub tonn2: ArchConstants,
}

impl Default for DeviceConstants {
    fn default() -> Self {
        Self {
            t_dac_ns: 24.0,
            t_adc_ns: 24.0,
            t_tuning_ns: 0.1,
            t_dig_ns: 500.0,
            onn: ArchConstants {
                t_opt_ns: 51.2,
                energy_per_inference_j: None,
                footprint_mm2: 2.62e5,
            },
            tonn1: ArchConstants {
                t_opt_ns: 1.6,
                energy_per_inference_j: Some(6.45e-9),
                footprint_mm2: 648.0,
            },
            tonn2: ArchConstants {
                t_opt_ns: 0.4,
                energy_per_inference_j: Some(5.05e-9),
                footprint_mm2: 26.0,
            },
        }
    }
}

impl DeviceConstants {
    pub fn arch(&self, kind: ArchKind) -> &ArchConstants {
        match kind {
            ArchKind::Onn => &self.onn,
            ArchKind::Tonn1 => &self.tonn1,
            ArchKind::Tonn2 => &self.tonn2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut values = vec![self.t_dac_ns, self.t_adc_ns, self.t_tuning_ns, self.t_dig_ns];
        for kind in ArchKind::ALL {
            let a = self.arch(kind);
            values.extend([a.t_opt_ns, a.footprint_mm2]);
            values.extend(a.energy_per_inference_j);
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidConfig("device constants must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureSpec {
    pub kind: ArchKind,
    pub n_cycle: u64,
    /// `(rows, cols)` of each weight matrix realized with SVD meshes.
    #[serde(default)]
    pub layers: Vec<(usize, usize)>,
    #[serde(default)]
    pub wavelengths: Option<usize>,
    #[serde(default)]
    pub mzi_count_override: Option<u64>,
}

impl ArchitectureSpec {
    /// Dense `21 → 1024 → 1024 → 1` network.
    pub fn onn() -> Self {
        Self {
            kind: ArchKind::Onn,
            n_cycle: 1,
            layers: vec![(1024, 21), (1024, 1024), (1, 1024)],
            wavelengths: None,
            mzi_count_override: None,
        }
    }

    pub fn tonn1() -> Self {
        Self {
            kind: ArchKind::Tonn1,
            n_cycle: 1,
            layers: Vec::new(),
            wavelengths: Some(32),
            mzi_count_override: Some(1790),
        }
    }

    pub fn tonn2() -> Self {
        Self {
            kind: ArchKind::Tonn2,
            n_cycle: 64,
            layers: Vec::new(),
            wavelengths: Some(32),
            mzi_count_override: Some(28),
        }
    }

    pub fn hjb20(kind: ArchKind) -> Self {
        match kind {
            ArchKind::Onn => Self::onn(),
            ArchKind::Tonn1 => Self::tonn1(),
            ArchKind::Tonn2 => Self::tonn2(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cycle == 0 {
            return Err(Error::InvalidConfig("n_cycle must be >= 1".into()));
        }
        if self.layers.iter().any(|&(p, q)| p == 0 || q == 0) {
            return Err(Error::InvalidConfig("layer dimensions must be >= 1".into()));
        }
        if self.mzi_count_override.is_none() && self.layers.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "{} needs layer dimensions or an MZI count",
                self.kind.label()
            )));
        }
        Ok(())
    }

    pub fn mzi_count(&self) -> u64 {
        self.mzi_count_override
            .unwrap_or_else(|| self.layers.iter().map(|&(p, q)| mzi_count_svd(p, q)).sum())
    }
}

/// MZIs of a `p × q` matrix realized as `U Σ Vᵀ`: two square meshes and
/// `min(p, q)` attenuators.
pub fn mzi_count_svd(p: usize, q: usize) -> u64 {
    let (p, q) = (p as u64, q as u64);
    p * p.saturating_sub(1) / 2 + q * q.saturating_sub(1) / 2 + p.min(q)
}

fn to_ps(ns: f64) -> i64 {
    (ns * 1000.0).round() as i64
}

/// `n_cycle·(t_dac + t_tuning + t_opt + t_adc) + t_dig`, in nanoseconds at 1 ps resolution.
pub fn latency_per_inference(arch: &ArchitectureSpec, consts: &DeviceConstants) -> f64 {
    let c = consts.arch(arch.kind);
    let cycle = to_ps(consts.t_dac_ns) + to_ps(consts.t_tuning_ns) + to_ps(c.t_opt_ns) + to_ps(consts.t_adc_ns);
    let ps = arch.n_cycle as i64 * cycle + to_ps(consts.t_dig_ns);
    ps as f64 / 1000.0
}

/// `paper` accounting charges `N` loss evaluations per step; true accounting
/// adds the unperturbed base evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Accounting {
    #[default]
    Paper,
    True,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingBudget {
    pub inferences_per_loss: u64,
    pub loss_evals_per_step: u64,
    pub batch: u64,
    pub epochs: u64,
    /// A batch through one configuration costs one inference latency.
    pub pipelined: bool,
}

impl TrainingBudget {
    pub fn hjb20(accounting: Accounting) -> Self {
        Self::for_run(20, 100, 10, 5000, accounting)
    }

    /// Budget of a run at dimension `dim` with `num_perturbations` SPSA samples.
    pub fn for_run(dim: usize, batch: usize, num_perturbations: usize, epochs: usize, accounting: Accounting) -> Self {
        let extra = match accounting {
            Accounting::Paper => 0,
            Accounting::True => 1,
        };
        Self {
            inferences_per_loss: 2 * dim as u64 + 2,
            loss_evals_per_step: num_perturbations as u64 + extra,
            batch: batch as u64,
            epochs: epochs as u64,
            pipelined: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.inferences_per_loss == 0 || self.loss_evals_per_step == 0 || self.batch == 0 {
            return Err(Error::InvalidConfig("training budget entries must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochCost {
    pub inferences: u64,
    pub energy_j: Option<f64>,
    pub latency_s: f64,
}

impl EpochCost {
    pub fn energy(&self, kind: ArchKind) -> Result<f64> {
        energy_or_unavailable(self.energy_j, kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunCost {
    pub inferences: u64,
    pub energy_j: Option<f64>,
    pub time_s: f64,
}

impl RunCost {
    pub fn energy(&self, kind: ArchKind) -> Result<f64> {
        energy_or_unavailable(self.energy_j, kind)
    }
}

fn energy_or_unavailable(e: Option<f64>, kind: ArchKind) -> Result<f64> {
    e.ok_or_else(|| Error::EnergyUnavailable(format!("{} has no energy-per-inference figure", kind.label())))
}

pub fn epoch_cost(budget: &TrainingBudget, arch: &ArchitectureSpec, consts: &DeviceConstants) -> EpochCost {
    let inferences = budget.inferences_per_loss * budget.loss_evals_per_step * budget.batch;
    let sequential = if budget.pipelined {
        inferences / budget.batch
    } else {
        inferences
    };
    EpochCost {
        inferences,
        energy_j: consts
            .arch(arch.kind)
            .energy_per_inference_j
            .map(|e| inferences as f64 * e),
        latency_s: sequential as f64 * latency_per_inference(arch, consts) * 1e-9,
    }
}

pub fn run_cost(budget: &TrainingBudget, arch: &ArchitectureSpec, consts: &DeviceConstants) -> RunCost {
    let epoch = epoch_cost(budget, arch, consts);
    let n = budget.epochs;
    RunCost {
        inferences: epoch.inferences * n,
        energy_j: epoch.energy_j.map(|e| e * n as f64),
        time_s: epoch.latency_s * n as f64,
    }
}

pub fn reduction_ratio(onn_mzis: u64, tonn_mzis: u64) -> f64 {
    onn_mzis as f64 / tonn_mzis as f64
}

/// Round to `digits` significant figures.
pub fn round_sig(x: f64, digits: u32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let exp = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(digits as i32 - 1 - exp);
    (x * scale).round() / scale
}

/// Whether `x` agrees with the quoted `reported` value to within half a
/// unit in its last significant figure.
pub fn agrees_to_sig(x: f64, reported: f64, digits: u32) -> bool {
    let exp = reported.abs().log10().floor() as i32;
    (x - reported).abs() <= 0.5 * 10f64.powi(exp - digits as i32 + 1) * (1.0 + 1e-9)
}

/// Scientific notation in the `1.17E3` style.
pub fn format_sig(x: f64, digits: u32) -> String {
    let s = format!("{:.*e}", digits.saturating_sub(1) as usize, x);
    s.replace('e', "E")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub arch: ArchKind,
    pub mzis: u64,
    pub energy_per_inference_j: Option<f64>,
    pub latency_ns: f64,
    pub latency_ns_rounded: f64,
    pub footprint_mm2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub rows: Vec<ReportRow>,
    pub mzi_reduction_ratio: f64,
    pub training_arch: ArchKind,
    pub budget: TrainingBudget,
    pub epoch: EpochCost,
    pub run: RunCost,
}

impl CostReport {
    /// Table rows for the three reference architectures plus training totals on `training`.
    pub fn build(consts: &DeviceConstants, training: ArchKind, budget: &TrainingBudget) -> Result<Self> {
        consts.validate()?;
        budget.validate()?;
        let mut rows = Vec::new();
        for kind in ArchKind::ALL {
            let arch = ArchitectureSpec::hjb20(kind);
            let c = consts.arch(kind);
            let latency = latency_per_inference(&arch, consts);
            rows.push(ReportRow {
                arch: kind,
                mzis: arch.mzi_count(),
                energy_per_inference_j: c.energy_per_inference_j,
                latency_ns: latency,
                latency_ns_rounded: round_sig(latency, 3),
                footprint_mm2: c.footprint_mm2,
            });
        }
        let train_arch = ArchitectureSpec::hjb20(training);
        Ok(Self {
            mzi_reduction_ratio: reduction_ratio(rows[0].mzis, rows[1].mzis),
            rows,
            training_arch: training,
            budget: *budget,
            epoch: epoch_cost(budget, &train_arch, consts),
            run: run_cost(budget, &train_arch, consts),
        })
    }

    /// Aligned text table followed by training totals.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8} {:>10} {:>12} {:>18} {:>14}",
            "arch", "# MZIs", "energy (J)", "latency (ns)", "footprint (mm2)"
        );
        for r in &self.rows {
            let energy = r
                .energy_per_inference_j
                .map_or_else(|| "n/a".to_string(), |e| format_sig(e, 3));
            let latency = format!("{} ({})", r.latency_ns, r.latency_ns_rounded);
            let _ = writeln!(
                out,
                "{:<8} {:>10} {:>12} {:>18} {:>14}",
                r.arch.label(),
                format_sig(r.mzis as f64, 3),
                energy,
                latency,
                format_sig(r.footprint_mm2, 3)
            );
        }
        let _ = writeln!(
            out,
            "MZI reduction ratio: {} ({:.1})",
            format_sig(self.mzi_reduction_ratio, 3),
            self.mzi_reduction_ratio
        );
        let energy = |e: Option<f64>| e.map_or_else(|| "n/a".to_string(), |e| format!("{} J", format_sig(e, 3)));
        let _ = writeln!(
            out,
            "{} epoch: {} inferences, {}, {} ms",
            self.training_arch.label(),
            format_sig(self.epoch.inferences as f64, 3),
            energy(self.epoch.energy_j),
            format_sig(self.epoch.latency_s * 1e3, 3)
        );
        let _ = writeln!(
            out,
            "{} run ({} epochs): {}, {} s",
            self.training_arch.label(),
            self.budget.epochs,
            energy(self.run.energy_j),
            format_sig(self.run.time_s, 3)
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svd_mzi_counts() {
        assert_eq!(mzi_count_svd(1, 1), 1);
        assert_eq!(mzi_count_svd(8, 8), 64);
        assert_eq!(ArchitectureSpec::onn().mzi_count(), 2_096_360);
    }

    #[test]
    fn latencies_are_exact() {
        let c = DeviceConstants::default();
        assert_eq!(latency_per_inference(&ArchitectureSpec::onn(), &c), 599.3);
        assert_eq!(latency_per_inference(&ArchitectureSpec::tonn1(), &c), 549.7);
        assert_eq!(latency_per_inference(&ArchitectureSpec::tonn2(), &c), 3604.0);
        let no_dig = DeviceConstants { t_dig_ns: 0.0, ..c };
        assert_eq!(latency_per_inference(&ArchitectureSpec::tonn1(), &no_dig), 49.7);
    }

    #[test]
    fn hjb20_epoch_and_run() {
        let c = DeviceConstants::default();
        let arch = ArchitectureSpec::tonn1();
        let budget = TrainingBudget::hjb20(Accounting::Paper);
        let e = epoch_cost(&budget, &arch, &c);
        assert_eq!(e.inferences, 42_000);
        assert!((e.energy(arch.kind).unwrap() - 2.709e-4).abs() < 1e-12);
        assert!((e.latency_s - 420.0 * 549.7e-9).abs() < 1e-15);
        let r = run_cost(&budget, &arch, &c);
        assert!(agrees_to_sig(r.energy_j.unwrap(), 1.36, 2));
        assert!(agrees_to_sig(r.time_s, 1.15, 2));
    }

    #[test]
    fn unpipelined_single_eval() {
        let c = DeviceConstants::default();
        let arch = ArchitectureSpec::tonn1();
        let budget = TrainingBudget {
            inferences_per_loss: 42,
            loss_evals_per_step: 1,
            batch: 1,
            epochs: 1,
            pipelined: false,
        };
        let e = epoch_cost(&budget, &arch, &c);
        assert_eq!(e.inferences, 42);
        assert!((e.latency_s - 42.0 * 549.7e-9).abs() < 1e-18);
        let r = run_cost(&budget, &arch, &c);
        assert_eq!(
            (r.inferences, r.energy_j, r.time_s),
            (e.inferences, e.energy_j, e.latency_s)
        );
    }

    #[test]
    fn totals_scale_linearly() {
        let c = DeviceConstants::default();
        let arch = ArchitectureSpec::tonn1();
        let mut budget = TrainingBudget::hjb20(Accounting::Paper);
        let one = run_cost(&budget, &arch, &c);
        budget.epochs *= 2;
        let two = run_cost(&budget, &arch, &c);
        assert!((two.energy_j.unwrap() - 2.0 * one.energy_j.unwrap()).abs() < 1e-12);
        assert!((two.time_s - 2.0 * one.time_s).abs() < 1e-12);
        budget.epochs = 0;
        let zero = run_cost(&budget, &arch, &c);
        assert_eq!((zero.inferences, zero.energy_j, zero.time_s), (0, Some(0.0), 0.0));
    }

    #[test]
    fn accounting_modes_differ_by_n_plus_one_over_n() {
        let c = DeviceConstants::default();
        let arch = ArchitectureSpec::tonn1();
        let p = epoch_cost(&TrainingBudget::hjb20(Accounting::Paper), &arch, &c);
        let t = epoch_cost(&TrainingBudget::hjb20(Accounting::True), &arch, &c);
        assert_eq!(p.inferences * 11, t.inferences * 10);
    }

    #[test]
    fn onn_energy_is_unavailable() {
        let c = DeviceConstants::default();
        let arch = ArchitectureSpec::onn();
        let e = epoch_cost(&TrainingBudget::hjb20(Accounting::Paper), &arch, &c);
        assert!(matches!(e.energy(arch.kind), Err(Error::EnergyUnavailable(_))));
    }

    #[test]
    fn reduction_ratios() {
        assert_eq!(reduction_ratio(7, 7), 1.0);
        assert_eq!(format_sig(reduction_ratio(2_100_000, 1790), 3), "1.17E3");
        let r = reduction_ratio(ArchitectureSpec::onn().mzi_count(), 1790);
        assert!((r - 1171.15).abs() < 0.01);
        assert_eq!(format_sig(r, 3), "1.17E3");
    }

    #[test]
    fn report_rendering() {
        let report = CostReport::build(
            &DeviceConstants::default(),
            ArchKind::Tonn1,
            &TrainingBudget::hjb20(Accounting::Paper),
        )
        .unwrap();
        let text = report.to_text();
        assert!(text.lines().any(|l| l.starts_with("TONN-1") && l.contains("550")));
        assert!(text.contains("1.17E3"));
        let json = serde_json::to_string(&report).unwrap();
        let back: CostReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn rounding_helpers() {
        assert_eq!(round_sig(599.3, 3), 599.0);
        assert_eq!(round_sig(549.7, 3), 550.0);
        assert_eq!(round_sig(0.0, 3), 0.0);
        assert!(agrees_to_sig(1.3545, 1.36, 2));
        assert!(!agrees_to_sig(1.5, 1.36, 2));
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut a = ArchitectureSpec::tonn2();
        a.n_cycle = 0;
        assert!(a.validate().is_err());
        let c = DeviceConstants {
            t_dac_ns: -1.0,
            ..DeviceConstants::default()
        };
        assert!(c.validate().is_err());
    }
}
