//! Scenario levels of cycling (slc) per OD pair and the modes new cyclists
//! are drawn from.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::OdPair;
use crate::model::{logistic, ModelCoefficients, ModelError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("scenario {0} unavailable: {1}")]
    Unavailable(Scenario, String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("scenario parameter file: {0}")]
    File(String),
    #[error("unknown scenario `{0}`")]
    Unknown(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Observed 2011 census cycling.
    Baseline,
    GovTarget,
    GenderEqual,
    GoDutch,
    Ebikes,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Baseline,
        Scenario::GovTarget,
        Scenario::GenderEqual,
        Scenario::GoDutch,
        Scenario::Ebikes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Baseline => "baseline",
            Scenario::GovTarget => "govtarget",
            Scenario::GenderEqual => "genderequal",
            Scenario::GoDutch => "godutch",
            Scenario::Ebikes => "ebikes",
        }
    }

    /// Prefix used for per-scenario property names on served features.
    pub fn prefix(self) -> &'static str {
        match self {
            Scenario::Baseline => "baseline",
            Scenario::GovTarget => "govtarget",
            Scenario::GenderEqual => "genderequal",
            Scenario::GoDutch => "dutch",
            Scenario::Ebikes => "ebike",
        }
    }

    /// Property carrying the cycling volume: `baseline`, `govtarget_slc`,
    /// `genderequal_slc`, `dutch_slc` or `ebike_slc`.
    pub fn slc_property(self) -> String {
        match self {
            Scenario::Baseline => "baseline".to_string(),
            s => format!("{}_slc", s.prefix()),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| ScenarioError::Unknown(s.to_string()))
    }
}

/// Logit-scale offsets for Go Dutch and Ebikes. Every key is required: there
/// are no built-in values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioParams {
    pub gd_main: f64,
    /// Per km.
    pub gd_dist: f64,
    pub eb_main: f64,
    /// Per km.
    pub eb_dist: f64,
    /// Per % gradient.
    pub eb_hill: f64,
}

impl ScenarioParams {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let p: Self = toml::from_str(text).map_err(|e| ScenarioError::File(e.to_string()))?;
        let all = [p.gd_main, p.gd_dist, p.eb_main, p.eb_dist, p.eb_hill];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(ScenarioError::File("non-finite parameter".into()));
        }
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::File(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }
}

/// Observed cyclists plus modelled new cyclists, capped at the flow total.
pub fn scenario_govtarget(od: &OdPair, p_base: f64) -> f64 {
    (od.cycle as f64 + p_base * od.all as f64).min(od.all as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenderEqualOutcome {
    pub slc: f64,
    pub male_rate: f64,
    /// Female cycling rate after the scenario: max(female, male) when men are present.
    pub female_rate: f64,
}

/// Women cycle at the men's rate where that is higher; never lowers cycling.
pub fn scenario_genderequal(od: &OdPair) -> Result<GenderEqualOutcome, ScenarioError> {
    let g = od.gender.ok_or_else(|| {
        ScenarioError::Unavailable(Scenario::GenderEqual, "no gender split for this flow".into())
    })?;
    let rate = |cyc: u64, all: u64| if all == 0 { 0.0 } else { cyc as f64 / all as f64 };
    let male_rate = rate(g.male_cycle, g.male_all);
    let female_rate = rate(g.female_cycle, g.female_all);
    if g.male_all > 0 && male_rate > female_rate {
        Ok(GenderEqualOutcome {
            slc: g.male_cycle as f64 + g.female_all as f64 * male_rate,
            male_rate,
            female_rate: male_rate,
        })
    } else {
        Ok(GenderEqualOutcome {
            slc: od.cycle as f64,
            male_rate,
            female_rate,
        })
    }
}

/// Baseline logit shifted by the Dutch main and distance effects.
pub fn godutch_logit(
    coeffs: &ModelCoefficients,
    params: &ScenarioParams,
    d_km: f64,
    h_pct: f64,
) -> Result<f64, ModelError> {
    Ok(coeffs.linear_predictor(d_km, h_pct)? + params.gd_main + params.gd_dist * d_km)
}

/// Does not read `od.cycle`: only distance, hilliness and the flow total matter.
pub fn scenario_godutch(
    coeffs: &ModelCoefficients,
    params: &ScenarioParams,
    d_km: f64,
    h_pct: f64,
    od: &OdPair,
) -> Result<f64, ModelError> {
    Ok(logistic(godutch_logit(coeffs, params, d_km, h_pct)?) * od.all as f64)
}

/// Logit uplift of Ebikes over Go Dutch.
pub fn ebike_logit_offset(params: &ScenarioParams, d_km: f64, h_pct: f64) -> f64 {
    params.eb_main + params.eb_dist * d_km + params.eb_hill * h_pct
}

pub fn scenario_ebikes(
    coeffs: &ModelCoefficients,
    params: &ScenarioParams,
    d_km: f64,
    h_pct: f64,
    od: &OdPair,
) -> Result<f64, ModelError> {
    let logit = godutch_logit(coeffs, params, d_km, h_pct)? + ebike_logit_offset(params, d_km, h_pct);
    Ok(logistic(logit) * od.all as f64)
}

/// Decreases in each non-cycle mode. Zero when the scenario does not add cyclists.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Displaced {
    pub walk: f64,
    pub car: f64,
    pub other: f64,
}

impl Displaced {
    pub fn total(&self) -> f64 {
        self.walk + self.car + self.other
    }
}

/// New cyclists are drawn from walking, driving and other modes in proportion to
/// each mode's share of non-cyclists.
pub fn apportion_mode_shift(od: &OdPair, slc: f64) -> Displaced {
    let delta = (slc - od.cycle as f64).max(0.0);
    let non_cyclists = (od.all - od.cycle) as f64;
    if delta == 0.0 || non_cyclists == 0.0 {
        return Displaced::default();
    }
    // fraction ≤ 1 whenever slc ≤ all, so no mode can go negative.
    let fraction = (delta / non_cyclists).min(1.0);
    Displaced {
        walk: od.walk as f64 * fraction,
        car: od.car as f64 * fraction,
        other: od.other as f64 * fraction,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario: Scenario,
    pub slc: f64,
    pub displaced: Displaced,
    /// Part of `slc` riding conventional bikes: the Go Dutch level for Ebikes
    /// (capped at `slc`), otherwise `slc` itself.
    pub conventional_slc: f64,
}

impl ScenarioResult {
    /// Cyclists added over the observed level.
    pub fn added_cyclists(&self, od: &OdPair) -> f64 {
        (self.slc - od.cycle as f64).max(0.0)
    }
}

/// Every scenario that can be computed for one flow, in [`Scenario::ALL`] order.
/// Gender Equality is omitted when the flow carries no gender split.
pub fn run_scenarios(
    od: &OdPair,
    d_km: f64,
    h_pct: f64,
    coeffs: &ModelCoefficients,
    params: &ScenarioParams,
) -> Result<Vec<ScenarioResult>, ModelError> {
    let p_base = logistic(coeffs.linear_predictor(d_km, h_pct)?);
    let godutch = scenario_godutch(coeffs, params, d_km, h_pct, od)?;
    let mut out = Vec::with_capacity(Scenario::ALL.len());
    let mut push = |scenario: Scenario, slc: f64, conventional: f64| {
        out.push(ScenarioResult {
            scenario,
            slc,
            displaced: apportion_mode_shift(od, slc),
            conventional_slc: conventional,
        })
    };
    let baseline = od.cycle as f64;
    push(Scenario::Baseline, baseline, baseline);
    let gt = scenario_govtarget(od, p_base);
    push(Scenario::GovTarget, gt, gt);
    if let Ok(ge) = scenario_genderequal(od) {
        push(Scenario::GenderEqual, ge.slc, ge.slc);
    }
    push(Scenario::GoDutch, godutch, godutch);
    let eb = scenario_ebikes(coeffs, params, d_km, h_pct, od)?;
    push(Scenario::Ebikes, eb, godutch.min(eb));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::GenderSplit;

    fn census_row() -> OdPair {
        OdPair {
            origin: "E02002361".into(),
            dest: "E02002361".into(),
            all: 109,
            cycle: 2,
            walk: 59,
            car: 39,
            other: 9,
            gender: None,
        }
    }

    fn with_gender(male: (u64, u64), female: (u64, u64)) -> OdPair {
        let all = male.0 + female.0;
        let cycle = male.1 + female.1;
        OdPair {
            origin: "A".into(),
            dest: "B".into(),
            all,
            cycle,
            walk: 0,
            car: all - cycle,
            other: 0,
            gender: Some(GenderSplit {
                male_all: male.0,
                male_cycle: male.1,
                female_all: female.0,
                female_cycle: female.1,
            }),
        }
    }

    fn params(gd_main: f64) -> ScenarioParams {
        ScenarioParams {
            gd_main,
            gd_dist: 0.0,
            eb_main: 0.0,
            eb_dist: 0.0,
            eb_hill: 0.0,
        }
    }

    #[test]
    fn govtarget_examples() {
        let od = census_row();
        assert!((scenario_govtarget(&od, 0.0183) - 3.9947).abs() < 1e-12);
        assert_eq!(scenario_govtarget(&od, 0.0), 2.0);
        let mut busy = census_row();
        busy.all = 10;
        busy.cycle = 9;
        assert_eq!(scenario_govtarget(&busy, 0.5), 10.0);
    }

    #[test]
    fn genderequal_examples() {
        let r = scenario_genderequal(&with_gender((50, 10), (50, 2))).unwrap();
        assert_eq!(r.slc, 20.0);
        assert_eq!(r.female_rate, 0.2);

        let od = with_gender((50, 2), (50, 10));
        assert_eq!(scenario_genderequal(&od).unwrap().slc, od.cycle as f64);

        let od = with_gender((0, 0), (49, 3));
        assert_eq!(scenario_genderequal(&od).unwrap().slc, 3.0);

        assert!(matches!(
            scenario_genderequal(&census_row()),
            Err(ScenarioError::Unavailable(Scenario::GenderEqual, _))
        ));
    }

    #[test]
    fn godutch_examples() {
        let od = OdPair { all: 100, ..census_row() };
        let zero = ModelCoefficients {
            alpha: -(9.0f64).ln(),
            ..Default::default()
        };
        let p_base = logistic(zero.linear_predictor(3.0, 1.0).unwrap());
        assert!((p_base - 0.1).abs() < 1e-15);
        let slc = scenario_godutch(&zero, &params(0.0), 3.0, 1.0, &od).unwrap();
        assert!((slc - p_base * 100.0).abs() < 1e-12);
        let slc = scenario_godutch(&zero, &params((9.0f64).ln()), 3.0, 1.0, &od).unwrap();
        assert!((slc - 50.0).abs() < 1e-6);
    }

    #[test]
    fn ebike_uplift_grows_with_hills_linearly() {
        let p = ScenarioParams {
            gd_main: 1.0,
            gd_dist: -0.1,
            eb_main: 0.5,
            eb_dist: 0.125,
            eb_hill: 0.25,
        };
        let flat = ebike_logit_offset(&p, 2.0, 0.0);
        let hilly = ebike_logit_offset(&p, 2.0, 4.0);
        assert_eq!(hilly - flat, 4.0 * p.eb_hill);
    }

    #[test]
    fn mode_shift_on_census_row() {
        let d = apportion_mode_shift(&census_row(), 12.0);
        // Δ = 10 split over 107 non-cyclists.
        assert!((d.walk - 590.0 / 107.0).abs() < 1e-12);
        assert!((d.walk - 5.514).abs() < 1e-3);
        assert!((d.car - 3.645).abs() < 1e-3);
        assert!((d.other - 0.841).abs() < 1e-3);
        assert!((d.total() - 10.0).abs() < 1e-9);
        assert_eq!(apportion_mode_shift(&census_row(), 2.0), Displaced::default());
        let mut no_walk = census_row();
        no_walk.walk = 0;
        no_walk.car = 98;
        assert_eq!(apportion_mode_shift(&no_walk, 50.0).walk, 0.0);
        let all_cycle = OdPair { all: 5, cycle: 5, walk: 0, car: 0, other: 0, ..census_row() };
        assert_eq!(apportion_mode_shift(&all_cycle, 5.0), Displaced::default());
    }

    #[test]
    fn scenario_names_parse() {
        for s in Scenario::ALL {
            assert_eq!(s.name().parse::<Scenario>().unwrap(), s);
        }
        assert_eq!(Scenario::GoDutch.slc_property(), "dutch_slc");
        assert_eq!(Scenario::Baseline.slc_property(), "baseline");
        assert!("dutch".parse::<Scenario>().is_err());
    }

    #[test]
    fn params_require_every_key() {
        assert!(ScenarioParams::from_toml_str("gd_main = 1.0").is_err());
        let p = ScenarioParams::from_toml_str(
            "gd_main = 1.0\ngd_dist = -0.1\neb_main = 0.2\neb_dist = 0.03\neb_hill = 0.1\n",
        )
        .unwrap();
        assert_eq!(p.eb_hill, 0.1);
    }

    #[test]
    fn run_scenarios_skips_unavailable_gender() {
        let coeffs = crate::synthetic::reference_coefficients();
        let p = params(1.0);
        let r = run_scenarios(&census_row(), 2.0, 1.0, &coeffs, &p).unwrap();
        assert_eq!(r.len(), 4);
        assert!(r.iter().all(|x| x.scenario != Scenario::GenderEqual));
        let r = run_scenarios(&with_gender((50, 10), (50, 2)), 2.0, 1.0, &coeffs, &p).unwrap();
        assert_eq!(r.len(), 5);
    }
}
