//! Health (HEAT-style mortality) and carbon impacts of scenario mode shift.
//!
//! New cyclists gain a mortality benefit proportional to their weekly cycling
//! minutes relative to a reference volume, capped at `benefit_cap` multiples of
//! it. Walkers who switch lose the equivalent walking benefit. Drivers who
//! switch save `co2_kg_per_km` for every car-km no longer driven.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{MortalityTable, OdPair, Sex};
use crate::scenarios::{Scenario, ScenarioResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImpactError {
    #[error("invalid impact parameter: {0}")]
    InvalidParam(String),
    #[error("no mortality rate for area {area}, {sex}, ages {age_min}-{age_max}")]
    MissingMortality {
        area: String,
        sex: Sex,
        age_min: u32,
        age_max: u32,
    },
    #[error("age profile: {0}")]
    Profile(String),
    #[error("impact parameter file: {0}")]
    File(String),
}

fn default_trips() -> f64 {
    10.0
}

fn default_weeks() -> f64 {
    45.6
}

fn default_co2() -> f64 {
    0.186
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpactParams {
    /// km/h.
    pub speed_cycle: f64,
    pub speed_walk: f64,
    pub speed_ebike: f64,
    pub rr_cycle: f64,
    /// Minutes per week at which `rr_cycle` applies.
    pub ref_min_cycle: f64,
    pub rr_walk: f64,
    pub ref_min_walk: f64,
    /// Largest multiple of the reference volume that earns benefit.
    pub benefit_cap: f64,
    pub ebike_benefit_scale: f64,
    /// Currency per death avoided.
    pub vsl: f64,
    #[serde(default = "default_trips")]
    pub commute_trips_per_week: f64,
    #[serde(default = "default_weeks")]
    pub weeks_per_year: f64,
    #[serde(default = "default_co2")]
    pub co2_kg_per_km: f64,
}

impl ImpactParams {
    pub fn validate(self) -> Result<Self, ImpactError> {
        let bad = |what: &str, v: f64| Err(ImpactError::InvalidParam(format!("{what} = {v}")));
        for (name, v) in [
            ("speed_cycle", self.speed_cycle),
            ("speed_walk", self.speed_walk),
            ("speed_ebike", self.speed_ebike),
            ("ref_min_cycle", self.ref_min_cycle),
            ("ref_min_walk", self.ref_min_walk),
            ("benefit_cap", self.benefit_cap),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(name, v);
            }
        }
        for (name, v) in [("rr_cycle", self.rr_cycle), ("rr_walk", self.rr_walk)] {
            if !(v > 0.0 && v < 1.0) {
                return bad(name, v);
            }
        }
        if !(self.ebike_benefit_scale > 0.0 && self.ebike_benefit_scale <= 1.0) {
            return bad("ebike_benefit_scale", self.ebike_benefit_scale);
        }
        for (name, v) in [
            ("vsl", self.vsl),
            ("commute_trips_per_week", self.commute_trips_per_week),
            ("weeks_per_year", self.weeks_per_year),
            ("co2_kg_per_km", self.co2_kg_per_km),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(name, v);
            }
        }
        Ok(self)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ImpactError> {
        let p: Self = toml::from_str(text).map_err(|e| ImpactError::File(e.to_string()))?;
        p.validate()
    }

    pub fn load(path: &Path) -> Result<Self, ImpactError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ImpactError::File(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileCell {
    pub sex: Sex,
    pub age_min: u32,
    pub age_max: u32,
    pub weight: f64,
}

/// Age-sex composition of cyclists, keyed by profile name (`baseline`,
/// `godutch`, or any scenario name).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AgeProfiles {
    profiles: BTreeMap<String, Vec<ProfileCell>>,
}

impl AgeProfiles {
    pub fn new(profiles: BTreeMap<String, Vec<ProfileCell>>) -> Result<Self, ImpactError> {
        for (name, cells) in &profiles {
            if cells.iter().any(|c| !(c.weight >= 0.0 && c.weight.is_finite())) {
                return Err(ImpactError::Profile(format!("{name}: negative or non-finite weight")));
            }
            let total: f64 = cells.iter().map(|c| c.weight).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(ImpactError::Profile(format!("{name}: weights sum to {total}, not 1")));
            }
        }
        Ok(Self { profiles })
    }

    pub fn get(&self, name: &str) -> Option<&[ProfileCell]> {
        self.profiles.get(name).map(Vec::as_slice)
    }

    /// Profile for a scenario: its own entry if present, otherwise `godutch` for
    /// Ebikes and `baseline` for the rest.
    pub fn for_scenario(&self, scenario: Scenario) -> Result<&[ProfileCell], ImpactError> {
        let fallback = match scenario {
            Scenario::Ebikes => "godutch",
            _ => "baseline",
        };
        self.get(scenario.name())
            .or_else(|| self.get(fallback))
            .ok_or_else(|| {
                ImpactError::Profile(format!("no profile for {scenario} and no `{fallback}` profile"))
            })
    }
}

#[derive(Deserialize)]
struct RawProfileRow {
    scenario: String,
    sex: String,
    age_min: u32,
    age_max: u32,
    weight: f64,
}

/// Reads `scenario,sex,age_min,age_max,weight`.
pub fn parse_age_profiles<R: Read>(reader: R) -> Result<AgeProfiles, ImpactError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut profiles: BTreeMap<String, Vec<ProfileCell>> = BTreeMap::new();
    for row in rdr.deserialize::<RawProfileRow>() {
        let row = row.map_err(|e| ImpactError::Profile(e.to_string()))?;
        let sex = row.sex.parse().map_err(ImpactError::Profile)?;
        profiles.entry(row.scenario).or_default().push(ProfileCell {
            sex,
            age_min: row.age_min,
            age_max: row.age_max,
            weight: row.weight,
        });
    }
    AgeProfiles::new(profiles)
}

pub fn weekly_active_minutes(d_km: f64, speed_kmh: f64, trips_per_week: f64) -> Result<f64, ImpactError> {
    if !(speed_kmh > 0.0) {
        return Err(ImpactError::InvalidParam(format!("speed {speed_kmh} km/h")));
    }
    if !(d_km >= 0.0) || !(trips_per_week >= 0.0) {
        return Err(ImpactError::InvalidParam(format!(
            "distance {d_km} km, {trips_per_week} trips/week"
        )));
    }
    Ok(d_km / speed_kmh * 60.0 * trips_per_week)
}

/// Annual deaths avoided among `delta_people` new active commuters.
pub fn deaths_avoided(
    delta_people: f64,
    minutes_per_week: f64,
    rr: f64,
    ref_minutes: f64,
    cap: f64,
    mortality_rate: f64,
    benefit_scale: f64,
) -> f64 {
    delta_people * mortality_rate * (1.0 - rr) * (minutes_per_week / ref_minutes).min(cap) * benefit_scale
}

/// Annual deaths incurred by walkers who switch to cycling, as a positive number.
pub fn walking_displacement_harm(
    displaced_walk: f64,
    d_km: f64,
    params: &ImpactParams,
    mortality_rate: f64,
) -> Result<f64, ImpactError> {
    let minutes = weekly_active_minutes(d_km, params.speed_walk, params.commute_trips_per_week)?;
    Ok(deaths_avoided(
        displaced_walk,
        minutes,
        params.rr_walk,
        params.ref_min_walk,
        params.benefit_cap,
        mortality_rate,
        1.0,
    ))
}

/// Profile-weighted mortality rate for an area. Cells are summed in (sex, age)
/// order so the result does not depend on profile row order.
pub fn blended_mortality_rate(
    table: &MortalityTable,
    area_id: &str,
    profile: &[ProfileCell],
) -> Result<f64, ImpactError> {
    let mut cells: Vec<&ProfileCell> = profile.iter().collect();
    cells.sort_by_key(|a| (a.sex, a.age_min, a.age_max));
    let mut total = 0.0;
    for c in cells {
        let rate = table
            .rate(area_id, c.sex, c.age_min, c.age_max)
            .ok_or_else(|| ImpactError::MissingMortality {
                area: area_id.to_string(),
                sex: c.sex,
                age_min: c.age_min,
                age_max: c.age_max,
            })?;
        total += c.weight * rate;
    }
    Ok(total)
}

/// Annual kg CO2e no longer emitted by `displaced_car` former drivers.
pub fn co2_saved(displaced_car: f64, route_km: f64, params: &ImpactParams) -> f64 {
    displaced_car * route_km * params.commute_trips_per_week * params.weeks_per_year * params.co2_kg_per_km
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ImpactResult {
    pub deaths_avoided_cycle: f64,
    pub deaths_incurred_walk: f64,
    pub net_deaths_avoided: f64,
    /// Currency per year.
    pub health_value: f64,
    pub co2_saved_kg: f64,
}

/// Impacts of one scenario on one OD pair.
///
/// `route_km` is the fast-route distance. For Ebikes, cyclists up to the Go
/// Dutch level (`result.conventional_slc`) ride conventional bikes; the rest
/// ride at `speed_ebike` with the benefit scaled by `ebike_benefit_scale`.
pub fn impact_for_od(
    od: &OdPair,
    result: &ScenarioResult,
    route_km: f64,
    params: &ImpactParams,
    mortality_rate: f64,
) -> Result<ImpactResult, ImpactError> {
    let cycle = od.cycle as f64;
    let delta = (result.slc - cycle).max(0.0);
    let conventional = (result.conventional_slc.min(result.slc) - cycle).max(0.0);
    let electric = delta - conventional;
    let trips = params.commute_trips_per_week;

    let bike_minutes = weekly_active_minutes(route_km, params.speed_cycle, trips)?;
    let mut avoided = deaths_avoided(
        conventional,
        bike_minutes,
        params.rr_cycle,
        params.ref_min_cycle,
        params.benefit_cap,
        mortality_rate,
        1.0,
    );
    if electric > 0.0 {
        let ebike_minutes = weekly_active_minutes(route_km, params.speed_ebike, trips)?;
        avoided += deaths_avoided(
            electric,
            ebike_minutes,
            params.rr_cycle,
            params.ref_min_cycle,
            params.benefit_cap,
            mortality_rate,
            params.ebike_benefit_scale,
        );
    }
    let incurred = walking_displacement_harm(result.displaced.walk, route_km, params, mortality_rate)?;
    let net = avoided - incurred;
    Ok(ImpactResult {
        deaths_avoided_cycle: avoided,
        deaths_incurred_walk: incurred,
        net_deaths_avoided: net,
        health_value: net * params.vsl,
        co2_saved_kg: co2_saved(result.displaced.car, route_km, params),
    })
}

/// Parameters, age profiles and mortality rates bundled for per-OD evaluation.
#[derive(Debug, Clone, Copy)]
pub struct ImpactContext<'a> {
    pub params: &'a ImpactParams,
    pub profiles: &'a AgeProfiles,
    pub mortality: &'a MortalityTable,
}

impl ImpactContext<'_> {
    /// Impacts using the scenario's age profile and the origin zone's mortality area.
    pub fn evaluate(
        &self,
        od: &OdPair,
        mortality_area: &str,
        result: &ScenarioResult,
        route_km: f64,
    ) -> Result<ImpactResult, ImpactError> {
        let profile = self.profiles.for_scenario(result.scenario)?;
        let rate = blended_mortality_rate(self.mortality, mortality_area, profile)?;
        impact_for_od(od, result, route_km, self.params, rate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_mortality_table;

    pub(crate) fn params() -> ImpactParams {
        ImpactParams::from_toml_str(crate::synthetic::DEFAULT_IMPACTS_TOML).unwrap()
    }

    #[test]
    fn minutes_examples() {
        assert_eq!(weekly_active_minutes(5.0, 15.0, 10.0).unwrap(), 200.0);
        assert_eq!(weekly_active_minutes(0.0, 15.0, 10.0).unwrap(), 0.0);
        let one = weekly_active_minutes(3.7, 14.0, 5.0).unwrap();
        assert_eq!(weekly_active_minutes(3.7, 14.0, 10.0).unwrap(), 2.0 * one);
        assert!(weekly_active_minutes(1.0, 0.0, 10.0).is_err());
    }

    #[test]
    fn deaths_examples() {
        let d = deaths_avoided(100.0, 100.0, 0.9, 100.0, 2.0, 0.002, 1.0);
        assert!((d - 0.02).abs() < 1e-15);
        assert_eq!(deaths_avoided(0.0, 100.0, 0.9, 100.0, 2.0, 0.002, 1.0), 0.0);
        assert_eq!(
            deaths_avoided(7.0, 300.0, 0.9, 100.0, 2.0, 0.002, 1.0),
            deaths_avoided(7.0, 200.0, 0.9, 100.0, 2.0, 0.002, 1.0)
        );
    }

    #[test]
    fn walking_harm_matches_hand_formula() {
        let p = params();
        assert_eq!(walking_displacement_harm(0.0, 2.0, &p, 0.002).unwrap(), 0.0);
        let got = walking_displacement_harm(10.0, 2.0, &p, 0.002).unwrap();
        let minutes = 2.0 / 4.8 * 60.0 * 10.0;
        let hand = 10.0 * 0.002 * (1.0 - 0.89) * (minutes / 168.0);
        assert!((got - hand).abs() <= 1e-12 * hand);
    }

    #[test]
    fn co2_examples() {
        let p = ImpactParams { weeks_per_year: 44.0, ..params() };
        assert_eq!(co2_saved(10.0, 5.0, &p), 4092.0);
        assert_eq!(co2_saved(0.0, 5.0, &p), 0.0);
        let half = ImpactParams { co2_kg_per_km: 0.093, ..p };
        assert_eq!(co2_saved(10.0, 5.0, &half) * 2.0, co2_saved(10.0, 5.0, &p));
    }

    fn mortality() -> MortalityTable {
        parse_mortality_table(
            "area_id,sex,age_min,age_max,annual_rate\nX,male,16,39,0.001\nX,female,16,39,0.003\n".as_bytes(),
        )
        .unwrap()
    }

    #[test]
    fn blended_rate_examples() {
        let cell = |sex, weight| ProfileCell { sex, age_min: 16, age_max: 39, weight };
        let t = mortality();
        assert_eq!(blended_mortality_rate(&t, "X", &[cell(Sex::Male, 1.0)]).unwrap(), 0.001);
        let two = [cell(Sex::Male, 0.5), cell(Sex::Female, 0.5)];
        assert!((blended_mortality_rate(&t, "X", &two).unwrap() - 0.002).abs() < 1e-18);
        let swapped = [two[1], two[0]];
        assert_eq!(
            blended_mortality_rate(&t, "X", &two).unwrap(),
            blended_mortality_rate(&t, "X", &swapped).unwrap()
        );
        let err = blended_mortality_rate(&t, "Y", &two).unwrap_err();
        assert!(err.to_string().contains("Y"), "{err}");
    }

    #[test]
    fn profile_weights_must_sum_to_one() {
        let bad = "scenario,sex,age_min,age_max,weight\nbaseline,male,16,39,0.6\nbaseline,female,16,39,0.3\n";
        assert!(parse_age_profiles(bad.as_bytes()).is_err());
        let good = "scenario,sex,age_min,age_max,weight\nbaseline,male,16,39,0.7\nbaseline,female,16,39,0.3\n";
        let p = parse_age_profiles(good.as_bytes()).unwrap();
        assert_eq!(p.for_scenario(Scenario::GovTarget).unwrap().len(), 2);
        assert!(p.for_scenario(Scenario::Ebikes).is_err());
    }

    fn od() -> OdPair {
        OdPair {
            origin: "A".into(),
            dest: "B".into(),
            all: 100,
            cycle: 5,
            walk: 0,
            car: 80,
            other: 15,
            gender: None,
        }
    }

    fn result(scenario: Scenario, slc: f64, conventional: f64) -> ScenarioResult {
        ScenarioResult {
            scenario,
            slc,
            displaced: crate::scenarios::apportion_mode_shift(&od(), slc),
            conventional_slc: conventional,
        }
    }

    #[test]
    fn no_change_means_no_impact() {
        let r = impact_for_od(&od(), &result(Scenario::Baseline, 5.0, 5.0), 4.0, &params(), 0.002).unwrap();
        assert_eq!(r, ImpactResult::default());
    }

    #[test]
    fn longer_route_is_worth_more() {
        let p = params();
        let r = result(Scenario::GoDutch, 25.0, 25.0);
        let short = impact_for_od(&od(), &r, 2.0, &p, 0.002).unwrap();
        let long = impact_for_od(&od(), &r, 6.0, &p, 0.002).unwrap();
        assert!(long.health_value > short.health_value);
        assert_eq!(short.health_value, short.net_deaths_avoided * p.vsl);
    }

    #[test]
    fn walk_heavy_flow_can_lose_lives() {
        let od = OdPair { walk: 90, car: 5, other: 0, ..od() };
        let slc = 50.0;
        let r = ScenarioResult {
            scenario: Scenario::GoDutch,
            slc,
            displaced: crate::scenarios::apportion_mode_shift(&od, slc),
            conventional_slc: slc,
        };
        // Short slow walks replaced by quick rides: walking minutes exceed cycling minutes.
        let p = ImpactParams { rr_cycle: 0.99, ..params() };
        let i = impact_for_od(&od, &r, 1.0, &p, 0.002).unwrap();
        assert!(i.net_deaths_avoided < 0.0);
    }

    #[test]
    fn ebike_share_uses_ebike_parameters() {
        let p = params();
        let r = result(Scenario::Ebikes, 30.0, 25.0);
        let i = impact_for_od(&od(), &r, 4.0, &p, 0.002).unwrap();
        let bike = deaths_avoided(20.0, 4.0 / 14.0 * 600.0, 0.9, 100.0, 2.0, 0.002, 1.0);
        let ebike = deaths_avoided(5.0, 4.0 / 18.0 * 600.0, 0.9, 100.0, 2.0, 0.002, 0.7);
        assert!((i.deaths_avoided_cycle - (bike + ebike)).abs() < 1e-15);
        assert_eq!(r.displaced.walk, 0.0);
        assert!((r.displaced.car - 25.0 * 80.0 / 95.0).abs() < 1e-12);
    }

    #[test]
    fn params_reject_bad_values() {
        let text = crate::synthetic::DEFAULT_IMPACTS_TOML.replace("rr_walk = 0.89", "rr_walk = 1.2");
        assert!(ImpactParams::from_toml_str(&text).is_err());
        let text = crate::synthetic::DEFAULT_IMPACTS_TOML.replace("co2_kg_per_km = 0.186\n", "");
        assert_eq!(ImpactParams::from_toml_str(&text).unwrap().co2_kg_per_km, 0.186);
    }
}
