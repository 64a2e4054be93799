use std::collections::BTreeMap;

use proptest::prelude::*;

use cyclepot_core::data::{GenderSplit, OdPair};
use cyclepot_core::geo::{polyline_km, LonLat};
use cyclepot_core::impacts::{co2_saved, deaths_avoided, ImpactParams};
use cyclepot_core::model::ModelCoefficients;
use cyclepot_core::netagg::{merge_contiguous, overline, RouteFlow};
use cyclepot_core::pipeline::{distance_distribution, DistanceRow, DEFAULT_BAND_EDGES_KM};
use cyclepot_core::routing::circuity;
use cyclepot_core::scenarios::{
    apportion_mode_shift, ebike_logit_offset, run_scenarios, scenario_godutch, Scenario, ScenarioParams,
};
use cyclepot_core::synthetic::reference_coefficients;

fn arb_od() -> impl Strategy<Value = OdPair> {
    (1u64..3000, any::<u64>(), any::<u64>(), any::<u64>(), any::<u64>(), any::<bool>()).prop_map(
        |(all, a, b, c, g, gendered)| {
            let cycle = a % (all + 1);
            let walk = b % (all - cycle + 1);
            let car = c % (all - cycle - walk + 1);
            let male_all = g % (all + 1);
            let male_cycle = (g / 7) % (male_all.min(cycle) + 1);
            let female_cycle = cycle - male_cycle;
            let gender = (gendered && female_cycle <= all - male_all).then_some(GenderSplit {
                male_all,
                male_cycle,
                female_all: all - male_all,
                female_cycle,
            });
            OdPair {
                origin: "A".into(),
                dest: "B".into(),
                all,
                cycle,
                walk,
                car,
                other: all - cycle - walk - car,
                gender,
            }
        },
    )
}

fn arb_params() -> impl Strategy<Value = ScenarioParams> {
    (-1.0f64..3.0, -0.2f64..0.1, -0.5f64..1.0, -0.05f64..0.1, -0.2f64..0.4).prop_map(
        |(gd_main, gd_dist, eb_main, eb_dist, eb_hill)| ScenarioParams { gd_main, gd_dist, eb_main, eb_dist, eb_hill },
    )
}

fn impact_params() -> ImpactParams {
    ImpactParams::from_toml_str(cyclepot_core::synthetic::DEFAULT_IMPACTS_TOML).unwrap()
}

fn arb_routes() -> impl Strategy<Value = Vec<RouteFlow>> {
    let route = (
        prop::collection::vec((0i64..8, 0i64..8), 2..12),
        0u32..500,
        0u32..500,
    )
        .prop_map(|(pts, a, b)| RouteFlow {
            coords: pts
                .into_iter()
                .map(|(x, y)| LonLat::new(-2.0 + x as f64 * 1e-3, 52.0 + y as f64 * 1e-3))
                .collect(),
            values: BTreeMap::from([(Scenario::Baseline, a as f64 * 0.25), (Scenario::GoDutch, b as f64 * 0.1)]),
        });
    prop::collection::vec(route, 1..20)
}

proptest! {
    #[test]
    fn scenario_levels_stay_in_bounds(
        od in arb_od(),
        d in 0.1f64..30.0,
        h in 0.0f64..10.0,
        params in arb_params(),
    ) {
        let coeffs = reference_coefficients();
        let (cycle, all) = (od.cycle as f64, od.all as f64);
        let results = run_scenarios(&od, d, h, &coeffs, &params).unwrap();
        prop_assert_eq!(results.len(), if od.gender.is_some() { 5 } else { 4 });
        for r in &results {
            match r.scenario {
                Scenario::Baseline => prop_assert_eq!(r.slc, cycle),
                Scenario::GovTarget | Scenario::GenderEqual => {
                    prop_assert!(r.slc >= cycle && r.slc <= all + 1e-9, "{:?}", r)
                }
                Scenario::GoDutch | Scenario::Ebikes => prop_assert!(r.slc >= 0.0 && r.slc <= all, "{:?}", r),
            }
            let delta = (r.slc - cycle).max(0.0);
            prop_assert!((r.displaced.total() - delta).abs() <= 1e-9 * delta.max(1.0));
            prop_assert!(r.conventional_slc <= r.slc);
        }
        let gd = results.iter().find(|r| r.scenario == Scenario::GoDutch).unwrap().slc;
        let eb = results.iter().find(|r| r.scenario == Scenario::Ebikes).unwrap().slc;
        if ebike_logit_offset(&params, d, h) >= 0.0 {
            prop_assert!(eb >= gd);
        }
    }

    #[test]
    fn godutch_ignores_observed_cycling(od in arb_od(), d in 0.1f64..30.0, h in 0.0f64..8.0, params in arb_params()) {
        let coeffs = ModelCoefficients { alpha: -2.5, ..reference_coefficients() };
        let mut other = od.clone();
        other.cycle = 0;
        other.walk = od.walk + od.cycle;
        let a = scenario_godutch(&coeffs, &params, d, h, &od).unwrap();
        let b = scenario_godutch(&coeffs, &params, d, h, &other).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn mode_shift_never_overdraws(od in arb_od(), slc_frac in 0.0f64..=1.0) {
        let slc = slc_frac * od.all as f64;
        let d = apportion_mode_shift(&od, slc);
        prop_assert!(d.walk <= od.walk as f64 && d.car <= od.car as f64 && d.other <= od.other as f64);
        prop_assert!(d.walk >= 0.0 && d.car >= 0.0 && d.other >= 0.0);
    }

    #[test]
    fn impacts_are_linear_in_people(people in 0.0f64..1e4, k in 0.0f64..50.0, minutes in 0.0f64..600.0, km in 0.0f64..30.0) {
        let p = impact_params();
        let one = deaths_avoided(people, minutes, p.rr_cycle, p.ref_min_cycle, p.benefit_cap, 0.002, 1.0);
        let scaled = deaths_avoided(k * people, minutes, p.rr_cycle, p.ref_min_cycle, p.benefit_cap, 0.002, 1.0);
        prop_assert!((scaled - k * one).abs() <= 1e-12 * (k * one).abs().max(1e-300));
        let c1 = co2_saved(people, km, &p);
        let ck = co2_saved(k * people, km, &p);
        prop_assert!((ck - k * c1).abs() <= 1e-12 * (k * c1).abs().max(1e-300));
        // Benefit saturates at the cap.
        let capped = deaths_avoided(people, 1e6, p.rr_cycle, p.ref_min_cycle, p.benefit_cap, 0.002, 1.0);
        prop_assert!(one <= capped * (1.0 + 1e-12));
    }

    #[test]
    fn overline_is_order_independent(routes in arb_routes(), seed in any::<u64>()) {
        let base = overline(&routes);
        let mut shuffled = routes.clone();
        let n = shuffled.len();
        for i in (1..n).rev() {
            shuffled.swap(i, (seed.wrapping_mul(i as u64 + 1) % (i as u64 + 1)) as usize);
        }
        let mut reversed: Vec<RouteFlow> = routes
            .iter()
            .map(|r| RouteFlow { coords: r.coords.iter().rev().copied().collect(), values: r.values.clone() })
            .collect();
        reversed.reverse();
        prop_assert_eq!(&overline(&shuffled), &base);
        prop_assert_eq!(&overline(&reversed), &base);
        prop_assert_eq!(merge_contiguous(&overline(&shuffled)), merge_contiguous(&base));
    }

    #[test]
    fn merging_conserves_length_weighted_volume(routes in arb_routes()) {
        let merged = merge_contiguous(&overline(&routes));
        for s in [Scenario::Baseline, Scenario::GoDutch] {
            let input: f64 = routes.iter().map(|r| r.values[&s] * polyline_km(&r.coords)).sum();
            let output: f64 = merged.iter().map(|m| m.values[&s] * m.length_km()).sum();
            prop_assert!((input - output).abs() <= 1e-9 * input.max(1.0), "{} vs {}", input, output);
        }
    }

    #[test]
    fn circuity_at_least_one_for_valid_routes(euclid in 0.01f64..20.0, extra in 0.0f64..3.0) {
        let c = circuity(euclid * (1.0 + extra), euclid).unwrap();
        prop_assert!(c >= 1.0 - 1e-12);
    }

    #[test]
    fn distribution_partitions_trips(rows in prop::collection::vec((0.01f64..45.0, 1u32..500, 0.0f64..=1.0), 1..60)) {
        let rows: Vec<DistanceRow> = rows
            .into_iter()
            .map(|(d, all, frac)| DistanceRow {
                d_km: d,
                all: all as f64,
                slc: vec![(Scenario::Baseline, frac * all as f64)],
            })
            .collect();
        let table = distance_distribution(&rows, &[Scenario::Baseline], &DEFAULT_BAND_EDGES_KM).unwrap();
        let trips: f64 = table.iter().map(|r| r.trips).sum();
        let want: f64 = rows.iter().map(|r| r.all).sum();
        prop_assert_eq!(trips, want);
        for r in &table {
            prop_assert!((0.0..=1.0).contains(&r.share));
        }
    }
}

struct RankedLine {
    origin: &'static str,
    dest: &'static str,
    slc: f64,
    health: f64,
}

impl cyclepot_core::pipeline::Rankable for RankedLine {
    fn origin(&self) -> &str {
        self.origin
    }
    fn dest(&self) -> &str {
        self.dest
    }
    fn rank_value(&self, _: Scenario, key: cyclepot_core::schema::RankKey) -> Option<f64> {
        match key {
            cyclepot_core::schema::RankKey::Slc => Some(self.slc),
            cyclepot_core::schema::RankKey::HealthValue => Some(self.health),
            cyclepot_core::schema::RankKey::Co2Saved => None,
        }
    }
}

#[test]
fn long_low_volume_line_can_lead_on_health() {
    use cyclepot_core::impacts::impact_for_od;
    use cyclepot_core::pipeline::rank_lines;
    use cyclepot_core::scenarios::ScenarioResult;
    use cyclepot_core::schema::RankKey;

    let p = impact_params();
    let line = |origin: &'static str, dest: &'static str, all: u64, slc: f64, km: f64| {
        let od = OdPair { origin: origin.into(), dest: dest.into(), all, cycle: 0, walk: 0, car: all, other: 0, gender: None };
        let result = ScenarioResult {
            scenario: Scenario::GoDutch,
            slc,
            displaced: apportion_mode_shift(&od, slc),
            conventional_slc: slc,
        };
        let health = impact_for_od(&od, &result, km, &p, 0.002).unwrap().health_value;
        RankedLine { origin, dest, slc, health }
    };
    let lines = [line("A", "B", 200, 60.0, 1.0), line("A", "C", 100, 20.0, 8.0)];
    let by_slc = rank_lines(&lines, Scenario::GoDutch, RankKey::Slc, 1).unwrap();
    let by_health = rank_lines(&lines, Scenario::GoDutch, RankKey::HealthValue, 1).unwrap();
    assert_eq!(by_slc[0].dest, "B");
    assert_eq!(by_health[0].dest, "C");
}
