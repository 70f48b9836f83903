//! Built-in synthetic homes.
//!
//! `home_a` and `home_b` follow the sensor layouts of the two CASAS-style
//! apartments (20 or 18 motion sensors, 12 door sensors) with eleven
//! activity classes. Every class starts and ends with a three-event
//! signature that includes a door event its zone rarely produces otherwise.
//! `interruption_pair` and `confusable_pair` are small two-class fixtures.

use chrono::NaiveDate;

use super::synth::{
    BackgroundProfile, ClassProfile, DurationProfile, HomeSpec, InterruptionSpec, TimeOfDayComponent,
    WeightedSymbol,
};
use super::Symbol;

fn on(s: &str) -> Symbol {
    Symbol::new(s, "ON")
}
fn off(s: &str) -> Symbol {
    Symbol::new(s, "OFF")
}
fn open(s: &str) -> Symbol {
    Symbol::new(s, "OPEN")
}
fn close(s: &str) -> Symbol {
    Symbol::new(s, "CLOSE")
}

fn motion_body(sensors: &[&str], weight: f64) -> Vec<WeightedSymbol> {
    sensors
        .iter()
        .flat_map(|s| [WeightedSymbol::new(*s, "ON", weight), WeightedSymbol::new(*s, "OFF", weight)])
        .collect()
}

fn door_body(doors: &[&str], weight: f64) -> Vec<WeightedSymbol> {
    doors
        .iter()
        .flat_map(|s| [WeightedSymbol::new(*s, "OPEN", weight), WeightedSymbol::new(*s, "CLOSE", weight)])
        .collect()
}

fn tod(parts: &[(f64, f64)]) -> Vec<TimeOfDayComponent> {
    parts
        .iter()
        .map(|&(hour, sd_hours)| TimeOfDayComponent {
            hour,
            sd_hours,
            weight: 1.0,
        })
        .collect()
}

struct Layout {
    bath: Vec<String>,
    bed: Vec<String>,
    kitchen: Vec<String>,
    dining: Vec<String>,
    living: Vec<String>,
    entry: Vec<String>,
}

fn motion_ids(range: std::ops::RangeInclusive<usize>) -> Vec<String> {
    range.map(|i| format!("M{i:03}")).collect()
}

fn refs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

// Door roles shared by both homes.
const BATH_DOOR: &str = "D001";
const BATH_CABINET: &str = "D002";
const BEDROOM_DOOR: &str = "D003";
const FRIDGE: &str = "D004";
const MED_CABINET: &str = "D005";
const PANTRY: &str = "D006";
const FRONT_DOOR: &str = "D007";
const GARAGE_DOOR: &str = "D008";
const LAUNDRY: &str = "D009";
const LIVING_CABINET: &str = "D010";
const DINING_CABINET: &str = "D011";
const CLOSET: &str = "D012";

const ALL_DOORS: [&str; 12] = [
    BATH_DOOR,
    BATH_CABINET,
    BEDROOM_DOOR,
    FRIDGE,
    MED_CABINET,
    PANTRY,
    FRONT_DOOR,
    GARAGE_DOOR,
    LAUNDRY,
    LIVING_CABINET,
    DINING_CABINET,
    CLOSET,
];

/// Per-class timing knobs that differ between the two homes.
struct Habits {
    hygiene: Vec<(f64, f64)>,
    meals: [f64; 3],
    medicine: Vec<(f64, f64)>,
    nap: f64,
    sleep: f64,
    toilet: f64,
    leave: Vec<(f64, f64)>,
    enter: Vec<(f64, f64)>,
    housekeeping: f64,
    bathing: f64,
}

fn casas_home(name: &str, l: &Layout, h: &Habits) -> HomeSpec {
    let (b, bd, k, dn, lv, en) = (&l.bath, &l.bed, &l.kitchen, &l.dining, &l.living, &l.entry);
    let dur = |median_secs: f64, sigma: f64| DurationProfile { median_secs, sigma };
    let with = |mut a: Vec<WeightedSymbol>, extra: Vec<WeightedSymbol>| {
        a.extend(extra);
        a
    };
    let meal_tod: Vec<(f64, f64)> = h.meals.iter().map(|&m| (m, 0.5)).collect();
    let eat_tod: Vec<(f64, f64)> = h.meals.iter().map(|&m| (m + 0.8, 0.5)).collect();

    let classes = vec![
        ClassProfile {
            name: "Personal_Hygiene".into(),
            weight: 0.16,
            begin: vec![on(&b[1]), open(BATH_CABINET), on(&b[0])],
            body: with(motion_body(&refs(b), 1.0), door_body(&[BATH_CABINET, BATH_DOOR], 0.03)),
            end: vec![off(&b[0]), close(BATH_CABINET), off(&b[1])],
            body_events: (6, 20),
            duration: dur(600.0, 0.35),
            time_of_day: tod(&h.hygiene),
        },
        ClassProfile {
            name: "Leave_Home".into(),
            weight: 0.08,
            begin: vec![on(&en[1]), on(&en[0]), open(FRONT_DOOR)],
            body: motion_body(&refs(en), 1.0),
            end: vec![close(FRONT_DOOR), on(&en[2]), off(&en[2])],
            body_events: (0, 2),
            duration: dur(60.0, 0.3),
            time_of_day: tod(&h.leave),
        },
        ClassProfile {
            name: "Enter_Home".into(),
            weight: 0.08,
            begin: vec![open(FRONT_DOOR), close(FRONT_DOOR), on(&en[0])],
            body: motion_body(&refs(en), 1.0),
            end: vec![on(&en[1]), off(&en[1]), off(&en[0])],
            body_events: (0, 2),
            duration: dur(90.0, 0.3),
            time_of_day: tod(&h.enter),
        },
        ClassProfile {
            name: "Bathing".into(),
            weight: 0.04,
            begin: vec![close(BATH_DOOR), on(&b[2]), on(&b[0])],
            body: with(motion_body(&refs(b), 1.0), door_body(&[BATH_CABINET, BATH_DOOR], 0.03)),
            end: vec![off(&b[0]), off(&b[2]), open(BATH_DOOR)],
            body_events: (12, 30),
            duration: dur(1500.0, 0.3),
            time_of_day: tod(&[(h.bathing, 1.0)]),
        },
        ClassProfile {
            name: "Meal_Preparation".into(),
            weight: 0.14,
            begin: vec![on(&k[0]), open(FRIDGE), on(&k[1])],
            body: with(
                with(motion_body(&refs(k), 1.0), door_body(&[FRIDGE], 0.3)),
                door_body(&[MED_CABINET, PANTRY], 0.02),
            ),
            end: vec![open(PANTRY), close(PANTRY), off(&k[0])],
            body_events: (15, 35),
            duration: dur(1800.0, 0.3),
            time_of_day: tod(&meal_tod),
        },
        ClassProfile {
            name: "Napping".into(),
            weight: 0.07,
            begin: vec![on(&lv[0]), open(LIVING_CABINET), on(&lv[1])],
            body: with(motion_body(&refs(lv), 1.0), door_body(&[LIVING_CABINET], 0.03)),
            end: vec![off(&lv[1]), close(LIVING_CABINET), off(&lv[0])],
            body_events: (4, 12),
            duration: dur(3600.0, 0.3),
            time_of_day: tod(&[(h.nap, 1.0)]),
        },
        ClassProfile {
            name: "Take_Medicine".into(),
            weight: 0.10,
            begin: vec![on(&k[2]), open(MED_CABINET), on(&k[3])],
            body: with(motion_body(&refs(&k[1..4]), 1.0), door_body(&[MED_CABINET], 0.3)),
            end: vec![off(&k[3]), close(MED_CABINET), off(&k[2])],
            body_events: (1, 5),
            duration: dur(120.0, 0.3),
            time_of_day: tod(&h.medicine),
        },
        ClassProfile {
            name: "Eating".into(),
            weight: 0.12,
            begin: vec![on(&dn[0]), open(DINING_CABINET), on(&dn[1])],
            body: with(
                with(motion_body(&refs(dn), 1.0), motion_body(&refs(&lv[..1]), 0.2)),
                door_body(&[DINING_CABINET], 0.03),
            ),
            end: vec![off(&dn[1]), close(DINING_CABINET), off(&dn[0])],
            body_events: (8, 20),
            duration: dur(1200.0, 0.3),
            time_of_day: tod(&eat_tod),
        },
        ClassProfile {
            name: "Housekeeping".into(),
            weight: 0.03,
            begin: vec![open(LAUNDRY), on(&lv[lv.len() - 1]), close(LAUNDRY)],
            body: with(
                with(motion_body(&refs(lv), 1.0), motion_body(&refs(k), 0.5)),
                door_body(&[LAUNDRY, GARAGE_DOOR], 0.03),
            ),
            end: vec![open(GARAGE_DOOR), close(GARAGE_DOOR), off(&lv[lv.len() - 1])],
            body_events: (15, 35),
            duration: dur(2400.0, 0.3),
            time_of_day: tod(&[(h.housekeeping, 1.5)]),
        },
        ClassProfile {
            name: "Sleeping".into(),
            weight: 0.08,
            begin: vec![on(&bd[2]), close(CLOSET), on(&bd[0])],
            body: with(motion_body(&refs(bd), 1.0), door_body(&[CLOSET], 0.03)),
            end: vec![off(&bd[0]), open(CLOSET), off(&bd[2])],
            body_events: (8, 25),
            duration: dur(25_000.0, 0.2),
            time_of_day: tod(&[(h.sleep, 0.7)]),
        },
        ClassProfile {
            name: "Bed_to_Toilet".into(),
            weight: 0.05,
            begin: vec![on(&bd[1]), open(BEDROOM_DOOR), on(&b[1])],
            body: with(
                with(motion_body(&refs(b), 1.0), motion_body(&refs(&bd[1..2]), 0.5)),
                door_body(&[BEDROOM_DOOR], 0.03),
            ),
            end: vec![off(&b[1]), close(BEDROOM_DOOR), off(&bd[1])],
            body_events: (2, 6),
            duration: dur(240.0, 0.3),
            time_of_day: tod(&[(h.toilet, 0.8)]),
        },
    ];

    let all_motion: Vec<&str> = [b, bd, k, dn, lv, en].into_iter().flat_map(|z| refs(z)).collect();
    HomeSpec {
        name: name.into(),
        start: NaiveDate::from_ymd_opt(2011, 6, 15)
            .expect("valid date")
            .and_hms_opt(0, 0, 0)
            .expect("valid time"),
        signature_noise: 0.0,
        classes,
        background: BackgroundProfile {
            symbols: with(motion_body(&all_motion, 1.0), door_body(&ALL_DOORS, 0.2)),
            events: (0, 6),
            min_gap_secs: 30.0,
        },
        interruption: None,
    }
}

/// Eleven-class home with 20 motion and 12 door sensors.
pub fn home_a() -> HomeSpec {
    let layout = Layout {
        bath: motion_ids(1..=3),
        bed: motion_ids(4..=6),
        kitchen: motion_ids(7..=11),
        dining: motion_ids(12..=13),
        living: motion_ids(14..=17),
        entry: motion_ids(18..=20),
    };
    let habits = Habits {
        hygiene: vec![(7.5, 0.7), (21.5, 0.7)],
        meals: [7.0, 12.0, 18.0],
        medicine: vec![(8.5, 0.5), (20.5, 0.5)],
        nap: 14.0,
        sleep: 23.0,
        toilet: 3.0,
        leave: vec![(9.0, 1.5), (15.0, 1.5)],
        enter: vec![(11.0, 1.5), (17.0, 1.5)],
        housekeeping: 10.0,
        bathing: 19.5,
    };
    casas_home("home_a", &layout, &habits)
}

/// Eleven-class home with 18 motion and 12 door sensors.
pub fn home_b() -> HomeSpec {
    let layout = Layout {
        bath: motion_ids(1..=3),
        bed: motion_ids(4..=6),
        kitchen: motion_ids(7..=10),
        dining: motion_ids(11..=12),
        living: motion_ids(13..=15),
        entry: motion_ids(16..=18),
    };
    let habits = Habits {
        hygiene: vec![(8.0, 0.8), (22.5, 0.6)],
        meals: [8.0, 13.0, 19.0],
        medicine: vec![(9.0, 0.5), (21.0, 0.5)],
        nap: 15.0,
        sleep: 23.5,
        toilet: 4.0,
        leave: vec![(10.0, 1.5), (16.0, 1.5)],
        enter: vec![(12.0, 1.5), (18.0, 1.5)],
        housekeeping: 11.0,
        bathing: 20.5,
    };
    casas_home("home_b", &layout, &habits)
}

/// Meal preparation and medicine intake over one shared kitchen sensor set;
/// medicine intake interrupts a third of the meal preparations.
pub fn interruption_pair() -> HomeSpec {
    let kitchen = ["M007", "M008", "M009", "M010", "M011"];
    let body = |motion: [f64; 5], fridge: f64, med: f64, pantry: f64| {
        let mut v: Vec<WeightedSymbol> = kitchen
            .iter()
            .zip(motion)
            .flat_map(|(s, w)| motion_body(&[s], w))
            .collect();
        v.extend(door_body(&[FRIDGE], fridge));
        v.extend(door_body(&[MED_CABINET], med));
        v.extend(door_body(&[PANTRY], pantry));
        v
    };
    let mut spec = home_a();
    spec.name = "interruption_pair".into();
    spec.classes = vec![
        ClassProfile {
            name: "Meal_Preparation".into(),
            weight: 0.6,
            begin: vec![on("M007"), open(FRIDGE), on("M008")],
            body: body([1.0, 1.0, 1.0, 1.0, 1.0], 0.3, 0.02, 0.02),
            end: vec![open(PANTRY), close(PANTRY), off("M007")],
            body_events: (15, 35),
            duration: DurationProfile {
                median_secs: 1800.0,
                sigma: 0.3,
            },
            time_of_day: tod(&[(7.0, 0.5), (12.0, 0.5), (18.0, 0.5)]),
        },
        ClassProfile {
            name: "Take_Medicine".into(),
            weight: 0.4,
            begin: vec![on("M009"), open(MED_CABINET), on("M010")],
            body: body([0.2, 0.2, 1.0, 1.0, 1.0], 0.05, 0.3, 0.02),
            end: vec![off("M010"), close(MED_CABINET), off("M009")],
            body_events: (1, 5),
            duration: DurationProfile {
                median_secs: 120.0,
                sigma: 0.3,
            },
            time_of_day: tod(&[(8.5, 0.5), (20.5, 0.5)]),
        },
    ];
    spec.background = BackgroundProfile {
        symbols: {
            let mut v = motion_body(&["M012", "M013", "M014", "M015", "M016", "M017"], 1.0);
            v.extend(motion_body(&kitchen, 0.3));
            v.extend(door_body(&[FRIDGE, PANTRY, MED_CABINET], 0.05));
            v
        },
        events: (0, 6),
        min_gap_secs: 30.0,
    };
    spec.interruption = Some(InterruptionSpec {
        rate: 0.3,
        class: "Take_Medicine".into(),
        targets: vec!["Meal_Preparation".into()],
    });
    spec
}

/// Personal hygiene and bed-to-toilet visits with identical sensor profiles,
/// separated only by time of day, plus an unrelated meal class.
pub fn confusable_pair() -> HomeSpec {
    let base = home_a();
    let hygiene = base
        .classes
        .iter()
        .find(|c| c.name == "Personal_Hygiene")
        .expect("preset class")
        .clone();
    let meal = base
        .classes
        .iter()
        .find(|c| c.name == "Meal_Preparation")
        .expect("preset class")
        .clone();
    let mut toilet = hygiene.clone();
    toilet.name = "Bed_to_Toilet".into();
    toilet.time_of_day = tod(&[(3.0, 0.75)]);
    let mut hygiene = hygiene;
    hygiene.time_of_day = tod(&[(7.5, 0.75)]);
    hygiene.weight = 0.35;
    toilet.weight = 0.35;
    let mut meal = meal;
    meal.weight = 0.3;
    HomeSpec {
        name: "confusable_pair".into(),
        classes: vec![hygiene, toilet, meal],
        ..base
    }
}

/// Looks up a preset by name.
pub fn by_name(name: &str) -> Option<HomeSpec> {
    match name {
        "home_a" | "home-a" => Some(home_a()),
        "home_b" | "home-b" => Some(home_b()),
        "interruption_pair" | "interruption-pair" => Some(interruption_pair()),
        "confusable_pair" | "confusable-pair" => Some(confusable_pair()),
        _ => None,
    }
}

pub const NAMES: [&str; 4] = ["home_a", "home_b", "interruption_pair", "confusable_pair"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for n in NAMES {
            by_name(n).unwrap().validate().unwrap();
        }
        assert_eq!(home_a().classes.len(), 11);
        assert_eq!(home_b().classes.len(), 11);
    }

    #[test]
    fn interruption_pair_shares_sensors() {
        let spec = interruption_pair();
        let sensors = |c: &ClassProfile| {
            let mut v: Vec<String> = c.body.iter().map(|w| w.sensor.clone()).collect();
            v.sort();
            v.dedup();
            v
        };
        assert_eq!(sensors(&spec.classes[0]), sensors(&spec.classes[1]));
    }
}
