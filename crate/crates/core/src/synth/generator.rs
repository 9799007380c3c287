use chrono::{Datelike, Days, NaiveDate};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::featurize::PhaseBucket;
use crate::ingest::{Case, Corpus, Decimal2, ItemType, LineItem, TimekeeperRole};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub n_cases: usize,
    pub items_min: usize,
    pub items_max: usize,
    pub seed: u64,
    /// Share of cases outside the litigation category.
    pub other_category_fraction: f64,
    /// Share of litigation cases billed as a handful of flat fees.
    pub flat_fee_fraction: f64,
    /// Share of litigation cases that settle early with few items.
    pub sparse_fraction: f64,
    pub expense_fraction: f64,
    pub math_error_rate: f64,
    pub first_open_date: NaiveDate,
    /// Open dates are spread uniformly over this many days.
    pub open_window_days: u32,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            n_cases: 360,
            items_min: 150,
            items_max: 300,
            seed: 0,
            other_category_fraction: 0.12,
            flat_fee_fraction: 0.05,
            sparse_fraction: 0.08,
            expense_fraction: 0.08,
            math_error_rate: 0.002,
            first_open_date: NaiveDate::from_ymd_opt(2012, 1, 1).expect("valid date"),
            open_window_days: 3650,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.items_min == 0 || self.items_min > self.items_max {
            return bad(format!(
                "items range {}..={} is empty",
                self.items_min, self.items_max
            ));
        }
        for (name, v) in [
            ("other_category_fraction", self.other_category_fraction),
            ("flat_fee_fraction", self.flat_fee_fraction),
            ("sparse_fraction", self.sparse_fraction),
            ("expense_fraction", self.expense_fraction),
            ("math_error_rate", self.math_error_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} outside [0, 1]"));
            }
        }
        if self.flat_fee_fraction + self.sparse_fraction > 1.0 {
            return bad("flat_fee_fraction + sparse_fraction exceeds 1".into());
        }
        Ok(())
    }
}

pub const LITIGATION: &str = "Litigation";
const OTHER_CATEGORIES: [&str; 3] = ["Employment", "Corporate", "Intellectual Property"];

const TASKS: [&[&str]; 5] = [
    &["L110", "L120", "L130", "L140", "L150", "L160"],
    &["L210", "L220", "L230", "L240", "L250", "L260"],
    &["L310", "L320", "L330", "L340", "L350"],
    &["L410", "L420", "L430", "L440", "L450", "L460"],
    &["L510", "L520", "L530"],
];
const COUNSELING_TASKS: [&str; 6] = ["C100", "C200", "C300", "C310", "C320", "C400"];
const ACTIVITIES: [&str; 9] = [
    "A101", "A102", "A103", "A104", "A105", "A106", "A107", "A108", "A109",
];
const ACTIVITY_WEIGHTS: [f64; 9] = [6.0, 4.0, 8.0, 5.0, 3.0, 4.0, 2.0, 1.5, 1.0];
const EXPENSE_CODES: [&str; 8] = [
    "E101", "E102", "E105", "E106", "E108", "E110", "E112", "E201",
];

/// Billing profiles of full-lifecycle litigation: phase weights and the last
/// phase reached.
const ARCHETYPES: [([f64; 5], usize); 4] = [
    ([0.12, 0.30, 0.18, 0.32, 0.08], 5),
    ([0.10, 0.62, 0.22, 0.06, 0.00], 4),
    ([0.22, 0.25, 0.45, 0.08, 0.00], 4),
    ([0.15, 0.40, 0.25, 0.20, 0.00], 4),
];

/// Per-phase duration ranges in days; phase windows never overlap.
const PHASE_DAYS: [(u32, u32); 5] = [(100, 220), (150, 420), (120, 380), (60, 200), (90, 280)];
const PHASE_GAP: (u32, u32) = (5, 30);

struct Timekeeper {
    id: String,
    role: TimekeeperRole,
    rate_cents: i64,
}

struct Draft {
    days: u32,
    item_type: ItemType,
    task_code: String,
    activity_code: String,
    expense_code: String,
    keeper: usize,
    hours: i64,
    total: Option<i64>,
}

fn team(rng: &mut ChaCha8Rng, case_idx: usize) -> Vec<Timekeeper> {
    let mut out = Vec::new();
    let mut push = |rng: &mut ChaCha8Rng, role: TimekeeperRole, lo: i64, hi: i64, n: usize| {
        for _ in 0..n {
            let id = format!("TK{:05}{:02}", case_idx + 1, out.len() + 1);
            out.push(Timekeeper {
                id,
                role,
                rate_cents: rng.gen_range(lo..=hi) * 500,
            });
        }
    };
    let np = rng.gen_range(1..=2);
    let na = rng.gen_range(1..=3);
    let nl = rng.gen_range(1..=2);
    push(rng, TimekeeperRole::Partner, 90, 180, np);
    push(rng, TimekeeperRole::Associate, 50, 100, na);
    push(rng, TimekeeperRole::Paralegal, 24, 44, nl);
    out
}

fn pick_keeper(rng: &mut ChaCha8Rng, team: &[Timekeeper]) -> usize {
    let w: Vec<f64> = team
        .iter()
        .map(|t| match t.role {
            TimekeeperRole::Partner => 1.0,
            TimekeeperRole::Associate => 2.5,
            TimekeeperRole::Paralegal => 1.2,
            TimekeeperRole::Other => 0.5,
        })
        .collect();
    WeightedIndex::new(&w)
        .expect("positive weights")
        .sample(rng)
}

fn pick_task(rng: &mut ChaCha8Rng, codes: &[&str]) -> String {
    // earlier codes in a phase are billed more often
    let w: Vec<f64> = (0..codes.len())
        .map(|i| 1.0 / (1.0 + 0.5 * i as f64))
        .collect();
    codes[WeightedIndex::new(&w)
        .expect("positive weights")
        .sample(rng)]
    .to_string()
}

fn pick_activity(rng: &mut ChaCha8Rng) -> String {
    ACTIVITIES[WeightedIndex::new(ACTIVITY_WEIGHTS)
        .expect("positive weights")
        .sample(rng)]
    .to_string()
}

fn hourly(rng: &mut ChaCha8Rng, days: u32, task: String, keeper: usize) -> Draft {
    Draft {
        days,
        item_type: ItemType::Fee,
        task_code: task,
        activity_code: pick_activity(rng),
        expense_code: String::new(),
        keeper,
        hours: rng.gen_range(1..=60) * 10,
        total: None,
    }
}

fn expense(rng: &mut ChaCha8Rng, days: u32) -> Draft {
    Draft {
        days,
        item_type: ItemType::Expense,
        task_code: String::new(),
        activity_code: String::new(),
        expense_code: EXPENSE_CODES[rng.gen_range(0..EXPENSE_CODES.len())].to_string(),
        keeper: usize::MAX,
        hours: 0,
        total: Some(rng.gen_range(500..=150_000)),
    }
}

/// Consecutive, non-overlapping phase windows `[start, end)` in days since open.
fn phase_windows(rng: &mut ChaCha8Rng, phases: usize) -> Vec<(u32, u32)> {
    let mut start = 0;
    (0..phases)
        .map(|p| {
            let (lo, hi) = PHASE_DAYS[p];
            let end = start + rng.gen_range(lo..=hi);
            let w = (start, end);
            start = end + rng.gen_range(PHASE_GAP.0..=PHASE_GAP.1);
            w
        })
        .collect()
}

fn lifecycle_drafts(
    rng: &mut ChaCha8Rng,
    spec: &CorpusSpec,
    weights: &[f64],
    n_items: usize,
    keepers: &[Timekeeper],
) -> Vec<Draft> {
    let windows = phase_windows(rng, weights.len());
    let span_end = windows.last().map_or(1, |w| w.1);
    let phase_pick = WeightedIndex::new(weights).expect("positive weights");
    (0..n_items)
        .map(|_| {
            if rng.gen_bool(spec.expense_fraction) {
                let days = rng.gen_range(0..span_end);
                return expense(rng, days);
            }
            let p = phase_pick.sample(rng);
            let (lo, hi) = windows[p];
            let days = rng.gen_range(lo..hi);
            let task = pick_task(rng, TASKS[p]);
            let k = pick_keeper(rng, keepers);
            hourly(rng, days, task, k)
        })
        .collect()
}

fn jitter(rng: &mut ChaCha8Rng, base: &[f64], scale: f64) -> Vec<f64> {
    base.iter()
        .map(|&w| {
            if w == 0.0 {
                0.0
            } else {
                (w * (1.0 + scale * (rng.gen::<f64>() * 2.0 - 1.0))).max(0.01)
            }
        })
        .collect()
}

fn generate_case(spec: &CorpusSpec, idx: usize) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(idx as u64 + 1);
    let case_id = format!("CASE{:05}", idx + 1);
    let open_date =
        spec.first_open_date + Days::new(rng.gen_range(0..=spec.open_window_days) as u64);
    let keepers = team(&mut rng, idx);
    let n_items = rng.gen_range(spec.items_min..=spec.items_max);

    let (category, drafts) = if rng.gen_bool(spec.other_category_fraction) {
        let cat = OTHER_CATEGORIES[rng.gen_range(0..OTHER_CATEGORIES.len())];
        let span = rng.gen_range(60..720);
        let drafts = (0..n_items)
            .map(|_| {
                let days = rng.gen_range(0..span);
                if rng.gen_bool(spec.expense_fraction) {
                    return expense(&mut rng, days);
                }
                let task = COUNSELING_TASKS[rng.gen_range(0..COUNSELING_TASKS.len())].to_string();
                let k = pick_keeper(&mut rng, &keepers);
                hourly(&mut rng, days, task, k)
            })
            .collect();
        (cat, drafts)
    } else {
        let u: f64 = rng.gen();
        let drafts = if u < spec.flat_fee_fraction {
            let n = rng.gen_range(1..=4);
            let span = rng.gen_range(30..900);
            (0..n)
                .map(|j| {
                    let days = rng.gen_range(0..span);
                    if j > 0 && rng.gen_bool(0.3) {
                        return expense(&mut rng, days);
                    }
                    Draft {
                        days,
                        item_type: ItemType::Fee,
                        task_code: TASKS[j.min(4)][0].to_string(),
                        activity_code: "A101".into(),
                        expense_code: String::new(),
                        keeper: 0,
                        hours: 0,
                        total: Some(rng.gen_range(20..=400) * 25_000),
                    }
                })
                .collect()
        } else if u < spec.flat_fee_fraction + spec.sparse_fraction {
            let n = rng.gen_range(3..20).min(n_items);
            let phases = rng.gen_range(1..=2);
            let w = [0.7, 0.3];
            lifecycle_drafts(&mut rng, spec, &w[..phases], n, &keepers)
        } else {
            let (base, last) = ARCHETYPES[rng.gen_range(0..ARCHETYPES.len())];
            let w = jitter(&mut rng, &base[..last], 0.35);
            lifecycle_drafts(&mut rng, spec, &w, n_items, &keepers)
        };
        (LITIGATION, drafts)
    };

    let mut drafts = drafts;
    drafts.sort_by_key(|d| d.days);
    let items = drafts
        .into_iter()
        .enumerate()
        .map(|(seq, d)| {
            let date = open_date + Days::new(d.days as u64);
            let (keeper_id, role, rate) = if d.item_type == ItemType::Expense {
                (format!("TK{:05}00", idx + 1), TimekeeperRole::Other, 0)
            } else {
                let k = &keepers[d.keeper];
                let rate = if d.total.is_some() { 0 } else { k.rate_cents };
                (k.id.clone(), k.role, rate)
            };
            let total = d.total.unwrap_or_else(|| {
                // hours carry 2 decimals, so hours * rate is in 1e-4 units
                let exact = d.hours * rate;
                let cents = (exact + 50) / 100;
                if rng.gen_bool(spec.math_error_rate) {
                    cents + rng.gen_range(100..5_000)
                } else {
                    cents
                }
            });
            LineItem {
                line_id: format!("{case_id}-{:04}", seq + 1),
                invoice_id: format!("{case_id}-{:04}{:02}", date.year(), date.month()),
                case_id: case_id.clone(),
                service_date: date,
                item_type: d.item_type,
                task_code: d.task_code,
                activity_code: d.activity_code,
                expense_code: d.expense_code,
                timekeeper_id: keeper_id,
                timekeeper_role: role,
                hours: Decimal2::from_hundredths(d.hours),
                rate: Decimal2::from_hundredths(rate),
                total: Decimal2::from_hundredths(total),
                description: String::new(),
            }
        })
        .collect();
    Case {
        case_id,
        category: category.to_string(),
        open_date,
        items,
    }
}

/// Seeded synthetic corpus. Each case draws from its own RNG stream, so the
/// output does not depend on the number of worker threads.
pub fn gen_corpus(spec: &CorpusSpec) -> Result<Corpus, SynthError> {
    spec.validate()?;
    let cases: Vec<Case> = (0..spec.n_cases)
        .into_par_iter()
        .map(|i| generate_case(spec, i))
        .collect();
    Ok(Corpus {
        cases,
        ..Corpus::default()
    })
}

/// Share of fee items whose days since open are at least those of every fee
/// item in an earlier litigation phase of the same case.
pub fn phase_order_audit(corpus: &Corpus) -> f64 {
    let mut ordered = 0usize;
    let mut total = 0usize;
    for case in &corpus.cases {
        let mut max_by_phase = [None::<NaiveDate>; PhaseBucket::LITIGATION_PHASES];
        let fees: Vec<(usize, NaiveDate)> = case
            .items
            .iter()
            .filter(|it| it.item_type == ItemType::Fee)
            .filter_map(|it| {
                PhaseBucket::of_task_code(&it.task_code).map(|p| (p.index(), it.service_date))
            })
            .collect();
        for &(p, d) in &fees {
            let m = &mut max_by_phase[p];
            *m = Some(m.map_or(d, |x| x.max(d)));
        }
        for &(p, d) in &fees {
            total += 1;
            if max_by_phase[..p].iter().flatten().all(|&m| m <= d) {
                ordered += 1;
            }
        }
    }
    if total == 0 {
        1.0
    } else {
        ordered as f64 / total as f64
    }
}
