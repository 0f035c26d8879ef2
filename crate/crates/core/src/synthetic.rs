//! Seeded synthetic campaigns for tests, demos and offline fixtures.
//!
//! Votes come from simulated approval ballots drawn from a hidden linear
//! preference over project words, category, district and cost.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};

use crate::data::{Campaign, CampaignMeta, Money, Project};

const TOPICS: &[(&str, &[&str])] = &[
    ("environment", &["trees", "garden", "park", "green", "flowers", "compost", "pond", "meadow", "orchard", "shade"]),
    ("mobility", &["bike", "lane", "crossing", "sidewalk", "bus", "parking", "lighting", "ramp", "traffic", "path"]),
    ("culture", &["library", "mural", "concert", "festival", "theatre", "books", "art", "music", "cinema", "heritage"]),
    ("sport", &["playground", "football", "court", "fitness", "pool", "skate", "running", "climbing", "tennis", "gym"]),
    ("social", &["seniors", "youth", "workshop", "kitchen", "support", "care", "meeting", "shelter", "repair", "language"]),
];

const DISTRICTS: &[&str] = &["north", "south", "east", "west", "centre"];

const FILLER: &[&str] = &["new", "improved", "local", "shared", "public", "small", "modern", "open"];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub city: String,
    pub year: i32,
    pub language: String,
    pub currency: String,
    pub projects: usize,
    pub voters: u64,
    pub max_approvals: u32,
    /// Budget as a fraction of the summed project costs.
    pub budget_share: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            city: "Synthville".into(),
            year: 2024,
            language: "en".into(),
            currency: "EUR".into(),
            projects: 50,
            voters: 5000,
            max_approvals: 3,
            budget_share: 0.3,
        }
    }
}

/// The hidden preference shared by all campaigns drawn from one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenPreference {
    pub words: BTreeMap<String, f64>,
    pub categories: BTreeMap<String, f64>,
    pub districts: BTreeMap<String, f64>,
    /// Coefficient on `ln(cost / 50 000)`.
    pub cost: f64,
}

impl HiddenPreference {
    pub fn sample(rng: &mut impl Rng) -> Self {
        let word = Normal::new(0.0, 0.8).unwrap();
        let group = Normal::new(0.0, 0.4).unwrap();
        let mut words = BTreeMap::new();
        for (_, vocab) in TOPICS {
            for w in *vocab {
                words.insert(w.to_string(), word.sample(rng));
            }
        }
        HiddenPreference {
            words,
            categories: TOPICS.iter().map(|(c, _)| (c.to_string(), group.sample(rng))).collect(),
            districts: DISTRICTS.iter().map(|d| (d.to_string(), group.sample(rng))).collect(),
            cost: -0.4,
        }
    }

    /// Linear utility of a project; unknown words and labels contribute 0.
    pub fn score(&self, p: &Project) -> f64 {
        let words = crate::text::words(&p.description);
        let word_sum: f64 = words.iter().filter_map(|w| self.words.get(w)).sum();
        let word_mean = if words.is_empty() { 0.0 } else { word_sum / words.len() as f64 };
        self.categories.get(&p.category).copied().unwrap_or(0.0)
            + self.districts.get(&p.district).copied().unwrap_or(0.0)
            + 4.0 * word_mean
            + self.cost * (p.cost.as_major_f64() / 50_000.0).ln()
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

fn draw_project(index: usize, rng: &mut impl Rng) -> Project {
    let (category, vocab) = TOPICS[rng.random_range(0..TOPICS.len())];
    let district = DISTRICTS[rng.random_range(0..DISTRICTS.len())];
    let n_words = rng.random_range(3..=6);
    let mut picked: Vec<&str> = Vec::new();
    while picked.len() < n_words {
        let w = vocab[rng.random_range(0..vocab.len())];
        if !picked.contains(&w) {
            picked.push(w);
        }
    }
    let filler = FILLER[rng.random_range(0..FILLER.len())];
    let title = capitalize(&format!("{filler} {} {}", picked[0], picked[1]));
    let description = format!(
        "A {filler} project in the {district} district: {}. It brings {} and {} to residents.",
        picked.join(", "),
        picked[0],
        picked[n_words - 1]
    );
    let exponent: f64 = rng.random_range(3.5..5.5);
    let cost = ((10f64.powf(exponent) / 100.0).round() as i64).max(1) * 100;
    Project {
        id: format!("p{:03}", index + 1),
        title,
        description,
        category: category.to_string(),
        cost: Money::from_major(cost),
        district: district.to_string(),
        votes: None,
    }
}

/// Draws `k` distinct indices with probability proportional to `weights`,
/// sequentially without replacement.
fn draw_ballot(weights: &[f64], k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut w = weights.to_vec();
    let mut chosen = Vec::with_capacity(k);
    for _ in 0..k.min(w.len()) {
        let total: f64 = w.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = w.len() - 1;
        for (i, wi) in w.iter().enumerate() {
            if *wi > 0.0 && u < *wi {
                pick = i;
                break;
            }
            u -= wi;
        }
        while w[pick] == 0.0 {
            pick -= 1;
        }
        chosen.push(pick);
        w[pick] = 0.0;
    }
    chosen
}

fn campaign_from(spec: &SyntheticSpec, pref: &HiddenPreference, rng: &mut impl Rng) -> Campaign {
    let mut projects: Vec<Project> = (0..spec.projects).map(|i| draw_project(i, rng)).collect();
    let scores: Vec<f64> = projects.iter().map(|p| pref.score(p)).collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();

    let mut counts = vec![0u64; spec.projects];
    for _ in 0..spec.voters {
        let k = rng.random_range(1..=spec.max_approvals as usize);
        for i in draw_ballot(&weights, k, rng) {
            counts[i] += 1;
        }
    }
    for (p, c) in projects.iter_mut().zip(&counts) {
        p.votes = Some(*c);
    }
    let total_cost: i64 = projects.iter().map(|p| p.cost.minor()).sum();
    let budget = Money::from_minor(((total_cost as f64 * spec.budget_share) / 100.0).round() as i64 * 100);
    Campaign {
        meta: CampaignMeta {
            id: None,
            city: spec.city.clone(),
            year: spec.year,
            currency: spec.currency.clone(),
            budget,
            voters: spec.voters,
            total_votes: counts.iter().sum(),
            max_approvals: spec.max_approvals,
            language: spec.language.clone(),
            translated: false,
        },
        projects,
    }
}

/// A single campaign from `seed`.
pub fn synthetic_campaign(spec: &SyntheticSpec, seed: u64) -> Campaign {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pref = HiddenPreference::sample(&mut rng);
    campaign_from(spec, &pref, &mut rng)
}

/// A training campaign (two years earlier, `train_projects` proposals) and an
/// evaluation campaign sharing one hidden preference.
pub fn synthetic_pair(spec: &SyntheticSpec, train_projects: usize, seed: u64) -> (Campaign, Campaign) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pref = HiddenPreference::sample(&mut rng);
    let train_spec = SyntheticSpec { year: spec.year - 2, projects: train_projects, ..spec.clone() };
    let train = campaign_from(&train_spec, &pref, &mut rng);
    let eval = campaign_from(spec, &pref, &mut rng);
    (train, eval)
}

/// Multinomial counts for `total` draws over `probs` via sequential binomials.
pub fn multinomial(probs: &[f64], total: u64, rng: &mut impl Rng) -> Vec<u64> {
    let mut remaining = total;
    let mut mass = 1.0;
    let mut out = Vec::with_capacity(probs.len());
    for (i, p) in probs.iter().enumerate() {
        if i + 1 == probs.len() {
            out.push(remaining);
            break;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let c = Binomial::new(remaining, q).unwrap().sample(rng);
        out.push(c);
        remaining -= c;
        mass -= p;
    }
    out
}
