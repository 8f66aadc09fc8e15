//! Synthetic obituary-style corpus.
//!
//! Every document is a death notice: a main sentence whose cause phrase holds
//! three keywords from its class pool, a memorial line naming a fourth, and at
//! most one class-neutral filler sentence. Keywords are drawn with Zipf
//! weights, so each class has a few common words and a tail of rare ones.
//! `template_noise` is the per-slot probability that a keyword is drawn from a
//! different class instead, which controls how hard the task is.

use super::{Document, LabelSet, OBITUARY_COUNTS};
use crate::error::{Error, Result};
use crate::numerics::SeededRng;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    /// Size of the training pool (gold + unlabeled).
    pub n_total: usize,
    pub labeled_fraction: f64,
    /// One weight per class, summing to 1.
    pub class_weights: Vec<f64>,
    pub template_noise: f64,
    pub seed: u64,
    /// Extra gold documents drawn from the same distribution, kept apart from
    /// the pool for validation and testing.
    pub n_heldout: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_total: 2000,
            labeled_fraction: 0.03,
            class_weights: default_class_weights(),
            template_noise: 0.02,
            seed: 7,
            n_heldout: 1000,
        }
    }
}

/// Class weights proportional to the original per-class label counts.
pub fn default_class_weights() -> Vec<f64> {
    let total: u32 = OBITUARY_COUNTS.iter().sum();
    OBITUARY_COUNTS
        .iter()
        .map(|&c| f64::from(c) / f64::from(total))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthCorpus {
    pub label_set: LabelSet,
    /// The pool: exactly `round(labeled_fraction * n_total)` gold documents,
    /// the rest unlabeled.
    pub documents: Vec<Document>,
    /// True labels of the unlabeled pool documents. Evaluation only.
    pub sealed_truth: Vec<Document>,
    pub heldout: Vec<Document>,
}

/// Splits `total` into integer parts proportional to `weights` (largest
/// remainder, ties to the lower index).
pub fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut parts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = parts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        parts[i] += 1;
    }
    parts
}

pub fn synth_corpus(cfg: &SynthConfig) -> Result<SynthCorpus> {
    let label_set = LabelSet::obituary();
    let c = label_set.len();
    if cfg.n_total < c * 10 {
        return Err(Error::param(format!(
            "n_total must be at least {}, got {}",
            c * 10,
            cfg.n_total
        )));
    }
    if !(cfg.labeled_fraction > 0.0 && cfg.labeled_fraction <= 1.0) {
        return Err(Error::param(format!(
            "labeled_fraction must be in (0, 1], got {}",
            cfg.labeled_fraction
        )));
    }
    if cfg.class_weights.len() != c {
        return Err(Error::param(format!(
            "expected {c} class weights, got {}",
            cfg.class_weights.len()
        )));
    }
    if cfg.class_weights.iter().any(|w| w.is_nan() || *w < 0.0) {
        return Err(Error::param("class weights must be non-negative"));
    }
    let wsum: f64 = cfg.class_weights.iter().sum();
    if (wsum - 1.0).abs() > 1e-6 {
        return Err(Error::param(format!("class weights sum to {wsum}, not 1")));
    }
    if !(0.0..=1.0).contains(&cfg.template_noise) {
        return Err(Error::param(format!(
            "template_noise must be in [0, 1], got {}",
            cfg.template_noise
        )));
    }

    let n_gold = (cfg.labeled_fraction * cfg.n_total as f64).round() as usize;
    let gold_counts = apportion(n_gold, &cfg.class_weights);
    let rest_counts = apportion(cfg.n_total - n_gold, &cfg.class_weights);
    let held_counts = apportion(cfg.n_heldout, &cfg.class_weights);

    let root = SeededRng::new(cfg.seed, 0);
    let gen = Generator {
        noise: cfg.template_noise,
    };

    // Pool: classes laid out then shuffled, so ids carry no label signal.
    let mut slots: Vec<(usize, bool)> = Vec::with_capacity(cfg.n_total);
    for k in 0..c {
        slots.extend(std::iter::repeat_n((k, true), gold_counts[k]));
        slots.extend(std::iter::repeat_n((k, false), rest_counts[k]));
    }
    let mut order_rng = root.derive(1);
    order_rng.shuffle(&mut slots);

    let mut text_rng = root.derive(2);
    let mut documents = Vec::with_capacity(cfg.n_total);
    let mut sealed_truth = Vec::new();
    for (i, &(k, gold)) in slots.iter().enumerate() {
        let id = format!("doc-{i:05}");
        let text = gen.document(k, &mut text_rng);
        let name = label_set.name(k);
        if gold {
            documents.push(Document::gold(id, text, name));
        } else {
            sealed_truth.push(Document::gold(id.clone(), text.clone(), name));
            documents.push(Document::unlabeled(id, text));
        }
    }

    let mut held_slots: Vec<usize> = (0..c)
        .flat_map(|k| std::iter::repeat_n(k, held_counts[k]))
        .collect();
    let mut held_order = root.derive(3);
    held_order.shuffle(&mut held_slots);
    let mut held_rng = root.derive(4);
    let heldout = held_slots
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            Document::gold(
                format!("held-{i:05}"),
                gen.document(k, &mut held_rng),
                label_set.name(k),
            )
        })
        .collect();

    Ok(SynthCorpus {
        label_set,
        documents,
        sealed_truth,
        heldout,
    })
}

struct Generator {
    noise: f64,
}

impl Generator {
    fn keyword(&self, class: usize, rng: &mut SeededRng) -> &'static str {
        let source = if f64::from(rng.uniform()) < self.noise {
            // a different class, uniformly
            let other = rng.below(KEYWORDS.len() - 1);
            if other >= class {
                other + 1
            } else {
                other
            }
        } else {
            class
        };
        let pool = KEYWORDS[source];
        let total: f64 = (1..=pool.len()).map(zipf_weight).sum();
        let mut u = f64::from(rng.uniform()) * total;
        for (r, kw) in pool.iter().enumerate() {
            let w = zipf_weight(r + 1);
            if u < w {
                return kw;
            }
            u -= w;
        }
        pool[pool.len() - 1]
    }

    fn document(&self, class: usize, rng: &mut SeededRng) -> String {
        let first = pick(FIRST_NAMES, rng);
        let last = pick(SURNAMES, rng);
        let town = pick(TOWNS, rng);
        let when = pick(WHEN, rng);
        let kw1 = self.keyword(class, rng);
        let kw2 = self.keyword(class, rng);
        let kw3 = self.keyword(class, rng);
        let cause = pick(CAUSE_FRAMES, rng)
            .replace("{a}", kw1)
            .replace("{b}", kw2)
            .replace("{c}", kw3);
        let mut text = format!("{first} {last} of {town} passed away {when} {cause}.");
        let memorial = pick(MEMORIAL, rng).replace("{k}", self.keyword(class, rng));
        text.push(' ');
        text.push_str(&memorial);
        let n_fill = rng.below(2);
        for _ in 0..n_fill {
            let f = pick(FILLERS, rng)
                .replace("{rel}", pick(RELATIVES, rng))
                .replace("{hobby}", pick(HOBBIES, rng))
                .replace("{place}", pick(PLACES, rng))
                .replace("{day}", pick(DAYS, rng));
            text.push(' ');
            text.push_str(&f);
        }
        text
    }
}

/// Keyword ranks follow a Zipf law, so a few words carry most of a class.
fn zipf_weight(rank: usize) -> f64 {
    (rank as f64).powf(-ZIPF_EXPONENT)
}

fn pick<'a>(pool: &[&'a str], rng: &mut SeededRng) -> &'a str {
    pool[rng.below(pool.len())]
}

const ZIPF_EXPONENT: f64 = 1.5;

const KEYWORDS: [&[&str]; 8] = [
    &[
        "cancer",
        "tumor",
        "leukemia",
        "lymphoma",
        "carcinoma",
        "melanoma",
        "chemotherapy",
        "oncology",
        "metastatic",
        "sarcoma",
        "myeloma",
        "glioblastoma",
    ],
    &[
        "heart",
        "cardiac",
        "stroke",
        "coronary",
        "arrhythmia",
        "aneurysm",
        "hypertension",
        "infarction",
        "cardiovascular",
        "embolism",
        "arterial",
        "valve",
    ],
    &[
        "accident",
        "crash",
        "collision",
        "drowning",
        "fall",
        "highway",
        "vehicle",
        "motorcycle",
        "tractor",
        "injuries",
        "wreck",
        "fire",
    ],
    &[
        "pneumonia",
        "copd",
        "emphysema",
        "asthma",
        "lung",
        "respiratory",
        "bronchitis",
        "breathing",
        "fibrosis",
        "pulmonary",
        "influenza",
        "oxygen",
    ],
    &[
        "alzheimer",
        "dementia",
        "parkinson",
        "als",
        "epilepsy",
        "neurological",
        "sclerosis",
        "seizure",
        "huntington",
        "brain",
        "neuropathy",
        "memory",
    ],
    &[
        "suicide",
        "despair",
        "depression",
        "anguish",
        "hopelessness",
        "darkness",
        "demons",
        "selfharm",
        "overdose",
        "mental",
        "torment",
        "crisis",
    ],
    &[
        "liver",
        "cirrhosis",
        "pancreatitis",
        "crohn",
        "colitis",
        "bowel",
        "gastrointestinal",
        "hepatic",
        "intestinal",
        "digestive",
        "ulcer",
        "gallbladder",
    ],
    &[
        "covid",
        "coronavirus",
        "pandemic",
        "virus",
        "quarantine",
        "ventilator",
        "isolation",
        "outbreak",
        "infection",
        "sars",
        "vaccine",
        "icu",
    ],
];

const MEMORIAL: &[&str] = &[
    "Donations may be made to the {k} research fund.",
    "The family asks that gifts support {k} awareness.",
    "Memorial gifts may go to the {k} foundation.",
    "Contributions in remembrance may be sent to the {k} society.",
];

const CAUSE_FRAMES: &[&str] = &[
    "after a long battle with {a}, {b} and {c}",
    "following complications of {a} and {b} with {c}",
    "due to {a} related {b} and {c}",
    "after a sudden {a} and {b}, then {c}",
    "as a result of {a} with {b} and {c}",
    "from {a} after months of {b} and {c}",
];

const FIRST_NAMES: &[&str] = &[
    "Mary", "John", "Patricia", "Robert", "Linda", "Michael", "Barbara", "William", "Helen",
    "George", "Ruth", "Frank",
];

const SURNAMES: &[&str] = &[
    "Smith", "Johnson", "Williams", "Brown", "Jones", "Miller", "Davis", "Wilson", "Anderson",
    "Taylor", "Moore", "Clark",
];

const TOWNS: &[&str] = &[
    "Springfield",
    "Riverside",
    "Fairview",
    "Greenville",
    "Madison",
    "Georgetown",
    "Salem",
    "Clinton",
];

const WHEN: &[&str] = &[
    "peacefully at home",
    "on Sunday",
    "on Monday evening",
    "last week",
    "surrounded by family",
    "unexpectedly on Friday",
    "at the age of wisdom",
    "in the early morning",
];

const FILLERS: &[&str] = &[
    "She is survived by her loving {rel}.",
    "He is survived by his devoted {rel}.",
    "A celebration of life will be held at {place} on {day}.",
    "In lieu of flowers donations may be made to {place}.",
    "They loved {hobby} and spending time with family.",
    "Friends remember a generous spirit who enjoyed {hobby}.",
    "Visitation will take place on {day} at {place}.",
    "The family thanks the caring staff and their {rel}.",
];

const RELATIVES: &[&str] = &[
    "husband",
    "wife",
    "children",
    "grandchildren",
    "sister",
    "brother",
    "nieces and nephews",
    "partner",
];

const HOBBIES: &[&str] = &[
    "fishing",
    "gardening",
    "baking",
    "golf",
    "reading",
    "woodworking",
    "travel",
    "music",
    "quilting",
];

const PLACES: &[&str] = &[
    "St. Mary Church",
    "the community hall",
    "Oak Grove Chapel",
    "the local library",
    "Riverside Funeral Home",
    "the family farm",
];

const DAYS: &[&str] = &[
    "Saturday",
    "Sunday",
    "Tuesday",
    "Thursday",
    "Friday afternoon",
];
