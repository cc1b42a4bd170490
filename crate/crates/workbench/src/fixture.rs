//! Deterministic synthetic market used by the bundled fixture and tests.
//!
//! Authors and products lean red or blue; reviewing and co-purchasing favor
//! the same side, so political labels on a handful of books propagate to
//! the rest of the market.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use polimarket::ingest::MoralVector;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lean {
    Red,
    Blue,
    Neutral,
}

#[derive(Debug, Clone)]
pub struct FixtureProduct {
    pub asin: String,
    pub title: String,
    pub path: Vec<&'static str>,
    pub lean: Lean,
    pub political: bool,
    pub brand: Option<String>,
}

#[derive(Debug, Clone)]
pub struct FixtureSpec {
    pub seed: u64,
    pub political_per_side: usize,
    pub authors: usize,
    pub reviews_per_author: (usize, usize),
    /// (main-category path, products, share of red / blue leaning products)
    pub segments: Vec<(Vec<&'static str>, usize, f64, f64)>,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            seed: 2024,
            political_per_side: 8,
            authors: 110,
            reviews_per_author: (20, 26),
            segments: vec![
                (vec!["Books", "Literature & Fiction"], 10, 0.3, 0.3),
                (vec!["CDs & Vinyl", "Folk"], 10, 0.2, 0.6),
                (vec!["Sports & Outdoors", "Hunting & Fishing"], 10, 0.7, 0.1),
                (vec!["Automotive", "Tools & Equipment"], 8, 0.6, 0.2),
                (vec!["Home & Kitchen", "Cookware"], 8, 0.3, 0.3),
                (vec!["Movies & TV", "Documentary"], 8, 0.2, 0.6),
            ],
        }
    }
}

/// Generated input files, as text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fixture {
    pub reviews: String,
    pub metadata: String,
    pub seeds: String,
    pub moral: String,
}

const RED_TITLES: [&str; 10] = [
    "The Conservative Mind",
    "Liberty and Tyranny",
    "Ordered Liberty Today",
    "The Road Back Home",
    "Faith of Our Fathers",
    "Small Government Big Nation",
    "The Frontier Tradition",
    "Heritage and Duty",
    "Patriots of the Plains",
    "Sound Money Now",
];

const BLUE_TITLES: [&str; 10] = [
    "The Liberal Imagination",
    "A People's Reckoning",
    "The Fair Share Society",
    "Common Ground Rising",
    "Voices of the Movement",
    "The Open Society Revisited",
    "Green New Horizons",
    "Justice Delayed",
    "The Progressive Promise",
    "Equal Measures",
];

const BRANDS: [&str; 8] = [
    "Northwind",
    "Cobalt",
    "Ridgeway",
    "Meridian",
    "Sunfield",
    "Bluepoint",
    "Granite",
    "Lakeshore",
];

fn asin(i: usize) -> String {
    format!("B{i:09}")
}

pub fn products(spec: &FixtureSpec, rng: &mut ChaCha8Rng) -> Vec<FixtureProduct> {
    let mut out = Vec::new();
    for (side, titles, sub) in [
        (Lean::Red, &RED_TITLES, "Conservatism & Liberalism"),
        (Lean::Blue, &BLUE_TITLES, "Political Ideologies"),
    ] {
        for t in titles.iter().take(spec.political_per_side) {
            out.push(FixtureProduct {
                asin: asin(out.len() + 1),
                title: format!("{t}: Essays and Arguments"),
                path: vec!["Books", "Politics & Social Sciences", sub],
                lean: side,
                political: true,
                brand: Some(
                    if side == Lean::Red {
                        "Eagle Press"
                    } else {
                        "Harbor Books"
                    }
                    .into(),
                ),
            });
        }
    }
    for (path, n, red, blue) in &spec.segments {
        for j in 0..*n {
            let u: f64 = rng.gen();
            let lean = if u < *red {
                Lean::Red
            } else if u < red + blue {
                Lean::Blue
            } else {
                Lean::Neutral
            };
            let brand = (rng.gen::<f64>() < 0.85).then(|| BRANDS[rng.gen_range(0..BRANDS.len())].to_string());
            out.push(FixtureProduct {
                asin: asin(out.len() + 1),
                title: format!("{} Item {}", path[1], j + 1),
                path: path.clone(),
                lean,
                political: false,
                brand,
            });
        }
    }
    out
}

fn affinity(author: Lean, product: Lean) -> f64 {
    match (author, product) {
        (a, p) if a == p => 6.0,
        (_, Lean::Neutral) => 1.0,
        _ => 0.1,
    }
}

fn weighted_pick(rng: &mut ChaCha8Rng, weights: &[f64], k: usize) -> Vec<usize> {
    let mut w = weights.to_vec();
    let mut picked = Vec::with_capacity(k);
    for _ in 0..k.min(w.len()) {
        let total: f64 = w.iter().sum();
        let mut r = rng.gen::<f64>() * total;
        let mut idx = w.len() - 1;
        for (i, &x) in w.iter().enumerate() {
            if r < x {
                idx = i;
                break;
            }
            r -= x;
        }
        picked.push(idx);
        w[idx] = 0.0;
    }
    picked.sort_unstable();
    picked
}

pub fn generate(spec: &FixtureSpec) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let items = products(spec, &mut rng);

    let mut metadata = String::new();
    for (i, p) in items.iter().enumerate() {
        let weights: Vec<f64> = items
            .iter()
            .enumerate()
            .map(|(j, q)| if j == i { 0.0 } else { affinity(p.lean, q.lean) })
            .collect();
        let nb = rng.gen_range(4..8);
        let bought: Vec<&str> = weighted_pick(&mut rng, &weights, nb)
            .into_iter()
            .map(|j| items[j].asin.as_str())
            .collect();
        let nv = rng.gen_range(1..4);
        let viewed: Vec<&str> = weighted_pick(&mut rng, &weights, nv)
            .into_iter()
            .map(|j| items[j].asin.as_str())
            .collect();
        let mut related = json!({ "also_bought": bought, "also_viewed": viewed });
        if rng.gen::<f64>() < 0.4 {
            let t = weighted_pick(&mut rng, &weights, 1);
            related["bought_together"] = json!([items[t[0]].asin]);
        }
        let mut obj = json!({
            "asin": p.asin,
            "title": p.title,
            "price": (rng.gen_range(500..6000) as f64) / 100.0,
            "salesRank": { p.path[0]: rng.gen_range(1000..900_000) },
            "categories": [p.path],
            "related": related,
        });
        if let Some(b) = &p.brand {
            obj["brand"] = json!(b);
        }
        writeln!(metadata, "{obj}").unwrap();
    }
    metadata.push_str("{\"asin\": \"B999999999\", \"title\": \"Broken\n");
    metadata.push_str("{\"title\": \"No identifier\"}\n");

    let mut reviews = String::new();
    let mut moral = String::from("reviewerID,asin");
    for l in MoralVector::LABELS {
        moral.push(',');
        moral.push_str(l);
    }
    moral.push('\n');
    let mut time = 1_300_000_000i64;
    let political: Vec<usize> = (0..items.len()).filter(|&i| items[i].political).collect();
    for a in 0..spec.authors {
        let lean = if a % 2 == 0 { Lean::Red } else { Lean::Blue };
        let reviewer = format!("A{:05}", a + 1);
        let weights: Vec<f64> = items.iter().map(|p| affinity(lean, p.lean)).collect();
        let k = rng.gen_range(spec.reviews_per_author.0..=spec.reviews_per_author.1);
        let mut chosen = weighted_pick(&mut rng, &weights, k);
        let own: Vec<usize> = political.iter().copied().filter(|&i| items[i].lean == lean).collect();
        for &i in own.choose_multiple(&mut rng, 2) {
            if !chosen.contains(&i) {
                chosen.push(i);
            }
        }
        chosen.sort_unstable();
        for i in chosen {
            let p = &items[i];
            let liked = p.lean == lean || p.lean == Lean::Neutral;
            let overall = if liked {
                rng.gen_range(3..=5)
            } else {
                rng.gen_range(1..=4)
            };
            let total: u32 = rng.gen_range(0..12);
            let up = if total == 0 { 0 } else { rng.gen_range(0..=total) };
            time += rng.gen_range(3_600..400_000);
            let obj = json!({
                "reviewerID": reviewer,
                "asin": p.asin,
                "helpful": [up, total],
                "overall": overall as f64,
                "reviewText": format!("Review of {} by {}", p.title, reviewer),
                "summary": if liked { "Worth it" } else { "Not for me" },
                "unixReviewTime": time,
            });
            writeln!(reviews, "{obj}").unwrap();
            if rng.gen::<f64>() < 0.85 {
                write!(moral, "{reviewer},{}", p.asin).unwrap();
                for c in 0..MoralVector::LEN {
                    let tilt = match (lean, c) {
                        (Lean::Red, 4 | 6 | 8) | (Lean::Blue, 0 | 2) => 0.25,
                        _ => 0.0,
                    };
                    let v: f64 = if rng.gen::<f64>() < 0.5 {
                        0.0
                    } else {
                        (rng.gen::<f64>() * 0.7 + tilt).min(1.0)
                    };
                    write!(moral, ",{:.4}", v).unwrap();
                }
                moral.push('\n');
            }
        }
    }
    reviews
        .push_str("{\"reviewerID\": \"A00001\", \"asin\": \"B000000001\", \"overall\": 7.0, \"unixReviewTime\": 1}\n");
    reviews.push_str("not json at all\n");

    let mut seeds = String::from("title,class\n");
    for (k, &i) in political.iter().enumerate() {
        let p = &items[i];
        let class = if p.lean == Lean::Red { "conservative" } else { "liberal" };
        let title = match k % 4 {
            1 => p.title.to_uppercase(),
            2 => p.title.replacen(' ', "  ", 1),
            _ => p.title.clone(),
        };
        writeln!(seeds, "\"{title}\",{class}").unwrap();
    }
    seeds.push_str("\"The Liberl Imagination: Essays and Arguments\",liberal\n");
    seeds.push_str("\"A Pamphlet Nobody Sells\",conservative\n");

    Fixture {
        reviews,
        metadata,
        seeds,
        moral,
    }
}

impl Fixture {
    pub const FILES: [&'static str; 4] = ["reviews.json", "metadata.json", "seeds.csv", "moral.csv"];

    pub fn contents(&self) -> [&str; 4] {
        [&self.reviews, &self.metadata, &self.seeds, &self.moral]
    }

    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        for (name, text) in Fixture::FILES.iter().zip(self.contents()) {
            fs::write(dir.join(name), text)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&FixtureSpec::default());
        let b = generate(&FixtureSpec::default());
        assert_eq!(a, b);
        let c = generate(&FixtureSpec {
            seed: 1,
            ..FixtureSpec::default()
        });
        assert_ne!(a.reviews, c.reviews);
    }

    #[test]
    fn every_author_reviews_own_side_books() {
        let f = generate(&FixtureSpec::default());
        let lines = f.reviews.lines().filter(|l| l.contains("A00002")).count();
        assert!(lines >= 20);
        assert!(f.seeds.lines().count() == 2 * 8 + 3);
    }
}
