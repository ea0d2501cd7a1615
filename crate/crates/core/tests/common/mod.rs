//! Synthetic fixture world shared by the integration tests.
//!
//! `generate()` is the single source of the files under `tests/fixtures/`;
//! `fixtures::checked_in_fixtures_are_current` fails when they drift. Set
//! `RELSHOT_REGEN=1` to rewrite them.

#![allow(dead_code)]

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{json, Value};

use relshot::seed::{child_seed, rng_from};

pub const EPISODES: &str = "episodes.jsonl";
pub const EPISODES_MALFORMED: &str = "episodes_malformed.jsonl";
pub const MOCK: &str = "mock.jsonl";
pub const ORACLE: &str = "oracle.jsonl";
pub const STORE: &str = "store.jsonl";
pub const SUPPORTS: &str = "support_vectors.jsonl";

pub const N_EPISODES: usize = 20;
pub const QUERIES_PER_EPISODE: usize = 3;
pub const DIM: usize = 16;
pub const STORE_PER_RELATION: usize = 12;
/// Episode whose second query gets broken markup in the malformed variant.
pub const MALFORMED_EPISODE: usize = 7;

const ROOT_SEED: u64 = 20_240_611;

/// (name, description, subject type, object type)
pub const RELATIONS: &[(&str, &str, &str, &str)] = &[
    ("per:city_of_birth", "the city where the person was born", "PERSON", "CITY"),
    ("per:country_of_birth", "the country where the person was born", "PERSON", "COUNTRY"),
    ("per:title", "the official title of the person", "PERSON", "TITLE"),
    ("per:employee_of", "the organization the person works for", "PERSON", "ORGANIZATION"),
    ("org:founded_by", "the person who founded the organization", "ORGANIZATION", "PERSON"),
    ("org:top_members/employees", "the top members of the organization", "ORGANIZATION", "PERSON"),
    ("org:city_of_headquarters", "the city where the organization is headquartered", "ORGANIZATION", "CITY"),
    ("per:date_of_birth", "the date the person was born", "PERSON", "DATE"),
    ("per:age", "the age of the person", "PERSON", "NUMBER"),
    ("per:origin", "the nationality or ethnic origin of the person", "PERSON", "NATIONALITY"),
    ("org:country_of_headquarters", "the country where the organization is headquartered", "ORGANIZATION", "COUNTRY"),
    ("per:employee_of_city", "the city government the person works for", "PERSON", "CITY"),
];

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn fixture(name: &str) -> PathBuf {
    fixture_dir().join(name)
}

pub struct World {
    pub files: Vec<(&'static str, String)>,
}

impl World {
    pub fn get(&self, name: &str) -> &str {
        &self.files.iter().find(|(n, _)| *n == name).expect("known fixture").1
    }
}

fn unit(rng: &mut impl Rng, center: Option<&[f32]>, spread: f32) -> Vec<f32> {
    let mut v: Vec<f32> = (0..DIM)
        .map(|i| center.map_or(0.0, |c| c[i]) + spread * rng.random_range(-1.0f32..1.0))
        .collect();
    let n = v.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt() as f32;
    v.iter_mut().for_each(|x| *x /= n);
    v
}

fn yes_reply(i: usize) -> Value {
    match i % 3 {
        0 => json!({"choice_logprobs": {"yes": -0.05, "no": -3.0}}),
        1 => json!({"text": "", "top_logprobs": [{"token": "Yes", "logprob": -0.2}, {"token": "No", "logprob": -1.7}]}),
        _ => json!({"text": "Yes."}),
    }
}

fn line(v: &Value) -> String {
    let mut s = serde_json::to_string(v).expect("json");
    s.push('\n');
    s
}

fn support_text(e: usize, r: usize) -> String {
    format!("<subject>Sub{e}r{r}</subject> is linked to <object>Obj{e}r{r}</object> in report {e} .")
}

fn query_text(e: usize, q: usize) -> String {
    format!("<subject>Q{e}x{q}s</subject> was seen with <object>Q{e}x{q}o</object> on day {q} .")
}

/// Build every fixture file in memory.
pub fn generate() -> World {
    let mut episodes = String::new();
    let mut malformed = String::new();
    let mut oracle_lines = Vec::new();
    let mut mock = String::new();
    let mut supports = String::new();
    let (mut tp, mut pp, mut gp, mut nq) = (0usize, 0usize, 0usize, 0usize);
    let mut yes_count = 0usize;

    let mut crng = rng_from(child_seed(ROOT_SEED, &["centers".into()]));
    let centers: Vec<Vec<f32>> = (0..RELATIONS.len()).map(|_| unit(&mut crng, None, 1.0)).collect();

    for e in 0..N_EPISODES {
        let mut rng = rng_from(child_seed(ROOT_SEED, &["episode".into(), e.into()]));
        let mut idx: Vec<usize> = (0..RELATIONS.len()).collect();
        idx.shuffle(&mut rng);
        let chosen = &idx[..5];

        let relations: Vec<Value> = chosen
            .iter()
            .map(|&r| {
                let (name, desc, st, ot) = RELATIONS[r];
                json!({"name": name, "description": desc, "subject_type": st, "object_type": ot,
                       "support": [support_text(e, r)]})
            })
            .collect();
        for &r in chosen {
            let (_, _, st, ot) = RELATIONS[r];
            let v = unit(&mut rng, Some(&centers[r]), 0.3);
            supports.push_str(&line(&json!({"id": e * 100 + r, "text": support_text(e, r),
                "subject_type": st, "object_type": ot, "vector": v})));
        }

        let mut queries = Vec::new();
        for q in 0..QUERIES_PER_EPISODE {
            let positive = rng.random_bool(0.5);
            let gold = positive.then(|| chosen[rng.random_range(0..5)]);
            let types = match gold {
                Some(r) => (RELATIONS[r].2, RELATIONS[r].3),
                None => {
                    let r = RELATIONS[rng.random_range(0..RELATIONS.len())];
                    (r.2, r.3)
                }
            };
            let typed = !(e % 4 == 3 && q == 0);
            let text = query_text(e, q);
            let mut qv = json!({"text": text, "gold_label": gold.map_or("no_relation", |r| RELATIONS[r].0)});
            if typed {
                qv["subject_type"] = json!(types.0);
                qv["object_type"] = json!(types.1);
            } else {
                for (role, t) in [("s", types.0), ("o", types.1)] {
                    mock.push_str(&line(&json!({"template": "ner-check",
                        "match": {"ENTITY": format!("Q{e}x{q}{role}"), "ENTITY_TYPE": t},
                        "reply": {"text": "yes"}})));
                }
            }
            queries.push(qv);

            // Independent oracle: exact type match, then the scripted yes set.
            let survivors: Vec<usize> =
                chosen.iter().copied().filter(|&r| (RELATIONS[r].2, RELATIONS[r].3) == types).collect();
            let mut yes: Option<usize> = None;
            if let Some(g) = gold {
                if rng.random_bool(0.75) {
                    yes = Some(g);
                } else if rng.random_bool(0.5) {
                    yes = survivors.iter().copied().find(|&r| r != g);
                }
            } else if rng.random_bool(0.3) {
                yes = survivors.first().copied();
            }
            let decoy = chosen.iter().copied().find(|r| !survivors.contains(r));
            let mut scripted: Vec<usize> = yes.into_iter().collect();
            if let (Some(d), true) = (decoy, rng.random_bool(0.4)) {
                scripted.push(d);
            }
            for r in scripted {
                mock.push_str(&line(&json!({"template": "binary-relation",
                    "match": {"RELATION": RELATIONS[r].0, "QUERY_SENTENCE": text},
                    "reply": yes_reply(yes_count)})));
                yes_count += 1;
            }
            let predicted = yes.map_or("no_relation", |r| RELATIONS[r].0);
            nq += 1;
            if yes.is_some() {
                pp += 1;
            }
            if gold.is_some() {
                gp += 1;
            }
            if yes.is_some() && yes == gold {
                tp += 1;
            }
            oracle_lines.push(json!({"episode_id": format!("ep{e:02}"), "query_idx": q, "predicted": predicted,
                "surviving": survivors.iter().map(|&r| RELATIONS[r].0).collect::<Vec<_>>()}));
        }

        let ep = json!({"episode_id": format!("ep{e:02}"), "relations": relations, "queries": queries});
        episodes.push_str(&line(&ep));
        let mut bad = ep.clone();
        if e == MALFORMED_EPISODE {
            bad["queries"][1]["text"] = json!(format!("<subject>Q{e}x1s was seen with <object>Q{e}x1o</object> ."));
        }
        malformed.push_str(&line(&bad));
    }

    let gen_lines: String = (1..=9)
        .map(|i| format!("{i}: <subject>Gen{i}s</subject> works alongside <object>Gen{i}o</object> downtown .\n"))
        .collect();
    for v in [
        json!({"template": "binary-relation", "default": true, "reply": {"choice_logprobs": {"yes": -3.0, "no": -0.05}}}),
        json!({"template": "ner-check", "default": true, "reply": {"text": "no"}}),
        json!({"template": "generate", "default": true, "reply": {"text": gen_lines}}),
        json!({"template": "hybrid-pick", "default": true, "reply": {"text": "[1, 3, 5, 7]"}}),
        json!({"template": "summarize", "default": true, "reply": {"text": "<subject>Short</subject> and <object>Brief</object>"}}),
    ] {
        mock.push_str(&line(&v));
    }

    let mut oracle = line(&json!({"true_positive": tp, "predicted_positive": pp, "gold_positive": gp, "n_queries": nq}));
    for l in &oracle_lines {
        oracle.push_str(&line(l));
    }

    let mut store = String::new();
    let mut srng = rng_from(child_seed(ROOT_SEED, &["store".into()]));
    let mut id = 1u64;
    for (r, (_, _, st, ot)) in RELATIONS.iter().enumerate() {
        for j in 0..STORE_PER_RELATION {
            let spread = if j % 4 == 3 { 1.5 } else { 0.35 };
            let v = unit(&mut srng, Some(&centers[r]), spread);
            let text = format!("<subject>Ret{r}n{j}</subject> appears beside <object>Tgt{r}n{j}</object> in file {j} .");
            store.push_str(&line(&json!({"id": id, "text": text, "subject_type": st, "object_type": ot, "vector": v})));
            id += 1;
        }
    }

    World {
        files: vec![
            (EPISODES, episodes),
            (EPISODES_MALFORMED, malformed),
            (MOCK, mock),
            (ORACLE, oracle),
            (STORE, store),
            (SUPPORTS, supports),
        ],
    }
}

/// Expected prediction per (episode_id, query_idx) and the expected counts.
pub struct Oracle {
    pub counts: (usize, usize, usize, usize),
    pub predictions: Vec<(String, usize, String)>,
}

pub fn read_oracle() -> Oracle {
    let text = std::fs::read_to_string(fixture(ORACLE)).expect("oracle fixture");
    let mut lines = text.lines();
    let head: Value = serde_json::from_str(lines.next().expect("header")).expect("json");
    let n = |k: &str| head[k].as_u64().expect("count") as usize;
    let predictions = lines
        .map(|l| {
            let v: Value = serde_json::from_str(l).expect("json");
            (
                v["episode_id"].as_str().unwrap().to_string(),
                v["query_idx"].as_u64().unwrap() as usize,
                v["predicted"].as_str().unwrap().to_string(),
            )
        })
        .collect();
    Oracle { counts: (n("true_positive"), n("predicted_positive"), n("gold_positive"), n("n_queries")), predictions }
}
