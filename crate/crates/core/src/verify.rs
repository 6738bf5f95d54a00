//! Randomized equivalence run: every draw goes through the five checkers and
//! mutual information, and any disagreement becomes a certificate.

use std::collections::BTreeMap;
use std::thread;

use serde::Serialize;

use crate::error::Result;
use crate::random::{random_joint, Profile};
use crate::regularity::{check_conditions, mutual_information};

/// Description of one draw on which the checkers disagreed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub draw: usize,
    pub seed: u64,
    pub profile: String,
    pub conditions: [bool; 5],
    pub witnesses: BTreeMap<usize, String>,
    pub mutual_information: String,
    pub problem: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifySummary {
    pub draws: usize,
    pub agreed: usize,
    /// Draw counts per profile name.
    pub profiles: BTreeMap<String, usize>,
    pub certificates: Vec<Certificate>,
}

impl VerifySummary {
    pub fn passed(&self) -> bool {
        self.certificates.is_empty()
    }
}

/// Seed of draw `i` in a run seeded with `seed`.
pub fn draw_seed(seed: u64, i: usize) -> u64 {
    seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Profile of draw `i`; cycles through every profile.
pub fn draw_profile(i: usize) -> Profile {
    Profile::ALL[i % Profile::ALL.len()]
}

/// Checks a single draw. `None` means every checker agreed and the mutual
/// information is finite exactly when the second condition holds.
pub fn check_draw(i: usize, seed: u64) -> Result<Option<Certificate>> {
    let s = draw_seed(seed, i);
    let profile = draw_profile(i);
    let j = random_joint(s, profile);
    let report = check_conditions(&j)?;
    let mi = mutual_information(&j)?;
    let mut problems = Vec::new();
    if !report.agree {
        problems.push("conditions disagree".to_string());
    }
    if mi.is_finite() != report.conditions[1] {
        problems.push("mutual information finiteness differs from the second condition".to_string());
    }
    if problems.is_empty() {
        return Ok(None);
    }
    Ok(Some(Certificate {
        draw: i,
        seed: s,
        profile: profile.name().to_string(),
        conditions: report.conditions,
        witnesses: report.witnesses.iter().map(|(k, w)| (*k, w.to_string())).collect(),
        mutual_information: mi.to_string(),
        problem: problems.join("; "),
    }))
}

/// Runs `draws` draws on up to `workers` threads. The result does not depend
/// on the number of workers.
pub fn verify(draws: usize, seed: u64, workers: usize) -> Result<VerifySummary> {
    let workers = workers.clamp(1, draws.max(1));
    let chunk = draws.div_ceil(workers).max(1);
    let results: Vec<Result<Vec<Certificate>>> = thread::scope(|scope| {
        let handles: Vec<_> = (0..draws)
            .step_by(chunk)
            .map(|start| {
                scope.spawn(move || {
                    let mut out = Vec::new();
                    for i in start..(start + chunk).min(draws) {
                        if let Some(c) = check_draw(i, seed)? {
                            out.push(c);
                        }
                    }
                    Ok(out)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("verify worker panicked")).collect()
    });
    let mut certificates = Vec::new();
    for r in results {
        certificates.extend(r?);
    }
    certificates.sort_by_key(|c| c.draw);
    let mut profiles = BTreeMap::new();
    for i in 0..draws {
        *profiles.entry(draw_profile(i).name().to_string()).or_insert(0) += 1;
    }
    Ok(VerifySummary {
        draws,
        agreed: draws - certificates.len(),
        profiles,
        certificates,
    })
}
