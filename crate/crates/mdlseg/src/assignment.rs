//! Exact minimum-cost bipartite matching and speaker-name assignment.
//!
//! The matcher solves rectangular linear assignment problems exactly via
//! shortest augmenting paths over dual potentials, treats non-finite costs
//! as forbidden pairings to be used only when nothing else is feasible, and
//! resolves ties toward the lexicographically smallest assignment so equal
//! inputs always produce equal output.
//!
//! On top of it sits the speaker-naming pipeline: gallery faces give each
//! character a per-scene visual distance, scene co-occurrence averages those
//! into a character-by-speaker cost matrix, and a thresholded matching (up
//! to three speakers per character) turns distances into names.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::SPEC_VERSION;

/// Name reported for speakers no character claims.
pub const UNASSIGNED: &str = "UNASSIGNED";

/// Copies of each character row offered to the matcher, bounding how many
/// speakers one character can absorb.
const COPIES_PER_CHARACTER: usize = 3;

#[derive(Debug, Error)]
pub enum AssignError {
    #[error("cost matrix has no rows or columns")]
    EmptyMatrix,
    #[error("cost matrix row {row} has {found} columns, expected {expected}")]
    RaggedMatrix {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("cost at row {row}, column {col} must not be NaN or infinitely attractive")]
    BadCost { row: usize, col: usize },
    #[error("face vector of width {found} where {expected} expected")]
    DimMismatch { expected: usize, found: usize },
    #[error("character {name:?} has no gallery faces")]
    NoFaces { name: String },
    #[error("face vectors must hold finite numbers")]
    NonFiniteFace,
    #[error("speaker {id:?} speaks in no scene")]
    EmptyIncidence { id: String },
    #[error("speaker {id:?} references scene {scene}, but only {scenes} scenes exist")]
    SceneOutOfRange {
        id: String,
        scene: usize,
        scenes: usize,
    },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not a valid assignment problem: {source}")]
    BadProblemDoc {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

/// Result of matching rows of a cost matrix to columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Matched column of each row, `None` where the matrix shape leaves the
    /// row over.
    pub pairs: Vec<Option<usize>>,
    /// Sum of the matched entries, accumulated in row order.
    pub total: f64,
}

/// Validated and oriented matching workspace: a square matrix to minimize,
/// with forbidden pairings priced prohibitively rather than infinitely.
struct Workspace {
    side: usize,
    real_rows: usize,
    real_cols: usize,
    work: Vec<Vec<f64>>,
}

fn prepare(cost: &[Vec<f64>], maximize: bool) -> Result<Workspace, AssignError> {
    if cost.is_empty() || cost[0].is_empty() {
        return Err(AssignError::EmptyMatrix);
    }
    let real_rows = cost.len();
    let real_cols = cost[0].len();
    let mut sum_abs = 0.0;
    for (r, row) in cost.iter().enumerate() {
        if row.len() != real_cols {
            return Err(AssignError::RaggedMatrix {
                row: r + 1,
                expected: real_cols,
                found: row.len(),
            });
        }
        for (c, &v) in row.iter().enumerate() {
            if v.is_nan() {
                return Err(AssignError::BadCost { row: r + 1, col: c + 1 });
            }
            let oriented = if maximize { -v } else { v };
            if oriented == f64::NEG_INFINITY {
                return Err(AssignError::BadCost { row: r + 1, col: c + 1 });
            }
            if v.is_finite() {
                sum_abs += v.abs();
            }
        }
    }

    // a forbidden pairing must cost more than any two detours around it
    let big = 2.0 * (sum_abs + 1.0);
    let side = real_rows.max(real_cols);
    let mut work = vec![vec![0.0f64; side]; side];
    for r in 0..real_rows {
        for c in 0..real_cols {
            let oriented = if maximize { -cost[r][c] } else { cost[r][c] };
            work[r][c] = if oriented.is_finite() { oriented } else { big };
        }
    }
    Ok(Workspace { side, real_rows, real_cols, work })
}

/// Exact minimum-total perfect matching on a square matrix, by shortest
/// augmenting paths over dual potentials. Returns the matched column of
/// each row.
fn solve_square(a: &[Vec<f64>]) -> Vec<usize> {
    let s = a.len();
    let mut u = vec![0.0f64; s + 1];
    let mut v = vec![0.0f64; s + 1];
    let mut matched_row = vec![0usize; s + 1]; // per column, 1-based; 0 = free
    let mut way = vec![0usize; s + 1];
    for i in 1..=s {
        matched_row[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; s + 1];
        let mut used = vec![false; s + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=s {
                if !used[j] {
                    let cur = a[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=s {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0usize; s];
    for j in 1..=s {
        col_of[matched_row[j] - 1] = j - 1;
    }
    col_of
}

/// Work-matrix total of a matching, folded in row order over real rows.
fn work_total(ws: &Workspace, col_of: &[usize]) -> f64 {
    let mut total = 0.0;
    for r in 0..ws.real_rows {
        total += ws.work[r][col_of[r]];
    }
    total
}

/// Reported total: matched original entries, folded in row order.
fn original_total(cost: &[Vec<f64>], ws: &Workspace, col_of: &[usize]) -> f64 {
    let mut total = 0.0;
    for r in 0..ws.real_rows {
        if col_of[r] < ws.real_cols {
            total += cost[r][col_of[r]];
        }
    }
    total
}

fn pairs_of(ws: &Workspace, col_of: &[usize]) -> Vec<Option<usize>> {
    (0..ws.real_rows)
        .map(|r| (col_of[r] < ws.real_cols).then_some(col_of[r]))
        .collect()
}

/// Rewrites an optimal matching into the lexicographically smallest one of
/// equal total: row by row, the smallest real column (padding last) that
/// still admits a completion of the same total wins.
fn lexicalize(ws: &Workspace, col_of: &mut Vec<usize>) {
    let target = work_total(ws, col_of);
    let mut available: Vec<usize> = (0..ws.side).collect();
    for r in 0..ws.real_rows {
        let mut candidates: Vec<usize> = available
            .iter()
            .copied()
            .filter(|&c| c < ws.real_cols)
            .collect();
        if let Some(&dummy) = available.iter().find(|&&c| c >= ws.real_cols) {
            candidates.push(dummy);
        }
        for c in candidates {
            let current = col_of[r];
            let both_dummy = c >= ws.real_cols && current >= ws.real_cols;
            if c == current || both_dummy {
                break; // the current choice is already the best available
            }
            if c > current && current < ws.real_cols {
                break; // smaller real candidates are exhausted
            }
            // tentatively give column c to row r and re-solve the rest
            let rest_cols: Vec<usize> = available.iter().copied().filter(|&x| x != c).collect();
            let reduced: Vec<Vec<f64>> = (r + 1..ws.side)
                .map(|q| rest_cols.iter().map(|&x| ws.work[q][x]).collect())
                .collect();
            let mut trial: Vec<usize> = col_of[..r].to_vec();
            trial.push(c);
            if reduced.is_empty() {
                if work_total(ws, &trial) == target {
                    *col_of = trial;
                    break;
                }
                continue;
            }
            let sub = solve_square(&reduced);
            trial.extend(sub.iter().map(|&j| rest_cols[j]));
            if work_total(ws, &trial) == target {
                *col_of = trial;
                break;
            }
        }
        let chosen = col_of[r];
        available.retain(|&c| c != chosen);
    }
}

/// Matches rows to columns of a rectangular cost matrix, minimizing (or
/// maximizing) the total of the matched entries.
///
/// Non-finite entries on the unattractive side (`+inf` when minimizing,
/// `-inf` when maximizing) mark forbidden pairings: the matcher uses as few
/// of them as possible, and a matching forced onto one reports a non-finite
/// total. Ties between optimal matchings resolve to the lexicographically
/// smallest column choice per row, unmatched last, so the result is a
/// deterministic function of the input.
pub fn hungarian(cost: &[Vec<f64>], maximize: bool) -> Result<Assignment, AssignError> {
    let ws = prepare(cost, maximize)?;
    let mut col_of = solve_square(&ws.work);
    lexicalize(&ws, &mut col_of);
    Ok(Assignment {
        pairs: pairs_of(&ws, &col_of),
        total: original_total(cost, &ws, &col_of),
    })
}

/// Matching without the tie canonicalization pass, for callers that only
/// consume the optimal total.
pub(crate) fn best_assignment_total(
    cost: &[Vec<f64>],
    maximize: bool,
) -> Result<f64, AssignError> {
    let ws = prepare(cost, maximize)?;
    let col_of = solve_square(&ws.work);
    Ok(original_total(cost, &ws, &col_of))
}

/// A named character and their gallery of face embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Character {
    pub name: String,
    pub faces: Vec<Vec<f64>>,
}

/// A speaker and the scenes their lines fall in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Speaker {
    pub id: String,
    pub scenes: Vec<usize>,
}

/// Everything the naming pipeline consumes: character galleries, the face
/// embeddings detected per scene, and per-speaker scene incidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentInput {
    pub characters: Vec<Character>,
    pub scenes: Vec<Vec<Vec<f64>>>,
    pub speakers: Vec<Speaker>,
}

/// Intermediate matrices of the naming pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentProblem {
    pub character_names: Vec<String>,
    pub speaker_ids: Vec<String>,
    /// Character-by-scene visual distance; `+inf` where a scene shows no
    /// faces.
    pub scene_costs: Vec<Vec<f64>>,
    /// Scene indices each speaker speaks in.
    pub incidence: Vec<Vec<usize>>,
    /// Character-by-speaker cost: mean finite scene cost over the speaker's
    /// scenes, `+inf` when none is finite.
    pub speaker_costs: Vec<Vec<f64>>,
    /// Acceptance threshold: matches at or above it stay unassigned.
    pub threshold: f64,
}

/// Speaker-to-character-name mapping, in speaker order; `None` means
/// unassigned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NameAssignment {
    pub mapping: Vec<(String, Option<String>)>,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Character-by-scene distance matrix: the closest pair between a
/// character's gallery and the faces seen in the scene, `+inf` for
/// faceless scenes.
pub fn build_scene_costs(
    characters: &[Character],
    scenes: &[Vec<Vec<f64>>],
) -> Result<Vec<Vec<f64>>, AssignError> {
    let mut dim = None;
    let mut check = |face: &Vec<f64>| -> Result<(), AssignError> {
        let expected = *dim.get_or_insert(face.len());
        if face.len() != expected {
            return Err(AssignError::DimMismatch { expected, found: face.len() });
        }
        if face.iter().any(|v| !v.is_finite()) {
            return Err(AssignError::NonFiniteFace);
        }
        Ok(())
    };
    for ch in characters {
        if ch.faces.is_empty() {
            return Err(AssignError::NoFaces { name: ch.name.clone() });
        }
        for face in &ch.faces {
            check(face)?;
        }
    }
    for scene in scenes {
        for face in scene {
            check(face)?;
        }
    }

    let costs = characters
        .iter()
        .map(|ch| {
            scenes
                .iter()
                .map(|scene| {
                    scene
                        .iter()
                        .flat_map(|face| ch.faces.iter().map(|g| euclidean(g, face)))
                        .fold(f64::INFINITY, f64::min)
                })
                .collect()
        })
        .collect();
    Ok(costs)
}

/// Averages scene costs into a character-by-speaker matrix over each
/// speaker's scenes, ignoring faceless scenes, and derives the acceptance
/// threshold as the mean of the finite entries.
pub fn build_speaker_costs(
    scene_costs: &[Vec<f64>],
    incidence: &[Vec<usize>],
) -> (Vec<Vec<f64>>, f64) {
    let costs: Vec<Vec<f64>> = scene_costs
        .iter()
        .map(|row| {
            incidence
                .iter()
                .map(|scenes| {
                    let finite: Vec<f64> = scenes
                        .iter()
                        .map(|&s| row[s])
                        .filter(|v| v.is_finite())
                        .collect();
                    if finite.is_empty() {
                        f64::INFINITY
                    } else {
                        finite.iter().sum::<f64>() / finite.len() as f64
                    }
                })
                .collect()
        })
        .collect();

    let finite: Vec<f64> = costs
        .iter()
        .flatten()
        .copied()
        .filter(|v| v.is_finite())
        .collect();
    let threshold = if finite.is_empty() {
        f64::INFINITY
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    };
    (costs, threshold)
}

/// Runs the matrix-building half of the pipeline and validates the input.
pub fn build_problem(input: &AssignmentInput) -> Result<AssignmentProblem, AssignError> {
    let scene_costs = build_scene_costs(&input.characters, &input.scenes)?;
    let mut incidence = Vec::with_capacity(input.speakers.len());
    for sp in &input.speakers {
        if sp.scenes.is_empty() {
            return Err(AssignError::EmptyIncidence { id: sp.id.clone() });
        }
        for &s in &sp.scenes {
            if s >= input.scenes.len() {
                return Err(AssignError::SceneOutOfRange {
                    id: sp.id.clone(),
                    scene: s,
                    scenes: input.scenes.len(),
                });
            }
        }
        incidence.push(sp.scenes.clone());
    }
    let (speaker_costs, threshold) = build_speaker_costs(&scene_costs, &incidence);
    Ok(AssignmentProblem {
        character_names: input.characters.iter().map(|c| c.name.clone()).collect(),
        speaker_ids: input.speakers.iter().map(|s| s.id.clone()).collect(),
        scene_costs,
        incidence,
        speaker_costs,
        threshold,
    })
}

/// Loads an assignment problem from a JSON file of characters, scenes, and
/// speakers.
pub fn load_problem(path: impl AsRef<Path>) -> Result<AssignmentProblem, AssignError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| AssignError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let input: AssignmentInput =
        serde_json::from_str(&text).map_err(|e| AssignError::BadProblemDoc {
            path: path.display().to_string(),
            source: e,
        })?;
    build_problem(&input)
}

/// Names speakers by matching them to character rows.
///
/// Each character appears three times in the matching, so up to three
/// speakers can share a name. A matched pair only counts when its cost sits
/// strictly below the problem's threshold; everyone else — matched too
/// expensively, matched to padding, or left over when speakers outnumber
/// character copies — comes back `UNASSIGNED`.
pub fn assign_names(problem: &AssignmentProblem) -> Result<NameAssignment, AssignError> {
    let m = problem.character_names.len();
    let k = problem.speaker_ids.len();
    let mut chosen: Vec<Option<String>> = vec![None; k];
    if m > 0 && k > 0 {
        let stacked: Vec<Vec<f64>> = (0..COPIES_PER_CHARACTER * m)
            .map(|r| problem.speaker_costs[r % m].clone())
            .collect();
        let matching = hungarian(&stacked, false)?;
        for (r, &pair) in matching.pairs.iter().enumerate() {
            if let Some(speaker) = pair {
                let character = r % m;
                if problem.speaker_costs[character][speaker] < problem.threshold {
                    chosen[speaker] = Some(problem.character_names[character].clone());
                }
            }
        }
    }
    let mapping = problem
        .speaker_ids
        .iter()
        .cloned()
        .zip(chosen)
        .collect();
    Ok(NameAssignment { mapping })
}

/// Serialized form of a name assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentDoc {
    pub spec_version: u32,
    pub assignments: Vec<AssignmentEntry>,
}

/// One speaker's line in the output document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentEntry {
    pub speaker: String,
    pub character: String,
}

impl AssignmentDoc {
    pub fn new(assignment: &NameAssignment) -> Self {
        Self {
            spec_version: SPEC_VERSION,
            assignments: assignment
                .mapping
                .iter()
                .map(|(speaker, character)| AssignmentEntry {
                    speaker: speaker.clone(),
                    character: character.clone().unwrap_or_else(|| UNASSIGNED.to_string()),
                })
                .collect(),
        }
    }

    /// Pretty JSON with a trailing newline; byte-stable for equal input.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("doc serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}
