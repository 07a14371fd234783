//! OC/UC/FC prompt masks over the (variable, time-step) index grid.

use serde::{Deserialize, Serialize};

use crate::data::{VAR_COUNT, WINDOW_LEN};
use crate::diffusion::PromptSpec;
use crate::{Error, Result};

/// The three prompt tasks on a V=3, L=24 window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    /// Over-constrained: variables 0 and 1 given, one correct response.
    Oc,
    /// Under-constrained: variable 2 given, multiple correct responses.
    Uc,
    /// Forecast: first half of every variable given.
    Fc,
}

pub const ALL_TASKS: [TaskKind; 3] = [TaskKind::Oc, TaskKind::Uc, TaskKind::Fc];

impl TaskKind {
    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::Oc => "oc",
            TaskKind::Uc => "uc",
            TaskKind::Fc => "fc",
        }
    }

    /// Prompt mask over i = v*L + tau; true marks prompt indices.
    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; VAR_COUNT * WINDOW_LEN];
        for v in 0..VAR_COUNT {
            for tau in 0..WINDOW_LEN {
                let given = match self {
                    TaskKind::Oc => v <= 1,
                    TaskKind::Uc => v == 2,
                    TaskKind::Fc => tau < WINDOW_LEN / 2,
                };
                m[v * WINDOW_LEN + tau] = given;
            }
        }
        m
    }
}

impl std::str::FromStr for TaskKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "oc" => Ok(TaskKind::Oc),
            "uc" => Ok(TaskKind::Uc),
            "fc" => Ok(TaskKind::Fc),
            other => Err(Error::Config(format!("unknown task: {other}"))),
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Prompt and response index sets for a task.
pub fn make_mask(kind: TaskKind) -> (Vec<usize>, Vec<usize>) {
    let mask = kind.mask();
    let prompt = mask
        .iter()
        .enumerate()
        .filter_map(|(i, &m)| m.then_some(i))
        .collect();
    let response = mask
        .iter()
        .enumerate()
        .filter_map(|(i, &m)| (!m).then_some(i))
        .collect();
    (prompt, response)
}

/// PromptSpec with values copied from the window at the task's prompt indices.
pub fn assemble_prompt(window: &[f64], kind: TaskKind) -> Result<PromptSpec> {
    if window.len() != VAR_COUNT * WINDOW_LEN {
        return Err(Error::ShapeMismatch {
            expected: VAR_COUNT * WINDOW_LEN,
            got: window.len(),
        });
    }
    PromptSpec::from_window_mask(window, &kind.mask())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_sizes_match_task_definitions() {
        let (p, r) = make_mask(TaskKind::Oc);
        assert_eq!((p.len(), r.len()), (48, 24));
        let (p, r) = make_mask(TaskKind::Uc);
        assert_eq!((p.len(), r.len()), (24, 48));
        let (p, r) = make_mask(TaskKind::Fc);
        assert_eq!((p.len(), r.len()), (36, 36));
    }

    #[test]
    fn masks_partition_the_index_set() {
        for kind in ALL_TASKS {
            let (p, r) = make_mask(kind);
            let mut all: Vec<usize> = p.iter().chain(r.iter()).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..72).collect::<Vec<_>>());
        }
    }

    #[test]
    fn oc_and_uc_prompts_are_complementary_over_variables() {
        let (oc_p, _) = make_mask(TaskKind::Oc);
        let (uc_p, _) = make_mask(TaskKind::Uc);
        assert!(oc_p.iter().all(|i| !uc_p.contains(i)));
        assert_eq!(oc_p.len() + uc_p.len(), 72);
    }

    #[test]
    fn assemble_prompt_copies_window_values() {
        let window: Vec<f64> = (0..72).map(|i| i as f64 * 0.5).collect();
        let p = assemble_prompt(&window, TaskKind::Oc).unwrap();
        for (&i, &v) in p.prompt_idx().iter().zip(p.prompt_values()) {
            assert_eq!(v, window[i]);
        }
        assert!(p.prompt_idx().iter().all(|&i| i < 48));
    }

    #[test]
    fn fc_on_constant_window() {
        let window = vec![3.25; 72];
        let p = assemble_prompt(&window, TaskKind::Fc).unwrap();
        assert_eq!(p.prompt_values().len(), 36);
        assert!(p.prompt_values().iter().all(|&v| v == 3.25));
    }

    #[test]
    fn wrong_dimension_rejected() {
        assert!(assemble_prompt(&vec![0.0; 71], TaskKind::Oc).is_err());
    }
}
