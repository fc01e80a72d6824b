//! Four-part evaluation prompt: instructions, worked examples, optional
//! guidance, then the instance facts.

use crate::dataset::TaskInstance;

pub const INSTRUCTIONS: &str = include_str!("../resources/prompt_instructions.txt");
pub const GUIDANCE: &str = include_str!("../resources/prompt_guidance.txt");
/// Simple navigation, single key, multiple keys.
pub const FEW_SHOT: [&str; 3] = [
    include_str!("../resources/few_shot_1.txt"),
    include_str!("../resources/few_shot_2.txt"),
    include_str!("../resources/few_shot_3.txt"),
];

pub const SOLUTION_CUE: &str = "YOUR SOLUTION:";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptOptions {
    pub include_guidance: bool,
    /// How many of the canonical examples to include, in order (0..=3).
    pub few_shot: usize,
}

impl Default for PromptOptions {
    fn default() -> Self {
        Self {
            include_guidance: true,
            few_shot: FEW_SHOT.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub instructions: String,
    pub few_shot: Vec<String>,
    pub guidance: Option<String>,
    pub problem_facts: String,
    pub assembled: String,
}

/// `Maze Structure: ` followed by the fact sentences, then the cue line.
pub fn problem_section(facts: &[String]) -> String {
    format!("Maze Structure: {}\n{SOLUTION_CUE}\n", facts.join(" "))
}

pub fn build_prompt(instance: &TaskInstance, include_guidance: bool) -> PromptBundle {
    build_prompt_with(
        instance,
        PromptOptions {
            include_guidance,
            ..PromptOptions::default()
        },
    )
}

pub fn build_prompt_with(instance: &TaskInstance, options: PromptOptions) -> PromptBundle {
    let few_shot: Vec<String> = FEW_SHOT
        .iter()
        .take(options.few_shot)
        .map(|s| s.to_string())
        .collect();
    let guidance = options.include_guidance.then(|| GUIDANCE.to_string());
    let problem_facts = problem_section(&instance.facts.texts());
    let mut parts: Vec<&str> = vec![INSTRUCTIONS];
    parts.extend(few_shot.iter().map(String::as_str));
    if let Some(g) = &guidance {
        parts.push(g);
    }
    parts.push(&problem_facts);
    let assembled = parts.join("\n");
    PromptBundle {
        instructions: INSTRUCTIONS.to_string(),
        few_shot,
        guidance,
        problem_facts,
        assembled,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{assemble_instance, GenParams};

    #[test]
    fn components_in_order() {
        let t = assemble_instance(&GenParams::new(5, 5, 1), 2).unwrap();
        let p = build_prompt(&t, true);
        assert_eq!(p.assembled.matches("EXAMPLE:").count(), 3);
        let i = p.assembled.find("VALID ACTIONS").unwrap();
        let e = p.assembled.find("EXAMPLE:").unwrap();
        let g = p.assembled.find("GUIDANCE:").unwrap();
        let f = p.assembled.rfind("Maze Structure:").unwrap();
        assert!(i < e && e < g && g < f);
        assert!(p.assembled.ends_with("\nYOUR SOLUTION:\n"));
        assert_eq!(p, build_prompt(&t, true));

        let bare = build_prompt(&t, false);
        assert!(bare.guidance.is_none());
        assert!(!bare.assembled.contains("GUIDANCE:"));
        assert_eq!(bare.assembled, p.assembled.replace(&format!("{GUIDANCE}\n"), ""));

        let none = build_prompt_with(&t, PromptOptions { include_guidance: false, few_shot: 0 });
        assert_eq!(none.assembled.matches("EXAMPLE:").count(), 0);
    }
}
