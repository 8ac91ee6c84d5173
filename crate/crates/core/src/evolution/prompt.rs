//! Prompt assembly for code-writing backends.
//!
//! A prompt is a Python file: the problem description and the task as
//! comments, then the context programs renamed `priority_v0`,
//! `priority_v1`, ... from worst to best, then the header of the next
//! version to write.

use regex::Regex;
use std::sync::LazyLock;

use super::pool::ContextProgram;

pub const TEMPLATE_VERSION: u32 = 1;
pub const PROBLEM_TEMPLATE: &str = include_str!("../../assets/problem.txt");
pub const TASK_TEMPLATE: &str = include_str!("../../assets/task.txt");

const HEADER_ARGS: &str = "(graph1: list[list[int]], graph2: list[list[int]], weights: list[list[int]]) -> list[list[float]]:";

static DEF_PRIORITY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bdef\s+priority\s*\(").unwrap());
static DEF_VERSIONED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bdef\s+priority_v(\d+)\s*\(").unwrap());
static FENCE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)```[A-Za-z0-9_+-]*[ \t]*\r?\n(.*?)```").unwrap());

pub fn render_prompt(problem: &str, task: &str, context: &[ContextProgram]) -> String {
    let mut out = format!("{}\n{}\n", problem.trim_end(), task.trim_end());
    for (v, c) in context.iter().enumerate() {
        let source = c.program.kind.source();
        let renamed = DEF_PRIORITY.replace(&source, format!("def priority_v{v}("));
        out.push_str(&format!("\n# priority_v{v}: score {}\n{}\n", c.score, renamed.trim_end()));
    }
    let next = context.len();
    out.push_str(&format!("\n\ndef priority_v{next}{HEADER_ARGS}\n"));
    if next > 0 {
        out.push_str(&format!("  \"\"\"Improved version of `priority_v{}`.\"\"\"\n", next - 1));
    }
    out
}

/// Extracts candidate sources from a model reply: every fenced block that
/// defines `priority` or a versioned `priority_vN`. A block with only
/// versioned definitions gets `priority` bound to its highest version.
pub fn extract_programs(reply: &str) -> Vec<String> {
    FENCE
        .captures_iter(reply)
        .filter_map(|c| {
            let body = c[1].trim_end().to_string();
            if DEF_PRIORITY.is_match(&body) {
                return Some(body + "\n");
            }
            let top = DEF_VERSIONED
                .captures_iter(&body)
                .filter_map(|m| m[1].parse::<u32>().ok())
                .max()?;
            Some(format!("{body}\n\npriority = priority_v{top}\n"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::{PriorityProgram, ProgramId, ProgramKind};

    #[test]
    fn prompt_has_three_parts() {
        let ctx = [
            ContextProgram {
                program: PriorityProgram::zero(ProgramId(0)),
                score: 3,
            },
            ContextProgram {
                program: PriorityProgram::new(ProgramId(1), ProgramKind::python("def priority(a, b, w):\n  return w\n"), 0),
                score: 8,
            },
        ];
        let p = render_prompt(PROBLEM_TEMPLATE, TASK_TEMPLATE, &ctx);
        assert!(p.starts_with("# Graph edit distance"));
        assert!(p.contains("# Task."));
        assert!(p.contains("def priority_v0("));
        assert!(p.contains("# priority_v1: score 8\ndef priority_v1(a, b, w):"));
        assert!(p.trim_end().ends_with("\"\"\"Improved version of `priority_v1`.\"\"\""));
        assert!(p.contains("def priority_v2(graph1"));
    }

    #[test]
    fn extracts_fenced_code() {
        let reply = "Here:\n```python\ndef priority(a, b, w):\n  return w\n```\ntext\n```\ndef priority_v1(a, b, w):\n  return w\n\ndef priority_v2(a, b, w):\n  return priority_v1(a, b, w)\n```\n```\nprint(1)\n```";
        let got = extract_programs(reply);
        assert_eq!(got.len(), 2);
        assert_eq!(got[0], "def priority(a, b, w):\n  return w\n");
        assert!(got[1].ends_with("priority = priority_v2\n"));
        assert!(extract_programs("no code at all").is_empty());
    }
}
