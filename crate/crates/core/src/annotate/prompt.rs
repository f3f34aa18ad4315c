use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::filter::{filter_and_clean, Verdict};
use super::AnnotateError;
use crate::grammar::ToolCallMarkers;

const SYSTEM_INSTRUCTION: &str = "\
You annotate Python source code with API search calls. Before a line that \
uses a library API, insert <API>APISearch(query)->answer</API> where query is \
a short natural-language description of what the code needs and answer is \
the API that is used right after the call. Copy every other character of the \
input unchanged. Do not nest calls and insert at most four calls. Reply with \
the annotated code only.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotPair {
    pub library: String,
    pub input: String,
    pub annotated: String,
}

/// Instruction plus exactly three worked examples from distinct libraries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationPrompt {
    pub system_instruction: String,
    pub few_shot_pairs: Vec<FewShotPair>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Body of the annotator request: `{"system", "messages"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: String,
    pub messages: Vec<ChatMessage>,
}

impl Default for AnnotationPrompt {
    fn default() -> Self {
        let pair = |library: &str, input: &str, annotated: &str| FewShotPair {
            library: library.into(),
            input: input.into(),
            annotated: annotated.into(),
        };
        Self {
            system_instruction: SYSTEM_INSTRUCTION.into(),
            few_shot_pairs: vec![
                pair(
                    "numpy",
                    "def flatten_scores(scores):\n    arr = np.array(scores)\n    return np.squeeze(arr)\n",
                    "def flatten_scores(scores):\n    arr = <API>APISearch(convert list to array)->np.array</API>np.array(scores)\n    return <API>APISearch(remove single-dimensional entries)->np.squeeze</API>np.squeeze(arr)\n",
                ),
                pair(
                    "pandas",
                    "def load_table(path):\n    df = pd.read_csv(path)\n    return df.dropna()\n",
                    "def load_table(path):\n    df = <API>APISearch(read csv file into dataframe)->pd.read_csv</API>pd.read_csv(path)\n    return df.dropna()\n",
                ),
                pair(
                    "matplotlib",
                    "def plot_curve(xs, ys):\n    plt.plot(xs, ys)\n    plt.savefig(\"curve.png\")\n",
                    "def plot_curve(xs, ys):\n    <API>APISearch(draw line plot)->plt.plot</API>plt.plot(xs, ys)\n    <API>APISearch(save figure to file)->plt.savefig</API>plt.savefig(\"curve.png\")\n",
                ),
            ],
        }
    }
}

impl AnnotationPrompt {
    pub fn validate(&self, public_prefixes: &[String], markers: &ToolCallMarkers) -> Result<(), AnnotateError> {
        if self.few_shot_pairs.len() != 3 {
            return Err(AnnotateError::InvalidPrompt(format!(
                "expected 3 few-shot pairs, got {}",
                self.few_shot_pairs.len()
            )));
        }
        let libraries: BTreeSet<&str> = self.few_shot_pairs.iter().map(|p| p.library.as_str()).collect();
        if libraries.len() != 3 {
            return Err(AnnotateError::InvalidPrompt("few-shot pairs must use three distinct libraries".into()));
        }
        for pair in &self.few_shot_pairs {
            let verdict = filter_and_clean(&pair.input, &pair.annotated, public_prefixes, markers).verdict;
            if let Verdict::Rejected(rule) = verdict {
                return Err(AnnotateError::InvalidPrompt(format!(
                    "{} example fails filter rule {rule}",
                    pair.library
                )));
            }
        }
        Ok(())
    }

    pub fn render(&self, target_code: &str) -> ChatRequest {
        let mut messages = Vec::with_capacity(self.few_shot_pairs.len() * 2 + 1);
        for pair in &self.few_shot_pairs {
            messages.push(ChatMessage {
                role: "user".into(),
                content: pair.input.clone(),
            });
            messages.push(ChatMessage {
                role: "assistant".into(),
                content: pair.annotated.clone(),
            });
        }
        messages.push(ChatMessage {
            role: "user".into(),
            content: target_code.to_string(),
        });
        ChatRequest {
            system: self.system_instruction.clone(),
            messages,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::filter::DEFAULT_PUBLIC_PREFIXES;

    fn prefixes() -> Vec<String> {
        DEFAULT_PUBLIC_PREFIXES.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn default_prompt_is_valid() {
        AnnotationPrompt::default()
            .validate(&prefixes(), &ToolCallMarkers::default())
            .unwrap();
    }

    #[test]
    fn duplicate_library_rejected() {
        let mut prompt = AnnotationPrompt::default();
        prompt.few_shot_pairs[2].library = "numpy".into();
        assert!(prompt.validate(&prefixes(), &ToolCallMarkers::default()).is_err());
    }

    #[test]
    fn broken_example_rejected() {
        let mut prompt = AnnotationPrompt::default();
        prompt.few_shot_pairs[0].annotated.push_str("extra");
        assert!(prompt.validate(&prefixes(), &ToolCallMarkers::default()).is_err());
    }

    #[test]
    fn render_alternates_roles() {
        let req = AnnotationPrompt::default().render("x = 1");
        assert_eq!(req.messages.len(), 7);
        assert_eq!(req.messages[0].role, "user");
        assert_eq!(req.messages[1].role, "assistant");
        assert_eq!(req.messages[6].content, "x = 1");
    }
}
