use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The one-line prompt used for every benchmark run unless told otherwise.
pub const SIMPLE_PROMPT: &str = "Extract the data from this chart as a tab-separated table";

/// Rule-based prompt: stacked bars, axis-scale multipliers, strict output format.
pub const DETAILED_PROMPT: &str = "\
Extract the data from this chart as a tab-separated table.

Follow these rules:
1. Output format: plain tab-separated values only. The first line is a header row. \
Use one line per data point or category and one column per data series. Do not wrap \
the table in code fences and do not add commentary before or after it.
2. Header: the first column holds the category or x-axis values; name each further \
column after its series as shown in the legend, or after the y-axis label if there is \
no legend.
3. Stacked bars: report the value of each individual segment, not the cumulative \
height. Decompose every stack into one column per segment.
4. Grouped bars: one column per group member, one row per category.
5. Axis-scale multipliers: if an axis or its label carries a multiplier such as \
\"\u{00d7}10\u{2076}\", \"(millions)\", \"in thousands\" or \"1e3\", apply it so that \
every cell holds the full value (for example 2.3 on an axis labelled \"millions\" \
becomes 2300000). Never drop the magnitude.
6. Numbers: write plain numbers without thousands separators or units. Keep percent \
values as printed (45% becomes 45).
7. Data labels: when values are printed on the chart, copy them exactly instead of \
estimating from the axis.
8. Box plots: one row per box with columns min, q1, median, q3, max.
9. Missing values: leave the cell empty.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    #[default]
    Simple,
    Detailed,
}

impl PromptKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PromptKind::Simple => "simple",
            PromptKind::Detailed => "detailed",
        }
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "simple" => Ok(PromptKind::Simple),
            "detailed" => Ok(PromptKind::Detailed),
            other => Err(format!("unknown prompt kind {other:?} (expected simple or detailed)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptProfile {
    pub kind: PromptKind,
    pub text: String,
}

impl PromptProfile {
    pub fn simple() -> Self {
        PromptProfile {
            kind: PromptKind::Simple,
            text: SIMPLE_PROMPT.to_string(),
        }
    }

    pub fn detailed() -> Self {
        PromptProfile {
            kind: PromptKind::Detailed,
            text: DETAILED_PROMPT.to_string(),
        }
    }

    pub fn for_kind(kind: PromptKind) -> Self {
        match kind {
            PromptKind::Simple => Self::simple(),
            PromptKind::Detailed => Self::detailed(),
        }
    }
}
