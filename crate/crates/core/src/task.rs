use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Which label set a dataset or model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Four relatedness classes between knowledge units.
    Ku4,
    /// Duplicate / non-duplicate question pairs.
    Binary,
}

const KU4_LABELS: [&str; 4] = ["duplicate", "direct", "indirect", "isolated"];
const BINARY_LABELS: [&str; 2] = ["duplicate", "non-duplicate"];

impl Task {
    /// Class names in index order.
    pub fn labels(self) -> &'static [&'static str] {
        match self {
            Task::Ku4 => &KU4_LABELS,
            Task::Binary => &BINARY_LABELS,
        }
    }

    pub fn num_classes(self) -> usize {
        self.labels().len()
    }

    pub fn label_index(self, name: &str) -> Option<usize> {
        let name = name.trim().to_ascii_lowercase();
        let name = if self == Task::Binary && (name == "nonduplicate" || name == "non_duplicate") {
            "non-duplicate".to_string()
        } else {
            name
        };
        self.labels().iter().position(|&l| l == name)
    }

    pub fn label_name(self, index: usize) -> &'static str {
        self.labels()[index]
    }

    pub fn from_num_classes(n: usize) -> Option<Task> {
        match n {
            4 => Some(Task::Ku4),
            2 => Some(Task::Binary),
            _ => None,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Ku4 => "ku4",
            Task::Binary => "binary",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ku4" | "four-class" | "ku" => Ok(Task::Ku4),
            "binary" | "askubuntu" => Ok(Task::Binary),
            other => Err(Error::Config(format!("unknown task '{other}' (expected ku4 or binary)"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_order_is_fixed() {
        assert_eq!(Task::Ku4.label_index("duplicate"), Some(0));
        assert_eq!(Task::Ku4.label_index("isolated"), Some(3));
        assert_eq!(Task::Ku4.label_index("related"), None);
        assert_eq!(Task::Binary.label_index("non-duplicate"), Some(1));
        assert_eq!(Task::Binary.label_index("direct"), None);
    }

    #[test]
    fn parse_roundtrip() {
        for t in [Task::Ku4, Task::Binary] {
            assert_eq!(t.to_string().parse::<Task>().unwrap(), t);
        }
        assert!("three".parse::<Task>().is_err());
    }
}
