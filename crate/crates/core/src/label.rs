//! The closed code-analysis-stage taxonomy.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// Functional stage of a source line. `Invalid` is never a gold label; it is
/// the outcome of a prediction that matched no stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    LoadingLibrary,
    LoadingData,
    DataWrangling,
    Analysis,
    Visualization,
    SavingToOutput,
    Comment,
    Invalid,
}

impl Label {
    /// The seven taxonomy classes in fixed order. This order is the class
    /// order of the local model and the row order of confusion matrices.
    pub const CLASSES: [Label; 7] = [
        Label::LoadingLibrary,
        Label::LoadingData,
        Label::DataWrangling,
        Label::Analysis,
        Label::Visualization,
        Label::SavingToOutput,
        Label::Comment,
    ];

    pub const ALL: [Label; 8] = [
        Label::LoadingLibrary,
        Label::LoadingData,
        Label::DataWrangling,
        Label::Analysis,
        Label::Visualization,
        Label::SavingToOutput,
        Label::Comment,
        Label::Invalid,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::LoadingLibrary => "Loading Library",
            Label::LoadingData => "Loading Data",
            Label::DataWrangling => "Data Wrangling",
            Label::Analysis => "Analysis",
            Label::Visualization => "Visualization",
            Label::SavingToOutput => "Saving To Output",
            Label::Comment => "Comment",
            Label::Invalid => "Invalid",
        }
    }

    /// Position in [`Label::ALL`]; `Invalid` is 7.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_valid(self) -> bool {
        self != Label::Invalid
    }

    /// Annotation-rubric definition shown to classifiers.
    pub fn definition(self) -> &'static str {
        match self {
            Label::LoadingLibrary => {
                "Loads an external library that provides specific functionalities."
            }
            Label::LoadingData => "Loads data from an outside source into the R environment.",
            Label::DataWrangling => {
                "Shifts data around without adding new information. This includes data \
                 transformation such as cleaning, filtering, summarizing, and augmenting an \
                 existing dataset."
            }
            Label::Analysis => {
                "Train and evaluate models to learn relationships in the data, perform \
                 statistical analysis, and generate insights for predictions or data \
                 understanding."
            }
            Label::Visualization => {
                "Creates visual outputs of data, such as writing to an image file or \
                 displaying on the screen."
            }
            Label::SavingToOutput => "Saves data or results to a file, such as a CSV or text file.",
            Label::Comment => {
                "Provides additional information that is different from the next code line, \
                 explaining the process or the experiment/task."
            }
            Label::Invalid => "No recognizable category.",
        }
    }

    /// When-to-use guidance from the annotation rubric.
    pub fn usage_rule(self) -> &'static str {
        match self {
            Label::LoadingLibrary => {
                "Loading packages, setting the working directory, or using the library keyword."
            }
            Label::LoadingData => "Reading data from files or databases.",
            Label::DataWrangling => {
                "Direct manipulation of data structures to make data more accessible or \
                 manageable."
            }
            Label::Analysis => {
                "Statistical modeling, fitting or specifying machine learning models, \
                 simulation, and defining loss functions."
            }
            Label::Visualization => {
                "Any code that defines or adjusts visual properties for data display, such as \
                 color schemes or formatting."
            }
            Label::SavingToOutput => {
                "Writing results to a file with functions like write.csv(), write.table(), or \
                 saveRDS()."
            }
            Label::Comment => {
                "A comment line that does not describe the functionality of the subsequent \
                 lines of code."
            }
            Label::Invalid => "",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Exact, case-sensitive match on the canonical display string.
impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Label::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
