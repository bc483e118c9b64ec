//! Prompt segmentation and positional edits.
//!
//! A word is a maximal run of non-whitespace; words are rejoined with single
//! spaces. A statement is a comma-separated segment trimmed of surrounding
//! whitespace, with empty segments dropped; statements are rejoined with
//! `", "`.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub fn split_words(prompt: &str) -> Vec<String> {
    prompt.split_whitespace().map(ToString::to_string).collect()
}

pub fn join_words(words: &[String]) -> String {
    words.join(" ")
}

pub fn split_statements(prompt: &str) -> Vec<String> {
    prompt.split(',').map(str::trim).filter(|s| !s.is_empty()).map(ToString::to_string).collect()
}

pub fn join_statements(statements: &[String]) -> String {
    statements.join(", ")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("index {index} out of range for {len} segments")]
pub struct IndexOutOfRange {
    pub index: usize,
    pub len: usize,
}

/// Word-level edit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum WordEdit {
    Remove {
        index: usize,
    },
    Switch {
        first: usize,
        second: usize,
    },
    /// Duplicate the segment at `from` and insert the copy at `to` (`0..=len`).
    Copy {
        from: usize,
        to: usize,
    },
}

/// Statement-level edit; `add` and `replace` draw from a statement pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum StatementEdit {
    Remove { index: usize },
    Switch { first: usize, second: usize },
    Copy { from: usize, to: usize },
    Add { position: usize, statement: String },
    Replace { index: usize, statement: String },
}

fn check(index: usize, len: usize) -> Result<(), IndexOutOfRange> {
    if index < len {
        Ok(())
    } else {
        Err(IndexOutOfRange { index, len })
    }
}

fn check_insert(position: usize, len: usize) -> Result<(), IndexOutOfRange> {
    if position <= len {
        Ok(())
    } else {
        Err(IndexOutOfRange { index: position, len })
    }
}

fn remove(items: &mut Vec<String>, index: usize) -> Result<(), IndexOutOfRange> {
    check(index, items.len())?;
    items.remove(index);
    Ok(())
}

fn switch(items: &mut [String], first: usize, second: usize) -> Result<(), IndexOutOfRange> {
    check(first, items.len())?;
    check(second, items.len())?;
    items.swap(first, second);
    Ok(())
}

fn copy(items: &mut Vec<String>, from: usize, to: usize) -> Result<(), IndexOutOfRange> {
    check(from, items.len())?;
    check_insert(to, items.len())?;
    let dup = items[from].clone();
    items.insert(to, dup);
    Ok(())
}

impl WordEdit {
    pub fn apply(&self, prompt: &str) -> Result<String, IndexOutOfRange> {
        let mut words = split_words(prompt);
        match *self {
            WordEdit::Remove { index } => remove(&mut words, index)?,
            WordEdit::Switch { first, second } => switch(&mut words, first, second)?,
            WordEdit::Copy { from, to } => copy(&mut words, from, to)?,
        }
        Ok(join_words(&words))
    }

    pub fn name(&self) -> &'static str {
        match self {
            WordEdit::Remove { .. } => "remove",
            WordEdit::Switch { .. } => "switch",
            WordEdit::Copy { .. } => "copy",
        }
    }
}

impl StatementEdit {
    pub fn apply(&self, prompt: &str) -> Result<String, IndexOutOfRange> {
        let mut statements = split_statements(prompt);
        match self {
            StatementEdit::Remove { index } => remove(&mut statements, *index)?,
            StatementEdit::Switch { first, second } => switch(&mut statements, *first, *second)?,
            StatementEdit::Copy { from, to } => copy(&mut statements, *from, *to)?,
            StatementEdit::Add { position, statement } => {
                check_insert(*position, statements.len())?;
                statements.insert(*position, statement.clone());
            }
            StatementEdit::Replace { index, statement } => {
                check(*index, statements.len())?;
                statements[*index] = statement.clone();
            }
        }
        Ok(join_statements(&statements))
    }

    pub fn name(&self) -> &'static str {
        match self {
            StatementEdit::Remove { .. } => "remove",
            StatementEdit::Switch { .. } => "switch",
            StatementEdit::Copy { .. } => "copy",
            StatementEdit::Add { .. } => "add",
            StatementEdit::Replace { .. } => "replace",
        }
    }
}
