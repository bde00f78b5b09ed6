// Copyright 2026 The Fasco Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! In-memory integer tables used by the synthetic testbed and lookup lists.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    /// Unqualified column names.
    pub columns: Vec<String>,
    /// Column-major cell values; every column has `rows()` entries.
    pub data: Vec<Vec<i64>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: Vec<String>, data: Vec<Vec<i64>>) -> Result<Self> {
        let name = name.into();
        if columns.len() != data.len() {
            return Err(Error::InvalidInput(format!(
                "table {name}: {} column names for {} data columns",
                columns.len(),
                data.len()
            )));
        }
        if let Some(first) = data.first() {
            if data.iter().any(|c| c.len() != first.len()) {
                return Err(Error::InvalidInput(format!("table {name}: ragged columns")));
            }
        }
        Ok(Table {
            name,
            columns,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn column_index(&self, column: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == column)
    }

    /// Looks a column up by qualified (`table.column`) or bare name.
    pub fn column(&self, column: &str) -> Option<&[i64]> {
        let bare = match column.split_once('.') {
            Some((t, c)) if t == self.name => c,
            Some(_) => return None,
            None => column,
        };
        self.column_index(bare).map(|i| self.data[i].as_slice())
    }

    pub fn qualified_columns(&self) -> impl Iterator<Item = String> + '_ {
        self.columns
            .iter()
            .map(move |c| format!("{}.{}", self.name, c))
    }

    /// Keeps only the rows selected by `keep`.
    pub fn retain_rows(&self, keep: &[bool]) -> Table {
        let data = self
            .data
            .iter()
            .map(|col| {
                col.iter()
                    .zip(keep)
                    .filter(|(_, k)| **k)
                    .map(|(v, _)| *v)
                    .collect()
            })
            .collect();
        Table {
            name: self.name.clone(),
            columns: self.columns.clone(),
            data,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Database {
    pub tables: BTreeMap<String, Table>,
}

impl Database {
    pub fn insert(&mut self, table: Table) {
        self.tables.insert(table.name.clone(), table);
    }

    pub fn table(&self, name: &str) -> Result<&Table> {
        self.tables
            .get(name)
            .ok_or_else(|| Error::Catalog(format!("unknown relation {name:?}")))
    }

    /// Resolves a qualified `table.column` identifier.
    pub fn column(&self, qualified: &str) -> Result<&[i64]> {
        let (t, _) = qualified
            .split_once('.')
            .ok_or_else(|| Error::Catalog(format!("column {qualified:?} is not qualified")))?;
        self.table(t)?
            .column(qualified)
            .ok_or_else(|| Error::Catalog(format!("unknown column {qualified:?}")))
    }
}
