use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};

use super::{aggregate_partial, AggregateReport, AnnotationError, AnnotationItem, JudgmentRecord};

/// Outcome of an accepted submission.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Submission {
    Recorded(JudgmentRecord),
    /// Exact repeat of an earlier judgment; nothing was written.
    Duplicate(JudgmentRecord),
}

impl Submission {
    pub fn record(&self) -> &JudgmentRecord {
        match self {
            Submission::Recorded(r) | Submission::Duplicate(r) => r,
        }
    }
}

/// Batch state backed by an append-only journal of judgments.
///
/// Which items were served to whom lives in memory only; replayed
/// judgments count as served.
#[derive(Debug)]
pub struct AnnotationStore {
    items: BTreeMap<String, AnnotationItem>,
    judgments: BTreeMap<(String, String), JudgmentRecord>,
    order: Vec<(String, String)>,
    counts: BTreeMap<String, usize>,
    served: HashSet<(String, String)>,
    journal: Option<(PathBuf, File)>,
}

impl AnnotationStore {
    /// An in-memory store; judgments are not persisted.
    pub fn new(batch: Vec<AnnotationItem>) -> Result<Self, AnnotationError> {
        let mut items = BTreeMap::new();
        for item in batch {
            item.validate()?;
            let id = item.item_id.clone();
            if items.insert(id.clone(), item).is_some() {
                return Err(AnnotationError::DuplicateItem(id));
            }
        }
        let counts = items.keys().map(|k| (k.clone(), 0)).collect();
        Ok(AnnotationStore {
            items,
            judgments: BTreeMap::new(),
            order: Vec::new(),
            counts,
            served: HashSet::new(),
            journal: None,
        })
    }

    /// Opens `journal`, replays it and appends new judgments to it.
    ///
    /// A final line without a newline that fails to parse is the remains of
    /// an interrupted write; it is dropped and the file truncated to the last
    /// complete record. Any other bad line is an error.
    pub fn open(batch: Vec<AnnotationItem>, journal: &Path) -> Result<Self, AnnotationError> {
        let mut store = Self::new(batch)?;
        if journal.exists() {
            let full = std::fs::read(journal)?;
            let segments: Vec<&[u8]> = full.split(|b| *b == b'\n').collect();
            let mut valid_len = 0usize;
            for (i, segment) in segments.iter().enumerate() {
                // the piece after the final newline is empty unless a write was cut short
                let unterminated = i + 1 == segments.len();
                let text = String::from_utf8_lossy(segment);
                if text.trim().is_empty() {
                    if !unterminated {
                        valid_len += segment.len() + 1;
                    }
                    continue;
                }
                let err = |message: String| AnnotationError::Journal {
                    path: journal.display().to_string(),
                    line: i + 1,
                    message,
                };
                match serde_json::from_str::<JudgmentRecord>(&text) {
                    Ok(record) => {
                        store.apply(record).map_err(|e| err(e.to_string()))?;
                        valid_len += segment.len() + usize::from(!unterminated);
                    }
                    Err(e) if unterminated => {
                        log::warn!("dropping truncated journal tail at line {}: {e}", i + 1);
                    }
                    Err(e) => return Err(err(e.to_string())),
                }
            }
            if valid_len < full.len() {
                OpenOptions::new().write(true).open(journal)?.set_len(valid_len as u64)?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(journal)?;
        store.journal = Some((journal.to_path_buf(), file));
        Ok(store)
    }

    fn apply(&mut self, record: JudgmentRecord) -> Result<(), AnnotationError> {
        let item = self
            .items
            .get(&record.item_id)
            .ok_or_else(|| AnnotationError::UnknownItem(record.item_id.clone()))?;
        let key = (record.item_id.clone(), record.annotator_id.clone());
        if self.judgments.contains_key(&key) {
            return Err(AnnotationError::Conflict { item: key.0, annotator: key.1 });
        }
        let count = self.counts.get_mut(&record.item_id).expect("count per item");
        if *count >= item.required_judges as usize {
            return Err(AnnotationError::ItemFull(record.item_id));
        }
        *count += 1;
        self.served.insert(key.clone());
        self.order.push(key.clone());
        self.judgments.insert(key, record);
        Ok(())
    }

    pub fn items(&self) -> impl Iterator<Item = &AnnotationItem> {
        self.items.values()
    }

    pub fn item(&self, item_id: &str) -> Option<&AnnotationItem> {
        self.items.get(item_id)
    }

    /// Judgments in submission order.
    pub fn judgments(&self) -> Vec<JudgmentRecord> {
        self.order.iter().map(|k| self.judgments[k].clone()).collect()
    }

    pub fn judgment_count(&self) -> usize {
        self.order.len()
    }

    pub fn journal_path(&self) -> Option<&Path> {
        self.journal.as_ref().map(|(p, _)| p.as_path())
    }

    fn open_for(&self, annotator: &str) -> impl Iterator<Item = (&AnnotationItem, usize)> + '_ {
        let annotator = annotator.to_string();
        self.items.values().filter_map(move |item| {
            let count = self.counts[&item.item_id];
            let judged = self.judgments.contains_key(&(item.item_id.clone(), annotator.clone()));
            (!judged && count < item.required_judges as usize).then_some((item, count))
        })
    }

    /// Items `annotator` has judged and items still open to them.
    pub fn progress(&self, annotator: &str) -> (usize, usize) {
        let done = self.judgments.keys().filter(|(_, a)| a == annotator).count();
        (done, self.open_for(annotator).count())
    }

    /// The least-judged item `annotator` has not judged yet, ties broken by item id.
    pub fn next_item(&mut self, annotator: &str) -> Result<Option<AnnotationItem>, AnnotationError> {
        if annotator.trim().is_empty() {
            return Err(AnnotationError::InvalidRequest("annotator id is empty".into()));
        }
        let next = self
            .open_for(annotator)
            .min_by(|(a, ca), (b, cb)| ca.cmp(cb).then_with(|| a.item_id.cmp(&b.item_id)))
            .map(|(item, _)| item.clone());
        if let Some(item) = &next {
            self.served.insert((item.item_id.clone(), annotator.to_string()));
        }
        Ok(next)
    }

    /// Records a judgment, appending it to the journal before returning.
    pub fn submit(
        &mut self,
        item_id: &str,
        annotator: &str,
        plausible: bool,
        now: DateTime<Utc>,
    ) -> Result<Submission, AnnotationError> {
        if annotator.trim().is_empty() || item_id.trim().is_empty() {
            return Err(AnnotationError::InvalidRequest("item_id and annotator_id are required".into()));
        }
        let item = self.items.get(item_id).ok_or_else(|| AnnotationError::UnknownItem(item_id.to_string()))?;
        let key = (item_id.to_string(), annotator.to_string());
        if let Some(existing) = self.judgments.get(&key) {
            return if existing.plausible == plausible {
                Ok(Submission::Duplicate(existing.clone()))
            } else {
                Err(AnnotationError::Conflict { item: key.0, annotator: key.1 })
            };
        }
        if !self.served.contains(&key) {
            return Err(AnnotationError::NotServed { item: key.0, annotator: key.1 });
        }
        if self.counts[item_id] >= item.required_judges as usize {
            return Err(AnnotationError::ItemFull(item_id.to_string()));
        }
        let record = JudgmentRecord {
            item_id: key.0,
            annotator_id: key.1,
            plausible,
            submitted_at: now,
        };
        if let Some((_, file)) = &mut self.journal {
            let mut line = serde_json::to_vec(&record).expect("record serializes");
            line.push(b'\n');
            file.write_all(&line)?;
            file.sync_data()?;
        }
        self.apply(record.clone())?;
        Ok(Submission::Recorded(record))
    }

    pub fn report(&self) -> Result<AggregateReport, AnnotationError> {
        let batch: Vec<AnnotationItem> = self.items.values().cloned().collect();
        aggregate_partial(&batch, &self.judgments())
    }
}
