//! Playback of counter values recorded outside this process.
//!
//! Rows are queued per class label in stored order. Measuring event `j` for a
//! target with label `L` returns column `j` of the current row for `L`; the
//! cursor advances once every column of that row has been served.

use std::path::Path;

use super::{BackendCode, CounterBackend, CounterSample, EventDescriptor, Privilege, Target};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
struct LabelQueue {
    rows: Vec<Vec<u64>>,
    cursor: usize,
    served: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct ReplayBackend {
    source: String,
    catalog: Vec<EventDescriptor>,
    queues: Vec<LabelQueue>,
    exec_counter: u64,
}

impl ReplayBackend {
    /// `rows` pairs a class label with one recorded value per schema column.
    pub fn new(
        source: impl Into<String>,
        schema: &[String],
        rows: impl IntoIterator<Item = (usize, Vec<u64>)>,
    ) -> Result<Self> {
        if schema.is_empty() {
            return Err(Error::Degenerate("replay schema has no events".into()));
        }
        let catalog = schema
            .iter()
            .enumerate()
            .map(|(i, name)| EventDescriptor {
                name: name.clone(),
                description: format!("replayed column {name}"),
                privilege: Privilege::User,
                backend_code: BackendCode::Replay(i),
            })
            .collect();
        let mut queues: Vec<LabelQueue> = Vec::new();
        for (label, values) in rows {
            if values.len() != schema.len() {
                return Err(Error::SchemaMismatch(format!(
                    "replay row has {} values for {} events",
                    values.len(),
                    schema.len()
                )));
            }
            if queues.len() <= label {
                queues.resize_with(label + 1, || LabelQueue {
                    rows: Vec::new(),
                    cursor: 0,
                    served: vec![false; schema.len()],
                });
            }
            queues[label].rows.push(values);
        }
        Ok(ReplayBackend {
            source: source.into(),
            catalog,
            queues,
            exec_counter: 0,
        })
    }

    /// Replays a dataset whose features are non-negative integer counts.
    pub fn from_dataset<T: Scalar>(source: impl Into<String>, data: &Dataset<T>) -> Result<Self> {
        let mut rows = Vec::with_capacity(data.len());
        for (i, (row, &label)) in data.rows().zip(data.labels()).enumerate() {
            let counts = row
                .iter()
                .enumerate()
                .map(|(j, v)| {
                    let f = v.to_f64_lossy();
                    if f >= 0.0 && f.fract() == 0.0 && f <= u64::MAX as f64 {
                        Ok(f as u64)
                    } else {
                        Err(Error::Degenerate(format!(
                            "row {i}, column {}: {v} is not a raw counter value",
                            data.schema()[j]
                        )))
                    }
                })
                .collect::<Result<Vec<u64>>>()?;
            rows.push((label, counts));
        }
        Self::new(source, data.schema(), rows)
    }

    pub fn open(path: &Path) -> Result<Self> {
        let data: Dataset<f64> = Dataset::load(path)?;
        Self::from_dataset(format!("replay({})", path.display()), &data)
    }

    /// Rows stored for `label`.
    pub fn rows_for(&self, label: usize) -> usize {
        self.queues.get(label).map_or(0, |q| q.rows.len())
    }

    pub fn labels(&self) -> usize {
        self.queues.len()
    }
}

impl CounterBackend for ReplayBackend {
    fn identity(&self) -> String {
        self.source.clone()
    }

    fn catalog(&self) -> Result<Vec<EventDescriptor>> {
        Ok(self.catalog.clone())
    }

    fn measure_one(
        &mut self,
        event: &EventDescriptor,
        target: &mut dyn Target,
    ) -> Result<CounterSample> {
        let column = self
            .catalog
            .iter()
            .position(|e| e.name == event.name)
            .ok_or_else(|| Error::UnknownEvent(event.name.clone()))?;
        let label = target.label();
        let fail = |reason: String| Error::MeasurementFailed {
            event: event.name.clone(),
            reason,
        };
        let queue = self
            .queues
            .get_mut(label)
            .ok_or_else(|| fail(format!("no recorded rows for class {label}")))?;
        let row = queue
            .rows
            .get(queue.cursor)
            .ok_or_else(|| fail(format!("recorded rows for class {label} exhausted")))?;
        if queue.served[column] {
            return Err(fail(format!(
                "column served twice for recorded row {} of class {label}",
                queue.cursor
            )));
        }
        target.invoke().map_err(|e| fail(e.to_string()))?;
        let value = row[column];
        queue.served[column] = true;
        if queue.served.iter().all(|&s| s) {
            queue.cursor += 1;
            queue.served.iter_mut().for_each(|s| *s = false);
        }
        let exec_index = self.exec_counter;
        self.exec_counter += 1;
        Ok(CounterSample {
            event: event.name.clone(),
            value,
            exec_index,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counters::LabelTarget;

    fn schema() -> Vec<String> {
        ["TOT_INS", "TOT_CYC", "BR_MSP"].iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn catalog_follows_header_order() {
        let b = ReplayBackend::new("t", &schema(), vec![(0, vec![1, 2, 3])]).unwrap();
        let names: Vec<_> = b.catalog().unwrap().into_iter().map(|e| e.name).collect();
        assert_eq!(names, schema());
    }

    #[test]
    fn values_come_back_in_stored_order() {
        let rows = vec![
            (0, vec![10, 20, 30]),
            (1, vec![7, 8, 9]),
            (0, vec![11, 21, 31]),
        ];
        let mut b = ReplayBackend::new("t", &schema(), rows).unwrap();
        let cat = b.catalog().unwrap();
        let mut zero = LabelTarget { label: 0, name: "a".into() };
        let mut one = LabelTarget { label: 1, name: "b".into() };
        let mut got = Vec::new();
        for _ in 0..2 {
            got.push(cat.iter().map(|e| b.measure_one(e, &mut zero).unwrap().value).collect::<Vec<_>>());
        }
        assert_eq!(got, vec![vec![10, 20, 30], vec![11, 21, 31]]);
        assert_eq!(b.measure_one(&cat[2], &mut one).unwrap().value, 9);
        assert!(b.measure_one(&cat[0], &mut zero).is_err());
    }

    #[test]
    fn double_serving_a_column_fails() {
        let mut b = ReplayBackend::new("t", &schema(), vec![(0, vec![1, 2, 3])]).unwrap();
        let cat = b.catalog().unwrap();
        let mut t = LabelTarget { label: 0, name: "a".into() };
        b.measure_one(&cat[0], &mut t).unwrap();
        assert!(matches!(
            b.measure_one(&cat[0], &mut t),
            Err(Error::MeasurementFailed { .. })
        ));
    }
}
