//! Assignment of arrival, departure and route to every (train, node) pair.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Instance, Route, Time, TrainId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub arrival: Time,
    pub departure: Time,
    pub route: Route,
}

/// A possibly partial schedule: each train is either fully scheduled (one
/// event per itinerary position) or absent.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Schedule {
    trains: Vec<Option<Vec<Event>>>,
}

#[derive(Serialize, Deserialize)]
struct TrainEntry {
    train: TrainId,
    events: Vec<Event>,
}

#[derive(Serialize, Deserialize)]
struct ScheduleDoc {
    trains: Vec<TrainEntry>,
}

impl Serialize for Schedule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.doc().serialize(s)
    }
}

impl Schedule {
    pub fn empty(num_trains: usize) -> Self {
        Schedule {
            trains: vec![None; num_trains],
        }
    }

    /// The unperturbed base timetable of `inst`.
    pub fn base(inst: &Instance) -> Self {
        let trains = inst
            .trains
            .iter()
            .map(|t| {
                Some(
                    (0..t.len())
                        .map(|p| Event {
                            arrival: t.base_arrivals[p],
                            departure: t.base_departures[p],
                            route: t.base_routes[p],
                        })
                        .collect(),
                )
            })
            .collect();
        Schedule { trains }
    }

    pub fn num_trains(&self) -> usize {
        self.trains.len()
    }

    pub fn get(&self, c: TrainId) -> Option<&[Event]> {
        self.trains.get(c.index()).and_then(|e| e.as_deref())
    }

    pub fn set(&mut self, c: TrainId, events: Vec<Event>) {
        if c.index() >= self.trains.len() {
            self.trains.resize(c.index() + 1, None);
        }
        self.trains[c.index()] = Some(events);
    }

    pub fn remove(&mut self, c: TrainId) -> Option<Vec<Event>> {
        self.trains.get_mut(c.index()).and_then(Option::take)
    }

    pub fn is_scheduled(&self, c: TrainId) -> bool {
        self.get(c).is_some()
    }

    pub fn scheduled(&self) -> impl Iterator<Item = (TrainId, &[Event])> + '_ {
        self.trains
            .iter()
            .enumerate()
            .filter_map(|(k, e)| e.as_deref().map(|e| (TrainId::from(k), e)))
    }

    pub fn scheduled_count(&self) -> usize {
        self.trains.iter().filter(|e| e.is_some()).count()
    }

    /// Total accumulated arrival delay against the base timetable.
    pub fn total_delay(&self, inst: &Instance) -> Time {
        self.scheduled()
            .map(|(c, ev)| {
                let base = &inst.train(c).base_arrivals;
                ev.iter()
                    .zip(base)
                    .map(|(e, a0)| e.arrival - a0)
                    .sum::<Time>()
            })
            .sum()
    }

    fn doc(&self) -> ScheduleDoc {
        ScheduleDoc {
            trains: self
                .scheduled()
                .map(|(train, ev)| TrainEntry {
                    train,
                    events: ev.to_vec(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.doc()).expect("schedule serializes");
        s.push('\n');
        s
    }

    /// Parses a schedule for an instance with `num_trains` trains.
    pub fn from_json(text: &str, num_trains: usize) -> Result<Self> {
        let doc: ScheduleDoc = serde_json::from_str(text)?;
        let mut s = Schedule::empty(num_trains);
        for entry in doc.trains {
            if entry.train.index() >= num_trains {
                return Err(Error::Reference(format!(
                    "schedule references unknown train {}",
                    entry.train
                )));
            }
            s.set(entry.train, entry.events);
        }
        Ok(s)
    }
}
