//! Disease progression and transmission.

pub mod course;
pub mod curve;
pub mod symptoms;
pub mod testing;
pub mod transmission;

pub use course::{sample_disease_course, DiseaseCourse, DiseaseState, ExposureSource, SimTime, Status};
pub use curve::{Stage, ViralLoadCurve};
pub use symptoms::{Symptom, SymptomSet, SymptomTable};
pub use testing::{TestLab, TestOutcome, TestRequest};
pub use transmission::{infectiousness, transmit, Direction, PartyState, TransmissionKernel};
