//! Parameter vectors and observation records.

use std::io::{Read, Write};
use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{all_finite, Real};

/// Model parameter θ ∈ R^d, d ≥ 1, all entries finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector<T>(Vec<T>);

impl<T: Real> ParameterVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("parameter vector must have at least one entry"));
        }
        if !all_finite(&values) {
            return Err(Error::domain("parameter vector has a non-finite entry"));
        }
        Ok(Self(values))
    }

    pub fn scalar(value: T) -> Result<Self> {
        Self::new(vec![value])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    /// First entry; the scalar experiments only ever use this.
    pub fn first(&self) -> T {
        self.0[0]
    }

    /// Requires a scalar parameter and returns it.
    pub(crate) fn expect_scalar(&self, what: &str) -> Result<T> {
        if self.0.len() != 1 {
            return Err(Error::config(format!(
                "{what} takes a scalar parameter, got dimension {}",
                self.0.len()
            )));
        }
        Ok(self.0[0])
    }
}

impl<T> Index<usize> for ParameterVector<T> {
    type Output = T;

    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

/// One simulated or measured record.
///
/// `inputs` is present exactly when the generating model is a controlled
/// system. `theta_label` carries the generating parameter for training
/// records.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSeries<T> {
    outputs: Vec<T>,
    inputs: Option<Vec<T>>,
    theta_label: Option<ParameterVector<T>>,
}

impl<T: Real> ObservationSeries<T> {
    pub fn new(outputs: Vec<T>, inputs: Option<Vec<T>>) -> Result<Self> {
        if outputs.is_empty() {
            return Err(Error::InputTooShort { required: 1, actual: 0 });
        }
        if !all_finite(&outputs) {
            return Err(Error::domain("observation record has a non-finite output"));
        }
        if let Some(u) = &inputs {
            if u.len() != outputs.len() {
                return Err(Error::config(format!(
                    "inputs length {} does not match outputs length {}",
                    u.len(),
                    outputs.len()
                )));
            }
            if !all_finite(u) {
                return Err(Error::domain("observation record has a non-finite input"));
            }
        }
        Ok(Self {
            outputs,
            inputs,
            theta_label: None,
        })
    }

    pub fn with_label(mut self, theta: ParameterVector<T>) -> Self {
        self.theta_label = Some(theta);
        self
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn outputs(&self) -> &[T] {
        &self.outputs
    }

    pub fn inputs(&self) -> Option<&[T]> {
        self.inputs.as_deref()
    }

    pub fn theta_label(&self) -> Option<&ParameterVector<T>> {
        self.theta_label.as_ref()
    }

    /// Writes the record as CSV with header `t,y,u`; `u` is blank for
    /// autonomous records. `t` is 1-based.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "y", "u"])?;
        for (i, y) in self.outputs.iter().enumerate() {
            let u = self.inputs.as_ref().map(|u| format_real(u[i])).unwrap_or_default();
            w.write_record([(i + 1).to_string(), format_real(*y), u])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a record written by [`write_csv`](Self::write_csv) (or any
    /// file with the same header). The `u` column must be either blank on
    /// every row or filled on every row.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = r.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::config(format!("CSV header is missing column `{name}`")))
        };
        let (ty, tu) = (col("y")?, col("u")?);
        let mut outputs = Vec::new();
        let mut inputs = Vec::new();
        let mut blank_inputs = 0usize;
        for (line, record) in r.records().enumerate() {
            let record = record?;
            let field = |i: usize| record.get(i).unwrap_or("");
            outputs.push(parse_real::<T>(field(ty), line + 2)?);
            match field(tu) {
                "" => blank_inputs += 1,
                s => inputs.push(parse_real::<T>(s, line + 2)?),
            }
        }
        let inputs = match (blank_inputs, inputs.len()) {
            (_, 0) => None,
            (0, _) => Some(inputs),
            _ => {
                return Err(Error::config(
                    "column `u` must be blank on every row or filled on every row",
                ))
            }
        };
        Self::new(outputs, inputs)
    }
}

fn format_real<T: Real>(x: T) -> String {
    // Display on f32/f64 is the shortest round-trip representation.
    format!("{x}")
}

fn parse_real<T: Real>(s: &str, line: usize) -> Result<T> {
    let v: f64 = s
        .parse()
        .map_err(|_| Error::config(format!("line {line}: cannot parse `{s}` as a number")))?;
    T::from_f64(v).ok_or_else(|| Error::config(format!("line {line}: value out of range")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_vector_validation() {
        assert!(ParameterVector::<f64>::new(vec![]).is_err());
        assert!(ParameterVector::new(vec![1.0, f64::NAN]).is_err());
        let p = ParameterVector::new(vec![1.0, 2.0]).unwrap();
        assert_eq!(p.dim(), 2);
        assert_eq!(p[1], 2.0);
        assert!(p.expect_scalar("x").is_err());
    }

    #[test]
    fn series_validation() {
        assert!(matches!(
            ObservationSeries::<f64>::new(vec![], None),
            Err(Error::InputTooShort { .. })
        ));
        assert!(ObservationSeries::new(vec![1.0, f64::INFINITY], None).is_err());
        assert!(ObservationSeries::new(vec![1.0, 2.0], Some(vec![0.0])).is_err());
    }

    #[test]
    fn csv_round_trip_autonomous() {
        let s = ObservationSeries::new(vec![0.1, -2.5e-17, 3.0], None).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,y,u\n1,0.1,\n"));
        let back = ObservationSeries::<f64>::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn csv_round_trip_controlled() {
        let s = ObservationSeries::new(vec![1.0, 2.0], Some(vec![0.5, -0.25])).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = ObservationSeries::<f64>::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.inputs(), Some(&[0.5, -0.25][..]));
    }

    #[test]
    fn csv_rejects_partial_inputs_and_missing_header() {
        let partial = "t,y,u\n1,1.0,0.5\n2,2.0,\n";
        assert!(ObservationSeries::<f64>::read_csv(partial.as_bytes()).is_err());
        let no_header = "t,value\n1,1.0\n";
        assert!(ObservationSeries::<f64>::read_csv(no_header.as_bytes()).is_err());
    }
}
